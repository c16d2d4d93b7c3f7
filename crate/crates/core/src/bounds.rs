//! Stability condition, decay rate and error-bound calculators.
//!
//! `eps` bounds the transition `f`, `epsp` the interaction `f~`, `gamma` the
//! observation density `g` and `kappa` the regional identifier density `p`.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::car::{ln_factorial, normal_log_pdf, CarParams, ObsModel};
use crate::error::{Error, Result};
use crate::graph::{
    build_cluster_partition, graph_quantities, inner_boundary, set_distance, ClusterPartition,
    GraphQuantities, Identifier, SpatialLayout, VertexId,
};
use crate::model::DensityBounds;
use crate::oracle::FiniteInstance;

/// Returned by [`beta`] when the density ratios are all exactly one.
pub const BETA_CAP: f64 = 700.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AssumptionReport {
    pub holds: bool,
    /// `(eps_d/eps_u)(epsp_d/epsp_u)(kappa_d/kappa_u)`.
    pub lhs: f64,
    /// `1 - 1/(6 (Delta + Delta^R) |B|)`.
    pub rhs: f64,
    pub margin: f64,
}

/// A bound that may be vacuous.
#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum BoundValue {
    Finite(f64),
    Vacuous,
}

impl BoundValue {
    /// `f64::INFINITY` for a vacuous bound.
    pub fn value(self) -> f64 {
        match self {
            BoundValue::Finite(x) => x,
            BoundValue::Vacuous => f64::INFINITY,
        }
    }

    pub fn is_vacuous(self) -> bool {
        matches!(self, BoundValue::Vacuous)
    }
}

impl fmt::Display for BoundValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BoundValue::Finite(x) => write!(f, "{x}"),
            BoundValue::Vacuous => f.write_str("inf"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundInputs {
    pub bounds: DensityBounds,
    pub quantities: GraphQuantities,
    pub num_particles: usize,
    /// `card(J)`.
    pub card_j: usize,
    /// `min_{s, B'} d(J, boundary of B')`; may be infinite when no cluster has a boundary.
    pub min_boundary_distance: f64,
}

impl BoundInputs {
    fn validate(&self) -> Result<()> {
        self.bounds.validate()?;
        if self.num_particles == 0 || self.card_j == 0 {
            return Err(Error::domain("particle count and card(J) must be positive"));
        }
        if !(self.min_boundary_distance >= 0.0) {
            return Err(Error::domain("boundary distance must be non-negative"));
        }
        Ok(())
    }
}

fn density_ratio(b: &DensityBounds) -> f64 {
    (b.eps_d / b.eps_u) * (b.epsp_d / b.epsp_u) * (b.kappa_d / b.kappa_u)
}

fn degree_sum(q: &GraphQuantities) -> f64 {
    (q.max_degree + q.max_region_size) as f64
}

pub fn check_assumption(b: &DensityBounds, q: &GraphQuantities) -> Result<AssumptionReport> {
    b.validate()?;
    let lhs = density_ratio(b);
    let rhs = 1.0 - 1.0 / (6.0 * degree_sum(q) * q.max_cluster_size as f64);
    Ok(AssumptionReport {
        holds: lhs > rhs,
        lhs,
        rhs,
        margin: lhs - rhs,
    })
}

/// `-(1/(r + r^R)) log(6 (1 - lhs)(Delta + Delta^R))`, capped at [`BETA_CAP`].
pub fn beta(b: &DensityBounds, q: &GraphQuantities) -> Result<f64> {
    let report = check_assumption(b, q)?;
    if !report.holds {
        return Err(Error::domain(format!(
            "stability condition fails: ratio product {} <= {}",
            report.lhs, report.rhs
        )));
    }
    Ok(beta_from_lhs(report.lhs, q))
}

/// The decay rate for a given ratio product, without checking the condition.
pub fn beta_from_lhs(lhs: f64, q: &GraphQuantities) -> f64 {
    let arg = 6.0 * (1.0 - lhs) * degree_sum(q);
    if arg <= 0.0 {
        return BETA_CAP;
    }
    (-arg.ln() / (q.r as f64 + q.max_region_diameter)).min(BETA_CAP)
}

/// Bias of the cluster filter against the exact filter on `J`.
pub fn bias_bound(inputs: &BoundInputs, beta: f64) -> Result<f64> {
    inputs.validate()?;
    if !(beta > 0.0) {
        return Err(Error::domain("beta must be positive"));
    }
    let b = &inputs.bounds;
    let e = (-beta).exp();
    let decay = if inputs.min_boundary_distance.is_infinite() {
        0.0
    } else {
        (-beta * inputs.min_boundary_distance).exp()
    };
    Ok(8.0 * e / (1.0 - e) * (1.0 - b.eps_d / b.eps_u) * inputs.card_j as f64 * decay)
}

/// Monte Carlo error of the blocked filter against the cluster filter on `J`.
pub fn variance_bound(inputs: &BoundInputs, beta: f64) -> Result<BoundValue> {
    inputs.validate()?;
    let b = &inputs.bounds;
    let size = inputs.quantities.max_cluster_size as f64;
    let log_size = size.ln();
    if beta <= log_size {
        return Ok(BoundValue::Vacuous);
    }
    let a = (b.eps_u * b.eps_u * b.kappa_u / (b.eps_d * b.eps_d * b.epsp_d * b.kappa_d)).powf(size);
    let c = ((b.gamma_u / b.gamma_d) * (b.epsp_u / b.epsp_d)).powf(size + size * size);
    let value = 64.0 / (inputs.num_particles as f64).sqrt() * a * c * size * inputs.card_j as f64
        / (1.0 - (-beta + log_size).exp());
    Ok(if value.is_finite() {
        BoundValue::Finite(value)
    } else {
        BoundValue::Vacuous
    })
}

/// Bias plus variance.
pub fn total_error_bound(inputs: &BoundInputs, beta: f64) -> Result<BoundValue> {
    let bias = bias_bound(inputs, beta)?;
    Ok(match variance_bound(inputs, beta)? {
        BoundValue::Finite(v) => BoundValue::Finite(bias + v),
        BoundValue::Vacuous => BoundValue::Vacuous,
    })
}

/// `min_{s, B'} d(J, boundary of B')` over a history of identifiers and partitions.
///
/// Clusters with an empty inner boundary are skipped; the result is infinite
/// when every cluster is boundary-free. `J` inside a boundary gives 0.
pub fn min_boundary_distance(
    layout: &SpatialLayout,
    j: &[VertexId],
    history: &[(Identifier, ClusterPartition)],
    r: u32,
) -> Result<f64> {
    let mut best = f64::INFINITY;
    for (k, partition) in history {
        for cluster in partition.clusters() {
            let boundary = inner_boundary(layout, k, cluster, r)?;
            if boundary.is_empty() {
                continue;
            }
            best = best.min(set_distance(layout, j, &boundary)?);
        }
    }
    Ok(best)
}

fn min_max(xs: impl IntoIterator<Item = f64>) -> (f64, f64) {
    xs.into_iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| {
            (lo.min(x), hi.max(x))
        })
}

/// Density bounds of a finite instance by exhaustive scan.
///
/// `epsp` ranges over the interaction values of every active vertex in every
/// configuration, including the value 1 of a vertex without active
/// neighbours; `kappa` ranges over the per-region identifier probabilities of
/// every (previous, next) activity pattern.
pub fn empirical_bounds_for_instance(inst: &FiniteInstance) -> Result<DensityBounds> {
    inst.validate_shape()?;
    let layout = inst.layout()?;
    let regions = inst.regional_partition()?;
    let m = inst.num_vertices;
    let s = inst.num_states;

    let (eps_d, eps_u) = min_max(
        inst.enter
            .iter()
            .flatten()
            .chain(inst.stay.iter().flatten().flatten())
            .copied(),
    );
    let (gamma_d, gamma_u) = min_max(inst.emission.iter().flatten().flatten().copied());

    let mut epsp = Vec::new();
    for mask in 0u32..(1 << m) {
        let k = Identifier::new((0..m).filter(|v| mask >> v & 1 == 1).map(VertexId::from));
        if k.is_empty() {
            continue;
        }
        let nbs: Vec<Vec<VertexId>> = k
            .iter()
            .map(|v| crate::graph::neighborhood(&layout, &k, v, inst.r))
            .collect::<Result<_>>()?;
        let n = k.len();
        for code in 0..s.pow(n as u32) {
            let mut states = vec![0usize; m];
            let mut c = code;
            for v in k.iter() {
                states[v.index()] = c % s;
                c /= s;
            }
            for (i, v) in k.iter().enumerate() {
                let x = states[v.index()];
                epsp.push(
                    nbs[i]
                        .iter()
                        .map(|w| inst.interaction[x][states[w.index()]])
                        .product(),
                );
            }
        }
    }
    let (epsp_d, epsp_u) = min_max(epsp);

    let mut kappa = Vec::new();
    for region in regions.regions() {
        let size = region.len();
        for prev in 0u32..(1 << size) {
            for next in 0u32..(1 << size) {
                let mut p = 1.0;
                for (i, v) in region.iter().enumerate() {
                    let q = if prev >> i & 1 == 1 {
                        inst.p_stay[v.index()]
                    } else {
                        inst.p_enter[v.index()]
                    };
                    p *= if next >> i & 1 == 1 { q } else { 1.0 - q };
                }
                kappa.push(p);
            }
        }
    }
    let (kappa_d, kappa_u) = min_max(kappa);

    Ok(DensityBounds {
        eps_d,
        eps_u,
        epsp_d,
        epsp_u,
        gamma_d,
        gamma_u,
        kappa_d,
        kappa_u,
    })
}

/// Identifier and cluster history of a finite instance.
///
/// Observed frames contribute their identifier; latent frames contribute the
/// whole universe. Each identifier is split into consecutive clusters of
/// size `cluster_size`.
pub fn instance_history(
    inst: &FiniteInstance,
    cluster_size: usize,
) -> Result<Vec<(Identifier, ClusterPartition)>> {
    if cluster_size == 0 {
        return Err(Error::domain("cluster size must be positive"));
    }
    let universe = Identifier::universe(inst.num_vertices);
    let frames = inst.frames();
    if frames.is_empty() {
        return Err(Error::domain("instance has no observations"));
    }
    Ok(frames
        .iter()
        .map(|f| {
            let k = f.identifier.clone().unwrap_or_else(|| universe.clone());
            let c = build_cluster_partition(&k, cluster_size);
            (k, c)
        })
        .collect())
}

/// Calculator inputs for `J` on a finite instance, from exhaustive density
/// bounds and the instance's identifier history.
pub fn instance_bound_inputs(
    inst: &FiniteInstance,
    cluster_size: usize,
    num_particles: usize,
    j: &[VertexId],
) -> Result<BoundInputs> {
    let layout = inst.layout()?;
    let regions = inst.regional_partition()?;
    let history = instance_history(inst, cluster_size)?;
    let (ids, parts): (Vec<Identifier>, Vec<ClusterPartition>) = history.iter().cloned().unzip();
    Ok(BoundInputs {
        bounds: empirical_bounds_for_instance(inst)?,
        quantities: graph_quantities(&layout, &regions, &ids, &parts, inst.r)?,
        num_particles,
        card_j: j.len(),
        min_boundary_distance: min_boundary_distance(&layout, j, &history, inst.r)?,
    })
}

/// Closed intervals bounding the CAR state and observations.
#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TruncationBox {
    pub phi: (f64, f64),
    pub varphi: (f64, f64),
    pub y: (f64, f64),
}

pub const CAR_CAVEAT: &str =
    "Gaussian densities are not bounded away from zero on unbounded supports; \
these bounds hold only on the supplied truncation box";

fn gaussian_range(diff_lo: f64, diff_hi: f64, var: f64) -> (f64, f64) {
    // density of N(0, var) over differences in [diff_lo, diff_hi]
    let near = if diff_lo <= 0.0 && diff_hi >= 0.0 {
        0.0
    } else {
        diff_lo.abs().min(diff_hi.abs())
    };
    let far = diff_lo.abs().max(diff_hi.abs());
    (
        normal_log_pdf(far, 0.0, var).exp(),
        normal_log_pdf(near, 0.0, var).exp(),
    )
}

fn product_range(a: (f64, f64), b: (f64, f64)) -> (f64, f64) {
    min_max([a.0 * b.0, a.0 * b.1, a.1 * b.0, a.1 * b.1])
}

/// Density bounds of the CAR model restricted to a truncation box.
///
/// `max_degree` caps the number of active neighbours; `region_sizes` lists
/// the region sizes. The caveat [`CAR_CAVEAT`] applies to every result.
pub fn car_truncated_bounds(
    params: &CarParams,
    bx: &TruncationBox,
    max_degree: usize,
    region_sizes: &[usize],
) -> Result<DensityBounds> {
    params.validate(params.sigma2_tilde.len())?;
    for (lo, hi) in [bx.phi, bx.varphi, bx.y] {
        if !(lo <= hi && lo.is_finite() && hi.is_finite()) {
            return Err(Error::domain(
                "truncation intervals must be finite and ordered",
            ));
        }
    }
    let a = params.rho_temporal;
    let rho = params.rho_spatial;
    let (vlo, vhi) = bx.varphi;
    let (plo, phi_hi) = bx.phi;

    // varphi factor: staying (AR step) or entering (stationary)
    let scaled = min_max([a * vlo, a * vhi]);
    let stay = gaussian_range(vlo - scaled.1, vhi - scaled.0, params.sigma2);
    let enter = gaussian_range(vlo, vhi, params.sigma2 / (1.0 - a * a));
    let varphi_range = (stay.0.min(enter.0), stay.1.max(enter.1));
    // phi factor over all times and degrees
    let mut phi_lo = f64::INFINITY;
    let mut phi_up: f64 = 0.0;
    for &s2 in &params.sigma2_tilde {
        for d in 0..=max_degree {
            let (lo, hi) = gaussian_range(plo, phi_hi, s2 / (rho * d as f64 + 1.0 - rho));
            phi_lo = phi_lo.min(lo);
            phi_up = phi_up.max(hi);
        }
    }
    let eps = (varphi_range.0 * phi_lo, varphi_range.1 * phi_up);

    // interaction exp(c phi_v sum phi_w)
    let mut e_lo: f64 = 0.0;
    let mut e_hi: f64 = 0.0;
    for d in 0..=max_degree {
        let (lo, hi) = product_range((plo, phi_hi), (d as f64 * plo, d as f64 * phi_hi));
        e_lo = e_lo.min(lo);
        e_hi = e_hi.max(hi);
    }
    let coef = min_max(params.sigma2_tilde.iter().map(|s2| 0.5 * rho / s2));
    let (x_lo, x_hi) = product_range(coef, (e_lo, e_hi));
    let epsp = (x_lo.exp(), x_hi.exp());

    // observation
    let (psi_lo, psi_hi) = (plo + vlo, phi_hi + vhi);
    let gamma = match params.obs_model {
        ObsModel::Normal => gaussian_range(bx.y.0 - psi_hi, bx.y.1 - psi_lo, params.nu2),
        ObsModel::Poisson => {
            let first = bx.y.0.max(0.0).ceil() as u64;
            let last = bx.y.1.floor().max(0.0) as u64;
            if last < first || last - first > 1_000_000 {
                return Err(Error::domain(
                    "Poisson truncation must hold between 1 and 10^6 integers",
                ));
            }
            let mut lo = f64::INFINITY;
            let mut hi: f64 = 0.0;
            for y in first..=last {
                let lp = |psi: f64| y as f64 * psi - psi.exp() - ln_factorial(y);
                let peak = if y == 0 {
                    psi_lo
                } else {
                    (y as f64).ln().clamp(psi_lo, psi_hi)
                };
                lo = lo.min(lp(psi_lo).exp()).min(lp(psi_hi).exp());
                hi = hi.max(lp(peak).exp());
            }
            (lo, hi)
        }
    };

    // identifier: products of per-vertex Bernoulli probabilities
    let probs = [
        params.p_enter,
        1.0 - params.p_enter,
        params.p_stay,
        1.0 - params.p_stay,
    ];
    let (p_lo, p_hi) = min_max(probs);
    let (k_lo, _) = min_max(region_sizes.iter().map(|&n| p_lo.powi(n as i32)));
    let (_, k_hi) = min_max(region_sizes.iter().map(|&n| p_hi.powi(n as i32)));

    Ok(DensityBounds {
        eps_d: eps.0,
        eps_u: eps.1,
        epsp_d: epsp.0,
        epsp_u: epsp.1,
        gamma_d: gamma.0,
        gamma_u: gamma.1,
        kappa_d: k_lo,
        kappa_u: k_hi,
    })
}

/// Everything the calculators produce for one input set.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundReport {
    pub assumption: AssumptionReport,
    pub beta: Option<f64>,
    pub bias: Option<f64>,
    pub variance: Option<BoundValue>,
    pub total: Option<BoundValue>,
    pub caveat: Option<String>,
}

pub const REPORT_CSV_HEADER: &str = "holds,lhs,rhs,margin,beta,bias,variance,total";

impl BoundReport {
    pub fn compute(inputs: &BoundInputs, caveat: Option<&str>) -> Result<Self> {
        let assumption = check_assumption(&inputs.bounds, &inputs.quantities)?;
        let (beta, bias, variance, total) = if assumption.holds {
            let b = beta_from_lhs(assumption.lhs, &inputs.quantities);
            (
                Some(b),
                Some(bias_bound(inputs, b)?),
                Some(variance_bound(inputs, b)?),
                Some(total_error_bound(inputs, b)?),
            )
        } else {
            (None, None, None, None)
        };
        Ok(BoundReport {
            assumption,
            beta,
            bias,
            variance,
            total,
            caveat: caveat.map(str::to_string),
        })
    }

    /// `key: value` lines.
    pub fn to_text(&self) -> String {
        let opt = |x: Option<String>| x.unwrap_or_else(|| "undefined".into());
        let mut s = format!(
            "holds: {}\nlhs: {}\nrhs: {}\nmargin: {}\nbeta: {}\nbias_bound: {}\nvariance_bound: {}\ntotal_bound: {}\n",
            self.assumption.holds,
            self.assumption.lhs,
            self.assumption.rhs,
            self.assumption.margin,
            opt(self.beta.map(|b| b.to_string())),
            opt(self.bias.map(|b| b.to_string())),
            opt(self.variance.map(|v| v.to_string())),
            opt(self.total.map(|v| v.to_string())),
        );
        if self.variance.is_some_and(BoundValue::is_vacuous) {
            s.push_str("note: variance bound vacuous (beta <= log of the largest cluster size)\n");
        }
        if let Some(c) = &self.caveat {
            s.push_str(&format!("caveat: {c}\n"));
        }
        s
    }

    /// One row matching [`REPORT_CSV_HEADER`]; undefined cells are empty.
    pub fn to_csv_row(&self) -> String {
        let opt = |x: Option<String>| x.unwrap_or_default();
        format!(
            "{},{},{},{},{},{},{},{}",
            self.assumption.holds,
            self.assumption.lhs,
            self.assumption.rhs,
            self.assumption.margin,
            opt(self.beta.map(|b| b.to_string())),
            opt(self.bias.map(|b| b.to_string())),
            opt(self.variance.map(|v| v.to_string())),
            opt(self.total.map(|v| v.to_string())),
        )
    }
}
