//! Spatiotemporal CAR benchmark model.
//!
//! Each active location carries a spatial component `phi` (Leroux CAR over the
//! locations active at that time) and a temporal component `varphi` (AR(1)
//! along the location's own history); observations depend on their sum
//! `psi = phi + varphi` through a Normal or a log-link Poisson law. Locations
//! enter and leave by independent Bernoulli draws.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filter::ObservationFrame;
use crate::graph::{Identifier, RegionalPartition, SpatialLayout, VertexId};
use crate::model::{Configuration, HstmrfModel, Neighbors, VertexContext};
use crate::rng::{Purpose, RngPolicy, StreamRng};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

#[inline]
pub(crate) fn normal_log_pdf(x: f64, mean: f64, var: f64) -> f64 {
    let d = x - mean;
    -0.5 * (LN_2PI + var.ln()) - d * d / (2.0 * var)
}

/// `ln(n!)`: exact summation for small arguments, Stirling series beyond.
pub(crate) fn ln_factorial(n: u64) -> f64 {
    if n < 2 {
        return 0.0;
    }
    if n <= 32 {
        return (2..=n).map(|i| (i as f64).ln()).sum();
    }
    let x = n as f64 + 1.0;
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    (x - 0.5) * x.ln() - x
        + 0.5 * LN_2PI
        + inv * (1.0 / 12.0 - inv2 * (1.0 / 360.0 - inv2 / 1260.0))
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ObsModel {
    Normal,
    Poisson,
}

impl std::str::FromStr for ObsModel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "normal" => Ok(ObsModel::Normal),
            "poisson" => Ok(ObsModel::Poisson),
            other => Err(Error::Config(format!(
                "unknown observation model `{other}`"
            ))),
        }
    }
}

impl fmt::Display for ObsModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ObsModel::Normal => "normal",
            ObsModel::Poisson => "poisson",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CarParams {
    /// Spatial dependence `vartheta` in `[0, 1]`.
    pub rho_spatial: f64,
    /// AR(1) coefficient in `(-1, 1)`.
    pub rho_temporal: f64,
    /// Temporal innovation variance.
    pub sigma2: f64,
    /// Spatial variance per time step; entry `t - 1` belongs to time `t`.
    pub sigma2_tilde: Vec<f64>,
    /// Observation variance of the Normal model.
    pub nu2: f64,
    pub obs_model: ObsModel,
    pub p_enter: f64,
    pub p_stay: f64,
}

impl CarParams {
    /// Draw the benchmark parameters: `vartheta` and the AR coefficient from
    /// `U[0,1)`, `sigma^2 = 0.1`, each `sigma~_t^2` from `U[1,2]`, `nu^2 = 1`.
    pub fn draw(
        horizon: usize,
        obs_model: ObsModel,
        p_enter: f64,
        p_stay: f64,
        rng: &mut StreamRng,
    ) -> Self {
        let rho_spatial = rng.random::<f64>();
        let rho_temporal = rng.random::<f64>();
        let sigma2_tilde = (0..horizon).map(|_| rng.random_range(1.0..=2.0)).collect();
        CarParams {
            rho_spatial,
            rho_temporal,
            sigma2: 0.1,
            sigma2_tilde,
            nu2: 1.0,
            obs_model,
            p_enter,
            p_stay,
        }
    }

    pub fn validate(&self, horizon: usize) -> Result<()> {
        let unit = |x: f64| (0.0..=1.0).contains(&x);
        if !unit(self.rho_spatial) {
            return Err(Error::domain("spatial dependence must lie in [0, 1]"));
        }
        if !(self.rho_temporal.abs() < 1.0) {
            return Err(Error::domain("AR coefficient must lie in (-1, 1)"));
        }
        if !(self.sigma2 > 0.0 && self.nu2 > 0.0) {
            return Err(Error::domain("variances must be positive"));
        }
        if self.sigma2_tilde.len() < horizon || self.sigma2_tilde.iter().any(|s| !(*s > 0.0)) {
            return Err(Error::domain(format!(
                "need {horizon} positive spatial variances, have {}",
                self.sigma2_tilde.len()
            )));
        }
        if !unit(self.p_enter) || !unit(self.p_stay) {
            return Err(Error::domain("enter/stay probabilities must lie in [0, 1]"));
        }
        Ok(())
    }

    /// `sigma~_t^2` for `t >= 1`.
    pub fn sigma2_tilde_at(&self, t: usize) -> f64 {
        self.sigma2_tilde[t.max(1) - 1]
    }

    /// Serialise as `key=value` lines.
    pub fn to_key_values(&self) -> String {
        let tilde: Vec<String> = self.sigma2_tilde.iter().map(|s| format!("{s:?}")).collect();
        format!(
            "rho_spatial={:?}\nrho_temporal={:?}\nsigma2={:?}\nnu2={:?}\nobs_model={}\np_enter={:?}\np_stay={:?}\nsigma2_tilde={}\n",
            self.rho_spatial,
            self.rho_temporal,
            self.sigma2,
            self.nu2,
            self.obs_model,
            self.p_enter,
            self.p_stay,
            tilde.join(",")
        )
    }

    pub fn from_key_values(text: &str) -> Result<Self> {
        let mut map = BTreeMap::new();
        for line in text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
        {
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("expected key=value, got `{line}`")))?;
            map.insert(k.trim().to_string(), v.trim().to_string());
        }
        let get = |k: &str| {
            map.get(k)
                .ok_or_else(|| Error::Config(format!("missing key `{k}`")))
        };
        let num = |k: &str| -> Result<f64> {
            get(k)?
                .parse()
                .map_err(|_| Error::Config(format!("bad number for `{k}`")))
        };
        let sigma2_tilde = get("sigma2_tilde")?
            .split(',')
            .filter(|s| !s.trim().is_empty())
            .map(|s| {
                s.trim()
                    .parse()
                    .map_err(|_| Error::Config(format!("bad variance `{s}`")))
            })
            .collect::<Result<Vec<f64>>>()?;
        Ok(CarParams {
            rho_spatial: num("rho_spatial")?,
            rho_temporal: num("rho_temporal")?,
            sigma2: num("sigma2")?,
            sigma2_tilde,
            nu2: num("nu2")?,
            obs_model: get("obs_model")?.parse()?,
            p_enter: num("p_enter")?,
            p_stay: num("p_stay")?,
        })
    }
}

/// Latent state of one location: spatial and temporal components.
#[derive(Copy, Clone, Debug, PartialEq)]
pub struct CarState {
    pub phi: f64,
    pub varphi: f64,
}

impl CarState {
    #[inline]
    pub fn psi(&self) -> f64 {
        self.phi + self.varphi
    }
}

/// The `T x T` tridiagonal temporal neighbourhood matrix.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub struct TemporalMatrix {
    size: usize,
}

impl TemporalMatrix {
    pub fn new(size: usize) -> Self {
        TemporalMatrix { size }
    }

    pub fn size(&self) -> usize {
        self.size
    }

    /// `d_{tt'}`, 0-based indices.
    pub fn get(&self, t: usize, t2: usize) -> u8 {
        u8::from(t.abs_diff(t2) == 1 && t < self.size && t2 < self.size)
    }

    pub fn row_sum(&self, t: usize) -> usize {
        (0..self.size).map(|s| self.get(t, s) as usize).sum()
    }

    pub fn to_dense(&self) -> Vec<Vec<u8>> {
        (0..self.size)
            .map(|i| (0..self.size).map(|j| self.get(i, j)).collect())
            .collect()
    }
}

/// Full conditional of `varphi_t` given the rest of the series (0-based `t`),
/// in the CAR-in-time form: mean `a sum_t' d_tt' varphi_t' / (a^2 sum d + 1 - a^2)`,
/// variance `sigma^2 / (a^2 sum d + 1 - a^2)`.
pub fn varphi_full_conditional(
    t: usize,
    series: &[f64],
    d: &TemporalMatrix,
    params: &CarParams,
) -> (f64, f64) {
    let a = params.rho_temporal;
    let sum_d = d.row_sum(t) as f64;
    let weighted: f64 = (0..d.size()).map(|s| d.get(t, s) as f64 * series[s]).sum();
    let denom = a * a * sum_d + 1.0 - a * a;
    (a * weighted / denom, params.sigma2 / denom)
}

/// Adjacency masked to the locations active at one time.
#[derive(Clone, Debug, PartialEq)]
pub struct EffectiveAdjacency {
    identifier: Identifier,
    matrix: Vec<bool>,
}

impl EffectiveAdjacency {
    pub fn identifier(&self) -> &Identifier {
        &self.identifier
    }

    pub fn len(&self) -> usize {
        self.identifier.len()
    }

    pub fn is_empty(&self) -> bool {
        self.identifier.is_empty()
    }

    /// Entry for positions `i`, `j` within the identifier.
    pub fn get(&self, i: usize, j: usize) -> bool {
        self.matrix[i * self.len() + j]
    }

    pub fn degree(&self, i: usize) -> usize {
        (0..self.len()).filter(|&j| self.get(i, j)).count()
    }

    pub fn position(&self, v: VertexId) -> Option<usize> {
        self.identifier.as_slice().binary_search(&v).ok()
    }

    pub fn to_dense(&self) -> Vec<Vec<bool>> {
        (0..self.len())
            .map(|i| (0..self.len()).map(|j| self.get(i, j)).collect())
            .collect()
    }
}

/// `w_{ii'}(t) = 1` iff `i` and `i'` share an edge and are both active.
pub fn effective_adjacency(base: &SpatialLayout, k: &Identifier) -> EffectiveAdjacency {
    let n = k.len();
    let ids = k.as_slice();
    let mut matrix = vec![false; n * n];
    for i in 0..n {
        for j in 0..n {
            matrix[i * n + j] = i != j && base.is_adjacent(ids[i], ids[j]);
        }
    }
    EffectiveAdjacency {
        identifier: k.clone(),
        matrix,
    }
}

/// Mean and variance of `phi_t^i` given the other active locations.
///
/// `phi` holds one value per member of `w.identifier()`, in order.
pub fn phi_full_conditional(
    i: VertexId,
    phi: &[f64],
    w: &EffectiveAdjacency,
    params: &CarParams,
    t: usize,
) -> Result<(f64, f64)> {
    let pos = w
        .position(i)
        .ok_or_else(|| Error::domain(format!("vertex {i} is not active at time {t}")))?;
    if phi.len() != w.len() {
        return Err(Error::domain("phi vector does not match the active set"));
    }
    let rho = params.rho_spatial;
    let mut deg = 0.0;
    let mut sum = 0.0;
    for j in 0..w.len() {
        if w.get(pos, j) {
            deg += 1.0;
            sum += phi[j];
        }
    }
    let denom = rho * deg + 1.0 - rho;
    Ok((rho * sum / denom, params.sigma2_tilde_at(t) / denom))
}

/// `Q = [vartheta (D_W - W) + (1 - vartheta) I] / sigma~_t^2`, verified positive definite.
pub fn leroux_precision(
    w: &EffectiveAdjacency,
    params: &CarParams,
    t: usize,
) -> Result<DMatrix<f64>> {
    let n = w.len();
    let rho = params.rho_spatial;
    let s2 = params.sigma2_tilde_at(t);
    let q = DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            (rho * w.degree(i) as f64 + 1.0 - rho) / s2
        } else if w.get(i, j) {
            -rho / s2
        } else {
            0.0
        }
    });
    if n > 0 && q.clone().cholesky().is_none() {
        return Err(Error::Singular(format!(
            "Leroux precision over {n} active locations at t={t} (spatial dependence {rho})"
        )));
    }
    Ok(q)
}

/// A univariate Normal law.
#[derive(Copy, Clone, Debug, PartialEq)]
pub struct NormalLaw {
    pub mean: f64,
    pub var: f64,
}

impl NormalLaw {
    pub fn log_pdf(&self, x: f64) -> f64 {
        normal_log_pdf(x, self.mean, self.var)
    }

    pub fn sample(&self, rng: &mut StreamRng) -> f64 {
        let z: f64 = StandardNormal.sample(rng);
        self.mean + self.var.sqrt() * z
    }
}

/// AR(1) transition of `varphi`; entering locations use the stationary law.
pub fn varphi_step(prev: Option<f64>, params: &CarParams) -> Result<NormalLaw> {
    let a = params.rho_temporal;
    match prev {
        Some(p) => Ok(NormalLaw {
            mean: a * p,
            var: params.sigma2,
        }),
        None if a.abs() < 1.0 => Ok(NormalLaw {
            mean: 0.0,
            var: params.sigma2 / (1.0 - a * a),
        }),
        None => Err(Error::domain(
            "AR coefficient with |a| >= 1 has no stationary law",
        )),
    }
}

fn check_count(y: f64) -> Result<u64> {
    if y < 0.0 || y.fract() != 0.0 || !y.is_finite() {
        return Err(Error::domain(format!(
            "Poisson observation {y} is not a non-negative integer"
        )));
    }
    Ok(y as u64)
}

pub fn log_observation_density(y: f64, psi: f64, params: &CarParams) -> Result<f64> {
    match params.obs_model {
        ObsModel::Normal => Ok(normal_log_pdf(y, psi, params.nu2)),
        ObsModel::Poisson => {
            let n = check_count(y)?;
            Ok(n as f64 * psi - psi.exp() - ln_factorial(n))
        }
    }
}

/// Normal(psi, nu^2) density or Poisson(e^psi) mass at `y`.
pub fn observation_density(y: f64, psi: f64, params: &CarParams) -> Result<f64> {
    log_observation_density(y, psi, params).map(f64::exp)
}

fn log_bernoulli_region(
    region: &[VertexId],
    next: &Identifier,
    prev: &Identifier,
    params: &CarParams,
) -> f64 {
    region
        .iter()
        .map(|&v| {
            let p = if prev.contains(v) {
                params.p_stay
            } else {
                params.p_enter
            };
            if next.contains(v) {
                p.ln()
            } else {
                (1.0 - p).ln()
            }
        })
        .sum()
}

/// Per-vertex Bernoulli enter/stay probability of the region's next identifier.
pub fn identifier_step_density(
    region: &[VertexId],
    next: &Identifier,
    prev: &Identifier,
    params: &CarParams,
) -> f64 {
    log_bernoulli_region(region, next, prev, params).exp()
}

fn sample_bernoulli_region(
    region: &[VertexId],
    prev: &Identifier,
    params: &CarParams,
    rng: &mut StreamRng,
) -> Vec<VertexId> {
    region
        .iter()
        .copied()
        .filter(|&v| {
            let p = if prev.contains(v) {
                params.p_stay
            } else {
                params.p_enter
            };
            rng.random::<f64>() < p
        })
        .collect()
}

/// One simulated time step.
#[derive(Clone, Debug, PartialEq)]
pub struct SimStep {
    pub time: usize,
    pub states: Configuration<CarState>,
    /// Observation per vertex; `None` for inactive vertices.
    pub obs: Vec<Option<f64>>,
}

impl SimStep {
    pub fn identifier(&self) -> &Identifier {
        self.states.identifier()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub initial: Configuration<CarState>,
    pub steps: Vec<SimStep>,
}

/// Draw `phi ~ N(0, Q^{-1})` via the Cholesky factor of `Q`.
fn sample_gmrf(q: &DMatrix<f64>, rng: &mut StreamRng) -> Result<DVector<f64>> {
    let n = q.nrows();
    if n == 0 {
        return Ok(DVector::zeros(0));
    }
    let chol = q
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Singular("precision lost definiteness".into()))?;
    let z = DVector::from_fn(n, |_, _| StandardNormal.sample(rng));
    // Q = L L^T, so L^T phi = z gives Cov(phi) = Q^{-1}
    let lt = chol.l().transpose();
    lt.solve_upper_triangular(&z)
        .ok_or_else(|| Error::Singular("triangular solve failed".into()))
}

/// Forward-simulate the benchmark model for `horizon` steps.
///
/// All locations start active with `varphi_0 ~ U[1,2]` and `phi_0 = 0`.
pub fn simulate_dataset(
    params: &CarParams,
    layout: &SpatialLayout,
    regions: &RegionalPartition,
    horizon: usize,
    seed: u64,
) -> Result<Trajectory> {
    if horizon == 0 {
        return Err(Error::domain("simulation horizon must be at least 1"));
    }
    params.validate(horizon)?;
    let m = layout.len();
    let policy = RngPolicy::new(seed);
    let mut rng = policy.stream(0, 0, 0, Purpose::Simulate);
    let initial = Configuration::from_pairs(
        m,
        (0..m).map(|i| {
            let varphi = rng.random_range(1.0..=2.0);
            (VertexId::from(i), CarState { phi: 0.0, varphi })
        }),
    )?;
    let mut prev = initial.clone();
    let mut steps = Vec::with_capacity(horizon);
    for t in 1..=horizon {
        let mut rng = policy.stream(t, 0, 0, Purpose::Simulate);
        let mut active = Vec::new();
        for region in regions.regions() {
            active.extend(sample_bernoulli_region(
                region,
                prev.identifier(),
                params,
                &mut rng,
            ));
        }
        let k = Identifier::new(active);
        let w = effective_adjacency(layout, &k);
        let q = leroux_precision(&w, params, t).map_err(|e| e.at_time(t))?;
        let phi = sample_gmrf(&q, &mut rng)?;
        let mut pairs = Vec::with_capacity(k.len());
        let mut obs = vec![None; m];
        for (pos, v) in k.iter().enumerate() {
            let ancestor = prev.get(v).map(|s| s.varphi);
            let varphi = varphi_step(ancestor, params)?.sample(&mut rng);
            let state = CarState {
                phi: phi[pos],
                varphi,
            };
            let y = match params.obs_model {
                ObsModel::Normal => {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    state.psi() + params.nu2.sqrt() * z
                }
                ObsModel::Poisson => {
                    let lambda = state.psi().exp();
                    let law = Poisson::new(lambda).map_err(|e| {
                        Error::domain(format!("Poisson rate {lambda} at t={t}: {e}"))
                    })?;
                    law.sample(&mut rng)
                }
            };
            obs[v.index()] = Some(y);
            pairs.push((v, state));
        }
        let states = Configuration::from_pairs(m, pairs)?;
        steps.push(SimStep {
            time: t,
            states: states.clone(),
            obs,
        });
        prev = states;
    }
    Ok(Trajectory { initial, steps })
}

/// Observation frames for the filters; `observed_identifier` supplies `k_t`.
pub fn observation_frames(
    traj: &Trajectory,
    observed_identifier: bool,
) -> Vec<ObservationFrame<f64>> {
    traj.steps
        .iter()
        .map(|s| ObservationFrame {
            identifier: observed_identifier.then(|| s.identifier().clone()),
            values: s.obs.clone(),
        })
        .collect()
}

pub const DATASET_HEADER: &str = "t,vertex,active,phi,varphi,psi,y";

/// Write one CSV row per `(t, vertex)`, starting with the initial state at
/// `t = 0` (no observation); inactive rows leave the value columns empty.
pub fn write_dataset(traj: &Trajectory, path: impl AsRef<Path>) -> Result<()> {
    let mut out = String::new();
    out.push_str(DATASET_HEADER);
    out.push('\n');
    let initial_obs = vec![None; traj.initial.universe()];
    let frames = std::iter::once((0, &traj.initial, &initial_obs))
        .chain(traj.steps.iter().map(|s| (s.time, &s.states, &s.obs)));
    for (t, states, obs) in frames {
        for i in 0..states.universe() {
            let v = VertexId::from(i);
            match states.get(v) {
                Some(s) => {
                    let y = obs[i].map(|y| format!("{y:?}")).unwrap_or_default();
                    out.push_str(&format!(
                        "{t},{i},1,{:?},{:?},{:?},{y}\n",
                        s.phi,
                        s.varphi,
                        s.psi()
                    ));
                }
                None => out.push_str(&format!("{t},{i},0,,,,\n")),
            }
        }
    }
    let mut f = fs::File::create(path)?;
    f.write_all(out.as_bytes())?;
    Ok(())
}

/// Read a dataset written by [`write_dataset`]. Rows at `t = 0` form the
/// initial state; every later active row needs an observation.
pub fn read_dataset(path: impl AsRef<Path>) -> Result<Trajectory> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)?;
    let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    if header.join(",") != DATASET_HEADER {
        return Err(Error::Load {
            path: path.to_path_buf(),
            row: Some(1),
            col: None,
            message: format!("expected header `{DATASET_HEADER}`"),
        });
    }
    let mut rows: BTreeMap<usize, Vec<(usize, Option<(CarState, Option<f64>)>)>> = BTreeMap::new();
    let mut universe = 0;
    for (r, rec) in reader.records().enumerate() {
        let rec = rec?;
        let bad = |col: usize, what: &str| Error::Load {
            path: path.to_path_buf(),
            row: Some(r + 2),
            col: Some(col),
            message: format!("bad {what}"),
        };
        let t: usize = rec[0].parse().map_err(|_| bad(1, "time"))?;
        let v: usize = rec[1].parse().map_err(|_| bad(2, "vertex"))?;
        universe = universe.max(v + 1);
        let entry = match &rec[2] {
            "1" => {
                let phi: f64 = rec[3].parse().map_err(|_| bad(4, "phi"))?;
                let varphi: f64 = rec[4].parse().map_err(|_| bad(5, "varphi"))?;
                let y = if t == 0 && rec[6].is_empty() {
                    None
                } else {
                    Some(rec[6].parse::<f64>().map_err(|_| bad(7, "observation"))?)
                };
                Some((CarState { phi, varphi }, y))
            }
            "0" => None,
            _ => return Err(bad(3, "active flag")),
        };
        rows.entry(t).or_default().push((v, entry));
    }
    let mut initial = Configuration::empty(universe);
    let mut steps = Vec::with_capacity(rows.len());
    for (t, entries) in rows {
        let mut obs = vec![None; universe];
        let mut pairs = Vec::new();
        for (v, e) in entries {
            if let Some((s, y)) = e {
                obs[v] = y;
                pairs.push((VertexId::from(v), s));
            }
        }
        let states = Configuration::from_pairs(universe, pairs)?;
        if t == 0 {
            initial = states;
        } else {
            steps.push(SimStep {
                time: t,
                states,
                obs,
            });
        }
    }
    Ok(Trajectory { initial, steps })
}

/// The CAR benchmark as a filterable model.
///
/// The transition `f_t^v` is the AR(1) (or stationary) density of `varphi`
/// times the normalised single-site factor `N(phi; 0, sigma~_t^2 / (vartheta deg + 1 - vartheta))`;
/// the interaction `f~_t^v` carries half of each pairwise precision term,
/// `exp(-Q_{vv'} phi_v phi_v' / 2)` per active neighbour, so the product over
/// both endpoints reproduces the joint Gaussian factor once.
#[derive(Clone, Debug)]
pub struct CarModel {
    params: CarParams,
    layout: SpatialLayout,
}

/// Build the filterable model for a parameter set and adjacency.
pub fn as_model_spec(
    params: &CarParams,
    layout: &SpatialLayout,
    _regions: &RegionalPartition,
) -> CarModel {
    CarModel {
        params: params.clone(),
        layout: layout.clone(),
    }
}

impl CarModel {
    pub fn params(&self) -> &CarParams {
        &self.params
    }

    fn degree(&self, ctx: &VertexContext<'_>) -> usize {
        ctx.neighborhood
            .iter()
            .filter(|&&w| self.layout.is_adjacent(ctx.vertex, w))
            .count()
    }

    /// Law of `phi_t^v` from the single-site factor alone.
    pub fn phi_proposal(&self, t: usize, degree: usize) -> NormalLaw {
        let rho = self.params.rho_spatial;
        NormalLaw {
            mean: 0.0,
            var: self.params.sigma2_tilde_at(t) / (rho * degree as f64 + 1.0 - rho),
        }
    }

    fn varphi_law(&self, ancestor: Option<&CarState>) -> NormalLaw {
        varphi_step(ancestor.map(|a| a.varphi), &self.params).expect("validated AR coefficient")
    }
}

impl HstmrfModel for CarModel {
    type State = CarState;
    type Obs = f64;

    fn universe(&self) -> usize {
        self.layout.len()
    }

    fn sample_initial(&self, rng: &mut StreamRng) -> Configuration<CarState> {
        let m = self.layout.len();
        Configuration::from_pairs(
            m,
            (0..m).map(|i| {
                (
                    VertexId::from(i),
                    CarState {
                        phi: 0.0,
                        varphi: rng.random_range(1.0..=2.0),
                    },
                )
            }),
        )
        .expect("universe-sized")
    }

    fn log_region_identifier(
        &self,
        _time: usize,
        region: &[VertexId],
        next: &Identifier,
        prev: &Configuration<CarState>,
    ) -> f64 {
        log_bernoulli_region(region, next, prev.identifier(), &self.params)
    }

    fn sample_region_identifier(
        &self,
        _time: usize,
        region: &[VertexId],
        prev: &Configuration<CarState>,
        rng: &mut StreamRng,
    ) -> Vec<VertexId> {
        sample_bernoulli_region(region, prev.identifier(), &self.params, rng)
    }

    fn log_transition(
        &self,
        ctx: &VertexContext<'_>,
        x: &CarState,
        ancestor: Option<&CarState>,
    ) -> f64 {
        self.varphi_law(ancestor).log_pdf(x.varphi)
            + self.phi_proposal(ctx.time, self.degree(ctx)).log_pdf(x.phi)
    }

    fn sample_transition(
        &self,
        ctx: &VertexContext<'_>,
        ancestor: Option<&CarState>,
        rng: &mut StreamRng,
    ) -> CarState {
        let varphi = self.varphi_law(ancestor).sample(rng);
        let phi = self.phi_proposal(ctx.time, self.degree(ctx)).sample(rng);
        CarState { phi, varphi }
    }

    fn log_interaction(
        &self,
        ctx: &VertexContext<'_>,
        x: &CarState,
        neighbors: Neighbors<'_, CarState>,
    ) -> f64 {
        let rho = self.params.rho_spatial;
        if rho == 0.0 || neighbors.is_empty() {
            return 0.0;
        }
        let sum: f64 = neighbors
            .iter()
            .filter(|(w, _)| self.layout.is_adjacent(ctx.vertex, *w))
            .map(|(_, s)| s.phi)
            .sum();
        // -Q_{vv'}/2 = vartheta / (2 sigma~_t^2) for each adjacent active pair
        0.5 * rho / self.params.sigma2_tilde_at(ctx.time) * x.phi * sum
    }

    fn log_observation(&self, _ctx: &VertexContext<'_>, y: &f64, x: &CarState) -> f64 {
        log_observation_density(*y, x.psi(), &self.params).unwrap_or(f64::NEG_INFINITY)
    }

    fn summary(&self, x: &CarState) -> f64 {
        x.psi()
    }
}
