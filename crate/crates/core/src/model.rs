//! The hidden spatiotemporal MRF interface consumed by the filters.
//!
//! A model supplies four density families, all evaluated in log space:
//!
//! * `p_t^R`: regional identifier transition,
//! * `f_t^v`: per-vertex state transition, with the ancestor absent for
//!   entering vertices,
//! * `f~_t^v`: interaction between a vertex and its active neighbourhood,
//! * `g_t^v`: per-vertex observation density.
//!
//! The joint transition of the latent field is `prod_v f_t^v * f~_t^v`, the joint
//! observation density `prod_v g_t^v`, and the identifier transition
//! `prod_R p_t^R`.

use std::fmt::Debug;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Identifier, NeighborhoodTable, RegionalPartition, SpatialLayout, VertexId};
use crate::rng::StreamRng;

/// An identifier together with one state per active vertex.
///
/// States are stored densely over the universe; exactly the identifier's
/// members carry `Some`.
#[derive(Clone, Debug, PartialEq)]
pub struct Configuration<S> {
    identifier: Identifier,
    states: Vec<Option<S>>,
}

impl<S: Clone> Configuration<S> {
    /// Build from `(vertex, state)` pairs over an `universe`-vertex universe.
    pub fn from_pairs(
        universe: usize,
        pairs: impl IntoIterator<Item = (VertexId, S)>,
    ) -> Result<Self> {
        let mut states = vec![None; universe];
        for (v, s) in pairs {
            if v.index() >= universe {
                return Err(Error::domain(format!(
                    "vertex {v} outside universe of {universe}"
                )));
            }
            states[v.index()] = Some(s);
        }
        let identifier = Identifier::new(
            states
                .iter()
                .enumerate()
                .filter(|(_, s)| s.is_some())
                .map(|(i, _)| VertexId::from(i)),
        );
        Ok(Configuration { identifier, states })
    }

    /// An empty configuration (no active vertices).
    pub fn empty(universe: usize) -> Self {
        Configuration {
            identifier: Identifier::empty(),
            states: vec![None; universe],
        }
    }

    pub fn identifier(&self) -> &Identifier {
        &self.identifier
    }

    pub fn universe(&self) -> usize {
        self.states.len()
    }

    #[inline]
    pub fn get(&self, v: VertexId) -> Option<&S> {
        self.states.get(v.index()).and_then(Option::as_ref)
    }

    pub fn states(&self) -> &[Option<S>] {
        &self.states
    }

    /// Active `(vertex, state)` pairs in ascending vertex order.
    pub fn iter(&self) -> impl Iterator<Item = (VertexId, &S)> + '_ {
        self.identifier
            .iter()
            .map(move |v| (v, self.states[v.index()].as_ref().expect("keyed")))
    }

    /// Replace the contents with `states`, which must be keyed by `identifier`.
    pub(crate) fn from_parts(identifier: Identifier, states: Vec<Option<S>>) -> Self {
        debug_assert!(states
            .iter()
            .enumerate()
            .all(|(i, s)| s.is_some() == identifier.contains(VertexId::from(i))));
        Configuration { identifier, states }
    }
}

/// Per-vertex information available to the density evaluators.
#[derive(Copy, Clone, Debug)]
pub struct VertexContext<'a> {
    /// Time index, starting at 1 for the first filtered step.
    pub time: usize,
    pub vertex: VertexId,
    /// `k_t^{v(R)}`: the active members of the region containing `vertex`.
    pub regional: &'a [VertexId],
    /// `N_t(v)`: active vertices within the interaction radius.
    pub neighborhood: &'a [VertexId],
}

/// Neighbour states of one vertex, read from a configuration.
#[derive(Copy, Clone)]
pub struct Neighbors<'a, S> {
    ids: &'a [VertexId],
    states: &'a [Option<S>],
}

impl<'a, S> Neighbors<'a, S> {
    pub fn new(ids: &'a [VertexId], states: &'a [Option<S>]) -> Self {
        Neighbors { ids, states }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (VertexId, &'a S)> + 'a {
        let states = self.states;
        self.ids.iter().map(move |&v| {
            (
                v,
                states[v.index()].as_ref().expect("neighbor must be active"),
            )
        })
    }
}

/// A hidden spatiotemporal MRF of varying dimension.
///
/// Evaluators must be pure; samplers draw only from the stream they are given.
pub trait HstmrfModel: Sync {
    type State: Clone + Send + Sync + Debug;
    type Obs: Send + Sync + Debug;

    /// Number of vertices in the universe.
    fn universe(&self) -> usize;

    /// Draw from the initial law `pi_0`.
    fn sample_initial(&self, rng: &mut StreamRng) -> Configuration<Self::State>;

    /// `log p_t^R(k_t cap R | k_{t-1}, x_{t-1} restricted to R)`.
    fn log_region_identifier(
        &self,
        time: usize,
        region: &[VertexId],
        next: &Identifier,
        prev: &Configuration<Self::State>,
    ) -> f64;

    /// Draw the members of `region` active at `time`.
    fn sample_region_identifier(
        &self,
        time: usize,
        region: &[VertexId],
        prev: &Configuration<Self::State>,
        rng: &mut StreamRng,
    ) -> Vec<VertexId>;

    /// `log f_t^v(x | k_t^{v(R)}, ancestor)`; `ancestor` is `None` for entering vertices.
    fn log_transition(
        &self,
        ctx: &VertexContext<'_>,
        x: &Self::State,
        ancestor: Option<&Self::State>,
    ) -> f64;

    fn sample_transition(
        &self,
        ctx: &VertexContext<'_>,
        ancestor: Option<&Self::State>,
        rng: &mut StreamRng,
    ) -> Self::State;

    /// `log f~_t^v(x, x^{N_t(v)})`.
    fn log_interaction(
        &self,
        ctx: &VertexContext<'_>,
        x: &Self::State,
        neighbors: Neighbors<'_, Self::State>,
    ) -> f64;

    /// `log g_t^v(y | k_t^{v(R)}, x)`.
    fn log_observation(&self, ctx: &VertexContext<'_>, y: &Self::Obs, x: &Self::State) -> f64;

    /// Scalar summary used for filtered posterior means.
    fn summary(&self, x: &Self::State) -> f64;
}

/// Regional identifiers and neighbourhoods for one identifier at one time.
#[derive(Clone, Debug)]
pub struct StepGeometry {
    time: usize,
    neighborhoods: NeighborhoodTable,
    regional: Vec<Vec<VertexId>>,
}

impl StepGeometry {
    pub fn new(
        time: usize,
        k: &Identifier,
        layout: &SpatialLayout,
        regions: &RegionalPartition,
        r: u32,
    ) -> Self {
        let regional = regions
            .regions()
            .iter()
            .map(|reg| k.intersect(reg))
            .collect();
        StepGeometry {
            time,
            neighborhoods: NeighborhoodTable::build(layout, k, r),
            regional,
        }
    }

    pub fn identifier(&self) -> &Identifier {
        self.neighborhoods.identifier()
    }

    pub fn context(&self, v: VertexId, regions: &RegionalPartition) -> VertexContext<'_> {
        VertexContext {
            time: self.time,
            vertex: v,
            regional: &self.regional[regions.region_index(v)],
            neighborhood: self.neighborhoods.get(v),
        }
    }
}

fn check_keyed<S: Clone>(x: &Configuration<S>, k: &Identifier) -> Result<()> {
    if let Some(v) = k.iter().find(|&v| x.get(v).is_none()) {
        return Err(Error::domain(format!(
            "state missing for active vertex {v}"
        )));
    }
    Ok(())
}

/// `log prod_{v in k_t} f_t^v * f~_t^v`.
pub fn log_joint_transition_density<M: HstmrfModel>(
    model: &M,
    time: usize,
    x_t: &Configuration<M::State>,
    x_prev: &Configuration<M::State>,
    layout: &SpatialLayout,
    regions: &RegionalPartition,
    r: u32,
) -> Result<f64> {
    let k = x_t.identifier();
    check_keyed(x_t, k)?;
    let geo = StepGeometry::new(time, k, layout, regions, r);
    Ok(log_cluster_transition(
        model,
        &geo,
        regions,
        k.as_slice(),
        x_t,
        x_prev,
    ))
}

fn log_cluster_transition<M: HstmrfModel>(
    model: &M,
    geo: &StepGeometry,
    regions: &RegionalPartition,
    cluster: &[VertexId],
    x_t: &Configuration<M::State>,
    x_prev: &Configuration<M::State>,
) -> f64 {
    cluster
        .iter()
        .map(|&v| {
            let ctx = geo.context(v, regions);
            let x = x_t.get(v).expect("keyed");
            let ancestor = x_prev.get(v);
            model.log_transition(&ctx, x, ancestor)
                + model.log_interaction(&ctx, x, Neighbors::new(ctx.neighborhood, x_t.states()))
        })
        .sum()
}

pub fn joint_transition_density<M: HstmrfModel>(
    model: &M,
    time: usize,
    x_t: &Configuration<M::State>,
    x_prev: &Configuration<M::State>,
    layout: &SpatialLayout,
    regions: &RegionalPartition,
    r: u32,
) -> Result<f64> {
    log_joint_transition_density(model, time, x_t, x_prev, layout, regions, r).map(f64::exp)
}

/// `log prod_R p_t^R(k_t cap R | k_{t-1}, x_{t-1})`.
pub fn log_identifier_transition_density<M: HstmrfModel>(
    model: &M,
    time: usize,
    k_t: &Identifier,
    x_prev: &Configuration<M::State>,
    regions: &RegionalPartition,
) -> f64 {
    regions
        .regions()
        .iter()
        .map(|region| model.log_region_identifier(time, region, k_t, x_prev))
        .sum()
}

pub fn identifier_transition_density<M: HstmrfModel>(
    model: &M,
    time: usize,
    k_t: &Identifier,
    x_prev: &Configuration<M::State>,
    regions: &RegionalPartition,
) -> f64 {
    log_identifier_transition_density(model, time, k_t, x_prev, regions).exp()
}

/// `log prod_{v in k_t} g_t^v(y^v | k_t^{v(R)}, x^v)`.
pub fn log_joint_observation_density<M: HstmrfModel>(
    model: &M,
    time: usize,
    y_t: &[Option<M::Obs>],
    x_t: &Configuration<M::State>,
    regions: &RegionalPartition,
) -> Result<f64> {
    let k = x_t.identifier();
    let mut total = 0.0;
    for v in k.iter() {
        let y = y_t
            .get(v.index())
            .and_then(Option::as_ref)
            .ok_or_else(|| Error::domain(format!("observation missing for active vertex {v}")))?;
        let regional = k.intersect(regions.region_of(v));
        let ctx = VertexContext {
            time,
            vertex: v,
            regional: &regional,
            neighborhood: &[],
        };
        total += model.log_observation(&ctx, y, x_t.get(v).expect("keyed"));
    }
    Ok(total)
}

pub fn joint_observation_density<M: HstmrfModel>(
    model: &M,
    time: usize,
    y_t: &[Option<M::Obs>],
    x_t: &Configuration<M::State>,
    regions: &RegionalPartition,
) -> Result<f64> {
    log_joint_observation_density(model, time, y_t, x_t, regions).map(f64::exp)
}

/// One cluster's factor of `q_t`: `log prod_{w in B} f_t^w f~_t^w g_t^w`.
#[allow(clippy::too_many_arguments)]
pub fn log_cluster_conditional_density<M: HstmrfModel>(
    model: &M,
    time: usize,
    cluster: &[VertexId],
    x_t: &Configuration<M::State>,
    x_prev: &Configuration<M::State>,
    y_t: &[Option<M::Obs>],
    layout: &SpatialLayout,
    regions: &RegionalPartition,
    r: u32,
) -> Result<f64> {
    let k = x_t.identifier();
    if let Some(v) = cluster.iter().find(|v| !k.contains(**v)) {
        return Err(Error::domain(format!("cluster vertex {v} is not active")));
    }
    check_keyed(x_t, k)?;
    let geo = StepGeometry::new(time, k, layout, regions, r);
    let mut total = log_cluster_transition(model, &geo, regions, cluster, x_t, x_prev);
    for &v in cluster {
        let y = y_t
            .get(v.index())
            .and_then(Option::as_ref)
            .ok_or_else(|| Error::domain(format!("observation missing for active vertex {v}")))?;
        let ctx = geo.context(v, regions);
        total += model.log_observation(&ctx, y, x_t.get(v).expect("keyed"));
    }
    Ok(total)
}

#[allow(clippy::too_many_arguments)]
pub fn cluster_conditional_density<M: HstmrfModel>(
    model: &M,
    time: usize,
    cluster: &[VertexId],
    x_t: &Configuration<M::State>,
    x_prev: &Configuration<M::State>,
    y_t: &[Option<M::Obs>],
    layout: &SpatialLayout,
    regions: &RegionalPartition,
    r: u32,
) -> Result<f64> {
    log_cluster_conditional_density(model, time, cluster, x_t, x_prev, y_t, layout, regions, r)
        .map(f64::exp)
}

/// Two-sided bounds on the four density families.
#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DensityBounds {
    pub eps_d: f64,
    pub eps_u: f64,
    pub epsp_d: f64,
    pub epsp_u: f64,
    pub gamma_d: f64,
    pub gamma_u: f64,
    pub kappa_d: f64,
    pub kappa_u: f64,
}

impl DensityBounds {
    pub fn validate(&self) -> Result<()> {
        let pairs = [
            ("eps", self.eps_d, self.eps_u),
            ("epsp", self.epsp_d, self.epsp_u),
            ("gamma", self.gamma_d, self.gamma_u),
            ("kappa", self.kappa_d, self.kappa_u),
        ];
        for (name, lo, hi) in pairs {
            if !(lo > 0.0 && hi > 0.0 && lo.is_finite() && hi.is_finite()) {
                return Err(Error::domain(format!(
                    "{name} bounds must be positive and finite"
                )));
            }
            if lo > hi {
                return Err(Error::domain(format!(
                    "{name} lower bound exceeds upper bound"
                )));
            }
        }
        Ok(())
    }

    /// Bounds with every lower equal to its upper.
    pub fn flat(eps: f64, epsp: f64, gamma: f64, kappa: f64) -> Self {
        DensityBounds {
            eps_d: eps,
            eps_u: eps,
            epsp_d: epsp,
            epsp_u: epsp,
            gamma_d: gamma,
            gamma_u: gamma,
            kappa_d: kappa,
            kappa_u: kappa,
        }
    }
}

/// A clique and its potential `V_{card(c)}`, evaluated on the clique's states.
pub struct Clique {
    pub vertices: Vec<VertexId>,
    pub potential: Box<dyn Fn(&[f64]) -> f64 + Send + Sync>,
}

impl Debug for Clique {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Clique")
            .field("vertices", &self.vertices)
            .finish_non_exhaustive()
    }
}

/// Energy `U(x) = sum_c V_{card(c)}(x)` over cliques up to a declared order.
#[derive(Debug)]
pub struct GibbsPotentials {
    cliques: Vec<Clique>,
    max_order: usize,
    temperature: f64,
}

impl GibbsPotentials {
    pub fn new(cliques: Vec<Clique>, max_order: usize) -> Result<Self> {
        if let Some(c) = cliques
            .iter()
            .find(|c| c.vertices.is_empty() || c.vertices.len() > max_order)
        {
            return Err(Error::domain(format!(
                "clique {:?} exceeds declared order {max_order}",
                c.vertices
            )));
        }
        Ok(GibbsPotentials {
            cliques,
            max_order,
            temperature: 1.0,
        })
    }

    pub fn with_temperature(mut self, temperature: f64) -> Self {
        self.temperature = temperature;
        self
    }

    pub fn max_order(&self) -> usize {
        self.max_order
    }

    pub fn energy(&self, x: &[f64]) -> f64 {
        let mut buf = Vec::with_capacity(self.max_order);
        self.cliques
            .iter()
            .map(|c| {
                buf.clear();
                buf.extend(c.vertices.iter().map(|v| x[v.index()]));
                (c.potential)(&buf)
            })
            .sum()
    }
}

/// `exp(-U(x) / T)`; the partition function is not computed.
pub fn gibbs_unnormalized_density(potentials: &GibbsPotentials, x: &[f64]) -> f64 {
    (-potentials.energy(x) / potentials.temperature).exp()
}

/// Auto-normal potentials: `V_1(x^v) = (x^v - mu_v)^2 / 2 sigma_v^2` and, for each
/// ordered neighbour pair, `V_2 = -beta_{vv'} (x^v - mu_v)(x^{v'} - mu_{v'}) / 2 sigma_v^2`.
pub fn autonormal_potentials(
    mu: &[f64],
    sigma2: &[f64],
    beta: &[Vec<f64>],
    layout: &SpatialLayout,
) -> GibbsPotentials {
    let mut cliques = Vec::new();
    for v in 0..layout.len() {
        let (m, s2) = (mu[v], sigma2[v]);
        cliques.push(Clique {
            vertices: vec![VertexId::from(v)],
            potential: Box::new(move |x| (x[0] - m).powi(2) / (2.0 * s2)),
        });
        for &w in layout.adjacent(VertexId::from(v)) {
            let (mw, b) = (mu[w.index()], beta[v][w.index()]);
            cliques.push(Clique {
                vertices: vec![VertexId::from(v), w],
                potential: Box::new(move |x| -b * (x[0] - m) * (x[1] - mw) / (2.0 * s2)),
            });
        }
    }
    GibbsPotentials::new(cliques, 2).expect("orders are one and two")
}
