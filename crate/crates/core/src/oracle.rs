//! Exact filtering on small finite instances by full enumeration.
//!
//! A distribution over `(identifier, states)` is stored densely: each vertex
//! takes a value in `{inactive, 0, .., S-1}`, encoded as `0` for inactive and
//! `s + 1` for state `s`, and an atom is the mixed-radix number of the
//! per-vertex codes (vertex 0 least significant).
//!
//! # Fixture format
//!
//! Instances are TOML files with these keys:
//!
//! ```toml
//! num_vertices = 3          # at most 5
//! num_states = 2            # at most 4
//! num_obs = 2               # observation alphabet size
//! r = 1                     # interaction radius (hops)
//! adjacency = [[0,1,0],[1,0,1],[0,1,0]]
//! regions = [[0],[1],[2]]   # optional, singletons by default
//! initial_identifier = [0,1,2]
//! initial = [[0.5,0.5],[0.5,0.5],[0.5,0.5]]   # [vertex][state]
//! enter = [[0.5,0.5], ...]                    # [vertex][state]
//! stay = [[[0.8,0.2],[0.3,0.7]], ...]         # [vertex][previous][state]
//! interaction = [[1.2,0.8],[0.8,1.2]]         # [state][neighbour state]
//! emission = [[[0.7,0.3],[0.4,0.6]], ...]     # [vertex][state][symbol]
//! p_enter = [0.5,0.5,0.5]                     # per vertex
//! p_stay = [0.9,0.9,0.9]                      # per vertex
//!
//! [[observations]]          # one table per time step, at most 4
//! identifier = [0,1]        # omit in latent-identifier mode
//! values = [1,0,-1]         # per vertex; -1 marks a missing value
//! ```
//!
//! The transition of vertex `v` is `stay[v][a]` when its ancestor holds `a`
//! and `enter[v]` otherwise; the interaction is
//! `prod_{w in N(v)} interaction[x_v][x_w]`; the identifier evolves by
//! independent Bernoulli draws with `p_stay` or `p_enter`.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filter::ObservationFrame;
use crate::graph::{
    build_cluster_partition, neighborhood, ClusterPartition, Identifier, RegionalPartition,
    SpatialLayout, VertexId,
};
use crate::model::{Configuration, HstmrfModel, Neighbors, VertexContext};
use crate::rng::StreamRng;

pub const MAX_VERTICES: usize = 5;
pub const MAX_STATES: usize = 4;
pub const MAX_HORIZON: usize = 4;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub identifier: Option<Vec<u32>>,
    pub values: Vec<i64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FiniteInstance {
    pub num_vertices: usize,
    pub num_states: usize,
    pub num_obs: usize,
    #[serde(default = "one")]
    pub r: u32,
    pub adjacency: Vec<Vec<u8>>,
    #[serde(default)]
    pub regions: Option<Vec<Vec<u32>>>,
    pub initial_identifier: Vec<u32>,
    pub initial: Vec<Vec<f64>>,
    pub enter: Vec<Vec<f64>>,
    pub stay: Vec<Vec<Vec<f64>>>,
    pub interaction: Vec<Vec<f64>>,
    pub emission: Vec<Vec<Vec<f64>>>,
    pub p_enter: Vec<f64>,
    pub p_stay: Vec<f64>,
    #[serde(default)]
    pub observations: Vec<FrameSpec>,
}

fn one() -> u32 {
    1
}

fn shape(ok: bool, what: &str) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::domain(format!(
            "instance table `{what}` has the wrong shape"
        )))
    }
}

fn positive(xs: impl IntoIterator<Item = f64>, what: &str) -> Result<()> {
    if xs.into_iter().all(|x| x > 0.0 && x.is_finite()) {
        Ok(())
    } else {
        Err(Error::domain(format!(
            "instance table `{what}` must be strictly positive"
        )))
    }
}

fn stochastic(row: &[f64], what: &str) -> Result<()> {
    let s: f64 = row.iter().sum();
    if (s - 1.0).abs() > 1e-9 {
        return Err(Error::domain(format!(
            "rows of `{what}` must sum to 1 (got {s})"
        )));
    }
    Ok(())
}

impl FiniteInstance {
    /// Check sizes, caps, stochasticity and strict positivity.
    pub fn validate(&self) -> Result<()> {
        self.validate_shape()?;
        positive(self.initial.iter().flatten().copied(), "initial")?;
        positive(self.enter.iter().flatten().copied(), "enter")?;
        positive(self.stay.iter().flatten().flatten().copied(), "stay")?;
        positive(self.interaction.iter().flatten().copied(), "interaction")?;
        positive(
            self.emission.iter().flatten().flatten().copied(),
            "emission",
        )?;
        let open = |p: &f64| *p > 0.0 && *p < 1.0;
        if !self.p_enter.iter().all(open) || !self.p_stay.iter().all(open) {
            return Err(Error::domain(
                "enter/stay probabilities must lie strictly inside (0, 1)",
            ));
        }
        Ok(())
    }

    /// Size and cap checks only; zero entries are allowed.
    pub fn validate_shape(&self) -> Result<()> {
        let (m, s, o) = (self.num_vertices, self.num_states, self.num_obs);
        if m == 0 || m > MAX_VERTICES || s == 0 || s > MAX_STATES || o == 0 {
            return Err(Error::domain(format!(
                "instance sizes out of range: {m} vertices (max {MAX_VERTICES}), {s} states (max {MAX_STATES}), {o} symbols"
            )));
        }
        if self.observations.len() > MAX_HORIZON {
            return Err(Error::domain(format!(
                "horizon {} exceeds {MAX_HORIZON}",
                self.observations.len()
            )));
        }
        shape(
            self.adjacency.len() == m && self.adjacency.iter().all(|r| r.len() == m),
            "adjacency",
        )?;
        shape(
            self.initial.len() == m && self.initial.iter().all(|r| r.len() == s),
            "initial",
        )?;
        shape(
            self.enter.len() == m && self.enter.iter().all(|r| r.len() == s),
            "enter",
        )?;
        shape(
            self.stay.len() == m
                && self
                    .stay
                    .iter()
                    .all(|a| a.len() == s && a.iter().all(|r| r.len() == s)),
            "stay",
        )?;
        shape(
            self.interaction.len() == s && self.interaction.iter().all(|r| r.len() == s),
            "interaction",
        )?;
        shape(
            self.emission.len() == m
                && self
                    .emission
                    .iter()
                    .all(|a| a.len() == s && a.iter().all(|r| r.len() == o)),
            "emission",
        )?;
        shape(
            self.p_enter.len() == m && self.p_stay.len() == m,
            "p_enter/p_stay",
        )?;
        if self.initial_identifier.iter().any(|&v| v as usize >= m) {
            return Err(Error::domain(
                "initial identifier names a vertex outside the universe",
            ));
        }
        for row in self
            .initial
            .iter()
            .chain(&self.enter)
            .chain(self.stay.iter().flatten())
        {
            stochastic(row, "initial/enter/stay")?;
        }
        for row in self.emission.iter().flatten() {
            stochastic(row, "emission")?;
        }
        for (t, f) in self.observations.iter().enumerate() {
            shape(f.values.len() == m, "observations.values")?;
            if f.values.iter().any(|&y| y < -1 || y >= o as i64) {
                return Err(Error::domain(format!(
                    "observation symbol out of range at step {}",
                    t + 1
                )));
            }
            if let Some(k) = &f.identifier {
                if k.iter().any(|&v| v as usize >= m) {
                    return Err(Error::domain(format!(
                        "observed identifier out of range at step {}",
                        t + 1
                    )));
                }
            }
        }
        self.layout()?;
        self.regional_partition()?;
        Ok(())
    }

    pub fn layout(&self) -> Result<SpatialLayout> {
        let adj: Vec<Vec<bool>> = self
            .adjacency
            .iter()
            .map(|r| r.iter().map(|&x| x != 0).collect())
            .collect();
        SpatialLayout::from_adjacency(&adj)
    }

    pub fn regional_partition(&self) -> Result<RegionalPartition> {
        match &self.regions {
            None => Ok(RegionalPartition::singletons(self.num_vertices)),
            Some(r) => RegionalPartition::new(
                r.iter()
                    .map(|reg| reg.iter().map(|&v| VertexId(v)).collect())
                    .collect(),
                self.num_vertices,
            ),
        }
    }

    /// Observation frames in the filter's format.
    pub fn frames(&self) -> Vec<ObservationFrame<usize>> {
        self.observations
            .iter()
            .map(|f| ObservationFrame {
                identifier: f.identifier.as_ref().map(|k| Identifier::from_indices(k)),
                values: f
                    .values
                    .iter()
                    .map(|&y| (y >= 0).then_some(y as usize))
                    .collect(),
            })
            .collect()
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let inst: FiniteInstance =
            toml::from_str(text).map_err(|e| Error::Config(format!("instance: {e}")))?;
        inst.validate()?;
        Ok(inst)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(format!("instance: {e}")))
    }

    fn base(&self) -> usize {
        self.num_states + 1
    }

    /// `K_v(a -> b)` on extended codes.
    fn kernel(&self, v: usize, a: usize, b: usize) -> f64 {
        match (a, b) {
            (0, 0) => 1.0 - self.p_enter[v],
            (0, b) => self.p_enter[v] * self.enter[v][b - 1],
            (_, 0) => 1.0 - self.p_stay[v],
            (a, b) => self.p_stay[v] * self.stay[v][a - 1][b - 1],
        }
    }
}

/// Load and validate a fixture.
pub fn load_instance(path: impl AsRef<Path>) -> Result<FiniteInstance> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)?;
    let inst: FiniteInstance = toml::from_str(&text).map_err(|e| Error::Load {
        path: path.to_path_buf(),
        row: e.span().map(|s| text[..s.start].lines().count().max(1)),
        col: None,
        message: e.message().to_string(),
    })?;
    inst.validate()?;
    Ok(inst)
}

/// A law over extended configurations of a finite instance.
#[derive(Clone, Debug, PartialEq)]
pub struct ExactDistribution {
    num_vertices: usize,
    base: usize,
    probs: Vec<f64>,
}

impl ExactDistribution {
    pub fn new(num_vertices: usize, num_states: usize, probs: Vec<f64>) -> Result<Self> {
        let base = num_states + 1;
        if probs.len() != base.pow(num_vertices as u32) {
            return Err(Error::domain("probability vector has the wrong length"));
        }
        Ok(ExactDistribution {
            num_vertices,
            base,
            probs,
        })
    }

    /// The initial law `pi_0`: fixed identifier, independent per-vertex states.
    pub fn initial(inst: &FiniteInstance) -> Self {
        let m = inst.num_vertices;
        let base = inst.base();
        let k = Identifier::from_indices(&inst.initial_identifier);
        let mut probs = vec![0.0; base.pow(m as u32)];
        for (idx, p) in probs.iter_mut().enumerate() {
            let codes = decode(idx, base, m);
            let mut w = 1.0;
            for (v, &c) in codes.iter().enumerate() {
                let active = k.contains(VertexId::from(v));
                w *= match (active, c) {
                    (false, 0) => 1.0,
                    (true, c) if c > 0 => inst.initial[v][c - 1],
                    _ => 0.0,
                };
            }
            *p = w;
        }
        ExactDistribution {
            num_vertices: m,
            base,
            probs,
        }
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn num_vertices(&self) -> usize {
        self.num_vertices
    }

    pub fn total(&self) -> f64 {
        self.probs.iter().sum()
    }

    /// Atoms with positive mass, as `(identifier, per-vertex state)` pairs.
    pub fn support(&self) -> Vec<(Configuration<usize>, f64)> {
        self.probs
            .iter()
            .enumerate()
            .filter(|(_, p)| **p > 0.0)
            .map(|(idx, &p)| (self.configuration(idx), p))
            .collect()
    }

    fn configuration(&self, idx: usize) -> Configuration<usize> {
        let codes = decode(idx, self.base, self.num_vertices);
        Configuration::from_pairs(
            self.num_vertices,
            codes
                .iter()
                .enumerate()
                .filter(|(_, c)| **c > 0)
                .map(|(v, c)| (VertexId::from(v), c - 1)),
        )
        .expect("in universe")
    }

    /// Probability of one configuration.
    pub fn prob(&self, x: &Configuration<usize>) -> f64 {
        let idx = (0..self.num_vertices).rev().fold(0, |acc, v| {
            acc * self.base + x.get(VertexId::from(v)).map_or(0, |s| s + 1)
        });
        self.probs[idx]
    }

    /// Law of `(x^v)_{v in J}`, `None` marking an inactive vertex.
    pub fn marginal(&self, j: &[VertexId]) -> BTreeMap<Vec<Option<usize>>, f64> {
        let mut out = BTreeMap::new();
        for (idx, &p) in self.probs.iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            let codes = decode(idx, self.base, self.num_vertices);
            let key: Vec<Option<usize>> =
                j.iter().map(|v| codes[v.index()].checked_sub(1)).collect();
            *out.entry(key).or_insert(0.0) += p;
        }
        out
    }

    /// The identifiers carrying positive mass, united.
    pub fn support_union(&self) -> Identifier {
        let mut active = vec![false; self.num_vertices];
        for (idx, &p) in self.probs.iter().enumerate() {
            if p > 0.0 {
                for (v, c) in decode(idx, self.base, self.num_vertices)
                    .into_iter()
                    .enumerate()
                {
                    active[v] |= c > 0;
                }
            }
        }
        Identifier::new(
            (0..self.num_vertices)
                .filter(|&v| active[v])
                .map(VertexId::from),
        )
    }

    fn normalised(mut self) -> Result<(Self, f64)> {
        let z = self.total();
        if !(z > 0.0 && z.is_finite()) {
            return Err(Error::domain(format!("normaliser {z} is not positive")));
        }
        for p in &mut self.probs {
            *p /= z;
        }
        Ok((self, z))
    }
}

fn decode(mut idx: usize, base: usize, m: usize) -> Vec<usize> {
    let mut out = Vec::with_capacity(m);
    for _ in 0..m {
        out.push(idx % base);
        idx /= base;
    }
    out
}

/// Prediction `P`: push `rho` through the identifier and state kernels.
pub fn predict(rho: &ExactDistribution, inst: &FiniteInstance) -> ExactDistribution {
    let base = rho.base;
    let mut cur = rho.probs.clone();
    let mut stride = 1;
    for v in 0..rho.num_vertices {
        let mut next = vec![0.0; cur.len()];
        for (idx, &p) in cur.iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            let a = (idx / stride) % base;
            let rest = idx - a * stride;
            for b in 0..base {
                next[rest + b * stride] += p * inst.kernel(v, a, b);
            }
        }
        cur = next;
        stride *= base;
    }
    ExactDistribution {
        num_vertices: rho.num_vertices,
        base,
        probs: cur,
    }
}

/// Clustering operator `B`: the product of the marginals over `groups`.
///
/// Vertices outside every group are kept jointly as one extra group.
pub fn cluster_operator(rho: &ExactDistribution, groups: &[Vec<VertexId>]) -> ExactDistribution {
    let m = rho.num_vertices;
    let base = rho.base;
    let mut groups: Vec<Vec<usize>> = groups
        .iter()
        .map(|g| g.iter().map(|v| v.index()).collect())
        .collect();
    let covered: Vec<bool> = (0..m)
        .map(|v| groups.iter().any(|g| g.contains(&v)))
        .collect();
    let rest: Vec<usize> = (0..m).filter(|&v| !covered[v]).collect();
    if !rest.is_empty() {
        groups.push(rest);
    }
    let group_key =
        |codes: &[usize], g: &[usize]| g.iter().fold(0, |acc, &v| acc * base + codes[v]);
    let marginals: Vec<HashMap<usize, f64>> = groups
        .iter()
        .map(|g| {
            let mut map = HashMap::new();
            for (idx, &p) in rho.probs.iter().enumerate() {
                if p != 0.0 {
                    *map.entry(group_key(&decode(idx, base, m), g))
                        .or_insert(0.0) += p;
                }
            }
            map
        })
        .collect();
    let probs = (0..rho.probs.len())
        .map(|idx| {
            let codes = decode(idx, base, m);
            groups
                .iter()
                .zip(&marginals)
                .map(|(g, marg)| marg.get(&group_key(&codes, g)).copied().unwrap_or(0.0))
                .product()
        })
        .collect();
    ExactDistribution {
        num_vertices: m,
        base,
        probs,
    }
}

/// `prod_{v active} g(y^v | x^v) * f~(x^v, x^{N(v)})` for every atom.
fn correction_weights(
    inst: &FiniteInstance,
    layout: &SpatialLayout,
    frame: &ObservationFrame<usize>,
    len: usize,
) -> Vec<f64> {
    let m = inst.num_vertices;
    let base = inst.base();
    let mut nb_cache: HashMap<Vec<bool>, Vec<Vec<VertexId>>> = HashMap::new();
    (0..len)
        .map(|idx| {
            let codes = decode(idx, base, m);
            let mask: Vec<bool> = codes.iter().map(|&c| c > 0).collect();
            let nbs = nb_cache.entry(mask.clone()).or_insert_with(|| {
                let k = Identifier::new((0..m).filter(|&v| mask[v]).map(VertexId::from));
                (0..m)
                    .map(|v| {
                        if mask[v] {
                            neighborhood(layout, &k, VertexId::from(v), inst.r).expect("active")
                        } else {
                            vec![]
                        }
                    })
                    .collect()
            });
            let mut w = 1.0;
            for v in (0..m).filter(|&v| mask[v]) {
                let x = codes[v] - 1;
                if let Some(Some(y)) = frame.values.get(v) {
                    w *= inst.emission[v][x][*y];
                }
                for n in &nbs[v] {
                    w *= inst.interaction[x][codes[n.index()] - 1];
                }
            }
            w
        })
        .collect()
}

/// One exact step with its normalising constants.
#[derive(Clone, Debug, PartialEq)]
pub struct ExactStep {
    pub distribution: ExactDistribution,
    /// `log` of the correction normaliser; in observed-identifier mode the
    /// prediction is first conditioned on the observed identifier.
    pub log_normalizer: f64,
    /// `log P(k_t = k_obs | past)` in observed-identifier mode, 0 otherwise.
    pub log_identifier: f64,
}

fn condition_on_identifier(
    pred: ExactDistribution,
    k: &Identifier,
) -> Result<(ExactDistribution, f64)> {
    let m = pred.num_vertices;
    let base = pred.base;
    let mut probs = pred.probs;
    for (idx, p) in probs.iter_mut().enumerate() {
        let codes = decode(idx, base, m);
        if (0..m).any(|v| (codes[v] > 0) != k.contains(VertexId::from(v))) {
            *p = 0.0;
        }
    }
    let (d, z) = ExactDistribution {
        num_vertices: m,
        base,
        probs,
    }
    .normalised()
    .map_err(|_| Error::domain("observed identifier has zero predictive probability"))?;
    Ok((d, z.ln()))
}

fn exact_step(
    prev: &ExactDistribution,
    frame: &ObservationFrame<usize>,
    inst: &FiniteInstance,
    cluster_size: Option<usize>,
) -> Result<ExactStep> {
    let layout = inst.layout()?;
    let mut pred = predict(prev, inst);
    let mut log_identifier = 0.0;
    if let Some(k) = &frame.identifier {
        let (d, l) = condition_on_identifier(pred, k)?;
        pred = d;
        log_identifier = l;
    }
    if let Some(c) = cluster_size {
        let partition = build_cluster_partition(&pred.support_union(), c);
        pred = cluster_operator(&pred, partition.clusters());
    }
    let w = correction_weights(inst, &layout, frame, pred.probs.len());
    for (p, w) in pred.probs.iter_mut().zip(&w) {
        *p *= w;
    }
    let (distribution, z) = pred.normalised()?;
    Ok(ExactStep {
        distribution,
        log_normalizer: z.ln(),
        log_identifier,
    })
}

/// `F = C P`.
pub fn exact_filter_step(
    prev: &ExactDistribution,
    frame: &ObservationFrame<usize>,
    inst: &FiniteInstance,
) -> Result<ExactStep> {
    exact_step(prev, frame, inst, None)
}

/// `F~ = C B P`, clusters of size `cluster_size` over the predicted identifiers.
pub fn exact_cluster_filter_step(
    prev: &ExactDistribution,
    frame: &ObservationFrame<usize>,
    inst: &FiniteInstance,
    cluster_size: usize,
) -> Result<ExactStep> {
    exact_step(prev, frame, inst, Some(cluster_size))
}

/// Run either recursion over the instance's observations.
pub fn run_exact(inst: &FiniteInstance, cluster_size: Option<usize>) -> Result<Vec<ExactStep>> {
    let mut cur = ExactDistribution::initial(inst);
    let mut out = Vec::new();
    for (t, frame) in inst.frames().iter().enumerate() {
        let s = exact_step(&cur, frame, inst, cluster_size).map_err(|e| e.at_time(t + 1))?;
        cur = s.distribution.clone();
        out.push(s);
    }
    Ok(out)
}

/// `sum_t log` of the correction normalisers along the exact recursion.
pub fn exact_marginal_loglik(inst: &FiniteInstance) -> Result<f64> {
    Ok(run_exact(inst, None)?
        .iter()
        .map(|s| s.log_normalizer)
        .sum())
}

/// `sup_{|h| <= 1} |rho(h) - rho'(h)|` over functions of `x^J`; lies in `[0, 2]`.
pub fn local_total_variation(a: &ExactDistribution, b: &ExactDistribution, j: &[VertexId]) -> f64 {
    law_distance(&a.marginal(j), &b.marginal(j))
}

/// L1 distance between two finitely supported laws.
pub fn law_distance<K: Ord>(a: &BTreeMap<K, f64>, b: &BTreeMap<K, f64>) -> f64 {
    let mut total = 0.0;
    for (k, p) in a {
        total += (p - b.get(k).copied().unwrap_or(0.0)).abs();
    }
    for (k, q) in b {
        if !a.contains_key(k) {
            total += q.abs();
        }
    }
    total
}

/// A finite instance as a filterable model.
#[derive(Clone, Debug)]
pub struct FiniteModel {
    inst: FiniteInstance,
}

impl FiniteModel {
    pub fn new(inst: FiniteInstance) -> Result<Self> {
        inst.validate_shape()?;
        Ok(FiniteModel { inst })
    }

    pub fn instance(&self) -> &FiniteInstance {
        &self.inst
    }
}

fn draw(row: &[f64], rng: &mut StreamRng) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, p) in row.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    row.len() - 1
}

impl HstmrfModel for FiniteModel {
    type State = usize;
    type Obs = usize;

    fn universe(&self) -> usize {
        self.inst.num_vertices
    }

    fn sample_initial(&self, rng: &mut StreamRng) -> Configuration<usize> {
        let k = Identifier::from_indices(&self.inst.initial_identifier);
        Configuration::from_pairs(
            self.inst.num_vertices,
            k.iter()
                .map(|v| (v, draw(&self.inst.initial[v.index()], rng)))
                .collect::<Vec<_>>(),
        )
        .expect("validated")
    }

    fn log_region_identifier(
        &self,
        _time: usize,
        region: &[VertexId],
        next: &Identifier,
        prev: &Configuration<usize>,
    ) -> f64 {
        region
            .iter()
            .map(|&v| {
                let p = if prev.get(v).is_some() {
                    self.inst.p_stay[v.index()]
                } else {
                    self.inst.p_enter[v.index()]
                };
                if next.contains(v) {
                    p.ln()
                } else {
                    (1.0 - p).ln()
                }
            })
            .sum()
    }

    fn sample_region_identifier(
        &self,
        _time: usize,
        region: &[VertexId],
        prev: &Configuration<usize>,
        rng: &mut StreamRng,
    ) -> Vec<VertexId> {
        region
            .iter()
            .copied()
            .filter(|&v| {
                let p = if prev.get(v).is_some() {
                    self.inst.p_stay[v.index()]
                } else {
                    self.inst.p_enter[v.index()]
                };
                rng.random::<f64>() < p
            })
            .collect()
    }

    fn log_transition(&self, ctx: &VertexContext<'_>, x: &usize, ancestor: Option<&usize>) -> f64 {
        let v = ctx.vertex.index();
        match ancestor {
            Some(&a) => self.inst.stay[v][a][*x].ln(),
            None => self.inst.enter[v][*x].ln(),
        }
    }

    fn sample_transition(
        &self,
        ctx: &VertexContext<'_>,
        ancestor: Option<&usize>,
        rng: &mut StreamRng,
    ) -> usize {
        let v = ctx.vertex.index();
        match ancestor {
            Some(&a) => draw(&self.inst.stay[v][a], rng),
            None => draw(&self.inst.enter[v], rng),
        }
    }

    fn log_interaction(
        &self,
        _ctx: &VertexContext<'_>,
        x: &usize,
        neighbors: Neighbors<'_, usize>,
    ) -> f64 {
        neighbors
            .iter()
            .map(|(_, w)| self.inst.interaction[*x][*w].ln())
            .sum()
    }

    fn log_observation(&self, ctx: &VertexContext<'_>, y: &usize, x: &usize) -> f64 {
        self.inst.emission[ctx.vertex.index()][*x][*y].ln()
    }

    fn summary(&self, x: &usize) -> f64 {
        *x as f64
    }
}

/// The cluster partition the exact cluster filter applies to `rho`.
pub fn oracle_partition(rho: &ExactDistribution, cluster_size: usize) -> ClusterPartition {
    build_cluster_partition(&rho.support_union(), cluster_size)
}
