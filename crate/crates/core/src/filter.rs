//! Blocked (SPF) and joint (PF) particle filters for varying-dimension fields.
//!
//! Both filters share resampling, identifier sampling and propagation; they
//! differ only in how raw weights are grouped. The SPF keeps one normalised
//! weight vector per cluster and resamples each cluster independently, the PF
//! multiplies cluster weights into a joint weight and resamples whole
//! particles.

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{
    build_cluster_partition, ClusterPartition, Identifier, RegionalPartition, SpatialLayout,
    VertexId,
};
use crate::model::{Configuration, HstmrfModel, Neighbors, StepGeometry};
use crate::rng::{Purpose, RngPolicy};

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Spf,
    Pf,
}

/// Which log-likelihood estimator to report.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LoglikMethod {
    Spf,
    Pf,
}

macro_rules! two_way_str {
    ($t:ident) => {
        impl std::str::FromStr for $t {
            type Err = Error;

            fn from_str(s: &str) -> Result<Self> {
                match s.trim().to_ascii_lowercase().as_str() {
                    "spf" => Ok($t::Spf),
                    "pf" => Ok($t::Pf),
                    other => Err(Error::Config(format!(
                        "expected `spf` or `pf`, got `{other}`"
                    ))),
                }
            }
        }

        impl std::fmt::Display for $t {
            fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
                f.write_str(match self {
                    $t::Spf => "spf",
                    $t::Pf => "pf",
                })
            }
        }
    };
}

two_way_str!(Algorithm);
two_way_str!(LoglikMethod);

#[derive(Copy, Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Resampling {
    #[default]
    Multinomial,
    Systematic,
}

/// Observations for one time step.
#[derive(Clone, Debug, PartialEq)]
pub struct ObservationFrame<O> {
    /// `Some(k_t)` in observed-identifier mode, `None` when identifiers are latent.
    pub identifier: Option<Identifier>,
    /// One entry per universe vertex; missing entries carry no information.
    pub values: Vec<Option<O>>,
}

/// Weighted particles in product form.
///
/// `weights[j]` holds the normalised weights of block `j` of `blocks`; a
/// particle's states on block `j` are paired with `weights[j]`. The SPF uses
/// its cluster partition as blocks, the PF a single block.
#[derive(Clone, Debug, PartialEq)]
pub struct ParticleEnsemble<S> {
    particles: Vec<Configuration<S>>,
    weights: Vec<Vec<f64>>,
    blocks: ClusterPartition,
    time: usize,
}

impl<S: Clone> ParticleEnsemble<S> {
    /// Equally weighted particles, blocks taken from `blocks`.
    pub fn uniform(
        particles: Vec<Configuration<S>>,
        blocks: ClusterPartition,
        time: usize,
    ) -> Result<Self> {
        let n = particles.len();
        let weights = vec![vec![1.0 / n as f64; n]; blocks.len()];
        Self::new(particles, weights, blocks, time)
    }

    pub fn new(
        particles: Vec<Configuration<S>>,
        weights: Vec<Vec<f64>>,
        blocks: ClusterPartition,
        time: usize,
    ) -> Result<Self> {
        let n = particles.len();
        if n == 0 {
            return Err(Error::domain("an ensemble needs at least one particle"));
        }
        let m = particles[0].universe();
        if particles.iter().any(|p| p.universe() != m) {
            return Err(Error::domain("particles disagree on the universe size"));
        }
        if weights.len() != blocks.len() {
            return Err(Error::domain("one weight vector per block is required"));
        }
        for (j, w) in weights.iter().enumerate() {
            if w.len() != n {
                return Err(Error::domain(format!(
                    "block {j} has {} weights for {n} particles",
                    w.len()
                )));
            }
            let sum: f64 = w.iter().sum();
            if w.iter().any(|x| !(*x >= 0.0)) || (sum - 1.0).abs() > 1e-9 {
                return Err(Error::domain(format!(
                    "block {j} weights are not normalised (sum {sum})"
                )));
            }
        }
        Ok(ParticleEnsemble {
            particles,
            weights,
            blocks,
            time,
        })
    }

    pub fn particles(&self) -> &[Configuration<S>] {
        &self.particles
    }

    pub fn weights(&self) -> &[Vec<f64>] {
        &self.weights
    }

    pub fn blocks(&self) -> &ClusterPartition {
        &self.blocks
    }

    pub fn time(&self) -> usize {
        self.time
    }

    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    pub fn universe(&self) -> usize {
        self.particles[0].universe()
    }

    /// Law of `(x^v)_{v in J}` under the product-form measure, with `None`
    /// for an inactive vertex. States are mapped through `key` first.
    pub fn marginal<K: Ord + Clone>(
        &self,
        j: &[VertexId],
        key: impl Fn(&S) -> K,
    ) -> BTreeMap<Vec<Option<K>>, f64> {
        let mut groups: BTreeMap<Option<usize>, Vec<usize>> = BTreeMap::new();
        for (pos, &v) in j.iter().enumerate() {
            groups
                .entry(self.blocks.cluster_of(v))
                .or_default()
                .push(pos);
        }
        let mut law: BTreeMap<Vec<Option<K>>, f64> = BTreeMap::new();
        law.insert(vec![None; j.len()], 1.0);
        for (block, positions) in groups {
            let Some(b) = block else { continue };
            let mut local: BTreeMap<Vec<Option<K>>, f64> = BTreeMap::new();
            for (n, p) in self.particles.iter().enumerate() {
                let k: Vec<Option<K>> = positions
                    .iter()
                    .map(|&pos| p.get(j[pos]).map(&key))
                    .collect();
                *local.entry(k).or_insert(0.0) += self.weights[b][n];
            }
            let mut next = BTreeMap::new();
            for (k, p) in &law {
                for (lk, q) in &local {
                    let mut full = k.clone();
                    for (i, &pos) in positions.iter().enumerate() {
                        full[pos] = lk[i].clone();
                    }
                    *next.entry(full).or_insert(0.0) += p * q;
                }
            }
            law = next;
        }
        law
    }
}

/// `1 / sum w^2` for one normalised weight vector.
pub fn effective_sample_size(weights: &[f64]) -> f64 {
    1.0 / weights.iter().map(|w| w * w).sum::<f64>()
}

/// `log sum exp`, with max-subtraction; `None` when the sum is zero or not finite.
fn log_sum_exp(xs: impl Iterator<Item = f64> + Clone) -> Option<f64> {
    let m = xs.clone().fold(
        f64::NEG_INFINITY,
        |a, b| if b > a || b.is_nan() { b } else { a },
    );
    if !m.is_finite() {
        return None;
    }
    let s: f64 = xs.map(|x| (x - m).exp()).sum();
    Some(m + s.ln())
}

/// `sum_B log(mean_n w^{B,(n)})` from raw log-weights indexed `[cluster][particle]`.
pub fn spf_loglik_increment(log_weights: &[Vec<f64>]) -> Result<f64> {
    let mut total = 0.0;
    for (j, w) in log_weights.iter().enumerate() {
        let lse = log_sum_exp(w.iter().copied()).ok_or(Error::Degenerate {
            time: 0,
            cluster: j,
        })?;
        total += lse - (w.len() as f64).ln();
    }
    Ok(total)
}

/// `log(mean_n prod_B w^{B,(n)})` from raw log-weights indexed `[cluster][particle]`.
pub fn pf_loglik_increment(log_weights: &[Vec<f64>]) -> Result<f64> {
    let n = log_weights.first().map_or(0, Vec::len);
    if n == 0 {
        return Ok(0.0);
    }
    let joint: Vec<f64> = (0..n)
        .map(|i| log_weights.iter().map(|w| w[i]).sum())
        .collect();
    let lse = log_sum_exp(joint.iter().copied()).ok_or(Error::Degenerate {
        time: 0,
        cluster: 0,
    })?;
    Ok(lse - (n as f64).ln())
}

fn normalise(log_w: &[f64], lse: f64) -> Vec<f64> {
    log_w.iter().map(|x| (x - lse).exp()).collect()
}

fn cumulative(w: &[f64]) -> Vec<f64> {
    let mut acc = 0.0;
    w.iter()
        .map(|x| {
            acc += x;
            acc
        })
        .collect()
}

fn pick(cdf: &[f64], u: f64) -> usize {
    let total = *cdf.last().expect("nonempty");
    let target = u * total;
    cdf.partition_point(|&c| c <= target).min(cdf.len() - 1)
}

/// Draw `N` new particles from the product of the block-wise weighted measures.
///
/// For particle `n` and block `j`, the ancestor `a_j(n)` is drawn from block
/// `j`'s weights; the child copies its states (and activity) on block `j`
/// from that ancestor.
pub fn sample_from_product<S: Clone + Send + Sync>(
    ensemble: &ParticleEnsemble<S>,
    time: usize,
    policy: &RngPolicy,
    scheme: Resampling,
) -> Vec<Configuration<S>> {
    ancestors_and_splice(ensemble, time, policy, scheme).0
}

/// Ancestor indices `[particle][block]` and the spliced particles.
#[allow(clippy::type_complexity)]
fn ancestors_and_splice<S: Clone + Send + Sync>(
    ensemble: &ParticleEnsemble<S>,
    time: usize,
    policy: &RngPolicy,
    scheme: Resampling,
) -> (Vec<Configuration<S>>, Vec<Vec<usize>>) {
    let n = ensemble.len();
    let cdfs: Vec<Vec<f64>> = ensemble.weights.iter().map(|w| cumulative(w)).collect();
    let offsets: Vec<f64> = match scheme {
        Resampling::Multinomial => vec![],
        Resampling::Systematic => (0..cdfs.len())
            .map(|j| {
                policy
                    .stream(time, usize::MAX, j, Purpose::Resample)
                    .random::<f64>()
            })
            .collect(),
    };
    let m = ensemble.universe();
    (0..n)
        .into_par_iter()
        .map(|i| {
            let anc: Vec<usize> = cdfs
                .iter()
                .enumerate()
                .map(|(j, cdf)| {
                    let u = match scheme {
                        Resampling::Multinomial => {
                            policy.stream(time, i, j, Purpose::Resample).random::<f64>()
                        }
                        Resampling::Systematic => (offsets[j] + i as f64) / n as f64,
                    };
                    pick(cdf, u)
                })
                .collect();
            let mut states: Vec<Option<S>> = vec![None; m];
            for (j, block) in ensemble.blocks.clusters().iter().enumerate() {
                let src = ensemble.particles[anc[j]].states();
                for &v in block {
                    states[v.index()] = src[v.index()].clone();
                }
            }
            (splice(states), anc)
        })
        .unzip()
}

fn splice<S: Clone>(states: Vec<Option<S>>) -> Configuration<S> {
    let id = Identifier::new(
        states
            .iter()
            .enumerate()
            .filter(|(_, s)| s.is_some())
            .map(|(i, _)| VertexId::from(i)),
    );
    Configuration::from_parts(id, states)
}

/// Fixed inputs shared by every step of one run.
#[derive(Clone, Copy)]
pub struct StepContext<'a, M> {
    pub model: &'a M,
    pub layout: &'a SpatialLayout,
    pub regions: &'a RegionalPartition,
    /// Interaction radius.
    pub r: u32,
    pub policy: &'a RngPolicy,
    pub resampling: Resampling,
}

/// Everything one filter step produces.
#[derive(Clone, Debug)]
pub struct StepResult<S> {
    pub ensemble: ParticleEnsemble<S>,
    pub spf_increment: f64,
    pub pf_increment: f64,
    /// Raw log-weights `[cluster][particle]` over the cluster partition.
    pub log_weights: Vec<Vec<f64>>,
    /// Effective sample size per resampling block.
    pub ess: Vec<f64>,
    /// Weighted mean of the model summary per vertex; `None` where no particle is active.
    pub posterior_mean: Vec<Option<f64>>,
    /// Partition of the reference identifier at this step.
    pub partition: ClusterPartition,
}

/// One SPF step: per-cluster resampling, propagation and per-cluster weighting.
pub fn spf_step<M: HstmrfModel>(
    ensemble: &ParticleEnsemble<M::State>,
    frame: &ObservationFrame<M::Obs>,
    ctx: &StepContext<'_, M>,
    cluster_size: usize,
) -> Result<(ParticleEnsemble<M::State>, f64, f64)> {
    let out = step(ensemble, frame, ctx, cluster_size, Algorithm::Spf)?;
    Ok((out.ensemble, out.spf_increment, out.pf_increment))
}

/// One PF step: identical propagation, joint weights and joint resampling.
pub fn pf_step<M: HstmrfModel>(
    ensemble: &ParticleEnsemble<M::State>,
    frame: &ObservationFrame<M::Obs>,
    ctx: &StepContext<'_, M>,
) -> Result<(ParticleEnsemble<M::State>, f64)> {
    let out = step(ensemble, frame, ctx, usize::MAX, Algorithm::Pf)?;
    Ok((out.ensemble, out.pf_increment))
}

/// Shared step. `cluster_size` fixes the partition used for weight
/// accounting; the PF resamples jointly whatever its value.
pub fn step<M: HstmrfModel>(
    ensemble: &ParticleEnsemble<M::State>,
    frame: &ObservationFrame<M::Obs>,
    ctx: &StepContext<'_, M>,
    cluster_size: usize,
    algorithm: Algorithm,
) -> Result<StepResult<M::State>> {
    let t = ensemble.time + 1;
    let m = ensemble.universe();
    let n = ensemble.len();
    let model = ctx.model;
    if let Some(k) = &frame.identifier {
        if let Some(v) = k.iter().find(|v| v.index() >= m) {
            return Err(
                Error::domain(format!("observed identifier vertex {v} outside universe"))
                    .at_time(t),
            );
        }
    }

    let (parents, _) = ancestors_and_splice(ensemble, t, ctx.policy, ctx.resampling);

    let shared = frame
        .identifier
        .as_ref()
        .map(|k| StepGeometry::new(t, k, ctx.layout, ctx.regions, ctx.r));
    let propagated: Vec<(Configuration<M::State>, Option<StepGeometry>)> = parents
        .par_iter()
        .enumerate()
        .map(|(i, prev)| {
            let own = match &frame.identifier {
                Some(_) => None,
                None => {
                    let mut rng = ctx.policy.stream(t, i, 0, Purpose::Identifier);
                    let mut active = Vec::new();
                    for region in ctx.regions.regions() {
                        active.extend(model.sample_region_identifier(t, region, prev, &mut rng));
                    }
                    let k = Identifier::new(active);
                    Some(StepGeometry::new(t, &k, ctx.layout, ctx.regions, ctx.r))
                }
            };
            let geo = own.as_ref().or(shared.as_ref()).expect("one geometry");
            let mut rng = ctx.policy.stream(t, i, 0, Purpose::Propagate);
            let mut states: Vec<Option<M::State>> = vec![None; m];
            for v in geo.identifier().iter() {
                let vctx = geo.context(v, ctx.regions);
                states[v.index()] = Some(model.sample_transition(&vctx, prev.get(v), &mut rng));
            }
            (
                Configuration::from_parts(geo.identifier().clone(), states),
                own,
            )
        })
        .collect();

    let template = match &frame.identifier {
        Some(k) => k.clone(),
        None => propagated
            .iter()
            .fold(Identifier::empty(), |acc, (p, _)| acc.union(p.identifier())),
    };
    let partition = build_cluster_partition(&template, cluster_size.min(template.len().max(1)));

    // raw log-weights, [particle][cluster]
    let per_particle: Vec<Vec<f64>> = propagated
        .par_iter()
        .map(|(x, own)| {
            let geo = own.as_ref().or(shared.as_ref()).expect("one geometry");
            partition
                .clusters()
                .iter()
                .map(|block| {
                    block
                        .iter()
                        .filter_map(|&v| x.get(v).map(|s| (v, s)))
                        .map(|(v, s)| {
                            let vctx = geo.context(v, ctx.regions);
                            let g = frame
                                .values
                                .get(v.index())
                                .and_then(Option::as_ref)
                                .map_or(0.0, |y| model.log_observation(&vctx, y, s));
                            g + model.log_interaction(
                                &vctx,
                                s,
                                Neighbors::new(vctx.neighborhood, x.states()),
                            )
                        })
                        .sum::<f64>()
                })
                .collect()
        })
        .collect();
    let log_weights: Vec<Vec<f64>> = (0..partition.len())
        .map(|j| per_particle.iter().map(|w| w[j]).collect())
        .collect();

    let ln_n = (n as f64).ln();
    let cluster_lse: Vec<Option<f64>> = log_weights
        .iter()
        .map(|w| log_sum_exp(w.iter().copied()))
        .collect();
    let joint: Vec<f64> = per_particle.iter().map(|w| w.iter().sum()).collect();
    let joint_lse = if partition.is_empty() {
        Some(0.0)
    } else {
        log_sum_exp(joint.iter().copied())
    };

    let spf_increment: f64 = cluster_lse
        .iter()
        .map(|l| l.map_or(f64::NEG_INFINITY, |l| l - ln_n))
        .sum();
    let pf_increment = joint_lse.map_or(f64::NEG_INFINITY, |l| l - ln_n);

    let (blocks, weights) = match algorithm {
        Algorithm::Spf => {
            let mut weights = Vec::with_capacity(partition.len());
            for (j, w) in log_weights.iter().enumerate() {
                let lse = cluster_lse[j].ok_or(Error::Degenerate {
                    time: t,
                    cluster: j,
                })?;
                weights.push(normalise(w, lse));
            }
            (partition.clone(), weights)
        }
        Algorithm::Pf => {
            let lse = joint_lse.ok_or(Error::Degenerate {
                time: t,
                cluster: 0,
            })?;
            let blocks = ClusterPartition::single(&template);
            let weights = if blocks.is_empty() {
                vec![]
            } else {
                vec![normalise(&joint, lse)]
            };
            (blocks, weights)
        }
    };

    let ess = weights.iter().map(|w| effective_sample_size(w)).collect();
    let particles: Vec<Configuration<M::State>> = propagated.into_iter().map(|(x, _)| x).collect();
    let mut posterior_mean = vec![None; m];
    for (j, block) in blocks.clusters().iter().enumerate() {
        for &v in block {
            let (mut num, mut den) = (0.0, 0.0);
            for (i, p) in particles.iter().enumerate() {
                if let Some(s) = p.get(v) {
                    num += weights[j][i] * model.summary(s);
                    den += weights[j][i];
                }
            }
            if den > 0.0 {
                posterior_mean[v.index()] = Some(num / den);
            }
        }
    }

    Ok(StepResult {
        ensemble: ParticleEnsemble {
            particles,
            weights,
            blocks,
            time: t,
        },
        spf_increment,
        pf_increment,
        log_weights,
        ess,
        posterior_mean,
        partition,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FilterConfig {
    pub num_particles: usize,
    pub cluster_size: usize,
    /// Interaction radius.
    pub r: u32,
    pub algorithm: Algorithm,
    #[serde(default)]
    pub resampling: Resampling,
    pub seed: u64,
    /// Worker threads; `None` uses the ambient rayon pool.
    #[serde(default)]
    pub threads: Option<usize>,
    /// Wall-clock limit for the whole run.
    #[serde(default)]
    pub budget: Option<Duration>,
}

impl FilterConfig {
    pub fn new(algorithm: Algorithm, num_particles: usize, cluster_size: usize, seed: u64) -> Self {
        FilterConfig {
            num_particles,
            cluster_size,
            r: 1,
            algorithm,
            resampling: Resampling::Multinomial,
            seed,
            threads: None,
            budget: None,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.num_particles == 0 {
            return Err(Error::Config("particle count must be positive".into()));
        }
        if self.cluster_size == 0 {
            return Err(Error::Config("cluster size must be positive".into()));
        }
        if self.r == 0 {
            return Err(Error::Config("interaction radius must be positive".into()));
        }
        Ok(())
    }
}

/// Per-time diagnostics.
#[derive(Clone, Debug, PartialEq)]
pub struct StepSummary {
    pub time: usize,
    pub spf_increment: f64,
    pub pf_increment: f64,
    pub ess: Vec<f64>,
    pub posterior_mean: Vec<Option<f64>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FilterOutput {
    pub steps: Vec<StepSummary>,
    pub total_spf_loglik: f64,
    pub total_pf_loglik: f64,
    /// Spatial dimension used for scaling.
    pub dim: usize,
}

impl FilterOutput {
    pub fn total(&self, method: LoglikMethod) -> f64 {
        match method {
            LoglikMethod::Spf => self.total_spf_loglik,
            LoglikMethod::Pf => self.total_pf_loglik,
        }
    }

    /// Per-step CSV: time, both increments, smallest and largest block ESS.
    pub fn steps_csv(&self) -> String {
        let mut s = String::from("t,spf_increment,pf_increment,min_ess,max_ess\n");
        for st in &self.steps {
            let (lo, hi) = st
                .ess
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &e| {
                    (a.min(e), b.max(e))
                });
            s.push_str(&format!(
                "{},{},{},{},{}\n",
                st.time, st.spf_increment, st.pf_increment, lo, hi
            ));
        }
        s
    }

    /// Total divided by the spatial dimension.
    pub fn scaled(&self, method: LoglikMethod) -> f64 {
        self.total(method) / self.dim as f64
    }
}

/// Stateful driver: holds the current ensemble and advances it one step at a time.
pub struct Filter<'a, M: HstmrfModel> {
    model: &'a M,
    layout: &'a SpatialLayout,
    regions: &'a RegionalPartition,
    config: FilterConfig,
    policy: RngPolicy,
    pool: Option<rayon::ThreadPool>,
    ensemble: ParticleEnsemble<M::State>,
}

impl<'a, M: HstmrfModel> Filter<'a, M> {
    /// Draw `N` particles from the initial law, equally weighted.
    pub fn new(
        model: &'a M,
        layout: &'a SpatialLayout,
        regions: &'a RegionalPartition,
        config: FilterConfig,
    ) -> Result<Self> {
        config.validate()?;
        if layout.len() != model.universe() || regions.universe() != model.universe() {
            return Err(Error::domain(
                "layout, regions and model disagree on the universe",
            ));
        }
        let pool = match config.threads {
            Some(k) => Some(
                rayon::ThreadPoolBuilder::new()
                    .num_threads(k.max(1))
                    .build()
                    .map_err(|e| Error::Config(format!("thread pool: {e}")))?,
            ),
            None => None,
        };
        let policy = RngPolicy::new(config.seed);
        let init = || -> Result<ParticleEnsemble<M::State>> {
            let particles: Vec<_> = (0..config.num_particles)
                .into_par_iter()
                .map(|i| model.sample_initial(&mut policy.stream(0, i, 0, Purpose::Initial)))
                .collect();
            let template = particles
                .iter()
                .fold(Identifier::empty(), |acc, p| acc.union(p.identifier()));
            let blocks = match config.algorithm {
                Algorithm::Spf => build_cluster_partition(&template, config.cluster_size),
                Algorithm::Pf => ClusterPartition::single(&template),
            };
            ParticleEnsemble::uniform(particles, blocks, 0)
        };
        let ensemble = match &pool {
            Some(p) => p.install(init)?,
            None => init()?,
        };
        Ok(Filter {
            model,
            layout,
            regions,
            config,
            policy,
            pool,
            ensemble,
        })
    }

    pub fn ensemble(&self) -> &ParticleEnsemble<M::State> {
        &self.ensemble
    }

    pub fn config(&self) -> &FilterConfig {
        &self.config
    }

    /// Advance one step, returning the full step result.
    pub fn step_full(&mut self, frame: &ObservationFrame<M::Obs>) -> Result<StepResult<M::State>> {
        let ctx = StepContext {
            model: self.model,
            layout: self.layout,
            regions: self.regions,
            r: self.config.r,
            policy: &self.policy,
            resampling: self.config.resampling,
        };
        let run = || {
            step(
                &self.ensemble,
                frame,
                &ctx,
                self.config.cluster_size,
                self.config.algorithm,
            )
        };
        let out = match &self.pool {
            Some(p) => p.install(run)?,
            None => run()?,
        };
        self.ensemble = out.ensemble.clone();
        Ok(out)
    }

    pub fn step(&mut self, frame: &ObservationFrame<M::Obs>) -> Result<StepSummary> {
        let out = self.step_full(frame)?;
        Ok(StepSummary {
            time: out.ensemble.time,
            spf_increment: out.spf_increment,
            pf_increment: out.pf_increment,
            ess: out.ess,
            posterior_mean: out.posterior_mean,
        })
    }
}

/// Filter a whole observation sequence.
pub fn run_filter<M: HstmrfModel>(
    model: &M,
    layout: &SpatialLayout,
    regions: &RegionalPartition,
    frames: &[ObservationFrame<M::Obs>],
    config: &FilterConfig,
) -> Result<FilterOutput> {
    let start = Instant::now();
    let mut filter = Filter::new(model, layout, regions, config.clone())?;
    let mut steps = Vec::with_capacity(frames.len());
    let (mut spf, mut pf) = (0.0, 0.0);
    for (i, frame) in frames.iter().enumerate() {
        if let Some(limit) = config.budget {
            if start.elapsed() > limit {
                return Err(Error::Budget { time: i + 1 });
            }
        }
        let s = filter.step(frame)?;
        spf += s.spf_increment;
        pf += s.pf_increment;
        steps.push(s);
    }
    Ok(FilterOutput {
        steps,
        total_spf_loglik: spf,
        total_pf_loglik: pf,
        dim: model.universe(),
    })
}
