//! Scenario sweeps over spatial dimensions and their result files.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::car::{
    as_model_spec, observation_frames, simulate_dataset, CarParams, ObsModel, Trajectory,
};
use crate::error::{Error, Result};
use crate::filter::{run_filter, Algorithm, FilterConfig, LoglikMethod, Resampling};
use crate::graph::{load_adjacency, DistanceBackend, RegionalPartition, SpatialLayout};
use crate::rng::{Purpose, RngPolicy};

pub const RESULTS_HEADER: &str =
    "scenario,dim,algorithm,loglik_method,total_loglik,scaled_loglik,runtime_ms,seed,degenerate";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum AdjacencySource {
    Complete,
    File(PathBuf),
}

impl FromStr for AdjacencySource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.is_empty() {
            return Err(Error::Config("empty adjacency source".into()));
        }
        Ok(if s.eq_ignore_ascii_case("complete") {
            AdjacencySource::Complete
        } else {
            AdjacencySource::File(PathBuf::from(s))
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub scenario: String,
    pub horizon: usize,
    pub num_particles: usize,
    pub dims: Vec<usize>,
    pub cluster_size: usize,
    pub obs_model: ObsModel,
    pub p_enter: f64,
    pub p_stay: f64,
    pub adjacency: AdjacencySource,
    pub backend: DistanceBackend,
    pub r: u32,
    pub seed: u64,
    pub algorithms: Vec<Algorithm>,
    pub loglik_methods: Vec<LoglikMethod>,
    pub out: Option<PathBuf>,
    pub threads: Option<usize>,
    /// Independent repetitions; repetition `i` uses master seed `seed + i`.
    pub replicates: usize,
    /// Record wall-clock runtimes; when off every `runtime_ms` is 0.
    pub timing: bool,
    /// Per-row wall-clock limit.
    pub budget_ms: Option<u64>,
    pub resampling: Resampling,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            scenario: "scenario".into(),
            horizon: 100,
            num_particles: 200,
            dims: vec![20, 40, 60, 80],
            cluster_size: 2,
            obs_model: ObsModel::Normal,
            p_enter: 0.9,
            p_stay: 0.9,
            adjacency: AdjacencySource::Complete,
            backend: DistanceBackend::Hop,
            r: 1,
            seed: 1,
            algorithms: vec![Algorithm::Spf, Algorithm::Pf],
            loglik_methods: vec![LoglikMethod::Spf, LoglikMethod::Pf],
            out: None,
            threads: None,
            replicates: 1,
            timing: true,
            budget_ms: None,
            resampling: Resampling::Multinomial,
        }
    }
}

fn list<T: FromStr>(v: &str, key: &str) -> Result<Vec<T>> {
    v.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse()
                .map_err(|_| Error::Config(format!("bad entry `{s}` for `{key}`")))
        })
        .collect()
}

fn scalar<T: FromStr>(v: &str, key: &str) -> Result<T> {
    v.trim()
        .parse()
        .map_err(|_| Error::Config(format!("bad value `{v}` for `{key}`")))
}

fn boolean(v: &str, key: &str) -> Result<bool> {
    match v.trim().to_ascii_lowercase().as_str() {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        _ => Err(Error::Config(format!("bad boolean `{v}` for `{key}`"))),
    }
}

impl ScenarioConfig {
    /// Apply one `key=value` setting. Keys match the CLI flags; `-` and `_` are interchangeable.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let k = key.trim().trim_start_matches("--").replace('-', "_");
        let v = value.trim();
        match k.as_str() {
            "scenario" => {
                if v.contains(',') || v.contains('\n') {
                    return Err(Error::Config(
                        "scenario id may not contain commas or newlines".into(),
                    ));
                }
                self.scenario = v.to_string();
            }
            "T" | "t" | "horizon" => self.horizon = scalar(v, &k)?,
            "N" | "n" | "particles" => self.num_particles = scalar(v, &k)?,
            "dims" => self.dims = list(v, &k)?,
            "cluster_size" | "c" => self.cluster_size = scalar(v, &k)?,
            "obs_model" => self.obs_model = v.parse()?,
            "p_enter" => self.p_enter = scalar(v, &k)?,
            "p_stay" => self.p_stay = scalar(v, &k)?,
            "adjacency" => self.adjacency = v.parse()?,
            "backend" | "distance" => self.backend = v.parse()?,
            "r" => self.r = scalar(v, &k)?,
            "seed" => self.seed = scalar(v, &k)?,
            "algorithms" => self.algorithms = list(v, &k)?,
            "loglik_methods" | "loglik" => self.loglik_methods = list(v, &k)?,
            "out" => self.out = Some(PathBuf::from(v)),
            "threads" => self.threads = Some(scalar(v, &k)?),
            "replicates" => self.replicates = scalar(v, &k)?,
            "timing" => self.timing = boolean(v, &k)?,
            "budget_ms" => self.budget_ms = Some(scalar(v, &k)?),
            "resampling" => {
                self.resampling = match v.to_ascii_lowercase().as_str() {
                    "multinomial" => Resampling::Multinomial,
                    "systematic" => Resampling::Systematic,
                    _ => return Err(Error::Config(format!("unknown resampling scheme `{v}`"))),
                }
            }
            _ => return Err(Error::Config(format!("unknown key `{key}`"))),
        }
        Ok(())
    }

    /// Parse flat `key=value` text over the defaults; `#` starts a comment.
    pub fn from_key_values(text: &str) -> Result<Self> {
        let mut cfg = ScenarioConfig::default();
        cfg.apply_key_values(text)?;
        Ok(cfg)
    }

    pub fn apply_key_values(&mut self, text: &str) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key=value", i + 1)))?;
            self.set(k, v)
                .map_err(|e| Error::Config(format!("line {}: {e}", i + 1)))?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.horizon == 0 || self.num_particles == 0 || self.cluster_size == 0 || self.r == 0 {
            return bad("T, N, cluster size and r must be positive");
        }
        if self.dims.is_empty() || self.dims.contains(&0) {
            return bad("dims must be a nonempty list of positive integers");
        }
        if self.algorithms.is_empty() || self.loglik_methods.is_empty() {
            return bad("at least one algorithm and one log-likelihood method are required");
        }
        if self.replicates == 0 {
            return bad("replicates must be positive");
        }
        if !(0.0..=1.0).contains(&self.p_enter) || !(0.0..=1.0).contains(&self.p_stay) {
            return bad("p_enter and p_stay must lie in [0, 1]");
        }
        Ok(())
    }

    /// The full layout the sweep draws leading blocks from.
    pub fn base_layout(&self) -> Result<SpatialLayout> {
        let max = *self.dims.iter().max().expect("validated");
        let layout = match &self.adjacency {
            AdjacencySource::Complete => SpatialLayout::complete(max),
            AdjacencySource::File(p) => {
                let l = load_adjacency(p)?;
                if max > l.len() {
                    return Err(Error::Config(format!(
                        "dimension {max} exceeds the {}-vertex adjacency",
                        l.len()
                    )));
                }
                l
            }
        };
        match self.backend {
            DistanceBackend::Hop => Ok(layout),
            b => layout.with_backend(b),
        }
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Degenerate {
    No,
    Yes,
    Budget,
}

impl fmt::Display for Degenerate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Degenerate::No => "false",
            Degenerate::Yes => "true",
            Degenerate::Budget => "budget",
        })
    }
}

impl FromStr for Degenerate {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "false" => Ok(Degenerate::No),
            "true" => Ok(Degenerate::Yes),
            "budget" => Ok(Degenerate::Budget),
            other => Err(Error::Config(format!("bad degenerate flag `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub scenario: String,
    pub dim: usize,
    pub algorithm: Algorithm,
    pub loglik_method: LoglikMethod,
    pub total_loglik: f64,
    /// `total_loglik / dim`.
    pub scaled_loglik: f64,
    pub runtime_ms: u64,
    pub seed: u64,
    pub degenerate: Degenerate,
}

impl ResultRow {
    fn to_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{}\n",
            self.scenario,
            self.dim,
            self.algorithm,
            self.loglik_method,
            self.total_loglik,
            self.scaled_loglik,
            self.runtime_ms,
            self.seed,
            self.degenerate
        )
    }
}

/// One simulated dataset of a sweep and everything needed to filter it.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub layout: SpatialLayout,
    pub regions: RegionalPartition,
    pub params: CarParams,
    pub trajectory: Trajectory,
    /// Master seed of the repetition.
    pub seed: u64,
}

/// The dataset of repetition `rep` at dimension `dim`; parameters depend on
/// the repetition's seed only, so every dimension shares them.
pub fn scenario_dataset(
    config: &ScenarioConfig,
    base: &SpatialLayout,
    dim: usize,
    rep: usize,
) -> Result<Dataset> {
    let seed = config.seed.wrapping_add(rep as u64);
    let policy = RngPolicy::new(seed);
    let params = CarParams::draw(
        config.horizon,
        config.obs_model,
        config.p_enter,
        config.p_stay,
        &mut policy.stream(0, 0, 0, Purpose::Parameters),
    );
    let layout = base.leading(dim)?;
    let regions = RegionalPartition::singletons(dim);
    let trajectory = simulate_dataset(
        &params,
        &layout,
        &regions,
        config.horizon,
        policy.derive(dim as u64, 0).seed(),
    )?;
    Ok(Dataset {
        layout,
        regions,
        params,
        trajectory,
        seed,
    })
}

/// Simulate one dataset per dimension and run every requested filter on it.
///
/// Filter degeneracy and budget overruns are recorded in the rows; other
/// errors abort the sweep.
pub fn run_scenario(config: &ScenarioConfig) -> Result<Vec<ResultRow>> {
    config.validate()?;
    let base = config.base_layout()?;
    let mut rows = Vec::new();
    for rep in 0..config.replicates {
        for &dim in &config.dims {
            let data = scenario_dataset(config, &base, dim, rep)?;
            rows.extend(run_dataset(config, &data, dim)?);
        }
    }
    Ok(rows)
}

fn run_dataset(config: &ScenarioConfig, data: &Dataset, dim: usize) -> Result<Vec<ResultRow>> {
    let policy = RngPolicy::new(data.seed);
    let frames = observation_frames(&data.trajectory, true);
    let model = as_model_spec(&data.params, &data.layout, &data.regions);
    let mut rows = Vec::new();
    for &alg in &config.algorithms {
        // both algorithms share streams, so results are paired
        let filter_seed = policy.derive(dim as u64, 1).seed();
        let fc = FilterConfig {
            num_particles: config.num_particles,
            cluster_size: config.cluster_size,
            r: config.r,
            algorithm: alg,
            resampling: config.resampling,
            seed: filter_seed,
            threads: config.threads,
            budget: config.budget_ms.map(Duration::from_millis),
        };
        let start = Instant::now();
        let outcome = run_filter(&model, &data.layout, &data.regions, &frames, &fc);
        let elapsed = start.elapsed().as_millis() as u64;
        let runtime_ms = if config.timing { elapsed } else { 0 };
        let (totals, degenerate) = match outcome {
            Ok(out) => {
                if config.budget_ms.is_some_and(|b| elapsed > b) {
                    (BTreeMap::new(), Degenerate::Budget)
                } else {
                    let totals: BTreeMap<LoglikMethod, f64> = config
                        .loglik_methods
                        .iter()
                        .map(|&m| (m, out.total(m)))
                        .collect();
                    (totals, Degenerate::No)
                }
            }
            Err(Error::Degenerate { .. }) => (BTreeMap::new(), Degenerate::Yes),
            Err(Error::Budget { .. }) => (BTreeMap::new(), Degenerate::Budget),
            Err(e) => return Err(e),
        };
        for &method in &config.loglik_methods {
            let total = totals.get(&method).copied().unwrap_or(f64::NAN);
            rows.push(ResultRow {
                scenario: config.scenario.clone(),
                dim,
                algorithm: alg,
                loglik_method: method,
                total_loglik: total,
                scaled_loglik: total / dim as f64,
                runtime_ms,
                seed: data.seed,
                degenerate,
            });
        }
    }
    Ok(rows)
}

/// Results as CSV text with [`RESULTS_HEADER`] and LF line endings.
pub fn results_to_string(rows: &[ResultRow]) -> String {
    let mut s = String::with_capacity(64 * (rows.len() + 1));
    s.push_str(RESULTS_HEADER);
    s.push('\n');
    for r in rows {
        s.push_str(&r.to_line());
    }
    s
}

pub fn write_results(rows: &[ResultRow], path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, results_to_string(rows))?;
    Ok(())
}

pub fn read_results(path: impl AsRef<Path>) -> Result<Vec<ResultRow>> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)?;
    let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    if header.join(",") != RESULTS_HEADER {
        return Err(Error::Load {
            path: path.to_path_buf(),
            row: Some(1),
            col: None,
            message: format!("expected header `{RESULTS_HEADER}`"),
        });
    }
    let mut rows = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec?;
        let bad = |col: usize| Error::Load {
            path: path.to_path_buf(),
            row: Some(i + 2),
            col: Some(col + 1),
            message: format!("bad value `{}`", rec.get(col).unwrap_or("")),
        };
        let field = |c: usize| rec.get(c).ok_or_else(|| bad(c));
        rows.push(ResultRow {
            scenario: field(0)?.to_string(),
            dim: field(1)?.parse().map_err(|_| bad(1))?,
            algorithm: field(2)?.parse().map_err(|_| bad(2))?,
            loglik_method: field(3)?.parse().map_err(|_| bad(3))?,
            total_loglik: field(4)?.parse().map_err(|_| bad(4))?,
            scaled_loglik: field(5)?.parse().map_err(|_| bad(5))?,
            runtime_ms: field(6)?.parse().map_err(|_| bad(6))?,
            seed: field(7)?.parse().map_err(|_| bad(7))?,
            degenerate: field(8)?.parse().map_err(|_| bad(8))?,
        });
    }
    Ok(rows)
}
