//! Command-line driver: simulation, filtering, benchmark sweeps, bound
//! reports and oracle checks.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use vtmrf::bench::{results_to_string, run_scenario, scenario_dataset, Degenerate, ScenarioConfig};
use vtmrf::bounds::{
    car_truncated_bounds, instance_bound_inputs, BoundInputs, BoundReport, TruncationBox,
    CAR_CAVEAT, REPORT_CSV_HEADER,
};
use vtmrf::car::{as_model_spec, observation_frames, read_dataset, write_dataset, CarParams};
use vtmrf::filter::{Filter, Resampling};
use vtmrf::graph::{load_adjacency, GraphQuantities};
use vtmrf::model::DensityBounds;
use vtmrf::oracle::{law_distance, load_instance, run_exact, FiniteModel};
use vtmrf::{
    Algorithm, Error, FilterConfig, LoglikMethod, RegionalPartition, SpatialLayout, VertexId,
};

const EXIT_CONFIG: u8 = 2;
const EXIT_DATA: u8 = 3;
const EXIT_DEGENERATE: u8 = 4;
const EXIT_CHECK_FAILED: u8 = 1;

#[derive(Parser)]
#[command(
    name = "vtmrf",
    version,
    about = "Blocked particle filtering for spatiotemporal MRFs of varying dimension"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate CAR datasets for every dimension of a scenario.
    Simulate(ScenarioArgs),
    /// Filter one dataset written by `simulate`.
    Filter(FilterArgs),
    /// Run a scenario sweep and write the results CSV.
    Bench(ScenarioArgs),
    /// Print the error-bound report.
    Bounds(BoundsArgs),
    /// Compare the particle filter with the exact filter on a finite instance.
    OracleCheck(OracleArgs),
}

/// Scenario flags; each overrides the matching key of `--config`.
#[derive(Args, Default)]
struct ScenarioArgs {
    /// Flat key=value file with the same keys as the flags.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    scenario: Option<String>,
    /// Time horizon.
    #[arg(long = "T")]
    horizon: Option<String>,
    /// Particle count.
    #[arg(long = "N")]
    particles: Option<String>,
    /// Comma-separated spatial dimensions.
    #[arg(long)]
    dims: Option<String>,
    #[arg(long)]
    cluster_size: Option<String>,
    /// `normal` or `poisson`.
    #[arg(long)]
    obs_model: Option<String>,
    #[arg(long)]
    p_enter: Option<String>,
    #[arg(long)]
    p_stay: Option<String>,
    /// `complete` or a path to a 0/1 adjacency CSV.
    #[arg(long)]
    adjacency: Option<String>,
    /// `hop` or `euclidean`.
    #[arg(long)]
    backend: Option<String>,
    #[arg(long)]
    r: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    /// Comma-separated subset of `spf,pf`.
    #[arg(long)]
    algorithms: Option<String>,
    /// Comma-separated subset of `spf,pf`.
    #[arg(long)]
    loglik_methods: Option<String>,
    /// Results CSV for `bench`, output directory for `simulate`.
    #[arg(long)]
    out: Option<String>,
    #[arg(long)]
    threads: Option<String>,
    #[arg(long)]
    replicates: Option<String>,
    /// Record wall-clock runtimes (`false` writes 0 for reproducible files).
    #[arg(long)]
    timing: Option<String>,
    /// Per-row wall-clock budget in milliseconds.
    #[arg(long)]
    budget_ms: Option<String>,
    /// `multinomial` or `systematic`.
    #[arg(long)]
    resampling: Option<String>,
}

impl ScenarioArgs {
    fn resolve(&self) -> vtmrf::Result<ScenarioConfig> {
        let mut cfg = ScenarioConfig::default();
        if let Some(path) = &self.config {
            let text = fs::read_to_string(path)
                .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
            cfg.apply_key_values(&text)?;
        }
        let flags = [
            ("scenario", &self.scenario),
            ("T", &self.horizon),
            ("N", &self.particles),
            ("dims", &self.dims),
            ("cluster_size", &self.cluster_size),
            ("obs_model", &self.obs_model),
            ("p_enter", &self.p_enter),
            ("p_stay", &self.p_stay),
            ("adjacency", &self.adjacency),
            ("backend", &self.backend),
            ("r", &self.r),
            ("seed", &self.seed),
            ("algorithms", &self.algorithms),
            ("loglik_methods", &self.loglik_methods),
            ("out", &self.out),
            ("threads", &self.threads),
            ("replicates", &self.replicates),
            ("timing", &self.timing),
            ("budget_ms", &self.budget_ms),
            ("resampling", &self.resampling),
        ];
        for (key, value) in flags {
            if let Some(v) = value {
                cfg.set(key, v)?;
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args)]
struct FilterArgs {
    /// Dataset CSV written by `simulate`.
    #[arg(long)]
    data: PathBuf,
    /// Parameter file written by `simulate`.
    #[arg(long)]
    params: PathBuf,
    /// `complete` or an adjacency CSV; larger matrices are cut to the dataset size.
    #[arg(long, default_value = "complete")]
    adjacency: String,
    #[arg(long, default_value = "spf")]
    algorithm: Algorithm,
    #[arg(long = "N", default_value_t = 200)]
    particles: usize,
    #[arg(long, default_value_t = 2)]
    cluster_size: usize,
    #[arg(long, default_value_t = 1)]
    r: u32,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    threads: Option<usize>,
    /// Treat the activity pattern as unobserved.
    #[arg(long)]
    latent: bool,
    #[arg(long)]
    systematic: bool,
    /// Per-step CSV of log-likelihood increments and ESS.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BoundsArgs {
    /// Finite instance (TOML); density bounds are found by exhaustive scan.
    #[arg(long, conflicts_with = "car_params")]
    instance: Option<PathBuf>,
    /// CAR parameter file; density bounds hold on the truncation box only.
    #[arg(long)]
    car_params: Option<PathBuf>,
    /// `lo,hi` range of the spatial effect.
    #[arg(long, default_value = "-3,3")]
    phi_box: String,
    /// `lo,hi` range of the temporal effect.
    #[arg(long, default_value = "-3,3")]
    varphi_box: String,
    /// `lo,hi` range of the observations.
    #[arg(long, default_value = "-6,6")]
    y_box: String,
    #[arg(long)]
    eps_d: Option<f64>,
    #[arg(long)]
    eps_u: Option<f64>,
    #[arg(long)]
    epsp_d: Option<f64>,
    #[arg(long)]
    epsp_u: Option<f64>,
    #[arg(long)]
    gamma_d: Option<f64>,
    #[arg(long)]
    gamma_u: Option<f64>,
    #[arg(long)]
    kappa_d: Option<f64>,
    #[arg(long)]
    kappa_u: Option<f64>,
    #[arg(long, default_value_t = 1)]
    r: u32,
    #[arg(long, default_value_t = 2)]
    cluster_size: usize,
    /// Largest neighbourhood size.
    #[arg(long, default_value_t = 2)]
    max_degree: usize,
    #[arg(long, default_value_t = 1)]
    max_region_size: usize,
    #[arg(long, default_value_t = 1.0)]
    region_diameter: f64,
    #[arg(long = "N", default_value_t = 200)]
    particles: usize,
    /// Vertices of `J` (comma-separated, 0-based); instance mode only.
    #[arg(long, default_value = "0")]
    vertices: String,
    #[arg(long, default_value_t = 1)]
    card_j: usize,
    /// Smallest distance from `J` to a cluster boundary.
    #[arg(long, default_value_t = 0.0)]
    distance: f64,
    /// Print a CSV row under a header instead of text.
    #[arg(long)]
    csv: bool,
}

#[derive(Args)]
struct OracleArgs {
    #[arg(long)]
    instance: PathBuf,
    #[arg(long = "N", default_value_t = 20000)]
    particles: usize,
    /// Compare against the exact cluster filter with this cluster size;
    /// without it the SPF runs with one cluster against the exact filter.
    #[arg(long)]
    cluster_size: Option<usize>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Largest accepted local total variation per vertex.
    #[arg(long, default_value_t = 0.02)]
    tolerance: f64,
    #[arg(long)]
    threads: Option<usize>,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) => EXIT_CONFIG,
        Error::Degenerate { .. } | Error::Budget { .. } => EXIT_DEGENERATE,
        _ => EXIT_DATA,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate(a) => simulate(&a),
        Command::Filter(a) => filter(&a),
        Command::Bench(a) => bench(&a),
        Command::Bounds(a) => bounds(&a),
        Command::OracleCheck(a) => oracle_check(&a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn simulate(args: &ScenarioArgs) -> vtmrf::Result<u8> {
    let cfg = args.resolve()?;
    let dir = cfg
        .out
        .clone()
        .ok_or_else(|| Error::Config("simulate needs --out <directory>".into()))?;
    fs::create_dir_all(&dir)?;
    let base = cfg.base_layout()?;
    for rep in 0..cfg.replicates {
        for &dim in &cfg.dims {
            let data = scenario_dataset(&cfg, &base, dim, rep)?;
            let stem = format!("seed{}_dim{dim}", data.seed);
            write_dataset(&data.trajectory, dir.join(format!("{stem}.csv")))?;
            fs::write(
                dir.join(format!("{stem}.params")),
                data.params.to_key_values(),
            )?;
            fs::write(
                dir.join(format!("{stem}_adjacency.csv")),
                data.layout.to_csv(),
            )?;
            println!("{}", dir.join(format!("{stem}.csv")).display());
        }
    }
    Ok(0)
}

fn layout_for(source: &str, dim: usize) -> vtmrf::Result<SpatialLayout> {
    if source.eq_ignore_ascii_case("complete") {
        Ok(SpatialLayout::complete(dim))
    } else {
        load_adjacency(source)?.leading(dim)
    }
}

fn filter(args: &FilterArgs) -> vtmrf::Result<u8> {
    let traj = read_dataset(&args.data)?;
    let text = fs::read_to_string(&args.params)?;
    let params = CarParams::from_key_values(&text)?;
    params.validate(traj.steps.len())?;
    let dim = traj.initial.universe();
    let layout = layout_for(&args.adjacency, dim)?;
    let regions = RegionalPartition::singletons(dim);
    let model = as_model_spec(&params, &layout, &regions);
    let frames = observation_frames(&traj, !args.latent);
    let mut config =
        FilterConfig::new(args.algorithm, args.particles, args.cluster_size, args.seed);
    config.r = args.r;
    config.threads = args.threads;
    if args.systematic {
        config.resampling = Resampling::Systematic;
    }
    let out = vtmrf::run_filter(&model, &layout, &regions, &frames, &config)?;
    if let Some(path) = &args.out {
        fs::write(path, out.steps_csv())?;
    }
    for m in [LoglikMethod::Spf, LoglikMethod::Pf] {
        println!("total_{m}_loglik: {}", out.total(m));
        println!("scaled_{m}_loglik: {}", out.scaled(m));
    }
    Ok(0)
}

fn bench(args: &ScenarioArgs) -> vtmrf::Result<u8> {
    let cfg = args.resolve()?;
    let rows = run_scenario(&cfg)?;
    let text = results_to_string(&rows);
    match &cfg.out {
        Some(path) => {
            if let Some(dir) = Path::new(path)
                .parent()
                .filter(|d| !d.as_os_str().is_empty())
            {
                fs::create_dir_all(dir)?;
            }
            fs::write(path, &text)?;
        }
        None => std::io::stdout().write_all(text.as_bytes())?,
    }
    let degenerate = rows
        .iter()
        .filter(|r| r.degenerate != Degenerate::No)
        .count();
    if degenerate > 0 {
        eprintln!("{degenerate} of {} rows degenerate", rows.len());
        return Ok(EXIT_DEGENERATE);
    }
    Ok(0)
}

fn range(text: &str, name: &str) -> vtmrf::Result<(f64, f64)> {
    let bad = || Error::Config(format!("--{name} expects `lo,hi`"));
    let (a, b) = text.split_once(',').ok_or_else(bad)?;
    Ok((
        a.trim().parse().map_err(|_| bad())?,
        b.trim().parse().map_err(|_| bad())?,
    ))
}

fn parse_vertices(text: &str) -> vtmrf::Result<Vec<VertexId>> {
    text.split(',')
        .map(|s| {
            s.trim()
                .parse::<usize>()
                .map(VertexId::from)
                .map_err(|_| Error::Config(format!("bad vertex `{s}`")))
        })
        .collect()
}

fn explicit_bounds(a: &BoundsArgs) -> vtmrf::Result<DensityBounds> {
    let need =
        |x: Option<f64>, name: &str| x.ok_or_else(|| Error::Config(format!("missing --{name}")));
    Ok(DensityBounds {
        eps_d: need(a.eps_d, "eps-d")?,
        eps_u: need(a.eps_u, "eps-u")?,
        epsp_d: need(a.epsp_d, "epsp-d")?,
        epsp_u: need(a.epsp_u, "epsp-u")?,
        gamma_d: need(a.gamma_d, "gamma-d")?,
        gamma_u: need(a.gamma_u, "gamma-u")?,
        kappa_d: need(a.kappa_d, "kappa-d")?,
        kappa_u: need(a.kappa_u, "kappa-u")?,
    })
}

fn bounds(a: &BoundsArgs) -> vtmrf::Result<u8> {
    let quantities = GraphQuantities {
        r: a.r,
        max_cluster_size: a.cluster_size,
        max_degree: a.max_degree,
        max_region_size: a.max_region_size,
        max_region_diameter: a.region_diameter,
    };
    let (inputs, caveat) = if let Some(path) = &a.instance {
        let inst = load_instance(path)?;
        let j = parse_vertices(&a.vertices)?;
        (
            instance_bound_inputs(&inst, a.cluster_size, a.particles, &j)?,
            None,
        )
    } else {
        let bounds = if let Some(path) = &a.car_params {
            let params = CarParams::from_key_values(&fs::read_to_string(path)?)?;
            let bx = TruncationBox {
                phi: range(&a.phi_box, "phi-box")?,
                varphi: range(&a.varphi_box, "varphi-box")?,
                y: range(&a.y_box, "y-box")?,
            };
            car_truncated_bounds(&params, &bx, a.max_degree, &[a.max_region_size])?
        } else {
            explicit_bounds(a)?
        };
        let caveat = a.car_params.as_ref().map(|_| CAR_CAVEAT);
        let inputs = BoundInputs {
            bounds,
            quantities,
            num_particles: a.particles,
            card_j: a.card_j,
            min_boundary_distance: a.distance,
        };
        (inputs, caveat)
    };
    let report = BoundReport::compute(&inputs, caveat).map_err(|e| match e {
        Error::Domain(m) => Error::Config(m),
        other => other,
    })?;
    if a.csv {
        println!("{REPORT_CSV_HEADER}\n{}", report.to_csv_row());
    } else {
        print!("{}", report.to_text());
    }
    Ok(0)
}

fn oracle_check(a: &OracleArgs) -> vtmrf::Result<u8> {
    let inst = load_instance(&a.instance)?;
    inst.validate()?;
    let exact = run_exact(&inst, a.cluster_size)?;
    let layout = inst.layout()?;
    let regions = inst.regional_partition()?;
    let frames = inst.frames();
    let m = inst.num_vertices;
    let model = FiniteModel::new(inst)?;
    let mut config = FilterConfig::new(
        Algorithm::Spf,
        a.particles,
        a.cluster_size.unwrap_or(m),
        a.seed,
    );
    config.threads = a.threads;
    let mut filter = Filter::new(&model, &layout, &regions, config)?;
    let mut worst: f64 = 0.0;
    println!("t,vertex,local_tv");
    for (t, (frame, ex)) in frames.iter().zip(&exact).enumerate() {
        filter.step(frame)?;
        for v in 0..m {
            let j = [VertexId::from(v)];
            let approx = filter.ensemble().marginal(&j, |s| *s);
            let tv = law_distance(&approx, &ex.distribution.marginal(&j));
            worst = worst.max(tv);
            println!("{},{v},{tv}", t + 1);
        }
    }
    let pass = worst <= a.tolerance;
    eprintln!(
        "max local tv {worst} (tolerance {}): {}",
        a.tolerance,
        if pass { "pass" } else { "fail" }
    );
    Ok(if pass { 0 } else { EXIT_CHECK_FAILED })
}
