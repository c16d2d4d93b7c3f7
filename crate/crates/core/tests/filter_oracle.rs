use std::path::PathBuf;
use std::time::Duration;

use vtmrf::error::Error;
use vtmrf::filter::{sample_from_product, Filter, ParticleEnsemble, Resampling};
use vtmrf::model::{Configuration, HstmrfModel, Neighbors, VertexContext};
use vtmrf::oracle::{
    exact_marginal_loglik, law_distance, load_instance, run_exact, FiniteInstance, FiniteModel,
};
use vtmrf::{
    run_filter, Algorithm, ClusterPartition, FilterConfig, Identifier, LoglikMethod, RngPolicy,
    StreamRng, VertexId,
};

fn fixture(name: &str) -> FiniteInstance {
    load_instance(
        PathBuf::from(env!("CARGO_MANIFEST_DIR"))
            .join("tests/fixtures")
            .join(name),
    )
    .unwrap()
}

fn run(inst: &FiniteInstance, config: &FilterConfig) -> vtmrf::Result<vtmrf::FilterOutput> {
    let model = FiniteModel::new(inst.clone())?;
    run_filter(
        &model,
        &inst.layout()?,
        &inst.regional_partition()?,
        &inst.frames(),
        config,
    )
}

#[test]
fn pf_loglik_matches_exact_on_toy() {
    let inst = fixture("toy3.toml");
    let exact = exact_marginal_loglik(&inst).unwrap();
    let out = run(&inst, &FilterConfig::new(Algorithm::Pf, 20_000, 3, 2)).unwrap();
    assert!(
        (out.total(LoglikMethod::Pf) - exact).abs() < 0.05,
        "{} vs {exact}",
        out.total(LoglikMethod::Pf)
    );
    let out = run(&inst, &FilterConfig::new(Algorithm::Spf, 20_000, 3, 2)).unwrap();
    assert!((out.total(LoglikMethod::Spf) - exact).abs() < 0.05);
}

#[test]
fn blocked_filter_tracks_the_cluster_filter() {
    let inst = fixture("near_flat_path4.toml");
    let exact = run_exact(&inst, Some(2)).unwrap();
    let model = FiniteModel::new(inst.clone()).unwrap();
    let (layout, regions) = (inst.layout().unwrap(), inst.regional_partition().unwrap());
    let mut filter = Filter::new(
        &model,
        &layout,
        &regions,
        FilterConfig::new(Algorithm::Spf, 40_000, 2, 5),
    )
    .unwrap();
    for (frame, ex) in inst.frames().iter().zip(&exact) {
        filter.step(frame).unwrap();
        for v in 0..inst.num_vertices {
            let j = [VertexId::from(v)];
            let d = law_distance(
                &filter.ensemble().marginal(&j, |s| *s),
                &ex.distribution.marginal(&j),
            );
            assert!(d < 0.03, "vertex {v}: {d}");
        }
    }
}

#[test]
fn latent_identifiers_track_the_exact_filter() {
    let mut inst = fixture("toy3.toml");
    for f in &mut inst.observations {
        f.identifier = None;
    }
    let exact = run_exact(&inst, None).unwrap();
    let model = FiniteModel::new(inst.clone()).unwrap();
    let (layout, regions) = (inst.layout().unwrap(), inst.regional_partition().unwrap());
    let mut filter = Filter::new(
        &model,
        &layout,
        &regions,
        FilterConfig::new(Algorithm::Spf, 50_000, 3, 8),
    )
    .unwrap();
    for (frame, ex) in inst.frames().iter().zip(&exact) {
        filter.step(frame).unwrap();
        for v in 0..inst.num_vertices {
            let j = [VertexId::from(v)];
            let d = law_distance(
                &filter.ensemble().marginal(&j, |s| *s),
                &ex.distribution.marginal(&j),
            );
            assert!(d < 0.03, "vertex {v}: {d}");
        }
    }
    let out = run(&inst, &FilterConfig::new(Algorithm::Pf, 50_000, 3, 8)).unwrap();
    let z: f64 = exact.iter().map(|s| s.log_normalizer).sum();
    assert!((out.total(LoglikMethod::Pf) - z).abs() < 0.05);
}

#[test]
fn worker_count_does_not_change_results() {
    let inst = fixture("toy3.toml");
    let mut config = FilterConfig::new(Algorithm::Spf, 3_000, 2, 17);
    config.threads = Some(1);
    let a = run(&inst, &config).unwrap();
    config.threads = Some(3);
    let b = run(&inst, &config).unwrap();
    assert_eq!(a.steps_csv(), b.steps_csv());
    assert_eq!(a.total_spf_loglik.to_bits(), b.total_spf_loglik.to_bits());
}

#[test]
fn exhausted_budget_stops_the_run() {
    let inst = fixture("toy3.toml");
    let mut config = FilterConfig::new(Algorithm::Spf, 100, 2, 1);
    config.budget = Some(Duration::ZERO);
    assert!(matches!(
        run(&inst, &config),
        Err(Error::Budget { time: 1 })
    ));
}

fn ensemble(weights: Vec<Vec<f64>>, n: usize) -> ParticleEnsemble<usize> {
    // particle i holds state 10 * i + v at vertex v
    let particles = (0..n)
        .map(|i| {
            Configuration::from_pairs(4, (0..4).map(|v| (VertexId::from(v), 10 * i + v))).unwrap()
        })
        .collect();
    let blocks = ClusterPartition::from_clusters(
        vec![
            vec![VertexId(0), VertexId(1)],
            vec![VertexId(2), VertexId(3)],
        ],
        2,
    );
    ParticleEnsemble::new(particles, weights, blocks, 0).unwrap()
}

#[test]
fn product_sampling_splices_blocks_from_their_own_ancestors() {
    let e = ensemble(vec![vec![1.0, 0.0, 0.0], vec![0.0, 0.0, 1.0]], 3);
    for scheme in [Resampling::Multinomial, Resampling::Systematic] {
        for p in sample_from_product(&e, 1, &RngPolicy::new(3), scheme) {
            let states: Vec<usize> = p.iter().map(|(_, s)| *s).collect();
            assert_eq!(states, vec![0, 1, 22, 23]);
        }
    }
}

#[test]
fn product_sampling_frequencies_follow_block_weights() {
    let w0 = vec![0.1, 0.2, 0.3, 0.4];
    let w1 = vec![0.7, 0.1, 0.1, 0.1];
    let e = ensemble(vec![w0.clone(), w1.clone()], 4);
    let mut counts = [[0usize; 4]; 2];
    let draws = 40;
    for t in 0..draws {
        for p in sample_from_product(&e, t, &RngPolicy::new(99), Resampling::Multinomial) {
            counts[0][p.get(VertexId(0)).unwrap() / 10] += 1;
            counts[1][p.get(VertexId(2)).unwrap() / 10] += 1;
            // both vertices of a block come from the same ancestor
            assert_eq!(
                p.get(VertexId(1)).unwrap() / 10,
                p.get(VertexId(0)).unwrap() / 10
            );
            assert_eq!(
                p.get(VertexId(3)).unwrap() / 10,
                p.get(VertexId(2)).unwrap() / 10
            );
        }
    }
    let total = (draws * 4) as f64;
    for (b, w) in [w0, w1].iter().enumerate() {
        for (i, &p) in w.iter().enumerate() {
            let freq = counts[b][i] as f64 / total;
            let sd = (p * (1.0 - p) / total).sqrt();
            assert!(
                (freq - p).abs() < 4.0 * sd,
                "block {b} ancestor {i}: {freq} vs {p}"
            );
        }
    }
}

/// The toy model with an observation density that vanishes everywhere.
struct Blind(FiniteModel);

impl HstmrfModel for Blind {
    type State = usize;
    type Obs = usize;

    fn universe(&self) -> usize {
        self.0.universe()
    }
    fn sample_initial(&self, rng: &mut StreamRng) -> Configuration<usize> {
        self.0.sample_initial(rng)
    }
    fn log_region_identifier(
        &self,
        t: usize,
        r: &[VertexId],
        k: &Identifier,
        prev: &Configuration<usize>,
    ) -> f64 {
        self.0.log_region_identifier(t, r, k, prev)
    }
    fn sample_region_identifier(
        &self,
        t: usize,
        r: &[VertexId],
        prev: &Configuration<usize>,
        rng: &mut StreamRng,
    ) -> Vec<VertexId> {
        self.0.sample_region_identifier(t, r, prev, rng)
    }
    fn log_transition(&self, ctx: &VertexContext<'_>, x: &usize, a: Option<&usize>) -> f64 {
        self.0.log_transition(ctx, x, a)
    }
    fn sample_transition(
        &self,
        ctx: &VertexContext<'_>,
        a: Option<&usize>,
        rng: &mut StreamRng,
    ) -> usize {
        self.0.sample_transition(ctx, a, rng)
    }
    fn log_interaction(&self, ctx: &VertexContext<'_>, x: &usize, nb: Neighbors<'_, usize>) -> f64 {
        self.0.log_interaction(ctx, x, nb)
    }
    fn log_observation(&self, _: &VertexContext<'_>, _: &usize, _: &usize) -> f64 {
        f64::NEG_INFINITY
    }
    fn summary(&self, x: &usize) -> f64 {
        *x as f64
    }
}

#[test]
fn vanishing_weights_raise_degeneracy() {
    let inst = fixture("toy3.toml");
    let model = Blind(FiniteModel::new(inst.clone()).unwrap());
    for alg in [Algorithm::Spf, Algorithm::Pf] {
        let r = run_filter(
            &model,
            &inst.layout().unwrap(),
            &inst.regional_partition().unwrap(),
            &inst.frames(),
            &FilterConfig::new(alg, 50, 2, 1),
        );
        assert!(
            matches!(r, Err(Error::Degenerate { time: 1, .. })),
            "{alg}: {r:?}"
        );
    }
}
