use std::path::Path;

use proptest::prelude::*;
use vtmrf::bench::{read_results, write_results, Degenerate, ResultRow};
use vtmrf::bounds::{bias_bound, variance_bound, BoundInputs};
use vtmrf::filter::{
    effective_sample_size, pf_loglik_increment, sample_from_product, spf_loglik_increment,
    ParticleEnsemble, Resampling,
};
use vtmrf::graph::{build_cluster_partition, neighborhood, parse_adjacency, GraphQuantities};
use vtmrf::model::{Configuration, DensityBounds};
use vtmrf::oracle::{run_exact, FiniteInstance, FrameSpec};
use vtmrf::{Algorithm, Identifier, LoglikMethod, RngPolicy, SpatialLayout, VertexId};

fn adjacency(max: usize) -> impl Strategy<Value = Vec<Vec<u8>>> {
    (1..=max).prop_flat_map(|m| {
        proptest::collection::vec(any::<bool>(), m * m).prop_map(move |bits| {
            let mut a = vec![vec![0u8; m]; m];
            for i in 0..m {
                for j in (i + 1)..m {
                    let e = u8::from(bits[i * m + j]);
                    a[i][j] = e;
                    a[j][i] = e;
                }
            }
            a
        })
    })
}

fn to_text(a: &[Vec<u8>]) -> String {
    a.iter()
        .map(|r| {
            r.iter()
                .map(|x| x.to_string())
                .collect::<Vec<_>>()
                .join(",")
                + "\n"
        })
        .collect()
}

fn identifier(m: usize) -> impl Strategy<Value = Identifier> {
    proptest::collection::vec(any::<bool>(), m).prop_map(|bits| {
        Identifier::new(
            bits.iter()
                .enumerate()
                .filter(|(_, b)| **b)
                .map(|(i, _)| VertexId::from(i)),
        )
    })
}

fn normalised(n: usize) -> impl Strategy<Value = Vec<f64>> {
    proptest::collection::vec(0.01f64..1.0, n).prop_map(|w| {
        let s: f64 = w.iter().sum();
        w.into_iter().map(|x| x / s).collect()
    })
}

proptest! {
    #[test]
    fn adjacency_text_round_trips(a in adjacency(9)) {
        let layout = parse_adjacency(&to_text(&a), Path::new("a.csv")).unwrap();
        prop_assert_eq!(layout.to_csv(), to_text(&a));
        let edges: usize = a.iter().flatten().map(|&x| x as usize).sum::<usize>() / 2;
        prop_assert_eq!(layout.edge_count(), edges);
    }

    #[test]
    fn neighborhoods_are_symmetric_and_active(a in adjacency(8), bits in proptest::collection::vec(any::<bool>(), 8), r in 1u32..3) {
        let m = a.len();
        let layout = parse_adjacency(&to_text(&a), Path::new("a.csv")).unwrap();
        let k = Identifier::new((0..m).filter(|&i| bits[i]).map(VertexId::from));
        for v in k.iter() {
            let nv = neighborhood(&layout, &k, v, r).unwrap();
            prop_assert!(!nv.contains(&v));
            for &w in &nv {
                prop_assert!(k.contains(w));
                prop_assert!(neighborhood(&layout, &k, w, r).unwrap().contains(&v));
            }
        }
    }

    #[test]
    fn identifier_set_laws(a in identifier(12), b in identifier(12)) {
        let i = Identifier::new(a.intersect(b.as_slice()));
        let u = a.union(&b);
        prop_assert!(i.is_subset_of(&a) && i.is_subset_of(&b));
        prop_assert!(a.is_subset_of(&u) && b.is_subset_of(&u));
        prop_assert_eq!(i.len() + u.len(), a.len() + b.len());
    }

    #[test]
    fn cluster_partitions_tile_the_identifier(k in identifier(20), c in 1usize..6) {
        let p = build_cluster_partition(&k, c);
        let mut seen: Vec<VertexId> = p.clusters().iter().flatten().copied().collect();
        prop_assert!(p.clusters().iter().all(|b| !b.is_empty() && b.len() <= c));
        seen.sort();
        prop_assert_eq!(seen.as_slice(), k.as_slice());
        for (j, b) in p.clusters().iter().enumerate() {
            for &v in b {
                prop_assert_eq!(p.cluster_of(v), Some(j));
            }
        }
    }

    #[test]
    fn ess_lies_between_one_and_n(w in (1usize..50).prop_flat_map(normalised)) {
        let e = effective_sample_size(&w);
        prop_assert!(e >= 1.0 - 1e-9 && e <= w.len() as f64 + 1e-9);
    }

    #[test]
    fn loglik_increments_shift_with_constants(
        lw in proptest::collection::vec(proptest::collection::vec(-20.0f64..5.0, 7), 1..4),
        shift in -50.0f64..50.0,
    ) {
        let base_spf = spf_loglik_increment(&lw).unwrap();
        let base_pf = pf_loglik_increment(&lw).unwrap();
        let mut moved = lw.clone();
        moved[0].iter_mut().for_each(|x| *x += shift);
        prop_assert!((spf_loglik_increment(&moved).unwrap() - base_spf - shift).abs() < 1e-9);
        prop_assert!((pf_loglik_increment(&moved).unwrap() - base_pf - shift).abs() < 1e-9);
        if lw.len() == 1 {
            prop_assert!((base_spf - base_pf).abs() < 1e-12);
        }
    }

    #[test]
    fn product_sampling_only_splices_existing_blocks(
        w0 in normalised(5), w1 in normalised(5), seed in any::<u64>(), systematic in any::<bool>(),
    ) {
        let particles: Vec<Configuration<usize>> = (0..5)
            .map(|i| Configuration::from_pairs(4, (0..4).filter(|v| (i + v) % 3 != 0).map(|v| (VertexId::from(v), 10 * i + v))).unwrap())
            .collect();
        let blocks = vtmrf::ClusterPartition::from_clusters(vec![vec![VertexId(0), VertexId(1)], vec![VertexId(2), VertexId(3)]], 2);
        let e = ParticleEnsemble::new(particles.clone(), vec![w0, w1], blocks, 0).unwrap();
        let scheme = if systematic { Resampling::Systematic } else { Resampling::Multinomial };
        for child in sample_from_product(&e, 1, &RngPolicy::new(seed), scheme) {
            for block in [[0usize, 1], [2, 3]] {
                let got: Vec<Option<usize>> = block.iter().map(|&v| child.get(VertexId::from(v)).copied()).collect();
                prop_assert!(particles.iter().any(|p| block.iter().map(|&v| p.get(VertexId::from(v)).copied()).collect::<Vec<_>>() == got));
            }
        }
        let law = e.marginal(&[VertexId(1), VertexId(2)], |s| *s);
        prop_assert!((law.values().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn bias_decreases_in_beta_and_variance_in_n(
        ratio in 0.5f64..1.0, b1 in 0.1f64..3.0, gap in 0.01f64..2.0, d in 0.0f64..4.0, n in 1usize..10_000,
    ) {
        let bounds = DensityBounds { eps_d: ratio, eps_u: 1.0, ..DensityBounds::flat(1.0, 0.9, 0.8, 0.7) };
        let q = GraphQuantities { r: 1, max_cluster_size: 1, max_degree: 2, max_region_size: 1, max_region_diameter: 1.0 };
        let inputs = BoundInputs { bounds, quantities: q, num_particles: n, card_j: 1, min_boundary_distance: d };
        let lo = bias_bound(&inputs, b1 + gap).unwrap();
        let hi = bias_bound(&inputs, b1).unwrap();
        prop_assert!(lo >= 0.0 && lo <= hi);
        let v1 = variance_bound(&inputs, b1).unwrap().value();
        let v4 = variance_bound(&BoundInputs { num_particles: 4 * n, ..inputs.clone() }, b1).unwrap().value();
        prop_assert!((v4 - v1 / 2.0).abs() <= 1e-9 * v1);
    }

    #[test]
    fn result_rows_round_trip(
        rows in proptest::collection::vec((1usize..300, -1e6f64..1e6, any::<bool>(), any::<bool>(), 0u64..1000, 0u8..3), 0..12),
    ) {
        let rows: Vec<ResultRow> = rows
            .into_iter()
            .map(|(dim, total, a, m, seed, deg)| ResultRow {
                scenario: "p".into(),
                dim,
                algorithm: if a { Algorithm::Spf } else { Algorithm::Pf },
                loglik_method: if m { LoglikMethod::Spf } else { LoglikMethod::Pf },
                total_loglik: total,
                scaled_loglik: total / dim as f64,
                runtime_ms: seed * 3,
                seed,
                degenerate: [Degenerate::No, Degenerate::Yes, Degenerate::Budget][deg as usize],
            })
            .collect();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.csv");
        write_results(&rows, &path).unwrap();
        let back = read_results(&path).unwrap();
        prop_assert_eq!(back, rows);
    }
}

fn random_instance() -> impl Strategy<Value = FiniteInstance> {
    let m = 3usize;
    let table = |n: usize| {
        proptest::collection::vec(0.05f64..1.0, n).prop_map(|v| {
            let s: f64 = v.iter().sum();
            v.into_iter().map(|x| x / s).collect::<Vec<f64>>()
        })
    };
    (
        proptest::collection::vec(table(2), m),
        proptest::collection::vec(proptest::collection::vec(table(2), 2), m),
        proptest::collection::vec(proptest::collection::vec(table(2), 2), m),
        proptest::collection::vec(0.1f64..0.9, 2 * m),
        proptest::collection::vec(
            (identifier(m), proptest::collection::vec(-1i64..2, m)),
            1..4,
        ),
        0.5f64..2.0,
    )
        .prop_map(
            move |(enter, stay, emission, ps, frames, j)| FiniteInstance {
                num_vertices: m,
                num_states: 2,
                num_obs: 2,
                r: 1,
                adjacency: vec![vec![0, 1, 1], vec![1, 0, 0], vec![1, 0, 0]],
                regions: None,
                initial_identifier: vec![0, 1, 2],
                initial: enter.clone(),
                enter,
                stay,
                interaction: vec![vec![j, 1.0], vec![1.0, j]],
                emission,
                p_enter: ps[..m].to_vec(),
                p_stay: ps[m..].to_vec(),
                observations: frames
                    .into_iter()
                    .map(|(k, values)| FrameSpec {
                        identifier: Some(k.iter().map(|v| v.0).collect()),
                        values,
                    })
                    .collect(),
            },
        )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn exact_recursions_stay_normalised(inst in random_instance()) {
        inst.validate().unwrap();
        let exact = run_exact(&inst, None).unwrap();
        let whole = run_exact(&inst, Some(3)).unwrap();
        let blocked = run_exact(&inst, Some(1)).unwrap();
        for ((a, b), c) in exact.iter().zip(&whole).zip(&blocked) {
            prop_assert!((a.distribution.total() - 1.0).abs() < 1e-12);
            prop_assert!((c.distribution.total() - 1.0).abs() < 1e-12);
            for (p, q) in a.distribution.probs().iter().zip(b.distribution.probs()) {
                prop_assert!((p - q).abs() < 1e-12);
            }
            prop_assert!(a.log_identifier <= 0.0);
        }
    }
}

#[test]
fn complete_layout_neighbourhoods_are_everyone_else() {
    let layout = SpatialLayout::complete(5);
    let k = layout.universe();
    assert_eq!(neighborhood(&layout, &k, VertexId(2), 1).unwrap().len(), 4);
}
