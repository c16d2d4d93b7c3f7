use std::path::PathBuf;

use approx::assert_abs_diff_eq;
use vtmrf::bounds::{
    beta, beta_from_lhs, bias_bound, car_truncated_bounds, check_assumption,
    empirical_bounds_for_instance, instance_bound_inputs, total_error_bound, variance_bound,
    BoundInputs, BoundReport, BoundValue, TruncationBox, BETA_CAP,
};
use vtmrf::car::{CarParams, ObsModel};
use vtmrf::graph::GraphQuantities;
use vtmrf::model::DensityBounds;
use vtmrf::oracle::{load_instance, local_total_variation, run_exact, FiniteInstance};
use vtmrf::VertexId;

fn quantities(cluster: usize) -> GraphQuantities {
    GraphQuantities {
        r: 1,
        max_cluster_size: cluster,
        max_degree: 2,
        max_region_size: 1,
        max_region_diameter: 1.0,
    }
}

fn inputs(bounds: DensityBounds, cluster: usize, n: usize, d: f64) -> BoundInputs {
    BoundInputs {
        bounds,
        quantities: quantities(cluster),
        num_particles: n,
        card_j: 1,
        min_boundary_distance: d,
    }
}

const BETA: f64 = 0.85744;

#[test]
fn worked_bias_example() {
    let b = DensityBounds {
        eps_d: 0.99,
        eps_u: 1.0,
        ..DensityBounds::flat(1.0, 1.0, 1.0, 1.0)
    };
    let e = (-BETA).exp();
    let expected = 8.0 * e / (1.0 - e) * 0.01 * e;
    let got = bias_bound(&inputs(b, 1, 100, 1.0), BETA).unwrap();
    assert_abs_diff_eq!(got, expected, epsilon = 1e-12);
    assert_abs_diff_eq!(got, 0.025_008_67, epsilon = 1e-8);
}

#[test]
fn worked_variance_example() {
    let flat = DensityBounds::flat(1.0, 1.0, 1.0, 1.0);
    let got = variance_bound(&inputs(flat, 1, 64, 0.0), BETA)
        .unwrap()
        .value();
    let expected = 8.0 / (1.0 - (-BETA).exp());
    assert_abs_diff_eq!(got, expected, epsilon = 1e-10);
    assert_abs_diff_eq!(got, 13.894_84, epsilon = 1e-5);
    let total = total_error_bound(&inputs(flat, 1, 64, 0.0), BETA)
        .unwrap()
        .value();
    assert_abs_diff_eq!(total, got, epsilon = 1e-12);
}

#[test]
fn scaling_rules() {
    let b = DensityBounds {
        eps_d: 0.9,
        eps_u: 1.0,
        ..DensityBounds::flat(1.0, 0.8, 0.7, 0.6)
    };
    let mut i = inputs(b, 1, 100, 2.0);
    let v1 = variance_bound(&i, 2.0).unwrap().value();
    let b1 = bias_bound(&i, 2.0).unwrap();
    i.num_particles = 400;
    assert_abs_diff_eq!(
        variance_bound(&i, 2.0).unwrap().value(),
        v1 / 2.0,
        epsilon = 1e-12
    );
    i.card_j = 2;
    assert_abs_diff_eq!(bias_bound(&i, 2.0).unwrap(), 2.0 * b1, epsilon = 1e-15);
    i.num_particles = usize::MAX;
    let t = total_error_bound(&i, 2.0).unwrap().value();
    assert!(t - bias_bound(&i, 2.0).unwrap() < 1e-6);
}

#[test]
fn beta_edge_cases() {
    let flat = DensityBounds::flat(0.3, 1.5, 0.2, 0.4);
    assert_eq!(beta(&flat, &quantities(2)).unwrap(), BETA_CAP);
    let bad = DensityBounds {
        eps_d: 0.5,
        eps_u: 1.0,
        ..flat
    };
    assert!(beta(&bad, &quantities(2)).is_err());
    assert_abs_diff_eq!(
        beta_from_lhs(0.99, &quantities(1)),
        -0.18f64.ln() / 2.0,
        epsilon = 1e-12
    );
    assert!(bias_bound(&inputs(flat, 1, 1, 0.0), 0.0).is_err());
}

#[test]
fn assumption_examples() {
    let b = DensityBounds {
        eps_d: 0.99,
        eps_u: 1.0,
        ..DensityBounds::flat(1.0, 1.0, 1.0, 1.0)
    };
    let r = check_assumption(&b, &quantities(2)).unwrap();
    assert!(r.holds);
    assert_abs_diff_eq!(r.rhs, 1.0 - 1.0 / 36.0, epsilon = 1e-15);
    let b = DensityBounds { eps_d: 0.5, ..b };
    assert!(!check_assumption(&b, &quantities(2)).unwrap().holds);
    let zero = DensityBounds { gamma_d: 0.0, ..b };
    assert!(check_assumption(&zero, &quantities(2)).is_err());
}

#[test]
fn vacuous_variance_is_reported() {
    let flat = DensityBounds::flat(1.0, 1.0, 1.0, 1.0);
    let i = inputs(flat, 3, 10, 0.0);
    assert_eq!(variance_bound(&i, 3f64.ln()).unwrap(), BoundValue::Vacuous);
    assert_eq!(total_error_bound(&i, 1.0).unwrap(), BoundValue::Vacuous);
    assert!(matches!(
        variance_bound(&i, 1.2).unwrap(),
        BoundValue::Finite(_)
    ));
}

fn fixture(name: &str) -> FiniteInstance {
    load_instance(
        PathBuf::from(env!("CARGO_MANIFEST_DIR"))
            .join("tests/fixtures")
            .join(name),
    )
    .unwrap()
}

#[test]
fn instance_bounds_match_a_direct_table_scan() {
    let inst = fixture("toy3.toml");
    let b = empirical_bounds_for_instance(&inst).unwrap();
    let scan = |xs: Vec<f64>| {
        xs.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), &x| {
            (lo.min(x), hi.max(x))
        })
    };
    let eps: Vec<f64> = inst
        .enter
        .iter()
        .flatten()
        .chain(inst.stay.iter().flatten().flatten())
        .copied()
        .collect();
    assert_eq!((b.eps_d, b.eps_u), scan(eps));
    assert_eq!(
        (b.gamma_d, b.gamma_u),
        scan(inst.emission.iter().flatten().flatten().copied().collect())
    );
    let kappa: Vec<f64> = inst
        .p_enter
        .iter()
        .chain(&inst.p_stay)
        .flat_map(|&p| [p, 1.0 - p])
        .collect();
    assert_eq!((b.kappa_d, b.kappa_u), scan(kappa));
    // path of 3: the middle vertex sees up to two neighbours, the ends one
    let a = &inst.interaction;
    let mut epsp = vec![1.0];
    for x in 0..2 {
        for y in 0..2 {
            epsp.push(a[x][y]);
            for z in 0..2 {
                epsp.push(a[x][y] * a[x][z]);
            }
        }
    }
    let (lo, hi) = scan(epsp);
    assert_abs_diff_eq!(b.epsp_d, lo, epsilon = 1e-15);
    assert_abs_diff_eq!(b.epsp_u, hi, epsilon = 1e-15);
}

#[test]
fn cluster_filter_error_stays_below_the_bias_bound() {
    for (name, c) in [
        ("near_flat_path3.toml", 2),
        ("near_flat_cycle4.toml", 2),
        ("near_flat_star4.toml", 1),
    ] {
        let inst = fixture(name);
        let exact = run_exact(&inst, None).unwrap();
        let blocked = run_exact(&inst, Some(c)).unwrap();
        let mut any_positive = false;
        for v in 0..inst.num_vertices {
            let j = [VertexId::from(v)];
            let i = instance_bound_inputs(&inst, c, 100, &j).unwrap();
            let report = BoundReport::compute(&i, None).unwrap();
            assert!(report.assumption.holds, "{name}");
            let tv = local_total_variation(
                &blocked.last().unwrap().distribution,
                &exact.last().unwrap().distribution,
                &j,
            );
            any_positive |= tv > 0.0;
            assert!(
                tv < report.bias.unwrap(),
                "{name} vertex {v}: {tv} vs {:?}",
                report.bias
            );
        }
        assert!(any_positive, "{name}: blocking had no effect");
    }
}

#[test]
fn car_truncation_bounds_are_ordered_and_carry_the_caveat() {
    let params = CarParams {
        rho_spatial: 0.5,
        rho_temporal: 0.6,
        sigma2: 0.1,
        sigma2_tilde: vec![1.5; 4],
        nu2: 1.0,
        obs_model: ObsModel::Normal,
        p_enter: 0.9,
        p_stay: 0.9,
    };
    let bx = TruncationBox {
        phi: (-1.0, 1.0),
        varphi: (-1.0, 1.0),
        y: (-2.0, 2.0),
    };
    let b = car_truncated_bounds(&params, &bx, 3, &[1]).unwrap();
    b.validate().unwrap();
    assert!(
        b.eps_d <= b.eps_u
            && b.epsp_d <= b.epsp_u
            && b.gamma_d <= b.gamma_u
            && b.kappa_d <= b.kappa_u
    );
    assert_abs_diff_eq!(b.kappa_d, 0.1, epsilon = 1e-12);
    assert_abs_diff_eq!(b.kappa_u, 0.9, epsilon = 1e-12);
    let report =
        BoundReport::compute(&inputs(b, 2, 100, 1.0), Some(vtmrf::bounds::CAR_CAVEAT)).unwrap();
    assert!(report.to_text().contains("caveat"));
    let bad = TruncationBox {
        phi: (1.0, -1.0),
        ..bx
    };
    assert!(car_truncated_bounds(&params, &bad, 3, &[1]).is_err());
}
