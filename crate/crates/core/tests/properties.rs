use greenlab::analysis::{
    annulus_average, corrected_embedding_constant, fit_power_decay, inverted_embedding_constant,
    lipschitz_ratio_check, lorentz_sandwich_check, lp_norm, weak_lorentz_norm, AnnulusSpec, Quantity,
};
use greenlab::coeff::{Family, PeriodicField};
use greenlab::config::ExperimentConfig;
use greenlab::mesh::{assemble, BoxGrid};
use greenlab::sparse::CsrMatrix;
use proptest::prelude::*;

/// Weak norm straight from its definition: for each level `t` taken from the
/// data, `t * (vol * #{|f| >= t})^(1/p)`.
fn weak_norm_oracle(values: &[f64], vol: f64, p: f64) -> f64 {
    let mut best: f64 = 0.0;
    for &t in values {
        let t = t.abs();
        let count = values.iter().filter(|v| v.abs() >= t).count();
        best = best.max(t * (count as f64 * vol).powf(1.0 / p));
    }
    best
}

fn field_strategy() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-10.0f64..10.0, 1..60)
}

proptest! {
    #[test]
    fn weak_norm_matches_definition(v in field_strategy(), vol in 1e-3f64..1.0, p in 1.0f64..5.0) {
        let fast = weak_lorentz_norm(&v, vol, p);
        let slow = weak_norm_oracle(&v, vol, p);
        prop_assert!((fast - slow).abs() <= 1e-12 * slow.max(1e-300));
    }

    #[test]
    fn weak_norm_is_below_strong_norm(v in field_strategy(), vol in 1e-3f64..1.0, p in 1.0f64..5.0) {
        prop_assert!(weak_lorentz_norm(&v, vol, p) <= lp_norm(&v, vol, p) * (1.0 + 1e-12));
    }

    #[test]
    fn corrected_lower_bound_holds(
        v in field_strategy(),
        vol in 1e-3f64..1.0,
        p in 1.1f64..5.0,
        frac in 0.01f64..1.0,
    ) {
        let beta = frac * (p - 1.0);
        let r = lorentz_sandwich_check(&v, vol, p, beta).unwrap();
        prop_assert!(r.lower_ok && r.upper_ok);
    }

    #[test]
    fn exact_power_law_is_recovered(e in -4.0f64..-0.2, c in 0.01f64..100.0) {
        let radii: Vec<f64> = (0..9).map(|k| 0.05 * 1.3f64.powi(k)).collect();
        let stats: Vec<f64> = radii.iter().map(|r| c * r.powf(e)).collect();
        let fit = fit_power_decay(Quantity::G, &radii, &stats, (0.0, 10.0)).unwrap();
        prop_assert!((fit.fitted_exponent - e).abs() < 1e-10);
        prop_assert!((fit.fitted_constant / c - 1.0).abs() < 1e-9);
    }

    #[test]
    fn gradient_ratio_is_scale_invariant(scale in 1e-3f64..1e3, a in 0.5f64..2.0) {
        let grid = BoxGrid::cube(2, 1.0, 65, [0.0; 3]).unwrap();
        let source = [0.0; 3];
        let values: Vec<f64> = (0..grid.num_nodes())
            .map(|i| {
                let x = grid.coordinate(i);
                1.0 / (a + x[0] * x[0] + x[1] * x[1])
            })
            .collect();
        let scaled: Vec<f64> = values.iter().map(|v| scale * v).collect();
        let x = grid.node_at(&[0.5, 0.0]).unwrap();
        let r = 0.25;
        let base = lipschitz_ratio_check(&values, &grid, &source, &[x], &[r]).unwrap();
        let other = lipschitz_ratio_check(&scaled, &grid, &source, &[x], &[r]).unwrap();
        prop_assert!((base.max_ratio - other.max_ratio).abs() <= 1e-10 * base.max_ratio);
    }

    #[test]
    fn annulus_bias_is_bounded(offset in 2.0f64..5.0, slope in -1.0f64..1.0, eta in 0.02f64..0.2) {
        let grid = BoxGrid::cube(2, 1.0, 65, [0.0; 3]).unwrap();
        let values: Vec<f64> = (0..grid.num_nodes())
            .map(|i| {
                let x = grid.coordinate(i);
                offset + slope * (x[0] * x[0] + x[1] * x[1]).sqrt()
            })
            .collect();
        let radii = vec![0.25, 0.4, 0.6];
        let spec = AnnulusSpec::new([0.0; 3], eta, radii.clone()).unwrap();
        let avg = annulus_average(&values, &grid, &spec).unwrap();
        for (r, m) in radii.iter().zip(avg) {
            prop_assert!((m - (offset + slope * r)).abs() <= 3.0 * eta * slope.abs() * r + 1e-12);
        }
    }

    #[test]
    fn transpose_is_an_involution(rows in prop::collection::vec(prop::collection::vec(-3i32..3, 6), 6)) {
        let dense: Vec<Vec<f64>> = rows.iter().map(|r| r.iter().map(|&v| v as f64).collect()).collect();
        let m = CsrMatrix::from_dense(&dense, false);
        let t = m.transpose();
        for i in 0..6 {
            for j in 0..6 {
                prop_assert_eq!(t.get(i, j), dense[j][i]);
            }
        }
        prop_assert_eq!(t.transpose().to_dense(), m.to_dense());
    }

    #[test]
    fn coefficients_are_periodic(
        fam in 0usize..4,
        dim in 2usize..4,
        x in prop::array::uniform3(-2.0f64..2.0),
        k in prop::array::uniform3(-3i32..4),
    ) {
        let f = PeriodicField::new(dim, Family::ALL[fam], &[]).unwrap();
        let shifted = [x[0] + k[0] as f64, x[1] + k[1] as f64, x[2] + k[2] as f64];
        let (a, b) = (f.evaluate(&x), f.evaluate(&shifted));
        for i in 0..dim {
            for j in 0..dim {
                prop_assert!((a[i][j] - b[i][j]).abs() <= 1e-12 * f.bound);
            }
        }
    }

    #[test]
    fn config_text_round_trips(
        fam in 0usize..4,
        dim in 2usize..4,
        half in 1usize..8,
        radius in 0.5f64..8.0,
        tol in 1e-3f64..0.5,
        seed in any::<u64>(),
    ) {
        let mut cfg = ExperimentConfig::default();
        cfg.set("field", Family::ALL[fam].tag()).unwrap();
        cfg.set("dim", &dim.to_string()).unwrap();
        cfg.set("n", &(8 * half + 1).to_string()).unwrap();
        cfg.set("radius", &radius.to_string()).unwrap();
        cfg.set("grad_tol", &tol.to_string()).unwrap();
        cfg.seed = seed;
        let back = ExperimentConfig::parse(&cfg.to_text()).unwrap();
        prop_assert_eq!(back, cfg);
    }
}

#[test]
fn inverted_constant_fails_for_constant_function() {
    let v = vec![1.0; 50];
    for (p, beta) in [(2.0, 0.5), (3.0, 2.0), (1.5, 0.25)] {
        let r = lorentz_sandwich_check(&v, 0.02, p, beta).unwrap();
        assert!(r.lower_ok);
        assert!(!r.inverted_lower_ok);
        assert!(inverted_embedding_constant(p, beta, 1.0) > corrected_embedding_constant(p, beta, 1.0));
    }
}

#[test]
fn symmetric_fields_assemble_symmetric_matrices() {
    for dim in [2, 3] {
        let n = if dim == 2 { 17 } else { 9 };
        let grid = BoxGrid::cube(dim, 1.0, n, [0.0; 3]).unwrap();
        for fam in [Family::Identity, Family::ScalarTrig, Family::DiagAniso] {
            let k = assemble(&PeriodicField::new(dim, fam, &[]).unwrap(), &grid).unwrap();
            let t = k.transpose();
            for i in 0..k.n_rows() {
                let (cols, vals) = k.row(i);
                for (&j, &v) in cols.iter().zip(vals) {
                    assert!((t.get(i, j) - v).abs() <= 1e-14 * v.abs().max(1.0));
                }
            }
        }
        let skew = assemble(&PeriodicField::new(dim, Family::NonsymSkew, &[]).unwrap(), &grid).unwrap();
        assert_ne!(skew.transpose().to_dense(), skew.to_dense());
    }
}
