use landscape_core::datagen::*;
use landscape_core::minimizers::*;
use landscape_core::networks::*;
use landscape_core::numkit::*;

#[test]
fn rectangular_data_reaches_half_the_least_squares_value() {
    for seed in 0..20 {
        let mut rng = seeded_rng(seed);
        let data = gen_data(3, 7, &mut rng, DEFAULT_GAP_REL, 100).unwrap();
        let summary = spectral_summary(&data).unwrap();
        // brute least squares: M = Y X^T (X X^T)^{-1}
        let m = &(data.y() * &data.x().transpose()) * &inverse(&data.sigma_xx()).unwrap();
        let resid = (&m * data.x()).try_sub(data.y()).unwrap();
        let fro_sq = fro_norm(&resid).powi(2);
        assert!((fro_sq - summary.optimal_value).abs() < 1e-9 * (1.0 + fro_sq));
        for l in 1..=3 {
            let c = linear_minimizer(&data, l, &Transforms::random(), &mut rng).unwrap();
            assert!((c.achieved_loss - 0.5 * fro_sq).abs() < 1e-9 * (1.0 + fro_sq), "seed {seed} l {l}");
            assert!(c.grad_norm < 1e-8);
            assert!(c.holds());
        }
    }
}

#[test]
fn square_data_certificates_hold_for_every_family() {
    for seed in 0..10 {
        let mut rng = seeded_rng(50 + seed);
        for d in 2..=4 {
            let data = gen_data(d, d, &mut rng, DEFAULT_GAP_REL, 100).unwrap();
            assert!(optimal_value(&data).unwrap().abs() < 1e-8);
            for l in 1..=3 {
                let c = linear_minimizer(&data, l, &Transforms::random(), &mut rng).unwrap();
                assert!(c.holds() && c.rank_profile.iter().all(|b| b.rank == d));
                for r in 1..=2 {
                    let c = residual_minimizer(&data, l, r, &Transforms::random(), &Transforms::random(), &mut rng)
                        .unwrap();
                    assert!(c.holds(), "residual d={d} l={l} r={r}: {c:?}");
                }
            }
            let c = nonlinear_minimizer(&data, Activation::new(0.25).unwrap(), &Transforms::random(), &mut rng)
                .unwrap();
            assert!(c.holds());
        }
    }
}

#[test]
fn random_transforms_leave_the_end_to_end_map_fixed() {
    for seed in 0..20 {
        let mut rng = seeded_rng(seed);
        let data = gen_data(3, 5, &mut rng, DEFAULT_GAP_REL, 100).unwrap();
        let a = linear_minimizer(&data, 3, &Transforms::random(), &mut rng).unwrap();
        let b = linear_minimizer(&data, 3, &Transforms::random(), &mut rng).unwrap();
        let ea = a.linear().unwrap().end_to_end();
        let eb = b.linear().unwrap().end_to_end();
        assert!(ea.try_sub(&eb).unwrap().max_abs() < 1e-9);
        assert!(ea.try_sub(&regression_map(&data).unwrap()).unwrap().max_abs() < 1e-9);
        let cs: Vec<Matrix> = (0..2).map(|_| random_invertible(3, 5.0, &mut rng).unwrap()).collect();
        let moved = apply_equivalence(a.linear().unwrap(), &cs).unwrap();
        assert!(moved.end_to_end().try_sub(&ea).unwrap().max_abs() < 1e-9);
    }
}

#[test]
fn given_transforms_are_used_verbatim() {
    let data = fixture_f1();
    let mut rng = seeded_rng(0);
    let c2 = Matrix::from_rows(&[[2.0, 0.0], [0.0, 1.0]]);
    let cert = linear_minimizer(&data, 2, &Transforms::Given(vec![c2.clone()]), &mut rng).unwrap();
    let layers = cert.linear().unwrap().layers();
    assert_eq!(layers[1], c2);
    assert_eq!(layers[0], Matrix::from_rows(&[[1.0, 0.0], [0.0, 1.0]]));
    assert!(linear_minimizer(&data, 2, &Transforms::Given(vec![]), &mut rng).is_err());
}

#[test]
fn residual_units_reproduce_the_linear_layers() {
    let mut rng = seeded_rng(8);
    let data = gen_data(3, 3, &mut rng, DEFAULT_GAP_REL, 100).unwrap();
    let c = residual_minimizer(&data, 2, 3, &Transforms::random(), &Transforms::random(), &mut rng).unwrap();
    let res = c.residual().unwrap();
    let lin = res.as_linear();
    assert!(lin.end_to_end().try_sub(&regression_map(&data).unwrap()).unwrap().max_abs() < 1e-9);
    assert_eq!(c.rank_profile.len(), 2 * 3 + 2);
}

#[test]
fn nonlinear_minimizer_inverts_the_activation() {
    let mut rng = seeded_rng(4);
    let data = gen_data(3, 3, &mut rng, DEFAULT_GAP_REL, 100).unwrap();
    let act = Activation::new(0.3).unwrap();
    let c = nonlinear_minimizer(&data, act, &Transforms::random(), &mut rng).unwrap();
    let n = c.nonlinear().unwrap();
    let out = &n.w2 * &n.hidden(&data).unwrap();
    assert!(out.try_sub(data.y()).unwrap().max_abs() < 1e-9);
}

#[test]
fn rectangular_data_rejected_where_square_is_required() {
    let mut rng = seeded_rng(1);
    let data = gen_data(2, 4, &mut rng, DEFAULT_GAP_REL, 100).unwrap();
    assert!(residual_minimizer(&data, 2, 1, &Transforms::Identity, &Transforms::Identity, &mut rng).is_err());
    assert!(nonlinear_minimizer(&data, Activation::new(0.5).unwrap(), &Transforms::Identity, &mut rng).is_err());
}
