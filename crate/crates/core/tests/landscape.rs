use landscape_core::datagen::*;
use landscape_core::descent::*;
use landscape_core::landscape::*;
use landscape_core::minimizers::*;
use landscape_core::networks::*;
use landscape_core::numkit::*;

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() < 1e-12 * (1.0 + b.abs())
}

#[test]
fn f1_constants_by_hand() {
    let data = fixture_f1();
    let mut rng = seeded_rng(0);
    let lin = linear_minimizer(&data, 2, &Transforms::Identity, &mut rng).unwrap();
    let p = gd_params(&lin.net, &data, 100).unwrap();
    assert!(close(p.lambda, 1.0));
    let rc = rc_params(&lin.net, &data, 0.5, Some(1.0)).unwrap();
    assert!(close(rc.alpha, 1.0 / 64.0) && close(rc.beta, 0.25));

    let res = residual_minimizer(&data, 2, 1, &Transforms::Identity, &Transforms::Identity, &mut rng).unwrap();
    let p = gd_params(&res.net, &data, 100).unwrap();
    assert!(close(p.lambda, 1.0));

    let non = nonlinear_minimizer(&data, Activation::new(0.5).unwrap(), &Transforms::Identity, &mut rng).unwrap();
    let p = gd_params(&non.net, &data, 100).unwrap();
    assert!(close(p.lambda, 2.0));
    let rc = rc_params(&non.net, &data, 0.5, None).unwrap();
    assert!(close(rc.alpha, 1.0 / 512.0));
}

#[test]
fn default_delta_is_eta_min_of_factor() {
    let mut rng = seeded_rng(1);
    let data = gen_data(2, 2, &mut rng, DEFAULT_GAP_REL, 100).unwrap();
    let c = linear_minimizer(&data, 2, &Transforms::random(), &mut rng).unwrap();
    let rc = rc_params(&c.net, &data, 0.5, None).unwrap();
    let g = c.net.factor(&data).unwrap();
    assert_eq!(rc.delta, eta_min(&g).unwrap());
    assert!(close(rc.beta, 0.25 * rc.delta * rc.delta));
}

#[test]
fn gd_holds_on_small_sweeps() {
    let mut rng = seeded_rng(2);
    let data = gen_data(2, 2, &mut rng, DEFAULT_GAP_REL, 100).unwrap();
    let nets = [
        linear_minimizer(&data, 2, &Transforms::random(), &mut rng).unwrap().net,
        residual_minimizer(&data, 2, 2, &Transforms::random(), &Transforms::random(), &mut rng).unwrap().net,
        nonlinear_minimizer(&data, Activation::new(0.5).unwrap(), &Transforms::random(), &mut rng).unwrap().net,
    ];
    for net in &nets {
        let p = gd_params(net, &data, 100).unwrap();
        let rep = check_gd(net, &data, &p, &SweepConfig::new(600, 3)).unwrap();
        assert_eq!(rep.samples_tested, 600);
        assert_eq!(rep.violations, 0, "{rep:?}");
        assert!(rep.worst_ratio.unwrap() <= 1.0);
    }
}

#[test]
fn gd_sampler_stays_inside_the_ball() {
    let mut rng = seeded_rng(3);
    let data = gen_data(3, 3, &mut rng, DEFAULT_GAP_REL, 100).unwrap();
    let c = linear_minimizer(&data, 3, &Transforms::random(), &mut rng).unwrap();
    let p = gd_params(&c.net, &data, 100).unwrap();
    for _ in 0..200 {
        let s = sample_neighborhood(&c.net, p.radius, NormKind::Spectral, &mut rng).unwrap();
        assert!(in_gd_neighborhood(&s, &c.net, &data, &p).unwrap());
    }
}

#[test]
fn residual_tau_hat_is_conservative() {
    let mut rng = seeded_rng(4);
    let data = gen_data(2, 2, &mut rng, DEFAULT_GAP_REL, 100).unwrap();
    let c = residual_minimizer(&data, 2, 2, &Transforms::random(), &Transforms::random(), &mut rng).unwrap();
    let p = gd_params(&c.net, &data, 100).unwrap();
    let tau_hat = p.tau_hat.unwrap();
    let empirical = empirical_tau_hat(c.residual().unwrap(), p.tau, 200, 30, &mut rng).unwrap();
    assert!(tau_hat <= empirical * (1.0 + 1e-6), "{tau_hat} vs {empirical}");
}

#[test]
fn nonlinear_sampler_respects_activation_radius() {
    let mut rng = seeded_rng(5);
    let data = gen_data(3, 3, &mut rng, DEFAULT_GAP_REL, 100).unwrap();
    let c = nonlinear_minimizer(&data, Activation::new(0.5).unwrap(), &Transforms::random(), &mut rng).unwrap();
    let p = gd_params(&c.net, &data, 100).unwrap();
    let star = c.nonlinear().unwrap();
    for _ in 0..100 {
        let s = sample_nonlinear_gd(star, &data, p.tau, p.radius, &mut rng).unwrap();
        let Net::Nonlinear(n) = &s.net else { panic!() };
        assert!(activation_distance(n, star, &data).unwrap() <= p.tau);
    }
}

#[test]
fn rc_search_and_recheck() {
    let mut rng = seeded_rng(6);
    let data = gen_data(2, 2, &mut rng, DEFAULT_GAP_REL, 100).unwrap();
    let c = linear_minimizer(&data, 2, &Transforms::random(), &mut rng).unwrap();
    let rc = rc_params(&c.net, &data, DEFAULT_GAMMA, None).unwrap();
    let (rc, search) = epsilon_search(&c.net, &data, &rc, 500, 7, 1.0, 30).unwrap();
    assert!(rc.epsilon > 0.0, "{search:?}");
    let rep = check_rc(&c.net, &data, &rc, &SweepConfig::new(1000, 8)).unwrap();
    assert_eq!(rep.violations, 0);
    assert!(rep.samples_qualifying > 200);
    let zero = RcParams { epsilon: 0.0, ..rc };
    assert!(check_rc(&c.net, &data, &zero, &SweepConfig::new(10, 0)).is_err());
}

#[test]
fn row_space_samples_always_qualify() {
    let mut rng = seeded_rng(9);
    let data = gen_data(3, 3, &mut rng, DEFAULT_GAP_REL, 100).unwrap();
    let c = linear_minimizer(&data, 2, &Transforms::random(), &mut rng).unwrap();
    let geom = FactorGeometry::new(c.net.factor(&data).unwrap());
    let delta = eta_min(&geom.factor).unwrap();
    for _ in 0..100 {
        let v = geom.project_row(&gaussian_vec(geom.factor.cols(), &mut rng));
        assert!(direction_qualifies(&geom.factor, &v, delta).unwrap());
    }
}

#[test]
fn shortcut_margin_weyl_bound() {
    let mut rng = seeded_rng(10);
    for d in 1..=5 {
        for _ in 0..50 {
            let a = random_unit_spectral(d, d, &mut rng).scale(0.99 * open_unit(&mut rng));
            let (s, bound) = shortcut_margin(&a);
            assert!(s >= bound - 1e-12);
        }
    }
    assert!(residual_lambda_bound(2, 0.0, 1.0) >= residual_lambda_bound(2, 0.0, 2.0));
}

#[test]
fn descent_converges_from_inside_the_neighborhood() {
    let data = fixture_f1();
    let mut rng = seeded_rng(11);
    let lin = linear_minimizer(&data, 2, &Transforms::Identity, &mut rng).unwrap();
    let dir = random_unit_spectral(2, 2, &mut rng).scale(0.1);
    let start = lin.net.perturbed(&[dir.clone(), dir]).unwrap();
    let t = run_gd(&start, &lin.net, &data, 0.01, 20_000, None).unwrap();
    assert!(t.is_monotone() && t.converged && !t.diverged);
    assert!(t.fitted_ratio().unwrap() < 1.0);
    assert!(t.losses.iter().all(|&l| l >= t.loss_star - 1e-12));
}

#[test]
fn huge_step_diverges() {
    let data = fixture_f1();
    let mut rng = seeded_rng(12);
    let lin = linear_minimizer(&data, 2, &Transforms::Identity, &mut rng).unwrap();
    let p = gd_params(&lin.net, &data, 100).unwrap();
    let start = displaced_start(&lin.net, &data, &p, 0.5, &mut rng).unwrap();
    let t = run_gd(&start, &lin.net, &data, 1e3, 100, Some(&p)).unwrap();
    assert!(t.diverged);
    assert!(t.first_exit.is_some());
    let guarded = run_gd_monotone(&start, &lin.net, &data, 1e3, 2000, Some(&p), DEFAULT_MAX_HALVINGS).unwrap();
    assert!(guarded.halvings > 0 && guarded.is_monotone());
}

#[test]
fn nonlinear_descent_fits_a_geometric_rate() {
    for scale in [0.5, 1.0, 3.0] {
        let data = fixture_f1().with_scaled_y(scale);
        let mut rng = seeded_rng(13);
        let non = nonlinear_minimizer(&data, Activation::new(0.5).unwrap(), &Transforms::Identity, &mut rng)
            .unwrap();
        let p = gd_params(&non.net, &data, 100).unwrap();
        let start = displaced_start(&non.net, &data, &p, 0.5, &mut rng).unwrap();
        let step = default_step(&non.net, &data).unwrap();
        let t = run_gd_monotone(&start, &non.net, &data, step, 5000, Some(&p), DEFAULT_MAX_HALVINGS).unwrap();
        let RateEstimate::Fitted { ratio, r_squared, .. } = t.rate.unwrap() else { panic!("{t:?}") };
        assert!(ratio < 1.0 && r_squared > 0.9);
        assert_eq!(t.first_exit, None);
    }
}
