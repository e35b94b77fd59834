use gle_lab::analysis::{
    empirical_sup_ratio, ensemble_moments, fit_decay, positive_times, rate_p, DecayModel,
    Functional,
};
use gle_lab::gle_sim::{
    gamma_form, lyapunov_distance_sq, lyapunov_distance_sq_expanded, lyapunov_params,
    simulate_coupled, simulate_ensemble, CoupledEnsemble, Order, SimConfig,
};
use gle_lab::grid::{trapezoid, trapezoid_convolution, GridFunction, TimeGrid};
use gle_lab::kernel::{
    schur_norm, ConvexPart, Kernel, PerturbationFamily, PotentialSpec, WeightFunction,
};
use gle_lab::linalg::Matrix;
use gle_lab::rng::{NoiseSource, Stream};
use gle_lab::volterra::{solve_integro_ode, IntegroOdeProblem};
use proptest::prelude::*;

fn grid(dt: f64, t: f64) -> TimeGrid {
    TimeGrid::with_horizon(dt, t).unwrap()
}

/// Largest root of `lambda + a = c / (beta + lambda)` on `(-beta, inf)` by
/// bisection.
fn bisect_root(a: f64, beta: f64, c: f64) -> f64 {
    let f = |l: f64| l + a - c / (beta + l);
    let mut lo = -beta + 1e-15 * (1.0 + beta);
    let mut hi = c.max(1.0) + a.abs() + 1.0;
    for _ in 0..400 {
        let mid = 0.5 * (lo + hi);
        if f(mid) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn fit_is_scale_equivariant(amp in 1e-3f64..1e3, rate in 0.5f64..5.0, c in 1e-3f64..1e3) {
        let g = grid(0.05, 30.0);
        let s = GridFunction::from_fn(g, |t| amp * (1.0 + t).powf(-rate) * (1.1 + t.sin())).unwrap();
        let f1 = fit_decay(&s, DecayModel::PowerLaw, (2.0, 30.0)).unwrap();
        let f2 = fit_decay(&s.scaled(c), DecayModel::PowerLaw, (2.0, 30.0)).unwrap();
        prop_assert!((f1.rate - f2.rate).abs() < 1e-10);
        prop_assert!((f2.intercept - f1.intercept - c.ln()).abs() < 1e-9);
    }

    #[test]
    fn sup_ratio_is_monotone(bump in 0.0f64..2.0, centre in 0.5f64..9.0, offset in 0.0f64..1e-3) {
        let g = grid(0.01, 10.0);
        let h = WeightFunction::power_law(1.0, 6.0).unwrap();
        let s = GridFunction::from_fn(g, |t| (1.0 + t).powi(-8)).unwrap();
        let big = GridFunction::from_fn(g, |t| (1.0 + t).powi(-8) + bump * (-(t - centre).powi(2)).exp()).unwrap();
        let w = positive_times(&g);
        let a = empirical_sup_ratio(&s, &h, offset, w).unwrap().value;
        let b = empirical_sup_ratio(&big, &h, offset, w).unwrap().value;
        prop_assert!(b >= a);
    }

    #[test]
    fn rate_matches_bisection(a in 0.1f64..20.0, beta in 0.1f64..20.0, c in 0.01f64..20.0) {
        let p = rate_p(a, beta, c);
        let root = bisect_root(a, beta, c);
        prop_assert!((p - root).abs() < 1e-10 * (1.0 + root.abs()), "{p} vs {root}");
    }

    #[test]
    fn lyapunov_forms_agree_and_are_positive(
        gamma in 0.5f64..20.0,
        u in 0.1f64..20.0,
        kappa in 0.1f64..20.0,
        zw in prop::collection::vec(-10.0f64..10.0, 6),
    ) {
        let r = Matrix::identity(3).scale(kappa);
        let p = lyapunov_params(gamma, u, &r, kappa).unwrap();
        prop_assert!(p.lambda > 0.0 && p.lambda <= 0.125);
        let (z, w) = zw.split_at(3);
        let a = lyapunov_distance_sq(&p, z, w);
        let b = lyapunov_distance_sq_expanded(&p, z, w);
        prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1e-300));
        if zw.iter().any(|v| *v != 0.0) {
            prop_assert!(a > 0.0);
        }
    }

    #[test]
    fn gamma_contraction(
        gamma in 1.0f64..20.0,
        kappa in 0.5f64..20.0,
        u in 0.5f64..20.0,
        lg_frac in 0.0f64..1.0,
        s in prop::collection::vec(-5.0f64..5.0, 8),
    ) {
        // L_G u / gamma^2 <= 3/4
        let lg = lg_frac * 0.75 * gamma * gamma / u;
        let pot = PotentialSpec::isotropic(2, kappa, ConvexPart::LogCosh, lg, u).unwrap();
        let p = lyapunov_params(gamma, u, pot.r(), pot.kappa0()).unwrap();
        let (x, rest) = s.split_at(2);
        let (xt, rest) = rest.split_at(2);
        let (v, vt) = rest.split_at(2);
        let z: Vec<f64> = x.iter().zip(xt).map(|(a, b)| a - b).collect();
        let w: Vec<f64> = v.iter().zip(vt).map(|(a, b)| a - b).collect();
        let r2 = lyapunov_distance_sq(&p, &z, &w);
        let g = gamma_form(&p, &pot, x, xt, v, vt);
        prop_assert!(g <= -2.0 * p.lambda * gamma * r2 + 1e-12 * r2, "{g} vs {}", -2.0 * p.lambda * gamma * r2);
    }

    #[test]
    fn noise_is_pure(seed in any::<u64>(), batch in 0u64..1000, step in 0u64..100_000) {
        let src = NoiseSource::new(seed);
        let mut out = [0.0; 5];
        src.fill_normal(batch, Stream::Increment, step, &mut out);
        for (i, v) in out.iter().enumerate() {
            prop_assert_eq!(*v, src.normal(batch, Stream::Increment, step, i as u64));
            prop_assert!(v.is_finite());
        }
        let u = src.uniform(batch, Stream::Auxiliary, step, 0);
        prop_assert!(u > 0.0 && u <= 1.0);
    }

    #[test]
    fn translation_invariant_kernels(t in 0.0f64..20.0, frac in 0.0f64..1.0, alpha in 0.0f64..3.0, fam in 0usize..4) {
        let s = t * frac;
        let base = Kernel::power_law(1.0, 1.0, 4.0).unwrap();
        let k = Kernel::perturbed(base, PerturbationFamily::ALL[fam], alpha).unwrap();
        let a = k.evaluate(t, s).unwrap();
        let b = k.evaluate(t - s, 0.0).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn schur_norm_is_homogeneous(c in -5.0f64..5.0, beta in 1.5f64..4.0) {
        let g = grid(0.01, 20.0);
        let h = WeightFunction::power_law(1.0, 2.0 * beta - 1.5).unwrap();
        let k = Kernel::power_law(1.0, 1.0, beta).unwrap();
        let n = schur_norm(&k, &h, &g).unwrap().value;
        let nc = schur_norm(&k.scaled(c), &h, &g).unwrap().value;
        prop_assert!((nc - c.abs() * n).abs() <= 1e-9 * (1.0 + n));
    }

    #[test]
    fn convolution_commutes(a in 0.1f64..3.0, b in 0.1f64..3.0) {
        let n = 400;
        let f: Vec<f64> = (0..=n).map(|i| (-a * i as f64 * 0.01).exp()).collect();
        let g: Vec<f64> = (0..=n).map(|i| (1.0 + b * i as f64 * 0.01).powi(-2)).collect();
        let fg = trapezoid_convolution(&f, &g, 0.01);
        let gf = trapezoid_convolution(&g, &f, 0.01);
        for (x, y) in fg.iter().zip(&gf) {
            prop_assert!((x - y).abs() <= 1e-13 * (1.0 + x.abs()));
        }
    }

    #[test]
    fn heun_preserves_positivity(a in 0.1f64..10.0, c in 0.0f64..5.0, beta in 1.1f64..5.0, g0 in 0.0f64..2.0, y0 in 0.0f64..3.0) {
        let gr = grid(0.05, 20.0);
        let k = Kernel::power_law(c.max(1e-6), 0.5, beta).unwrap();
        let g = GridFunction::constant(gr, g0);
        let p = IntegroOdeProblem::from_kernel(a, &k, g, y0).unwrap();
        let x = solve_integro_ode(&p).unwrap();
        prop_assert!(x.values().iter().all(|v| *v >= 0.0));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn schur_norm_triangle_inequality(c1 in -3.0f64..3.0, b1 in 0.5f64..4.0, c2 in -3.0f64..3.0, b2 in 0.5f64..4.0) {
        let g = grid(0.01, 30.0);
        let h = WeightFunction::exponential(0.2, 0.0).unwrap();
        let k1 = Kernel::exponential(1.0, b1).unwrap().scaled(c1);
        let k2 = Kernel::exponential(1.0, b2).unwrap().scaled(c2);
        let sum = Kernel::linear(vec![(1.0, k1.clone()), (1.0, k2.clone())]).unwrap();
        let n = |k: &Kernel| schur_norm(k, &h, &g).unwrap().value;
        prop_assert!(n(&sum) <= n(&k1) + n(&k2) + 1e-12);
    }

    #[test]
    fn schur_norm_squared_is_trapezoid_of_weighted_square(c in 0.1f64..5.0, beta in 1.1f64..4.0) {
        // cutoff support ends inside the grid, so the tail is zero and the
        // norm is exactly the grid quadrature
        let g = grid(0.01, 10.0);
        let h = WeightFunction::power_law(1.0, 2.0).unwrap();
        let base = Kernel::power_law(c, 1.0, beta).unwrap();
        let k = Kernel::perturbed(base.clone(), PerturbationFamily::Cutoff, 4.005).unwrap();
        let samples: Vec<f64> = g.times().map(|t| {
            let v = if t <= 4.005 { base.eval_lag_scalar(t) } else { 0.0 };
            v * v / h.eval(t)
        }).collect();
        let n = schur_norm(&k, &h, &g).unwrap();
        let q = trapezoid(&samples, g.dt());
        prop_assert!((n.value * n.value - q).abs() <= 1e-3 * q, "{} vs {q}", n.value * n.value);
    }

    #[test]
    fn evaluate_is_pure(t in 0.0f64..50.0, frac in 0.0f64..1.0, fam in 0usize..4, alpha in 0.0f64..2.0) {
        let k = Kernel::perturbed(Kernel::power_law(1.0, 1.0, 4.0).unwrap(), PerturbationFamily::ALL[fam], alpha).unwrap();
        let a = k.evaluate(t, t * frac).unwrap();
        let b = k.evaluate(t, t * frac).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn integro_ode_is_linear(y1 in 0.0f64..3.0, y2 in 0.0f64..3.0, s in 0.0f64..2.0, w in 0.1f64..3.0) {
        let gr = grid(0.02, 10.0);
        let k = Kernel::power_law(1.0, 1.0, 4.0).unwrap();
        let g1 = GridFunction::from_fn(gr, |t| 1.0 + (w * t).sin()).unwrap();
        let g2 = GridFunction::from_fn(gr, |t| (-t).exp()).unwrap();
        let solve = |g: GridFunction, y0: f64| {
            solve_integro_ode(&IntegroOdeProblem::from_kernel(5.0, &k, g, y0).unwrap()).unwrap()
        };
        let x1 = solve(g1.clone(), y1);
        let x2 = solve(g2.clone(), y2);
        let x = solve(g1.axpy(s, &g2).unwrap(), y1 + s * y2);
        let lin = x1.axpy(s, &x2).unwrap();
        prop_assert!(x.sup_distance(&lin).unwrap() <= 1e-10);
    }
}

#[test]
fn perturbation_size_shrinks_monotonically_to_zero() {
    let g = grid(0.01, 50.0);
    let h = WeightFunction::power_law(1.0, 6.0).unwrap();
    let base = Kernel::power_law(1.0, 1.0, 4.0).unwrap();
    let alphas = [1.0, 0.5, 0.25, 0.1, 0.05, 0.01, 0.0];
    for fam in [PerturbationFamily::Translation, PerturbationFamily::Dilation, PerturbationFamily::Oscillation] {
        let sizes: Vec<f64> = alphas
            .iter()
            .map(|&a| {
                let p = Kernel::perturbed(base.clone(), fam, a).unwrap();
                schur_norm(&base.difference(&p).unwrap(), &h, &g).unwrap().value
            })
            .collect();
        assert!(sizes.windows(2).all(|w| w[1] <= w[0]), "{fam:?}: {sizes:?}");
        assert_eq!(*sizes.last().unwrap(), 0.0);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn coupling_difference_is_symmetric(seed in any::<u64>(), alpha in 0.1f64..3.0) {
        let cfg = SimConfig::isotropic(1, 3.0, 0.05, grid(0.02, 4.0), 3, seed).unwrap();
        let k = Kernel::power_law(1.0, 1.0, 4.0).unwrap();
        let kp = Kernel::perturbed(k.clone(), PerturbationFamily::Oscillation, alpha).unwrap();
        let a = simulate_coupled(&cfg, &k, &kp, Order::First, None).unwrap();
        let b = simulate_coupled(&cfg, &kp, &k, Order::First, None).unwrap();
        let ma = ensemble_moments(&a, Functional::DiffSq, None).unwrap();
        let mb = ensemble_moments(&b, Functional::DiffSq, None).unwrap();
        prop_assert_eq!(ma.mean, mb.mean);
    }

    #[test]
    fn identical_kernels_give_zero_difference(seed in any::<u64>()) {
        let cfg = SimConfig::isotropic(1, 3.0, 0.5, grid(0.02, 4.0), 2, seed).unwrap();
        let k = Kernel::exponential(2.0, 1.0).unwrap();
        let e = simulate_coupled(&cfg, &k, &k, Order::First, None).unwrap();
        prop_assert_eq!(&e.true_paths, &e.pert_paths);
    }
}

#[test]
fn results_do_not_depend_on_thread_count() {
    let cfg = SimConfig::isotropic(1, 3.0, 0.1, grid(0.01, 3.0), 6, 99).unwrap();
    let k = Kernel::power_law(1.0, 1.0, 4.0).unwrap();
    let run = |n: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .unwrap()
            .install(|| simulate_ensemble(&cfg, &k, None).unwrap())
    };
    let one = run(1);
    assert_eq!(one, run(3));
    assert_eq!(one, run(1));
}

#[test]
fn ensemble_single_batch_mean_is_the_batch() {
    let cfg = SimConfig::isotropic(1, 3.0, 0.1, grid(0.01, 2.0), 1, 5).unwrap();
    let k = Kernel::power_law(1.0, 1.0, 4.0).unwrap();
    let kp = Kernel::perturbed(k.clone(), PerturbationFamily::Translation, 1.0).unwrap();
    let t = simulate_ensemble(&cfg, &k, None).unwrap();
    let p = simulate_ensemble(&cfg, &kp, None).unwrap();
    let ens = CoupledEnsemble::new(t.clone(), p.clone(), 5).unwrap();
    let m = ensemble_moments(&ens, Functional::DiffSq, None).unwrap();
    for i in 0..t[0].len() {
        let d = t[0].velocity(i)[0] - p[0].velocity(i)[0];
        assert_eq!(m.mean.get(i), d * d);
        assert_eq!(m.std_err.get(i), 0.0);
    }
}
