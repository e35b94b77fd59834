//! Acceptance suite: every criterion runs at its stated tolerance and prints
//! one PASS/FAIL line. Runs without the libtest harness so the lines are
//! always visible; the process exits nonzero if any criterion fails.

use std::time::Instant;

use gle_lab::analysis::{ensemble_moments, path_moments, Functional};
use gle_lab::experiment::{
    run_exp_grid, run_first_order_perturb, run_powerlaw_grid, run_second_order_perturb,
    ExperimentKind, ExperimentSpec, PerturbResult, Scale,
};
use gle_lab::gle_sim::{
    gamma_form, lyapunov_distance_sq, simulate_coupled, simulate_ensemble, InitSpec,
    LyapunovParams, Order, SimConfig,
};
use gle_lab::grid::{GridFunction, TimeGrid};
use gle_lab::kernel::{schur_norm, ConvexPart, Kernel, PerturbationFamily, PotentialSpec, WeightFunction};
use gle_lab::linalg::Matrix;
use gle_lab::rng::{NoiseSource, Stream};
use gle_lab::volterra::{
    convolve, differential_resolvent, dominance_check, resolvent, IntegroOdeProblem,
};

struct Tally {
    failed: Vec<String>,
}

impl Tally {
    fn line(&mut self, id: &str, ok: bool, detail: String) {
        println!("[{}] {id}: {detail}", if ok { "PASS" } else { "FAIL" });
        if !ok {
            self.failed.push(id.to_string());
        }
    }
}

fn threads() -> usize {
    rayon::current_num_threads()
}

fn timing(t: &mut Tally, id: &str, start: Instant, limit_secs: f64) {
    let secs = start.elapsed().as_secs_f64();
    t.line(
        id,
        secs <= limit_secs,
        format!("{secs:.1} s on {} threads (limit {limit_secs:.0} s)", threads()),
    );
}

fn criterion_1(t: &mut Tally) {
    let start = Instant::now();
    let ExperimentSpec::PowerlawGrid(spec) =
        ExperimentSpec::preset(ExperimentKind::PowerlawGrid, Scale::Desk)
    else {
        unreachable!()
    };
    let res = run_powerlaw_grid(&spec).expect("power-law grid runs");
    let mut bad = Vec::new();
    let (mut above, mut below) = (0, 0);
    for c in &res.cells {
        if c.a > 1.2 * c.threshold {
            above += 1;
            if !(0.9..=1.1).contains(&c.ratio) {
                bad.push(format!("(a={}, beta={}) ratio {:.4}", c.a, c.beta, c.ratio));
            }
        } else if c.a < c.threshold {
            below += 1;
            if c.ratio != 0.0 {
                bad.push(format!("(a={}, beta={}) ratio {} not zeroed", c.a, c.beta, c.ratio));
            }
        }
    }
    let worst = res
        .cells
        .iter()
        .filter(|c| c.a > 1.2 * c.threshold)
        .map(|c| (c.ratio - 1.0).abs())
        .fold(0.0, f64::max);
    t.line(
        "1 power-law grid",
        bad.is_empty() && above > 0,
        format!(
            "{above} cells above 1.2 f(beta), max |r/beta - 1| = {worst:.4}; {below} cells below f(beta) zeroed; {}",
            if bad.is_empty() { "no violations".to_string() } else { bad.join("; ") }
        ),
    );
    timing(t, "1 runtime", start, 180.0);
}

fn criterion_2(t: &mut Tally) {
    let start = Instant::now();
    let ExperimentSpec::ExpGrid(spec) = ExperimentSpec::preset(ExperimentKind::ExpGrid, Scale::Desk)
    else {
        unreachable!()
    };
    let res = run_exp_grid(&spec).expect("exponential grid runs");
    let (mean, max, n) = res.error_stats().expect("cells to compare");
    t.line(
        "2 exponential grid",
        mean <= 0.05 && max <= 0.10,
        format!("mean relative error {mean:.2e}, max {max:.2e} over {n} decaying cells"),
    );
    timing(t, "2 runtime", start, 180.0);
}

fn family_line(r: &PerturbResult, f: PerturbationFamily) -> String {
    let s = r.family(f).expect("family present");
    format!(
        "{}: pearson {}, median rate {}",
        f,
        s.linearity
            .map(|l| format!("{:.4}", l.pearson_r))
            .unwrap_or_else(|| "n/a".into()),
        s.median_rate
            .map(|m| format!("{m:.3}"))
            .unwrap_or_else(|| "n/a".into())
    )
}

fn criterion_3(t: &mut Tally) {
    let start = Instant::now();
    let ExperimentSpec::Gle1Perturb(spec) =
        ExperimentSpec::preset(ExperimentKind::Gle1Perturb, Scale::Desk)
    else {
        unreachable!()
    };
    let res = run_first_order_perturb(&spec).expect("first-order perturbation runs");
    let tr = res.family(PerturbationFamily::Translation).unwrap();
    let r = tr.linearity.map(|l| l.pearson_r).unwrap_or(f64::NAN);
    t.line(
        "3a first-order translation linearity",
        r >= 0.95,
        format!("pearson r(C2, |||dK|||^2) = {r:.4} (need >= 0.95)"),
    );
    let in_band = PerturbationFamily::ALL
        .iter()
        .filter(|f| {
            res.family(**f)
                .and_then(|s| s.median_rate)
                .is_some_and(|m| (7.0..=9.0).contains(&m))
        })
        .count();
    let lines: Vec<String> = PerturbationFamily::ALL
        .iter()
        .map(|f| family_line(&res, *f))
        .collect();
    t.line(
        "3b first-order difference decay rate",
        in_band >= 3,
        format!("{in_band}/4 families with median rate in [7, 9]; {}", lines.join("; ")),
    );
    timing(t, "3 runtime", start, 600.0);
}

fn criterion_4(t: &mut Tally) {
    let start = Instant::now();
    let ExperimentSpec::Gle2Perturb(spec) =
        ExperimentSpec::preset(ExperimentKind::Gle2Perturb, Scale::Desk)
    else {
        unreachable!()
    };
    let res = run_second_order_perturb(&spec).expect("second-order perturbation runs");
    for f in [
        PerturbationFamily::Translation,
        PerturbationFamily::Dilation,
        PerturbationFamily::Cutoff,
    ] {
        let r = res
            .family(f)
            .and_then(|s| s.linearity)
            .map(|l| l.pearson_r)
            .unwrap_or(f64::NAN);
        t.line(
            &format!("4a second-order {f} linearity"),
            r >= 0.9,
            format!("pearson r(C4, |||dK|||^2) = {r:.4} (need >= 0.9)"),
        );
    }
    let pooled = res.pooled_median_rate().unwrap_or(f64::NAN);
    let lines: Vec<String> = PerturbationFamily::ALL
        .iter()
        .map(|f| family_line(&res, *f))
        .collect();
    t.line(
        "4b second-order Lyapunov decay rate",
        (0.8..=1.2).contains(&pooled),
        format!("median fitted rate of E[R_t] over all cells = {pooled:.3}; {}", lines.join("; ")),
    );
    timing(t, "4 runtime", start, 600.0);
}

/// `max |r - h - h * r|` with the convolution evaluated by composite Simpson
/// at even grid points, independent of the trapezoid rule inside the solver.
fn simpson_residual(h: &GridFunction, r: &GridFunction) -> f64 {
    let dt = h.grid().dt();
    let (hv, rv) = (h.values(), r.values());
    let mut worst: f64 = 0.0;
    for i in (2..hv.len()).step_by(2) {
        let f = |j: usize| hv[i - j] * rv[j];
        let mut s = f(0) + f(i);
        for j in 1..i {
            s += if j % 2 == 1 { 4.0 } else { 2.0 } * f(j);
        }
        let conv = s * dt / 3.0;
        worst = worst.max((rv[i] - hv[i] - conv).abs());
    }
    worst
}

fn criterion_5(t: &mut Tally) {
    // Resolvent identity residual under dt halving.
    let residuals: Vec<f64> = [0.04, 0.02, 0.01]
        .iter()
        .map(|dt| {
            let g = TimeGrid::with_horizon(*dt, 8.0).unwrap();
            let h = GridFunction::from_fn(g, |s| 0.5 * (1.0 + s).powi(-3) * (1.0 + (2.0 * s).sin().powi(2))).unwrap();
            let r = resolvent(&h).unwrap();
            simpson_residual(&h, &r)
        })
        .collect();
    let orders: Vec<f64> = residuals.windows(2).map(|w| (w[0] / w[1]).log2()).collect();
    let min_order = orders.iter().copied().fold(f64::INFINITY, f64::min);
    t.line(
        "5 resolvent identity order",
        min_order >= 1.8,
        format!("residuals {:?}, observed orders {orders:.3?} (need >= 1.8)", residuals.iter().map(|r| format!("{r:.3e}")).collect::<Vec<_>>()),
    );

    // z = e + e * r with h = k * e.
    let g = TimeGrid::with_horizon(1e-3, 10.0).unwrap();
    let a = 5.0;
    let k = GridFunction::from_fn(g, |s| (1.0 + s).powi(-4)).unwrap();
    let e = GridFunction::from_fn(g, |s| (-a * s).exp()).unwrap();
    let z = differential_resolvent(a, &k).unwrap();
    let h = convolve(&k, &e).unwrap();
    let r = resolvent(&h).unwrap();
    let er = convolve(&e, &r).unwrap();
    let gap = (0..g.len())
        .map(|i| (z.get(i) - e.get(i) - er.get(i)).abs())
        .fold(0.0, f64::max);
    t.line(
        "5 differential resolvent identity",
        gap <= 1e-5,
        format!("sup |z - (e + e*r)| = {gap:.3e} at dt = 1e-3 (need <= 1e-5)"),
    );

    // Sub-solutions stay below equality solutions.
    let src = NoiseSource::new(2024);
    let u = |i: u64, j: u64| src.uniform(i, Stream::Auxiliary, 0, j);
    let g = TimeGrid::with_horizon(0.01, 20.0).unwrap();
    let mut failures = 0;
    let mut worst_excess = f64::NEG_INFINITY;
    for i in 0..20 {
        let a = 0.5 + 4.5 * u(i, 0);
        let kernel = if i % 2 == 0 {
            Kernel::power_law(0.2 + 2.0 * u(i, 1), 0.5 + u(i, 2), 1.5 + 3.0 * u(i, 3)).unwrap()
        } else {
            Kernel::exponential(0.2 + 3.0 * u(i, 1), 0.2 + 3.0 * u(i, 2)).unwrap()
        };
        let gc = 2.0 * u(i, 4);
        let forcing = GridFunction::from_fn(g, |s| gc * (1.0 + s).powi(-2)).unwrap();
        let p = IntegroOdeProblem::from_kernel(a, &kernel, forcing, 3.0 * u(i, 5)).unwrap();
        let dc = u(i, 6);
        let defect = GridFunction::from_fn(g, |s| dc * (-s).exp()).unwrap();
        let d = dominance_check(&p, &defect).unwrap();
        worst_excess = worst_excess.max(d.max_excess);
        if !d.holds {
            failures += 1;
        }
    }
    t.line(
        "5 comparison dominance",
        failures == 0,
        format!("{failures}/20 violations, max(y - x) = {worst_excess:.3e}"),
    );

    // Coupling null test.
    let mut worst: f64 = 0.0;
    let g = TimeGrid::with_horizon(0.01, 5.0).unwrap();
    let k1 = Kernel::power_law(1.0, 1.0, 4.0).unwrap();
    let q = Matrix::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
    let k2 = Kernel::matrix_exponential(q, vec![0.5, 1.3]).unwrap();
    let pot = PotentialSpec::isotropic(2, 10.0, ConvexPart::LogCosh, 0.01, 10.0).unwrap();
    for seed in 0..8u64 {
        let cfg1 = SimConfig::isotropic(1, 3.0, 0.1, g, 3, seed).unwrap();
        let ens = simulate_coupled(&cfg1, &k1, &k1, Order::First, None).unwrap();
        let m = ensemble_moments(&ens, Functional::DiffSq, None).unwrap();
        worst = worst.max(m.mean.sup_abs());
        let cfg2 = SimConfig::isotropic(2, 10.0, 0.1, g, 3, seed).unwrap();
        let ens = simulate_coupled(&cfg2, &k2, &k2, Order::Second, Some(&pot)).unwrap();
        let m = ensemble_moments(&ens, Functional::DiffSq, None).unwrap();
        worst = worst.max(m.mean.sup_abs());
    }
    t.line(
        "5 coupling null test",
        worst == 0.0,
        format!("max squared difference over 8 seeds, both orders = {worst:e}"),
    );

    // Ornstein-Uhlenbeck second moment.
    let (gamma, sigma, v0) = (1.0, 0.5, 1.0);
    let g = TimeGrid::with_horizon(0.01, 4.0).unwrap();
    let cfg = SimConfig::isotropic(1, gamma, sigma, g, 10_000, 77)
        .unwrap()
        .with_init_v(InitSpec::Point(vec![v0]))
        .unwrap();
    let paths = simulate_ensemble(&cfg, &Kernel::zero(1), None).unwrap();
    let m = path_moments(&paths, |p, i| p.velocity(i)[0].powi(2)).unwrap();
    let mut worst_z: f64 = 0.0;
    for tt in [0.5, 1.0, 2.0, 4.0] {
        let i = (tt / g.dt()).round() as usize;
        let decay = (-2.0 * gamma * tt).exp();
        let exact = decay * v0 * v0 + sigma * sigma * (1.0 - decay) / (2.0 * gamma);
        worst_z = worst_z.max((m.mean.get(i) - exact).abs() / m.std_err.get(i));
    }
    t.line(
        "5 Ornstein-Uhlenbeck moment",
        worst_z <= 3.0,
        format!("max |mean - exact| / SE = {worst_z:.2} at t in {{0.5, 1, 2, 4}}, 10^4 batches"),
    );

    // Contraction of the Markovian part on random states.
    let pot = PotentialSpec::isotropic(3, 10.0, ConvexPart::LogCosh, 0.01, 10.0).unwrap();
    let p = LyapunovParams::from_potential(10.0, &pot).unwrap();
    let src = NoiseSource::new(4242);
    let mut violations = 0;
    let mut worst_margin = f64::NEG_INFINITY;
    for n in 0..10_000u64 {
        let mut s = [0.0; 12];
        src.fill_normal(n, Stream::Auxiliary, 0, &mut s);
        let scale = 1.0 + 4.0 * src.uniform(n, Stream::Auxiliary, 1, 0);
        let s: Vec<f64> = s.iter().map(|v| v * scale).collect();
        let (x, xt, v, vt) = (&s[0..3], &s[3..6], &s[6..9], &s[9..12]);
        let gam = gamma_form(&p, &pot, x, xt, v, vt);
        let z: Vec<f64> = x.iter().zip(xt).map(|(a, b)| a - b).collect();
        let w: Vec<f64> = v.iter().zip(vt).map(|(a, b)| a - b).collect();
        let bound = -2.0 * p.lambda * 10.0 * lyapunov_distance_sq(&p, &z, &w);
        worst_margin = worst_margin.max(gam - bound);
        if gam > bound {
            violations += 1;
        }
    }
    t.line(
        "5 Gamma contraction",
        violations == 0,
        format!("{violations} violations in 10^4 states, max(Gamma + 2 lambda gamma r^2) = {worst_margin:.3e}"),
    );

    // Schur norms with closed forms.
    let g = TimeGrid::with_horizon(0.01, 50.0).unwrap();
    let n1 = schur_norm(
        &Kernel::power_law(1.0, 1.0, 4.0).unwrap(),
        &WeightFunction::power_law(1.0, 6.0).unwrap(),
        &g,
    )
    .unwrap()
    .value;
    let q = gle_lab::experiment::random_orthogonal(3, 7).unwrap();
    let n2 = schur_norm(
        &Kernel::matrix_exponential(q, vec![0.5, 1.0, 1.7]).unwrap(),
        &WeightFunction::exponential(0.9, -0.8).unwrap(),
        &g,
    )
    .unwrap()
    .value;
    t.line(
        "5 Schur norm closed forms",
        (n1 - 1.0).abs() <= 1e-3 && (n2 - 10f64.sqrt()).abs() <= 1e-3,
        format!("power law {n1:.6} (exact 1), matrix {n2:.6} (exact {:.6})", 10f64.sqrt()),
    );

    // Empirical sup-ratio constants are finite and stable under refinement.
    let ratio_at = |dt: f64| {
        let g = TimeGrid::with_horizon(dt, 20.0).unwrap();
        let cfg = SimConfig::isotropic(1, 3.0, 1e-3, g, 4, 11).unwrap();
        let h = WeightFunction::power_law(1.0, 6.0).unwrap();
        let k = Kernel::power_law(1.0, 1.0, 4.0).unwrap();
        let kp = Kernel::perturbed(k.clone(), PerturbationFamily::Translation, 1.0).unwrap();
        let paths = simulate_ensemble(&cfg, &k, None).unwrap();
        let m = path_moments(&paths, |p, i| p.velocity(i)[0].powi(2)).unwrap();
        let c1 = gle_lab::analysis::empirical_sup_ratio(
            &m.mean,
            &h,
            cfg.noise_trace(),
            gle_lab::analysis::positive_times(&g),
        )
        .unwrap()
        .value;
        let ens = simulate_coupled(&cfg, &k, &kp, Order::First, None).unwrap();
        let m = ensemble_moments(&ens, Functional::DiffSq, None).unwrap();
        let c2 = gle_lab::analysis::empirical_sup_ratio(
            &m.mean,
            &h,
            cfg.noise_trace(),
            gle_lab::analysis::positive_times(&g),
        )
        .unwrap()
        .value;
        (c1, c2)
    };
    let (a1, a2) = ratio_at(0.01);
    let (b1, b2) = ratio_at(0.005);
    let d1 = (a1 - b1).abs() / b1;
    let d2 = (a2 - b2).abs() / b2;
    t.line(
        "5 sup-ratio stability",
        a1.is_finite() && a2.is_finite() && d1 <= 0.05 && d2 <= 0.05,
        format!("moment constant {a1:.4e} -> {b1:.4e} ({:.2}%), error constant {a2:.4e} -> {b2:.4e} ({:.2}%) from dt 0.01 to 0.005", 100.0 * d1, 100.0 * d2),
    );
}

fn main() {
    // libtest-style filters are accepted and ignored; `--list` prints nothing.
    if std::env::args().any(|a| a == "--list") {
        return;
    }
    let mut t = Tally { failed: Vec::new() };
    criterion_5(&mut t);
    criterion_1(&mut t);
    criterion_2(&mut t);
    criterion_3(&mut t);
    criterion_4(&mut t);
    if t.failed.is_empty() {
        println!("acceptance: all criteria passed");
    } else {
        println!("acceptance: {} failed: {}", t.failed.len(), t.failed.join(", "));
        std::process::exit(1);
    }
}
