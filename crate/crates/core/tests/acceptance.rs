//! Acceptance run: one PASS/FAIL line per criterion.

use std::f64::consts::PI;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use breather_core::config::{RunConfig, WeightConfig};
use breather_core::grid::{inner_product_l2, SampleField, TimeFourierField};
use breather_core::material::{g_hat_cosabs, nu_hat_triangular, perturbation_sizes, G1Kernel, Profile, StepWeight};
use breather_core::operator::{estimate_w1_norm, sign_witnesses};
use breather_core::pipeline::{prepare, run_bands, run_solve, SolveArtifacts, SolveOptions};
use breather_core::spectrum::discriminant;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn config(name: &str) -> RunConfig {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name);
    RunConfig::load(&path).unwrap()
}

fn solve(cfg: &RunConfig) -> SolveArtifacts {
    let p = prepare(cfg, None).unwrap();
    run_solve(&p, SolveOptions::default()).unwrap()
}

fn check(failures: &mut Vec<String>, ok: bool, what: String) {
    if !ok {
        failures.push(what);
    }
}

fn outcome(failures: Vec<String>, summary: String) -> Outcome {
    if failures.is_empty() {
        Outcome { pass: true, detail: summary }
    } else {
        Outcome { pass: false, detail: format!("{}; {}", failures.join("; "), summary) }
    }
}

/// Trace of the monodromy matrix of `-φ'' = λVφ` across one cell, by explicit 2x2 products.
fn transfer_trace(layers: &[(f64, f64)], lambda: f64) -> f64 {
    let mut m = [[1.0, 0.0], [0.0, 1.0]];
    for &(v, len) in layers {
        let q = (lambda * v).sqrt();
        let (s, c) = (q * len).sin_cos();
        let step = [[c, s / q], [-q * s, c]];
        m = [
            [step[0][0] * m[0][0] + step[0][1] * m[1][0], step[0][0] * m[0][1] + step[0][1] * m[1][1]],
            [step[1][0] * m[0][0] + step[1][1] * m[1][0], step[1][0] * m[0][1] + step[1][1] * m[1][1]],
        ];
    }
    m[0][0] + m[1][1]
}

fn gap_geometry() -> Outcome {
    let mut f = Vec::new();
    let t = 2.0 * PI;
    let w = StepWeight::two_layer(t, 1.0, 0.25, 2.0).unwrap();
    let v1 = t * t / (16.0 * 0.0625);
    let v2 = t * t / (16.0 * 0.5625);
    let mut worst = 0.0f64;
    for k in [1i64, 3, 5] {
        let lam = (k * k) as f64;
        let d = discriminant(&w, lam).unwrap();
        let oracle = transfer_trace(&[(v1, 0.25), (v2, 0.75)], lam);
        worst = worst.max((d + 10.0 / 3.0).abs());
        check(&mut f, (d + 10.0 / 3.0).abs() <= 1e-10, format!("k={k}: discriminant {d:.15}"));
        check(&mut f, (oracle + 10.0 / 3.0).abs() <= 1e-10, format!("k={k}: oracle {oracle:.15}"));
    }
    let p = prepare(&config("two_layer.json"), None).unwrap();
    let cert = run_bands(&p).unwrap();
    for k in [1i64, 3, 5] {
        check(&mut f, cert.gap_for(k).is_some_and(|g| g.certified), format!("k={k} not certified"));
    }
    check(&mut f, cert.all_active_certified(), format!("uncertified {:?}", cert.uncertified));
    let slope = cert.fit.as_ref().map(|x| x.gamma_loglog).unwrap_or(f64::NAN);
    check(&mut f, (slope - 1.0).abs() <= 0.2, format!("log-log margin slope {slope:.4}"));
    outcome(f, format!("max |Delta + 10/3| = {worst:.2e}, margin slope {slope:.4} over k = 1..9"))
}

/// `∫_0^T f(t) e^{-iωkt} dt` by the periodic trapezoid rule.
fn periodic_quadrature<F: Fn(f64) -> f64>(f: F, t: f64, k: i64, n: usize) -> Complex64 {
    let h = t / n as f64;
    let omega = 2.0 * PI / t;
    let mut s = Complex64::new(0.0, 0.0);
    for j in 0..n {
        let x = j as f64 * h;
        s += Complex64::from_polar(f(x), -omega * k as f64 * x);
    }
    s * h
}

fn kernel_coefficients() -> Outcome {
    let mut f = Vec::new();
    let t = 2.0 * PI;
    let omega = 1.0;
    let mut worst = 0.0f64;
    for k in (1..=21).step_by(2) {
        let nu = periodic_quadrature(|s| s.min(t - s), t, k, 1_000_000);
        let g = periodic_quadrature(|s| (omega * s).cos() * (omega * s).cos().abs(), t, k, 1_000_000);
        let en = (nu.re - nu_hat_triangular(t, k)).abs().max(nu.im.abs());
        let eg = (g.re - g_hat_cosabs(t, k)).abs().max(g.im.abs());
        worst = worst.max(en).max(eg);
        check(&mut f, en <= 1e-9, format!("nu k={k}: error {en:.2e}"));
        check(&mut f, eg <= 1e-9, format!("g k={k}: error {eg:.2e}"));
    }
    outcome(f, format!("max error {worst:.2e} over odd k <= 21"))
}

fn operator_algebra() -> Outcome {
    let mut f = Vec::new();
    let mut cfg = config("two_layer.json");
    // 512 cells, both ends at layer centres
    cfg.discretization.x_min = -3.875;
    cfg.discretization.x_max = 4.125;
    cfg.discretization.n_points = 513;
    cfg.discretization.k_max = 7;
    cfg.material.g1.kernel = G1Kernel::CosAbs;
    cfg.material.g1.profile = Profile::Constant { value: 1.0 };
    let unit = prepare(&cfg, None).unwrap();
    let cert = run_bands(&unit).unwrap();
    let fit = cert.fit.clone().unwrap();
    let ks = &unit.lattice.active_set;
    let d_unit = perturbation_sizes(&unit.material.kernels, &unit.material.v, unit.omega(), fit.gamma, ks)
        .iter()
        .map(|p| p.1)
        .fold(0.0, f64::max);
    let g = 0.5 * fit.delta / d_unit;
    cfg.material.g1.profile = Profile::Constant { value: g };
    let p = prepare(&cfg, None).unwrap();
    let op = p.operator().unwrap();
    let d = perturbation_sizes(&p.material.kernels, &p.material.v, p.omega(), fit.gamma, ks)
        .iter()
        .map(|p| p.1)
        .fold(0.0, f64::max);
    check(&mut f, (d / fit.delta - 0.5).abs() < 1e-12, format!("d/delta = {}", d / fit.delta));

    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let random = |rng: &mut ChaCha8Rng| {
        let mut u = TimeFourierField::from_fn(&op.grid, &op.lattice, |_, _| Complex64::new(0.0, 0.0));
        for c in u.coeffs.iter_mut() {
            let n = c.len();
            for (i, z) in c.iter_mut().enumerate() {
                if i > 0 && i + 1 < n {
                    *z = Complex64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5);
                }
            }
        }
        u
    };
    let mut sym = 0.0f64;
    let mut trip = 0.0f64;
    for _ in 0..5 {
        let a = random(&mut rng);
        let b = random(&mut rng);
        let wa = op.apply_w(&a).unwrap();
        let wb = op.apply_w(&b).unwrap();
        let l = inner_product_l2(&wa, &b, None).unwrap();
        let r = inner_product_l2(&a, &wb, None).unwrap();
        sym = sym.max((l - r).abs() / (wa.norm_l2() * b.norm_l2()));
        let mut back = op.solve_w(&wa).unwrap();
        back.axpy(-1.0, &a).unwrap();
        trip = trip.max(back.norm_l2() / a.norm_l2());
    }
    check(&mut f, sym <= 1e-12, format!("symmetry defect {sym:.2e}"));
    check(&mut f, trip <= 1e-11, format!("round-trip error {trip:.2e}"));
    let w1 = estimate_w1_norm(&op).unwrap();
    check(&mut f, w1.value < 1.0, format!("W1 norm estimate {:.4}", w1.value));
    let mut witnesses = Vec::new();
    for &k in &[1i64, 3, 5, 7] {
        let (_, _, qp, qm) = sign_witnesses(&op, k).unwrap();
        witnesses.push(qp * qm < 0.0);
        check(&mut f, qp * qm < 0.0, format!("k={k}: witnesses {qp:.3e}, {qm:.3e}"));
    }
    outcome(
        f,
        format!(
            "symmetry {sym:.2e}, round-trip {trip:.2e}, W1 norm {:.4} at d/delta = 0.5 ({}), witnesses {}/4",
            w1.value,
            w1.method,
            witnesses.iter().filter(|x| **x).count()
        ),
    )
}

fn random_state(p: &breather_core::dual::DualProblem, rng: &mut ChaCha8Rng) -> SampleField {
    let mut s = p.zeros();
    let n = p.grid().n_points;
    for i in 0..n {
        let x = p.grid().x(i);
        let env = if i == 0 || i + 1 == n { 0.0 } else { (-x * x / 2.0).exp() };
        for v in s.row_mut(i) {
            *v = env * (rng.gen::<f64>() - 0.5);
        }
    }
    s
}

fn shifted(v: &SampleField, t: f64, d: &SampleField) -> SampleField {
    let mut out = v.clone();
    for (o, x) in out.data.iter_mut().zip(&d.data) {
        *o += t * x;
    }
    out
}

fn gradient_identities(points: &[(&str, &SolveArtifacts)]) -> Outcome {
    let mut f = Vec::new();
    let p = prepare(&config("two_layer.json"), None).unwrap();
    let problem = p.dual_problem().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst = 0.0f64;
    for trial in 0..20 {
        let v = random_state(&problem, &mut rng);
        let psi = random_state(&problem, &mut rng);
        let e = problem.eval(&v).unwrap();
        // unit gradient plus a unit random direction: the pairing cannot cancel
        let (gn, pn) = (problem.norm_2(&e.grad), problem.norm_2(&psi));
        let mut dir = e.grad.clone();
        for (d, q) in dir.data.iter_mut().zip(&psi.data) {
            *d = *d / gn + q / pn;
        }
        let eps = 1e-6;
        let jp = problem.energy(&shifted(&v, eps, &dir)).unwrap();
        let jm = problem.energy(&shifted(&v, -eps, &dir)).unwrap();
        let fd = (jp - jm) / (2.0 * eps);
        let an = problem.inner(&e.grad, &dir);
        let rel = (fd - an).abs() / an.abs();
        worst = worst.max(rel);
        check(&mut f, rel <= 1e-5, format!("state {trial}: fd {fd:.12e} vs {an:.12e}"));
    }
    let mut id_worst = 0.0f64;
    let mut res_worst = 0.0f64;
    for (name, a) in points {
        let r = &a.report.residuals;
        id_worst = id_worst.max(r.identity);
        res_worst = res_worst.max(r.dual);
        check(&mut f, r.identity <= 1e-6, format!("{name}: energy identity {:.2e}", r.identity));
        check(&mut f, r.dual <= 1e-6, format!("{name}: dual residual {:.2e}", r.dual));
    }
    outcome(
        f,
        format!(
            "max FD relative error {worst:.2e} at 20 states; over {} critical points: identity {id_worst:.2e}, dual residual {res_worst:.2e}",
            points.len()
        ),
    )
}

fn residual_checks(f: &mut Vec<String>, a: &SolveArtifacts) {
    let r = &a.report.residuals;
    let dx = a.prepared.grid.dx();
    check(f, a.report.solver_converged, format!("solver residual {:.2e}", a.report.solver_residual));
    check(f, a.report.converged, format!("report failures {:?}", a.report.failures));
    check(f, r.primal <= 1e-6, format!("primal residual {:.2e}", r.primal));
    check(f, r.wave <= 1e-6f64.max(dx * dx), format!("wave residual {:.2e}", r.wave));
    check(f, r.faraday <= 1e-10, format!("Faraday residual {:.2e}", r.faraday));
    check(f, r.gauss_b <= 1e-10, format!("div B residual {:.2e}", r.gauss_b));
}

fn level_checks(f: &mut Vec<String>, a: &SolveArtifacts) {
    let e = &a.report.energy;
    check(f, e.j > 0.0, format!("level {:.6e} not positive", e.j));
    check(f, e.j >= e.lower_bound * (1.0 - 1e-9), format!("level {:.10e} below bound {:.10e}", e.j, e.lower_bound));
}

fn summary(a: &SolveArtifacts) -> String {
    let r = &a.report.residuals;
    format!(
        "J = {:.6}, bound {:.6}, primal {:.1e}, wave {:.1e}, Faraday {:.1e}, div B {:.1e}",
        a.report.energy.j, a.report.energy.lower_bound, r.primal, r.wave, r.faraday, r.gauss_b
    )
}

fn pol1_breather(a: &SolveArtifacts) -> Outcome {
    let mut f = Vec::new();
    check(&mut f, a.prepared.grid.n_points == 2001 && a.prepared.lattice.k_max == 9, "unexpected discretization".into());
    residual_checks(&mut f, a);
    level_checks(&mut f, a);
    outcome(f, summary(a))
}

fn pol2_reconstruction(a: &SolveArtifacts) -> Outcome {
    let mut f = Vec::new();
    let r = &a.report.residuals;
    check(&mut f, a.report.converged, format!("report failures {:?}", a.report.failures));
    let nonres = r.nonresonant.unwrap_or(f64::INFINITY);
    check(&mut f, nonres <= 1e-10, format!("non-resonant residual {nonres:.2e}"));
    let tilde = a.prepared.tilde_frequencies();
    let per_k_worst = r
        .wave_per_k
        .iter()
        .filter(|(k, _)| tilde.contains(k))
        .map(|p| p.1)
        .fold(0.0, f64::max);
    check(&mut f, per_k_worst <= 1e-10, format!("worst non-resonant k residual {per_k_worst:.2e}"));
    check(&mut f, r.wave <= 1e-6, format!("full residual {:.2e}", r.wave));
    outcome(
        f,
        format!(
            "non-resonant {nonres:.2e} (worst per k {per_k_worst:.2e} over {} frequencies), full residual {:.2e} up to k = {}",
            tilde.len(),
            r.wave,
            3 * a.prepared.lattice.k_max
        ),
    )
}

fn multiplicity(m1: &SolveArtifacts, m3: &SolveArtifacts) -> Outcome {
    let mut f = Vec::new();
    check(&mut f, m1.report.converged, format!("m=1 failures {:?}", m1.report.failures));
    check(&mut f, m3.report.converged, format!("m=3 failures {:?}", m3.report.failures));
    check(&mut f, m3.report.support.iter().all(|k| k % 3 == 0), format!("m=3 support {:?}", m3.report.support));
    let (t1, t3) = (m1.report.minimal_period, m3.report.minimal_period);
    check(&mut f, (t1 - t3).abs() > 1e-9 * t1, format!("minimal periods {t1} and {t3} coincide"));
    outcome(f, format!("minimal periods {t1:.6} (m=1, J = {:.6}) and {t3:.6} (m=3, J = {:.6})", m1.report.energy.j, m3.report.energy.j))
}

fn negative_h(a: &SolveArtifacts) -> Outcome {
    let mut f = Vec::new();
    check(&mut f, a.prepared.material.h.values.iter().all(|h| *h < 0.0), "h is not negative".into());
    residual_checks(&mut f, a);
    level_checks(&mut f, a);
    outcome(f, summary(a))
}

fn halfspace() -> Outcome {
    let mut f = Vec::new();
    let cfg = config("halfspace.json");
    let p = prepare(&cfg, None).unwrap();
    let cert = run_bands(&p).unwrap();
    for k in [1i64, 3] {
        check(&mut f, cert.gap_for(k).is_some_and(|g| g.certified), format!("k={k} not certified"));
    }
    let mut shifts: Vec<f64> = Vec::new();
    let mut stable = |f: &mut Vec<String>, pts: &[breather_core::spectrum::PointEigen]| {
        for e in pts {
            let s = e.doubled_shift.unwrap_or(f64::INFINITY);
            shifts.push(s);
            check(f, s <= 1e-6, format!("eigenvalue {:.10} moves by {s:.2e} under doubling", e.lambda));
        }
    };
    stable(&mut f, &cert.point_spectrum);
    let base_points = cert.point_spectrum.len();

    // interface with a point eigenvalue inside the k = 1 and k = 3 gaps
    let mut cfg2 = cfg.clone();
    cfg2.material.weight = WeightConfig::TwoLayerHalfspace { theta_minus: 0.25, cell_minus: 1.0, theta_plus: 0.8, cell_plus: 0.75 };
    cfg2.discretization.x_min = -8.875;
    cfg2.discretization.x_max = 8.875;
    cfg2.discretization.n_points = 3551;
    let p2 = prepare(&cfg2, None).unwrap();
    let cert2 = run_bands(&p2).unwrap();
    for k in [1i64, 3] {
        check(&mut f, cert2.gap_for(k).is_some_and(|g| g.certified), format!("interface variant: k={k} not certified"));
    }
    check(&mut f, !cert2.point_spectrum.is_empty(), "interface variant shows no point spectrum".into());
    stable(&mut f, &cert2.point_spectrum);
    let worst = shifts.iter().copied().fold(0.0, f64::max);
    let margins = |c: &breather_core::spectrum::BandCertificate| {
        [1i64, 3].iter().map(|k| c.gap_for(*k).map_or(0.0, |g| g.margin)).collect::<Vec<_>>()
    };
    outcome(
        f,
        format!(
            "k = 1, 3 margins {:.3?}; {} point eigenvalue(s) (interface variant: {}, margins {:.2e}, {:.2e}), max doubling shift {worst:.2e}",
            margins(&cert),
            base_points,
            cert2.point_spectrum.len(),
            margins(&cert2)[0],
            margins(&cert2)[1]
        ),
    )
}

struct Line {
    id: usize,
    name: &'static str,
    limit_s: f64,
    secs: f64,
    result: Outcome,
}

fn run<F: FnOnce() -> Outcome>(id: usize, name: &'static str, limit_s: f64, body: F) -> Line {
    let t = Instant::now();
    let result = catch_unwind(AssertUnwindSafe(body)).unwrap_or_else(|e| {
        let msg = e
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_else(|| "panic".into());
        Outcome { pass: false, detail: format!("panicked: {msg}") }
    });
    Line { id, name, limit_s, secs: t.elapsed().as_secs_f64(), result }
}

fn timed<T, F: FnOnce() -> T>(body: F) -> (Option<T>, f64) {
    let t = Instant::now();
    let out = catch_unwind(AssertUnwindSafe(body)).ok();
    (out, t.elapsed().as_secs_f64())
}

fn missing(what: &str) -> Outcome {
    Outcome { pass: false, detail: format!("{what} solve failed") }
}

fn main() -> ExitCode {
    let mut lines = vec![
        run(1, "gap certification", 10.0, gap_geometry),
        run(2, "kernel coefficients", 5.0, kernel_coefficients),
        run(3, "operator algebra", 30.0, operator_algebra),
    ];

    let (pol1, t_pol1) = timed(|| solve(&config("two_layer.json")));
    let (pol2, t_pol2) = timed(|| solve(&config("polarization2.json")));
    let (m3, t_m3) = timed(|| solve(&config("sublattice3.json")));
    let (neg, t_neg) = timed(|| solve(&config("negative_h.json")));

    let mut l5 = run(5, "polarization 1 breather", 600.0, || pol1.as_ref().map_or_else(|| missing("polarization 1"), pol1_breather));
    l5.secs += t_pol1;
    let mut l6 = run(6, "polarization 2 reconstruction", 300.0, || pol2.as_ref().map_or_else(|| missing("polarization 2"), pol2_reconstruction));
    l6.secs += t_pol2;
    let mut l7 = run(7, "sublattice multiplicity", 900.0, || match (&pol1, &m3) {
        (Some(a), Some(b)) => multiplicity(a, b),
        _ => missing("sublattice"),
    });
    l7.secs += t_pol1 + t_m3;
    let mut l8 = run(8, "negative h", 600.0, || neg.as_ref().map_or_else(|| missing("negative h"), negative_h));
    l8.secs += t_neg;
    let points: Vec<(&str, &SolveArtifacts)> = [("polarization 1", &pol1), ("polarization 2", &pol2), ("sublattice 3", &m3), ("negative h", &neg)]
        .into_iter()
        .filter_map(|(n, a)| a.as_ref().map(|a| (n, a)))
        .collect();
    let l4 = run(4, "gradient and energy identities", 60.0, || {
        let mut o = gradient_identities(&points);
        if points.len() < 4 {
            o.pass = false;
            o.detail = format!("missing critical points; {}", o.detail);
        }
        o
    });
    lines.extend([l4, l5, l6, l7, l8]);
    lines.push(run(9, "half-space certification", 120.0, halfspace));
    lines.sort_by_key(|l| l.id);

    let mut all = true;
    for l in &lines {
        let in_time = l.secs <= l.limit_s;
        let pass = l.result.pass && in_time;
        all &= pass;
        let timing = if in_time { String::new() } else { format!(" over the {:.0} s limit;", l.limit_s) };
        println!(
            "{} criterion {} ({}) [{:.1} s]:{} {}",
            if pass { "PASS" } else { "FAIL" },
            l.id,
            l.name,
            l.secs,
            timing,
            l.result.detail
        );
    }
    if all {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
