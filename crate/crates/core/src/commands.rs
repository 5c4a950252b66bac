//! The three user-facing commands. Each writes its files and returns the exit
//! status the command line should report.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::dual::refine;
use crate::error::{Error, Result};
use crate::output::{self, Meta};
use crate::pipeline::{dual_from_primal, evaluate_residuals, prepare, run_bands, run_solve, thresholds, ResidualTable, SolveOptions, SolveReport};
use crate::reconstruct::primal_from_dual;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CommandOutcome {
    pub exit_code: i32,
    pub message: String,
}

impl CommandOutcome {
    fn ok(message: String) -> Self {
        Self { exit_code: 0, message }
    }
}

/// Samples of the discriminant written to `bands.csv`.
const BAND_SAMPLES: usize = 4000;

/// `bands.csv` and `bands.json`; exit 2 unless every active frequency is certified.
pub fn cmd_bands(cfg: &RunConfig, out: &Path) -> Result<CommandOutcome> {
    let p = prepare(cfg, None)?;
    let cert = run_bands(&p)?;
    let meta = Meta::new(&p);
    output::ensure_dir(out)?;
    output::write(&out.join("bands.csv"), &output::bands_csv(&meta, &p, &cert, BAND_SAMPLES))?;
    output::write_json(&out.join("bands.json"), &meta, "certificate", &cert)?;
    let lines: Vec<String> = cert
        .active
        .iter()
        .chain(cert.tilde.iter())
        .map(|g| {
            if g.certified {
                format!("k = {:>3}: certified, gap ({:.6}, {:.6}), margin {:.6}", g.k, g.gap_lo, g.gap_hi, g.margin)
            } else {
                format!("k = {:>3}: NOT certified (omega^2 k^2 = {:.6} lies in a band)", g.k, g.lambda)
            }
        })
        .collect();
    let mut msg = lines.join("\n");
    if let Some(f) = &cert.fit {
        msg.push_str(&format!("\nmargin fit: delta = {:.6}, gamma = 1; log-log slope {:.4}", f.delta, f.gamma_loglog));
    }
    if !cert.point_spectrum.is_empty() {
        let ev: Vec<String> = cert.point_spectrum.iter().map(|e| format!("{:.10}", e.lambda)).collect();
        msg.push_str(&format!("\npoint spectrum in gaps: {}", ev.join(", ")));
    }
    if cert.uncertified.is_empty() {
        Ok(CommandOutcome::ok(msg))
    } else {
        msg.push_str(&format!("\nuncertifiable frequencies: {:?}", cert.uncertified));
        Ok(CommandOutcome { exit_code: 2, message: msg })
    }
}

/// Full solve. Artifacts are written even when the run does not converge (exit 3).
pub fn cmd_solve(cfg: &RunConfig, out: &Path, sublattice: Option<i64>, allow_uncertified: bool) -> Result<CommandOutcome> {
    let p = prepare(cfg, sublattice)?;
    let a = run_solve(&p, SolveOptions { allow_uncertified, skip_doubling: false })?;
    let meta = Meta::new(&p);
    output::ensure_dir(out)?;
    output::write_coefficients(&out.join("solution.csv"), &meta, &a.u)?;
    output::write_coefficients(&out.join("wave.csv"), &meta, &a.evaluation.wave.w)?;
    if p.config.output.write_fields {
        output::write(&out.join("fields.csv"), &output::fields_csv(&meta, &a.evaluation.fields.samples))?;
    }
    if p.config.output.write_plotdata {
        output::write(&out.join("plotdata.csv"), &output::plotdata_csv(&meta, &a.evaluation.fields.samples))?;
    }
    output::write_json(&out.join("residuals.json"), &meta, "residuals", &a.report.residuals)?;
    output::write_json(&out.join("report.json"), &meta, "report", &a.report)?;
    output::write(&out.join("trace.jsonl"), &output::trace_jsonl(&meta, &a.state.trace)?)?;
    output::write(&out.join("config.json"), &(p.config.to_json()? + "\n"))?;
    Ok(solve_outcome(&a.report))
}

fn solve_outcome(r: &SolveReport) -> CommandOutcome {
    let mut msg = format!(
        "J = {:.12e} (lower bound {:.6e}), minimal period {:.12}, support {:?}\n\
         residuals: dual {:.3e}, identity {:.3e}, primal {:.3e}, wave {:.3e}, faraday {:.3e}, div B {:.3e}, ampere {:.3e}",
        r.energy.j,
        r.energy.lower_bound,
        r.minimal_period,
        r.support,
        r.residuals.dual,
        r.residuals.identity,
        r.residuals.primal,
        r.residuals.wave,
        r.residuals.faraday,
        r.residuals.gauss_b,
        r.residuals.ampere
    );
    if !r.tail.inner_half_ok {
        msg.push_str(&format!(
            "\nwarning: only {:.4} of the solution mass lies in the inner half of the domain; enlarge it",
            r.tail.inner_half_mass
        ));
    }
    if r.converged {
        CommandOutcome::ok(format!("converged\n{msg}"))
    } else {
        CommandOutcome { exit_code: 3, message: format!("NOT converged: {}\n{msg}", r.failures.join("; ")) }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResidualChange {
    pub name: String,
    pub stored: f64,
    pub recomputed: f64,
    pub abs_diff: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RefineReport {
    pub factor: usize,
    pub n_points: usize,
    pub k_max: i64,
    /// Residuals of the interpolated, zero-padded solution before polishing.
    pub interpolated: ResidualTable,
    /// Residuals after re-polishing on the refined discretization.
    pub polished: ResidualTable,
    pub polish_iterations: usize,
    /// `‖u_polished - u_interpolated‖ / ‖u_polished‖`.
    pub solution_change: f64,
    pub wave_ratio: f64,
    pub energy_change: f64,
    pub failures: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub passes: bool,
    pub failures: Vec<String>,
    pub residuals: ResidualTable,
    /// Against `residuals.json` when it is present.
    pub comparison: Vec<ResidualChange>,
    pub max_abs_diff: Option<f64>,
    pub refine: Option<RefineReport>,
}

fn table_entries(t: &ResidualTable) -> Vec<(&'static str, f64)> {
    vec![
        ("dual", t.dual),
        ("identity", t.identity),
        ("primal", t.primal),
        ("wave", t.wave),
        ("second_derivative", t.second_derivative),
        ("nonresonant", t.nonresonant.unwrap_or(0.0)),
        ("gauss_d", t.gauss_d),
        ("faraday", t.faraday),
        ("gauss_b", t.gauss_b),
        ("ampere", t.ampere),
        ("poynting", t.poynting),
        ("energy", t.energy),
    ]
}

/// Recompute every residual from `solution.csv`; with `refine = Some(n)` also
/// re-solve on `n` times as many cells and `n` times as many frequencies.
pub fn cmd_verify(cfg: &RunConfig, solution: &Path, refine_factor: Option<usize>) -> Result<(CommandOutcome, VerifyReport)> {
    let (meta, u) = output::read_coefficients(&solution.join("solution.csv"))?;
    let p = prepare(cfg, Some(meta.sublattice_m))?;
    let expect = Meta::new(&p);
    if meta.config_hash != expect.config_hash
        || meta.active_set != expect.active_set
        || meta.n_points != expect.n_points
        || meta.k_max != expect.k_max
        || meta.format != expect.format
    {
        return Err(Error::Parse(format!(
            "solution in {} does not match the configuration (hash {} vs {})",
            solution.display(),
            meta.config_hash,
            expect.config_hash
        )));
    }
    let cert = run_bands(&p)?;
    let problem = p.dual_problem()?;
    let ev = evaluate_residuals(&p, &problem, &u, Some(&cert))?;
    let th = thresholds(&p.config.solver, p.grid.dx());
    let mut failures = ev.table.failures(&th);

    let mut comparison = Vec::new();
    let stored_path = solution.join("residuals.json");
    if stored_path.exists() {
        let (_, body) = output::read_json(&stored_path, "residuals")?;
        let stored: ResidualTable = serde_json::from_value(body)?;
        for ((name, a), (_, b)) in table_entries(&stored).into_iter().zip(table_entries(&ev.table)) {
            comparison.push(ResidualChange { name: name.into(), stored: a, recomputed: b, abs_diff: (a - b).abs() });
        }
    }
    let max_abs_diff = comparison.iter().map(|c| c.abs_diff).reduce(f64::max);

    let refine_report = match refine_factor {
        Some(n) if n >= 2 => Some(refine_check(&p, &u, &ev.table, n)?),
        Some(n) if n != 1 => return Err(Error::Usage(format!("--refine must be at least 1, got {n}"))),
        _ => None,
    };
    if let Some(r) = &refine_report {
        failures.extend(r.failures.iter().map(|f| format!("refined: {f}")));
    }
    let report = VerifyReport { passes: failures.is_empty(), failures: failures.clone(), residuals: ev.table, comparison, max_abs_diff, refine: refine_report };
    output::write_json(&solution.join("verify.json"), &meta, "verify", &report)?;

    let mut msg = format!(
        "recomputed: dual {:.3e}, primal {:.3e}, wave {:.3e}, faraday {:.3e}, div B {:.3e}",
        report.residuals.dual, report.residuals.primal, report.residuals.wave, report.residuals.faraday, report.residuals.gauss_b
    );
    if let Some(d) = max_abs_diff {
        msg.push_str(&format!("\nlargest change against residuals.json: {d:.3e}"));
    }
    if let Some(r) = &report.refine {
        msg.push_str(&format!(
            "\nrefined x{} (n_points {}, k_max {}): wave {:.3e} -> {:.3e} (ratio {:.3}), solution change {:.3e}",
            r.factor, r.n_points, r.k_max, report.residuals.wave, r.polished.wave, r.wave_ratio, r.solution_change
        ));
    }
    let code = if report.passes { 0 } else { 3 };
    if code != 0 {
        msg = format!("residual check FAILED: {}\n{msg}", failures.join("; "));
    }
    Ok((CommandOutcome { exit_code: code, message: msg }, report))
}

fn refine_check(p: &crate::pipeline::Prepared, u: &crate::grid::TimeFourierField, base: &ResidualTable, n: usize) -> Result<RefineReport> {
    let mut cfg = p.config.clone();
    let d = &mut cfg.discretization;
    d.n_points = n * (d.n_points - 1) + 1;
    let mut k = n as i64 * d.k_max;
    if k % 2 == 0 {
        k += 1;
    }
    d.k_max = k;
    d.active_set = None;
    let need = 6 * k as usize + 2;
    if cfg.output.fields_nphase < need {
        cfg.output.fields_nphase = need;
    }
    let p2 = prepare(&cfg, Some(p.lattice.sublattice_m))?;
    let cert = run_bands(&p2)?;
    let problem = p2.dual_problem()?;
    let u0 = u.interpolate_to(&p2.grid).embed(&p2.lattice);
    let before = evaluate_residuals(&p2, &problem, &u0, Some(&cert))?;

    let mut params = p2.config.solver.clone();
    params.polish_tol = params.polish_tol.min(0.5 * base.dual).max(1e-14);
    let v0 = dual_from_primal(&problem, &u0)?;
    let mut trace = Vec::new();
    let (v, _, iters) = refine(&problem, &v0, &params, &mut trace, 0)?;
    let u1 = primal_from_dual(&problem, &v)?.u;
    let after = evaluate_residuals(&p2, &problem, &u1, Some(&cert))?;

    let mut diff = u1.clone();
    diff.axpy(-1.0, &u0)?;
    let change = diff.norm_l2() / u1.norm_l2().max(f64::MIN_POSITIVE);
    let th = thresholds(&params, p2.grid.dx());
    let failures = after.table.failures(&th);
    Ok(RefineReport {
        factor: n,
        n_points: p2.grid.n_points,
        k_max: p2.lattice.k_max,
        wave_ratio: after.table.wave / base.wave.max(f64::MIN_POSITIVE),
        energy_change: (after.table.energy - base.energy).abs() / base.energy.abs().max(f64::MIN_POSITIVE),
        interpolated: before.table,
        polished: after.table,
        polish_iterations: iters,
        solution_change: change,
        failures,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::WeightConfig;
    use crate::pipeline::tests::small_config;

    #[test]
    fn bands_certifies_two_layer_and_rejects_constant_weight() {
        let dir = tempfile::tempdir().unwrap();
        let ok = cmd_bands(&small_config(), dir.path()).unwrap();
        assert_eq!(ok.exit_code, 0, "{}", ok.message);
        assert!(dir.path().join("bands.csv").exists());
        let (meta, cert) = output::read_json(&dir.path().join("bands.json"), "certificate").unwrap();
        assert_eq!(meta.k_max, 3);
        assert_eq!(cert["uncertified"].as_array().unwrap().len(), 0);

        let mut flat = small_config();
        flat.material.weight = WeightConfig::Constant { value: 0.5 };
        let bad = cmd_bands(&flat, dir.path()).unwrap();
        assert_eq!(bad.exit_code, 2, "{}", bad.message);
    }

    #[test]
    fn verify_reproduces_solve() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = small_config();
        let solved = cmd_solve(&cfg, dir.path(), None, false).unwrap();
        assert_eq!(solved.exit_code, 0, "{}", solved.message);
        let (outcome, report) = cmd_verify(&cfg, dir.path(), None).unwrap();
        assert_eq!(outcome.exit_code, 0, "{}", outcome.message);
        assert!(report.passes);
        assert!(report.max_abs_diff.unwrap() <= 1e-12);
        assert!(dir.path().join("verify.json").exists());

        let mut other = cfg.clone();
        other.material.speed = 3.0;
        assert!(matches!(cmd_verify(&other, dir.path(), None), Err(Error::Parse(_))));
    }
}
