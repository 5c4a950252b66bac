//! Orchestration: certify the bands, build the operator, solve the dual problem,
//! reconstruct the fields and tabulate every residual.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::dual::{k_norm_estimate, level_lower_bound, minimal_period, solve_from_anchors, DualProblem, DualState, SolverParams};
use crate::error::{Error, Result};
use crate::grid::{FrequencyLattice, SampleField, SpaceGrid, TimeFourierField};
use crate::material::{loglog_slope, verify_assumptions, AssumptionParams, AssumptionReport, KernelCoefficients, NonlinearWeight, StepWeight};
use crate::operator::{estimate_w1_norm, EffectiveOperator, W1NormEstimate};
use crate::reconstruct::{
    assemble_fields, maxwell_residuals, primal_from_dual, primal_residual, reconstruct_w, second_derivative_identity, wave_residual,
    EmFieldSet, MaterialSamples, Polarization, WaveProfile,
};
use crate::spectrum::{certify_gaps, compute_bands, default_resolution, doubled_grid, point_spectrum_with_doubling, BandCertificate};

/// Everything derived from a configuration before any solve.
#[derive(Clone, Debug)]
pub struct Prepared {
    pub config: RunConfig,
    pub config_hash: String,
    pub grid: SpaceGrid,
    pub lattice: FrequencyLattice,
    pub weight: StepWeight,
    pub material: MaterialSamples,
    pub polarization: Polarization,
}

impl Prepared {
    pub fn omega(&self) -> f64 {
        self.lattice.omega()
    }

    pub fn operator(&self) -> Result<EffectiveOperator> {
        let m = &self.material;
        EffectiveOperator::build(&self.grid, &self.lattice, &m.v, &m.kernels, &m.h)
    }

    pub fn dual_problem(&self) -> Result<DualProblem> {
        DualProblem::new(&self.operator()?, self.config.discretization.oversampling)
    }

    /// Odd frequencies up to `3 k_max` outside the active set; polarization 2 inverts there.
    pub fn tilde_frequencies(&self) -> Vec<i64> {
        match self.polarization {
            Polarization::One => Vec::new(),
            Polarization::Two => self
                .lattice
                .full_up_to(3 * self.lattice.k_max)
                .active_set
                .into_iter()
                .filter(|k| !self.lattice.contains(*k))
                .collect(),
        }
    }
}

/// Validate, sample the material and fix the active set. `sublattice` overrides
/// the configured `sublattice_m`.
pub fn prepare(cfg: &RunConfig, sublattice: Option<i64>) -> Result<Prepared> {
    let mut config = cfg.clone();
    if let Some(m) = sublattice {
        config.discretization.sublattice_m = m;
        if let Some(a) = config.discretization.active_set.as_mut() {
            a.retain(|k| k % m == 0);
        }
    }
    config.validate()?;
    let grid = config.grid()?;
    let weight = config.weight()?;
    let mat = &config.material;
    let k_max = config.discretization.k_max;
    let g1_profile = mat.g1.profile.sample_on(&grid);
    let kernels = KernelCoefficients::new(mat.period, &mat.nu, &mat.g1.kernel, g1_profile, 3 * k_max)?;

    let base = config.lattice()?;
    let top = kernels.n_hat.values().map(|x| x.abs()).fold(0.0, f64::max);
    let active: Vec<i64> = base
        .active_set
        .iter()
        .copied()
        .filter(|&k| kernels.n_hat(k).map(|n| n.abs() > 1e-12 * top).unwrap_or(false))
        .collect();
    if active.is_empty() {
        return Err(Error::Config("the nu kernel vanishes on every admissible frequency".into()));
    }
    let lattice = if active == base.active_set {
        base
    } else {
        FrequencyLattice::with_active_set(mat.period, k_max, base.sublattice_m, active)?
    };

    let h = NonlinearWeight::new(config.h_values(&grid))?;
    let material = MaterialSamples { grid: grid.clone(), v: weight.sample_on(&grid), g0: weight.g0_on(&grid), h, kernels };
    let polarization = config.polarization()?;
    let config_hash = config.hash()?;
    Ok(Prepared { config, config_hash, grid, lattice, weight, material, polarization })
}

/// Band structure, gap certificate and point spectrum for a prepared run.
pub fn run_bands(p: &Prepared) -> Result<BandCertificate> {
    let tilde = p.tilde_frequencies();
    let k_top = tilde.last().copied().unwrap_or(0).max(p.lattice.k_max);
    let lambda_max = (p.omega() * (k_top + 2) as f64).powi(2);
    let res = p
        .config
        .discretization
        .band_resolution
        .unwrap_or_else(|| default_resolution(&p.weight, lambda_max));
    let bands = compute_bands(&p.weight, lambda_max, res)?;
    let mut cert = certify_gaps(&bands, lambda_max, &p.lattice, &tilde)?;
    let points = point_spectrum_with_doubling(&p.weight, &p.grid, &cert.gap_windows())?;
    cert.include_point_spectrum(points);
    Ok(cert)
}

/// Pass/fail limits for each residual.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    pub dual: f64,
    pub identity: f64,
    pub primal: f64,
    pub wave: f64,
    pub second_derivative: f64,
    pub nonresonant: f64,
    pub faraday: f64,
    pub gauss_b: f64,
    pub ampere: f64,
}

/// Discretization-limited checks use `max(1e-6, dx²)`.
pub fn thresholds(params: &SolverParams, dx: f64) -> Thresholds {
    let disc = 1e-6f64.max(dx * dx);
    Thresholds {
        dual: params.tol_grad,
        identity: params.tol_id,
        primal: 1e-6,
        wave: disc,
        second_derivative: disc,
        nonresonant: 1e-10,
        faraday: 1e-10,
        gauss_b: 1e-10,
        ampere: disc,
    }
}

/// Residuals recomputed from the primal profile `u` alone.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResidualTable {
    /// `‖v^{1/3} - Kv‖₄ / ‖v^{1/3}‖₄` at `v = |h|^{3/4} u³`.
    pub dual: f64,
    /// `|J - ¼‖v‖^{4/3}_{4/3}| / |J|`.
    pub identity: f64,
    pub primal: f64,
    pub wave: f64,
    pub wave_per_k: Vec<(i64, f64)>,
    pub second_derivative: f64,
    /// Worst per-frequency residual of the inverted equations on non-active `k` (polarization 2).
    pub nonresonant: Option<f64>,
    pub gauss_d: f64,
    pub faraday: f64,
    pub gauss_b: f64,
    pub ampere: f64,
    pub poynting: f64,
    /// `J` at `v = |h|^{3/4} u³`.
    pub energy: f64,
}

impl ResidualTable {
    /// Names of the residuals above their limits.
    pub fn failures(&self, t: &Thresholds) -> Vec<String> {
        let mut out = Vec::new();
        let mut check = |name: &str, val: f64, lim: f64| {
            if !(val <= lim) {
                out.push(format!("{name} = {val:.3e} > {lim:.1e}"));
            }
        };
        check("dual", self.dual, t.dual);
        check("identity", self.identity, t.identity);
        check("primal", self.primal, t.primal);
        check("wave", self.wave, t.wave);
        check("second_derivative", self.second_derivative, t.second_derivative);
        if let Some(n) = self.nonresonant {
            check("nonresonant", n, t.nonresonant);
        }
        check("faraday", self.faraday, t.faraday);
        check("gauss_b", self.gauss_b, t.gauss_b);
        check("ampere", self.ampere, t.ampere);
        out
    }
}

#[derive(Clone, Debug)]
pub struct Evaluation {
    pub table: ResidualTable,
    pub wave: WaveProfile,
    pub fields: EmFieldSet,
}

/// `v = |h|^{3/4} u³` on the collocation samples.
pub fn dual_from_primal(problem: &DualProblem, u: &TimeFourierField) -> Result<SampleField> {
    let mut s = problem.from_active_field(u)?;
    let n_t = s.n_times;
    for (i, row) in s.data.chunks_mut(n_t).enumerate() {
        let w = problem.op.h_abs[i].powf(0.75);
        for x in row.iter_mut() {
            *x = w * *x * *x * *x;
        }
    }
    Ok(s)
}

pub fn evaluate_residuals(p: &Prepared, problem: &DualProblem, u: &TimeFourierField, cert: Option<&BandCertificate>) -> Result<Evaluation> {
    let v = dual_from_primal(problem, u)?;
    let e = problem.eval(&v)?;
    let identity = (e.j - 0.25 * e.a).abs() / e.j.abs().max(f64::MIN_POSITIVE);
    let primal = primal_residual(&problem.op, u)?;
    let wave = reconstruct_w(u, p.polarization, &p.material, cert)?;
    let wr = wave_residual(&wave, &p.material)?;
    let sd = second_derivative_identity(&wave, &p.material)?;
    let nonresonant = match p.polarization {
        Polarization::One => None,
        Polarization::Two => Some(
            wr.per_k
                .iter()
                .filter(|(k, _)| !p.lattice.contains(*k))
                .map(|q| q.1)
                .fold(0.0, f64::max),
        ),
    };
    let out = &p.config.output;
    let fields = assemble_fields(&wave, &p.material, p.config.field_constants(), out.fields_nx, out.fields_nphase)?;
    let mx = maxwell_residuals(&fields)?;
    let table = ResidualTable {
        dual: e.grad_rel,
        identity,
        primal,
        wave: wr.relative,
        wave_per_k: wr.per_k,
        second_derivative: sd,
        nonresonant,
        gauss_d: mx.gauss_d,
        faraday: mx.faraday,
        gauss_b: mx.gauss_b,
        ampere: mx.ampere,
        poynting: mx.poynting,
        energy: e.j,
    };
    Ok(Evaluation { table, wave, fields })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergySummary {
    /// `J` at the returned critical point.
    pub j: f64,
    /// Highest energy on the final discrete path; approximates the minimax level from above.
    pub path_level: f64,
    /// `‖v‖^{4/3}_{4/3}`.
    pub norm_43_power: f64,
    /// Attained lower estimate of `‖K‖_{L^{4/3} → L⁴}`.
    pub k_norm: f64,
    /// `¼ / ‖K‖²` with the estimate above.
    pub lower_bound: f64,
    /// `J ‖K‖²`; at least `¼` at any nonzero critical point.
    pub empirical_constant: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TailDiagnostics {
    /// `‖û_{k_max}‖ / ‖u‖`.
    pub top_mode_relative: f64,
    /// Log-log slope of `‖û_k‖` against `k` over the support.
    pub decay_rate: Option<f64>,
    /// Cubic term dropped by truncating the kernel to the active set.
    pub wave_tail: f64,
    /// Share of `‖u‖²` inside the middle half of the domain.
    pub inner_half_mass: f64,
    pub inner_half_ok: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DoublingDiagnostic {
    pub n_points: usize,
    pub x_min: f64,
    pub x_max: f64,
    pub j: f64,
    pub relative_level_change: f64,
    pub converged: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub bands_s: f64,
    pub assemble_s: f64,
    pub solve_s: f64,
    pub reconstruct_s: f64,
    pub diagnostics_s: f64,
    pub total_s: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CertificateSummary {
    pub all_active_certified: bool,
    pub uncertified: Vec<i64>,
    pub gaps: Vec<crate::spectrum::GapInfo>,
    pub tilde_gaps: Vec<crate::spectrum::GapInfo>,
    pub fit: Option<crate::spectrum::GapFit>,
    pub fit_tilde: Option<crate::spectrum::GapFit>,
    pub point_spectrum: Vec<crate::spectrum::PointEigen>,
}

impl From<&BandCertificate> for CertificateSummary {
    fn from(c: &BandCertificate) -> Self {
        Self {
            all_active_certified: c.all_active_certified(),
            uncertified: c.uncertified.clone(),
            gaps: c.active.clone(),
            tilde_gaps: c.tilde.clone(),
            fit: c.fit.clone(),
            fit_tilde: c.fit_tilde.clone(),
            point_spectrum: c.point_spectrum.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub converged: bool,
    pub solver_converged: bool,
    pub failures: Vec<String>,
    pub polarization: u8,
    pub anchor_k: i64,
    pub iterations: usize,
    /// Relative dual residual as seen by the solver at its last iterate.
    pub solver_residual: f64,
    /// `‖h^{-1/4}v^{1/3} - W⁻¹h^{1/4}Πv‖ / ‖W⁻¹h^{1/4}Πv‖` at the solver's `v`.
    pub primal_discrepancy: f64,
    pub assumptions: AssumptionReport,
    pub certificate: CertificateSummary,
    pub energy: EnergySummary,
    pub residuals: ResidualTable,
    pub thresholds: Thresholds,
    pub support: Vec<i64>,
    pub minimal_period: f64,
    pub tail: TailDiagnostics,
    pub w1_norm: Option<W1NormEstimate>,
    pub doubling: Option<DoublingDiagnostic>,
    pub timing: Timing,
}

#[derive(Clone, Debug)]
pub struct SolveArtifacts {
    pub prepared: Prepared,
    pub certificate: BandCertificate,
    pub problem: DualProblem,
    pub state: DualState,
    pub u: TimeFourierField,
    pub evaluation: Evaluation,
    pub report: SolveReport,
}

/// Certified frequencies ranked by relative gap width, best first.
pub fn anchor_frequencies(cert: &BandCertificate, lattice: &FrequencyLattice, count: usize) -> Vec<i64> {
    let mut ranked: Vec<(i64, f64)> = cert
        .active
        .iter()
        .filter(|g| g.certified && lattice.contains(g.k))
        .map(|g| (g.k, g.margin / g.lambda))
        .collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    let mut ks: Vec<i64> = ranked.into_iter().map(|r| r.0).take(count).collect();
    if ks.is_empty() {
        ks.push(crate::operator::choose_anchor_frequency(Some(cert), lattice));
    }
    ks
}

fn tail_diagnostics(u: &TimeFourierField, wave_tail: f64) -> TailDiagnostics {
    let modes = u.mode_norms();
    let total: f64 = modes.iter().map(|m| m.1 * m.1).sum::<f64>().sqrt();
    let top = modes.last().map(|m| m.1).unwrap_or(0.0);
    let pts: Vec<(i64, f64)> = modes.iter().copied().filter(|m| m.1 > 1e-14 * total).collect();
    let grid = &u.grid;
    let w = grid.trapezoid_weights();
    let (lo, hi) = (grid.x_min + 0.25 * grid.length(), grid.x_max - 0.25 * grid.length());
    let (mut inner, mut all) = (0.0, 0.0);
    for c in &u.coeffs {
        for (i, z) in c.iter().enumerate() {
            let e = w[i] * z.norm_sqr();
            all += e;
            let x = grid.x(i);
            if x >= lo && x <= hi {
                inner += e;
            }
        }
    }
    let mass = if all > 0.0 { inner / all } else { 0.0 };
    TailDiagnostics {
        top_mode_relative: if total > 0.0 { top / total } else { 0.0 },
        decay_rate: if pts.len() >= 2 { loglog_slope(&pts) } else { None },
        wave_tail,
        inner_half_mass: mass,
        inner_half_ok: mass >= 0.99,
    }
}

#[derive(Clone, Copy, Debug, Default)]
pub struct SolveOptions {
    pub allow_uncertified: bool,
    /// Skip the optional domain-doubling re-solve regardless of the configuration.
    pub skip_doubling: bool,
}

/// The whole pipeline for one configuration.
pub fn run_solve(p: &Prepared, opts: SolveOptions) -> Result<SolveArtifacts> {
    let t0 = Instant::now();
    let mut timing = Timing::default();
    let cert = run_bands(p)?;
    timing.bands_s = t0.elapsed().as_secs_f64();

    let ap = AssumptionParams::from_data(&p.material.kernels, &cert);
    let assumptions = verify_assumptions(&p.material.kernels, &ap, &cert, &p.material.v, &p.material.h, &p.lattice, p.polarization.number())?;
    if !opts.allow_uncertified {
        if !cert.all_active_certified() {
            return Err(Error::Certification(format!(
                "omega^2 k^2 lies in a spectral band for k in {:?}{}",
                cert.uncertified,
                assumptions
                    .suggested_sublattice
                    .map(|m| format!("; try --sublattice {m}"))
                    .unwrap_or_default()
            )));
        }
        let failed: Vec<String> = assumptions.items.iter().filter(|v| !(v.holds || v.warning)).map(|v| format!("{}: {}", v.name, v.message)).collect();
        if !failed.is_empty() {
            return Err(Error::Certification(format!("assumptions fail: {}", failed.join("; "))));
        }
    }

    let t1 = Instant::now();
    let problem = p.dual_problem()?;
    timing.assemble_s = t1.elapsed().as_secs_f64();

    let t2 = Instant::now();
    let params = &p.config.solver;
    let anchors = anchor_frequencies(&cert, &p.lattice, params.anchor_candidates);
    let state = solve_from_anchors(&problem, &anchors, params)?;
    timing.solve_s = t2.elapsed().as_secs_f64();

    let t3 = Instant::now();
    let primal = primal_from_dual(&problem, &state.v)?;
    let u = primal.u;
    let evaluation = evaluate_residuals(p, &problem, &u, Some(&cert))?;
    let wr_tail = wave_residual(&evaluation.wave, &p.material)?.tail_estimate;
    timing.reconstruct_s = t3.elapsed().as_secs_f64();

    let t4 = Instant::now();
    let k_norm = k_norm_estimate(&problem, std::slice::from_ref(&state.v), 4, params.seed, 200)?;
    let energy = EnergySummary {
        j: state.j,
        path_level: state.path_level,
        norm_43_power: problem.norm_43(&state.v).powf(4.0 / 3.0),
        k_norm,
        lower_bound: level_lower_bound(k_norm),
        empirical_constant: state.j * k_norm * k_norm,
    };
    let support = u.support(1e-8);
    let minimal = minimal_period(p.lattice.period, &support);
    let w1_norm = if p.config.output.w1_norm { Some(estimate_w1_norm(&problem.op)?) } else { None };
    let doubling = if p.config.output.domain_doubling_check && !opts.skip_doubling {
        Some(doubling_diagnostic(p, state.j, opts)?)
    } else {
        None
    };
    let tail = tail_diagnostics(&u, wr_tail);
    timing.diagnostics_s = t4.elapsed().as_secs_f64();
    timing.total_s = t0.elapsed().as_secs_f64();

    let th = thresholds(params, p.grid.dx());
    let mut failures = evaluation.table.failures(&th);
    if !state.converged {
        failures.push(format!("solver stopped at relative dual residual {:.3e}", state.grad_rel));
    }
    if !(primal.discrepancy <= 1e-6) {
        failures.push(format!("primal discrepancy = {:.3e} > 1e-6", primal.discrepancy));
    }
    if !(energy.j > 0.0 && energy.j >= energy.lower_bound * (1.0 - 1e-9)) {
        failures.push(format!("level {:.6e} below the lower bound {:.6e}", energy.j, energy.lower_bound));
    }
    let report = SolveReport {
        converged: failures.is_empty(),
        solver_converged: state.converged,
        failures,
        polarization: p.polarization.number(),
        anchor_k: state.anchor_k,
        iterations: state.iterations,
        solver_residual: state.grad_rel,
        primal_discrepancy: primal.discrepancy,
        assumptions,
        certificate: CertificateSummary::from(&cert),
        energy,
        residuals: evaluation.table.clone(),
        thresholds: th,
        support,
        minimal_period: minimal,
        tail,
        w1_norm,
        doubling,
        timing,
    };
    Ok(SolveArtifacts { prepared: p.clone(), certificate: cert, problem, state, u, evaluation, report })
}

/// Re-solve on the domain extended by whole periods and compare levels.
fn doubling_diagnostic(p: &Prepared, j: f64, opts: SolveOptions) -> Result<DoublingDiagnostic> {
    let g2 = doubled_grid(&p.weight, &p.grid);
    let mut cfg = p.config.clone();
    cfg.discretization.x_min = g2.x_min;
    cfg.discretization.x_max = g2.x_max;
    cfg.discretization.n_points = g2.n_points;
    cfg.output.domain_doubling_check = false;
    cfg.output.w1_norm = false;
    let p2 = prepare(&cfg, None)?;
    let out = run_solve(&p2, SolveOptions { skip_doubling: true, ..opts })?;
    Ok(DoublingDiagnostic {
        n_points: g2.n_points,
        x_min: g2.x_min,
        x_max: g2.x_max,
        j: out.report.energy.j,
        relative_level_change: (out.report.energy.j - j).abs() / j.abs().max(f64::MIN_POSITIVE),
        converged: out.report.converged,
    })
}
