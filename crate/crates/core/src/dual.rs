//! Dual variational problem `J(v) = ¾∫|v|^{4/3} - ½⟨Kv, v⟩` on collocation samples,
//! mountain-pass search, Nehari refinement and the level lower bound.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{gcd_of, FrequencyLattice, SampleField, SpaceGrid, TimeFourierField, TimeSampler};
use crate::material::{KernelCoefficients, NonlinearWeight};
use crate::operator::{find_anchor, EffectiveOperator};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverParams {
    /// Acceptance threshold on the relative dual residual.
    pub tol_grad: f64,
    /// Acceptance threshold on `|J - ¼‖v‖^{4/3}_{4/3}| / |J|`.
    pub tol_id: f64,
    /// Refinement stops once the relative dual residual is below this.
    pub polish_tol: f64,
    pub path_nodes: usize,
    pub max_path_sweeps: usize,
    pub reparametrize_every: usize,
    pub max_refine_iters: usize,
    pub stagnation_iters: usize,
    pub armijo_c: f64,
    pub seed: u64,
    pub anchor_candidates: usize,
    /// Minimum number of collocation samples per period of the sublattice.
    /// Set from the discretization block of a run configuration.
    #[serde(skip)]
    pub oversampling: Option<usize>,
}

impl Default for SolverParams {
    fn default() -> Self {
        Self {
            tol_grad: 1e-6,
            tol_id: 1e-6,
            polish_tol: 1e-10,
            path_nodes: 21,
            max_path_sweeps: 60,
            reparametrize_every: 5,
            max_refine_iters: 3000,
            stagnation_iters: 50,
            armijo_c: 1e-4,
            seed: 7,
            anchor_candidates: 1,
            oversampling: None,
        }
    }
}

impl SolverParams {
    pub fn validate(&self) -> Result<()> {
        let pos = [self.tol_grad, self.tol_id, self.polish_tol, self.armijo_c];
        if pos.iter().any(|v| !(v.is_finite() && *v > 0.0)) || self.armijo_c >= 1.0 {
            return Err(Error::Config("solver tolerances must be positive and armijo_c < 1".into()));
        }
        if self.path_nodes < 3 {
            return Err(Error::Config("path_nodes must be at least 3".into()));
        }
        if self.anchor_candidates == 0 || self.reparametrize_every == 0 {
            return Err(Error::Config("anchor_candidates and reparametrize_every must be positive".into()));
        }
        Ok(())
    }
}

/// Collocation discretization of the dual functional for one operator.
#[derive(Clone, Debug)]
pub struct DualProblem {
    pub op: EffectiveOperator,
    /// Every odd multiple of `m` the samples can carry.
    pub lattice: FrequencyLattice,
    sampler: TimeSampler,
    active_sampler: TimeSampler,
    weights: Vec<f64>,
}

/// Cached quantities at one point.
#[derive(Clone, Debug)]
pub struct DualEval {
    pub j: f64,
    /// `∫|v|^{4/3}`.
    pub a: f64,
    /// `⟨Kv, v⟩`.
    pub b: f64,
    pub grad: SampleField,
    /// `‖J'(v)‖₄ / ‖v^{1/3}‖₄`.
    pub grad_rel: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub iter: usize,
    #[serde(rename = "J")]
    pub j: f64,
    pub grad_norm: f64,
    pub level: f64,
    pub stage: String,
}

#[derive(Clone, Debug)]
pub struct DualState {
    pub v: SampleField,
    pub j: f64,
    pub grad_rel: f64,
    pub converged: bool,
    pub iterations: usize,
    /// Highest energy along the final mountain-pass path.
    pub path_level: f64,
    pub trace: Vec<TraceEntry>,
    pub anchor_k: i64,
}

#[derive(Clone, Debug)]
pub struct MountainPassPath {
    pub nodes: Vec<SampleField>,
    pub energies: Vec<f64>,
}

fn cbrt_signed(x: f64) -> f64 {
    x.cbrt()
}

impl DualProblem {
    pub fn new(op: &EffectiveOperator, oversampling: Option<usize>) -> Result<Self> {
        let m = op.lattice.sublattice_m;
        let kk = (op.lattice.k_max / m).max(1) as usize;
        let mut n = (8 * kk + 1).max(oversampling.unwrap_or(0));
        while !n.is_multiple_of(4) {
            n += 1;
        }
        let top = m * (n as i64 / 2 - 1);
        let lattice = op.lattice.full_up_to(top);
        let sampler = TimeSampler::new(op.lattice.period, m, n, &lattice.active_set)?;
        let active_sampler = TimeSampler::new(op.lattice.period, m, n, &op.lattice.active_set)?;
        Ok(Self { op: op.clone(), lattice, sampler, active_sampler, weights: op.grid.trapezoid_weights() })
    }

    pub fn n_samples(&self) -> usize {
        self.sampler.n_samples
    }

    pub fn grid(&self) -> &SpaceGrid {
        &self.op.grid
    }

    pub fn zeros(&self) -> SampleField {
        SampleField::zeros(self.op.grid.n_points, self.n_samples())
    }

    pub fn to_samples(&self, f: &TimeFourierField) -> Result<SampleField> {
        self.sampler.synthesize(f)
    }

    /// Coefficients on the full collocation lattice.
    pub fn to_field(&self, s: &SampleField) -> Result<TimeFourierField> {
        self.sampler.analyze(s, &self.op.grid, &self.lattice)
    }

    /// Coefficients on the active lattice only.
    pub fn to_active_field(&self, s: &SampleField) -> Result<TimeFourierField> {
        self.active_sampler.analyze(s, &self.op.grid, &self.op.lattice)
    }

    pub fn from_active_field(&self, f: &TimeFourierField) -> Result<SampleField> {
        self.active_sampler.synthesize(f)
    }

    /// `∫∫ a b` with trapezoid weights and the sample mean in time.
    pub fn inner(&self, a: &SampleField, b: &SampleField) -> f64 {
        let m = a.n_times;
        let inv = 1.0 / m as f64;
        self.weights
            .iter()
            .enumerate()
            .map(|(i, w)| w * inv * a.row(i).iter().zip(b.row(i)).map(|(x, y)| x * y).sum::<f64>())
            .sum()
    }

    fn lp_power(&self, a: &SampleField, p: f64) -> f64 {
        let inv = 1.0 / a.n_times as f64;
        self.weights
            .iter()
            .enumerate()
            .map(|(i, w)| w * inv * a.row(i).iter().map(|x| x.abs().powf(p)).sum::<f64>())
            .sum()
    }

    pub fn norm_43(&self, a: &SampleField) -> f64 {
        self.lp_power(a, 4.0 / 3.0).powf(0.75)
    }

    pub fn norm_4(&self, a: &SampleField) -> f64 {
        self.lp_power(a, 4.0).powf(0.25)
    }

    pub fn norm_2(&self, a: &SampleField) -> f64 {
        self.inner(a, a).max(0.0).sqrt()
    }

    pub fn apply_k(&self, v: &SampleField) -> Result<SampleField> {
        let f = self.to_active_field(v)?;
        let kf = self.op.apply_k(&f)?;
        self.from_active_field(&kf)
    }

    pub fn energy(&self, v: &SampleField) -> Result<f64> {
        let kv = self.apply_k(v)?;
        Ok(0.75 * self.lp_power(v, 4.0 / 3.0) - 0.5 * self.inner(&kv, v))
    }

    pub fn eval(&self, v: &SampleField) -> Result<DualEval> {
        let kv = self.apply_k(v)?;
        let a = self.lp_power(v, 4.0 / 3.0);
        let b = self.inner(&kv, v);
        let mut grad = kv;
        for (g, x) in grad.data.iter_mut().zip(&v.data) {
            *g = cbrt_signed(*x) - *g;
        }
        let gn = self.norm_4(&grad);
        let denom = a.powf(0.25);
        let grad_rel = if denom > 0.0 { gn / denom } else { f64::INFINITY };
        Ok(DualEval { j: 0.75 * a - 0.5 * b, a, b, grad, grad_rel })
    }

    /// Nearest point of the Nehari set on the ray through `v`; `None` if `⟨Kv,v⟩ ≤ 0`.
    pub fn nehari(&self, v: &SampleField) -> Result<Option<SampleField>> {
        let kv = self.apply_k(v)?;
        let a = self.lp_power(v, 4.0 / 3.0);
        let b = self.inner(&kv, v);
        if !(b > 0.0 && a > 0.0) {
            return Ok(None);
        }
        let t = (a / b).powf(1.5);
        let mut out = v.clone();
        for x in out.data.iter_mut() {
            *x *= t;
        }
        Ok(Some(out))
    }

    fn precondition(&self, v: &SampleField, g: &SampleField) -> SampleField {
        let mut d = g.clone();
        for (di, vi) in d.data.iter_mut().zip(&v.data) {
            *di *= -3.0 * vi.abs().powf(2.0 / 3.0);
        }
        d
    }
}

fn axpy(v: &SampleField, t: f64, d: &SampleField) -> SampleField {
    let mut out = v.clone();
    for (o, x) in out.data.iter_mut().zip(&d.data) {
        *o += t * x;
    }
    out
}

/// `J(v)` for `v` given on the collocation lattice (or any sublattice of it).
pub fn eval_j(problem: &DualProblem, v: &TimeFourierField) -> Result<f64> {
    problem.energy(&problem.to_samples(&v.embed(&problem.lattice))?)
}

/// `J'(v) = v^{1/3} - Kv` on the collocation lattice.
pub fn eval_j_prime(problem: &DualProblem, v: &TimeFourierField) -> Result<TimeFourierField> {
    let s = problem.to_samples(&v.embed(&problem.lattice))?;
    problem.to_field(&problem.eval(&s)?.grad)
}

/// Dual anchor from a primal one: `v⁺ = h^{-1/4} W u`, scaled so that `J(v⁺) < 0`.
pub fn dual_anchor(problem: &DualProblem, u: &TimeFourierField) -> Result<SampleField> {
    let mut wu = problem.op.apply_w(u)?;
    problem.op.weight_quarter(&mut wu, -1.0);
    let v = problem.from_active_field(&wu)?;
    let e = problem.eval(&v)?;
    if !(e.b > 0.0) {
        return Err(Error::NoPositiveDirection("anchor has non-positive <Kv, v>".into()));
    }
    // J(sv) < 0 once s^{2/3} > 3a / (2b)
    let s = 1.5 * (1.5 * e.a / e.b).powf(1.5);
    let mut out = v;
    for x in out.data.iter_mut() {
        *x *= s;
    }
    Ok(out)
}

/// One Armijo-backtracked step along the preconditioned direction.
/// Returns the new point and its evaluation, or `None` when no step is accepted.
fn descent_step(
    problem: &DualProblem,
    v: &SampleField,
    e: &DualEval,
    tau: &mut f64,
    c: f64,
    project: bool,
    accept_residual: bool,
) -> Result<Option<(SampleField, DualEval)>> {
    let d = problem.precondition(v, &e.grad);
    let slope = problem.inner(&e.grad, &d);
    if !(slope < 0.0) {
        return Ok(None);
    }
    let mut t = *tau;
    while t > 1e-14 {
        let raw = axpy(v, t, &d);
        let cand = if project { problem.nehari(&raw)? } else { Some(raw) };
        if let Some(cand) = cand {
            let ec = problem.eval(&cand)?;
            // the path stage needs an energy decrease; refinement also takes a
            // strict decrease of the residual
            let armijo = ec.j <= e.j + c * t * slope;
            let residual = accept_residual && ec.grad_rel < e.grad_rel;
            if ec.j.is_finite() && (armijo || residual) {
                *tau = (2.0 * t).min(1.0);
                return Ok(Some((cand, ec)));
            }
        }
        t *= 0.5;
    }
    *tau = 1.0;
    Ok(None)
}

/// Damped fixed-point step `v ← N((1-τ)v + τ(Kv)³)`, kept only if the residual drops.
fn fixed_point_step(problem: &DualProblem, v: &SampleField, e: &DualEval, tau: f64) -> Result<Option<(SampleField, DualEval)>> {
    let kv = problem.apply_k(v)?;
    let mut raw = v.clone();
    for (r, k) in raw.data.iter_mut().zip(&kv.data) {
        *r = (1.0 - tau) * *r + tau * k * k * k;
    }
    if let Some(cand) = problem.nehari(&raw)? {
        let ec = problem.eval(&cand)?;
        if ec.grad_rel < e.grad_rel {
            return Ok(Some((cand, ec)));
        }
    }
    Ok(None)
}

/// Nehari-constrained refinement from `v0`. Stops at `polish_tol`, after
/// `stagnation_iters` iterations without residual progress, or at the iteration cap.
pub fn refine(problem: &DualProblem, v0: &SampleField, params: &SolverParams, trace: &mut Vec<TraceEntry>, iter0: usize) -> Result<(SampleField, DualEval, usize)> {
    let mut v = problem
        .nehari(v0)?
        .ok_or_else(|| Error::NoPositiveDirection("refinement started where <Kv, v> <= 0".into()))?;
    let mut e = problem.eval(&v)?;
    let mut tau = 1.0;
    let mut best = e.grad_rel;
    let mut since = 0;
    let mut fixed_point = true;
    let mut it = 0;
    while it < params.max_refine_iters {
        if e.grad_rel <= params.polish_tol {
            break;
        }
        let mut step = None;
        if fixed_point {
            step = fixed_point_step(problem, &v, &e, 0.5)?;
            if step.is_none() {
                fixed_point = false;
            }
        }
        if step.is_none() {
            step = descent_step(problem, &v, &e, &mut tau, params.armijo_c, true, true)?;
        }
        it += 1;
        match step {
            Some((nv, ne)) => {
                v = nv;
                e = ne;
            }
            None => break,
        }
        trace.push(TraceEntry { iter: iter0 + it, j: e.j, grad_norm: e.grad_rel, level: e.j, stage: "refine".into() });
        if e.grad_rel < best * (1.0 - 1e-6) {
            best = e.grad_rel;
            since = 0;
        } else {
            since += 1;
            if since >= params.stagnation_iters {
                break;
            }
        }
    }
    Ok((v, e, it))
}

fn reparametrize(problem: &DualProblem, nodes: &[SampleField]) -> Vec<SampleField> {
    let p = nodes.len();
    let mut cum = vec![0.0];
    for w in nodes.windows(2) {
        let d = axpy(&w[1], -1.0, &w[0]);
        let last = *cum.last().unwrap();
        cum.push(last + problem.norm_2(&d));
    }
    let total = *cum.last().unwrap();
    if !(total > 0.0) {
        return nodes.to_vec();
    }
    (0..p)
        .map(|j| {
            if j == 0 || j == p - 1 {
                return nodes[j].clone();
            }
            let s = total * j as f64 / (p - 1) as f64;
            let seg = cum.windows(2).position(|c| s <= c[1]).unwrap_or(p - 2);
            let len = cum[seg + 1] - cum[seg];
            let f = if len > 0.0 { (s - cum[seg]) / len } else { 0.0 };
            let d = axpy(&nodes[seg + 1], -1.0, &nodes[seg]);
            axpy(&nodes[seg], f, &d)
        })
        .collect()
}

fn path_energies(problem: &DualProblem, nodes: &[SampleField]) -> Result<Vec<f64>> {
    nodes.par_iter().map(|n| problem.energy(n)).collect()
}

/// Mountain-pass search between `0` and `anchor` (with `J(anchor) < 0`), followed
/// by Nehari refinement of the highest path node.
pub fn mountain_pass_search(problem: &DualProblem, anchor: &SampleField, params: &SolverParams) -> Result<(DualState, MountainPassPath)> {
    params.validate()?;
    let ja = problem.energy(anchor)?;
    if !(ja < 0.0) {
        return Err(Error::NoPositiveDirection(format!("anchor energy {ja} is not negative")));
    }
    let p = params.path_nodes;
    let mut nodes: Vec<SampleField> = (0..p)
        .map(|i| {
            let mut n = anchor.clone();
            let s = i as f64 / (p - 1) as f64;
            for x in n.data.iter_mut() {
                *x *= s;
            }
            n
        })
        .collect();
    let mut energies = path_energies(problem, &nodes)?;
    let mut trace = Vec::new();
    let mut tau = 1.0;
    let mut best = f64::INFINITY;
    let mut since = 0;
    let mut sweeps = 0;
    for sweep in 0..params.max_path_sweeps {
        sweeps = sweep + 1;
        let imax = (1..p - 1).max_by(|&a, &b| energies[a].total_cmp(&energies[b])).unwrap();
        // the peak sits on the maximum of its ray, so the path level never drops below the ridge
        if let Some(nv) = problem.nehari(&nodes[imax])? {
            nodes[imax] = nv;
        }
        let e = problem.eval(&nodes[imax])?;
        energies[imax] = e.j;
        trace.push(TraceEntry { iter: sweep, j: e.j, grad_norm: e.grad_rel, level: energies[imax], stage: "path".into() });
        if e.grad_rel <= params.tol_grad {
            break;
        }
        if e.grad_rel < best * (1.0 - 1e-6) {
            best = e.grad_rel;
            since = 0;
        } else {
            since += 1;
            if since >= params.stagnation_iters {
                break;
            }
        }
        if let Some((nv, ne)) = descent_step(problem, &nodes[imax], &e, &mut tau, params.armijo_c, true, false)? {
            nodes[imax] = nv;
            energies[imax] = ne.j;
        }
        if (sweep + 1) % params.reparametrize_every == 0 {
            nodes = reparametrize(problem, &nodes);
            energies = path_energies(problem, &nodes)?;
        }
    }
    let imax = (1..p - 1).max_by(|&a, &b| energies[a].total_cmp(&energies[b])).unwrap();
    if let Some(nv) = problem.nehari(&nodes[imax])? {
        energies[imax] = problem.energy(&nv)?;
        nodes[imax] = nv;
    }
    let imax = (1..p - 1).max_by(|&a, &b| energies[a].total_cmp(&energies[b])).unwrap();
    let path_level = energies[imax];
    let (v, e, iters) = refine(problem, &nodes[imax], params, &mut trace, sweeps)?;
    let converged = e.grad_rel <= params.tol_grad;
    Ok((
        DualState { v, j: e.j, grad_rel: e.grad_rel, converged, iterations: sweeps + iters, path_level, trace, anchor_k: 0 },
        MountainPassPath { nodes, energies },
    ))
}

/// First frequency carrying a non-negligible share of `v`.
fn first_frequency(problem: &DualProblem, v: &SampleField) -> i64 {
    problem
        .to_field(v)
        .ok()
        .and_then(|f| f.support(1e-8).first().copied())
        .unwrap_or(i64::MAX)
}

/// Solve from each anchor frequency and keep the least energetic converged state,
/// ties broken by `‖v‖` and then by the lowest excited frequency.
pub fn solve_from_anchors(problem: &DualProblem, anchor_ks: &[i64], params: &SolverParams) -> Result<DualState> {
    let mut best: Option<(DualState, f64, i64)> = None;
    let mut last_err = None;
    for &k in anchor_ks {
        let u = match find_anchor(&problem.op, k) {
            Ok(u) => u,
            Err(e) => {
                last_err = Some(e);
                continue;
            }
        };
        let anchor = dual_anchor(problem, &u)?;
        let (mut st, _) = mountain_pass_search(problem, &anchor, params)?;
        st.anchor_k = k;
        let nrm = problem.norm_2(&st.v);
        let fk = first_frequency(problem, &st.v);
        let better = match &best {
            None => true,
            Some((b, bn, bk)) => {
                if st.converged != b.converged {
                    st.converged
                } else {
                    let tol = 1e-10 * b.j.abs().max(1e-300);
                    if (st.j - b.j).abs() > tol {
                        st.j < b.j
                    } else if (nrm - bn).abs() > 1e-10 * bn {
                        nrm < *bn
                    } else {
                        fk < *bk
                    }
                }
            }
        };
        if better {
            best = Some((st, nrm, fk));
        }
    }
    best.map(|b| b.0).ok_or_else(|| last_err.unwrap_or_else(|| Error::NoPositiveDirection("no anchor available".into())))
}

/// Estimate of `‖K‖_{L^{4/3} → L⁴}` by Boyd's power iteration from the given seeds
/// and `extra_random` seeded random starts. Every value returned is attained, so
/// it is a lower estimate of the true norm.
pub fn k_norm_estimate(problem: &DualProblem, seeds: &[SampleField], extra_random: usize, seed: u64, iters: usize) -> Result<f64> {
    let mut starts: Vec<SampleField> = seeds.to_vec();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..extra_random {
        let mut s = problem.zeros();
        for x in s.data.iter_mut() {
            *x = rng.gen::<f64>() - 0.5;
        }
        starts.push(s);
    }
    let mut best = 0.0f64;
    for s in starts {
        let mut x = s;
        let n0 = problem.norm_43(&x);
        if !(n0 > 0.0) {
            continue;
        }
        x.data.iter_mut().for_each(|v| *v /= n0);
        let mut prev = 0.0;
        for _ in 0..iters {
            let y = problem.apply_k(&x)?;
            let ratio = problem.norm_4(&y);
            best = best.max(ratio);
            if !(ratio > 0.0) || (ratio - prev).abs() <= 1e-13 * ratio {
                break;
            }
            prev = ratio;
            let mut z = y;
            z.data.iter_mut().for_each(|v| *v = *v * *v * *v);
            let w = problem.apply_k(&z)?;
            let wn = problem.norm_4(&w);
            if !(wn > 0.0) {
                break;
            }
            let mut nx = w;
            nx.data.iter_mut().for_each(|v| *v = (*v / wn).powi(3));
            x = nx;
        }
    }
    Ok(best)
}

/// `¼ / κ²`, the lower bound on the ground-state level implied by a norm estimate `κ`.
pub fn level_lower_bound(kappa: f64) -> f64 {
    if kappa > 0.0 {
        0.25 / (kappa * kappa)
    } else {
        f64::INFINITY
    }
}

/// Minimal time period `T / gcd(support)` of a field with the given support.
pub fn minimal_period(period: f64, support: &[i64]) -> f64 {
    let g = gcd_of(support);
    if g == 0 {
        period
    } else {
        period / g as f64
    }
}

/// Solve on the odd multiples of `m` only. Returns the state and its minimal period.
pub fn sublattice_solve(
    grid: &SpaceGrid,
    lattice: &FrequencyLattice,
    v: &[f64],
    kernels: &KernelCoefficients,
    h: &NonlinearWeight,
    m: i64,
    params: &SolverParams,
) -> Result<(DualProblem, DualState, f64)> {
    let sub = lattice.restricted_to(m)?;
    let op = EffectiveOperator::build(grid, &sub, v, kernels, h)?;
    let problem = DualProblem::new(&op, params.oversampling)?;
    let ks: Vec<i64> = sub.active_set.iter().take(params.anchor_candidates).copied().collect();
    let st = solve_from_anchors(&problem, &ks, params)?;
    let supp = problem.to_field(&st.v)?.support(1e-8);
    let tmin = minimal_period(lattice.period, &supp);
    Ok((problem, st, tmin))
}
