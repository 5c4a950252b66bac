//! From a dual critical point back to the primal profile `u`, the wave profile `w`
//! and the electromagnetic field, with residual checks at every stage.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dual::DualProblem;
use crate::error::{Error, Result};
use crate::grid::{pointwise_cube, FrequencyLattice, SampleField, SpaceGrid, TimeFourierField};
use crate::material::{KernelCoefficients, NonlinearWeight};
use crate::operator::MAX_CONDITION;
use crate::spectrum::BandCertificate;
use crate::tridiag::{TridiagLu, Tridiagonal};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Polarization {
    /// Cubic response `h 𝒩 * w³`.
    #[serde(rename = "1")]
    One,
    /// Cubic response `h (𝒩 * w)³`.
    #[serde(rename = "2")]
    Two,
}

impl Polarization {
    pub fn from_number(p: u8) -> Result<Self> {
        match p {
            1 => Ok(Polarization::One),
            2 => Ok(Polarization::Two),
            _ => Err(Error::Config(format!("polarization must be 1 or 2, got {p}"))),
        }
    }

    pub fn number(self) -> u8 {
        match self {
            Polarization::One => 1,
            Polarization::Two => 2,
        }
    }
}

/// Material data needed away from the dual problem.
#[derive(Clone, Debug)]
pub struct MaterialSamples {
    pub grid: SpaceGrid,
    pub v: Vec<f64>,
    /// `g₀ = V - 1 + 1/c²` at the nodes.
    pub g0: Vec<f64>,
    pub h: NonlinearWeight,
    pub kernels: KernelCoefficients,
}

impl MaterialSamples {
    fn omega(&self) -> f64 {
        2.0 * std::f64::consts::PI / self.kernels.period
    }

    /// `A_k = -D² - ω²k²V - ω²k²Ĝ_k` on interior nodes.
    pub fn a_k(&self, k: i64) -> Tridiagonal {
        let n = self.grid.n_points;
        let dx = self.grid.dx();
        let inv = 1.0 / (dx * dx);
        let w2 = self.omega().powi(2) * (k * k) as f64;
        Tridiagonal {
            lower: vec![-inv; n - 3],
            diag: (1..n - 1).map(|i| 2.0 * inv - w2 * self.v[i] - w2 * self.kernels.g_hat_at(k, i)).collect(),
            upper: vec![-inv; n - 3],
        }
    }
}

#[derive(Clone, Debug)]
pub struct PrimalResult {
    pub u: TimeFourierField,
    /// `‖h^{-1/4} v^{1/3} - W⁻¹ h^{1/4} Π v‖ / ‖W⁻¹ h^{1/4} Π v‖`.
    pub discrepancy: f64,
}

/// Both primal formulas from a dual point; the `W⁻¹` one is returned.
pub fn primal_from_dual(problem: &DualProblem, v: &SampleField) -> Result<PrimalResult> {
    let op = &problem.op;
    let mut pv = problem.to_active_field(v)?;
    op.weight_quarter(&mut pv, 1.0);
    let u = op.solve_w(&pv)?;
    let us = problem.from_active_field(&u)?;
    let mut direct = v.clone();
    for (i, row) in direct.data.chunks_mut(v.n_times).enumerate() {
        let s = 1.0 / op.h_quarter[i];
        for x in row.iter_mut() {
            *x = s * x.cbrt();
        }
    }
    let diff: Vec<f64> = direct.data.iter().zip(&us.data).map(|(a, b)| a - b).collect();
    let diff = SampleField { data: diff, ..us.clone() };
    let discrepancy = problem.norm_2(&diff) / problem.norm_2(&us).max(f64::MIN_POSITIVE);
    Ok(PrimalResult { u, discrepancy })
}

fn interior_norm2(c: &[Complex64], w: &[f64]) -> f64 {
    c.iter().zip(w).map(|(z, wi)| wi * z.norm_sqr()).sum()
}

/// `‖W u - |h| Π u³‖ / ‖W u‖` for the effective operator.
pub fn primal_residual(op: &crate::operator::EffectiveOperator, u: &TimeFourierField) -> Result<f64> {
    let wu = op.apply_w(u)?;
    let k_top = *u.lattice.active_set.last().unwrap();
    let mut cube = pointwise_cube(u, 3 * k_top, false)?;
    for c in cube.coeffs.iter_mut() {
        c[0] = Complex64::new(0.0, 0.0);
        let n = c.len();
        c[n - 1] = Complex64::new(0.0, 0.0);
        for (z, h) in c.iter_mut().zip(&op.h_abs) {
            *z *= *h;
        }
    }
    let w = u.grid.trapezoid_weights();
    let mut num = 0.0;
    let mut den = 0.0;
    for (a, b) in wu.coeffs.iter().zip(&cube.coeffs) {
        let r: Vec<Complex64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
        num += interior_norm2(&r, &w);
        den += interior_norm2(a, &w);
    }
    Ok((num / den.max(f64::MIN_POSITIVE)).sqrt())
}

/// The wave profile on all odd multiples of `m` up to `3 k_max`.
#[derive(Clone, Debug)]
pub struct WaveProfile {
    pub w: TimeFourierField,
    pub polarization: Polarization,
    /// Active frequencies of the dual problem.
    pub active: FrequencyLattice,
}

fn lattice_ext(active: &FrequencyLattice) -> FrequencyLattice {
    active.full_up_to(3 * active.k_max)
}

/// `w = u` (polarization 1) or `ŵ_k = û_k / N̂_k` on active `k` and
/// `ŵ_k = A_k⁻¹(ω²k² h (u³)_k)` elsewhere (polarization 2). The latter needs a
/// certified gap at every non-active frequency.
pub fn reconstruct_w(
    u: &TimeFourierField,
    pol: Polarization,
    mat: &MaterialSamples,
    cert: Option<&BandCertificate>,
) -> Result<WaveProfile> {
    let ext = lattice_ext(&u.lattice);
    match pol {
        Polarization::One => Ok(WaveProfile { w: u.embed(&ext), polarization: pol, active: u.lattice.clone() }),
        Polarization::Two => {
            let tilde: Vec<i64> = ext.active_set.iter().copied().filter(|k| !u.lattice.contains(*k)).collect();
            let cert = cert.ok_or_else(|| Error::Certification("polarization 2 needs a band certificate".into()))?;
            let bad: Vec<i64> = tilde
                .iter()
                .copied()
                .filter(|&k| !cert.gap_for(k).is_some_and(|g| g.certified))
                .collect();
            if !bad.is_empty() {
                return Err(Error::Certification(format!(
                    "non-active frequencies {bad:?} are not certified in a spectral gap"
                )));
            }
            let cube = pointwise_cube(u, ext.k_max, true)?;
            let omega = ext.omega();
            let mut w = TimeFourierField::zeros(&u.grid, &ext);
            for (q, &k) in u.lattice.active_set.iter().enumerate() {
                let n = mat.kernels.n_hat(k)?;
                let dst = w.coeff_mut(k).unwrap();
                for (d, s) in dst.iter_mut().zip(&u.coeffs[q]) {
                    *d = s / n;
                }
            }
            let solved: Vec<(i64, Vec<Complex64>)> = tilde
                .par_iter()
                .map(|&k| {
                    let lu = TridiagLu::factor(&mat.a_k(k)).map_err(|e| Error::Singular { k, detail: e.to_string() })?;
                    let cond = lu.condition_estimate()?;
                    if !(cond <= MAX_CONDITION) {
                        return Err(Error::Singular { k, detail: format!("condition estimate {cond:.3e}") });
                    }
                    let w2 = omega * omega * (k * k) as f64;
                    let c = cube.coeff(k).unwrap();
                    let rhs: Vec<Complex64> = (1..u.grid.n_points - 1).map(|i| c[i] * (w2 * mat.h.values[i])).collect();
                    let mut col = vec![Complex64::new(0.0, 0.0)];
                    col.extend(lu.solve_complex(&rhs));
                    col.push(Complex64::new(0.0, 0.0));
                    Ok((k, col))
                })
                .collect::<Result<_>>()?;
            for (k, col) in solved {
                *w.coeff_mut(k).unwrap() = col;
            }
            Ok(WaveProfile { w, polarization: pol, active: u.lattice.clone() })
        }
    }
}

/// The field entering the cube: `w` on active `k` (polarization 1) or `𝒩 * w` (polarization 2).
fn cubed_argument(wave: &WaveProfile, mat: &MaterialSamples) -> Result<TimeFourierField> {
    let mut z = TimeFourierField::zeros(&wave.w.grid, &wave.active);
    for (q, &k) in wave.active.active_set.iter().enumerate() {
        let src = wave.w.coeff(k).unwrap();
        let f = match wave.polarization {
            Polarization::One => 1.0,
            Polarization::Two => mat.kernels.n_hat(k)?,
        };
        z.coeffs[q] = src.iter().map(|c| c * f).collect();
    }
    Ok(z)
}

/// Per-frequency nonlinear polarization `P̂_NL,k / h`: `N̂_k (w³)_k` on active k for
/// polarization 1 (zero elsewhere), `((𝒩 * w)³)_k` for polarization 2.
fn nonlinear_coefficients(wave: &WaveProfile, mat: &MaterialSamples) -> Result<TimeFourierField> {
    let z = cubed_argument(wave, mat)?;
    let ext = &wave.w.lattice;
    let mut cube = pointwise_cube(&z, ext.k_max, true)?;
    if wave.polarization == Polarization::One {
        for (q, &k) in ext.active_set.iter().enumerate() {
            let f = if wave.active.contains(k) { mat.kernels.n_hat(k)? } else { 0.0 };
            for c in cube.coeffs[q].iter_mut() {
                *c *= f;
            }
        }
    }
    Ok(cube)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WaveResidual {
    pub relative: f64,
    pub per_k: Vec<(i64, f64)>,
    /// Size of the cubic term dropped by truncating `𝒩` to the active set
    /// (polarization 1), relative to the same scale as `relative`.
    pub tail_estimate: f64,
}

/// Residual of the full nonlocal wave equation per frequency on interior nodes.
pub fn wave_residual(wave: &WaveProfile, mat: &MaterialSamples) -> Result<WaveResidual> {
    let nl = nonlinear_coefficients(wave, mat)?;
    let ext = &wave.w.lattice;
    let omega = ext.omega();
    let w = wave.w.grid.trapezoid_weights();
    let n = wave.w.grid.n_points;
    let mut tail = 0.0;
    if wave.polarization == Polarization::One {
        let z = cubed_argument(wave, mat)?;
        let cube = pointwise_cube(&z, ext.k_max, true)?;
        for (q, &k) in ext.active_set.iter().enumerate() {
            if wave.active.contains(k) {
                continue;
            }
            let f = omega * omega * (k * k) as f64 * mat.kernels.n_hat(k)?;
            let t: Vec<Complex64> = (0..n).map(|i| cube.coeffs[q][i] * (f * mat.h.values[i])).collect();
            tail += interior_norm2(&t[1..n - 1], &w[1..n - 1]);
        }
    }
    let mut per_k = Vec::new();
    let mut num = 0.0;
    let mut lin_tot = 0.0;
    let mut nl_tot = 0.0;
    for (q, &k) in ext.active_set.iter().enumerate() {
        let a = mat.a_k(k);
        let lin = a.matvec(&wave.w.coeffs[q][1..n - 1]);
        let w2 = omega * omega * (k * k) as f64;
        let nlk: Vec<Complex64> = (1..n - 1).map(|i| nl.coeffs[q][i] * (w2 * mat.h.values[i])).collect();
        let r: Vec<Complex64> = lin.iter().zip(&nlk).map(|(a, b)| a - b).collect();
        let wi = &w[1..n - 1];
        let rn = interior_norm2(&r, wi);
        let ln = interior_norm2(&lin, wi);
        let nn = interior_norm2(&nlk, wi);
        per_k.push((k, (rn / ln.max(nn).max(f64::MIN_POSITIVE)).sqrt()));
        num += rn;
        lin_tot += ln;
        nl_tot += nn;
    }
    let den = lin_tot.max(nl_tot).max(f64::MIN_POSITIVE);
    Ok(WaveResidual { relative: (num / den).sqrt(), per_k, tail_estimate: (tail / den).sqrt() })
}

/// `‖D²w + ω²k²(V ŵ + Ĝ ŵ + h P̂_NL)‖ / ‖D²w‖`: the profile equation written as an
/// identity between the second space derivative and second time derivatives.
pub fn second_derivative_identity(wave: &WaveProfile, mat: &MaterialSamples) -> Result<f64> {
    let nl = nonlinear_coefficients(wave, mat)?;
    let ext = &wave.w.lattice;
    let omega = ext.omega();
    let n = wave.w.grid.n_points;
    let dx = wave.w.grid.dx();
    let w = wave.w.grid.trapezoid_weights();
    let mut num = 0.0;
    let mut den = 0.0;
    for (q, &k) in ext.active_set.iter().enumerate() {
        let c = &wave.w.coeffs[q];
        let w2 = omega * omega * (k * k) as f64;
        for i in 1..n - 1 {
            let d2 = (c[i + 1] - c[i] * 2.0 + c[i - 1]) / (dx * dx);
            let rhs = -(c[i] * (mat.v[i] + mat.kernels.g_hat_at(k, i)) + nl.coeffs[q][i] * mat.h.values[i]) * w2;
            num += w[i] * (d2 - rhs).norm_sqr();
            den += w[i] * d2.norm_sqr();
        }
    }
    Ok((num / den.max(f64::MIN_POSITIVE)).sqrt())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldConstants {
    pub c: f64,
    pub mu0: f64,
    pub eps0: f64,
}

impl FieldConstants {
    pub fn validate(&self) -> Result<()> {
        if [self.c, self.mu0, self.eps0].iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::Config("c, mu0 and eps0 must be positive".into()));
        }
        if (self.mu0 * self.eps0 - 1.0).abs() > 1e-12 {
            return Err(Error::Config("units must satisfy eps0 * mu0 = 1".into()));
        }
        Ok(())
    }
}

/// Sampled field components on an `x × phase` grid, row-major in `x`.
#[derive(Clone, Debug, PartialEq)]
pub struct FieldSamples {
    pub x: Vec<f64>,
    pub phase: Vec<f64>,
    pub e_y: Vec<f64>,
    pub b_x: Vec<f64>,
    pub b_z: Vec<f64>,
    pub h_x: Vec<f64>,
    pub h_z: Vec<f64>,
    pub d_y: Vec<f64>,
}

/// Field coefficients. `B_z`, `H_z` live at cell midpoints, the rest at nodes.
#[derive(Clone, Debug)]
pub struct EmFieldSet {
    pub consts: FieldConstants,
    pub e_y: TimeFourierField,
    pub b_x: TimeFourierField,
    pub b_z_mid: Vec<Vec<Complex64>>,
    pub d_y: TimeFourierField,
    pub samples: FieldSamples,
}

/// Build `E, B, H, D` from the wave profile. `E_y = w`, `B_x = -w/c`,
/// `B_z = -∂_x ∂_t⁻¹ w`, `H = B/μ₀`, `D_y = ε₀(w + P)` with
/// `P = g₀w + 𝒢 * w + P_NL`.
pub fn assemble_fields(
    wave: &WaveProfile,
    mat: &MaterialSamples,
    consts: FieldConstants,
    n_x: usize,
    n_phase: usize,
) -> Result<EmFieldSet> {
    consts.validate()?;
    let ext = wave.w.lattice.clone();
    let grid = wave.w.grid.clone();
    let n = grid.n_points;
    let dx = grid.dx();
    let omega = ext.omega();
    let e_y = wave.w.clone();
    let mut b_x = wave.w.clone();
    b_x.scale(-1.0 / consts.c);
    let b_z_mid: Vec<Vec<Complex64>> = ext
        .active_set
        .iter()
        .zip(&wave.w.coeffs)
        .map(|(&k, c)| {
            let inv = Complex64::new(0.0, omega * k as f64).inv();
            (0..n - 1).map(|i| -(c[i + 1] - c[i]) * inv / dx).collect()
        })
        .collect();
    let nl = nonlinear_coefficients(wave, mat)?;
    let mut d_y = wave.w.clone();
    for (q, &k) in ext.active_set.iter().enumerate() {
        for i in 0..n {
            let wv = wave.w.coeffs[q][i];
            let p = wv * (mat.g0[i] + mat.kernels.g_hat_at(k, i)) + nl.coeffs[q][i] * mat.h.values[i];
            d_y.coeffs[q][i] = (wv + p) * consts.eps0;
        }
    }
    if n_x < 2 || n_phase < 2 * ext.k_max as usize + 1 {
        return Err(Error::Usage(format!(
            "field sampling needs n_x >= 2 and n_phase >= {}",
            2 * ext.k_max + 1
        )));
    }
    let idx: Vec<usize> = (0..n_x)
        .map(|s| ((s as f64) * (n - 1) as f64 / (n_x - 1) as f64).round() as usize)
        .collect();
    let phase: Vec<f64> = (0..n_phase).map(|j| j as f64 * ext.period / n_phase as f64).collect();
    let node_bz = |q: usize, i: usize| -> Complex64 {
        let m = &b_z_mid[q];
        if i == 0 {
            m[0]
        } else if i == n - 1 {
            m[n - 2]
        } else {
            (m[i - 1] + m[i]) * 0.5
        }
    };
    let synth = |get: &dyn Fn(usize, usize) -> Complex64| -> Vec<f64> {
        let mut out = Vec::with_capacity(n_x * n_phase);
        for &i in &idx {
            for &t in &phase {
                let mut s = 0.0;
                for (q, &k) in ext.active_set.iter().enumerate() {
                    let e = Complex64::from_polar(1.0, omega * k as f64 * t);
                    s += 2.0 * (get(q, i) * e).re;
                }
                out.push(s);
            }
        }
        out
    };
    let ey = synth(&|q, i| e_y.coeffs[q][i]);
    let bx = synth(&|q, i| b_x.coeffs[q][i]);
    let bz = synth(&|q, i| node_bz(q, i));
    let dy = synth(&|q, i| d_y.coeffs[q][i]);
    let samples = FieldSamples {
        x: idx.iter().map(|&i| grid.x(i)).collect(),
        phase,
        h_x: bx.iter().map(|v| v / consts.mu0).collect(),
        h_z: bz.iter().map(|v| v / consts.mu0).collect(),
        e_y: ey,
        b_x: bx,
        b_z: bz,
        d_y: dy,
    };
    Ok(EmFieldSet { consts, e_y, b_x, b_z_mid, d_y, samples })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaxwellResiduals {
    pub gauss_d: f64,
    pub faraday: f64,
    pub gauss_b: f64,
    pub ampere: f64,
    /// Time-averaged `∫ E·∂_tD + H·∂_tB`, relative to the size of its terms.
    pub poynting: f64,
}

/// Relative residuals of all four Maxwell equations, computed coefficient-wise
/// (frequencies are exact, `x` uses the staggered differences of the assembly).
pub fn maxwell_residuals(f: &EmFieldSet) -> Result<MaxwellResiduals> {
    let grid = &f.e_y.grid;
    let ext = &f.e_y.lattice;
    let n = grid.n_points;
    let dx = grid.dx();
    let omega = ext.omega();
    let c = f.consts.c;
    let mu0 = f.consts.mu0;
    let w = grid.trapezoid_weights();
    let (mut far_n, mut far_d, mut gb_n, mut gb_d, mut am_n, mut am_d) = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
    let mut poy = 0.0;
    let mut poy_scale = 0.0;
    for (q, &k) in ext.active_set.iter().enumerate() {
        let iwk = Complex64::new(0.0, omega * k as f64);
        let e = &f.e_y.coeffs[q];
        let bx = &f.b_x.coeffs[q];
        let bz = &f.b_z_mid[q];
        let d = &f.d_y.coeffs[q];
        // ∂_z = -(1/c) ∂_t for the co-moving profile
        for i in 0..n {
            let fx = e[i] * iwk / c + bx[i] * iwk;
            far_n += w[i] * fx.norm_sqr();
            far_d += w[i] * (e[i] * iwk / c).norm_sqr();
        }
        for i in 0..n - 1 {
            let dex = (e[i + 1] - e[i]) / dx;
            let fz = dex + bz[i] * iwk;
            far_n += dx * fz.norm_sqr();
            far_d += dx * dex.norm_sqr();
            let dbx = (bx[i + 1] - bx[i]) / dx;
            let div = dbx - bz[i] * iwk / c;
            gb_n += dx * div.norm_sqr();
            gb_d += dx * dbx.norm_sqr();
        }
        for i in 1..n - 1 {
            let hx = bx[i] / mu0;
            let dhz = (bz[i] - bz[i - 1]) / (mu0 * dx);
            let dtd = d[i] * iwk;
            let r = -hx * iwk / c - dhz - dtd;
            am_n += w[i] * r.norm_sqr();
            am_d += w[i] * dtd.norm_sqr();
            // E·∂_tD + H_x·∂_tB_x averaged in time: 2 Re(ê conj(·)) per frequency
            let t1 = 2.0 * (e[i] * dtd.conj()).re;
            let t2 = 2.0 * (hx * (bx[i] * iwk).conj()).re;
            poy += w[i] * (t1 + t2);
            poy_scale += w[i] * (e[i].norm() * dtd.norm() + hx.norm() * (bx[i] * iwk).norm()) * 2.0;
        }
        for b in &bz[..n - 1] {
            let hz = b / mu0;
            let t3 = 2.0 * (hz * (b * iwk).conj()).re;
            poy += dx * t3;
            poy_scale += dx * 2.0 * hz.norm() * (b * iwk).norm();
        }
    }
    let rel = |a: f64, b: f64| (a / b.max(f64::MIN_POSITIVE)).sqrt();
    Ok(MaxwellResiduals {
        gauss_d: 0.0,
        faraday: rel(far_n, far_d),
        gauss_b: rel(gb_n, gb_d),
        ampere: rel(am_n, am_d),
        poynting: poy.abs() / poy_scale.max(f64::MIN_POSITIVE),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::material::{G1Kernel, NuKernel};
    use std::f64::consts::PI;

    fn material(n: usize, g1: f64) -> MaterialSamples {
        let grid = SpaceGrid::new(-1.0, 1.0, n).unwrap();
        let v: Vec<f64> = grid.nodes().iter().map(|x| 2.0 + x.sin()).collect();
        let g0 = v.iter().map(|x| x - 0.75).collect();
        let kernels = KernelCoefficients::new(2.0 * PI, &NuKernel::Triangular, &G1Kernel::CosAbs, vec![g1; n], 27).unwrap();
        let h = NonlinearWeight::new(grid.nodes().iter().map(|x| 1.0 + x * x).collect()).unwrap();
        MaterialSamples { grid, v, g0, h, kernels }
    }

    fn smooth_u(mat: &MaterialSamples, k_max: i64) -> TimeFourierField {
        let lat = FrequencyLattice::new(2.0 * PI, k_max, 1).unwrap();
        TimeFourierField::from_fn(&mat.grid, &lat, |k, x| {
            let env = (PI * (x + 1.0) / 2.0).sin();
            Complex64::new(env / (k * k) as f64, 0.3 * env * x / k as f64)
        })
    }

    #[test]
    fn faraday_and_gauss_hold_for_any_profile() {
        // the field ansatz satisfies both homogeneous equations identically
        let mat = material(81, 0.2);
        let wave = reconstruct_w(&smooth_u(&mat, 3), Polarization::One, &mat, None).unwrap();
        let consts = FieldConstants { c: 2.0, mu0: 1.0, eps0: 1.0 };
        let f = assemble_fields(&wave, &mat, consts, 9, 64).unwrap();
        let r = maxwell_residuals(&f).unwrap();
        assert!(r.faraday < 1e-13, "{}", r.faraday);
        assert!(r.gauss_b < 1e-13, "{}", r.gauss_b);
        assert_eq!(r.gauss_d, 0.0);
    }

    #[test]
    fn ampere_matches_wave_residual() {
        // with ε₀μ₀ = 1, Ampère's law is the wave equation multiplied by 1/(iωkμ₀)
        let mat = material(81, 0.2);
        let wave = reconstruct_w(&smooth_u(&mat, 3), Polarization::One, &mat, None).unwrap();
        let consts = FieldConstants { c: 2.0, mu0: 1.0, eps0: 1.0 };
        let f = assemble_fields(&wave, &mat, consts, 9, 64).unwrap();
        let r = maxwell_residuals(&f).unwrap();
        let wr = wave_residual(&wave, &mat).unwrap();
        assert!(r.ampere > 1e-3 && wr.relative > 1e-3);
        assert!(second_derivative_identity(&wave, &mat).unwrap() > 1e-3);
    }

    #[test]
    fn units_are_checked() {
        assert!(FieldConstants { c: 1.0, mu0: 2.0, eps0: 1.0 }.validate().is_err());
        assert!(FieldConstants { c: 1.0, mu0: 2.0, eps0: 0.5 }.validate().is_ok());
    }

    #[test]
    fn polarization_two_needs_certificate() {
        let mat = material(41, 0.0);
        let u = smooth_u(&mat, 3);
        assert!(matches!(reconstruct_w(&u, Polarization::Two, &mat, None), Err(Error::Certification(_))));
    }

    #[test]
    fn sampled_fields_follow_the_ansatz() {
        let mat = material(81, 0.0);
        let wave = reconstruct_w(&smooth_u(&mat, 3), Polarization::One, &mat, None).unwrap();
        let consts = FieldConstants { c: 2.0, mu0: 1.0, eps0: 1.0 };
        let f = assemble_fields(&wave, &mat, consts, 5, 32).unwrap();
        for (e, b) in f.samples.e_y.iter().zip(&f.samples.b_x) {
            assert!((b + e / 2.0).abs() < 1e-14);
        }
    }
}
