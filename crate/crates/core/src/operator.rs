//! The reduced operator `W = W₀ + W₁` acting frequency by frequency, its inverse
//! `K = h^{1/4} W⁻¹ h^{1/4}`, and diagnostics on the splitting.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{FrequencyLattice, SpaceGrid, TimeFourierField};
use crate::material::{KernelCoefficients, NonlinearWeight};
use crate::spectrum::{weighted_laplacian, BandCertificate};
use crate::tridiag::{TridiagLu, Tridiagonal};

/// Condition estimates above this are treated as singular.
pub const MAX_CONDITION: f64 = 1e14;

/// One frequency block: `A_k = -D² - ω²k²V - ω²k²Ĝ_k` on interior nodes, scaled by
/// `scale = sign(h) / (ω²k² N̂_k)`.
#[derive(Clone, Debug)]
pub struct FrequencyOperator {
    pub k: i64,
    pub scale: f64,
    pub a0: Tridiagonal,
    pub g_diag: Vec<f64>,
    pub lu: TridiagLu,
    pub condition: f64,
}

impl FrequencyOperator {
    fn full(&self) -> Tridiagonal {
        let mut a = self.a0.clone();
        for (d, g) in a.diag.iter_mut().zip(&self.g_diag) {
            *d += g;
        }
        a
    }
}

/// Effective operator for `|h|`: with `h < 0` the problem is solved as `(-W) u = |h| Π u³`.
#[derive(Clone, Debug)]
pub struct EffectiveOperator {
    pub grid: SpaceGrid,
    pub lattice: FrequencyLattice,
    pub v: Vec<f64>,
    pub h_abs: Vec<f64>,
    pub h_quarter: Vec<f64>,
    pub sign: f64,
    pub blocks: Vec<FrequencyOperator>,
}

fn interior<T: Copy>(x: &[T]) -> &[T] {
    &x[1..x.len() - 1]
}

fn pad<T: Copy + Default>(inner: Vec<T>) -> Vec<T> {
    let mut out = Vec::with_capacity(inner.len() + 2);
    out.push(T::default());
    out.extend(inner);
    out.push(T::default());
    out
}

impl EffectiveOperator {
    pub fn build(
        grid: &SpaceGrid,
        lattice: &FrequencyLattice,
        v: &[f64],
        kernels: &KernelCoefficients,
        h: &NonlinearWeight,
    ) -> Result<Self> {
        let n = grid.n_points;
        if v.len() != n || h.values.len() != n {
            return Err(Error::Usage("V and h must be sampled on the operator grid".into()));
        }
        if kernels.g1_profile.len() != n && kernels.g_hat.values().any(|g| *g != 0.0) {
            return Err(Error::Usage("g1 profile must be sampled on the operator grid".into()));
        }
        let sign = h.sign()?;
        let omega = lattice.omega();
        let dx = grid.dx();
        let inv = 1.0 / (dx * dx);
        let blocks = lattice
            .active_set
            .par_iter()
            .map(|&k| {
                let n_hat = kernels.n_hat(k)?;
                if n_hat == 0.0 {
                    return Err(Error::Config(format!("nu coefficient vanishes at active k = {k}")));
                }
                let w2 = omega * omega * (k * k) as f64;
                let a0 = Tridiagonal {
                    lower: vec![-inv; n - 3],
                    diag: interior(v).iter().map(|vi| 2.0 * inv - w2 * vi).collect(),
                    upper: vec![-inv; n - 3],
                };
                let g_diag: Vec<f64> = (1..n - 1).map(|i| -w2 * kernels.g_hat_at(k, i)).collect();
                let mut full = a0.clone();
                for (d, g) in full.diag.iter_mut().zip(&g_diag) {
                    *d += g;
                }
                let lu = TridiagLu::factor(&full).map_err(|e| Error::Singular { k, detail: e.to_string() })?;
                let condition = lu.condition_estimate().map_err(|e| Error::Singular { k, detail: e.to_string() })?;
                if !(condition <= MAX_CONDITION) {
                    return Err(Error::Singular { k, detail: format!("condition estimate {condition:.3e}") });
                }
                Ok(FrequencyOperator { k, scale: sign / (w2 * n_hat), a0, g_diag, lu, condition })
            })
            .collect::<Result<Vec<_>>>()?;
        let h_abs = h.abs();
        let h_quarter = h_abs.iter().map(|x| x.powf(0.25)).collect();
        Ok(Self { grid: grid.clone(), lattice: lattice.clone(), v: v.to_vec(), h_abs, h_quarter, sign, blocks })
    }

    pub fn omega(&self) -> f64 {
        self.lattice.omega()
    }

    pub fn block(&self, k: i64) -> Option<&FrequencyOperator> {
        self.lattice.index_of(k).map(|q| &self.blocks[q])
    }

    fn check_field(&self, u: &TimeFourierField) -> Result<()> {
        if u.grid != self.grid || u.lattice.active_set != self.lattice.active_set {
            return Err(Error::Usage("field does not live on the operator grid and lattice".into()));
        }
        Ok(())
    }

    fn map_blocks<F>(&self, u: &TimeFourierField, f: F) -> Result<TimeFourierField>
    where
        F: Fn(&FrequencyOperator, &[Complex64]) -> Vec<Complex64> + Sync,
    {
        self.check_field(u)?;
        let coeffs = self
            .blocks
            .par_iter()
            .zip(u.coeffs.par_iter())
            .map(|(b, c)| pad(f(b, interior(c))))
            .collect();
        Ok(TimeFourierField { grid: self.grid.clone(), lattice: self.lattice.clone(), coeffs })
    }

    /// `W u`. Boundary values of `u` are ignored (Dirichlet) and the result vanishes there.
    pub fn apply_w(&self, u: &TimeFourierField) -> Result<TimeFourierField> {
        self.map_blocks(u, |b, c| b.full().matvec(c).into_iter().map(|z| z * b.scale).collect())
    }

    pub fn apply_w0(&self, u: &TimeFourierField) -> Result<TimeFourierField> {
        self.map_blocks(u, |b, c| b.a0.matvec(c).into_iter().map(|z| z * b.scale).collect())
    }

    pub fn apply_w1(&self, u: &TimeFourierField) -> Result<TimeFourierField> {
        self.map_blocks(u, |b, c| c.iter().zip(&b.g_diag).map(|(z, g)| z * (g * b.scale)).collect())
    }

    /// `W⁻¹ f` with homogeneous Dirichlet data.
    pub fn solve_w(&self, f: &TimeFourierField) -> Result<TimeFourierField> {
        self.map_blocks(f, |b, c| {
            let rhs: Vec<Complex64> = c.iter().map(|z| z / b.scale).collect();
            b.lu.solve_complex(&rhs)
        })
    }

    /// `K v = h^{1/4} W⁻¹ h^{1/4} v`.
    pub fn apply_k(&self, v: &TimeFourierField) -> Result<TimeFourierField> {
        let mut hv = v.clone();
        self.weight_quarter(&mut hv, 1.0);
        let mut out = self.solve_w(&hv)?;
        self.weight_quarter(&mut out, 1.0);
        Ok(out)
    }

    /// Multiply by `|h|^{p/4}`.
    pub fn weight_quarter(&self, f: &mut TimeFourierField, p: f64) {
        let w: Vec<f64> = self.h_quarter.iter().map(|x| x.powf(p)).collect();
        for c in f.coeffs.iter_mut() {
            for (z, wi) in c.iter_mut().zip(&w) {
                *z *= *wi;
            }
        }
    }

    /// `⟨W u, u⟩`.
    pub fn quadratic_form(&self, u: &TimeFourierField) -> Result<f64> {
        crate::grid::inner_product_l2(&self.apply_w(u)?, u, None)
    }
}

/// The problem with `h ↦ -h`, `W ↦ -W`: same solutions, opposite sign bookkeeping.
pub fn negate_h_transform(op: &EffectiveOperator) -> EffectiveOperator {
    let mut out = op.clone();
    out.sign = -op.sign;
    for b in out.blocks.iter_mut() {
        b.scale = -b.scale;
    }
    out
}

/// Frequency whose gap is widest relative to `ω²k²`; the smallest active `k` if none is certified.
pub fn choose_anchor_frequency(cert: Option<&BandCertificate>, lattice: &FrequencyLattice) -> i64 {
    let best = cert.and_then(|c| {
        c.active
            .iter()
            .filter(|g| g.certified && lattice.contains(g.k))
            .max_by(|a, b| (a.margin / a.lambda).total_cmp(&(b.margin / b.lambda)))
            .map(|g| g.k)
    });
    best.unwrap_or(lattice.active_set[0])
}

/// Generalized eigenpair of `-D² φ = λ V φ` nearest to `ω²k²` on one side.
fn edge_mode(op: &EffectiveOperator, k: i64, above: bool) -> Result<(f64, Vec<f64>)> {
    let t = weighted_laplacian(&op.v, op.grid.dx());
    let w2 = op.omega().powi(2) * (k * k) as f64;
    let c = t.count_below(w2);
    let idx = if above {
        c
    } else {
        c.checked_sub(1).ok_or_else(|| Error::NoPositiveDirection(format!("no eigenvalue below omega^2 k^2 at k = {k}")))?
    };
    let lam = t
        .eigenvalue_index(idx, 1e-15)
        .ok_or_else(|| Error::NoPositiveDirection(format!("no eigenvalue above omega^2 k^2 at k = {k}")))?;
    let psi = t.eigenvector(lam, idx as u64 + 7)?;
    let phi = pad(psi.iter().enumerate().map(|(i, p)| p / op.v[i + 1].sqrt()).collect());
    Ok((lam, phi))
}

fn single_mode(op: &EffectiveOperator, k: i64, profile: &[f64]) -> TimeFourierField {
    let mut u = TimeFourierField::zeros(&op.grid, &op.lattice);
    if let Some(c) = u.coeff_mut(k) {
        for (z, p) in c.iter_mut().zip(profile) {
            *z = Complex64::new(*p, 0.0);
        }
    }
    u
}

/// Band-edge data on both sides of the gap at `k`, with their quadratic forms
/// `(u⁺, u⁻, ⟨Wu⁺,u⁺⟩, ⟨Wu⁻,u⁻⟩)`. Here `u⁺` is the mode above `ω²k²`.
pub fn sign_witnesses(op: &EffectiveOperator, k: i64) -> Result<(TimeFourierField, TimeFourierField, f64, f64)> {
    let (_, up) = edge_mode(op, k, true)?;
    let (_, down) = edge_mode(op, k, false)?;
    let u_up = single_mode(op, k, &up);
    let u_down = single_mode(op, k, &down);
    let q_up = op.quadratic_form(&u_up)?;
    let q_down = op.quadratic_form(&u_down)?;
    Ok((u_up, u_down, q_up, q_down))
}

/// Primal anchor `u` with `⟨W u, u⟩ > 0`: the band-edge mode at `k` on the side
/// where `W` is positive, windowed around the bulk of `h`.
pub fn find_anchor(op: &EffectiveOperator, k: i64) -> Result<TimeFourierField> {
    let b = op.block(k).ok_or_else(|| Error::Usage(format!("anchor frequency {k} is not active")))?;
    let above = b.scale > 0.0;
    let (_, phi) = edge_mode(op, k, above)?;
    let xs = op.grid.nodes();
    let hmin = op.h_abs.iter().copied().fold(f64::INFINITY, f64::min);
    let excess: Vec<f64> = op.h_abs.iter().map(|h| h - hmin).collect();
    let mass: f64 = excess.iter().sum();
    let center = if mass > 0.0 {
        xs.iter().zip(&excess).map(|(x, e)| x * e).sum::<f64>() / mass
    } else {
        0.5 * (op.grid.x_min + op.grid.x_max)
    };
    let width = op.grid.length() / 4.0;
    let windowed: Vec<f64> = phi.iter().zip(&xs).map(|(p, x)| p * (-((x - center) / width).powi(2)).exp()).collect();
    for prof in [&windowed, &phi] {
        let u = single_mode(op, k, prof);
        if op.quadratic_form(&u)? > 0.0 {
            let nrm = u.norm_l2();
            let mut u = u;
            u.scale(1.0 / nrm);
            return Ok(u);
        }
    }
    Err(Error::NoPositiveDirection(format!("band-edge data at k = {k} gives a non-positive quadratic form")))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct W1NormEstimate {
    pub value: f64,
    pub per_k: Vec<(i64, f64)>,
    /// `"energy-norm"` when the operator norm on the energy space was computed,
    /// `"spectral-radius"` for the large-grid fallback.
    pub method: String,
    pub converged: bool,
}

/// Above this many interior nodes the dense energy-norm computation is skipped.
pub const DENSE_LIMIT: usize = 1200;

/// Largest |eigenvalue| of a symmetric operator by Lanczos with full reorthogonalization.
fn lanczos_extreme<F: Fn(&DVector<f64>) -> DVector<f64>>(apply: F, n: usize, steps: usize) -> (f64, bool) {
    let m = steps.min(n);
    let mut q: Vec<DVector<f64>> = Vec::with_capacity(m);
    let mut alpha = Vec::with_capacity(m);
    let mut beta: Vec<f64> = Vec::with_capacity(m);
    let mut v = DVector::from_fn(n, |i, _| 1.0 + ((i * 37 % 101) as f64) / 101.0);
    v /= v.norm();
    let mut estimate = 0.0;
    let mut converged = false;
    for j in 0..m {
        q.push(v.clone());
        let mut w = apply(&v);
        let a = w.dot(&v);
        alpha.push(a);
        for qi in &q {
            let c = w.dot(qi);
            w -= qi * c;
        }
        for qi in &q {
            let c = w.dot(qi);
            w -= qi * c;
        }
        let b = w.norm();
        let size = j + 1;
        let mut t = DMatrix::<f64>::zeros(size, size);
        for i in 0..size {
            t[(i, i)] = alpha[i];
            if i + 1 < size {
                t[(i, i + 1)] = beta[i];
                t[(i + 1, i)] = beta[i];
            }
        }
        let eig = SymmetricEigen::new(t);
        let (idx, val) = eig
            .eigenvalues
            .iter()
            .enumerate()
            .fold((0, 0.0f64), |acc, (i, x)| if x.abs() > acc.1.abs() { (i, *x) } else { acc });
        estimate = val.abs();
        let resid = (b * eig.eigenvectors[(size - 1, idx)]).abs();
        if resid <= 1e-11 * estimate.max(f64::MIN_POSITIVE) || b < 1e-14 {
            converged = true;
            break;
        }
        beta.push(b);
        v = w / b;
    }
    (estimate, converged)
}

/// `‖W₁‖` measured in the energy norm of `W₀`, i.e. the largest `|μ|` with
/// `W₁ u = μ |W₀| u`, for each active frequency.
pub fn estimate_w1_norm(op: &EffectiveOperator) -> Result<W1NormEstimate> {
    let n = op.grid.n_points - 2;
    let omega = op.omega();
    if n <= DENSE_LIMIT {
        let t = weighted_laplacian(&op.v, op.grid.dx());
        let mut b = DMatrix::<f64>::zeros(n, n);
        for i in 0..n {
            b[(i, i)] = t.a[i];
            if i + 1 < n {
                b[(i, i + 1)] = t.b[i];
                b[(i + 1, i)] = t.b[i];
            }
        }
        let eig = SymmetricEigen::new(b);
        let q = eig.eigenvectors;
        let lam = eig.eigenvalues;
        let per: Vec<(i64, f64, bool)> = op
            .blocks
            .par_iter()
            .map(|blk| {
                let w2 = omega * omega * (blk.k * blk.k) as f64;
                let d: Vec<f64> = lam.iter().map(|l| (l - w2).abs().powf(-0.5)).collect();
                if d.iter().any(|x| !x.is_finite()) {
                    return Err(Error::Singular { k: blk.k, detail: "omega^2 k^2 is a discrete eigenvalue".into() });
                }
                let mv: Vec<f64> = blk.g_diag.iter().zip(interior(&op.v)).map(|(g, v)| g / v).collect();
                let apply = |x: &DVector<f64>| {
                    let y = DVector::from_fn(n, |i, _| d[i] * x[i]);
                    let mut z = &q * y;
                    for i in 0..n {
                        z[i] *= mv[i];
                    }
                    let w = q.tr_mul(&z);
                    DVector::from_fn(n, |i, _| d[i] * w[i])
                };
                let (val, ok) = lanczos_extreme(apply, n, 300);
                Ok((blk.k, val, ok))
            })
            .collect::<Result<_>>()?;
        let value = per.iter().map(|p| p.1).fold(0.0, f64::max);
        let converged = per.iter().all(|p| p.2);
        return Ok(W1NormEstimate {
            value,
            per_k: per.iter().map(|p| (p.0, p.1)).collect(),
            method: "energy-norm".into(),
            converged,
        });
    }
    // large grids: spectral radius of W₀⁻¹ W₁ by power iteration on tridiagonal solves
    let per: Vec<(i64, f64, bool)> = op
        .blocks
        .par_iter()
        .map(|blk| {
            let lu0 = TridiagLu::factor(&blk.a0).map_err(|e| Error::Singular { k: blk.k, detail: e.to_string() })?;
            let mut x: Vec<f64> = (0..n).map(|i| 1.0 + ((i * 37 % 101) as f64) / 101.0).collect();
            let mut est = 0.0;
            let mut ok = false;
            for _ in 0..500 {
                let y: Vec<f64> = x.iter().zip(&blk.g_diag).map(|(a, g)| a * g).collect();
                let y = lu0.solve(&y);
                let nrm = y.iter().map(|v| v * v).sum::<f64>().sqrt();
                let prev = est;
                est = nrm / x.iter().map(|v| v * v).sum::<f64>().sqrt();
                if nrm == 0.0 {
                    ok = true;
                    break;
                }
                x = y.iter().map(|v| v / nrm).collect();
                if (est - prev).abs() <= 1e-10 * est {
                    ok = true;
                    break;
                }
            }
            Ok((blk.k, est, ok))
        })
        .collect::<Result<_>>()?;
    Ok(W1NormEstimate {
        value: per.iter().map(|p| p.1).fold(0.0, f64::max),
        per_k: per.iter().map(|p| (p.0, p.1)).collect(),
        method: "spectral-radius".into(),
        converged: per.iter().all(|p| p.2),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::material::{G1Kernel, NuKernel, StepWeight};
    use std::f64::consts::PI;

    fn setup(n: usize, g1: f64, hsign: f64) -> EffectiveOperator {
        let w = StepWeight::two_layer(2.0 * PI, 1.0, 0.25, 2.0).unwrap();
        let grid = SpaceGrid::new(-2.875, 3.125, n).unwrap();
        let lat = FrequencyLattice::new(2.0 * PI, 5, 1).unwrap();
        let v = w.sample_on(&grid);
        let kc = KernelCoefficients::new(2.0 * PI, &NuKernel::Triangular, &G1Kernel::CosAbs, vec![g1; n], 15).unwrap();
        let h = NonlinearWeight::new(grid.nodes().iter().map(|x| hsign * (0.2 + (-x * x).exp())).collect()).unwrap();
        EffectiveOperator::build(&grid, &lat, &v, &kc, &h).unwrap()
    }

    fn random_field(op: &EffectiveOperator, seed: f64) -> TimeFourierField {
        let mut u = TimeFourierField::from_fn(&op.grid, &op.lattice, |k, x| {
            Complex64::new((seed * x + k as f64).sin(), (x * k as f64 - seed).cos())
        });
        for c in u.coeffs.iter_mut() {
            let n = c.len();
            c[0] = Complex64::new(0.0, 0.0);
            c[n - 1] = Complex64::new(0.0, 0.0);
        }
        u
    }

    #[test]
    fn scale_is_minus_quarter_for_triangular_kernel() {
        let op = setup(121, 0.0, 1.0);
        for b in &op.blocks {
            assert!((b.scale + 0.25).abs() < 1e-14);
        }
    }

    #[test]
    fn solve_inverts_apply() {
        let op = setup(241, 0.3, 1.0);
        let u = random_field(&op, 1.3);
        let back = op.solve_w(&op.apply_w(&u).unwrap()).unwrap();
        for (a, b) in u.coeffs.iter().flatten().zip(back.coeffs.iter().flatten()) {
            assert!((a - b).norm() < 1e-10);
        }
    }

    #[test]
    fn k_is_symmetric() {
        let op = setup(241, 0.3, 1.0);
        let a = random_field(&op, 0.7);
        let b = random_field(&op, 2.1);
        let l = crate::grid::inner_product_l2(&op.apply_k(&a).unwrap(), &b, None).unwrap();
        let r = crate::grid::inner_product_l2(&a, &op.apply_k(&b).unwrap(), None).unwrap();
        assert!((l - r).abs() < 1e-10 * l.abs().max(1.0));
    }

    #[test]
    fn quadratic_form_is_indefinite() {
        let op = setup(241, 0.0, 1.0);
        for &k in &op.lattice.active_set {
            let (_, _, qp, qm) = sign_witnesses(&op, k).unwrap();
            assert!(qp * qm < 0.0, "k={k}: {qp} {qm}");
        }
        let a = find_anchor(&op, 1).unwrap();
        assert!(op.quadratic_form(&a).unwrap() > 0.0);
    }

    #[test]
    fn negation_flips_w() {
        let op = setup(121, 0.1, 1.0);
        let neg = setup(121, 0.1, -1.0);
        let t = negate_h_transform(&op);
        for (a, b) in t.blocks.iter().zip(&neg.blocks) {
            assert_eq!(a.scale, b.scale);
        }
        let a = find_anchor(&neg, 1).unwrap();
        assert!(neg.quadratic_form(&a).unwrap() > 0.0);
    }

    #[test]
    fn w1_norm_matches_dense_oracle() {
        let n = 66; // 64 interior nodes
        let op = setup(n, 0.4, 1.0);
        let est = estimate_w1_norm(&op).unwrap();
        assert_eq!(est.method, "energy-norm");
        let dx = op.grid.dx();
        let ni = n - 2;
        let v = interior(&op.v);
        for blk in &op.blocks {
            // |B - ω²k²| via the square root of its square, then a Cholesky congruence
            let w2 = op.omega().powi(2) * (blk.k * blk.k) as f64;
            let mut b = DMatrix::<f64>::zeros(ni, ni);
            for i in 0..ni {
                b[(i, i)] = 2.0 / (dx * dx * v[i]) - w2;
                if i + 1 < ni {
                    let o = -1.0 / (dx * dx * (v[i] * v[i + 1]).sqrt());
                    b[(i, i + 1)] = o;
                    b[(i + 1, i)] = o;
                }
            }
            let sq = SymmetricEigen::new(&b * &b);
            let abs_b = &sq.eigenvectors
                * DMatrix::from_diagonal(&sq.eigenvalues.map(|x| x.max(0.0).sqrt()))
                * sq.eigenvectors.transpose();
            let l = abs_b.cholesky().unwrap().l();
            let linv = l.clone().try_inverse().unwrap();
            let m = DMatrix::from_diagonal(&DVector::from_fn(ni, |i, _| blk.g_diag[i] / v[i]));
            let s = &linv * m * linv.transpose();
            let sv = s.singular_values().max();
            let got = est.per_k.iter().find(|p| p.0 == blk.k).unwrap().1;
            assert!((sv - got).abs() < 1e-8 * sv.max(1e-12), "k={}: {sv} vs {got}", blk.k);
        }
    }

    #[test]
    fn neumann_bound_holds_densely() {
        // ‖W⁻¹‖ ≤ ‖W₀⁻¹‖ / (1 - q) in the energy norm, where ‖W₀⁻¹‖ = 1
        let n = 66;
        let op = setup(n, 0.4, 1.0);
        let est = estimate_w1_norm(&op).unwrap();
        let ni = n - 2;
        let dx = op.grid.dx();
        let v = interior(&op.v);
        let mut b = DMatrix::<f64>::zeros(ni, ni);
        for i in 0..ni {
            b[(i, i)] = 2.0 / (dx * dx * v[i]);
            if i + 1 < ni {
                let o = -1.0 / (dx * dx * (v[i] * v[i + 1]).sqrt());
                b[(i, i + 1)] = o;
                b[(i + 1, i)] = o;
            }
        }
        let eig = SymmetricEigen::new(b);
        for blk in &op.blocks {
            let q = est.per_k.iter().find(|p| p.0 == blk.k).unwrap().1;
            assert!(q < 1.0);
            let w2 = op.omega().powi(2) * (blk.k * blk.k) as f64;
            let d = eig.eigenvalues.map(|l| (l - w2).abs().powf(-0.5));
            let sgn = eig.eigenvalues.map(|l| (l - w2).signum());
            let mv = DMatrix::from_diagonal(&DVector::from_fn(ni, |i, _| blk.g_diag[i] / v[i]));
            let dd = DMatrix::from_diagonal(&d);
            let s = &dd * eig.eigenvectors.transpose() * mv * &eig.eigenvectors * &dd;
            let total = DMatrix::from_diagonal(&sgn) + s;
            let inv_norm = 1.0 / total.singular_values().min();
            assert!(inv_norm <= 1.0 / (1.0 - q) + 1e-9, "k={}: {inv_norm} vs {}", blk.k, 1.0 / (1.0 - q));
        }
    }
}
