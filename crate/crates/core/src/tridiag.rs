//! Tridiagonal linear algebra: pivoted LU, condition estimates, Sturm counts.

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Real tridiagonal matrix with subdiagonal `lower`, diagonal `diag`, superdiagonal `upper`.
#[derive(Clone, Debug, PartialEq)]
pub struct Tridiagonal {
    pub lower: Vec<f64>,
    pub diag: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Tridiagonal {
    pub fn new(lower: Vec<f64>, diag: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        let n = diag.len();
        if n == 0 || lower.len() + 1 != n || upper.len() + 1 != n {
            return Err(Error::Usage("inconsistent tridiagonal band lengths".into()));
        }
        Ok(Self { lower, diag, upper })
    }

    pub fn n(&self) -> usize {
        self.diag.len()
    }

    pub fn matvec<T>(&self, x: &[T]) -> Vec<T>
    where
        T: Copy + std::ops::Mul<f64, Output = T> + std::ops::Add<Output = T>,
    {
        let n = self.n();
        (0..n)
            .map(|i| {
                let mut s = x[i] * self.diag[i];
                if i > 0 {
                    s = s + x[i - 1] * self.lower[i - 1];
                }
                if i + 1 < n {
                    s = s + x[i + 1] * self.upper[i];
                }
                s
            })
            .collect()
    }

    /// Maximum absolute column sum.
    pub fn norm1(&self) -> f64 {
        let n = self.n();
        (0..n)
            .map(|j| {
                let mut s = self.diag[j].abs();
                if j > 0 {
                    s += self.upper[j - 1].abs();
                }
                if j + 1 < n {
                    s += self.lower[j].abs();
                }
                s
            })
            .fold(0.0, f64::max)
    }
}

/// LU factorization with partial pivoting (row interchanges), as in `gttrf`.
#[derive(Clone, Debug)]
pub struct TridiagLu {
    a: Tridiagonal,
    dl: Vec<f64>,
    d: Vec<f64>,
    du: Vec<f64>,
    du2: Vec<f64>,
    ipiv: Vec<bool>,
}

impl TridiagLu {
    pub fn factor(a: &Tridiagonal) -> Result<Self> {
        let n = a.n();
        let mut dl = a.lower.clone();
        let mut d = a.diag.clone();
        let mut du = a.upper.clone();
        let mut du2 = vec![0.0; n.saturating_sub(2)];
        let mut ipiv = vec![false; n];
        for i in 0..n.saturating_sub(1) {
            if d[i].abs() >= dl[i].abs() {
                if d[i] == 0.0 {
                    return Err(Error::Singular { k: 0, detail: format!("zero pivot at row {i}") });
                }
                let f = dl[i] / d[i];
                dl[i] = f;
                d[i + 1] -= f * du[i];
            } else {
                let f = d[i] / dl[i];
                d[i] = dl[i];
                dl[i] = f;
                let tmp = du[i];
                du[i] = d[i + 1];
                d[i + 1] = tmp - f * d[i + 1];
                if i + 2 < n {
                    du2[i] = du[i + 1];
                    du[i + 1] *= -f;
                }
                ipiv[i] = true;
            }
        }
        if d[n - 1] == 0.0 || d.iter().any(|v| !v.is_finite()) {
            return Err(Error::Singular { k: 0, detail: "zero or non-finite pivot".into() });
        }
        Ok(Self { a: a.clone(), dl, d, du, du2, ipiv })
    }

    pub fn matrix(&self) -> &Tridiagonal {
        &self.a
    }

    fn solve_raw<T>(&self, b: &mut [T])
    where
        T: Copy + std::ops::Mul<f64, Output = T> + std::ops::Sub<Output = T> + std::ops::Div<f64, Output = T>,
    {
        let n = self.d.len();
        for i in 0..n.saturating_sub(1) {
            if self.ipiv[i] {
                b.swap(i, i + 1);
                b[i + 1] = b[i + 1] - b[i] * self.dl[i];
            } else {
                b[i + 1] = b[i + 1] - b[i] * self.dl[i];
            }
        }
        b[n - 1] = b[n - 1] / self.d[n - 1];
        if n >= 2 {
            b[n - 2] = (b[n - 2] - b[n - 1] * self.du[n - 2]) / self.d[n - 2];
        }
        for i in (0..n.saturating_sub(2)).rev() {
            b[i] = (b[i] - b[i + 1] * self.du[i] - b[i + 2] * self.du2[i]) / self.d[i];
        }
    }

    /// Solve `A x = b` with one step of iterative refinement.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.solve_raw(&mut x);
        let ax = self.a.matvec(&x);
        let mut r: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
        self.solve_raw(&mut r);
        x.iter().zip(&r).map(|(a, c)| a + c).collect()
    }

    pub fn solve_complex(&self, b: &[Complex64]) -> Vec<Complex64> {
        let mut x = b.to_vec();
        self.solve_raw(&mut x);
        let ax = self.a.matvec(&x);
        let mut r: Vec<Complex64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
        self.solve_raw(&mut r);
        x.iter().zip(&r).map(|(a, c)| a + c).collect()
    }

    /// Solve with `Aᵀ`. Only used by the condition estimator on symmetric input,
    /// so it refactors the transpose.
    fn solve_transpose(&self, b: &[f64]) -> Result<Vec<f64>> {
        let t = Tridiagonal { lower: self.a.upper.clone(), diag: self.a.diag.clone(), upper: self.a.lower.clone() };
        Ok(TridiagLu::factor(&t)?.solve(b))
    }

    /// Hager's estimate of `‖A‖₁ ‖A⁻¹‖₁`.
    pub fn condition_estimate(&self) -> Result<f64> {
        let n = self.d.len();
        let symmetric = self.a.lower == self.a.upper;
        let mut x = vec![1.0 / n as f64; n];
        let mut est = 0.0;
        for _ in 0..5 {
            let y = self.solve(&x);
            est = y.iter().map(|v| v.abs()).sum::<f64>();
            let xi: Vec<f64> = y.iter().map(|v| if *v >= 0.0 { 1.0 } else { -1.0 }).collect();
            let z = if symmetric { self.solve(&xi) } else { self.solve_transpose(&xi)? };
            let (jmax, zmax) = z
                .iter()
                .enumerate()
                .fold((0, 0.0f64), |acc, (j, v)| if v.abs() > acc.1 { (j, v.abs()) } else { acc });
            let ztx: f64 = z.iter().zip(&x).map(|(a, b)| a * b).sum();
            if zmax <= ztx {
                break;
            }
            x = vec![0.0; n];
            x[jmax] = 1.0;
        }
        Ok(est * self.a.norm1())
    }
}

/// Symmetric tridiagonal matrix given by diagonal `a` and off-diagonal `b`.
#[derive(Clone, Debug)]
pub struct SymTridiagonal {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
}

impl SymTridiagonal {
    /// Number of eigenvalues strictly below `sigma` (Sturm sequence).
    pub fn count_below(&self, sigma: f64) -> usize {
        let mut count = 0;
        let mut d = 1.0;
        let scale = self.a.iter().map(|v| v.abs()).fold(0.0, f64::max).max(1.0);
        for i in 0..self.a.len() {
            let off = if i > 0 { self.b[i - 1] * self.b[i - 1] / d } else { 0.0 };
            d = self.a[i] - sigma - off;
            if d == 0.0 {
                d = -f64::EPSILON * scale;
            }
            if d < 0.0 {
                count += 1;
            }
        }
        count
    }

    /// Eigenvalues in `(lo, hi)`, bisected to absolute tolerance `tol`.
    pub fn eigenvalues_in(&self, lo: f64, hi: f64, tol: f64) -> Vec<f64> {
        let c_lo = self.count_below(lo);
        let c_hi = self.count_below(hi);
        let mut out = Vec::new();
        for idx in c_lo..c_hi {
            // idx-th eigenvalue (0-based): smallest sigma with count_below(sigma) > idx
            let (mut a, mut b) = (lo, hi);
            while b - a > tol * (1.0 + a.abs().max(b.abs())) {
                let mid = 0.5 * (a + b);
                if self.count_below(mid) > idx {
                    b = mid;
                } else {
                    a = mid;
                }
            }
            out.push(0.5 * (a + b));
        }
        out
    }

    /// Gershgorin interval containing the spectrum.
    pub fn bounds(&self) -> (f64, f64) {
        let n = self.a.len();
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for i in 0..n {
            let r = if i > 0 { self.b[i - 1].abs() } else { 0.0 } + if i + 1 < n { self.b[i].abs() } else { 0.0 };
            lo = lo.min(self.a[i] - r);
            hi = hi.max(self.a[i] + r);
        }
        (lo, hi)
    }

    /// The `idx`-th smallest eigenvalue (0-based).
    pub fn eigenvalue_index(&self, idx: usize, tol: f64) -> Option<f64> {
        if idx >= self.a.len() {
            return None;
        }
        let (mut a, mut b) = self.bounds();
        a -= 1.0;
        b += 1.0;
        while b - a > tol * (1.0 + a.abs().max(b.abs())) {
            let mid = 0.5 * (a + b);
            if self.count_below(mid) > idx {
                b = mid;
            } else {
                a = mid;
            }
        }
        Some(0.5 * (a + b))
    }

    pub fn as_tridiagonal(&self, shift: f64) -> Tridiagonal {
        Tridiagonal {
            lower: self.b.clone(),
            diag: self.a.iter().map(|v| v - shift).collect(),
            upper: self.b.clone(),
        }
    }

    /// Eigenvector for an eigenvalue approximation `lambda` by inverse iteration.
    pub fn eigenvector(&self, lambda: f64, seed: u64) -> Result<Vec<f64>> {
        let n = self.a.len();
        let scale = self.a.iter().map(|v| v.abs()).fold(1.0, f64::max);
        let shift = lambda + 1e-13 * scale;
        let lu = TridiagLu::factor(&self.as_tridiagonal(shift))?;
        let mut x: Vec<f64> = (0..n)
            .map(|i| {
                let z = (i as u64).wrapping_mul(6364136223846793005).wrapping_add(seed.wrapping_mul(1442695040888963407));
                ((z >> 11) as f64 / (1u64 << 53) as f64) - 0.5
            })
            .collect();
        for _ in 0..4 {
            x = lu.solve(&x);
            let nrm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
            if !(nrm > 0.0 && nrm.is_finite()) {
                return Err(Error::Singular { k: 0, detail: "inverse iteration broke down".into() });
            }
            for v in x.iter_mut() {
                *v /= nrm;
            }
        }
        Ok(x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dense_solve(a: &Tridiagonal, b: &[f64]) -> Vec<f64> {
        let n = a.n();
        let mut m = nalgebra::DMatrix::<f64>::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = a.diag[i];
            if i > 0 {
                m[(i, i - 1)] = a.lower[i - 1];
            }
            if i + 1 < n {
                m[(i, i + 1)] = a.upper[i];
            }
        }
        let x = m.lu().solve(&nalgebra::DVector::from_column_slice(b)).unwrap();
        x.iter().copied().collect()
    }

    #[test]
    fn pivoted_lu_matches_dense() {
        // indefinite, with small diagonal entries that force pivoting
        let n = 40;
        let diag: Vec<f64> = (0..n).map(|i| ((i * 7) % 5) as f64 - 2.0 + 1e-3).collect();
        let lower: Vec<f64> = (0..n - 1).map(|i| 1.0 + (i % 3) as f64).collect();
        let upper: Vec<f64> = (0..n - 1).map(|i| -1.0 + (i % 2) as f64 * 0.5).collect();
        let a = Tridiagonal::new(lower, diag, upper).unwrap();
        let b: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
        let x = TridiagLu::factor(&a).unwrap().solve(&b);
        let y = dense_solve(&a, &b);
        for (p, q) in x.iter().zip(&y) {
            assert!((p - q).abs() < 1e-10 * (1.0 + q.abs()));
        }
    }

    #[test]
    fn condition_estimate_is_reasonable() {
        let n = 50;
        let a = Tridiagonal::new(vec![-1.0; n - 1], vec![2.0; n], vec![-1.0; n - 1]).unwrap();
        let c = TridiagLu::factor(&a).unwrap().condition_estimate().unwrap();
        // exact 1-norm condition number of the Dirichlet Laplacian grows like n²/2
        assert!(c > 0.3 * (n * n) as f64 && c < 3.0 * (n * n) as f64, "{c}");
    }

    #[test]
    fn sturm_count_matches_sine_spectrum() {
        let n = 30;
        let t = SymTridiagonal { a: vec![2.0; n], b: vec![-1.0; n - 1] };
        let exact: Vec<f64> = (1..=n).map(|j| 2.0 - 2.0 * (j as f64 * std::f64::consts::PI / (n + 1) as f64).cos()).collect();
        let ev = t.eigenvalues_in(0.0, 4.0, 1e-14);
        assert_eq!(ev.len(), n);
        for (a, b) in ev.iter().zip(&exact) {
            assert!((a - b).abs() < 1e-12);
        }
        let v = t.eigenvector(ev[0], 3).unwrap();
        let tv = t.as_tridiagonal(ev[0]).matvec(&v);
        assert!(tv.iter().map(|x| x.abs()).fold(0.0, f64::max) < 1e-10);
    }
}
