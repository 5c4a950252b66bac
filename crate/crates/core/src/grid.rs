//! Spatial grids, odd time-frequency lattices and time-periodic fields stored
//! by their positive-frequency Fourier coefficients.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Uniform grid on `[x_min, x_max]` with Dirichlet ends.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpaceGrid {
    pub x_min: f64,
    pub x_max: f64,
    pub n_points: usize,
}

impl SpaceGrid {
    pub fn new(x_min: f64, x_max: f64, n_points: usize) -> Result<Self> {
        if !(x_min.is_finite() && x_max.is_finite()) || x_max <= x_min {
            return Err(Error::Config(format!(
                "grid bounds must satisfy x_min < x_max, got [{x_min}, {x_max}]"
            )));
        }
        if n_points < 5 {
            return Err(Error::Config(format!("grid needs at least 5 points, got {n_points}")));
        }
        Ok(Self { x_min, x_max, n_points })
    }

    pub fn dx(&self) -> f64 {
        (self.x_max - self.x_min) / (self.n_points - 1) as f64
    }

    pub fn length(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn x(&self, i: usize) -> f64 {
        self.x_min + i as f64 * self.dx()
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.n_points).map(|i| self.x(i)).collect()
    }

    /// Trapezoid weights. Boundary nodes carry half a cell.
    pub fn trapezoid_weights(&self) -> Vec<f64> {
        let dx = self.dx();
        let mut w = vec![dx; self.n_points];
        w[0] = 0.5 * dx;
        w[self.n_points - 1] = 0.5 * dx;
        w
    }

    /// Same interval, `factor` times as many cells.
    pub fn refined(&self, factor: usize) -> SpaceGrid {
        SpaceGrid {
            x_min: self.x_min,
            x_max: self.x_max,
            n_points: factor.max(1) * (self.n_points - 1) + 1,
        }
    }

    /// Grid extended by `left` and `right` whole cells at fixed spacing.
    pub fn extended(&self, left: usize, right: usize) -> SpaceGrid {
        let dx = self.dx();
        SpaceGrid {
            x_min: self.x_min - left as f64 * dx,
            x_max: self.x_max + right as f64 * dx,
            n_points: self.n_points + left + right,
        }
    }

    /// Index of the node at `x`, if `x` lies on the grid within `tol`.
    pub fn node_index(&self, x: f64, tol: f64) -> Option<usize> {
        let s = (x - self.x_min) / self.dx();
        let r = s.round();
        if r < 0.0 || r > (self.n_points - 1) as f64 {
            return None;
        }
        if (s - r).abs() * self.dx() <= tol {
            Some(r as usize)
        } else {
            None
        }
    }
}

/// Odd frequencies `k` (multiples of `sublattice_m`) kept in a truncated field.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrequencyLattice {
    pub period: f64,
    pub k_max: i64,
    pub sublattice_m: i64,
    pub active_set: Vec<i64>,
}

impl FrequencyLattice {
    /// All odd multiples of `m` up to `k_max`.
    pub fn new(period: f64, k_max: i64, m: i64) -> Result<Self> {
        if !(period.is_finite() && period > 0.0) {
            return Err(Error::Config(format!("period must be positive, got {period}")));
        }
        if k_max < 1 || k_max % 2 == 0 {
            return Err(Error::Config(format!("k_max must be a positive odd integer, got {k_max}")));
        }
        if m < 1 || m % 2 == 0 {
            return Err(Error::Config(format!("sublattice_m must be a positive odd integer, got {m}")));
        }
        let active: Vec<i64> = (1..=k_max).step_by(2).filter(|k| k % m == 0).collect();
        if active.is_empty() {
            return Err(Error::Config(format!("no odd multiple of {m} is <= k_max = {k_max}")));
        }
        Ok(Self { period, k_max, sublattice_m: m, active_set: active })
    }

    /// Lattice with an explicit active set. Every entry must be a positive odd
    /// multiple of `m` no larger than `k_max`.
    pub fn with_active_set(period: f64, k_max: i64, m: i64, active: Vec<i64>) -> Result<Self> {
        let base = Self::new(period, k_max, m)?;
        let mut active = active;
        active.sort_unstable();
        active.dedup();
        if active.is_empty() {
            return Err(Error::Config("active set is empty".into()));
        }
        for &k in &active {
            if k < 1 || k % 2 == 0 || k % m != 0 || k > k_max {
                return Err(Error::Config(format!(
                    "active frequency {k} is not a positive odd multiple of {m} below {k_max}"
                )));
            }
        }
        Ok(Self { active_set: active, ..base })
    }

    pub fn omega(&self) -> f64 {
        2.0 * PI / self.period
    }

    pub fn len(&self) -> usize {
        self.active_set.len()
    }

    pub fn is_empty(&self) -> bool {
        self.active_set.is_empty()
    }

    pub fn index_of(&self, k: i64) -> Option<usize> {
        self.active_set.binary_search(&k).ok()
    }

    pub fn contains(&self, k: i64) -> bool {
        self.index_of(k).is_some()
    }

    /// All odd multiples of `m` up to `k_new`, keeping the period and `m`.
    pub fn full_up_to(&self, k_new: i64) -> FrequencyLattice {
        let k_new = if k_new % 2 == 0 { k_new + 1 } else { k_new };
        let active = (1..=k_new).step_by(2).filter(|k| k % self.sublattice_m == 0).collect();
        FrequencyLattice {
            period: self.period,
            k_max: k_new,
            sublattice_m: self.sublattice_m,
            active_set: active,
        }
    }

    /// Restriction to odd multiples of `m` (which must itself be odd).
    pub fn restricted_to(&self, m: i64) -> Result<FrequencyLattice> {
        if m < 1 || m % 2 == 0 {
            return Err(Error::Config(format!("sublattice_m must be a positive odd integer, got {m}")));
        }
        let active: Vec<i64> = self.active_set.iter().copied().filter(|k| k % m == 0).collect();
        if active.is_empty() {
            return Err(Error::Config(format!(
                "sublattice {m} leaves no active frequency below k_max = {}",
                self.k_max
            )));
        }
        let m_new = lcm(self.sublattice_m, m);
        Ok(FrequencyLattice {
            period: self.period,
            k_max: self.k_max,
            sublattice_m: m_new,
            active_set: active,
        })
    }
}

fn gcd(a: i64, b: i64) -> i64 {
    if b == 0 {
        a.abs()
    } else {
        gcd(b, a % b)
    }
}

fn lcm(a: i64, b: i64) -> i64 {
    a / gcd(a, b) * b
}

/// Greatest common divisor of a set of frequencies (0 for an empty set).
pub fn gcd_of(ks: &[i64]) -> i64 {
    ks.iter().fold(0, |g, &k| gcd(g, k))
}

/// Real time-periodic field `u(x,t) = sum_k û_k(x) e^{iωkt}` with `û_{-k} = conj(û_k)`.
/// Only `k > 0` is stored, indexed like `lattice.active_set`.
#[derive(Clone, Debug, PartialEq)]
pub struct TimeFourierField {
    pub grid: SpaceGrid,
    pub lattice: FrequencyLattice,
    pub coeffs: Vec<Vec<Complex64>>,
}

impl TimeFourierField {
    pub fn zeros(grid: &SpaceGrid, lattice: &FrequencyLattice) -> Self {
        Self {
            grid: grid.clone(),
            lattice: lattice.clone(),
            coeffs: vec![vec![Complex64::new(0.0, 0.0); grid.n_points]; lattice.len()],
        }
    }

    pub fn from_fn<F: Fn(i64, f64) -> Complex64>(grid: &SpaceGrid, lattice: &FrequencyLattice, f: F) -> Self {
        let xs = grid.nodes();
        let coeffs = lattice
            .active_set
            .iter()
            .map(|&k| xs.iter().map(|&x| f(k, x)).collect())
            .collect();
        Self { grid: grid.clone(), lattice: lattice.clone(), coeffs }
    }

    pub fn coeff(&self, k: i64) -> Option<&[Complex64]> {
        self.lattice.index_of(k).map(|q| self.coeffs[q].as_slice())
    }

    pub fn coeff_mut(&mut self, k: i64) -> Option<&mut Vec<Complex64>> {
        match self.lattice.index_of(k) {
            Some(q) => Some(&mut self.coeffs[q]),
            None => None,
        }
    }

    pub fn scale(&mut self, s: f64) {
        for c in self.coeffs.iter_mut().flatten() {
            *c *= s;
        }
    }

    /// `self += a * other`; both fields must share grid and lattice.
    pub fn axpy(&mut self, a: f64, other: &TimeFourierField) -> Result<()> {
        self.check_compatible(other)?;
        for (c, o) in self.coeffs.iter_mut().flatten().zip(other.coeffs.iter().flatten()) {
            *c += *o * a;
        }
        Ok(())
    }

    pub fn check_compatible(&self, other: &TimeFourierField) -> Result<()> {
        if self.grid != other.grid {
            return Err(Error::Usage("fields live on different spatial grids".into()));
        }
        if self.lattice.active_set != other.lattice.active_set {
            return Err(Error::Usage("fields live on different frequency lattices".into()));
        }
        Ok(())
    }

    /// Copy into `target` lattice: shared frequencies are copied, the rest are zero.
    pub fn embed(&self, target: &FrequencyLattice) -> TimeFourierField {
        let mut out = TimeFourierField::zeros(&self.grid, target);
        for (q, &k) in self.lattice.active_set.iter().enumerate() {
            if let Some(p) = target.index_of(k) {
                out.coeffs[p] = self.coeffs[q].clone();
            }
        }
        out
    }

    /// Largest |û_k(x)| over all k and x.
    pub fn max_abs(&self) -> f64 {
        self.coeffs.iter().flatten().map(|c| c.norm()).fold(0.0, f64::max)
    }

    /// `(k, ‖û_k‖)` pairs in the weighted L² norm of the grid.
    pub fn mode_norms(&self) -> Vec<(i64, f64)> {
        let w = self.grid.trapezoid_weights();
        self.lattice
            .active_set
            .iter()
            .zip(&self.coeffs)
            .map(|(&k, c)| (k, c.iter().zip(&w).map(|(z, wi)| wi * z.norm_sqr()).sum::<f64>().sqrt()))
            .collect()
    }

    /// Real L² norm over space-time with the Haar time measure.
    pub fn norm_l2(&self) -> f64 {
        inner_product_l2(self, self, None).map(|v| v.max(0.0).sqrt()).unwrap_or(0.0)
    }

    /// Frequencies whose coefficient norm exceeds `rel_tol` times the largest one.
    pub fn support(&self, rel_tol: f64) -> Vec<i64> {
        let norms = self.mode_norms();
        let top = norms.iter().map(|p| p.1).fold(0.0, f64::max);
        norms.into_iter().filter(|p| top > 0.0 && p.1 > rel_tol * top).map(|p| p.0).collect()
    }

    /// Linear interpolation in x onto `grid` (which must cover the same interval).
    pub fn interpolate_to(&self, grid: &SpaceGrid) -> TimeFourierField {
        let xs = grid.nodes();
        let dx = self.grid.dx();
        let n = self.grid.n_points;
        let coeffs = self
            .coeffs
            .iter()
            .map(|c| {
                xs.iter()
                    .map(|&x| {
                        let s = ((x - self.grid.x_min) / dx).clamp(0.0, (n - 1) as f64);
                        let i = (s.floor() as usize).min(n - 2);
                        let f = s - i as f64;
                        c[i] * (1.0 - f) + c[i + 1] * f
                    })
                    .collect()
            })
            .collect();
        TimeFourierField { grid: grid.clone(), lattice: self.lattice.clone(), coeffs }
    }
}

/// Real samples `v(x_i, t_j)`, row-major in `i`.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleField {
    pub n_points: usize,
    pub n_times: usize,
    pub data: Vec<f64>,
}

impl SampleField {
    pub fn zeros(n_points: usize, n_times: usize) -> Self {
        Self { n_points, n_times, data: vec![0.0; n_points * n_times] }
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n_times..(i + 1) * self.n_times]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.n_times..(i + 1) * self.n_times]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n_times + j]
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Equispaced sampling of fields whose frequencies are odd multiples of `m`.
/// Samples live on `[0, T/m)`, which carries the full Haar average for such fields.
#[derive(Clone, Debug)]
pub struct TimeSampler {
    pub period: f64,
    pub m: i64,
    pub n_samples: usize,
    pub ks: Vec<i64>,
    phases: Vec<Complex64>,
}

impl TimeSampler {
    pub fn new(period: f64, m: i64, n_samples: usize, ks: &[i64]) -> Result<Self> {
        if n_samples == 0 {
            return Err(Error::Usage("need at least one time sample".into()));
        }
        if ks.iter().any(|k| k % m != 0) {
            return Err(Error::Usage(format!("sampler with m = {m} cannot represent all of {ks:?}")));
        }
        let mut phases = Vec::with_capacity(n_samples * ks.len());
        for j in 0..n_samples {
            for &k in ks {
                // reduce the phase exactly before taking sin/cos
                let kk = k / m;
                let r = ((kk as i128 * j as i128).rem_euclid(n_samples as i128)) as f64;
                let arg = 2.0 * PI * r / n_samples as f64;
                phases.push(Complex64::new(arg.cos(), arg.sin()));
            }
        }
        Ok(Self { period, m, n_samples, ks: ks.to_vec(), phases })
    }

    pub fn times(&self) -> Vec<f64> {
        let dt = self.period / (self.m as f64 * self.n_samples as f64);
        (0..self.n_samples).map(|j| j as f64 * dt).collect()
    }

    /// `out[j] = sum_q 2 Re(c_q e^{iωk_q t_j})`.
    pub fn synthesize_node(&self, coeffs: &[Complex64], out: &mut [f64]) {
        let nk = self.ks.len();
        for (j, o) in out.iter_mut().enumerate() {
            let ph = &self.phases[j * nk..(j + 1) * nk];
            let mut s = 0.0;
            for (c, p) in coeffs.iter().zip(ph) {
                s += c.re * p.re - c.im * p.im;
            }
            *o = 2.0 * s;
        }
    }

    /// Discrete Fourier coefficients `(1/M) sum_j f_j e^{-iωk t_j}`.
    pub fn analyze_node(&self, samples: &[f64], out: &mut [Complex64]) {
        let nk = self.ks.len();
        for c in out.iter_mut() {
            *c = Complex64::new(0.0, 0.0);
        }
        for (j, &f) in samples.iter().enumerate() {
            let ph = &self.phases[j * nk..(j + 1) * nk];
            for (c, p) in out.iter_mut().zip(ph) {
                c.re += f * p.re;
                c.im -= f * p.im;
            }
        }
        let inv = 1.0 / self.n_samples as f64;
        for c in out.iter_mut() {
            *c *= inv;
        }
    }

    /// Samples of `field`. Frequencies of `field` outside `self.ks` are an error.
    pub fn synthesize(&self, field: &TimeFourierField) -> Result<SampleField> {
        let map = self.column_map(&field.lattice.active_set)?;
        let n = field.grid.n_points;
        let mut out = SampleField::zeros(n, self.n_samples);
        let mut buf = vec![Complex64::new(0.0, 0.0); self.ks.len()];
        for i in 0..n {
            for b in buf.iter_mut() {
                *b = Complex64::new(0.0, 0.0);
            }
            for (q, &col) in map.iter().enumerate() {
                buf[col] = field.coeffs[q][i];
            }
            self.synthesize_node(&buf, out.row_mut(i));
        }
        Ok(out)
    }

    /// Coefficients of `samples` on `lattice` (a subset of `self.ks`).
    pub fn analyze(&self, samples: &SampleField, grid: &SpaceGrid, lattice: &FrequencyLattice) -> Result<TimeFourierField> {
        let map = self.column_map(&lattice.active_set)?;
        let mut out = TimeFourierField::zeros(grid, lattice);
        let mut buf = vec![Complex64::new(0.0, 0.0); self.ks.len()];
        for i in 0..samples.n_points {
            self.analyze_node(samples.row(i), &mut buf);
            for (q, &col) in map.iter().enumerate() {
                out.coeffs[q][i] = buf[col];
            }
        }
        Ok(out)
    }

    fn column_map(&self, ks: &[i64]) -> Result<Vec<usize>> {
        ks.iter()
            .map(|k| {
                self.ks
                    .iter()
                    .position(|q| q == k)
                    .ok_or_else(|| Error::Usage(format!("frequency {k} is not carried by the sampler")))
            })
            .collect()
    }
}

/// Samples of `field` at `n_times` equispaced phases over one full period `T`.
/// Returned as an `n_points x n_times` sample array.
pub fn evaluate_field(field: &TimeFourierField, n_times: usize) -> Result<SampleField> {
    let max_k = *field.lattice.active_set.last().unwrap_or(&1);
    if n_times < 2 * max_k as usize + 1 {
        return Err(Error::Usage(format!(
            "{n_times} time samples cannot resolve frequency {max_k}; need at least {}",
            2 * max_k + 1
        )));
    }
    let omega = field.lattice.omega();
    let n = field.grid.n_points;
    let mut out = SampleField::zeros(n, n_times);
    let ts: Vec<f64> = (0..n_times).map(|j| j as f64 * field.lattice.period / n_times as f64).collect();
    let mut peak = 0.0f64;
    let mut residue = 0.0f64;
    for i in 0..n {
        for (j, &t) in ts.iter().enumerate() {
            let mut s = Complex64::new(0.0, 0.0);
            for (q, &k) in field.lattice.active_set.iter().enumerate() {
                let e = Complex64::from_polar(1.0, omega * k as f64 * t);
                let c = field.coeffs[q][i];
                s += c * e + c.conj() * e.conj();
            }
            peak = peak.max(s.re.abs());
            residue = residue.max(s.im.abs());
            out.data[i * n_times + j] = s.re;
        }
    }
    if residue > 1e-10 * peak.max(f64::MIN_POSITIVE) {
        return Err(Error::Usage(format!("imaginary residue {residue:e} in synthesized field")));
    }
    Ok(out)
}

/// Number of collocation samples that resolves cubes of frequencies up to `k_top` on a
/// lattice with base `m` without aliasing.
pub fn alias_free_samples(k_top: i64, m: i64) -> usize {
    let kk = (k_top / m).max(1) as usize;
    let mut n = 2 * kk + 2;
    while !n.is_multiple_of(4) {
        n += 1;
    }
    n
}

/// Coefficients of `u³`. `k_buffer` must be at least `3 k_max`; with `full_output`
/// the result carries every odd multiple of `m` up to `k_buffer`, otherwise the
/// input lattice.
pub fn pointwise_cube(field: &TimeFourierField, k_buffer: i64, full_output: bool) -> Result<TimeFourierField> {
    let k_top = *field.lattice.active_set.last().unwrap_or(&1);
    if k_buffer < 3 * k_top {
        return Err(Error::Usage(format!(
            "k_buffer = {k_buffer} is below 3 * k_max = {}; the cube would alias",
            3 * k_top
        )));
    }
    let m = field.lattice.sublattice_m;
    let out_lattice = if full_output { field.lattice.full_up_to(k_buffer) } else { field.lattice.clone() };
    let m_samples = alias_free_samples(k_buffer, m).max(2 * (k_buffer / m) as usize + 1);
    let all = field.lattice.full_up_to(k_buffer);
    let sampler = TimeSampler::new(field.lattice.period, m, m_samples, &all.active_set)?;
    let mut s = sampler.synthesize(&field.embed(&all))?;
    for v in s.data.iter_mut() {
        *v = *v * *v * *v;
    }
    sampler.analyze(&s, &field.grid, &out_lattice)
}

/// Fourier multiplier `m̂_k` on positive frequencies; negative ones are conjugates.
#[derive(Clone, Debug, PartialEq)]
pub struct MultiplierSymbol {
    pub values: BTreeMap<i64, Complex64>,
}

impl MultiplierSymbol {
    pub fn from_fn<F: Fn(i64) -> Complex64>(ks: &[i64], f: F) -> Self {
        Self { values: ks.iter().map(|&k| (k, f(k))).collect() }
    }

    pub fn identity(ks: &[i64]) -> Self {
        Self::from_fn(ks, |_| Complex64::new(1.0, 0.0))
    }

    /// `|ωk|^s`.
    pub fn fractional_derivative(s: f64, omega: f64, ks: &[i64]) -> Self {
        Self::from_fn(ks, |k| Complex64::new((omega * k as f64).abs().powf(s), 0.0))
    }

    /// `(iωk)^order`.
    pub fn time_derivative(order: i32, omega: f64, ks: &[i64]) -> Self {
        Self::from_fn(ks, |k| Complex64::new(0.0, omega * k as f64).powi(order))
    }

    pub fn compose(&self, other: &MultiplierSymbol) -> Result<MultiplierSymbol> {
        let mut values = BTreeMap::new();
        for (k, a) in &self.values {
            let b = other
                .values
                .get(k)
                .ok_or_else(|| Error::Usage(format!("multiplier lacks frequency {k}")))?;
            values.insert(*k, a * b);
        }
        Ok(MultiplierSymbol { values })
    }
}

pub fn apply_multiplier(field: &TimeFourierField, symbol: &MultiplierSymbol) -> Result<TimeFourierField> {
    let mut out = field.clone();
    for (q, &k) in field.lattice.active_set.iter().enumerate() {
        let m = symbol
            .values
            .get(&k)
            .ok_or_else(|| Error::Usage(format!("multiplier symbol is not defined at k = {k}")))?;
        for c in out.coeffs[q].iter_mut() {
            *c *= m;
        }
    }
    Ok(out)
}

/// `∫∫ u v weight dx dt` with trapezoid weights in x and the Haar measure in t,
/// i.e. `2 sum_{k>0} Re ∫ û_k conj(v̂_k) weight dx`.
pub fn inner_product_l2(u: &TimeFourierField, v: &TimeFourierField, weight: Option<&[f64]>) -> Result<f64> {
    u.check_compatible(v)?;
    let w = u.grid.trapezoid_weights();
    if let Some(p) = weight {
        if p.len() != w.len() {
            return Err(Error::Usage("weight length does not match the grid".into()));
        }
    }
    let mut s = 0.0;
    for (a, b) in u.coeffs.iter().zip(&v.coeffs) {
        for i in 0..w.len() {
            let wi = w[i] * weight.map_or(1.0, |p| p[i]);
            s += wi * (a[i] * b[i].conj()).re;
        }
    }
    Ok(2.0 * s)
}
