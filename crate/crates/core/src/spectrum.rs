//! Floquet bands of `-D² φ = λ V φ` for piecewise-constant periodic `V`, gap
//! certification at `λ = ω²k²`, and isolated eigenvalues of the truncated problem.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{FrequencyLattice, SpaceGrid};
use crate::material::{loglog_slope, Layout, PeriodicCell, StepWeight};
use crate::tridiag::SymTridiagonal;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Band {
    pub lo: f64,
    pub hi: f64,
}

fn sinc_len(phi: f64, len: f64) -> f64 {
    if phi.abs() < 1e-6 {
        len * (1.0 - phi * phi / 6.0)
    } else {
        len * phi.sin() / phi
    }
}

/// Trace of the monodromy matrix of one cell at spectral parameter `lambda`.
pub fn discriminant_cell(cell: &PeriodicCell, lambda: f64) -> f64 {
    // [[m00, m01], [m10, m11]] accumulated as a product of piece transfer matrices
    let (mut m00, mut m01, mut m10, mut m11) = (1.0, 0.0, 0.0, 1.0);
    for &(len, v) in &cell.pieces {
        let s2 = lambda * v;
        let (c, sn_over_s, s_sn) = if s2 >= 0.0 {
            let s = s2.sqrt();
            let phi = s * len;
            (phi.cos(), sinc_len(phi, len), s * phi.sin())
        } else {
            let s = (-s2).sqrt();
            let phi = s * len;
            let sh_over = if phi.abs() < 1e-6 { len * (1.0 + phi * phi / 6.0) } else { len * phi.sinh() / phi };
            (phi.cosh(), sh_over, -s * phi.sinh())
        };
        let (p00, p01, p10, p11) = (c, sn_over_s, -s_sn, c);
        let n00 = p00 * m00 + p01 * m10;
        let n01 = p00 * m01 + p01 * m11;
        let n10 = p10 * m00 + p11 * m10;
        let n11 = p10 * m01 + p11 * m11;
        m00 = n00;
        m01 = n01;
        m10 = n10;
        m11 = n11;
    }
    m00 + m11
}

/// Discriminant of a periodic weight. Half-space weights have one per side; see
/// [`discriminant_cell`].
pub fn discriminant(weight: &StepWeight, lambda: f64) -> Result<f64> {
    match &weight.layout {
        Layout::Periodic(c) => Ok(discriminant_cell(c, lambda)),
        Layout::HalfSpace { .. } => Err(Error::Usage("a half-space weight has one discriminant per side".into())),
    }
}

fn bisect<F: Fn(f64) -> f64>(f: F, mut a: f64, mut b: f64) -> f64 {
    let mut fa = f(a);
    for _ in 0..200 {
        if b - a <= 1e-14 * (1.0 + a.abs()) {
            break;
        }
        let m = 0.5 * (a + b);
        let fm = f(m);
        if (fm <= 0.0) == (fa <= 0.0) {
            a = m;
            fa = fm;
        } else {
            b = m;
        }
    }
    0.5 * (a + b)
}

fn golden_max<F: Fn(f64) -> f64>(f: F, mut a: f64, mut b: f64) -> (f64, f64) {
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..200 {
        if b - a <= 1e-14 * (1.0 + a.abs()) {
            break;
        }
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
    }
    let x = 0.5 * (a + b);
    (x, f(x))
}

/// Scan `[0, λ_max]` with `resolution` samples. Bands that reach `λ_max` are cut there.
fn scan_bands(cell: &PeriodicCell, lambda_max: f64, resolution: usize) -> std::result::Result<Vec<Band>, (f64, f64)> {
    let disc = |l: f64| discriminant_cell(cell, l);
    let excess = |l: f64| disc(l).abs() - 2.0;
    let n = resolution.max(16);
    let lam: Vec<f64> = (0..=n).map(|j| lambda_max * j as f64 / n as f64).collect();
    let vals: Vec<f64> = lam.iter().map(|&l| disc(l)).collect();
    let inband: Vec<bool> = vals.iter().map(|v| v.abs() <= 2.0).collect();

    // runs of in-band samples delimited by bisected edges
    let mut raw = Vec::new();
    let mut start = if inband[0] { Some(0.0) } else { None };
    for j in 0..n {
        if inband[j] != inband[j + 1] {
            let e = bisect(excess, lam[j], lam[j + 1]);
            if inband[j] {
                raw.push(Band { lo: start.take().unwrap_or(lam[j]), hi: e });
            } else {
                start = Some(e);
            }
        }
    }
    if let Some(s) = start {
        raw.push(Band { lo: s, hi: lambda_max });
    }

    // split at touching points (|Δ| reaches 2 inside a run)
    let mut bands = Vec::new();
    for b in raw {
        let mut lo = b.lo;
        for j in 1..n {
            if lam[j] <= b.lo || lam[j] >= b.hi || !(inband[j - 1] && inband[j + 1]) {
                continue;
            }
            let a = vals[j].abs();
            if a >= vals[j - 1].abs() && a >= vals[j + 1].abs() {
                let (x, fx) = golden_max(|l| disc(l).abs(), lam[j - 1], lam[j + 1]);
                if fx >= 2.0 - 1e-9 && x > lo {
                    bands.push(Band { lo, hi: x });
                    lo = x;
                }
            }
        }
        bands.push(Band { lo, hi: b.hi });
    }

    // Δ runs from +2 to -2 across band 0, from -2 to +2 across band 1, and so on
    for (i, b) in bands.iter().enumerate() {
        let want_lo = if i % 2 == 0 { 1.0 } else { -1.0 };
        let ok_lo = disc(b.lo) * want_lo > 0.0;
        let ok_hi = b.hi >= lambda_max || disc(b.hi) * want_lo < 0.0;
        if !(ok_lo && ok_hi) {
            let prev = if i > 0 { bands[i - 1].hi } else { 0.0 };
            return Err((prev, b.hi));
        }
    }
    Ok(bands)
}

/// Spectral bands of one periodic cell below `lambda_max`. Retries with finer
/// sampling when an edge pair is missed; fails with the unresolved window.
pub fn compute_bands_cell(cell: &PeriodicCell, lambda_max: f64, resolution: usize) -> Result<Vec<Band>> {
    if !(lambda_max > 0.0 && lambda_max.is_finite()) {
        return Err(Error::Usage(format!("lambda_max must be positive, got {lambda_max}")));
    }
    let mut res = resolution.max(16);
    let mut last = (0.0, lambda_max);
    for _ in 0..4 {
        match scan_bands(cell, lambda_max, res) {
            Ok(b) => return Ok(b),
            Err(w) => {
                last = w;
                res *= 4;
            }
        }
    }
    Err(Error::BandResolution { lo: last.0, hi: last.1 })
}

/// Bands of every periodic cell of `weight` (one for periodic media, two for a half-space).
pub fn compute_bands(weight: &StepWeight, lambda_max: f64, resolution: usize) -> Result<Vec<Vec<Band>>> {
    weight.cells().iter().map(|c| compute_bands_cell(c, lambda_max, resolution)).collect()
}

/// Sampling density that resolves every band below `lambda_max`.
pub fn default_resolution(weight: &StepWeight, lambda_max: f64) -> usize {
    // bands below λ grow like sqrt(λ) * optical length / π
    let optical = weight
        .cells()
        .iter()
        .map(|c| c.pieces.iter().map(|p| p.0 * p.1.abs().sqrt()).sum::<f64>())
        .fold(0.0, f64::max);
    let nb = (lambda_max.sqrt() * optical / std::f64::consts::PI).ceil() as usize + 1;
    (400 * nb).max(2000)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GapInfo {
    pub k: i64,
    pub lambda: f64,
    pub certified: bool,
    pub gap_lo: f64,
    pub gap_hi: f64,
    pub margin: f64,
}

/// `margin ≥ δ k^γ`: `gamma`/`delta` is the primary fit, `*_loglog` the raw
/// least-squares slope and the matching constant.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GapFit {
    pub gamma: f64,
    pub delta: f64,
    pub gamma_loglog: f64,
    pub delta_loglog: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointEigen {
    pub lambda: f64,
    pub localization: f64,
    pub doubled_shift: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BandCertificate {
    pub omega: f64,
    pub lambda_max: f64,
    pub bands: Vec<Vec<Band>>,
    pub active: Vec<GapInfo>,
    pub tilde: Vec<GapInfo>,
    pub fit: Option<GapFit>,
    pub fit_tilde: Option<GapFit>,
    pub point_spectrum: Vec<PointEigen>,
    pub uncertified: Vec<i64>,
}

impl BandCertificate {
    pub fn gap_for(&self, k: i64) -> Option<&GapInfo> {
        self.active.iter().chain(self.tilde.iter()).find(|g| g.k == k)
    }

    pub fn all_active_certified(&self) -> bool {
        self.active.iter().all(|g| g.certified)
    }

    /// Record isolated eigenvalues and shrink every margin to the distance from
    /// `ω²k²` to the nearest of them; a coincidence decertifies that `k`.
    pub fn include_point_spectrum(&mut self, points: Vec<PointEigen>) {
        for g in self.active.iter_mut().chain(self.tilde.iter_mut()) {
            if !g.certified {
                continue;
            }
            for p in &points {
                if p.lambda > g.gap_lo && p.lambda < g.gap_hi {
                    g.margin = g.margin.min((p.lambda - g.lambda).abs());
                }
            }
            if !(g.margin > 1e-12 * g.lambda.max(1.0)) {
                g.certified = false;
                g.margin = 0.0;
            }
        }
        self.fit = fit_gaps(&self.active);
        self.fit_tilde = fit_gaps(&self.tilde);
        self.uncertified = self.active.iter().chain(self.tilde.iter()).filter(|g| !g.certified).map(|g| g.k).collect();
        self.point_spectrum = points;
    }

    /// Distinct certified gap intervals.
    pub fn gap_windows(&self) -> Vec<(f64, f64)> {
        let mut w: Vec<(f64, f64)> = self
            .active
            .iter()
            .chain(self.tilde.iter())
            .filter(|g| g.certified)
            .map(|g| (g.gap_lo, g.gap_hi))
            .collect();
        w.sort_by(|a, b| a.0.total_cmp(&b.0));
        w.dedup_by(|a, b| (a.0 - b.0).abs() < 1e-12 && (a.1 - b.1).abs() < 1e-12);
        w
    }
}

fn gap_at(bands: &[Band], lambda: f64, k: i64) -> Result<GapInfo> {
    let top = bands.last().map(|b| b.hi).unwrap_or(0.0);
    if lambda >= top && bands.last().is_some_and(|b| lambda >= b.lo) {
        return Err(Error::Usage(format!("bands were not computed up to omega^2 k^2 = {lambda} (k = {k})")));
    }
    let inside = bands.iter().any(|b| b.lo <= lambda && lambda <= b.hi);
    let below = bands.iter().filter(|b| b.hi < lambda).map(|b| b.hi).fold(f64::NEG_INFINITY, f64::max);
    let above = bands.iter().filter(|b| b.lo > lambda).map(|b| b.lo).fold(f64::INFINITY, f64::min);
    if inside || !below.is_finite() || !above.is_finite() {
        return Ok(GapInfo { k, lambda, certified: false, gap_lo: lambda, gap_hi: lambda, margin: 0.0 });
    }
    let margin = (lambda - below).min(above - lambda);
    Ok(GapInfo { k, lambda, certified: margin > 0.0, gap_lo: below, gap_hi: above, margin })
}

fn gap_info(all: &[Vec<Band>], omega: f64, k: i64) -> Result<GapInfo> {
    let lambda = omega * omega * (k * k) as f64;
    let mut out = GapInfo { k, lambda, certified: true, gap_lo: f64::NEG_INFINITY, gap_hi: f64::INFINITY, margin: f64::INFINITY };
    for bands in all {
        let g = gap_at(bands, lambda, k)?;
        out.certified &= g.certified;
        out.gap_lo = out.gap_lo.max(g.gap_lo);
        out.gap_hi = out.gap_hi.min(g.gap_hi);
        out.margin = out.margin.min(g.margin);
    }
    if !out.certified {
        out.margin = 0.0;
    }
    Ok(out)
}

/// Fit `margin ≥ δ k^γ` over certified entries.
pub fn fit_gaps(gaps: &[GapInfo]) -> Option<GapFit> {
    if gaps.is_empty() || gaps.iter().any(|g| !g.certified) {
        return None;
    }
    let delta = gaps.iter().map(|g| g.margin / g.k as f64).fold(f64::INFINITY, f64::min);
    let pts: Vec<(i64, f64)> = gaps.iter().map(|g| (g.k, g.margin)).collect();
    let slope = loglog_slope(&pts).unwrap_or(1.0);
    let g_ll = slope.min(1.0);
    let delta_loglog = gaps.iter().map(|g| g.margin / (g.k as f64).powf(g_ll)).fold(f64::INFINITY, f64::min);
    Some(GapFit { gamma: 1.0, delta, gamma_loglog: slope, delta_loglog })
}

/// Locate `ω²k²` for every active `k` (and every `k` in `tilde_ks`) relative to the bands.
pub fn certify_gaps(bands: &[Vec<Band>], lambda_max: f64, lattice: &FrequencyLattice, tilde_ks: &[i64]) -> Result<BandCertificate> {
    let omega = lattice.omega();
    let active: Vec<GapInfo> = lattice.active_set.iter().map(|&k| gap_info(bands, omega, k)).collect::<Result<_>>()?;
    let tilde: Vec<GapInfo> = tilde_ks.iter().map(|&k| gap_info(bands, omega, k)).collect::<Result<_>>()?;
    let uncertified = active.iter().chain(tilde.iter()).filter(|g| !g.certified).map(|g| g.k).collect();
    Ok(BandCertificate {
        omega,
        lambda_max,
        bands: bands.to_vec(),
        fit: fit_gaps(&active),
        fit_tilde: fit_gaps(&tilde),
        active,
        tilde,
        point_spectrum: Vec::new(),
        uncertified,
    })
}

/// `V^{-1/2}(-D²)V^{-1/2}` on interior nodes.
pub fn weighted_laplacian(v: &[f64], dx: f64) -> SymTridiagonal {
    let n = v.len() - 2;
    let inv = 1.0 / (dx * dx);
    let a = (0..n).map(|i| 2.0 * inv / v[i + 1]).collect();
    let b = (0..n.saturating_sub(1)).map(|i| -inv / (v[i + 1] * v[i + 2]).sqrt()).collect();
    SymTridiagonal { a, b }
}

const LOCALIZATION_RATIO: f64 = 1e3;

/// Isolated eigenvalues inside `windows` whose eigenfunction peaks at least
/// `1e3` times above its size in the outer eighth on either side.
pub fn point_spectrum_estimate(v: &[f64], grid: &SpaceGrid, windows: &[(f64, f64)]) -> Result<Vec<PointEigen>> {
    let t = weighted_laplacian(v, grid.dx());
    let n = t.a.len();
    let edge = (n / 8).max(1);
    let mut out = Vec::new();
    for &(lo, hi) in windows {
        if !(hi > lo) {
            continue;
        }
        let eps = 1e-9 * (1.0 + hi.abs());
        for (idx, lam) in t.eigenvalues_in(lo + eps, hi - eps, 1e-15).into_iter().enumerate() {
            let psi = t.eigenvector(lam, idx as u64 + 1)?;
            let phi: Vec<f64> = psi.iter().enumerate().map(|(i, p)| (p / v[i + 1].sqrt()).abs()).collect();
            let peak = phi.iter().copied().fold(0.0, f64::max);
            let boundary = phi[..edge].iter().chain(phi[n - edge..].iter()).copied().fold(0.0, f64::max);
            let loc = peak / boundary.max(f64::MIN_POSITIVE);
            if loc >= LOCALIZATION_RATIO {
                out.push(PointEigen { lambda: lam, localization: loc, doubled_shift: None });
            }
        }
    }
    Ok(out)
}

/// Number of grid cells in one period, if the period is a whole number of cells.
fn cells_per_period(period: f64, dx: f64) -> usize {
    let r = period / dx;
    (r.round() as usize).max(1)
}

/// Grid extended on both sides by whole periods of the adjacent medium, adding
/// at least half the original length on each side.
pub fn doubled_grid(weight: &StepWeight, grid: &SpaceGrid) -> SpaceGrid {
    let dx = grid.dx();
    let half = grid.length() / 2.0;
    let (pl, pr) = match &weight.layout {
        Layout::Periodic(c) => (c.period(), c.period()),
        Layout::HalfSpace { left, right } => (left.period(), right.period()),
    };
    let nl = (half / pl).ceil() as usize * cells_per_period(pl, dx);
    let nr = (half / pr).ceil() as usize * cells_per_period(pr, dx);
    grid.extended(nl, nr)
}

/// Point spectrum on `grid`, each entry re-located on the doubled domain.
pub fn point_spectrum_with_doubling(weight: &StepWeight, grid: &SpaceGrid, windows: &[(f64, f64)]) -> Result<Vec<PointEigen>> {
    let v = weight.sample_on(grid);
    let mut base = point_spectrum_estimate(&v, grid, windows)?;
    if base.is_empty() {
        return Ok(base);
    }
    let g2 = doubled_grid(weight, grid);
    let v2 = weight.sample_on(&g2);
    let other = point_spectrum_estimate(&v2, &g2, windows)?;
    for e in base.iter_mut() {
        e.doubled_shift = other.iter().map(|o| (o.lambda - e.lambda).abs()).min_by(|a, b| a.total_cmp(b));
    }
    Ok(base)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn two_layer() -> StepWeight {
        StepWeight::two_layer(2.0 * PI, 1.0, 0.25, 2.0).unwrap()
    }

    #[test]
    fn discriminant_at_odd_squares() {
        let w = two_layer();
        for k in [1i64, 3, 5, 7, 9] {
            let d = discriminant(&w, (k * k) as f64).unwrap();
            assert!((d + 10.0 / 3.0).abs() < 1e-10, "k={k}: {d}");
        }
        assert!((discriminant(&w, 0.0).unwrap() - 2.0).abs() < 1e-15);
    }

    #[test]
    fn constant_weight_has_touching_bands() {
        let c = PeriodicCell::new(vec![(1.0, 1.0)]).unwrap();
        let b = compute_bands_cell(&c, 50.0, 500).unwrap();
        // Δ = 2 cos sqrt(λ): bands touch at π² and 4π²
        assert_eq!(b.len(), 3);
        assert!((b[0].hi - PI * PI).abs() < 1e-6);
        assert!((b[1].lo - b[0].hi).abs() < 1e-12);
        assert!((b[1].hi - 4.0 * PI * PI).abs() < 1e-6);
    }

    #[test]
    fn gaps_contain_odd_squares() {
        let w = two_layer();
        let bands = compute_bands(&w, 100.0, 4000).unwrap();
        let lat = FrequencyLattice::new(2.0 * PI, 9, 1).unwrap();
        let cert = certify_gaps(&bands, 100.0, &lat, &[]).unwrap();
        assert!(cert.all_active_certified());
        let m: Vec<f64> = cert.active.iter().map(|g| g.margin).collect();
        assert!((m[0] - 5.0 / 9.0).abs() < 1e-6, "{m:?}");
        let fit = cert.fit.unwrap();
        assert!((fit.gamma_loglog - 1.0).abs() < 0.2);
    }

    #[test]
    fn coarse_scan_recovers() {
        let w = two_layer();
        let fine = compute_bands(&w, 100.0, 4000).unwrap();
        let coarse = compute_bands(&w, 100.0, 20).unwrap();
        assert_eq!(fine[0].len(), coarse[0].len());
        for (a, b) in fine[0].iter().zip(&coarse[0]) {
            assert!((a.lo - b.lo).abs() < 1e-9 && (a.hi - b.hi).abs() < 1e-9);
        }
    }

    #[test]
    fn uncertified_when_in_band() {
        // ω = 1 on a constant weight: every ω²k² lies in the spectrum
        let w = StepWeight::constant(2.0, 1.0).unwrap();
        let bands = compute_bands(&w, 100.0, 2000).unwrap();
        let lat = FrequencyLattice::new(2.0 * PI, 3, 1).unwrap();
        let cert = certify_gaps(&bands, 100.0, &lat, &[]).unwrap();
        assert_eq!(cert.uncertified, vec![1, 3]);
        assert!(cert.fit.is_none());
    }

    #[test]
    fn no_point_spectrum_in_pure_periodic_medium() {
        let w = two_layer();
        let grid = SpaceGrid::new(-4.875, 5.125, 801).unwrap();
        let bands = compute_bands(&w, 100.0, 4000).unwrap();
        let lat = FrequencyLattice::new(2.0 * PI, 9, 1).unwrap();
        let cert = certify_gaps(&bands, 100.0, &lat, &[]).unwrap();
        let ps = point_spectrum_with_doubling(&w, &grid, &cert.gap_windows()).unwrap();
        assert!(ps.is_empty(), "{ps:?}");
    }

    #[test]
    fn discrete_dirichlet_eigenvalue() {
        let n = 101;
        let grid = SpaceGrid::new(0.0, 2.0, n).unwrap();
        let v = vec![1.0; n];
        let t = weighted_laplacian(&v, grid.dx());
        let ev = t.eigenvalues_in(0.0, 5.0, 1e-15);
        let dx = grid.dx();
        let exact = 2.0 * (1.0 - (PI * dx / 2.0).cos()) / (dx * dx);
        assert!((ev[0] - exact).abs() < 1e-10);
    }
}
