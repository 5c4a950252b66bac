//! Material data: the linear weight `V`, the temporal kernels and their Fourier
//! coefficients, the nonlinear weight `h`, and the structural checks on them.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{FrequencyLattice, SpaceGrid};
use crate::spectrum::BandCertificate;

/// Coefficient of the triangular kernel `ν(t) = T/2 - |t - T/2|` on `[0, T]`:
/// `T²/4` at `k = 0`, zero for even `k`, `-T²/(π²k²)` for odd `k`.
pub fn nu_hat_triangular(period: f64, k: i64) -> f64 {
    if k == 0 {
        period * period / 4.0
    } else if k % 2 == 0 {
        0.0
    } else {
        -period * period / (PI * PI * (k * k) as f64)
    }
}

/// Coefficient of `cos(ωt)|cos(ωt)|` on `[0, T]`, zero for even `k`.
pub fn g_hat_cosabs(period: f64, k: i64) -> f64 {
    if k % 2 == 0 {
        return 0.0;
    }
    let ka = k.abs();
    let n = (ka - 1) / 2;
    let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
    let kf = ka as f64;
    4.0 * period * sign / ((4.0 * kf - kf * kf * kf) * PI)
}

/// `∫_0^T f(t) e^{-iωkt} dt` by composite Simpson with `n_intervals` (even) panels.
pub fn simpson_coefficient<F: Fn(f64) -> f64>(f: F, period: f64, k: i64, n_intervals: usize) -> Complex64 {
    let n = n_intervals + n_intervals % 2;
    let h = period / n as f64;
    let omega = 2.0 * PI / period;
    let mut s = Complex64::new(0.0, 0.0);
    for j in 0..=n {
        let t = j as f64 * h;
        let wgt = if j == 0 || j == n {
            1.0
        } else if j % 2 == 1 {
            4.0
        } else {
            2.0
        };
        s += Complex64::from_polar(wgt * f(t), -omega * k as f64 * t);
    }
    s * (h / 3.0)
}

/// Piecewise-constant function on one cell `[0, P)`, repeated with period `P`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PeriodicCell {
    /// `(length, value)` pieces in order from the cell origin.
    pub pieces: Vec<(f64, f64)>,
}

impl PeriodicCell {
    pub fn new(pieces: Vec<(f64, f64)>) -> Result<Self> {
        if pieces.is_empty() || pieces.iter().any(|p| !(p.0 > 0.0 && p.0.is_finite() && p.1.is_finite())) {
            return Err(Error::Config("cell pieces need positive finite lengths and finite values".into()));
        }
        Ok(Self { pieces })
    }

    pub fn period(&self) -> f64 {
        self.pieces.iter().map(|p| p.0).sum()
    }

    fn cell_integral(&self) -> f64 {
        self.pieces.iter().map(|p| p.0 * p.1).sum()
    }

    pub fn value_at(&self, x: f64) -> f64 {
        let mut r = x.rem_euclid(self.period());
        for &(len, v) in &self.pieces {
            if r < len {
                return v;
            }
            r -= len;
        }
        self.pieces.last().map(|p| p.1).unwrap_or(0.0)
    }

    /// `∫_0^x` of the periodic extension.
    pub fn antiderivative(&self, x: f64) -> f64 {
        let p = self.period();
        let n = (x / p).floor();
        let mut r = x - n * p;
        let mut s = n * self.cell_integral();
        for &(len, v) in &self.pieces {
            let take = r.min(len);
            if take <= 0.0 {
                break;
            }
            s += take * v;
            r -= take;
        }
        s
    }

    /// Interface positions inside `[a, b]`.
    pub fn breakpoints(&self, a: f64, b: f64) -> Vec<f64> {
        let p = self.period();
        let mut out = Vec::new();
        let mut base = (a / p).floor() * p;
        while base <= b {
            let mut x = base;
            for &(len, _) in &self.pieces {
                if x >= a && x <= b {
                    out.push(x);
                }
                x += len;
            }
            base += p;
        }
        out.sort_by(|x, y| x.total_cmp(y));
        out.dedup_by(|x, y| (*x - *y).abs() < 1e-12);
        out
    }

    pub fn min_value(&self) -> f64 {
        self.pieces.iter().map(|p| p.1).fold(f64::INFINITY, f64::min)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Layout {
    Periodic(PeriodicCell),
    /// `left` for `x < 0`, `right` for `x > 0`, both anchored at `x = 0`.
    HalfSpace { left: PeriodicCell, right: PeriodicCell },
}

/// Piecewise-constant linear weight `V = 1 - 1/c² + g₀`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepWeight {
    pub layout: Layout,
    /// `1 - 1/c²`, so that `g₀ = V - baseline`.
    pub baseline: f64,
}

fn check_theta(theta: f64) -> Result<()> {
    if !(theta > 0.0 && theta < 1.0) {
        return Err(Error::Config(format!("theta must lie in (0, 1), got {theta}")));
    }
    if (theta - 0.5).abs() < 1e-12 {
        return Err(Error::Config("theta = 1/2 makes the weight constant; choose theta != 1/2".into()));
    }
    Ok(())
}

fn check_speed(c: f64) -> Result<()> {
    if !(c.is_finite() && c > 0.0) {
        return Err(Error::Config(format!("wave speed c must be positive, got {c}")));
    }
    Ok(())
}

/// Two-layer cell of length `cell` whose layer values make `k = 1` sit at the
/// centre of a gap: `V₁ = T²/(16θ²X²)` on `(0, θX)`, `V₂ = T²/(16(1-θ)²X²)` after.
pub fn two_layer_cell(period: f64, cell: f64, theta: f64) -> Result<PeriodicCell> {
    check_theta(theta)?;
    if !(cell > 0.0 && cell.is_finite()) {
        return Err(Error::Config(format!("cell length must be positive, got {cell}")));
    }
    let v1 = period * period / (16.0 * theta * theta * cell * cell);
    let v2 = period * period / (16.0 * (1.0 - theta) * (1.0 - theta) * cell * cell);
    PeriodicCell::new(vec![(theta * cell, v1), (cell - theta * cell, v2)])
}

impl StepWeight {
    pub fn two_layer(period: f64, cell: f64, theta: f64, c: f64) -> Result<Self> {
        check_speed(c)?;
        Ok(Self { layout: Layout::Periodic(two_layer_cell(period, cell, theta)?), baseline: 1.0 - 1.0 / (c * c) })
    }

    pub fn two_layer_halfspace(period: f64, cell_minus: f64, theta_minus: f64, cell_plus: f64, theta_plus: f64, c: f64) -> Result<Self> {
        check_speed(c)?;
        Ok(Self {
            layout: Layout::HalfSpace {
                left: two_layer_cell(period, cell_minus, theta_minus)?,
                right: two_layer_cell(period, cell_plus, theta_plus)?,
            },
            baseline: 1.0 - 1.0 / (c * c),
        })
    }

    pub fn constant(value: f64, c: f64) -> Result<Self> {
        check_speed(c)?;
        Ok(Self { layout: Layout::Periodic(PeriodicCell::new(vec![(1.0, value)])?), baseline: 1.0 - 1.0 / (c * c) })
    }

    /// Periodic steps given as `(length, g₀)` pieces.
    pub fn from_g0_steps(pieces: &[(f64, f64)], c: f64) -> Result<Self> {
        check_speed(c)?;
        let baseline = 1.0 - 1.0 / (c * c);
        let cell = PeriodicCell::new(pieces.iter().map(|&(l, g)| (l, baseline + g)).collect())?;
        Ok(Self { layout: Layout::Periodic(cell), baseline })
    }

    pub fn value_at(&self, x: f64) -> f64 {
        match &self.layout {
            Layout::Periodic(c) => c.value_at(x),
            Layout::HalfSpace { left, right } => {
                if x < 0.0 {
                    left.value_at(x)
                } else {
                    right.value_at(x)
                }
            }
        }
    }

    pub fn g0_at(&self, x: f64) -> f64 {
        self.value_at(x) - self.baseline
    }

    /// Exact `∫_a^b V`.
    pub fn integral(&self, a: f64, b: f64) -> f64 {
        match &self.layout {
            Layout::Periodic(c) => c.antiderivative(b) - c.antiderivative(a),
            Layout::HalfSpace { left, right } => {
                let mut s = 0.0;
                if a < 0.0 {
                    let e = b.min(0.0);
                    s += left.antiderivative(e) - left.antiderivative(a);
                }
                if b > 0.0 {
                    let s0 = a.max(0.0);
                    s += right.antiderivative(b) - right.antiderivative(s0);
                }
                s
            }
        }
    }

    /// Cell averages over `[x - dx/2, x + dx/2]` at each node.
    pub fn sample_on(&self, grid: &SpaceGrid) -> Vec<f64> {
        let dx = grid.dx();
        grid.nodes().iter().map(|&x| self.integral(x - 0.5 * dx, x + 0.5 * dx) / dx).collect()
    }

    /// `g₀` cell averages at each node.
    pub fn g0_on(&self, grid: &SpaceGrid) -> Vec<f64> {
        self.sample_on(grid).into_iter().map(|v| v - self.baseline).collect()
    }

    pub fn cells(&self) -> Vec<&PeriodicCell> {
        match &self.layout {
            Layout::Periodic(c) => vec![c],
            Layout::HalfSpace { left, right } => vec![left, right],
        }
    }

    pub fn breakpoints(&self, a: f64, b: f64) -> Vec<f64> {
        match &self.layout {
            Layout::Periodic(c) => c.breakpoints(a, b),
            Layout::HalfSpace { left, right } => {
                let mut v = left.breakpoints(a, b.min(0.0));
                v.extend(right.breakpoints(a.max(0.0), b));
                v.sort_by(|x, y| x.total_cmp(y));
                v.dedup_by(|x, y| (*x - *y).abs() < 1e-12);
                v
            }
        }
    }

    pub fn min_value(&self) -> f64 {
        self.cells().iter().map(|c| c.min_value()).fold(f64::INFINITY, f64::min)
    }
}

/// Scalar spatial profile used for `h` and `g₁`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", deny_unknown_fields)]
pub enum Profile {
    #[serde(rename = "none")]
    Zero,
    #[serde(rename = "constant")]
    Constant { value: f64 },
    /// Periodic `(length, value)` steps starting at `x = 0`.
    #[serde(rename = "steps")]
    Steps { pieces: Vec<(f64, f64)> },
    #[serde(rename = "gaussian")]
    Gaussian { amplitude: f64, center: f64, width: f64 },
    #[serde(rename = "sech")]
    Sech { amplitude: f64, center: f64, width: f64 },
}

impl Profile {
    pub fn validate(&self) -> Result<()> {
        match self {
            Profile::Steps { pieces } => PeriodicCell::new(pieces.clone()).map(|_| ()),
            Profile::Gaussian { width, .. } | Profile::Sech { width, .. } if !(*width > 0.0) => {
                Err(Error::Config(format!("profile width must be positive, got {width}")))
            }
            _ => Ok(()),
        }
    }

    pub fn value_at(&self, x: f64) -> f64 {
        match self {
            Profile::Zero => 0.0,
            Profile::Constant { value } => *value,
            Profile::Steps { pieces } => PeriodicCell { pieces: pieces.clone() }.value_at(x),
            Profile::Gaussian { amplitude, center, width } => amplitude * (-((x - center) / width).powi(2)).exp(),
            Profile::Sech { amplitude, center, width } => amplitude / ((x - center) / width).cosh(),
        }
    }

    /// Node values; steps are cell-averaged like `V`.
    pub fn sample_on(&self, grid: &SpaceGrid) -> Vec<f64> {
        match self {
            Profile::Steps { pieces } => {
                let c = PeriodicCell { pieces: pieces.clone() };
                let dx = grid.dx();
                grid.nodes()
                    .iter()
                    .map(|&x| (c.antiderivative(x + 0.5 * dx) - c.antiderivative(x - 0.5 * dx)) / dx)
                    .collect()
            }
            _ => grid.nodes().iter().map(|&x| self.value_at(x)).collect(),
        }
    }
}

/// Nonlinear weight `h = sign * (h_per + h_loc)` sampled on the grid.
#[derive(Clone, Debug, PartialEq)]
pub struct NonlinearWeight {
    pub values: Vec<f64>,
}

impl NonlinearWeight {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        let w = Self { values };
        w.sign()?;
        Ok(w)
    }

    /// `+1` if `h > 0` everywhere, `-1` if `h < 0` everywhere.
    pub fn sign(&self) -> Result<f64> {
        if self.values.iter().all(|&h| h > 0.0 && h.is_finite()) {
            Ok(1.0)
        } else if self.values.iter().all(|&h| h < 0.0 && h.is_finite()) {
            Ok(-1.0)
        } else {
            Err(Error::Config("nonlinear weight h must be strictly positive or strictly negative".into()))
        }
    }

    pub fn abs(&self) -> Vec<f64> {
        self.values.iter().map(|h| h.abs()).collect()
    }

    pub fn negated(&self) -> NonlinearWeight {
        NonlinearWeight { values: self.values.iter().map(|h| -h).collect() }
    }
}

/// Temporal kernel of the cubic response.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", deny_unknown_fields)]
pub enum NuKernel {
    #[serde(rename = "triangular-nu")]
    Triangular,
    /// Uniform samples of `ν` on `[0, T]`, endpoints included.
    #[serde(rename = "tabulated")]
    Tabulated { samples: Vec<f64> },
}

/// Temporal kernel of the linear retarded response.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", deny_unknown_fields)]
pub enum G1Kernel {
    #[serde(rename = "none")]
    Zero,
    #[serde(rename = "cosabs-g1")]
    CosAbs,
    #[serde(rename = "tabulated")]
    Tabulated { samples: Vec<f64> },
}

const SIMPSON_PANELS: usize = 2048;

fn interp_uniform(samples: &[f64], period: f64, t: f64) -> f64 {
    let n = samples.len() - 1;
    let s = (t / period * n as f64).clamp(0.0, n as f64);
    let i = (s.floor() as usize).min(n - 1);
    let f = s - i as f64;
    samples[i] * (1.0 - f) + samples[i + 1] * f
}

fn tabulated_coefficients(samples: &[f64], period: f64, ks: &[i64], what: &str) -> Result<BTreeMap<i64, f64>> {
    if samples.len() < 3 || samples.iter().any(|v| !v.is_finite()) {
        return Err(Error::Config(format!("{what} needs at least 3 finite samples")));
    }
    let mut out = BTreeMap::new();
    let mut top = 0.0f64;
    let mut worst_im = 0.0f64;
    for &k in ks {
        let c = simpson_coefficient(|t| interp_uniform(samples, period, t), period, k, SIMPSON_PANELS);
        top = top.max(c.norm());
        worst_im = worst_im.max(c.im.abs());
        out.insert(k, c.re);
    }
    if worst_im > 1e-8 * top.max(f64::MIN_POSITIVE) {
        return Err(Error::Config(format!(
            "{what} is not symmetric about T/2: its periodization is not even (imaginary part {worst_im:e})"
        )));
    }
    Ok(out)
}

/// Least-squares slope of `log|c_k|` against `log k` over nonzero entries.
pub fn loglog_slope(points: &[(i64, f64)]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = points
        .iter()
        .filter(|p| p.1.abs() > 0.0 && p.0 > 0)
        .map(|p| ((p.0 as f64).ln(), p.1.abs().ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    Some(pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>() / sxx)
}

/// Temporal Fourier data of both kernels on odd `k` up to `k_limit`, plus the
/// spatial profile of `g₁`.
#[derive(Clone, Debug, PartialEq)]
pub struct KernelCoefficients {
    pub period: f64,
    pub k_limit: i64,
    pub n_hat: BTreeMap<i64, f64>,
    /// Temporal factor `γ_k` of `Ĝ_k(x) = γ_k g₁(x)`.
    pub g_hat: BTreeMap<i64, f64>,
    pub g1_profile: Vec<f64>,
    /// Fitted decay exponent of `|N̂_k|`.
    pub alpha: f64,
}

impl KernelCoefficients {
    pub fn new(period: f64, nu: &NuKernel, g1: &G1Kernel, g1_profile: Vec<f64>, k_limit: i64) -> Result<Self> {
        let ks: Vec<i64> = (1..=k_limit.max(1)).step_by(2).collect();
        let n_hat = match nu {
            NuKernel::Triangular => ks.iter().map(|&k| (k, nu_hat_triangular(period, k))).collect(),
            NuKernel::Tabulated { samples } => tabulated_coefficients(samples, period, &ks, "nu kernel")?,
        };
        let g_hat = match g1 {
            G1Kernel::Zero => ks.iter().map(|&k| (k, 0.0)).collect(),
            G1Kernel::CosAbs => ks.iter().map(|&k| (k, g_hat_cosabs(period, k))).collect(),
            G1Kernel::Tabulated { samples } => tabulated_coefficients(samples, period, &ks, "g1 kernel")?,
        };
        let pts: Vec<(i64, f64)> = n_hat.iter().map(|(&k, &v)| (k, v)).collect();
        let alpha = loglog_slope(&pts).map(|s| -s).unwrap_or(0.0);
        Ok(Self { period, k_limit, n_hat, g_hat, g1_profile, alpha })
    }

    pub fn n_hat(&self, k: i64) -> Result<f64> {
        self.n_hat
            .get(&k.abs())
            .copied()
            .ok_or_else(|| Error::Usage(format!("kernel coefficient requested at k = {k} beyond k_limit = {}", self.k_limit)))
    }

    pub fn gamma(&self, k: i64) -> f64 {
        self.g_hat.get(&k.abs()).copied().unwrap_or(0.0)
    }

    /// `Ĝ_k(x_i)`.
    pub fn g_hat_at(&self, k: i64, i: usize) -> f64 {
        self.gamma(k) * self.g1_profile.get(i).copied().unwrap_or(0.0)
    }
}

/// Exponents and constants of the structural assumptions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AssumptionParams {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub delta: f64,
    pub d: f64,
    pub gamma_tilde: f64,
    pub delta_tilde: f64,
    pub d_tilde: f64,
    pub s_lower: f64,
}

impl AssumptionParams {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.alpha,
            self.beta,
            self.gamma,
            self.delta,
            self.d,
            self.gamma_tilde,
            self.delta_tilde,
            self.d_tilde,
            self.s_lower,
        ];
        if all.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::Config("assumption parameters must be finite and non-negative".into()));
        }
        if self.gamma > 1.0 || self.gamma_tilde > 1.0 {
            return Err(Error::Config("gap growth exponents must not exceed 1".into()));
        }
        Ok(())
    }

    /// Parameters read off the kernels and the band certificate.
    pub fn from_data(kc: &KernelCoefficients, cert: &BandCertificate) -> Self {
        let (gamma, delta) = cert.fit.as_ref().map(|f| (f.gamma, f.delta)).unwrap_or((1.0, 0.0));
        let (gamma_tilde, delta_tilde) = cert.fit_tilde.as_ref().map(|f| (f.gamma, f.delta)).unwrap_or((gamma, delta));
        Self {
            alpha: kc.alpha.max(0.0),
            beta: 0.5,
            gamma,
            delta,
            d: 0.0,
            gamma_tilde,
            delta_tilde,
            d_tilde: 0.0,
            s_lower: kc.alpha.max(0.0),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AssumptionVerdict {
    pub name: String,
    pub holds: bool,
    /// Only a warning: holds on a restricted sublattice.
    pub warning: bool,
    pub witness: f64,
    pub threshold_k: Option<i64>,
    pub message: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AssumptionReport {
    pub items: Vec<AssumptionVerdict>,
    pub suggested_sublattice: Option<i64>,
}

impl AssumptionReport {
    pub fn all_hold(&self) -> bool {
        self.items.iter().all(|v| v.holds || v.warning)
    }

    pub fn get(&self, name: &str) -> Option<&AssumptionVerdict> {
        self.items.iter().find(|v| v.name == name)
    }
}

fn verdict(name: &str, holds: bool, witness: f64, message: String) -> AssumptionVerdict {
    AssumptionVerdict { name: name.into(), holds, warning: false, witness, threshold_k: None, message }
}

/// Per-frequency size of the retarded perturbation relative to the gap scale:
/// `d_k = ω²|k|^{2-γ}|γ_k| max|g₁/V|`.
pub fn perturbation_sizes(kc: &KernelCoefficients, v: &[f64], omega: f64, gamma: f64, ks: &[i64]) -> Vec<(i64, f64)> {
    let ratio = kc
        .g1_profile
        .iter()
        .zip(v)
        .map(|(g, vv)| (g / vv).abs())
        .fold(0.0, f64::max);
    ks.iter()
        .map(|&k| {
            let kf = k as f64;
            (k, omega * omega * kf.powf(2.0 - gamma) * kc.gamma(k).abs() * ratio)
        })
        .collect()
}

/// Smallest odd `m` such that every active multiple of `m` passes `ok`.
fn smallest_passing_sublattice(active: &[i64], ok: &dyn Fn(i64) -> bool) -> Option<i64> {
    let top = *active.last()?;
    (1..=top).step_by(2).find(|&m| {
        let sel: Vec<i64> = active.iter().copied().filter(|k| k % m == 0).collect();
        !sel.is_empty() && sel.iter().all(|&k| ok(k))
    })
}

/// Check every structural assumption on the discrete data. Failures confined to
/// small `k` are downgraded to warnings with a suggested sublattice.
pub fn verify_assumptions(
    kc: &KernelCoefficients,
    ap: &AssumptionParams,
    cert: &BandCertificate,
    v: &[f64],
    h: &NonlinearWeight,
    lattice: &FrequencyLattice,
    polarization: u8,
) -> Result<AssumptionReport> {
    ap.validate()?;
    let omega = lattice.omega();
    let active = &lattice.active_set;
    let mut items = Vec::new();
    let mut suggested = None;

    let hmin = h.values.iter().map(|x| x.abs()).fold(f64::INFINITY, f64::min);
    let sign_ok = h.sign().is_ok();
    items.push(verdict("A1", sign_ok && hmin > 0.0, hmin, format!("min |h| = {hmin:.3e}, sign-definite = {sign_ok}")));

    let mut c_alpha = 0.0f64;
    let mut zero_k = Vec::new();
    for &k in active {
        let n = kc.n_hat(k)?;
        if n == 0.0 {
            zero_k.push(k);
        }
        c_alpha = c_alpha.max(n.abs() * (k as f64).powf(ap.alpha));
    }
    items.push(verdict(
        "A2",
        zero_k.is_empty(),
        c_alpha,
        if zero_k.is_empty() {
            format!("|N_k| <= {c_alpha:.4e} |k|^-{:.3}", ap.alpha)
        } else {
            format!("N_k vanishes at {zero_k:?}")
        },
    ));

    let vmin = v.iter().copied().fold(f64::INFINITY, f64::min);
    items.push(verdict("A3", vmin > 0.0, vmin, format!("min V = {vmin:.4e}")));

    let mut best_delta = f64::INFINITY;
    let mut uncert = Vec::new();
    for &k in active {
        match cert.gap_for(k) {
            Some(g) if g.certified => best_delta = best_delta.min(g.margin / (k as f64).powf(ap.gamma)),
            _ => uncert.push(k),
        }
    }
    let a4 = uncert.is_empty() && best_delta >= ap.delta * (1.0 - 1e-12);
    let mut item = verdict(
        "A4",
        a4,
        if best_delta.is_finite() { best_delta } else { 0.0 },
        if uncert.is_empty() {
            format!("margin >= {best_delta:.4e} |k|^{:.3} on all active k", ap.gamma)
        } else {
            format!("omega^2 k^2 not in a spectral gap for k in {uncert:?}")
        },
    );
    if !uncert.is_empty() {
        let bad = uncert.clone();
        if let Some(m) = smallest_passing_sublattice(active, &|k| !bad.contains(&k)) {
            item.warning = m > 1;
            item.threshold_k = Some(m);
            if m > 1 {
                suggested = Some(m);
            }
        }
    }
    items.push(item);

    items.push(verdict(
        "A4-point",
        true,
        cert.point_spectrum.len() as f64,
        format!("{} isolated eigenvalue(s) in the certified gaps", cert.point_spectrum.len()),
    ));

    let a5 = ap.alpha + ap.gamma - 2.0 > ap.beta;
    items.push(verdict(
        "A5",
        a5,
        ap.alpha + ap.gamma - 2.0 - ap.beta,
        format!("alpha + gamma - 2 - beta = {:.4}", ap.alpha + ap.gamma - 2.0 - ap.beta),
    ));

    let dks = perturbation_sizes(kc, v, omega, ap.gamma, active);
    let d = dks.iter().map(|p| p.1).fold(ap.d, f64::max);
    let mut item = verdict("A6", d < ap.delta, d, format!("d = {d:.4e} against delta = {:.4e}", ap.delta));
    if d >= ap.delta {
        let dk: BTreeMap<i64, f64> = dks.iter().copied().collect();
        let delta = ap.delta;
        if let Some(m) = smallest_passing_sublattice(active, &|k| dk[&k] < delta) {
            item.warning = true;
            item.threshold_k = Some(m);
            suggested = Some(suggested.map_or(m, |s: i64| s.max(m)));
        }
    }
    items.push(item);

    if polarization == 2 {
        let mut c_s = f64::INFINITY;
        for &k in active {
            c_s = c_s.min(kc.n_hat(k)?.abs() * (k as f64).powf(ap.s_lower));
        }
        items.push(verdict("A7-lower", c_s > 0.0, c_s, format!("|N_k| >= {c_s:.4e} |k|^-{:.3}", ap.s_lower)));
        let bad: Vec<i64> = cert.tilde.iter().filter(|g| !g.certified).map(|g| g.k).collect();
        items.push(verdict(
            "A7-gaps",
            bad.is_empty() && !cert.tilde.is_empty(),
            cert.fit_tilde.as_ref().map_or(0.0, |f| f.delta),
            if bad.is_empty() {
                format!("{} non-active frequencies certified", cert.tilde.len())
            } else {
                format!("non-active frequencies outside gaps: {bad:?}")
            },
        ));
        let tks: Vec<i64> = cert.tilde.iter().map(|g| g.k).collect();
        let dt = perturbation_sizes(kc, v, omega, ap.gamma_tilde, &tks)
            .iter()
            .map(|p| p.1)
            .fold(ap.d_tilde, f64::max);
        items.push(verdict("A7-perturbation", dt < ap.delta_tilde, dt, format!("d~ = {dt:.4e} against delta~ = {:.4e}", ap.delta_tilde)));
    }

    Ok(AssumptionReport { items, suggested_sublattice: suggested })
}
