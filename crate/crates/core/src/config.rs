//! Run configuration: schema, validation and the hash stamped on every output.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dual::SolverParams;
use crate::error::{Error, Result};
use crate::grid::{FrequencyLattice, SpaceGrid};
use crate::material::{G1Kernel, NuKernel, Profile, StepWeight};
use crate::reconstruct::{FieldConstants, Polarization};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub material: MaterialConfig,
    pub discretization: DiscretizationConfig,
    #[serde(default)]
    pub solver: SolverParams,
    #[serde(default)]
    pub output: OutputConfig,
}

/// Linear weight `V`. Layer values of the two-layer kinds are fixed by the period.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", deny_unknown_fields)]
pub enum WeightConfig {
    #[serde(rename = "two-layer")]
    TwoLayer { theta: f64, cell_length: f64 },
    #[serde(rename = "two-layer-halfspace")]
    TwoLayerHalfspace { theta_minus: f64, cell_minus: f64, theta_plus: f64, cell_plus: f64 },
    #[serde(rename = "constant")]
    Constant { value: f64 },
    /// Periodic `(length, g₀)` pieces starting at `x = 0`.
    #[serde(rename = "steps")]
    Steps { pieces: Vec<(f64, f64)> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct G1Config {
    pub kernel: G1Kernel,
    pub profile: Profile,
}

impl Default for G1Config {
    fn default() -> Self {
        Self { kernel: G1Kernel::Zero, profile: Profile::Zero }
    }
}

/// `h = sign * (per + loc)` with `per + loc > 0`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HConfig {
    pub per: Profile,
    #[serde(default = "zero_profile")]
    pub loc: Profile,
    #[serde(default = "one")]
    pub sign: f64,
}

fn zero_profile() -> Profile {
    Profile::Zero
}

fn one() -> f64 {
    1.0
}

fn one_u8() -> u8 {
    1
}

fn one_i64() -> i64 {
    1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaterialConfig {
    pub period: f64,
    pub speed: f64,
    pub weight: WeightConfig,
    pub nu: NuKernel,
    #[serde(default)]
    pub g1: G1Config,
    pub h: HConfig,
    #[serde(default = "one_u8")]
    pub polarization: u8,
    #[serde(default = "one")]
    pub mu0: f64,
    #[serde(default = "one")]
    pub eps0: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiscretizationConfig {
    pub x_min: f64,
    pub x_max: f64,
    pub n_points: usize,
    pub k_max: i64,
    #[serde(default = "one_i64")]
    pub sublattice_m: i64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub active_set: Option<Vec<i64>>,
    /// Collocation samples per sublattice period in the dual problem.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oversampling: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub band_resolution: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    /// Used when no directory is given on the command line.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub directory: Option<String>,
    pub fields_nx: usize,
    pub fields_nphase: usize,
    pub write_fields: bool,
    pub write_plotdata: bool,
    pub domain_doubling_check: bool,
    pub w1_norm: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            directory: None,
            fields_nx: 201,
            fields_nphase: 64,
            write_fields: true,
            write_plotdata: true,
            domain_doubling_check: false,
            w1_norm: true,
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| Error::Config(format!("invalid config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// SHA-256 of the key-sorted compact JSON form.
    pub fn hash(&self) -> Result<String> {
        let v = serde_json::to_value(self)?;
        let text = serde_json::to_string(&v)?;
        Ok(hex::encode(Sha256::digest(text.as_bytes())))
    }

    pub fn grid(&self) -> Result<SpaceGrid> {
        let d = &self.discretization;
        SpaceGrid::new(d.x_min, d.x_max, d.n_points)
    }

    pub fn lattice(&self) -> Result<FrequencyLattice> {
        let d = &self.discretization;
        match &d.active_set {
            Some(a) => FrequencyLattice::with_active_set(self.material.period, d.k_max, d.sublattice_m, a.clone()),
            None => FrequencyLattice::new(self.material.period, d.k_max, d.sublattice_m),
        }
    }

    pub fn weight(&self) -> Result<StepWeight> {
        let m = &self.material;
        match &m.weight {
            WeightConfig::TwoLayer { theta, cell_length } => StepWeight::two_layer(m.period, *cell_length, *theta, m.speed),
            WeightConfig::TwoLayerHalfspace { theta_minus, cell_minus, theta_plus, cell_plus } => {
                if (cell_minus - cell_plus).abs() < 1e-12 && (theta_minus - theta_plus).abs() < 1e-12 {
                    return Err(Error::Config("half-space sides are identical; use kind two-layer".into()));
                }
                StepWeight::two_layer_halfspace(m.period, *cell_minus, *theta_minus, *cell_plus, *theta_plus, m.speed)
            }
            WeightConfig::Constant { value } => StepWeight::constant(*value, m.speed),
            WeightConfig::Steps { pieces } => StepWeight::from_g0_steps(pieces, m.speed),
        }
    }

    pub fn polarization(&self) -> Result<Polarization> {
        Polarization::from_number(self.material.polarization)
    }

    pub fn field_constants(&self) -> FieldConstants {
        FieldConstants { c: self.material.speed, mu0: self.material.mu0, eps0: self.material.eps0 }
    }

    /// `h` at the grid nodes, sign included.
    pub fn h_values(&self, grid: &SpaceGrid) -> Vec<f64> {
        let h = &self.material.h;
        let per = h.per.sample_on(grid);
        let loc = h.loc.sample_on(grid);
        per.iter().zip(&loc).map(|(a, b)| h.sign * (a + b)).collect()
    }

    /// Every check that can be made without computing anything expensive.
    pub fn validate(&self) -> Result<()> {
        let m = &self.material;
        if !(m.period.is_finite() && m.period > 0.0) {
            return Err(Error::Config(format!("material.period must be positive, got {}", m.period)));
        }
        if !(m.speed.is_finite() && m.speed > 0.0) {
            return Err(Error::Config(format!("material.speed must be positive, got {}", m.speed)));
        }
        if m.h.sign != 1.0 && m.h.sign != -1.0 {
            return Err(Error::Config(format!("material.h.sign must be 1 or -1, got {}", m.h.sign)));
        }
        self.polarization()?;
        self.field_constants().validate()?;
        m.h.per.validate()?;
        m.h.loc.validate()?;
        m.g1.profile.validate()?;
        self.solver.validate()?;
        let grid = self.grid()?;
        self.lattice()?;
        if let Some(o) = self.discretization.oversampling {
            if o == 0 {
                return Err(Error::Config("discretization.oversampling must be positive".into()));
            }
        }
        if self.output.fields_nx < 2 || self.output.fields_nphase < 2 * (3 * self.discretization.k_max as usize) + 1 {
            return Err(Error::Config(format!(
                "output.fields_nx must be >= 2 and output.fields_nphase >= {} (6 k_max + 1)",
                6 * self.discretization.k_max + 1
            )));
        }

        let weight = self.weight()?;
        let vmin = weight.min_value();
        if !(vmin > 0.0) {
            return Err(Error::Config(format!(
                "V = 1 - 1/c^2 + g0 must be positive everywhere; its minimum is {vmin:.6e}"
            )));
        }

        let tol = 1e-9 * grid.dx().max(1.0);
        let mut jumps = weight.breakpoints(grid.x_min, grid.x_max);
        for p in [&m.h.per, &m.h.loc, &m.g1.profile] {
            if let Profile::Steps { pieces } = p {
                jumps.extend(crate::material::PeriodicCell::new(pieces.clone())?.breakpoints(grid.x_min, grid.x_max));
            }
        }
        let off: Vec<f64> = jumps.into_iter().filter(|&x| grid.node_index(x, tol).is_none()).collect();
        if !off.is_empty() {
            return Err(Error::Config(format!(
                "coefficient discontinuities must lie on grid nodes (dx = {}); offending points: {:?}. \
                 Choose x_min and n_points so that every interface is a node",
                grid.dx(),
                &off[..off.len().min(5)]
            )));
        }

        let hv = self.h_values(&grid);
        let worst = hv.iter().map(|x| x * m.h.sign).fold(f64::INFINITY, f64::min);
        if !(worst > 0.0) {
            return Err(Error::Config(format!(
                "h_per + h_loc must be positive on the grid (minimum {worst:.6e}); use h.sign = -1 for a negative weight"
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    pub fn two_layer_json() -> String {
        r#"{
          "material": {
            "period": 6.283185307179586,
            "speed": 2.0,
            "weight": {"kind": "two-layer", "theta": 0.25, "cell_length": 1.0},
            "nu": {"kind": "triangular-nu"},
            "h": {"per": {"kind": "constant", "value": 0.2},
                  "loc": {"kind": "gaussian", "amplitude": 1.0, "center": 0.0, "width": 1.0}}
          },
          "discretization": {"x_min": -4.875, "x_max": 5.125, "n_points": 2001, "k_max": 9}
        }"#
        .to_string()
    }

    #[test]
    fn parses_defaults_and_round_trips() {
        let cfg = RunConfig::from_json(&two_layer_json()).unwrap();
        assert_eq!(cfg.solver, SolverParams::default());
        assert_eq!(cfg.discretization.sublattice_m, 1);
        let again = RunConfig::from_json(&cfg.to_json().unwrap()).unwrap();
        assert_eq!(cfg, again);
        assert_eq!(cfg.hash().unwrap(), again.hash().unwrap());
        assert_eq!(cfg.hash().unwrap().len(), 64);
    }

    #[test]
    fn rejects_bad_inputs() {
        let base = two_layer_json();
        let half = base.replace("\"theta\": 0.25", "\"theta\": 0.5");
        assert!(matches!(RunConfig::from_json(&half), Err(Error::Config(_))));
        let misaligned = base.replace("\"n_points\": 2001", "\"n_points\": 2000");
        let e = RunConfig::from_json(&misaligned).unwrap_err();
        assert!(e.to_string().contains("grid nodes"), "{e}");
        let neg = base.replace("\"value\": 0.2", "\"value\": -0.5");
        assert!(RunConfig::from_json(&neg).unwrap_err().to_string().contains("h.sign"));
        let unknown = base.replace("\"k_max\": 9", "\"k_max\": 9, \"kmax\": 3");
        assert!(RunConfig::from_json(&unknown).is_err());
        let even = base.replace("\"k_max\": 9", "\"k_max\": 8");
        assert!(RunConfig::from_json(&even).is_err());
        let units = base.replace("\"nu\"", "\"mu0\": 2.0, \"nu\"");
        assert!(RunConfig::from_json(&units).is_err());
    }

    #[test]
    fn hash_changes_with_content() {
        let a = RunConfig::from_json(&two_layer_json()).unwrap();
        let mut b = a.clone();
        b.solver.seed = 8;
        assert_ne!(a.hash().unwrap(), b.hash().unwrap());
    }
}
