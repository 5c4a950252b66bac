//! File formats. CSV files start with `# key=value` header lines; JSON files
//! carry the same data under `"meta"`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::dual::TraceEntry;
use crate::error::{Error, Result};
use crate::grid::{FrequencyLattice, SpaceGrid, TimeFourierField};
use crate::material::Layout;
use crate::pipeline::Prepared;
use crate::reconstruct::FieldSamples;
use crate::spectrum::{discriminant_cell, BandCertificate};

/// Bumped whenever a file layout changes.
pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Meta {
    pub version: String,
    pub format: u32,
    pub config_hash: String,
    pub period: f64,
    pub omega: f64,
    pub k_max: i64,
    pub x_min: f64,
    pub x_max: f64,
    pub n_points: usize,
    pub sublattice_m: i64,
    pub active_set: Vec<i64>,
    pub polarization: u8,
}

impl Meta {
    pub fn new(p: &Prepared) -> Self {
        Self {
            version: env!("CARGO_PKG_VERSION").to_string(),
            format: FORMAT_VERSION,
            config_hash: p.config_hash.clone(),
            period: p.lattice.period,
            omega: p.omega(),
            k_max: p.lattice.k_max,
            x_min: p.grid.x_min,
            x_max: p.grid.x_max,
            n_points: p.grid.n_points,
            sublattice_m: p.lattice.sublattice_m,
            active_set: p.lattice.active_set.clone(),
            polarization: p.polarization.number(),
        }
    }

    pub fn header(&self) -> String {
        let ks: Vec<String> = self.active_set.iter().map(|k| k.to_string()).collect();
        let mut s = String::new();
        let _ = writeln!(s, "# version={}", self.version);
        let _ = writeln!(s, "# format={}", self.format);
        let _ = writeln!(s, "# config_hash={}", self.config_hash);
        let _ = writeln!(s, "# T={:.17e}", self.period);
        let _ = writeln!(s, "# omega={:.17e}", self.omega);
        let _ = writeln!(s, "# k_max={}", self.k_max);
        let _ = writeln!(s, "# x_min={:.17e}", self.x_min);
        let _ = writeln!(s, "# x_max={:.17e}", self.x_max);
        let _ = writeln!(s, "# n_points={}", self.n_points);
        let _ = writeln!(s, "# sublattice_m={}", self.sublattice_m);
        let _ = writeln!(s, "# active_set={}", ks.join(";"));
        let _ = writeln!(s, "# polarization={}", self.polarization);
        s
    }

    pub fn parse_header(text: &str) -> Result<Self> {
        let mut kv = BTreeMap::new();
        for line in text.lines().take_while(|l| l.starts_with('#')) {
            if let Some((k, v)) = line[1..].trim().split_once('=') {
                kv.insert(k.trim().to_string(), v.trim().to_string());
            }
        }
        let get = |k: &str| kv.get(k).cloned().ok_or_else(|| Error::Parse(format!("header is missing '{k}'")));
        let num = |k: &str| -> Result<f64> { get(k)?.parse().map_err(|_| Error::Parse(format!("header field '{k}' is not a number"))) };
        let int = |k: &str| -> Result<i64> { get(k)?.parse().map_err(|_| Error::Parse(format!("header field '{k}' is not an integer"))) };
        let active = get("active_set")?
            .split(';')
            .map(|s| s.parse::<i64>().map_err(|_| Error::Parse("bad active_set in header".into())))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            version: get("version")?,
            format: int("format")? as u32,
            config_hash: get("config_hash")?,
            period: num("T")?,
            omega: num("omega")?,
            k_max: int("k_max")?,
            x_min: num("x_min")?,
            x_max: num("x_max")?,
            n_points: int("n_points")? as usize,
            sublattice_m: int("sublattice_m")?,
            active_set: active,
            polarization: int("polarization")? as u8,
        })
    }

    pub fn grid(&self) -> Result<SpaceGrid> {
        SpaceGrid::new(self.x_min, self.x_max, self.n_points)
    }

    pub fn lattice(&self) -> Result<FrequencyLattice> {
        FrequencyLattice::with_active_set(self.period, self.k_max, self.sublattice_m, self.active_set.clone())
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::Io(format!("cannot write {}: {e}", path.display())))
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::Io(format!("cannot read {}: {e}", path.display())))
}

pub fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::Io(format!("cannot create {}: {e}", dir.display())))
}

/// `{"meta": ..., <key>: <value>}` pretty-printed.
pub fn write_json<T: Serialize>(path: &Path, meta: &Meta, key: &str, value: &T) -> Result<()> {
    let mut obj = serde_json::Map::new();
    obj.insert("meta".into(), serde_json::to_value(meta)?);
    obj.insert(key.into(), serde_json::to_value(value)?);
    write_text(path, &(serde_json::to_string_pretty(&Value::Object(obj))? + "\n"))
}

/// Returns the meta block and the value stored under `key`.
pub fn read_json(path: &Path, key: &str) -> Result<(Meta, Value)> {
    let v: Value = serde_json::from_str(&read_text(path)?)?;
    let meta: Meta = serde_json::from_value(v.get("meta").cloned().ok_or_else(|| Error::Parse(format!("{} has no meta block", path.display())))?)?;
    let body = v.get(key).cloned().ok_or_else(|| Error::Parse(format!("{} has no '{key}' entry", path.display())))?;
    Ok((meta, body))
}

/// Columns `x,k,re,im`, one row per node and frequency, frequency-major.
pub fn coefficients_csv(meta: &Meta, f: &TimeFourierField) -> String {
    let mut s = meta.header();
    s.push_str("x,k,re,im\n");
    for (q, &k) in f.lattice.active_set.iter().enumerate() {
        for (i, z) in f.coeffs[q].iter().enumerate() {
            let _ = writeln!(s, "{:.17e},{},{:.17e},{:.17e}", f.grid.x(i), k, z.re, z.im);
        }
    }
    s
}

pub fn write_coefficients(path: &Path, meta: &Meta, f: &TimeFourierField) -> Result<()> {
    write_text(path, &coefficients_csv(meta, f))
}

/// Parse a coefficient file written by [`write_coefficients`] and check it against
/// its own header: every node and active frequency exactly once.
pub fn read_coefficients(path: &Path) -> Result<(Meta, TimeFourierField)> {
    let text = read_text(path)?;
    let meta = Meta::parse_header(&text)?;
    let grid = meta.grid()?;
    let lattice = meta.lattice()?;
    let mut field = TimeFourierField::zeros(&grid, &lattice);
    let mut seen = vec![vec![false; grid.n_points]; lattice.len()];
    let mut lines = text.lines().filter(|l| !l.starts_with('#'));
    match lines.next() {
        Some(h) if h.trim() == "x,k,re,im" => {}
        _ => return Err(Error::Parse(format!("{}: expected column header x,k,re,im", path.display()))),
    }
    let tol = 1e-9 * grid.dx();
    for (n, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        let bad = || Error::Parse(format!("{}: malformed row {}", path.display(), n + 1));
        if cols.len() != 4 {
            return Err(bad());
        }
        let x: f64 = cols[0].trim().parse().map_err(|_| bad())?;
        let k: i64 = cols[1].trim().parse().map_err(|_| bad())?;
        let re: f64 = cols[2].trim().parse().map_err(|_| bad())?;
        let im: f64 = cols[3].trim().parse().map_err(|_| bad())?;
        let i = grid
            .node_index(x, tol)
            .ok_or_else(|| Error::Parse(format!("{}: x = {x} is not a grid node", path.display())))?;
        let q = lattice
            .index_of(k)
            .ok_or_else(|| Error::Parse(format!("{}: k = {k} is not in the active set", path.display())))?;
        if seen[q][i] {
            return Err(Error::Parse(format!("{}: duplicate entry x = {x}, k = {k}", path.display())));
        }
        seen[q][i] = true;
        field.coeffs[q][i] = Complex64::new(re, im);
    }
    if seen.iter().flatten().any(|s| !s) {
        return Err(Error::Parse(format!("{}: missing coefficients", path.display())));
    }
    Ok((meta, field))
}

/// `lambda,discriminant` (periodic) or `lambda,discriminant_minus,discriminant_plus` (half-space).
pub fn bands_csv(meta: &Meta, p: &Prepared, cert: &BandCertificate, samples: usize) -> String {
    let mut s = meta.header();
    let cells = p.weight.cells();
    match &p.weight.layout {
        Layout::Periodic(_) => s.push_str("lambda,discriminant\n"),
        Layout::HalfSpace { .. } => s.push_str("lambda,discriminant_minus,discriminant_plus\n"),
    }
    let n = samples.max(2);
    for j in 0..=n {
        let l = cert.lambda_max * j as f64 / n as f64;
        let _ = write!(s, "{:.12e}", l);
        for c in &cells {
            let _ = write!(s, ",{:.12e}", discriminant_cell(c, l));
        }
        s.push('\n');
    }
    s
}

pub fn fields_csv(meta: &Meta, f: &FieldSamples) -> String {
    let mut s = meta.header();
    s.push_str("x,phase,E_y,B_x,B_z,H_x,H_z,D_y\n");
    let np = f.phase.len();
    for (a, &x) in f.x.iter().enumerate() {
        for (b, &t) in f.phase.iter().enumerate() {
            let r = a * np + b;
            let _ = writeln!(
                s,
                "{:.10e},{:.10e},{:.10e},{:.10e},{:.10e},{:.10e},{:.10e},{:.10e}",
                x, t, f.e_y[r], f.b_x[r], f.b_z[r], f.h_x[r], f.h_z[r], f.d_y[r]
            );
        }
    }
    s
}

/// Heatmap-ready `x,phase,E_y,energy_density` with `½(E·D + B·H)`.
pub fn plotdata_csv(meta: &Meta, f: &FieldSamples) -> String {
    let mut s = meta.header();
    s.push_str("x,phase,E_y,energy_density\n");
    let np = f.phase.len();
    for (a, &x) in f.x.iter().enumerate() {
        for (b, &t) in f.phase.iter().enumerate() {
            let r = a * np + b;
            let u = 0.5 * (f.e_y[r] * f.d_y[r] + f.b_x[r] * f.h_x[r] + f.b_z[r] * f.h_z[r]);
            let _ = writeln!(s, "{:.10e},{:.10e},{:.10e},{:.10e}", x, t, f.e_y[r], u);
        }
    }
    s
}

/// First line is `{"meta": ...}`, then one entry per line.
pub fn trace_jsonl(meta: &Meta, trace: &[TraceEntry]) -> Result<String> {
    let mut s = serde_json::to_string(&serde_json::json!({ "meta": meta }))?;
    s.push('\n');
    for t in trace {
        s.push_str(&serde_json::to_string(t)?);
        s.push('\n');
    }
    Ok(s)
}

pub fn write(path: &Path, text: &str) -> Result<()> {
    write_text(path, text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::RunConfig;
    use crate::pipeline::prepare;

    fn small() -> Prepared {
        let text = crate::config::tests::two_layer_json().replace("\"n_points\": 2001", "\"n_points\": 81").replace("\"k_max\": 9", "\"k_max\": 3");
        prepare(&RunConfig::from_json(&text).unwrap(), None).unwrap()
    }

    #[test]
    fn header_round_trip() {
        let p = small();
        let m = Meta::new(&p);
        assert_eq!(Meta::parse_header(&m.header()).unwrap(), m);
    }

    #[test]
    fn coefficients_round_trip_exactly() {
        let p = small();
        let m = Meta::new(&p);
        let f = TimeFourierField::from_fn(&p.grid, &p.lattice, |k, x| Complex64::new((x * k as f64).sin() / 3.0, (x - 0.1).cos() * 1e-7));
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("u.csv");
        write_coefficients(&path, &m, &f).unwrap();
        let (m2, g) = read_coefficients(&path).unwrap();
        assert_eq!(m, m2);
        assert_eq!(f.coeffs, g.coeffs);
    }

    #[test]
    fn truncated_file_is_rejected() {
        let p = small();
        let m = Meta::new(&p);
        let f = TimeFourierField::zeros(&p.grid, &p.lattice);
        let text = coefficients_csv(&m, &f);
        let cut: String = text.lines().take(text.lines().count() - 3).map(|l| format!("{l}\n")).collect();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("u.csv");
        std::fs::write(&path, cut).unwrap();
        assert!(matches!(read_coefficients(&path), Err(Error::Parse(_))));
    }
}
