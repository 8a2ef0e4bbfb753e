//! JSON case files: a single document with sections `network`, `tech`,
//! `costs`, `loads`, `pv`, `scenarios`, and optionally `uncertainty`.
//!
//! Conventions:
//! - lines and the substation reference buses by their string id;
//! - per-bus cost fields accept either one scalar (applied to every bus)
//!   or one value per bus;
//! - the PV profile and prices may reference an external CSV matrix with
//!   rows = slots and columns = scenarios; per-scenario load CSVs have
//!   rows = slots and columns = buses;
//! - when `uncertainty.envelope` is absent, the demand/PV envelope is
//!   derived from the scenarios: expected value as center, maximum
//!   absolute deviation across scenarios as half-width.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use thiserror::Error;

use crate::model::{
    Bus, CaseData, CostParams, Envelope, Line, LoadProfile, Network, PvProfile, TechParams,
    validate_case,
};

#[derive(Debug, Error)]
pub enum CasefileError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("invalid JSON in {path}: {source}")]
    Json {
        path: PathBuf,
        source: serde_json::Error,
    },
    #[error("invalid CSV in {path}: {message}")]
    Csv { path: PathBuf, message: String },
    #[error("unknown bus id `{0}`")]
    UnknownBus(String),
    #[error("duplicate bus id `{0}`")]
    DuplicateBus(String),
    #[error("{0}")]
    Shape(String),
    #[error("case validation failed:\n{0}")]
    Validation(String),
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct FileCase {
    name: String,
    #[serde(default = "default_currency")]
    currency: String,
    #[serde(default = "default_power_unit")]
    power_unit: String,
    horizon: usize,
    #[serde(default = "default_segments")]
    segments: usize,
    network: FileNetwork,
    tech: TechParams,
    costs: FileCosts,
    scenarios: FileScenarios,
    loads: FileLoads,
    pv: FilePv,
    #[serde(default)]
    uncertainty: Option<FileUncertainty>,
}

fn default_currency() -> String {
    "EUR".into()
}

fn default_power_unit() -> String {
    "kW".into()
}

fn default_segments() -> usize {
    12
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct FileNetwork {
    substation: String,
    buses: Vec<Bus>,
    lines: Vec<FileLine>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct FileLine {
    from: String,
    to: String,
    r: f64,
    x: f64,
    s_max: f64,
}

/// One scalar for every bus, or one value per bus.
#[derive(Deserialize)]
#[serde(untagged)]
enum ScalarOrPerBus {
    Scalar(f64),
    PerBus(Vec<f64>),
}

impl ScalarOrPerBus {
    fn expand(&self, n: usize, field: &str) -> Result<Vec<f64>, CasefileError> {
        match self {
            ScalarOrPerBus::Scalar(v) => Ok(vec![*v; n]),
            ScalarOrPerBus::PerBus(v) if v.len() == n => Ok(v.clone()),
            ScalarOrPerBus::PerBus(v) => Err(CasefileError::Shape(format!(
                "`{field}` has {} entries but the network has {n} buses",
                v.len()
            ))),
        }
    }
}

/// Inline matrix or a reference to a CSV file.
#[derive(Deserialize)]
#[serde(untagged)]
enum MatrixSource {
    Inline(Vec<Vec<f64>>),
    Csv { csv: String },
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct FileCosts {
    c_pv: ScalarOrPerBus,
    i_pv: ScalarOrPerBus,
    c_bt: ScalarOrPerBus,
    i_bt: ScalarOrPerBus,
    oc_pv: f64,
    oc_bt: f64,
    /// `[slot][scenario]` grid price.
    price: MatrixSource,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct FileScenarios {
    probabilities: Vec<f64>,
}

/// Loads are either inline `[bus][slot][scenario]` tensors or one CSV per
/// scenario with rows = slots and columns = buses.
#[derive(Deserialize)]
#[serde(untagged)]
enum TensorSource {
    Inline(Vec<Vec<Vec<f64>>>),
    Csv { csv_per_scenario: Vec<String> },
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct FileLoads {
    pl: TensorSource,
    ql: TensorSource,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct FilePv {
    /// `[slot][scenario]` normalized availability.
    profile: MatrixSource,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct FileUncertainty {
    envelope: Option<Envelope>,
}

fn read_csv_matrix(path: &Path) -> Result<Vec<Vec<f64>>, CasefileError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| CasefileError::Csv {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| CasefileError::Csv {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        let row: Result<Vec<f64>, _> = record.iter().map(str::parse::<f64>).collect();
        rows.push(row.map_err(|e| CasefileError::Csv {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?);
    }
    Ok(rows)
}

fn resolve_matrix(src: &MatrixSource, base: &Path) -> Result<Vec<Vec<f64>>, CasefileError> {
    match src {
        MatrixSource::Inline(m) => Ok(m.clone()),
        MatrixSource::Csv { csv } => read_csv_matrix(&base.join(csv)),
    }
}

/// Turns per-scenario slot×bus CSVs into the `[bus][slot][scenario]`
/// tensor used internally.
fn resolve_tensor(
    src: &TensorSource,
    base: &Path,
    n_buses: usize,
    field: &str,
) -> Result<Vec<Vec<Vec<f64>>>, CasefileError> {
    match src {
        TensorSource::Inline(t) => Ok(t.clone()),
        TensorSource::Csv { csv_per_scenario } => {
            let mut per_scen = Vec::with_capacity(csv_per_scenario.len());
            for name in csv_per_scenario {
                per_scen.push(read_csv_matrix(&base.join(name))?);
            }
            let slots = per_scen.first().map_or(0, Vec::len);
            for (s, m) in per_scen.iter().enumerate() {
                if m.len() != slots || m.iter().any(|row| row.len() != n_buses) {
                    return Err(CasefileError::Shape(format!(
                        "`{field}` CSV for scenario {s} is not {slots} slots x {n_buses} buses"
                    )));
                }
            }
            let mut tensor = vec![vec![vec![0.0; per_scen.len()]; slots]; n_buses];
            for (s, m) in per_scen.iter().enumerate() {
                for (t, row) in m.iter().enumerate() {
                    for (i, &v) in row.iter().enumerate() {
                        tensor[i][t][s] = v;
                    }
                }
            }
            Ok(tensor)
        }
    }
}

/// Probability-weighted center and max-deviation half-width per series,
/// used when the case file does not pin the envelope explicitly.
fn derive_envelope(
    pl: &[Vec<Vec<f64>>],
    pv: &[Vec<f64>],
    rho: &[f64],
) -> Envelope {
    let center = |row: &[f64]| -> f64 { row.iter().zip(rho).map(|(v, p)| v * p).sum() };
    let half = |row: &[f64], c: f64| -> f64 {
        row.iter().map(|v| (v - c).abs()).fold(0.0, f64::max)
    };
    let pv_bar: Vec<f64> = pv.iter().map(|r| center(r)).collect();
    let pv_hat = pv
        .iter()
        .zip(&pv_bar)
        .map(|(r, &c)| half(r, c))
        .collect();
    let pl_bar: Vec<Vec<f64>> = pl
        .iter()
        .map(|bus| bus.iter().map(|r| center(r)).collect())
        .collect();
    let pl_hat = pl
        .iter()
        .zip(&pl_bar)
        .map(|(bus, bars)| {
            bus.iter()
                .zip(bars)
                .map(|(r, &c)| half(r, c))
                .collect()
        })
        .collect();
    Envelope {
        pv_bar,
        pv_hat,
        pl_bar,
        pl_hat,
    }
}

/// Parses and validates a case file; CSV references are resolved relative
/// to the case file's directory.
pub fn load_case(path: impl AsRef<Path>) -> Result<CaseData, CasefileError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| CasefileError::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    parse_case(&text, base, path)
}

fn parse_case(text: &str, base: &Path, origin: &Path) -> Result<CaseData, CasefileError> {
    let file: FileCase = serde_json::from_str(text).map_err(|e| CasefileError::Json {
        path: origin.to_path_buf(),
        source: e,
    })?;
    let nb = file.network.buses.len();
    let mut index: HashMap<&str, usize> = HashMap::new();
    for (i, bus) in file.network.buses.iter().enumerate() {
        if index.insert(bus.id.as_str(), i).is_some() {
            return Err(CasefileError::DuplicateBus(bus.id.clone()));
        }
    }
    let lookup = |id: &str| -> Result<usize, CasefileError> {
        index
            .get(id)
            .copied()
            .ok_or_else(|| CasefileError::UnknownBus(id.to_string()))
    };
    let lines = file
        .network
        .lines
        .iter()
        .map(|l| {
            Ok(Line {
                from: lookup(&l.from)?,
                to: lookup(&l.to)?,
                r: l.r,
                x: l.x,
                s_max: l.s_max,
            })
        })
        .collect::<Result<Vec<_>, CasefileError>>()?;
    let substation = lookup(&file.network.substation)?;

    let pl = resolve_tensor(&file.loads.pl, base, nb, "loads.pl")?;
    let ql = resolve_tensor(&file.loads.ql, base, nb, "loads.ql")?;
    let pv = resolve_matrix(&file.pv.profile, base)?;
    let price = resolve_matrix(&file.costs.price, base)?;
    let envelope = match file.uncertainty.and_then(|u| u.envelope) {
        Some(env) => env,
        None => derive_envelope(&pl, &pv, &file.scenarios.probabilities),
    };

    let case = CaseData {
        name: file.name,
        currency: file.currency,
        power_unit: file.power_unit,
        network: Network {
            buses: file.network.buses,
            lines,
            substation,
        },
        tech: file.tech,
        costs: CostParams {
            c_pv: file.costs.c_pv.expand(nb, "costs.c_pv")?,
            i_pv: file.costs.i_pv.expand(nb, "costs.i_pv")?,
            c_bt: file.costs.c_bt.expand(nb, "costs.c_bt")?,
            i_bt: file.costs.i_bt.expand(nb, "costs.i_bt")?,
            oc_pv: file.costs.oc_pv,
            oc_bt: file.costs.oc_bt,
            price,
        },
        loads: LoadProfile { pl, ql },
        pv_profile: PvProfile { pv },
        horizon: file.horizon,
        probabilities: file.scenarios.probabilities,
        envelope,
        segments: file.segments,
    };
    let report = validate_case(&case);
    if !report.is_ok() {
        return Err(CasefileError::Validation(report.violations.join("\n")));
    }
    Ok(case)
}
