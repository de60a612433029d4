//! Configuration-driven experiment runner.
//!
//! Every experiment is addressed by name, reads a TOML config with an
//! explicit schema version, resolves defaults, and emits deterministic CSV
//! rows plus a JSON document with full metadata. Timing lives in a
//! separate metadata section so result bytes are reproducible from
//! `(config, seed)` alone.

pub mod experiments;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::array::ArrayGeometry;
use crate::error::{NfError, Result};

/// Schema version understood by this build.
pub const SCHEMA_VERSION: u32 = 1;

/// One cell of a result table.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum Value {
    Int(i64),
    F64(f64),
    Str(String),
}

impl std::fmt::Display for Value {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Value::Int(v) => write!(f, "{v}"),
            Value::F64(v) => write!(f, "{v}"),
            Value::Str(v) => write!(f, "{v}"),
        }
    }
}

/// Typed rows under named columns.
#[derive(Debug, Clone, Serialize)]
pub struct ResultTable {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Value>>,
}

impl ResultTable {
    pub fn new(columns: &[&str]) -> Self {
        Self {
            columns: columns.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Value>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> String {
        let mut out = self.columns.join(",");
        out.push('\n');
        for row in &self.rows {
            let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            out.push_str(&line.join(","));
            out.push('\n');
        }
        out
    }
}

/// Everything a run produces besides files on disk.
#[derive(Debug, Clone)]
pub struct RunArtifacts {
    pub table: ResultTable,
    /// Fully resolved (defaulted) config, serialized back to TOML.
    pub resolved_config: String,
    /// Extra named outputs (e.g. spectrum dumps), written next to results.
    pub extra_files: Vec<(String, String)>,
}

/// Geometry block of a config file. Wavelength may be given directly or
/// derived from the carrier; spacing directly in meters or in wavelengths.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometryConfig {
    pub num_elements: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spacing_m: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spacing_wavelengths: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub carrier_freq_hz: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wavelength_m: Option<f64>,
    /// "center" or a 0-based element index.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phase_reference: Option<PhaseRef>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PhaseRef {
    Index(usize),
    Named(String),
}

impl GeometryConfig {
    pub fn resolve(&self) -> Result<ArrayGeometry> {
        let wavelength = match (self.wavelength_m, self.carrier_freq_hz) {
            (Some(w), None) => w,
            (None, Some(f)) => {
                if !(f > 0.0) {
                    return Err(NfError::Config(format!("carrier_freq_hz must be positive, got {f}")));
                }
                crate::array::C0 / f
            }
            (Some(_), Some(_)) => {
                return Err(NfError::Config(
                    "give either wavelength_m or carrier_freq_hz, not both".into(),
                ))
            }
            (None, None) => {
                return Err(NfError::Config(
                    "geometry needs wavelength_m or carrier_freq_hz".into(),
                ))
            }
        };
        let spacing = match (self.spacing_m, self.spacing_wavelengths) {
            (Some(s), None) => s,
            (None, Some(w)) => w * wavelength,
            (Some(_), Some(_)) => {
                return Err(NfError::Config(
                    "give either spacing_m or spacing_wavelengths, not both".into(),
                ))
            }
            (None, None) => 0.5 * wavelength,
        };
        let g = ArrayGeometry::from_wavelength(self.num_elements, spacing, wavelength)?;
        match &self.phase_reference {
            None => Ok(g),
            Some(PhaseRef::Index(i)) => g.with_phase_reference(*i),
            Some(PhaseRef::Named(name)) if name == "center" => Ok(g.with_center_reference()),
            Some(PhaseRef::Named(other)) => Err(NfError::Config(format!(
                "phase_reference must be an index or \"center\", got {other:?}"
            ))),
        }
    }
}

/// Top-level config file shape. `params` is interpreted per experiment.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    pub schema: u32,
    #[serde(default)]
    pub experiment: Option<String>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub geometry: Option<toml::Value>,
    #[serde(default)]
    pub params: Option<toml::Value>,
}

impl RawConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let raw: RawConfig = toml::from_str(text)
            .map_err(|e| NfError::Config(format!("config parse error: {e}")))?;
        if raw.schema != SCHEMA_VERSION {
            return Err(NfError::Config(format!(
                "unsupported schema version {} (this build reads {SCHEMA_VERSION})",
                raw.schema
            )));
        }
        Ok(raw)
    }

    pub fn geometry_as<T: for<'de> Deserialize<'de>>(&self) -> Result<Option<T>> {
        match &self.geometry {
            None => Ok(None),
            Some(v) => Ok(Some(v.clone().try_into().map_err(|e| {
                NfError::Config(format!("geometry block: {e}"))
            })?)),
        }
    }

    pub fn params_as<T: for<'de> Deserialize<'de> + Default>(&self) -> Result<T> {
        match &self.params {
            None => Ok(T::default()),
            Some(v) => v
                .clone()
                .try_into()
                .map_err(|e| NfError::Config(format!("params block: {e}"))),
        }
    }
}

/// One validation finding; errors block a run, warnings do not.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Finding {
    pub severity: Severity,
    pub message: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Severity {
    Warning,
    Error,
}

impl std::fmt::Display for Finding {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let tag = match self.severity {
            Severity::Warning => "warning",
            Severity::Error => "error",
        };
        write!(f, "{tag}: {}", self.message)
    }
}

/// Hex SHA-256 of the resolved config text; identifies the run inputs.
pub fn config_hash(resolved: &str) -> String {
    let mut h = Sha256::new();
    h.update(resolved.as_bytes());
    let digest = h.finalize();
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// Run metadata; wall time is segregated so result bytes stay
/// reproducible.
#[derive(Debug, Clone, Serialize)]
pub struct RunMeta {
    pub tool_version: String,
    pub experiment: String,
    pub config_hash: String,
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunDocument<'a> {
    pub meta: &'a RunMeta,
    pub timing: Timing,
    pub columns: &'a [String],
    pub rows: &'a [Vec<Value>],
}

#[derive(Debug, Clone, Serialize)]
pub struct Timing {
    pub wall_ms: u128,
}

/// Execute an experiment by name. `seed_override` (from the CLI) wins over
/// the config's seed; the default seed is 0. `workers` bounds the rayon
/// pool; 0 means the library default.
pub fn run(
    experiment: &str,
    config: &RawConfig,
    seed_override: Option<u64>,
    workers: usize,
) -> Result<RunArtifacts> {
    if let Some(in_file) = &config.experiment {
        if in_file != experiment {
            return Err(NfError::Config(format!(
                "config file is for experiment {in_file:?}, asked to run {experiment:?}"
            )));
        }
    }
    let seed = seed_override.or(config.seed).unwrap_or(0);
    let runner = experiments::lookup(experiment)?;
    if workers > 0 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| NfError::Numerical(format!("thread pool: {e}")))?;
        pool.install(|| (runner)(config, seed))
    } else {
        (runner)(config, seed)
    }
}

/// Schema and cross-field checks without running the experiment.
pub fn validate(experiment: Option<&str>, config: &RawConfig) -> Vec<Finding> {
    let mut findings = Vec::new();
    let name = match (experiment, &config.experiment) {
        (Some(cli), Some(file)) if cli != file => {
            findings.push(Finding {
                severity: Severity::Error,
                message: format!("config file names experiment {file:?}, CLI asked for {cli:?}"),
            });
            return findings;
        }
        (Some(cli), _) => cli.to_string(),
        (None, Some(file)) => file.clone(),
        (None, None) => {
            findings.push(Finding {
                severity: Severity::Error,
                message: "no experiment named on the CLI or in the config".into(),
            });
            return findings;
        }
    };
    if experiments::lookup(&name).is_err() {
        findings.push(Finding {
            severity: Severity::Error,
            message: format!(
                "unknown experiment {name:?}; valid names: {}",
                experiments::NAMES.join(", ")
            ),
        });
        return findings;
    }
    findings.extend(experiments::validate(&name, config));
    findings
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn geometry_resolution_paths() {
        let g: GeometryConfig = toml::from_str(
            "num_elements = 64\nwavelength_m = 0.01\nspacing_wavelengths = 0.5\nphase_reference = \"center\"",
        )
        .unwrap();
        let geom = g.resolve().unwrap();
        assert_eq!(geom.num_elements(), 64);
        assert!((geom.spacing() - 0.005).abs() < 1e-15);
        assert_eq!(geom.phase_reference(), 31);

        let g: GeometryConfig =
            toml::from_str("num_elements = 8\ncarrier_freq_hz = 2.99792458e10").unwrap();
        let geom = g.resolve().unwrap();
        assert!((geom.wavelength() - 0.01).abs() < 1e-12);

        let bad: GeometryConfig = toml::from_str(
            "num_elements = 8\nwavelength_m = 0.01\ncarrier_freq_hz = 1e9",
        )
        .unwrap();
        assert!(bad.resolve().is_err());
    }

    #[test]
    fn unknown_keys_rejected() {
        let err = RawConfig::parse("schema = 1\nbogus_key = 3\n");
        assert!(matches!(err, Err(NfError::Config(_))));
        let err = toml::from_str::<GeometryConfig>("num_elements = 4\nwhatever = 1");
        assert!(err.is_err());
    }

    #[test]
    fn schema_version_enforced() {
        assert!(RawConfig::parse("schema = 2").is_err());
        assert!(RawConfig::parse("schema = 1").is_ok());
    }

    #[test]
    fn csv_rendering_stable() {
        let mut t = ResultTable::new(&["a", "b"]);
        t.push(vec![Value::Int(1), Value::F64(2.5)]);
        t.push(vec![Value::Str("x".into()), Value::F64(f64::INFINITY)]);
        assert_eq!(t.to_csv(), "a,b\n1,2.5\nx,inf\n");
    }

    #[test]
    fn hash_changes_with_content() {
        assert_ne!(config_hash("a"), config_hash("b"));
        assert_eq!(config_hash("a"), config_hash("a"));
    }
}
