//! Declarative experiment manifests (TOML).
//!
//! ```toml
//! molecule = "molecules/fluoronitrobenzofuran.toml"
//! mode = "full"            # full | zeeman        (default zeeman)
//! dimension = "2d"         # 1d | 2d              (default 1d)
//! out_dir = "out/search"   # optional; --out overrides
//! threshold = 0.1          # peak threshold       (default 0.1)
//! intensity_tol = 0.05     # relative intensity tolerance for PASS/FAIL
//!
//! [experiment]             # exactly one experiment...
//! kind = "grover"          # grover|count|bv|hogg|pops|equilibrium|program|circuit
//! target = "11"
//!
//! # ...or a list:
//! # [[cases]]
//! # kind = "grover"
//! # target = "00"
//!
//! [acquisition]            # optional overrides of the derived defaults
//! n_t2 = 256
//! n_t1 = 16
//! zero_fill_t2 = 1024
//! zero_fill_t1 = 256
//! # dwell_s = 0.002
//! ```
//!
//! Relative molecule paths resolve against the manifest's directory, then
//! against the `SPINSPEC_MOLECULES` directory if set.

use std::path::{Path, PathBuf};

use serde::Deserialize;
use thiserror::Error;

use spinspec::algorithms::{AlgorithmSpec, CountOracle, SatFormula};
use spinspec::engine::EvolutionMode;
use spinspec::spin::BitLabel;

#[derive(Debug, Error)]
pub enum ManifestError {
    #[error("manifest: {0}")]
    Toml(String),
    #[error("manifest: {0}")]
    Invalid(String),
    #[error("molecule file not found: {0} (tried manifest directory and SPINSPEC_MOLECULES)")]
    MoleculeNotFound(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dimension {
    OneD,
    TwoD,
}

impl Dimension {
    pub fn as_str(&self) -> &'static str {
        match self {
            Dimension::OneD => "1d",
            Dimension::TwoD => "2d",
        }
    }
}

impl std::str::FromStr for Dimension {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "1d" => Ok(Dimension::OneD),
            "2d" => Ok(Dimension::TwoD),
            other => Err(format!("bad dimension {other:?}; expected 1d or 2d")),
        }
    }
}

/// What one experiment runs.
#[derive(Debug, Clone)]
pub enum ExperimentKind {
    Algorithm(AlgorithmSpec),
    /// Pseudopure preparation only (prepared state + its spectrum).
    Pops,
    /// Equilibrium spectrum only.
    Equilibrium,
    /// A pulse-program file run from the pseudopure state.
    Program(PathBuf),
    /// A gate-circuit file, compiled then run from the pseudopure state.
    Circuit(PathBuf),
}

#[derive(Debug, Clone)]
pub struct ExperimentCase {
    pub kind: ExperimentKind,
}

impl ExperimentCase {
    /// Short deterministic name used for output subdirectories.
    pub fn slug(&self) -> String {
        let raw = match &self.kind {
            ExperimentKind::Algorithm(spec) => match spec {
                AlgorithmSpec::Grover { target } => format!("grover-{target}"),
                AlgorithmSpec::Counting { oracle } => format!("count-{oracle}"),
                AlgorithmSpec::BernsteinVazirani { string } => format!("bv-{string}"),
                AlgorithmSpec::Hogg { formula } => format!("hogg-{formula}"),
            },
            ExperimentKind::Pops => "pops".to_string(),
            ExperimentKind::Equilibrium => "equilibrium".to_string(),
            ExperimentKind::Program(p) => format!(
                "program-{}",
                p.file_stem().map(|s| s.to_string_lossy()).unwrap_or_default()
            ),
            ExperimentKind::Circuit(p) => format!(
                "circuit-{}",
                p.file_stem().map(|s| s.to_string_lossy()).unwrap_or_default()
            ),
        };
        raw.chars()
            .map(|c| match c {
                '&' => '.',
                '~' => 'n',
                c if c.is_ascii_alphanumeric() || c == '-' || c == '.' || c == '_' => c,
                _ => '_',
            })
            .collect()
    }
}

/// Optional overrides of the acquisition defaults derived from the molecule.
#[derive(Debug, Clone, Copy, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AcquisitionOverrides {
    pub n_t2: Option<usize>,
    pub n_t1: Option<usize>,
    pub dwell_s: Option<f64>,
    pub zero_fill_t2: Option<usize>,
    pub zero_fill_t1: Option<usize>,
}

impl AcquisitionOverrides {
    pub fn apply(&self, mut params: spinspec::acquisition::AcquisitionParams)
        -> spinspec::acquisition::AcquisitionParams
    {
        if let Some(v) = self.n_t2 {
            params.n_t2 = v;
        }
        if let Some(v) = self.n_t1 {
            params.n_t1 = v;
        }
        if let Some(v) = self.dwell_s {
            params.dwell_s = v;
        }
        if let Some(v) = self.zero_fill_t2 {
            params.zero_fill_t2 = v;
        }
        if let Some(v) = self.zero_fill_t1 {
            params.zero_fill_t1 = v;
        }
        params
    }
}

/// A parsed experiment manifest.
#[derive(Debug, Clone)]
pub struct Manifest {
    pub molecule: PathBuf,
    pub mode: EvolutionMode,
    pub dimension: Dimension,
    pub out_dir: Option<PathBuf>,
    pub threshold: f64,
    pub intensity_tol: f64,
    pub cases: Vec<ExperimentCase>,
    pub acquisition: AcquisitionOverrides,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ManifestRaw {
    molecule: String,
    mode: Option<String>,
    dimension: Option<String>,
    out_dir: Option<String>,
    threshold: Option<f64>,
    intensity_tol: Option<f64>,
    experiment: Option<CaseRaw>,
    #[serde(default)]
    cases: Vec<CaseRaw>,
    acquisition: Option<AcquisitionOverrides>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CaseRaw {
    kind: String,
    target: Option<String>,
    oracle: Option<String>,
    string: Option<String>,
    formula: Option<String>,
    program: Option<String>,
    circuit: Option<String>,
}

fn convert_case(raw: &CaseRaw) -> Result<ExperimentCase, ManifestError> {
    let invalid = |msg: String| ManifestError::Invalid(msg);
    let need = |field: &Option<String>, name: &str| {
        field
            .clone()
            .ok_or_else(|| invalid(format!("kind {:?} needs the {name} field", raw.kind)))
    };
    let kind = match raw.kind.as_str() {
        "grover" => {
            let target: BitLabel = need(&raw.target, "target")?
                .parse()
                .map_err(|e| invalid(format!("{e}")))?;
            ExperimentKind::Algorithm(AlgorithmSpec::Grover { target })
        }
        "count" => {
            let oracle: CountOracle = need(&raw.oracle, "oracle")?
                .parse()
                .map_err(|e| invalid(format!("{e}")))?;
            ExperimentKind::Algorithm(AlgorithmSpec::Counting { oracle })
        }
        "bv" => {
            let string: BitLabel = need(&raw.string, "string")?
                .parse()
                .map_err(|e| invalid(format!("{e}")))?;
            ExperimentKind::Algorithm(AlgorithmSpec::BernsteinVazirani { string })
        }
        "hogg" => {
            let formula = SatFormula::parse(&need(&raw.formula, "formula")?)
                .map_err(|e| invalid(format!("{e}")))?;
            ExperimentKind::Algorithm(AlgorithmSpec::Hogg { formula })
        }
        "pops" => ExperimentKind::Pops,
        "equilibrium" => ExperimentKind::Equilibrium,
        "program" => ExperimentKind::Program(PathBuf::from(need(&raw.program, "program")?)),
        "circuit" => ExperimentKind::Circuit(PathBuf::from(need(&raw.circuit, "circuit")?)),
        other => return Err(invalid(format!("unknown experiment kind {other:?}"))),
    };
    Ok(ExperimentCase { kind })
}

impl Manifest {
    pub fn from_toml_str(text: &str) -> Result<Manifest, ManifestError> {
        let raw: ManifestRaw =
            toml::from_str(text).map_err(|e| ManifestError::Toml(e.to_string()))?;
        let mut cases = Vec::new();
        if let Some(e) = &raw.experiment {
            cases.push(convert_case(e)?);
        }
        for c in &raw.cases {
            cases.push(convert_case(c)?);
        }
        if cases.is_empty() {
            return Err(ManifestError::Invalid(
                "manifest needs an [experiment] or at least one [[cases]] entry".into(),
            ));
        }
        let mode = match raw.mode.as_deref() {
            None => EvolutionMode::ZeemanOnly,
            Some(s) => s
                .parse()
                .map_err(|e: String| ManifestError::Invalid(e))?,
        };
        let dimension = match raw.dimension.as_deref() {
            None => Dimension::OneD,
            Some(s) => s
                .parse()
                .map_err(|e: String| ManifestError::Invalid(e))?,
        };
        let threshold = raw.threshold.unwrap_or(0.1);
        if !(threshold > 0.0 && threshold < 1.0) {
            return Err(ManifestError::Invalid(format!(
                "threshold must lie in (0, 1), got {threshold}"
            )));
        }
        Ok(Manifest {
            molecule: PathBuf::from(raw.molecule),
            mode,
            dimension,
            out_dir: raw.out_dir.map(PathBuf::from),
            threshold,
            intensity_tol: raw.intensity_tol.unwrap_or(0.05),
            cases,
            acquisition: raw.acquisition.unwrap_or_default(),
        })
    }

    pub fn load(path: &Path) -> Result<(Manifest, PathBuf), ManifestError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ManifestError::Invalid(format!("{}: {e}", path.display())))?;
        let manifest = Manifest::from_toml_str(&text)?;
        let base = path
            .parent()
            .map(|p| p.to_path_buf())
            .unwrap_or_else(|| PathBuf::from("."));
        Ok((manifest, base))
    }
}

/// Resolve a (possibly relative) input path against the manifest directory,
/// then against `SPINSPEC_MOLECULES`.
pub fn resolve_input(path: &Path, base: &Path) -> Result<PathBuf, ManifestError> {
    if path.is_absolute() && path.exists() {
        return Ok(path.to_path_buf());
    }
    let local = base.join(path);
    if local.exists() {
        return Ok(local);
    }
    if path.exists() {
        return Ok(path.to_path_buf());
    }
    if let Ok(dir) = std::env::var("SPINSPEC_MOLECULES") {
        let env_path = Path::new(&dir).join(path);
        if env_path.exists() {
            return Ok(env_path);
        }
    }
    Err(ManifestError::MoleculeNotFound(path.display().to_string()))
}
