//! Experiment configuration files.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use pie_core::cert::CertMode;
use pie_core::circuit::{
    build_ising_trotter, build_su2_ansatz, su2_angle_count, Circuit, CircuitRecord,
};
use pie_core::inverse_emre::Estimator;
use pie_core::mitigation::{Model, Sampling};
use pie_core::noise::NoiseModel;
use pie_core::seed::task_rng;
use pie_core::simulator::{Observable, ObservableRecord, TermRecord, MAX_QUBITS};
use rand::Rng;
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    IsingSweep,
    DepthSweep,
    NoiseSweep,
    Chemistry,
    Certify,
    InverseEmre,
    CdrCompare,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::IsingSweep => "ising_sweep",
            ExperimentKind::DepthSweep => "depth_sweep",
            ExperimentKind::NoiseSweep => "noise_sweep",
            ExperimentKind::Chemistry => "chemistry",
            ExperimentKind::Certify => "certify",
            ExperimentKind::InverseEmre => "inverse_emre",
            ExperimentKind::CdrCompare => "cdr_compare",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum CircuitSpec {
    Ising {
        qubits: usize,
        steps: usize,
        time: f64,
        #[serde(default = "default_field")]
        field: f64,
    },
    Su2 {
        qubits: usize,
        layers: usize,
        #[serde(default)]
        angles: Option<Vec<f64>>,
        #[serde(default)]
        angle_seed: Option<u64>,
    },
    File {
        path: PathBuf,
    },
}

fn default_field() -> f64 {
    0.5
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ObservableSpec {
    #[default]
    Magnetization,
    File {
        path: PathBuf,
    },
    PauliSum {
        terms: Vec<TermRecord>,
        #[serde(default)]
        offset: f64,
    },
}

/// Per-row noise built from a probability table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TableSweep {
    /// Rows used as mixed Pauli probabilities.
    MixedPauliTable { file: PathBuf },
    /// Rows used as Pauli-Lindblad rates.
    PauliLindbladTable { file: PathBuf },
    /// The `total` column used as a dephasing probability.
    DephasingTable { file: PathBuf },
}

impl TableSweep {
    pub fn file(&self) -> &Path {
        match self {
            TableSweep::MixedPauliTable { file }
            | TableSweep::PauliLindbladTable { file }
            | TableSweep::DephasingTable { file } => file,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum NoiseConfig {
    Model(NoiseModel),
    Table(TableSweep),
}

impl<'de> Deserialize<'de> for NoiseConfig {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let v = serde_json::Value::deserialize(d)?;
        if v.get("kind").is_some() {
            TableSweep::deserialize(v)
                .map(NoiseConfig::Table)
                .map_err(D::Error::custom)
        } else {
            NoiseModel::deserialize(v)
                .map(NoiseConfig::Model)
                .map_err(D::Error::custom)
        }
    }
}

/// Where folded-circuit noise is attached in certification runs.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseScope {
    #[default]
    Gate,
    Segment,
}

fn default_folds() -> Vec<usize> {
    vec![0, 1, 2, 3]
}

fn default_models() -> Vec<Model> {
    Model::ALL.to_vec()
}

fn default_estimators() -> Vec<Estimator> {
    vec![Estimator::Pec, Estimator::Emre, Estimator::Hemre]
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub output: Option<PathBuf>,
    pub circuit: CircuitSpec,
    #[serde(default)]
    pub observable: ObservableSpec,
    #[serde(default)]
    pub noise: Option<NoiseConfig>,
    /// Per-gate depolarizing strengths swept by the experiment.
    #[serde(default)]
    pub omegas: Option<Vec<f64>>,
    /// Trotter step counts for depth sweeps.
    #[serde(default)]
    pub trotter_steps: Option<Vec<usize>>,
    #[serde(default = "default_folds")]
    pub folds: Vec<usize>,
    /// Shots per measurement group; exact expectations when absent.
    #[serde(default)]
    pub shots: Option<usize>,
    #[serde(default = "default_models")]
    pub models: Vec<Model>,
    #[serde(default = "yes")]
    pub weighted: bool,
    #[serde(default)]
    pub noise_scope: NoiseScope,
    #[serde(default)]
    pub cert_mode: Option<CertMode>,
    #[serde(default)]
    pub samples: Option<usize>,
    #[serde(default = "default_estimators")]
    pub estimators: Vec<Estimator>,
    #[serde(default)]
    pub ptm_shots: Option<u64>,
    #[serde(default)]
    pub training_circuits: Option<usize>,
    #[serde(default)]
    pub fractions: Option<Vec<f64>>,
    #[serde(default)]
    pub trials: Option<usize>,
    #[serde(skip)]
    pub base_dir: PathBuf,
    #[serde(skip)]
    source: String,
}

/// First line of `source` mentioning `"key"`.
fn line_of(source: &str, key: &str) -> Option<usize> {
    let quoted = format!("\"{key}\"");
    source
        .lines()
        .position(|l| l.contains(&quoted))
        .map(|i| i + 1)
}

impl ExperimentConfig {
    pub fn from_path(path: &Path) -> Result<Self> {
        let text =
            fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new(".")).to_path_buf();
        Self::parse(&text, base).with_context(|| format!("config {}", path.display()))
    }

    /// Parses and validates a config; relative paths resolve against `base_dir`.
    pub fn parse(text: &str, base_dir: PathBuf) -> Result<Self> {
        let mut cfg: Self = serde_json::from_str(text)?;
        cfg.base_dir = base_dir;
        cfg.source = text.to_string();
        cfg.validate()?;
        Ok(cfg)
    }

    fn fail(&self, key: &str, msg: impl std::fmt::Display) -> anyhow::Error {
        match line_of(&self.source, key) {
            Some(line) => anyhow::anyhow!("line {line}: `{key}`: {msg}"),
            None => anyhow::anyhow!("`{key}`: {msg}"),
        }
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn qubits(&self) -> Result<usize> {
        Ok(match &self.circuit {
            CircuitSpec::Ising { qubits, .. } | CircuitSpec::Su2 { qubits, .. } => *qubits,
            CircuitSpec::File { .. } => self.circuit_with_steps(None)?.qubits(),
        })
    }

    pub fn sampling(&self) -> Sampling {
        self.shots.map_or(Sampling::Exact, Sampling::Shots)
    }

    pub fn noise_model(&self) -> Option<&NoiseModel> {
        match &self.noise {
            Some(NoiseConfig::Model(m)) => Some(m),
            _ => None,
        }
    }

    /// The configured circuit, with the Trotter step count replaced when given.
    pub fn circuit_with_steps(&self, steps_override: Option<usize>) -> Result<Circuit> {
        Ok(match &self.circuit {
            CircuitSpec::Ising {
                qubits,
                steps,
                time,
                field,
            } => build_ising_trotter(*qubits, *field, *time, steps_override.unwrap_or(*steps))?,
            CircuitSpec::Su2 {
                qubits,
                layers,
                angles,
                angle_seed,
            } => {
                let angles = match (angles, angle_seed) {
                    (Some(a), _) => a.clone(),
                    (None, seed) => {
                        let mut rng = task_rng(seed.unwrap_or(self.seed), 0);
                        (0..su2_angle_count(*qubits, *layers))
                            .map(|_| rng.random_range(-std::f64::consts::PI..std::f64::consts::PI))
                            .collect()
                    }
                };
                build_su2_ansatz(*qubits, *layers, &angles)?
            }
            CircuitSpec::File { path } => {
                let path = self.resolve(path);
                let text = fs::read_to_string(&path)
                    .with_context(|| format!("reading {}", path.display()))?;
                let rec: CircuitRecord = serde_json::from_str(&text)
                    .with_context(|| format!("circuit {}", path.display()))?;
                Circuit::from_record(&rec)?
            }
        })
    }

    pub fn circuit(&self) -> Result<Circuit> {
        self.circuit_with_steps(None)
    }

    pub fn observable(&self, qubits: usize) -> Result<Observable> {
        Ok(match &self.observable {
            ObservableSpec::Magnetization => Observable::magnetization(qubits),
            ObservableSpec::File { path } => {
                let path = self.resolve(path);
                let text = fs::read_to_string(&path)
                    .with_context(|| format!("reading {}", path.display()))?;
                let rec: ObservableRecord = serde_json::from_str(&text)
                    .with_context(|| format!("observable {}", path.display()))?;
                if rec.qubits != qubits {
                    bail!(
                        "observable {} acts on {} qubits, circuit has {qubits}",
                        path.display(),
                        rec.qubits
                    );
                }
                Observable::from_record(&rec)?
            }
            ObservableSpec::PauliSum { terms, offset } => {
                Observable::from_record(&ObservableRecord {
                    qubits,
                    terms: terms.clone(),
                    offset: *offset,
                })?
            }
        })
    }

    fn validate(&self) -> Result<()> {
        let qubits = self.qubits().map_err(|e| self.fail("circuit", e))?;
        if qubits == 0 || qubits > MAX_QUBITS {
            return Err(self.fail(
                "circuit",
                format!("{qubits} qubits outside 1..={MAX_QUBITS}"),
            ));
        }
        self.circuit().map_err(|e| self.fail("circuit", e))?;
        self.observable(qubits)
            .map_err(|e| self.fail("observable", e))?;
        let mut folds = self.folds.clone();
        folds.sort_unstable();
        folds.dedup();
        if folds.len() != self.folds.len() || folds.len() < 2 {
            return Err(self.fail("folds", "need at least 2 distinct fold counts"));
        }
        if folds[0] != 0 {
            return Err(self.fail("folds", "must include the unfolded circuit (0)"));
        }
        if self.shots == Some(0) {
            return Err(self.fail("shots", "must be positive"));
        }
        if self.models.is_empty() {
            return Err(self.fail("models", "empty model list"));
        }
        if let Some(omegas) = &self.omegas {
            if omegas.is_empty() {
                return Err(self.fail("omegas", "empty list"));
            }
            if let Some(w) = omegas.iter().find(|w| !(0.0..=1.0).contains(*w)) {
                return Err(self.fail("omegas", format!("{w} outside [0, 1]")));
            }
        }
        match &self.noise {
            Some(NoiseConfig::Model(m)) => m.validate().map_err(|e| self.fail("noise", e))?,
            Some(NoiseConfig::Table(t)) => {
                if self.experiment != ExperimentKind::NoiseSweep {
                    return Err(
                        self.fail("noise", "probability tables are only swept by noise_sweep")
                    );
                }
                let path = self.resolve(t.file());
                if !path.is_file() {
                    return Err(self.fail("file", format!("{} does not exist", path.display())));
                }
            }
            None => {}
        }
        let needs_noise = |cfg: &Self| cfg.noise_model().is_none() && cfg.omegas.is_none();
        match self.experiment {
            ExperimentKind::IsingSweep | ExperimentKind::Chemistry | ExperimentKind::Certify => {
                if needs_noise(self) {
                    return Err(self.fail("experiment", "needs `omegas` or a `noise` model"));
                }
            }
            ExperimentKind::DepthSweep => {
                if !matches!(self.circuit, CircuitSpec::Ising { .. }) {
                    return Err(self.fail("circuit", "depth_sweep needs an ising circuit"));
                }
                match &self.trotter_steps {
                    Some(s) if !s.is_empty() && !s.contains(&0) => {}
                    _ => {
                        return Err(self.fail(
                            "trotter_steps",
                            "need a nonempty list of positive step counts",
                        ))
                    }
                }
                if self.noise_model().is_none() {
                    return Err(self.fail("noise", "depth_sweep needs a noise model"));
                }
            }
            ExperimentKind::NoiseSweep => {
                if !matches!(self.noise, Some(NoiseConfig::Table(_))) {
                    return Err(self.fail("noise", "noise_sweep needs a probability table"));
                }
            }
            ExperimentKind::InverseEmre => {
                if self.noise_model().is_none() {
                    return Err(self.fail("noise", "inverse_emre needs a noise model"));
                }
                if !matches!(self.samples, Some(k) if k > 0) {
                    return Err(self.fail("samples", "need a positive sample count"));
                }
                if self.estimators.is_empty() {
                    return Err(self.fail("estimators", "empty estimator list"));
                }
                if self.ptm_shots == Some(0) {
                    return Err(self.fail("ptm_shots", "must be positive"));
                }
            }
            ExperimentKind::CdrCompare => {
                if self.noise_model().is_none() {
                    return Err(self.fail("noise", "cdr_compare needs a noise model"));
                }
                if !matches!(self.training_circuits, Some(n) if n >= 2) {
                    return Err(self.fail("training_circuits", "need at least 2 training circuits"));
                }
                match &self.fractions {
                    Some(f) if !f.is_empty() && f.iter().all(|x| (0.0..=1.0).contains(x)) => {}
                    _ => return Err(self.fail("fractions", "need fractions in [0, 1]")),
                }
                if !matches!(self.trials, Some(n) if n > 0) {
                    return Err(self.fail("trials", "need a positive trial count"));
                }
            }
        }
        if self.experiment == ExperimentKind::Certify
            && self.cert_mode == Some(CertMode::Direct)
            && qubits > pie_core::cert::DIRECT_MAX_QUBITS
        {
            return Err(self.fail(
                "cert_mode",
                format!(
                    "direct mode supports up to {} qubits",
                    pie_core::cert::DIRECT_MAX_QUBITS
                ),
            ));
        }
        Ok(())
    }

    pub fn output_dir(&self) -> PathBuf {
        match &self.output {
            Some(p) => self.resolve(p),
            None => PathBuf::from("results").join(self.experiment.name()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<ExperimentConfig> {
        ExperimentConfig::parse(text, PathBuf::from("."))
    }

    #[test]
    fn minimal_ising() {
        let cfg = parse(
            r#"{"experiment": "ising_sweep",
                "circuit": {"type": "ising", "qubits": 4, "steps": 2, "time": 1.0},
                "omegas": [0.001, 0.002]}"#,
        )
        .unwrap();
        assert_eq!(cfg.folds, vec![0, 1, 2, 3]);
        assert_eq!(cfg.models.len(), 4);
        assert_eq!(cfg.sampling(), Sampling::Exact);
        assert_eq!(cfg.circuit().unwrap().qubits(), 4);
    }

    #[test]
    fn syntax_errors_cite_the_line() {
        let err = parse("{\n\"experiment\": \"ising_sweep\",\n\"folds\": [0, 1,\n}").unwrap_err();
        assert!(err.to_string().contains("line 4"), "{err}");
        let err = parse("{\n\"experiment\": \"ising_sweep\",\n\"bogus\": 1\n}").unwrap_err();
        assert!(err.to_string().contains("line 3"), "{err}");
    }

    #[test]
    fn semantic_errors_cite_the_line() {
        let text = "{\n\"experiment\": \"ising_sweep\",\n\"circuit\": {\"type\": \"ising\", \"qubits\": 3, \"steps\": 1, \"time\": 1.0},\n\"omegas\": [0.1],\n\"folds\": [0]\n}";
        let err = parse(text).unwrap_err();
        assert!(err.to_string().starts_with("line 5: `folds`"), "{err}");
    }

    #[test]
    fn rejects_oversized_circuits() {
        let err = parse(
            r#"{"experiment": "ising_sweep",
                "circuit": {"type": "ising", "qubits": 13, "steps": 1, "time": 1.0},
                "omegas": [0.1]}"#,
        )
        .unwrap_err();
        assert!(err.to_string().contains("13 qubits"), "{err}");
    }

    #[test]
    fn noise_forms() {
        let cfg = parse(
            r#"{"experiment": "depth_sweep",
                "circuit": {"type": "ising", "qubits": 3, "steps": 1, "time": 1.0},
                "trotter_steps": [1, 2],
                "noise": {"both": {"kind": "dephasing", "p": 0.01}}}"#,
        )
        .unwrap();
        assert!(cfg.noise_model().is_some());
        let err = parse(
            r#"{"experiment": "noise_sweep",
                "circuit": {"type": "ising", "qubits": 3, "steps": 1, "time": 1.0},
                "noise": {"kind": "mixed_pauli_table", "file": "missing.csv"}}"#,
        )
        .unwrap_err();
        assert!(err.to_string().contains("missing.csv"), "{err}");
    }

    #[test]
    fn su2_angles_are_seeded() {
        let text = r#"{"experiment": "chemistry", "seed": 3,
            "circuit": {"type": "su2", "qubits": 2, "layers": 1},
            "noise": {"both": {"kind": "depolarizing", "omega": 0.01}}}"#;
        let a = parse(text).unwrap().circuit().unwrap();
        let b = parse(text).unwrap().circuit().unwrap();
        assert_eq!(a, b);
        assert_eq!(
            a.gates()
                .iter()
                .filter(|g| g.kind.angle().is_some())
                .count(),
            su2_angle_count(2, 1)
        );
    }
}
