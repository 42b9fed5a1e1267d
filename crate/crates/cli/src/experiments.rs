//! Experiment runners. Each writes `results.json`, `plotdata.csv` and any
//! per-point datasets into the output directory.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use pie_core::cert::{certify, CertMode, CertReport, DIRECT_MAX_QUBITS};
use pie_core::circuit::Circuit;
use pie_core::inverse_emre::{run_estimator, Estimator, PtmMode, QpdTable};
use pie_core::mitigation::{
    cdr_mitigate, collect, fit, fit_pie, ExtrapolationDataset, FitOptions, FitResult, Model,
    Sampling,
};
use pie_core::noise::{read_table, NoiseModel, NoiseSpec, SegmentNoise};
use pie_core::seed::derive_seed;
use pie_core::simulator::{expectation, run, sample_expectation, Observable};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{ExperimentConfig, ExperimentKind, NoiseConfig, NoiseScope, TableSweep};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlotRow {
    pub series: String,
    pub x: f64,
    pub y: f64,
    pub yerr: f64,
}

impl PlotRow {
    fn new(series: &str, x: f64, y: f64, yerr: f64) -> Self {
        Self {
            series: series.to_string(),
            x,
            y,
            yerr,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub value: f64,
    pub std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum FitOutcome {
    Fit(FitResult),
    Failed { error: String },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepPoint {
    pub index: usize,
    pub label: String,
    pub x: f64,
    pub noise: NoiseModel,
    pub gate_count: usize,
    pub ideal: f64,
    pub unmitigated: Estimate,
    pub clamped_points: usize,
    pub dataset: String,
    pub fits: BTreeMap<String, FitOutcome>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepResults {
    pub experiment: ExperimentKind,
    pub seed: u64,
    pub qubits: usize,
    pub x_label: String,
    pub folds: Vec<usize>,
    pub shots: Option<usize>,
    pub points: Vec<SweepPoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CertPoint {
    pub index: usize,
    pub label: String,
    pub omega: Option<f64>,
    pub noise_scope: NoiseScope,
    pub dataset: String,
    pub report: CertReport,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CertResults {
    pub experiment: ExperimentKind,
    pub seed: u64,
    pub qubits: usize,
    pub mode: CertMode,
    pub points: Vec<CertPoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimatorSummary {
    pub mean: f64,
    pub std_error: f64,
    pub robustness_product: f64,
    pub bias: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EmreResults {
    pub experiment: ExperimentKind,
    pub seed: u64,
    pub qubits: usize,
    pub samples: usize,
    pub ptm_mode: PtmMode,
    pub ideal: f64,
    pub unmitigated: Estimate,
    pub qpd_table: String,
    pub per_sample_values: String,
    pub estimators: BTreeMap<String, EstimatorSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CdrTrial {
    pub trial: usize,
    pub mitigated: f64,
    pub slope: f64,
    pub intercept: f64,
    pub bias: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CdrFraction {
    pub fraction: f64,
    pub trials: Vec<CdrTrial>,
    pub mean: f64,
    pub std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PieTrial {
    pub trial: usize,
    pub mitigated: f64,
    pub std_error: f64,
    pub bias: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CdrResults {
    pub experiment: ExperimentKind,
    pub seed: u64,
    pub qubits: usize,
    pub training_circuits: usize,
    pub ideal: f64,
    pub unmitigated: Estimate,
    pub pie: Vec<PieTrial>,
    pub pie_mean: f64,
    pub pie_std: f64,
    pub cdr: Vec<CdrFraction>,
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn write_rows<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w =
        csv::Writer::from_path(path).with_context(|| format!("writing {}", path.display()))?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let var = if xs.len() > 1 {
        xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (m, var.sqrt())
}

fn ideal_value(c: &Circuit, obs: &Observable) -> Result<f64> {
    Ok(expectation(&run(c, &NoiseModel::noiseless())?, obs)?)
}

/// Fits every requested model, recording failures instead of aborting.
pub fn fit_all(
    data: &ExtrapolationDataset,
    models: &[Model],
    opts: FitOptions,
) -> BTreeMap<String, FitOutcome> {
    models
        .iter()
        .map(|&m| {
            let outcome = match fit(data, m, opts) {
                Ok(r) => FitOutcome::Fit(r),
                Err(e) => FitOutcome::Failed {
                    error: e.to_string(),
                },
            };
            (m.name().to_string(), outcome)
        })
        .collect()
}

pub fn clamp_warning(label: &str, data: &ExtrapolationDataset) {
    let n = data.clamped_points();
    if n > 0 {
        eprintln!(
            "warning: {label}: {n} non-positive value(s) clamped to 1e-6 before the log-linear fit"
        );
    }
}

/// Runs the experiment and writes its artifacts into `out`.
pub fn run_experiment(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    match cfg.experiment {
        ExperimentKind::IsingSweep
        | ExperimentKind::DepthSweep
        | ExperimentKind::NoiseSweep
        | ExperimentKind::Chemistry => run_sweep(cfg, out),
        ExperimentKind::Certify => run_certify(cfg, out),
        ExperimentKind::InverseEmre => run_inverse_emre(cfg, out),
        ExperimentKind::CdrCompare => run_cdr(cfg, out),
    }
}

/// As [`run_experiment`], on a dedicated pool of `workers` threads.
pub fn run_with_workers(
    cfg: &ExperimentConfig,
    out: &Path,
    workers: Option<usize>,
) -> Result<Vec<PathBuf>> {
    match workers {
        Some(w) => {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(w).build()?;
            pool.install(|| run_experiment(cfg, out))
        }
        None => run_experiment(cfg, out),
    }
}

struct SweepTask {
    label: String,
    x: f64,
    circuit: Circuit,
    noise: NoiseModel,
}

fn sweep_tasks(cfg: &ExperimentConfig) -> Result<(String, Vec<SweepTask>)> {
    let fixed = |x_label: &str| -> Result<(String, Vec<SweepTask>)> {
        let circuit = cfg.circuit()?;
        let tasks = match (&cfg.omegas, cfg.noise_model()) {
            (Some(omegas), _) => omegas
                .iter()
                .map(|&w| SweepTask {
                    label: format!("omega={w}"),
                    x: w,
                    circuit: circuit.clone(),
                    noise: NoiseModel::depolarizing(w),
                })
                .collect(),
            (None, Some(m)) => vec![SweepTask {
                label: "fixed".into(),
                x: 0.0,
                circuit,
                noise: *m,
            }],
            (None, None) => bail!("no noise configured"),
        };
        Ok((x_label.to_string(), tasks))
    };
    match cfg.experiment {
        ExperimentKind::IsingSweep | ExperimentKind::Chemistry => fixed("omega"),
        ExperimentKind::DepthSweep => {
            let noise = *cfg.noise_model().expect("validated");
            let tasks = cfg
                .trotter_steps
                .as_deref()
                .unwrap_or_default()
                .iter()
                .map(|&r| {
                    Ok(SweepTask {
                        label: format!("steps={r}"),
                        x: r as f64,
                        circuit: cfg.circuit_with_steps(Some(r))?,
                        noise,
                    })
                })
                .collect::<Result<_>>()?;
            Ok(("trotter_steps".into(), tasks))
        }
        ExperimentKind::NoiseSweep => {
            let Some(NoiseConfig::Table(table)) = &cfg.noise else {
                bail!("noise_sweep needs a probability table");
            };
            let path = cfg.resolve(table.file());
            let file =
                fs::File::open(&path).with_context(|| format!("opening {}", path.display()))?;
            let rows = read_table(file).with_context(|| format!("table {}", path.display()))?;
            let circuit = cfg.circuit()?;
            let tasks = rows
                .iter()
                .enumerate()
                .map(|(i, row)| {
                    let spec = match table {
                        TableSweep::MixedPauliTable { .. } => row.as_mixed_pauli(),
                        TableSweep::PauliLindbladTable { .. } => row.as_lindblad(),
                        TableSweep::DephasingTable { .. } => NoiseSpec::Dephasing { p: row.total },
                    };
                    SweepTask {
                        label: format!("row {}", i + 1),
                        x: row.total,
                        circuit: circuit.clone(),
                        noise: NoiseModel::uniform(spec),
                    }
                })
                .collect();
            Ok(("total_error".into(), tasks))
        }
        _ => unreachable!("not a sweep experiment"),
    }
}

fn run_sweep(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<PathBuf>> {
    let (x_label, tasks) = sweep_tasks(cfg)?;
    let qubits = cfg.qubits()?;
    let obs = cfg.observable(qubits)?;
    let opts = FitOptions {
        weighted: cfg.weighted,
    };
    let data_dir = out.join("datasets");
    fs::create_dir_all(&data_dir)?;

    let results: Vec<(SweepPoint, ExtrapolationDataset)> = tasks
        .par_iter()
        .enumerate()
        .map(|(i, t)| {
            let ideal = ideal_value(&t.circuit, &obs)?;
            let data = collect(
                &t.circuit,
                &t.noise,
                &obs,
                &cfg.folds,
                cfg.sampling(),
                derive_seed(cfg.seed, i as u64),
            )
            .with_context(|| t.label.clone())?;
            let unmitigated = Estimate {
                value: data.raw_values()[0],
                std: data.points[0].std,
            };
            let point = SweepPoint {
                index: i,
                label: t.label.clone(),
                x: t.x,
                noise: t.noise,
                gate_count: t.circuit.len(),
                ideal,
                unmitigated,
                clamped_points: data.clamped_points(),
                dataset: format!("datasets/point_{i:03}.csv"),
                fits: fit_all(&data, &cfg.models, opts),
            };
            Ok((point, data))
        })
        .collect::<Result<_>>()?;

    let mut plot = Vec::new();
    let mut points = Vec::with_capacity(results.len());
    for (p, data) in results {
        if cfg.models.contains(&Model::Pie) {
            clamp_warning(&p.label, &data);
        }
        data.write_csv(fs::File::create(out.join(&p.dataset))?)?;
        plot.push(PlotRow::new("ideal", p.x, p.ideal, 0.0));
        plot.push(PlotRow::new(
            "unmitigated",
            p.x,
            p.unmitigated.value,
            p.unmitigated.std,
        ));
        for (name, f) in &p.fits {
            if let FitOutcome::Fit(r) = f {
                plot.push(PlotRow::new(name, p.x, r.mitigated, r.std_error()));
            }
        }
        points.push(p);
    }
    let results = SweepResults {
        experiment: cfg.experiment,
        seed: cfg.seed,
        qubits,
        x_label,
        folds: cfg.folds.clone(),
        shots: cfg.shots,
        points,
    };
    write_json(&out.join("results.json"), &results)?;
    write_rows(&out.join("plotdata.csv"), &plot)?;
    Ok(vec![
        out.join("results.json"),
        out.join("plotdata.csv"),
        data_dir,
    ])
}

fn run_certify(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<PathBuf>> {
    let circuit = cfg.circuit()?;
    let qubits = circuit.qubits();
    let obs = cfg.observable(qubits)?;
    let mode = cfg.cert_mode.unwrap_or(if qubits <= DIRECT_MAX_QUBITS {
        CertMode::Direct
    } else {
        CertMode::SlopeOnly
    });
    let data_dir = out.join("datasets");
    fs::create_dir_all(&data_dir)?;

    enum Noise {
        Gate(NoiseModel),
        Segment(SegmentNoise),
    }
    let tasks: Vec<(String, Option<f64>, Noise)> = match (&cfg.omegas, cfg.noise_model()) {
        (Some(omegas), _) => omegas
            .iter()
            .map(|&w| {
                let noise = match cfg.noise_scope {
                    NoiseScope::Gate => Noise::Gate(NoiseModel::depolarizing(w)),
                    NoiseScope::Segment => Noise::Segment(SegmentNoise::depolarizing(qubits, w)?),
                };
                Ok((format!("omega={w}"), Some(w), noise))
            })
            .collect::<Result<_>>()?,
        (None, Some(m)) => vec![("fixed".into(), None, Noise::Gate(*m))],
        (None, None) => bail!("no noise configured"),
    };

    let points: Vec<CertPoint> = tasks
        .par_iter()
        .enumerate()
        .map(|(i, (label, omega, noise))| {
            let seed = derive_seed(cfg.seed, i as u64);
            let (report, data) = match noise {
                Noise::Gate(m) => (
                    certify(&circuit, m, &obs, &cfg.folds, cfg.sampling(), seed, mode)?,
                    collect(&circuit, m, &obs, &cfg.folds, cfg.sampling(), seed)?,
                ),
                Noise::Segment(s) => (
                    certify(&circuit, s, &obs, &cfg.folds, cfg.sampling(), seed, mode)?,
                    collect(&circuit, s, &obs, &cfg.folds, cfg.sampling(), seed)?,
                ),
            };
            let dataset = format!("datasets/point_{i:03}.csv");
            data.write_csv(fs::File::create(out.join(&dataset))?)?;
            clamp_warning(label, &data);
            Ok(CertPoint {
                index: i,
                label: label.clone(),
                omega: *omega,
                noise_scope: cfg.noise_scope,
                dataset,
                report,
            })
        })
        .collect::<Result<_>>()?;

    let mut plot = Vec::new();
    for p in &points {
        let x = p.omega.unwrap_or(0.0);
        plot.push(PlotRow::new("s_from_slope", x, p.report.s_from_slope, 0.0));
        if let Some(s) = p.report.s_direct {
            plot.push(PlotRow::new("s_direct", x, s, 0.0));
        }
    }
    let results = CertResults {
        experiment: cfg.experiment,
        seed: cfg.seed,
        qubits,
        mode,
        points,
    };
    write_json(&out.join("results.json"), &results)?;
    write_rows(&out.join("plotdata.csv"), &plot)?;
    Ok(vec![
        out.join("results.json"),
        out.join("plotdata.csv"),
        data_dir,
    ])
}

#[derive(Serialize)]
struct SampleRow<'a> {
    estimator: &'a str,
    sample: usize,
    value: f64,
}

fn estimator_name(e: Estimator) -> &'static str {
    match e {
        Estimator::Pec => "pec",
        Estimator::Emre => "emre",
        Estimator::Hemre => "hemre",
    }
}

fn run_inverse_emre(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<PathBuf>> {
    let circuit = cfg.circuit()?;
    let qubits = circuit.qubits();
    let obs = cfg.observable(qubits)?;
    let nm = cfg.noise_model().expect("validated");
    let samples = cfg.samples.expect("validated");
    let ptm_mode = match cfg.ptm_shots {
        Some(shots) => PtmMode::Shots {
            shots,
            seed: derive_seed(cfg.seed, u64::MAX),
        },
        None => PtmMode::Exact,
    };
    let table = QpdTable::build(&circuit, nm, ptm_mode)?;
    let ideal = ideal_value(&circuit, &obs)?;
    let noisy = run(&circuit, nm)?;
    let unmitigated = match cfg.sampling() {
        Sampling::Shots(s) => {
            let r = sample_expectation(&noisy, &obs, s, derive_seed(cfg.seed, u64::MAX - 1))?;
            Estimate {
                value: r.mean,
                std: r.std_error,
            }
        }
        _ => Estimate {
            value: expectation(&noisy, &obs)?,
            std: 0.0,
        },
    };

    let mut estimators = BTreeMap::new();
    let mut rows = Vec::new();
    let mut plot = vec![
        PlotRow::new("ideal", 0.0, ideal, 0.0),
        PlotRow::new("unmitigated", 0.0, unmitigated.value, unmitigated.std),
    ];
    let mut all_values = Vec::new();
    for (j, &e) in cfg.estimators.iter().enumerate() {
        let est = run_estimator(
            e,
            &circuit,
            nm,
            &table,
            &obs,
            samples,
            cfg.sampling(),
            derive_seed(cfg.seed, j as u64),
        )?;
        let name = estimator_name(e);
        plot.push(PlotRow::new(name, 0.0, est.mean, est.std_error));
        estimators.insert(
            name.to_string(),
            EstimatorSummary {
                mean: est.mean,
                std_error: est.std_error,
                robustness_product: est.robustness_product,
                bias: est.mean - ideal,
            },
        );
        all_values.push((name, est));
    }
    for (name, est) in &all_values {
        for (k, v) in est.per_sample_values.iter().enumerate() {
            rows.push(SampleRow {
                estimator: name,
                sample: k,
                value: est.robustness_product * v + obs.offset(),
            });
        }
    }
    write_json(&out.join("qpd_table.json"), &table)?;
    write_rows(&out.join("estimator_samples.csv"), &rows)?;
    let results = EmreResults {
        experiment: cfg.experiment,
        seed: cfg.seed,
        qubits,
        samples,
        ptm_mode,
        ideal,
        unmitigated,
        qpd_table: "qpd_table.json".into(),
        per_sample_values: "estimator_samples.csv".into(),
        estimators,
    };
    write_json(&out.join("results.json"), &results)?;
    write_rows(&out.join("plotdata.csv"), &plot)?;
    Ok(vec![
        out.join("results.json"),
        out.join("plotdata.csv"),
        out.join("qpd_table.json"),
        out.join("estimator_samples.csv"),
    ])
}

#[derive(Serialize)]
struct TrainingRow {
    fraction: f64,
    trial: usize,
    circuit: usize,
    noisy: f64,
    ideal: f64,
}

fn run_cdr(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<PathBuf>> {
    let circuit = cfg.circuit()?;
    let qubits = circuit.qubits();
    let obs = cfg.observable(qubits)?;
    let nm = cfg.noise_model().expect("validated");
    let trials = cfg.trials.expect("validated");
    let training = cfg.training_circuits.expect("validated");
    let fractions = cfg.fractions.clone().expect("validated");
    let ideal = ideal_value(&circuit, &obs)?;
    let opts = FitOptions {
        weighted: cfg.weighted,
    };

    let pie: Vec<(PieTrial, Estimate)> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let data = collect(
                &circuit,
                nm,
                &obs,
                &cfg.folds,
                cfg.sampling(),
                derive_seed(cfg.seed, t as u64),
            )?;
            clamp_warning(&format!("trial {t}"), &data);
            let r = fit_pie(&data, opts)?;
            Ok((
                PieTrial {
                    trial: t,
                    mitigated: r.mitigated,
                    std_error: r.std_error(),
                    bias: r.mitigated - ideal,
                },
                Estimate {
                    value: data.raw_values()[0],
                    std: data.points[0].std,
                },
            ))
        })
        .collect::<Result<_>>()?;
    let unmitigated = pie[0].1;
    let pie: Vec<PieTrial> = pie.into_iter().map(|(p, _)| p).collect();
    let (pie_mean, pie_std) = mean_std(&pie.iter().map(|p| p.mitigated).collect::<Vec<_>>());

    let jobs: Vec<(usize, usize)> = (0..fractions.len())
        .flat_map(|f| (0..trials).map(move |t| (f, t)))
        .collect();
    let cdr_runs = jobs
        .par_iter()
        .map(|&(f, t)| {
            let seed = derive_seed(derive_seed(cfg.seed, t as u64), 1 + f as u64);
            cdr_mitigate(
                &circuit,
                nm,
                &obs,
                training,
                fractions[f],
                cfg.sampling(),
                seed,
            )
        })
        .collect::<pie_core::Result<Vec<_>>>()?;

    let mut training_rows = Vec::new();
    let mut cdr = Vec::new();
    for (f, &fraction) in fractions.iter().enumerate() {
        let mut list = Vec::with_capacity(trials);
        for t in 0..trials {
            let r = &cdr_runs[f * trials + t];
            for (c, &(noisy, ideal_c)) in r.training.iter().enumerate() {
                training_rows.push(TrainingRow {
                    fraction,
                    trial: t,
                    circuit: c,
                    noisy,
                    ideal: ideal_c,
                });
            }
            list.push(CdrTrial {
                trial: t,
                mitigated: r.mitigated,
                slope: r.slope,
                intercept: r.intercept,
                bias: r.mitigated - ideal,
            });
        }
        let (mean, std) = mean_std(&list.iter().map(|c| c.mitigated).collect::<Vec<_>>());
        cdr.push(CdrFraction {
            fraction,
            trials: list,
            mean,
            std,
        });
    }

    let mut plot = Vec::new();
    for c in &cdr {
        plot.push(PlotRow::new("ideal", c.fraction, ideal, 0.0));
        plot.push(PlotRow::new(
            "unmitigated",
            c.fraction,
            unmitigated.value,
            unmitigated.std,
        ));
        plot.push(PlotRow::new("pie", c.fraction, pie_mean, pie_std));
        plot.push(PlotRow::new("cdr", c.fraction, c.mean, c.std));
    }
    let results = CdrResults {
        experiment: cfg.experiment,
        seed: cfg.seed,
        qubits,
        training_circuits: training,
        ideal,
        unmitigated,
        pie,
        pie_mean,
        pie_std,
        cdr,
    };
    write_json(&out.join("results.json"), &results)?;
    write_rows(&out.join("plotdata.csv"), &plot)?;
    write_rows(&out.join("cdr_training.csv"), &training_rows)?;
    Ok(vec![
        out.join("results.json"),
        out.join("plotdata.csv"),
        out.join("cdr_training.csv"),
    ])
}
