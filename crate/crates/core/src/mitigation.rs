//! Extrapolation to zero noise: dataset collection over fold levels, the
//! log-linear PIE fit, polynomial and exponential baselines, and Clifford
//! data regression.

use std::f64::consts::FRAC_PI_2;
use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use crate::circuit::{Circuit, Gate};
use crate::error::{Error, Result};
use crate::noise::{NoiseAttachment, NoiseModel};
use crate::seed::{derive_seed, task_rng};
use crate::simulator::{
    exact_shot_std, expectation, run, sample_expectation, DensityState, Observable,
};

/// Floor substituted for non-positive values before taking logarithms.
pub const LOG_FLOOR: f64 = 1e-6;

const LM_MAX_ITER: usize = 200;
const LM_STEP_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DataPoint {
    pub lambda: f64,
    pub value: f64,
    pub std: f64,
}

/// Measurements at increasing noise scales, stored sign-normalized and with
/// the observable's identity component removed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtrapolationDataset {
    pub points: Vec<DataPoint>,
    pub observable_sign: f64,
    pub trace_shift: f64,
}

impl ExtrapolationDataset {
    pub fn new(points: Vec<DataPoint>, observable_sign: f64, trace_shift: f64) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::InvalidDataset(format!(
                "need at least 2 points, got {}",
                points.len()
            )));
        }
        if observable_sign != 1.0 && observable_sign != -1.0 {
            return Err(Error::InvalidDataset(format!(
                "observable sign must be ±1, got {observable_sign}"
            )));
        }
        if !trace_shift.is_finite() {
            return Err(Error::InvalidDataset("non-finite trace shift".into()));
        }
        for (i, p) in points.iter().enumerate() {
            let odd = p.lambda >= 1.0 && p.lambda.fract() == 0.0 && p.lambda as u64 % 2 == 1;
            if !odd {
                return Err(Error::InvalidDataset(format!(
                    "point {}: λ = {} is not an odd positive integer",
                    i + 1,
                    p.lambda
                )));
            }
            if !p.value.is_finite() || !p.std.is_finite() || p.std < 0.0 {
                return Err(Error::InvalidDataset(format!(
                    "point {}: value {} / std {} invalid",
                    i + 1,
                    p.value,
                    p.std
                )));
            }
            if i > 0 && p.lambda <= points[i - 1].lambda {
                return Err(Error::InvalidDataset(format!(
                    "point {}: λ values must be strictly increasing",
                    i + 1
                )));
            }
        }
        Ok(Self {
            points,
            observable_sign,
            trace_shift,
        })
    }

    /// Builds a dataset from raw measured values, flipping the sign when the
    /// lowest-noise value is negative.
    pub fn from_raw(points: Vec<DataPoint>, trace_shift: f64) -> Result<Self> {
        let sign = match points.first() {
            Some(p) if p.value < 0.0 => -1.0,
            _ => 1.0,
        };
        let points = points
            .into_iter()
            .map(|p| DataPoint {
                value: sign * p.value,
                ..p
            })
            .collect();
        Self::new(points, sign, trace_shift)
    }

    pub fn lambdas(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.lambda).collect()
    }

    pub fn values(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.value).collect()
    }

    /// Values in the observable's own frame (sign restored, shift added).
    pub fn raw_values(&self) -> Vec<f64> {
        self.points
            .iter()
            .map(|p| self.observable_sign * p.value + self.trace_shift)
            .collect()
    }

    /// Number of points the log-linear fit will clamp.
    pub fn clamped_points(&self) -> usize {
        self.points.iter().filter(|p| p.value <= 0.0).count()
    }

    /// Reads `lambda,value,std` CSV rows of raw values.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(reader);
        let points = rdr
            .deserialize::<DataPoint>()
            .enumerate()
            .map(|(i, row)| row.map_err(|e| Error::InvalidDataset(format!("row {}: {e}", i + 1))))
            .collect::<Result<Vec<_>>>()?;
        Self::from_raw(points, 0.0)
    }

    /// Writes the raw values as `lambda,value,std`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let io = |e: csv::Error| Error::InvalidDataset(e.to_string());
        for (p, raw) in self.points.iter().zip(self.raw_values()) {
            w.serialize(DataPoint { value: raw, ..*p }).map_err(io)?;
        }
        w.flush().map_err(|e| Error::InvalidDataset(e.to_string()))
    }
}

/// How expectation values are obtained at each point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sampling {
    /// Exact values with zero std.
    Exact,
    /// Exact values with the std a given shot budget would have.
    ExactWithShotStd(usize),
    /// Values sampled from the given number of shots per group.
    Shots(usize),
}

fn measure(
    state: &DensityState,
    obs: &Observable,
    sampling: Sampling,
    seed: u64,
) -> Result<(f64, f64)> {
    match sampling {
        Sampling::Exact => Ok((expectation(state, obs)?, 0.0)),
        Sampling::ExactWithShotStd(shots) => {
            Ok((expectation(state, obs)?, exact_shot_std(state, obs, shots)?))
        }
        Sampling::Shots(shots) => {
            let r = sample_expectation(state, obs, shots, seed)?;
            Ok((r.mean, r.std_error))
        }
    }
}

/// Measures `obs` after the base circuit folded `n` times for each `n` in
/// `folds`. Folds are evaluated incrementally on one state.
pub fn collect<N: NoiseAttachment + ?Sized>(
    base: &Circuit,
    noise: &N,
    obs: &Observable,
    folds: &[usize],
    sampling: Sampling,
    seed: u64,
) -> Result<ExtrapolationDataset> {
    let mut folds = folds.to_vec();
    folds.sort_unstable();
    if folds.is_empty() || folds.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::InvalidParams(
            "folds must be nonempty and distinct".into(),
        ));
    }
    let base = base.fold(0);
    let traceless = obs.traceless();
    let forward = noise.attach(&base)?;
    let backward = noise.attach(&base.adjoint())?;

    let mut state = DensityState::zero(base.qubits())?;
    state.evolve(&forward)?;
    let mut level = 0;
    let mut points = Vec::with_capacity(folds.len());
    for (i, &n) in folds.iter().enumerate() {
        while level < n {
            state.evolve(&backward)?;
            state.evolve(&forward)?;
            level += 1;
        }
        let (value, std) = measure(&state, &traceless, sampling, derive_seed(seed, i as u64))?;
        points.push(DataPoint {
            lambda: (2 * n + 1) as f64,
            value,
            std,
        });
    }
    ExtrapolationDataset::from_raw(points, obs.offset())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Model {
    Pie,
    Linear,
    Quadratic,
    Exponential,
}

impl Model {
    pub const ALL: [Model; 4] = [
        Model::Pie,
        Model::Linear,
        Model::Quadratic,
        Model::Exponential,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Model::Pie => "pie",
            Model::Linear => "linear",
            Model::Quadratic => "quadratic",
            Model::Exponential => "exponential",
        }
    }
}

impl fmt::Display for Model {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Model {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "pie" => Ok(Model::Pie),
            "linear" | "lin" => Ok(Model::Linear),
            "quadratic" | "quad" => Ok(Model::Quadratic),
            "exponential" | "exp" => Ok(Model::Exponential),
            other => Err(Error::InvalidParams(format!("unknown model '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FitOptions {
    /// Weight points by inverse variance when every std is positive.
    pub weighted: bool,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self { weighted: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub model: Model,
    pub params: Vec<f64>,
    pub covariance: Vec<Vec<f64>>,
    pub mitigated: f64,
    pub variance: f64,
    pub s_estimate: Option<f64>,
}

impl FitResult {
    pub fn std_error(&self) -> f64 {
        self.variance.sqrt()
    }
}

fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

/// Inverse-variance weights, or `None` when any std is zero or weighting is
/// disabled.
fn weights(stds: &[f64], opts: FitOptions) -> Option<Vec<f64>> {
    (opts.weighted && stds.iter().all(|&s| s > 0.0))
        .then(|| stds.iter().map(|s| 1.0 / (s * s)).collect())
}

fn invert_spd(a: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    let scale = a.diagonal().iter().fold(0.0f64, |m, &x| m.max(x.abs()));
    let inv = a
        .clone()
        .cholesky()
        .map(|c| c.inverse())
        .ok_or_else(|| Error::DegenerateDesign(format!("{what}: normal matrix is singular")))?;
    let rcond = 1.0 / (scale * inv.diagonal().iter().fold(0.0f64, |m, &x| m.max(x.abs())));
    if !rcond.is_finite() || rcond < 1e-14 {
        return Err(Error::DegenerateDesign(format!(
            "{what}: normal matrix is ill-conditioned"
        )));
    }
    Ok(inv)
}

/// Linear least squares `y ≈ X β`. With weights the covariance is
/// `(XᵀWX)⁻¹`; without, `s²(XᵀX)⁻¹` with `s²` the residual variance.
fn least_squares(
    x: &DMatrix<f64>,
    y: &[f64],
    w: Option<&[f64]>,
    what: &str,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let (n, p) = (x.nrows(), x.ncols());
    let wv = DVector::from_iterator(n, (0..n).map(|i| w.map_or(1.0, |w| w[i])));
    let xtw = x.transpose() * DMatrix::from_diagonal(&wv);
    let normal = &xtw * x;
    let inv = invert_spd(&normal, what)?;
    let yv = DVector::from_row_slice(y);
    let beta = &inv * (&xtw * &yv);
    let cov = if w.is_some() {
        inv
    } else {
        let rss = (&yv - x * &beta).norm_squared();
        let s2 = if n > p { rss / (n - p) as f64 } else { 0.0 };
        inv * s2
    };
    Ok((beta, cov))
}

fn polynomial_design(lambdas: &[f64], degree: usize) -> DMatrix<f64> {
    DMatrix::from_fn(lambdas.len(), degree + 1, |i, j| lambdas[i].powi(j as i32))
}

fn check_points(d: &ExtrapolationDataset, need: usize, model: Model) -> Result<()> {
    if d.points.len() < need {
        return Err(Error::InvalidDataset(format!(
            "{model} fit needs at least {need} points, got {}",
            d.points.len()
        )));
    }
    Ok(())
}

/// Log-linear fit `log f(λ) = c₀ + c₁λ`.
pub fn fit_pie(d: &ExtrapolationDataset, opts: FitOptions) -> Result<FitResult> {
    check_points(d, 2, Model::Pie)?;
    let lambdas = d.lambdas();
    let clamped: Vec<f64> = d.points.iter().map(|p| p.value.max(LOG_FLOOR)).collect();
    let y: Vec<f64> = clamped.iter().map(|v| v.ln()).collect();
    let std_log: Vec<f64> = d
        .points
        .iter()
        .zip(&clamped)
        .map(|(p, v)| p.std / v)
        .collect();
    let w = weights(&std_log, opts);
    let (beta, cov) = least_squares(&polynomial_design(&lambdas, 1), &y, w.as_deref(), "pie")?;
    let (c0, c1) = (beta[0], beta[1]);
    let e0 = c0.exp();
    Ok(FitResult {
        model: Model::Pie,
        params: vec![c0, c1],
        mitigated: d.observable_sign * e0 + d.trace_shift,
        variance: e0 * e0 * cov[(0, 0)].max(0.0),
        covariance: to_rows(&cov),
        s_estimate: Some((-c1).exp()),
    })
}

fn fit_polynomial(
    d: &ExtrapolationDataset,
    opts: FitOptions,
    degree: usize,
    model: Model,
) -> Result<FitResult> {
    check_points(d, degree + 1, model)?;
    let stds: Vec<f64> = d.points.iter().map(|p| p.std).collect();
    let w = weights(&stds, opts);
    let (beta, cov) = least_squares(
        &polynomial_design(&d.lambdas(), degree),
        &d.values(),
        w.as_deref(),
        model.name(),
    )?;
    Ok(FitResult {
        model,
        params: beta.iter().copied().collect(),
        mitigated: d.observable_sign * beta[0] + d.trace_shift,
        variance: cov[(0, 0)].max(0.0),
        covariance: to_rows(&cov),
        s_estimate: None,
    })
}

/// `f(λ) = l₀ + l₁λ`.
pub fn fit_linear(d: &ExtrapolationDataset, opts: FitOptions) -> Result<FitResult> {
    fit_polynomial(d, opts, 1, Model::Linear)
}

/// `f(λ) = q₀ + q₁λ + q₂λ²`.
pub fn fit_quadratic(d: &ExtrapolationDataset, opts: FitOptions) -> Result<FitResult> {
    fit_polynomial(d, opts, 2, Model::Quadratic)
}

/// `f(λ) = x₀ + x₁ e^{−x₂λ}` by damped Gauss–Newton, started from the
/// log-linear fit.
pub fn fit_exponential(d: &ExtrapolationDataset, opts: FitOptions) -> Result<FitResult> {
    check_points(d, 3, Model::Exponential)?;
    let lambdas = d.lambdas();
    let y = d.values();
    let stds: Vec<f64> = d.points.iter().map(|p| p.std).collect();
    let w = weights(&stds, opts);
    let sqrt_w: Vec<f64> = (0..y.len())
        .map(|i| w.as_ref().map_or(1.0, |w| w[i].sqrt()))
        .collect();

    let mut x = match fit_pie(d, FitOptions { weighted: false }) {
        Ok(p) => [0.0, p.params[0].exp(), -p.params[1]],
        Err(_) => [0.0, y[0], 0.1],
    };

    let residuals = |x: &[f64; 3]| -> DVector<f64> {
        DVector::from_iterator(
            y.len(),
            (0..y.len()).map(|i| sqrt_w[i] * (y[i] - x[0] - x[1] * (-x[2] * lambdas[i]).exp())),
        )
    };
    let jacobian = |x: &[f64; 3]| -> DMatrix<f64> {
        DMatrix::from_fn(y.len(), 3, |i, j| {
            let e = (-x[2] * lambdas[i]).exp();
            sqrt_w[i]
                * match j {
                    0 => 1.0,
                    1 => e,
                    _ => -x[1] * lambdas[i] * e,
                }
        })
    };
    let no_conv = |why: String| Error::NoConvergence(why);

    let mut mu = 1e-3;
    let mut cost = residuals(&x).norm_squared();
    let mut converged = false;
    for _ in 0..LM_MAX_ITER {
        let j = jacobian(&x);
        let r = residuals(&x);
        let jtj = j.transpose() * &j;
        let g = j.transpose() * &r;
        if g.amax() == 0.0 {
            converged = true;
            break;
        }
        let mut damped = jtj.clone();
        for k in 0..3 {
            damped[(k, k)] += mu * jtj[(k, k)].max(1e-12);
        }
        let step = match damped.lu().solve(&g) {
            Some(s) if s.iter().all(|v| v.is_finite()) => s,
            _ => {
                mu *= 10.0;
                continue;
            }
        };
        let trial = [x[0] + step[0], x[1] + step[1], x[2] + step[2]];
        let trial_cost = residuals(&trial).norm_squared();
        if trial_cost.is_finite() && trial_cost <= cost {
            x = trial;
            cost = trial_cost;
            mu = (mu / 3.0).max(1e-15);
        } else {
            mu *= 2.0;
        }
        if step.amax() < LM_STEP_TOL {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(no_conv(format!(
            "no convergence after {LM_MAX_ITER} iterations"
        )));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(no_conv("non-finite parameters".into()));
    }

    let j = jacobian(&x);
    let inv = invert_spd(&(j.transpose() * &j), "exponential")
        .map_err(|_| no_conv("singular Jacobian at the solution".into()))?;
    let cov = if w.is_some() {
        inv
    } else {
        let n = y.len();
        let s2 = if n > 3 { cost / (n - 3) as f64 } else { 0.0 };
        inv * s2
    };
    let variance = cov[(0, 0)] + cov[(1, 1)] + 2.0 * cov[(0, 1)];
    if !variance.is_finite() {
        return Err(no_conv("non-finite covariance".into()));
    }
    Ok(FitResult {
        model: Model::Exponential,
        params: x.to_vec(),
        mitigated: d.observable_sign * (x[0] + x[1]) + d.trace_shift,
        variance: variance.max(0.0),
        covariance: to_rows(&cov),
        s_estimate: None,
    })
}

pub fn fit(d: &ExtrapolationDataset, model: Model, opts: FitOptions) -> Result<FitResult> {
    match model {
        Model::Pie => fit_pie(d, opts),
        Model::Linear => fit_linear(d, opts),
        Model::Quadratic => fit_quadratic(d, opts),
        Model::Exponential => fit_exponential(d, opts),
    }
}

/// Nearest multiple of `π/2`, ties toward zero.
pub fn snap_to_clifford(angle: f64) -> f64 {
    let q = angle / FRAC_PI_2;
    let base = q.trunc();
    let frac = q - base;
    let k = if frac.abs() > 0.5 {
        base + frac.signum()
    } else {
        base
    };
    k * FRAC_PI_2
}

/// Copies `c` with the rotation angles at positions `snap` (indices into the
/// list of parameterized gates) snapped to multiples of `π/2`.
fn snap_gates(c: &Circuit, snap: &[usize]) -> Result<Circuit> {
    let rotations: Vec<usize> = c
        .gates()
        .iter()
        .enumerate()
        .filter(|(_, g)| g.kind.angle().is_some())
        .map(|(i, _)| i)
        .collect();
    let mut gates: Vec<Gate> = c.gates().to_vec();
    for &k in snap {
        let g = &mut gates[rotations[k]];
        let a = g.kind.angle().expect("rotation gate");
        g.kind = g.kind.with_angle(snap_to_clifford(a));
    }
    Circuit::from_gates(c.qubits(), gates)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CdrResult {
    pub mitigated: f64,
    pub slope: f64,
    pub intercept: f64,
    pub noisy_target: f64,
    /// `(noisy, ideal)` value of each training circuit.
    pub training: Vec<(f64, f64)>,
}

/// Clifford data regression: learns `ideal ≈ a·noisy + b` from training
/// circuits in which a `1 − f` fraction of rotation angles is snapped to
/// Clifford angles.
pub fn cdr_mitigate(
    target: &Circuit,
    noise: &NoiseModel,
    obs: &Observable,
    training_count: usize,
    non_clifford_fraction: f64,
    sampling: Sampling,
    seed: u64,
) -> Result<CdrResult> {
    if training_count < 2 {
        return Err(Error::InsufficientTraining(training_count));
    }
    if !(0.0..=1.0).contains(&non_clifford_fraction) {
        return Err(Error::InvalidParams(format!(
            "non-Clifford fraction {non_clifford_fraction} outside [0, 1]"
        )));
    }
    let rotations = target
        .gates()
        .iter()
        .filter(|g| g.kind.angle().is_some())
        .count();
    let n_snap = ((1.0 - non_clifford_fraction) * rotations as f64).round() as usize;

    let noisy_value = |c: &Circuit, stream: u64| -> Result<f64> {
        let s = run(c, noise)?;
        Ok(measure(&s, obs, sampling, derive_seed(seed, stream))?.0)
    };
    let ideal_value =
        |c: &Circuit| -> Result<f64> { expectation(&run(c, &NoiseModel::noiseless())?, obs) };

    let training = (0..training_count)
        .map(|i| {
            let mut rng = task_rng(seed, i as u64);
            let mut snap = sample(&mut rng, rotations, n_snap).into_vec();
            snap.sort_unstable();
            let c = snap_gates(target, &snap)?;
            Ok((noisy_value(&c, 1 + i as u64)?, ideal_value(&c)?))
        })
        .collect::<Result<Vec<_>>>()?;

    let n = training.len() as f64;
    let mx = training.iter().map(|p| p.0).sum::<f64>() / n;
    let my = training.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = training.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = training.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let (slope, intercept) = if sxx <= 1e-24 * n.max(1.0) {
        (0.0, my)
    } else {
        let a = sxy / sxx;
        (a, my - a * mx)
    };
    let noisy_target = noisy_value(target, 0)?;
    Ok(CdrResult {
        mitigated: slope * noisy_target + intercept,
        slope,
        intercept,
        noisy_target,
        training,
    })
}
