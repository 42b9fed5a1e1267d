//! Quasi-probability inversion of gate noise and the sampling estimators
//! built on it (PEC, EMRE and the hybrid HEMRE).

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{compose, ptm_of, Channel, RealMatrix};
use crate::circuit::{Circuit, Gate};
use crate::error::{Error, Result};
use crate::linalg::ComplexMatrix;
use crate::mitigation::Sampling;
use crate::noise::{Event, NoiseModel, NoisyCircuit};
use crate::pauli::PauliString;
use crate::seed::{derive_seed, task_rng};
use crate::simulator::{expectation, sample_expectation, DensityState, Observable};

/// Largest condition number accepted when inverting a noisy PTM.
pub const MAX_CONDITION: f64 = 1e8;

/// Residual bound for decompositions of exactly known targets.
pub const QPD_TOL: f64 = 1e-6;

/// How gate PTMs are obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PtmMode {
    Exact,
    Shots { shots: u64, seed: u64 },
}

/// Noisy channel of a gate on its own qubits: the gate followed by the noise
/// for its arity.
pub fn noisy_gate_channel(gate: &Gate, nm: &NoiseModel) -> Result<Channel> {
    let ideal = Channel::unitary(gate.matrix())?;
    match nm.channel_for_arity(gate.arity())? {
        Some(noise) => compose(&noise, &ideal),
        None => Ok(ideal),
    }
}

/// PTM of the noisy gate. Shot mode estimates each entry as
/// `R_ij = (⟨P_i⟩_{ρ+} − ⟨P_i⟩_{ρ−}) / 2` with `ρ± = (I ± P_j) / 2^k`,
/// every expectation drawn from `shots` single-Pauli measurements.
pub fn estimate_gate_ptm(gate: &Gate, nm: &NoiseModel, mode: PtmMode) -> Result<RealMatrix> {
    let ch = noisy_gate_channel(gate, nm)?;
    let (shots, seed) = match mode {
        PtmMode::Exact => return Ok(ptm_of(&ch)),
        PtmMode::Shots { shots, seed } => (shots, seed),
    };
    if shots == 0 {
        return Err(Error::InvalidParams("shots must be ≥ 1".into()));
    }
    let k = gate.arity();
    let d = 1usize << k;
    let size = 1usize << (2 * k);
    let paulis: Vec<ComplexMatrix> = (0..size)
        .map(|i| PauliString::basis_element(k, i).matrix())
        .collect();
    let mut rng = task_rng(seed, 0);
    let measure = |rho: &ComplexMatrix, i: usize, rng: &mut rand_chacha::ChaCha8Rng| -> f64 {
        if i == 0 {
            return 1.0;
        }
        let exact = paulis[i].matmul(rho).trace().re.clamp(-1.0, 1.0);
        let plus = Binomial::new(shots, (1.0 + exact) / 2.0)
            .expect("valid binomial")
            .sample(rng);
        2.0 * plus as f64 / shots as f64 - 1.0
    };
    let id = ComplexMatrix::identity(d);
    let mut r = RealMatrix::zeros(size, size);
    for j in 0..size {
        if j == 0 {
            let out = ch.apply(&id.scale_real(1.0 / d as f64));
            for i in 0..size {
                r[(i, 0)] = measure(&out, i, &mut rng);
            }
            continue;
        }
        let plus = ch.apply(&(&id + &paulis[j]).scale_real(1.0 / d as f64));
        let minus = ch.apply(&(&id - &paulis[j]).scale_real(1.0 / d as f64));
        for i in 0..size {
            let a = measure(&plus, i, &mut rng);
            let b = measure(&minus, i, &mut rng);
            r[(i, j)] = if i == 0 { 0.0 } else { 0.5 * (a - b) };
        }
    }
    Ok(r)
}

/// `R^G · (R^{G_err})⁻¹`, the PTM undoing the noise of the erroneous gate.
pub fn inverse_noise_ptm(ideal: &RealMatrix, erroneous: &RealMatrix) -> Result<RealMatrix> {
    if ideal.shape() != erroneous.shape() || !erroneous.is_square() {
        return Err(Error::DimensionMismatch {
            expected: ideal.nrows(),
            found: erroneous.nrows(),
        });
    }
    let sv = erroneous.clone().svd(false, false).singular_values;
    let (max, min) = (sv.max(), sv.min());
    let cond = if min > 0.0 { max / min } else { f64::INFINITY };
    if !(cond < MAX_CONDITION) {
        return Err(Error::SingularPtm(cond));
    }
    let inv = erroneous
        .clone()
        .try_inverse()
        .ok_or(Error::SingularPtm(cond))?;
    Ok(ideal * inv)
}

/// PTM of the Pauli unitary `P`: diagonal with `+1` where `P_i` commutes
/// with `P` and `−1` elsewhere.
pub fn pauli_ptm(p: &PauliString) -> RealMatrix {
    let n = p.qubits();
    let size = 1usize << (2 * n);
    RealMatrix::from_fn(size, size, |i, j| {
        if i != j {
            0.0
        } else if PauliString::basis_element(n, i).commutes_with(p) {
            1.0
        } else {
            -1.0
        }
    })
}

/// Quasi-probability decomposition over Pauli unitaries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Qpd {
    pub paulis: Vec<String>,
    pub coeffs: Vec<f64>,
    pub gamma: f64,
    pub s_pos: f64,
    pub pos_probs: Vec<f64>,
    pub residual: f64,
}

impl Qpd {
    fn from_coeffs(qubits: usize, coeffs: Vec<f64>, residual: f64) -> Self {
        let paulis = (0..coeffs.len())
            .map(|i| PauliString::basis_element(qubits, i).label())
            .collect();
        let gamma = coeffs.iter().map(|q| q.abs()).sum();
        let s_pos: f64 = coeffs.iter().filter(|&&q| q > 0.0).sum();
        let pos_probs = coeffs
            .iter()
            .map(|&q| if q > 0.0 { q / s_pos } else { 0.0 })
            .collect();
        Self {
            paulis,
            coeffs,
            gamma,
            s_pos,
            pos_probs,
            residual,
        }
    }

    pub fn qubits(&self) -> usize {
        self.paulis.first().map_or(0, |p| p.len())
    }

    /// Trivial decomposition of the identity.
    pub fn identity(qubits: usize) -> Self {
        let mut coeffs = vec![0.0; 1 << (2 * qubits)];
        coeffs[0] = 1.0;
        Self::from_coeffs(qubits, coeffs, 0.0)
    }

    /// `Σ q_i R^{P_i}`.
    pub fn ptm(&self) -> RealMatrix {
        let n = self.qubits();
        self.coeffs.iter().enumerate().fold(
            RealMatrix::zeros(self.coeffs.len(), self.coeffs.len()),
            |acc, (i, &q)| acc + pauli_ptm(&PauliString::basis_element(n, i)) * q,
        )
    }

    /// Pauli channel of the normalized positive part.
    pub fn positive_channel(&self) -> Result<Channel> {
        Channel::pauli_channel(self.qubits(), &self.pos_probs)
    }
}

/// Least-squares `target ≈ Σ q_i R^{P_i}` subject to `Σ q_i = 1`, solved
/// through the KKT system. Fails with `PoorFit` when the residual Frobenius
/// norm exceeds `max_residual`.
pub fn solve_qpd(target: &RealMatrix, max_residual: f64) -> Result<Qpd> {
    let size = target.nrows();
    if !target.is_square() || size < 4 || !size.is_power_of_two() || !size.trailing_zeros().is_multiple_of(2)
    {
        return Err(Error::InvalidParams(format!(
            "target PTM dimension {size} is not a power of four"
        )));
    }
    let n = size.trailing_zeros() as usize / 2;
    let cols: Vec<RealMatrix> = (0..size)
        .map(|i| pauli_ptm(&PauliString::basis_element(n, i)))
        .collect();
    let a = DMatrix::from_fn(size * size, size, |r, c| cols[c][(r / size, r % size)]);
    let b = DVector::from_iterator(
        size * size,
        (0..size * size).map(|r| target[(r / size, r % size)]),
    );

    let mut kkt = DMatrix::zeros(size + 1, size + 1);
    kkt.view_mut((0, 0), (size, size))
        .copy_from(&(a.transpose() * &a * 2.0));
    for i in 0..size {
        kkt[(i, size)] = 1.0;
        kkt[(size, i)] = 1.0;
    }
    let mut rhs = DVector::zeros(size + 1);
    rhs.rows_mut(0, size).copy_from(&(a.transpose() * &b * 2.0));
    rhs[size] = 1.0;
    let sol = kkt
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::DegenerateDesign("singular KKT system".into()))?;
    let q: Vec<f64> = sol.rows(0, size).iter().copied().collect();
    let residual = (&a * DVector::from_row_slice(&q) - &b).norm();
    if !(residual <= max_residual) {
        return Err(Error::PoorFit(residual));
    }
    Ok(Qpd::from_coeffs(n, q, residual))
}

/// Table key of a gate: its name and angle.
pub fn gate_signature(g: &Gate) -> String {
    match g.kind.angle() {
        Some(a) => format!("{}({a:.12})", g.kind.name()),
        None => g.kind.name().to_string(),
    }
}

/// Inverse-noise decompositions for each distinct gate of a circuit.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct QpdTable {
    pub entries: BTreeMap<String, Qpd>,
}

impl QpdTable {
    pub fn build(circuit: &Circuit, nm: &NoiseModel, mode: PtmMode) -> Result<Self> {
        let max_residual = match mode {
            PtmMode::Exact => QPD_TOL,
            PtmMode::Shots { .. } => f64::INFINITY,
        };
        let mut entries = BTreeMap::new();
        for (i, g) in circuit.gates().iter().enumerate() {
            let key = gate_signature(g);
            if entries.contains_key(&key) {
                continue;
            }
            let mode = match mode {
                PtmMode::Shots { shots, seed } => PtmMode::Shots {
                    shots,
                    seed: derive_seed(seed, i as u64),
                },
                m => m,
            };
            let ideal = ptm_of(&Channel::unitary(g.matrix())?);
            let noisy = estimate_gate_ptm(g, nm, mode)?;
            let target = inverse_noise_ptm(&ideal, &noisy)?;
            entries.insert(key, solve_qpd(&target, max_residual)?);
        }
        Ok(Self { entries })
    }

    pub fn get(&self, g: &Gate) -> Result<&Qpd> {
        let key = gate_signature(g);
        self.entries.get(&key).ok_or(Error::MissingQpd(key))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimator {
    Pec,
    Emre,
    Hemre,
}

impl Estimator {
    fn signed(self, arity: usize) -> bool {
        match self {
            Estimator::Pec => true,
            Estimator::Emre => false,
            Estimator::Hemre => arity >= 2,
        }
    }
}

/// Sampling distribution of one gate site: `(pauli index, probability,
/// sign)` for every nonzero choice, and the site's robustness factor.
fn site_distribution(qpd: &Qpd, signed: bool) -> (Vec<(usize, f64, f64)>, f64) {
    if signed {
        let choices = qpd
            .coeffs
            .iter()
            .enumerate()
            .filter(|(_, q)| **q != 0.0)
            .map(|(i, &q)| (i, q.abs() / qpd.gamma, q.signum()))
            .collect();
        (choices, qpd.gamma)
    } else {
        let choices = qpd
            .pos_probs
            .iter()
            .enumerate()
            .filter(|(_, p)| **p > 0.0)
            .map(|(i, &p)| (i, p, 1.0))
            .collect();
        (choices, qpd.s_pos)
    }
}

struct Site {
    gate: Gate,
    noise: Option<Channel>,
    choices: Vec<(usize, f64, f64)>,
    paulis: Vec<Channel>,
}

fn prepare_sites(
    mode: Estimator,
    base: &Circuit,
    nm: &NoiseModel,
    table: &QpdTable,
) -> Result<(Vec<Site>, f64)> {
    let mut robustness = 1.0;
    let mut sites = Vec::with_capacity(base.len());
    for g in base.gates() {
        let qpd = table.get(g)?;
        if qpd.qubits() != g.arity() {
            return Err(Error::DimensionMismatch {
                expected: g.arity(),
                found: qpd.qubits(),
            });
        }
        let (choices, factor) = site_distribution(qpd, mode.signed(g.arity()));
        robustness *= factor;
        let paulis = (0..qpd.coeffs.len())
            .map(|i| Channel::unitary(PauliString::basis_element(g.arity(), i).matrix()))
            .collect::<Result<Vec<_>>>()?;
        sites.push(Site {
            gate: g.clone(),
            noise: nm.channel_for_arity(g.arity())?,
            choices,
            paulis,
        });
    }
    Ok((sites, robustness))
}

fn site_events(site: &Site, pauli: usize) -> Vec<Event> {
    let mut ev = vec![Event::Gate(site.gate.clone())];
    if let Some(n) = &site.noise {
        ev.push(Event::Noise {
            targets: site.gate.targets.clone(),
            channel: n.clone(),
        });
    }
    if pauli != 0 {
        ev.push(Event::Noise {
            targets: site.gate.targets.clone(),
            channel: site.paulis[pauli].clone(),
        });
    }
    ev
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingEstimate {
    /// Signed per-sample values of the traceless observable, before scaling.
    pub per_sample_values: Vec<f64>,
    pub mean: f64,
    pub std_error: f64,
    pub robustness_product: f64,
}

/// Draws `samples` circuits, each with a Pauli inserted after every noisy
/// gate, and returns the scaled sample mean.
#[allow(clippy::too_many_arguments)]
pub fn run_estimator(
    mode: Estimator,
    base: &Circuit,
    nm: &NoiseModel,
    table: &QpdTable,
    obs: &Observable,
    samples: usize,
    sampling: Sampling,
    seed: u64,
) -> Result<SamplingEstimate> {
    if samples == 0 {
        return Err(Error::InvalidParams(
            "at least one sample is required".into(),
        ));
    }
    let (sites, robustness) = prepare_sites(mode, base, nm, table)?;
    let traceless = obs.traceless();
    let values = (0..samples)
        .into_par_iter()
        .map(|k| {
            let mut rng = task_rng(seed, k as u64);
            let mut sign = 1.0;
            let mut events = Vec::new();
            for site in &sites {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                let mut pick = site.choices.last().expect("nonempty distribution");
                for c in &site.choices {
                    acc += c.1;
                    if u < acc {
                        pick = c;
                        break;
                    }
                }
                sign *= pick.2;
                events.extend(site_events(site, pick.0));
            }
            let mut state = DensityState::zero(base.qubits())?;
            state.evolve(&NoisyCircuit {
                qubits: base.qubits(),
                events,
            })?;
            let v = match sampling {
                Sampling::Shots(shots) => {
                    sample_expectation(&state, &traceless, shots, derive_seed(seed, k as u64))?.mean
                }
                _ => expectation(&state, &traceless)?,
            };
            Ok(sign * v)
        })
        .collect::<Result<Vec<f64>>>()?;
    let n = values.len() as f64;
    let raw_mean = values.iter().sum::<f64>() / n;
    let var = if values.len() > 1 {
        values.iter().map(|v| (v - raw_mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    Ok(SamplingEstimate {
        mean: robustness * raw_mean + obs.offset(),
        std_error: robustness * (var / n).sqrt(),
        robustness_product: robustness,
        per_sample_values: values,
    })
}

/// The estimator's infinite-sample limit, by summing over every insertion
/// pattern weighted by its probability.
pub fn enumerate(
    mode: Estimator,
    base: &Circuit,
    nm: &NoiseModel,
    table: &QpdTable,
    obs: &Observable,
) -> Result<f64> {
    let (sites, robustness) = prepare_sites(mode, base, nm, table)?;
    let traceless = obs.traceless();
    fn walk(sites: &[Site], state: &DensityState, weight: f64, obs: &Observable) -> Result<f64> {
        let Some((site, rest)) = sites.split_first() else {
            return Ok(weight * expectation(state, obs)?);
        };
        let mut total = 0.0;
        for &(i, p, s) in &site.choices {
            let mut next = state.clone();
            next.evolve(&NoisyCircuit {
                qubits: state.qubits(),
                events: site_events(site, i),
            })?;
            total += walk(rest, &next, weight * p * s, obs)?;
        }
        Ok(total)
    }
    let start = DensityState::zero(base.qubits())?;
    Ok(robustness * walk(&sites, &start, 1.0, &traceless)? + obs.offset())
}
