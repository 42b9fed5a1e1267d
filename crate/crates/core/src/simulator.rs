//! Dense density-matrix simulation and Pauli-sum expectation values.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{pauli_fidelities, ptm_of, Channel, RealMatrix};
use crate::circuit::Circuit;
use crate::error::{Error, Result};
use crate::linalg::{ComplexMatrix, C0};
use crate::noise::{Event, NoiseAttachment, NoisyCircuit};
use crate::pauli::{Pauli, PauliString};

/// Largest register handled by the dense simulator.
pub const MAX_QUBITS: usize = 12;

/// Transfer-matrix entries below this magnitude are dropped when compiling.
const SPARSE_FLOOR: f64 = 1e-14;

fn check_width(qubits: usize) -> Result<()> {
    if qubits == 0 || qubits > MAX_QUBITS {
        return Err(Error::SimulatorWidth {
            requested: qubits,
            cap: MAX_QUBITS,
        });
    }
    Ok(())
}

/// Spreads the bits of `x` onto the even bit positions.
fn spread_bits(x: usize) -> usize {
    (0..usize::BITS as usize / 2).fold(0, |acc, i| acc | (((x >> i) & 1) << (2 * i)))
}

/// Pauli coordinates `v_P = Tr[P X]`, indexed lexicographically.
fn to_pauli(x: &ComplexMatrix) -> Vec<Complex64> {
    let d = x.dim();
    let spread: Vec<usize> = (0..d).map(spread_bits).collect();
    let mut v = vec![C0; d * d];
    for a in 0..d {
        for b in 0..d {
            v[(spread[a] << 1) | spread[b]] = x[(a, b)];
        }
    }
    // Per qubit, the digit 2a+b of (ρ_ab) maps to the coordinates on I, X, Y, Z.
    let i = Complex64::new(0.0, 1.0);
    let mut stride = 1;
    while stride < v.len() {
        for base in (0..v.len()).step_by(4 * stride) {
            for j in base..base + stride {
                let (t0, t1, t2, t3) = (v[j], v[j + stride], v[j + 2 * stride], v[j + 3 * stride]);
                v[j] = t0 + t3;
                v[j + stride] = t1 + t2;
                v[j + 2 * stride] = i * (t1 - t2);
                v[j + 3 * stride] = t0 - t3;
            }
        }
        stride *= 4;
    }
    v
}

/// Inverse of [`to_pauli`], written into `x`.
fn from_pauli(mut v: Vec<Complex64>, x: &mut ComplexMatrix) {
    let d = x.dim();
    let i = Complex64::new(0.0, 1.0);
    let mut stride = 1;
    while stride < v.len() {
        for base in (0..v.len()).step_by(4 * stride) {
            for j in base..base + stride {
                let (vi, vx, vy, vz) = (v[j], v[j + stride], v[j + 2 * stride], v[j + 3 * stride]);
                v[j] = (vi + vz) * 0.5;
                v[j + stride] = (vx - i * vy) * 0.5;
                v[j + 2 * stride] = (vx + i * vy) * 0.5;
                v[j + 3 * stride] = (vi - vz) * 0.5;
            }
        }
        stride *= 4;
    }
    let spread: Vec<usize> = (0..d).map(spread_bits).collect();
    for a in 0..d {
        for b in 0..d {
            x[(a, b)] = v[(spread[a] << 1) | spread[b]];
        }
    }
}

/// Work below this many coordinates is not split across threads.
const BLOCK: usize = 1 << 12;

#[derive(Debug, Clone)]
enum Transfer {
    Diagonal(Vec<f64>),
    /// Compressed rows: row `i` holds `cols[start[i]..start[i + 1]]`.
    Sparse {
        start: Vec<usize>,
        cols: Vec<usize>,
        vals: Vec<f64>,
    },
}

impl Transfer {
    fn from_matrix(r: &RealMatrix) -> Self {
        let off_diagonal = (0..r.nrows())
            .any(|i| (0..r.ncols()).any(|j| i != j && r[(i, j)].abs() >= SPARSE_FLOOR));
        if !off_diagonal {
            return Transfer::Diagonal(r.diagonal().iter().copied().collect());
        }
        let (mut start, mut cols, mut vals) = (vec![0], Vec::new(), Vec::new());
        for i in 0..r.nrows() {
            for j in 0..r.ncols() {
                if r[(i, j)].abs() >= SPARSE_FLOOR {
                    cols.push(j);
                    vals.push(r[(i, j)]);
                }
            }
            start.push(cols.len());
        }
        Transfer::Sparse { start, cols, vals }
    }
}

/// A local Pauli transfer matrix acting on the Pauli coordinates of the
/// register.
#[derive(Debug, Clone)]
struct LocalOp {
    /// Offset in the coordinate vector of each local Pauli index.
    offsets: Vec<usize>,
    /// Coordinates with every target digit zero, within one block.
    bases: Vec<usize>,
    block: usize,
    transfer: Transfer,
}

impl LocalOp {
    fn new(n: usize, targets: &[usize], transfer: Transfer) -> Self {
        let k = targets.len();
        let digits: Vec<usize> = targets.iter().map(|&q| n - 1 - q).collect();
        let offsets = (0..1usize << (2 * k))
            .map(|j| {
                digits
                    .iter()
                    .enumerate()
                    .map(|(t, &pos)| ((j >> (2 * (k - 1 - t))) & 3) << (2 * pos))
                    .sum()
            })
            .collect();
        let top = digits.iter().max().map_or(0, |&p| p + 1);
        let block = (1usize << (2 * top)).max(BLOCK.min(1 << (2 * n)));
        let mut sorted = digits;
        sorted.sort_unstable();
        let bases = (0..block >> (2 * k))
            .map(|mut c| {
                for &pos in &sorted {
                    let low = c & ((1 << (2 * pos)) - 1);
                    c = ((c - low) << 2) | low;
                }
                c
            })
            .collect();
        Self {
            offsets,
            bases,
            block,
            transfer,
        }
    }

    fn apply_block<const L: usize>(&self, v: &mut [f64]) {
        let offsets: [usize; L] = self.offsets[..].try_into().expect("local dimension");
        match &self.transfer {
            Transfer::Diagonal(f) => {
                let f: [f64; L] = f[..].try_into().expect("local dimension");
                for &b in &self.bases {
                    for j in 0..L {
                        v[b + offsets[j]] *= f[j];
                    }
                }
            }
            Transfer::Sparse { start, cols, vals } => {
                let mut buf = [0.0; L];
                for &b in &self.bases {
                    for j in 0..L {
                        buf[j] = v[b + offsets[j]];
                    }
                    for i in 0..L {
                        let mut acc = 0.0;
                        for e in start[i]..start[i + 1] {
                            acc += vals[e] * buf[cols[e]];
                        }
                        v[b + offsets[i]] = acc;
                    }
                }
            }
        }
    }

    fn apply_dyn(&self, v: &mut [f64]) {
        match self.offsets.len() {
            4 => self.apply_block::<4>(v),
            16 => self.apply_block::<16>(v),
            64 => self.apply_block::<64>(v),
            _ => self.apply_wide(v),
        }
    }

    fn apply_wide(&self, v: &mut [f64]) {
        match &self.transfer {
            Transfer::Diagonal(f) => {
                for &b in &self.bases {
                    for (&o, &fj) in self.offsets.iter().zip(f) {
                        v[b + o] *= fj;
                    }
                }
            }
            Transfer::Sparse { start, cols, vals } => {
                let mut buf = vec![0.0; self.offsets.len()];
                for &b in &self.bases {
                    for (x, &o) in buf.iter_mut().zip(&self.offsets) {
                        *x = v[b + o];
                    }
                    for (i, &o) in self.offsets.iter().enumerate() {
                        v[b + o] = (start[i]..start[i + 1])
                            .map(|e| vals[e] * buf[cols[e]])
                            .sum();
                    }
                }
            }
        }
    }

    fn apply(&self, v: &mut [f64]) {
        if v.len() > self.block {
            v.par_chunks_mut(self.block).for_each(|c| self.apply_dyn(c));
        } else {
            self.apply_dyn(v);
        }
    }
}

/// Transfer matrix of a channel on few enough qubits to tabulate.
fn local_transfer(channel: &Channel) -> Transfer {
    match channel.pauli_probs() {
        Some(p) => Transfer::Diagonal(pauli_fidelities(p)),
        None => Transfer::from_matrix(&ptm_of(channel)),
    }
}

/// Lowers a noisy event list to local transfer matrices, fusing each gate
/// with a directly following noise event on the same targets.
fn compile(nc: &NoisyCircuit) -> Result<Vec<LocalOp>> {
    let n = nc.qubits;
    let mut ops = Vec::with_capacity(nc.events.len());
    let mut i = 0;
    while i < nc.events.len() {
        match &nc.events[i] {
            Event::Gate(g) => {
                let mut r = ptm_of(&Channel::unitary(g.matrix())?);
                if let Some(Event::Noise { targets, channel }) = nc.events.get(i + 1) {
                    if *targets == g.targets {
                        r = ptm_of(channel) * r;
                        i += 1;
                    }
                }
                ops.push(LocalOp::new(n, &g.targets, Transfer::from_matrix(&r)));
            }
            Event::Noise { targets, channel } => {
                if channel.qubits() != targets.len() {
                    return Err(Error::DimensionMismatch {
                        expected: targets.len(),
                        found: channel.qubits(),
                    });
                }
                ops.push(LocalOp::new(n, targets, local_transfer(channel)));
            }
        }
        i += 1;
    }
    Ok(ops)
}

/// Applies a noisy event list to an arbitrary operator on the register, in
/// place. Used both for state evolution and for channel reconstruction.
pub fn apply_to_matrix(nc: &NoisyCircuit, x: &mut ComplexMatrix) -> Result<()> {
    let d = x.dim();
    if d != 1 << nc.qubits {
        return Err(Error::WidthMismatch {
            circuit: nc.qubits,
            state: d.trailing_zeros() as usize,
        });
    }
    evolve_coords(nc, x, false)
}

/// Shared driver. With `hermitian` set the anti-Hermitian part of `x` is
/// discarded, which halves the work.
fn evolve_coords(nc: &NoisyCircuit, x: &mut ComplexMatrix, hermitian: bool) -> Result<()> {
    let ops = compile(nc)?;
    let v = to_pauli(x);
    let mut re: Vec<f64> = v.iter().map(|z| z.re).collect();
    let mut im: Vec<f64> = if hermitian {
        Vec::new()
    } else {
        v.iter().map(|z| z.im).collect()
    };
    for op in &ops {
        op.apply(&mut re);
        if !im.is_empty() {
            op.apply(&mut im);
        }
    }
    let v = if im.is_empty() {
        re.into_iter().map(|r| Complex64::new(r, 0.0)).collect()
    } else {
        re.into_iter()
            .zip(im)
            .map(|(r, i)| Complex64::new(r, i))
            .collect()
    };
    from_pauli(v, x);
    Ok(())
}

/// `n`-qubit density matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityState {
    qubits: usize,
    rho: ComplexMatrix,
}

impl DensityState {
    /// `|0…0⟩⟨0…0|`.
    pub fn zero(qubits: usize) -> Result<Self> {
        check_width(qubits)?;
        let mut rho = ComplexMatrix::zeros(1 << qubits);
        rho[(0, 0)] = Complex64::new(1.0, 0.0);
        Ok(Self { qubits, rho })
    }

    pub fn maximally_mixed(qubits: usize) -> Result<Self> {
        check_width(qubits)?;
        let d = 1usize << qubits;
        Ok(Self {
            qubits,
            rho: ComplexMatrix::identity(d).scale_real(1.0 / d as f64),
        })
    }

    /// Validates Hermiticity, unit trace and positivity.
    pub fn from_matrix(rho: ComplexMatrix) -> Result<Self> {
        let d = rho.dim();
        if !d.is_power_of_two() {
            return Err(Error::InvalidMatrix(format!(
                "dimension {d} is not a power of two"
            )));
        }
        let qubits = d.trailing_zeros() as usize;
        check_width(qubits)?;
        let tr = rho.trace();
        if (tr - Complex64::new(1.0, 0.0)).norm() > 1e-10 {
            return Err(Error::InvalidMatrix(format!("trace {tr} is not 1")));
        }
        let min = crate::linalg::min_eigenvalue(&rho)?;
        if min < -1e-10 {
            return Err(Error::InvalidMatrix(format!(
                "min eigenvalue {min:.3e} < 0"
            )));
        }
        Ok(Self { qubits, rho })
    }

    pub fn qubits(&self) -> usize {
        self.qubits
    }

    pub fn rho(&self) -> &ComplexMatrix {
        &self.rho
    }

    pub fn into_matrix(self) -> ComplexMatrix {
        self.rho
    }

    pub fn evolve(&mut self, nc: &NoisyCircuit) -> Result<()> {
        if nc.qubits != self.qubits {
            return Err(Error::WidthMismatch {
                circuit: nc.qubits,
                state: self.qubits,
            });
        }
        evolve_coords(nc, &mut self.rho, true)
    }

    /// Applies an ideal circuit without noise.
    pub fn apply_circuit(&mut self, c: &Circuit) -> Result<()> {
        let nc = NoisyCircuit {
            qubits: c.qubits(),
            events: c.gates().iter().cloned().map(Event::Gate).collect(),
        };
        self.evolve(&nc)
    }

    pub fn apply_channel(&mut self, targets: &[usize], channel: &Channel) -> Result<()> {
        let nc = NoisyCircuit {
            qubits: self.qubits,
            events: vec![Event::Noise {
                targets: targets.to_vec(),
                channel: channel.clone(),
            }],
        };
        self.evolve(&nc)
    }
}

/// Evolves `|0…0⟩` through `circuit` with noise attached by `noise`.
pub fn run<N: NoiseAttachment + ?Sized>(circuit: &Circuit, noise: &N) -> Result<DensityState> {
    let mut s = DensityState::zero(circuit.qubits())?;
    s.evolve(&noise.attach(circuit)?)?;
    Ok(s)
}

/// Pauli-sum observable `Σ αᵢ Pᵢ + offset·I`.
#[derive(Debug, Clone, PartialEq)]
pub struct Observable {
    qubits: usize,
    terms: Vec<PauliString>,
    offset: f64,
}

impl Observable {
    /// Identity terms are merged into the offset.
    pub fn new(qubits: usize, terms: Vec<PauliString>, offset: f64) -> Result<Self> {
        if !offset.is_finite() {
            return Err(Error::InvalidParams("non-finite observable offset".into()));
        }
        let mut kept = Vec::with_capacity(terms.len());
        let mut offset = offset;
        for t in terms {
            if t.qubits() != qubits {
                return Err(Error::DimensionMismatch {
                    expected: qubits,
                    found: t.qubits(),
                });
            }
            if t.is_identity() {
                offset += t.coeff();
            } else {
                kept.push(t);
            }
        }
        Ok(Self {
            qubits,
            terms: kept,
            offset,
        })
    }

    /// Global magnetization `(1/N) Σ Zᵢ`.
    pub fn magnetization(qubits: usize) -> Self {
        let w = 1.0 / qubits as f64;
        Self {
            qubits,
            terms: (0..qubits)
                .map(|q| PauliString::single(qubits, q, Pauli::Z, w))
                .collect(),
            offset: 0.0,
        }
    }

    pub fn qubits(&self) -> usize {
        self.qubits
    }

    pub fn terms(&self) -> &[PauliString] {
        &self.terms
    }

    pub fn offset(&self) -> f64 {
        self.offset
    }

    /// The same observable with its identity component removed.
    pub fn traceless(&self) -> Self {
        Self {
            qubits: self.qubits,
            terms: self.terms.clone(),
            offset: 0.0,
        }
    }

    pub fn matrix(&self) -> ComplexMatrix {
        let d = 1 << self.qubits;
        self.terms.iter().fold(
            ComplexMatrix::identity(d).scale_real(self.offset),
            |acc, t| &acc + &t.matrix().scale_real(t.coeff()),
        )
    }

    pub fn to_record(&self) -> ObservableRecord {
        ObservableRecord {
            qubits: self.qubits,
            terms: self
                .terms
                .iter()
                .map(|t| TermRecord {
                    pauli: t.label(),
                    coeff: t.coeff(),
                })
                .collect(),
            offset: self.offset,
        }
    }

    pub fn from_record(rec: &ObservableRecord) -> Result<Self> {
        let terms = rec
            .terms
            .iter()
            .map(|t| PauliString::parse(&t.pauli, t.coeff))
            .collect::<Result<Vec<_>>>()?;
        Self::new(rec.qubits, terms, rec.offset)
    }
}

/// JSON form `{"qubits": N, "terms": [{"pauli", "coeff"}], "offset": c}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservableRecord {
    pub qubits: usize,
    pub terms: Vec<TermRecord>,
    #[serde(default)]
    pub offset: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TermRecord {
    pub pauli: String,
    pub coeff: f64,
}

/// `Tr[O ρ]`.
pub fn expectation(state: &DensityState, obs: &Observable) -> Result<f64> {
    if obs.qubits != state.qubits {
        return Err(Error::WidthMismatch {
            circuit: obs.qubits,
            state: state.qubits,
        });
    }
    Ok(obs
        .terms
        .iter()
        .map(|t| t.coeff() * t.trace_with(&state.rho).re)
        .sum::<f64>()
        + obs.offset)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShotResult {
    pub mean: f64,
    pub std_error: f64,
    pub shots: usize,
}

/// Greedy partition of term indices into qubit-wise commuting groups.
/// Returns, per group, the merged measurement basis and member indices.
pub fn measurement_groups(terms: &[PauliString]) -> Vec<(Vec<Pauli>, Vec<usize>)> {
    let mut groups: Vec<(Vec<Pauli>, Vec<usize>)> = Vec::new();
    for (i, t) in terms.iter().enumerate() {
        let fits = |basis: &[Pauli]| {
            basis
                .iter()
                .zip(t.letters())
                .all(|(&b, &p)| b == Pauli::I || p == Pauli::I || b == p)
        };
        match groups.iter_mut().find(|(b, _)| fits(b)) {
            Some((basis, members)) => {
                for (b, &p) in basis.iter_mut().zip(t.letters()) {
                    if p != Pauli::I {
                        *b = p;
                    }
                }
                members.push(i);
            }
            None => groups.push((t.letters().to_vec(), vec![i])),
        }
    }
    groups
}

/// Outcome distribution of measuring the qubits in `support` in the bases
/// given by `basis`. Outcome bit `j` belongs to `support[j]`
/// (most significant first).
fn outcome_distribution(rho: &ComplexMatrix, basis: &[Pauli], support: &[usize]) -> Vec<f64> {
    let n = basis.len();
    let m = support.len();
    // Expectations of every product over subsets of the support, then an
    // inverse Walsh-Hadamard transform gives the joint distribution.
    let mut v: Vec<f64> = (0..1usize << m)
        .map(|subset| {
            let mut letters = vec![Pauli::I; n];
            for (j, &q) in support.iter().enumerate() {
                if (subset >> (m - 1 - j)) & 1 == 1 {
                    letters[q] = basis[q];
                }
            }
            PauliString::new(letters, 1.0)
                .expect("non-empty")
                .trace_with(rho)
                .re
        })
        .collect();
    let mut h = 1;
    while h < v.len() {
        for i in (0..v.len()).step_by(2 * h) {
            for j in i..i + h {
                let (a, b) = (v[j], v[j + h]);
                v[j] = a + b;
                v[j + h] = a - b;
            }
        }
        h *= 2;
    }
    let scale = 1.0 / v.len() as f64;
    v.iter().map(|&x| (x * scale).max(0.0)).collect()
}

/// Outcome distribution of one measurement group and the group
/// Hamiltonian's value on each outcome.
struct GroupOutcomes {
    probs: Vec<f64>,
    values: Vec<f64>,
}

fn group_outcomes(state: &DensityState, obs: &Observable) -> Result<Vec<GroupOutcomes>> {
    if obs.qubits != state.qubits {
        return Err(Error::WidthMismatch {
            circuit: obs.qubits,
            state: state.qubits,
        });
    }
    let n = obs.qubits;
    Ok(measurement_groups(&obs.terms)
        .into_iter()
        .map(|(basis, members)| {
            let support: Vec<usize> = (0..n).filter(|&q| basis[q] != Pauli::I).collect();
            let m = support.len();
            let probs = outcome_distribution(&state.rho, &basis, &support);
            let term_masks: Vec<(usize, f64)> = members
                .iter()
                .map(|&i| {
                    let t = &obs.terms[i];
                    let mask = support
                        .iter()
                        .enumerate()
                        .filter(|(_, &q)| t.letters()[q] != Pauli::I)
                        .fold(0, |acc, (j, _)| acc | (1 << (m - 1 - j)));
                    (mask, t.coeff())
                })
                .collect();
            let values = (0..probs.len())
                .map(|outcome: usize| {
                    term_masks
                        .iter()
                        .map(|&(mask, c)| {
                            if (outcome & mask).count_ones().is_multiple_of(2) {
                                c
                            } else {
                                -c
                            }
                        })
                        .sum()
                })
                .collect();
            GroupOutcomes { probs, values }
        })
        .collect())
}

/// Standard error a `shots`-per-group measurement would have, from the exact
/// outcome distributions.
pub fn exact_shot_std(state: &DensityState, obs: &Observable, shots: usize) -> Result<f64> {
    if shots == 0 {
        return Err(Error::InvalidParams("shots must be ≥ 1".into()));
    }
    let var: f64 = group_outcomes(state, obs)?
        .iter()
        .map(|g| {
            let total: f64 = g.probs.iter().sum();
            let (m1, m2) = g
                .probs
                .iter()
                .zip(&g.values)
                .fold((0.0, 0.0), |(a, b), (p, v)| (a + p * v, b + p * v * v));
            let (m1, m2) = (m1 / total, m2 / total);
            (m2 - m1 * m1).max(0.0)
        })
        .sum();
    Ok((var / shots as f64).sqrt())
}

/// Shot-sampled estimate of `⟨O⟩`: `shots` samples per measurement group,
/// with group variances summed.
pub fn sample_expectation(
    state: &DensityState,
    obs: &Observable,
    shots: usize,
    seed: u64,
) -> Result<ShotResult> {
    if shots == 0 {
        return Err(Error::InvalidParams("shots must be ≥ 1".into()));
    }
    let mut mean = obs.offset;
    let mut var = 0.0;
    for (g, group) in group_outcomes(state, obs)?.into_iter().enumerate() {
        let mut cdf = Vec::with_capacity(group.probs.len());
        let mut acc = 0.0;
        for p in &group.probs {
            acc += p;
            cdf.push(acc);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(g as u64);
        let (mut s1, mut s2) = (0.0, 0.0);
        for _ in 0..shots {
            let u = rng.random::<f64>() * acc;
            let k = cdf.partition_point(|&c| c <= u).min(cdf.len() - 1);
            let x = group.values[k];
            s1 += x;
            s2 += x * x;
        }
        let mu = s1 / shots as f64;
        let plug_in = (s2 / shots as f64 - mu * mu).max(0.0);
        mean += mu;
        var += plug_in / shots as f64;
    }
    Ok(ShotResult {
        mean,
        std_error: var.sqrt(),
        shots,
    })
}
