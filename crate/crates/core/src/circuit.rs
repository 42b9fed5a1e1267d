//! Gates, circuits and global circuit folding.
//!
//! Folding replaces the base circuit `U` by `U (U† U)^n`; the resulting noise
//! scale is `λ = 2n + 1`. Circuits start from `|0…0⟩`.

use std::f64::consts::FRAC_1_SQRT_2;

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{ComplexMatrix, C0, C1};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GateKind {
    H,
    X,
    Y,
    Rz(f64),
    Ry(f64),
    Rx(f64),
    Rxx(f64),
    Rzz(f64),
    Cnot,
}

impl GateKind {
    pub fn arity(self) -> usize {
        match self {
            GateKind::Rxx(_) | GateKind::Rzz(_) | GateKind::Cnot => 2,
            _ => 1,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            GateKind::H => "H",
            GateKind::X => "X",
            GateKind::Y => "Y",
            GateKind::Rz(_) => "RZ",
            GateKind::Ry(_) => "RY",
            GateKind::Rx(_) => "RX",
            GateKind::Rxx(_) => "RXX",
            GateKind::Rzz(_) => "RZZ",
            GateKind::Cnot => "CNOT",
        }
    }

    pub fn angle(self) -> Option<f64> {
        match self {
            GateKind::Rz(a)
            | GateKind::Ry(a)
            | GateKind::Rx(a)
            | GateKind::Rxx(a)
            | GateKind::Rzz(a) => Some(a),
            _ => None,
        }
    }

    pub fn with_angle(self, angle: f64) -> Self {
        match self {
            GateKind::Rz(_) => GateKind::Rz(angle),
            GateKind::Ry(_) => GateKind::Ry(angle),
            GateKind::Rx(_) => GateKind::Rx(angle),
            GateKind::Rxx(_) => GateKind::Rxx(angle),
            GateKind::Rzz(_) => GateKind::Rzz(angle),
            other => other,
        }
    }

    pub fn from_name(name: &str, angle: Option<f64>) -> Result<Self> {
        let need = |a: Option<f64>| {
            a.ok_or_else(|| Error::InvalidParams(format!("gate {name} requires an angle")))
        };
        Ok(match name.to_ascii_uppercase().as_str() {
            "H" => GateKind::H,
            "X" => GateKind::X,
            "Y" => GateKind::Y,
            "RZ" => GateKind::Rz(need(angle)?),
            "RY" => GateKind::Ry(need(angle)?),
            "RX" => GateKind::Rx(need(angle)?),
            "RXX" => GateKind::Rxx(need(angle)?),
            "RZZ" => GateKind::Rzz(need(angle)?),
            "CNOT" | "CX" => GateKind::Cnot,
            other => return Err(Error::InvalidParams(format!("unknown gate '{other}'"))),
        })
    }

    pub fn adjoint(self) -> Self {
        match self.angle() {
            Some(a) => self.with_angle(-a),
            None => self,
        }
    }

    /// Unitary on the gate's own qubits; for two-qubit gates the first
    /// target is the more significant tensor factor (CNOT: control first).
    pub fn matrix(self) -> ComplexMatrix {
        let half = |a: f64| (a / 2.0).sin_cos();
        let cis = |phi: f64| Complex64::from_polar(1.0, phi);
        let re = |x: f64| Complex64::new(x, 0.0);
        let im = |x: f64| Complex64::new(0.0, x);
        let data = match self {
            GateKind::H => vec![
                re(FRAC_1_SQRT_2),
                re(FRAC_1_SQRT_2),
                re(FRAC_1_SQRT_2),
                re(-FRAC_1_SQRT_2),
            ],
            GateKind::X => vec![C0, C1, C1, C0],
            GateKind::Y => vec![C0, im(-1.0), im(1.0), C0],
            GateKind::Rz(a) => vec![cis(-a / 2.0), C0, C0, cis(a / 2.0)],
            GateKind::Ry(a) => {
                let (s, c) = half(a);
                vec![re(c), re(-s), re(s), re(c)]
            }
            GateKind::Rx(a) => {
                let (s, c) = half(a);
                vec![re(c), im(-s), im(-s), re(c)]
            }
            GateKind::Rxx(a) => {
                let (s, c) = half(a);
                let (c, s) = (re(c), im(-s));
                vec![
                    c, C0, C0, s, //
                    C0, c, s, C0, //
                    C0, s, c, C0, //
                    s, C0, C0, c,
                ]
            }
            GateKind::Rzz(a) => {
                let (m, p) = (cis(-a / 2.0), cis(a / 2.0));
                let mut v = vec![C0; 16];
                v[0] = m;
                v[5] = p;
                v[10] = p;
                v[15] = m;
                v
            }
            GateKind::Cnot => {
                let mut v = vec![C0; 16];
                v[0] = C1;
                v[5] = C1;
                v[11] = C1;
                v[14] = C1;
                v
            }
        };
        let dim = 1 << self.arity();
        ComplexMatrix::from_vec(dim, data).expect("gate matrix is well formed")
    }
}

/// A gate acting on specific qubits.
#[derive(Debug, Clone, PartialEq)]
pub struct Gate {
    pub kind: GateKind,
    pub targets: Vec<usize>,
}

impl Gate {
    pub fn new(kind: GateKind, targets: Vec<usize>) -> Result<Self> {
        if targets.len() != kind.arity() {
            return Err(Error::InvalidParams(format!(
                "{} acts on {} qubits, got {} targets",
                kind.name(),
                kind.arity(),
                targets.len()
            )));
        }
        if targets.len() == 2 && targets[0] == targets[1] {
            return Err(Error::InvalidParams(format!(
                "{} targets must be distinct",
                kind.name()
            )));
        }
        if let Some(a) = kind.angle() {
            if !a.is_finite() {
                return Err(Error::InvalidParams(format!(
                    "{} angle is not finite",
                    kind.name()
                )));
            }
        }
        Ok(Self { kind, targets })
    }

    pub fn one(kind: GateKind, q: usize) -> Result<Self> {
        Self::new(kind, vec![q])
    }

    pub fn two(kind: GateKind, a: usize, b: usize) -> Result<Self> {
        Self::new(kind, vec![a, b])
    }

    pub fn arity(&self) -> usize {
        self.kind.arity()
    }

    pub fn adjoint(&self) -> Self {
        Self {
            kind: self.kind.adjoint(),
            targets: self.targets.clone(),
        }
    }

    pub fn matrix(&self) -> ComplexMatrix {
        self.kind.matrix()
    }

    /// Dense unitary of this gate on an `n`-qubit register.
    pub fn embedded_matrix(&self, n: usize) -> ComplexMatrix {
        let local = self.matrix();
        let dim = 1usize << n;
        let bits: Vec<usize> = self.targets.iter().map(|&q| n - 1 - q).collect();
        let local_index = |i: usize| bits.iter().fold(0, |acc, &b| (acc << 1) | ((i >> b) & 1));
        let mask: usize = bits.iter().map(|&b| 1 << b).sum();
        ComplexMatrix::from_fn(dim, |r, c| {
            if r & !mask != c & !mask {
                return C0;
            }
            local[(local_index(r), local_index(c))]
        })
    }
}

/// An ordered gate list on `qubits` qubits, with folding metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct Circuit {
    qubits: usize,
    gates: Vec<Gate>,
    fold_count: usize,
}

impl Circuit {
    pub fn new(qubits: usize) -> Self {
        Self {
            qubits,
            gates: Vec::new(),
            fold_count: 0,
        }
    }

    pub fn from_gates(qubits: usize, gates: Vec<Gate>) -> Result<Self> {
        let mut c = Self::new(qubits);
        for g in gates {
            c.push(g)?;
        }
        Ok(c)
    }

    pub fn push(&mut self, gate: Gate) -> Result<()> {
        if let Some(&q) = gate.targets.iter().find(|&&q| q >= self.qubits) {
            return Err(Error::InvalidParams(format!(
                "target {q} outside a {}-qubit circuit",
                self.qubits
            )));
        }
        self.gates.push(gate);
        Ok(())
    }

    pub fn qubits(&self) -> usize {
        self.qubits
    }

    pub fn gates(&self) -> &[Gate] {
        &self.gates
    }

    pub fn len(&self) -> usize {
        self.gates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gates.is_empty()
    }

    pub fn fold_count(&self) -> usize {
        self.fold_count
    }

    /// Noise scale factor `2n + 1`.
    pub fn noise_scale(&self) -> usize {
        2 * self.fold_count + 1
    }

    /// Number of gates in one segment (the unfolded base circuit).
    pub fn segment_len(&self) -> usize {
        self.gates.len() / self.noise_scale()
    }

    /// The `2n + 1` segments `U, U†, U, …` of a folded circuit.
    pub fn segments(&self) -> impl Iterator<Item = &[Gate]> {
        let len = self.segment_len().max(1);
        self.gates.chunks(len)
    }

    /// Reverses the gate order and inverts each gate.
    pub fn adjoint(&self) -> Self {
        Self {
            qubits: self.qubits,
            gates: self.gates.iter().rev().map(Gate::adjoint).collect(),
            fold_count: self.fold_count,
        }
    }

    /// Global folding `U → U (U† U)^n` of the (unfolded) base circuit.
    pub fn fold(&self, n: usize) -> Self {
        let base: Vec<Gate> = self.gates[..self.segment_len()].to_vec();
        let inverse: Vec<Gate> = base.iter().rev().map(Gate::adjoint).collect();
        let mut gates = Vec::with_capacity(base.len() * (2 * n + 1));
        gates.extend_from_slice(&base);
        for _ in 0..n {
            gates.extend_from_slice(&inverse);
            gates.extend_from_slice(&base);
        }
        Self {
            qubits: self.qubits,
            gates,
            fold_count: n,
        }
    }

    /// Dense unitary of the whole circuit, built by multiplying embedded gate
    /// matrices. Intended for small registers.
    pub fn unitary(&self) -> ComplexMatrix {
        self.gates
            .iter()
            .fold(ComplexMatrix::identity(1 << self.qubits), |acc, g| {
                g.embedded_matrix(self.qubits).matmul(&acc)
            })
    }

    pub fn to_record(&self) -> CircuitRecord {
        CircuitRecord {
            qubits: self.qubits,
            gates: self
                .gates
                .iter()
                .map(|g| GateRecord {
                    name: g.kind.name().to_string(),
                    targets: g.targets.clone(),
                    angle: g.kind.angle(),
                })
                .collect(),
            fold_count: self.fold_count,
        }
    }

    pub fn from_record(rec: &CircuitRecord) -> Result<Self> {
        let gates = rec
            .gates
            .iter()
            .map(|g| Gate::new(GateKind::from_name(&g.name, g.angle)?, g.targets.clone()))
            .collect::<Result<Vec<_>>>()?;
        let mut c = Self::from_gates(rec.qubits, gates)?;
        if c.gates.len() % (2 * rec.fold_count + 1) != 0 {
            return Err(Error::InvalidParams(format!(
                "{} gates cannot form {} fold segments",
                c.gates.len(),
                2 * rec.fold_count + 1
            )));
        }
        c.fold_count = rec.fold_count;
        Ok(c)
    }
}

/// JSON form `{"qubits": N, "gates": [{"name", "targets", "angle"}]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CircuitRecord {
    pub qubits: usize,
    pub gates: Vec<GateRecord>,
    #[serde(default, skip_serializing_if = "is_zero")]
    pub fold_count: usize,
}

fn is_zero(n: &usize) -> bool {
    *n == 0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateRecord {
    pub name: String,
    pub targets: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub angle: Option<f64>,
}

/// First-order Trotter circuit for the periodic transverse-field Ising chain
/// `H = −Σ σˣᵢσˣᵢ₊₁ − σˣ_{N−1}σˣ₀ − Γ Σ σᶻᵢ`.
///
/// Each of the `steps` slices applies `exp(i(t/R) σˣσˣ)` on every bond
/// (open bonds first, then the closing bond) followed by
/// `exp(iΓ(t/R) σᶻ)` on every site, as `RXX(−2t/R)` and `RZ(−2Γt/R)`.
pub fn build_ising_trotter(qubits: usize, field: f64, time: f64, steps: usize) -> Result<Circuit> {
    if qubits < 2 {
        return Err(Error::InvalidParams(format!(
            "Ising chain needs N ≥ 2, got {qubits}"
        )));
    }
    if steps < 1 {
        return Err(Error::InvalidParams("Trotter steps must be ≥ 1".into()));
    }
    if !field.is_finite() || !time.is_finite() {
        return Err(Error::InvalidParams("field and time must be finite".into()));
    }
    let dt = time / steps as f64;
    let mut c = Circuit::new(qubits);
    for _ in 0..steps {
        for i in 0..qubits - 1 {
            c.push(Gate::two(GateKind::Rxx(-2.0 * dt), i, i + 1)?)?;
        }
        c.push(Gate::two(GateKind::Rxx(-2.0 * dt), qubits - 1, 0)?)?;
        for i in 0..qubits {
            c.push(Gate::one(GateKind::Rz(-2.0 * field * dt), i)?)?;
        }
    }
    Ok(c)
}

/// Number of angles consumed by [`build_su2_ansatz`].
pub fn su2_angle_count(qubits: usize, layers: usize) -> usize {
    2 * qubits * (layers + 1)
}

/// Hardware-efficient SU(2) 2-local ansatz: `layers + 1` rotation blocks
/// (RY on every qubit, then RZ on every qubit) separated by linear
/// nearest-neighbour CNOT ladders.
pub fn build_su2_ansatz(qubits: usize, layers: usize, angles: &[f64]) -> Result<Circuit> {
    let expected = su2_angle_count(qubits, layers);
    if angles.len() != expected {
        return Err(Error::AngleCountMismatch {
            expected,
            found: angles.len(),
        });
    }
    let mut c = Circuit::new(qubits);
    let mut it = angles.iter().copied();
    for block in 0..=layers {
        for q in 0..qubits {
            c.push(Gate::one(GateKind::Ry(it.next().unwrap()), q)?)?;
        }
        for q in 0..qubits {
            c.push(Gate::one(GateKind::Rz(it.next().unwrap()), q)?)?;
        }
        if block < layers {
            for q in 0..qubits.saturating_sub(1) {
                c.push(Gate::two(GateKind::Cnot, q, q + 1)?)?;
            }
        }
    }
    Ok(c)
}

/// Random circuit over the full gate set, for property tests and fuzzing.
pub fn random_circuit<R: Rng + ?Sized>(qubits: usize, depth: usize, rng: &mut R) -> Circuit {
    let mut c = Circuit::new(qubits);
    for _ in 0..depth {
        let angle = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
        let two_qubit = qubits >= 2 && rng.random_bool(0.35);
        let gate = if two_qubit {
            let a = rng.random_range(0..qubits);
            let mut b = rng.random_range(0..qubits - 1);
            if b >= a {
                b += 1;
            }
            let kind = match rng.random_range(0..3) {
                0 => GateKind::Rxx(angle),
                1 => GateKind::Rzz(angle),
                _ => GateKind::Cnot,
            };
            Gate::two(kind, a, b)
        } else {
            let kind = match rng.random_range(0..6) {
                0 => GateKind::H,
                1 => GateKind::X,
                2 => GateKind::Y,
                3 => GateKind::Rz(angle),
                4 => GateKind::Ry(angle),
                _ => GateKind::Rx(angle),
            };
            Gate::one(kind, rng.random_range(0..qubits))
        };
        c.push(gate.expect("random gate is valid"))
            .expect("random gate fits");
    }
    c
}
