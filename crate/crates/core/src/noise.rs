//! Noise channels and the per-gate attachment policy.
//!
//! Every supported noise kind is a Pauli channel, so specs are expanded to a
//! probability vector over the lexicographic Pauli basis and turned into
//! Kraus form from there.

use std::io::Read;

use serde::{Deserialize, Serialize};

use crate::channel::Channel;
use crate::circuit::{Circuit, Gate};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NoiseSpec {
    Depolarizing { omega: f64 },
    Dephasing { p: f64 },
    MixedPauli { p_x: f64, p_y: f64, p_z: f64 },
    PauliLindblad { r_x: f64, r_y: f64, r_z: f64 },
}

fn check_prob(name: &str, p: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidProbability(format!("{name} = {p}")));
    }
    Ok(())
}

impl NoiseSpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            NoiseSpec::Depolarizing { omega } => check_prob("omega", omega),
            NoiseSpec::Dephasing { p } => check_prob("p", p),
            NoiseSpec::MixedPauli { p_x, p_y, p_z } => {
                check_prob("p_x", p_x)?;
                check_prob("p_y", p_y)?;
                check_prob("p_z", p_z)?;
                if p_x + p_y + p_z > 1.0 + 1e-12 {
                    return Err(Error::InvalidProbability(format!(
                        "p_x + p_y + p_z = {} exceeds 1",
                        p_x + p_y + p_z
                    )));
                }
                Ok(())
            }
            NoiseSpec::PauliLindblad { r_x, r_y, r_z } => {
                if [r_x, r_y, r_z].iter().any(|r| !r.is_finite() || *r < 0.0) {
                    return Err(Error::InvalidProbability(format!(
                        "Lindblad rates must be finite and nonnegative: ({r_x}, {r_y}, {r_z})"
                    )));
                }
                Ok(())
            }
        }
    }

    /// True when the spec is exactly the identity channel.
    pub fn is_trivial(&self) -> bool {
        match *self {
            NoiseSpec::Depolarizing { omega } => omega == 0.0,
            NoiseSpec::Dephasing { p } => p == 0.0,
            NoiseSpec::MixedPauli { p_x, p_y, p_z } => p_x == 0.0 && p_y == 0.0 && p_z == 0.0,
            NoiseSpec::PauliLindblad { r_x, r_y, r_z } => r_x == 0.0 && r_y == 0.0 && r_z == 0.0,
        }
    }

    /// Single-wire Pauli probabilities `[p_I, p_X, p_Y, p_Z]`.
    fn single_wire_probs(&self) -> [f64; 4] {
        match *self {
            NoiseSpec::Depolarizing { omega } => {
                [1.0 - 0.75 * omega, omega / 4.0, omega / 4.0, omega / 4.0]
            }
            NoiseSpec::Dephasing { p } => [1.0 - p, 0.0, 0.0, p],
            NoiseSpec::MixedPauli { p_x, p_y, p_z } => [1.0 - p_x - p_y - p_z, p_x, p_y, p_z],
            NoiseSpec::PauliLindblad { r_x, r_y, r_z } => {
                // PTM diagonal f_Q = exp(−2 Σ_{P anticommuting with Q} r_P),
                // inverted through the Pauli character table.
                let f_x = (-2.0 * (r_y + r_z)).exp();
                let f_y = (-2.0 * (r_x + r_z)).exp();
                let f_z = (-2.0 * (r_x + r_y)).exp();
                [
                    (1.0 + f_x + f_y + f_z) / 4.0,
                    (1.0 + f_x - f_y - f_z) / 4.0,
                    (1.0 - f_x + f_y - f_z) / 4.0,
                    (1.0 - f_x - f_y + f_z) / 4.0,
                ]
            }
        }
    }

    /// Pauli-basis probabilities of the channel on `qubits` (1 or 2) wires.
    pub fn pauli_probs(&self, qubits: usize) -> Result<Vec<f64>> {
        self.validate()?;
        match qubits {
            1 => Ok(self.single_wire_probs().to_vec()),
            2 => Ok(match *self {
                NoiseSpec::Depolarizing { omega } => {
                    let mut p = vec![omega / 16.0; 16];
                    p[0] += 1.0 - omega;
                    p
                }
                _ => {
                    let w = self.single_wire_probs();
                    (0..16).map(|i| w[i / 4] * w[i % 4]).collect()
                }
            }),
            _ => Err(Error::InvalidParams(format!(
                "gate noise is defined on 1 or 2 qubits, got {qubits}"
            ))),
        }
    }

    pub fn channel_for(&self, qubits: usize) -> Result<Channel> {
        Channel::pauli_channel(qubits, &self.pauli_probs(qubits)?)
    }
}

/// Noise attached after every gate, chosen by gate arity.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "NoiseModelRecord")]
pub struct NoiseModel {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub one_qubit: Option<NoiseSpec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub two_qubit: Option<NoiseSpec>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct NoiseModelRecord {
    one_qubit: Option<NoiseSpec>,
    two_qubit: Option<NoiseSpec>,
    both: Option<NoiseSpec>,
}

impl TryFrom<NoiseModelRecord> for NoiseModel {
    type Error = Error;
    fn try_from(r: NoiseModelRecord) -> Result<Self> {
        let m = match (r.both, r.one_qubit, r.two_qubit) {
            (Some(_), Some(_), _) | (Some(_), _, Some(_)) => {
                return Err(Error::InvalidParams(
                    "'both' cannot be combined with 'one_qubit' or 'two_qubit'".into(),
                ))
            }
            (Some(b), None, None) => NoiseModel::uniform(b),
            (None, one_qubit, two_qubit) => NoiseModel {
                one_qubit,
                two_qubit,
            },
        };
        m.validate()?;
        Ok(m)
    }
}

impl NoiseModel {
    pub fn noiseless() -> Self {
        Self::default()
    }

    pub fn uniform(spec: NoiseSpec) -> Self {
        Self {
            one_qubit: Some(spec),
            two_qubit: Some(spec),
        }
    }

    pub fn depolarizing(omega: f64) -> Self {
        Self::uniform(NoiseSpec::Depolarizing { omega })
    }

    pub fn validate(&self) -> Result<()> {
        for s in self.one_qubit.iter().chain(&self.two_qubit) {
            s.validate()?;
        }
        Ok(())
    }

    pub fn is_noiseless(&self) -> bool {
        self.one_qubit
            .iter()
            .chain(&self.two_qubit)
            .all(NoiseSpec::is_trivial)
    }

    pub fn spec_for_arity(&self, arity: usize) -> Option<&NoiseSpec> {
        match arity {
            1 => self.one_qubit.as_ref(),
            2 => self.two_qubit.as_ref(),
            _ => None,
        }
    }

    /// Channel following a gate of the given arity, if any.
    pub fn channel_for_arity(&self, arity: usize) -> Result<Option<Channel>> {
        self.spec_for_arity(arity)
            .map(|s| s.channel_for(arity))
            .transpose()
    }
}

/// A gate or a noise channel acting on a list of qubits.
#[derive(Debug, Clone, PartialEq)]
pub enum Event {
    Gate(Gate),
    Noise {
        targets: Vec<usize>,
        channel: Channel,
    },
}

/// Flat event list produced by attaching noise to a circuit.
#[derive(Debug, Clone, PartialEq)]
pub struct NoisyCircuit {
    pub qubits: usize,
    pub events: Vec<Event>,
}

impl NoisyCircuit {
    pub fn noise_count(&self) -> usize {
        self.events
            .iter()
            .filter(|e| matches!(e, Event::Noise { .. }))
            .count()
    }

    pub fn gate_count(&self) -> usize {
        self.events.len() - self.noise_count()
    }
}

/// Policy turning an ideal circuit into a noisy event list.
pub trait NoiseAttachment {
    fn attach(&self, circuit: &Circuit) -> Result<NoisyCircuit>;
}

impl NoiseAttachment for NoiseModel {
    fn attach(&self, circuit: &Circuit) -> Result<NoisyCircuit> {
        let one = self.channel_for_arity(1)?;
        let two = self.channel_for_arity(2)?;
        let mut events = Vec::with_capacity(2 * circuit.len());
        for g in circuit.gates() {
            let ch = if g.arity() == 1 { &one } else { &two };
            events.push(Event::Gate(g.clone()));
            if let Some(ch) = ch {
                events.push(Event::Noise {
                    targets: g.targets.clone(),
                    channel: ch.clone(),
                });
            }
        }
        Ok(NoisyCircuit {
            qubits: circuit.qubits(),
            events,
        })
    }
}

/// Applies one channel on the whole register after every fold segment, so a
/// circuit at noise scale `λ` receives exactly `λ` applications.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentNoise {
    pub channel: Channel,
}

impl SegmentNoise {
    pub fn depolarizing(qubits: usize, omega: f64) -> Result<Self> {
        Ok(Self {
            channel: Channel::depolarizing(qubits, omega)?,
        })
    }
}

impl NoiseAttachment for SegmentNoise {
    fn attach(&self, circuit: &Circuit) -> Result<NoisyCircuit> {
        if self.channel.qubits() != circuit.qubits() {
            return Err(Error::WidthMismatch {
                circuit: circuit.qubits(),
                state: self.channel.qubits(),
            });
        }
        let targets: Vec<usize> = (0..circuit.qubits()).collect();
        let mut events = Vec::new();
        for seg in circuit.segments() {
            events.extend(seg.iter().cloned().map(Event::Gate));
            events.push(Event::Noise {
                targets: targets.clone(),
                channel: self.channel.clone(),
            });
        }
        if circuit.is_empty() {
            events.push(Event::Noise {
                targets,
                channel: self.channel.clone(),
            });
        }
        Ok(NoisyCircuit {
            qubits: circuit.qubits(),
            events,
        })
    }
}

/// One row of a bundled probability/rate table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub p_x: f64,
    pub p_y: f64,
    pub p_z: f64,
    pub total: f64,
}

impl TableRow {
    pub fn as_mixed_pauli(&self) -> NoiseSpec {
        NoiseSpec::MixedPauli {
            p_x: self.p_x,
            p_y: self.p_y,
            p_z: self.p_z,
        }
    }

    pub fn as_lindblad(&self) -> NoiseSpec {
        NoiseSpec::PauliLindblad {
            r_x: self.p_x,
            r_y: self.p_y,
            r_z: self.p_z,
        }
    }
}

/// Parses a `p_x,p_y,p_z,total` CSV table.
pub fn read_table<R: Read>(reader: R) -> Result<Vec<TableRow>> {
    let mut rdr = csv::Reader::from_reader(reader);
    rdr.deserialize()
        .enumerate()
        .map(|(i, row)| row.map_err(|e| Error::InvalidParams(format!("table row {}: {e}", i + 1))))
        .collect()
}
