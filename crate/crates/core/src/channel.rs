//! Quantum channels in unitary, Kraus, Pauli-transfer-matrix and Choi form.
//!
//! Conventions:
//! - Choi matrices use the unnormalized maximally entangled state,
//!   `J = Σ_ij |i⟩⟨j| ⊗ Λ(|i⟩⟨j|)`, so `Tr J = 2^n` for trace-preserving maps
//!   and the reference system is the first tensor factor.
//! - PTM entries are `R_ij = Tr[P_i Λ(P_j)] / 2^n` over the lexicographic
//!   Pauli basis of [`crate::pauli`].
//! - Superoperators act on row-major vectorized density matrices:
//!   `vec(KρK†) = (K ⊗ K̄) vec(ρ)`.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::{kron, ComplexMatrix, C0};
use crate::pauli::PauliString;

pub type RealMatrix = DMatrix<f64>;

/// Tolerance for Kraus completeness, Choi trace conditions and PTM
/// trace preservation.
pub const CHANNEL_TOL: f64 = 1e-10;

/// Floor on the smallest Choi eigenvalue accepted as positive semidefinite.
pub const PSD_FLOOR: f64 = -1e-10;

#[derive(Debug, Clone, PartialEq)]
pub enum ChannelRepr {
    Unitary(ComplexMatrix),
    Kraus(Vec<ComplexMatrix>),
    Ptm(RealMatrix),
    Choi(ComplexMatrix),
    /// Probabilities of `ρ ↦ Σ_P p_P PρP` over the lexicographic basis.
    Pauli(Vec<f64>),
}

/// A completely positive trace-preserving map on `qubits` qubits.
#[derive(Debug, Clone, PartialEq)]
pub struct Channel {
    qubits: usize,
    repr: ChannelRepr,
}

fn qubits_for_dim(dim: usize) -> Result<usize> {
    if dim == 0 || !dim.is_power_of_two() {
        return Err(Error::InvalidChannel(format!(
            "dimension {dim} is not a power of two"
        )));
    }
    Ok(dim.trailing_zeros() as usize)
}

impl Channel {
    pub fn identity(qubits: usize) -> Self {
        Self {
            qubits,
            repr: ChannelRepr::Unitary(ComplexMatrix::identity(1 << qubits)),
        }
    }

    pub fn unitary(u: ComplexMatrix) -> Result<Self> {
        let qubits = qubits_for_dim(u.dim())?;
        let defect = u
            .adjoint()
            .matmul(&u)
            .max_abs_diff(&ComplexMatrix::identity(u.dim()));
        if defect > CHANNEL_TOL {
            return Err(Error::InvalidChannel(format!(
                "matrix is not unitary (defect {defect:.3e})"
            )));
        }
        Ok(Self {
            qubits,
            repr: ChannelRepr::Unitary(u),
        })
    }

    pub fn kraus(ops: Vec<ComplexMatrix>) -> Result<Self> {
        let first = ops
            .first()
            .ok_or_else(|| Error::InvalidChannel("empty Kraus list".into()))?;
        let dim = first.dim();
        let qubits = qubits_for_dim(dim)?;
        let mut sum = ComplexMatrix::zeros(dim);
        for k in &ops {
            if k.dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: k.dim(),
                });
            }
            sum = &sum + &k.adjoint().matmul(k);
        }
        let defect = sum.max_abs_diff(&ComplexMatrix::identity(dim));
        if defect > CHANNEL_TOL {
            return Err(Error::InvalidChannel(format!(
                "Kraus operators are not complete (defect {defect:.3e})"
            )));
        }
        Ok(Self {
            qubits,
            repr: ChannelRepr::Kraus(ops),
        })
    }

    pub fn ptm(r: RealMatrix) -> Result<Self> {
        if r.nrows() != r.ncols() {
            return Err(Error::InvalidChannel("PTM is not square".into()));
        }
        let dim = r.nrows();
        let qubits = qubits_for_dim(dim)? / 2;
        if 1 << (2 * qubits) != dim {
            return Err(Error::InvalidChannel(format!(
                "PTM dimension {dim} is not a power of four"
            )));
        }
        if r.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidChannel("non-finite PTM entry".into()));
        }
        let tp_defect = (0..dim)
            .map(|j| (r[(0, j)] - if j == 0 { 1.0 } else { 0.0 }).abs())
            .fold(0.0, f64::max);
        if tp_defect > CHANNEL_TOL {
            return Err(Error::InvalidChannel(format!(
                "PTM first row is not (1, 0, …, 0) (defect {tp_defect:.3e})"
            )));
        }
        Ok(Self {
            qubits,
            repr: ChannelRepr::Ptm(r),
        })
    }

    pub fn choi(j: ComplexMatrix) -> Result<Self> {
        let qubits = qubits_for_dim(j.dim())? / 2;
        let d = 1usize << qubits;
        if d * d != j.dim() {
            return Err(Error::InvalidChannel(format!(
                "Choi dimension {} is not a power of four",
                j.dim()
            )));
        }
        let min = crate::linalg::min_eigenvalue(&j)?;
        if min < PSD_FLOOR {
            return Err(Error::InvalidChannel(format!(
                "Choi matrix is not PSD (min eigenvalue {min:.3e})"
            )));
        }
        let tp_defect = j
            .partial_trace_second(d)
            .max_abs_diff(&ComplexMatrix::identity(d));
        if tp_defect > CHANNEL_TOL {
            return Err(Error::InvalidChannel(format!(
                "Choi output trace is not the identity (defect {tp_defect:.3e})"
            )));
        }
        Ok(Self {
            qubits,
            repr: ChannelRepr::Choi(j),
        })
    }

    /// Pauli channel `ρ ↦ Σ_P p_P PρP` over the lexicographic `n`-qubit basis.
    pub fn pauli_channel(qubits: usize, probs: &[f64]) -> Result<Self> {
        if probs.len() != 1 << (2 * qubits) {
            return Err(Error::DimensionMismatch {
                expected: 1 << (2 * qubits),
                found: probs.len(),
            });
        }
        if probs.iter().any(|&p| !(p >= -1e-15)) {
            return Err(Error::InvalidProbability(format!("{probs:?}")));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > CHANNEL_TOL {
            return Err(Error::InvalidChannel(format!(
                "Pauli probabilities sum to {total}"
            )));
        }
        Ok(Self {
            qubits,
            repr: ChannelRepr::Pauli(probs.iter().map(|&p| p.max(0.0)).collect()),
        })
    }

    /// `ρ ↦ (1−ω)ρ + ω Tr[ρ] I/2^n`.
    pub fn depolarizing(qubits: usize, omega: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&omega) {
            return Err(Error::InvalidProbability(format!("omega = {omega}")));
        }
        let n_paulis = 1usize << (2 * qubits);
        let mut probs = vec![omega / n_paulis as f64; n_paulis];
        probs[0] += 1.0 - omega;
        Self::pauli_channel(qubits, &probs)
    }

    pub fn qubits(&self) -> usize {
        self.qubits
    }

    pub fn dim(&self) -> usize {
        1 << self.qubits
    }

    pub fn repr(&self) -> &ChannelRepr {
        &self.repr
    }

    pub fn pauli_probs(&self) -> Option<&[f64]> {
        match &self.repr {
            ChannelRepr::Pauli(p) => Some(p),
            _ => None,
        }
    }

    /// Applies the channel to an arbitrary (not necessarily positive)
    /// operator on its input space.
    pub fn apply(&self, x: &ComplexMatrix) -> ComplexMatrix {
        assert_eq!(x.dim(), self.dim(), "channel input dimension mismatch");
        let d = self.dim();
        match &self.repr {
            ChannelRepr::Unitary(u) => x.conjugate_by(u),
            ChannelRepr::Kraus(ops) => ops
                .iter()
                .fold(ComplexMatrix::zeros(d), |acc, k| &acc + &x.conjugate_by(k)),
            ChannelRepr::Pauli(probs) => probs.iter().enumerate().filter(|(_, &p)| p > 0.0).fold(
                ComplexMatrix::zeros(d),
                |acc, (i, &p)| {
                    let m = PauliString::basis_element(self.qubits, i).matrix();
                    &acc + &x.conjugate_by(&m).scale_real(p)
                },
            ),
            ChannelRepr::Ptm(r) => {
                let n = r.nrows();
                let coords: Vec<Complex64> = (0..n)
                    .map(|j| PauliString::basis_element(self.qubits, j).trace_with(x))
                    .collect();
                let mut out = ComplexMatrix::zeros(d);
                for i in 0..n {
                    let mut c = C0;
                    for (j, &xj) in coords.iter().enumerate() {
                        c += xj * r[(i, j)];
                    }
                    if c != C0 {
                        let p = PauliString::basis_element(self.qubits, i).matrix();
                        out = &out + &p.scale(c / d as f64);
                    }
                }
                out
            }
            ChannelRepr::Choi(j) => {
                // Λ(X) = Σ_ik X[i,k] Λ(|i⟩⟨k|)
                ComplexMatrix::from_fn(d, |a, b| {
                    let mut acc = C0;
                    for i in 0..d {
                        for k in 0..d {
                            acc += x[(i, k)] * j[(i * d + a, k * d + b)];
                        }
                    }
                    acc
                })
            }
        }
    }

    /// Row-major superoperator `S` with `vec(Λ(ρ)) = S vec(ρ)`.
    pub fn superoperator(&self) -> ComplexMatrix {
        match &self.repr {
            ChannelRepr::Unitary(u) => kron(u, &u.conj()),
            ChannelRepr::Kraus(_) | ChannelRepr::Pauli(_) => {
                let d2 = self.dim() * self.dim();
                self.to_kraus()
                    .iter()
                    .fold(ComplexMatrix::zeros(d2), |acc, k| {
                        &acc + &kron(k, &k.conj())
                    })
            }
            _ => {
                let d = self.dim();
                let j = choi_of(self);
                ComplexMatrix::from_fn(d * d, |r, c| {
                    let (a, b) = (r / d, r % d);
                    let (i, jj) = (c / d, c % d);
                    j[(i * d + a, jj * d + b)]
                })
            }
        }
    }

    /// Kraus operators; for PTM/Choi forms these come from the Choi
    /// eigendecomposition.
    pub fn to_kraus(&self) -> Vec<ComplexMatrix> {
        match &self.repr {
            ChannelRepr::Unitary(u) => vec![u.clone()],
            ChannelRepr::Kraus(ops) => ops.clone(),
            ChannelRepr::Pauli(probs) => probs
                .iter()
                .enumerate()
                .filter(|(_, &p)| p > 0.0)
                .map(|(i, &p)| {
                    PauliString::basis_element(self.qubits, i)
                        .matrix()
                        .scale_real(p.sqrt())
                })
                .collect(),
            _ => kraus_from_choi(&choi_of(self), self.dim()),
        }
    }
}

fn kraus_from_choi(j: &ComplexMatrix, d: usize) -> Vec<ComplexMatrix> {
    let eig = j.hermitian_part().to_nalgebra().symmetric_eigen();
    let mut ops = Vec::new();
    for (k, &lambda) in eig.eigenvalues.iter().enumerate() {
        if lambda <= 1e-12 {
            continue;
        }
        let v = eig.eigenvectors.column(k);
        let scale = lambda.sqrt();
        // J = Σ_k |v_k⟩⟨v_k| with v_k[i·d + a] = K_k[a, i]
        ops.push(ComplexMatrix::from_fn(d, |a, i| v[i * d + a] * scale));
    }
    ops
}

/// Choi matrix `Σ_ij |i⟩⟨j| ⊗ Λ(|i⟩⟨j|)`.
pub fn choi_of(ch: &Channel) -> ComplexMatrix {
    if let ChannelRepr::Choi(j) = &ch.repr {
        return j.clone();
    }
    let d = ch.dim();
    let mut j = ComplexMatrix::zeros(d * d);
    let mut unit = ComplexMatrix::zeros(d);
    for i in 0..d {
        for k in 0..d {
            unit[(i, k)] = Complex64::new(1.0, 0.0);
            let out = ch.apply(&unit);
            unit[(i, k)] = C0;
            for a in 0..d {
                for b in 0..d {
                    j[(i * d + a, k * d + b)] = out[(a, b)];
                }
            }
        }
    }
    j
}

/// Pauli transfer matrix `R_ij = Tr[P_i Λ(P_j)] / 2^n`.
pub fn ptm_of(ch: &Channel) -> RealMatrix {
    match &ch.repr {
        ChannelRepr::Ptm(r) => return r.clone(),
        ChannelRepr::Pauli(p) => {
            let f = pauli_fidelities(p);
            return RealMatrix::from_diagonal(&nalgebra::DVector::from_vec(f));
        }
        _ => {}
    }
    let n = ch.qubits;
    let d = ch.dim() as f64;
    let size = 1 << (2 * n);
    let paulis: Vec<PauliString> = (0..size)
        .map(|i| PauliString::basis_element(n, i))
        .collect();
    let mut r = RealMatrix::zeros(size, size);
    for (j, pj) in paulis.iter().enumerate() {
        let out = ch.apply(&pj.matrix());
        for (i, pi) in paulis.iter().enumerate() {
            r[(i, j)] = pi.trace_with(&out).re / d;
        }
    }
    r
}

/// Applies the single-qubit character table `[[1,1,1,1],[1,1,−1,−1],
/// [1,−1,1,−1],[1,−1,−1,1]]` to every base-4 digit of `v`.
fn character_transform(v: &mut [f64]) {
    let mut stride = 1;
    while stride < v.len() {
        for base in (0..v.len()).step_by(4 * stride) {
            for i in base..base + stride {
                let (a, b, c, d) = (v[i], v[i + stride], v[i + 2 * stride], v[i + 3 * stride]);
                v[i] = a + b + c + d;
                v[i + stride] = a + b - c - d;
                v[i + 2 * stride] = a - b + c - d;
                v[i + 3 * stride] = a - b - c + d;
            }
        }
        stride *= 4;
    }
}

/// Diagonal PTM entries `f_Q = Σ_P p_P (±1)` of a Pauli channel, with `−1`
/// where `P` and `Q` anticommute.
pub fn pauli_fidelities(probs: &[f64]) -> Vec<f64> {
    let mut f = probs.to_vec();
    character_transform(&mut f);
    f
}

/// Inverse of [`pauli_fidelities`].
pub fn pauli_probs_from_fidelities(fidelities: &[f64]) -> Vec<f64> {
    let mut p = fidelities.to_vec();
    character_transform(&mut p);
    let scale = 1.0 / p.len() as f64;
    p.iter_mut().for_each(|x| *x *= scale);
    p
}

/// `a ∘ b`: applies `b` first, then `a`.
pub fn compose(a: &Channel, b: &Channel) -> Result<Channel> {
    if a.qubits != b.qubits {
        return Err(Error::DimensionMismatch {
            expected: a.qubits,
            found: b.qubits,
        });
    }
    let repr = match (&a.repr, &b.repr) {
        (ChannelRepr::Unitary(ua), ChannelRepr::Unitary(ub)) => ChannelRepr::Unitary(ua.matmul(ub)),
        (ChannelRepr::Pauli(pa), ChannelRepr::Pauli(pb)) => {
            let f: Vec<f64> = pauli_fidelities(pa)
                .iter()
                .zip(pauli_fidelities(pb))
                .map(|(x, y)| x * y)
                .collect();
            ChannelRepr::Pauli(pauli_probs_from_fidelities(&f))
        }
        _ => ChannelRepr::Ptm(ptm_of(a) * ptm_of(b)),
    };
    Ok(Channel {
        qubits: a.qubits,
        repr,
    })
}

/// Tensor product channel `a ⊗ b` (a on the leading qubits).
pub fn tensor(a: &Channel, b: &Channel) -> Result<Channel> {
    let repr = match (&a.repr, &b.repr) {
        (ChannelRepr::Unitary(ua), ChannelRepr::Unitary(ub)) => ChannelRepr::Unitary(kron(ua, ub)),
        (ChannelRepr::Pauli(pa), ChannelRepr::Pauli(pb)) => ChannelRepr::Pauli(
            pa.iter()
                .flat_map(|x| pb.iter().map(move |y| x * y))
                .collect(),
        ),
        _ => {
            let (ka, kb) = (a.to_kraus(), b.to_kraus());
            let mut ops = Vec::with_capacity(ka.len() * kb.len());
            for x in &ka {
                for y in &kb {
                    ops.push(kron(x, y));
                }
            }
            ChannelRepr::Kraus(ops)
        }
    };
    Ok(Channel {
        qubits: a.qubits + b.qubits,
        repr,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::min_eigenvalue;
    use crate::pauli::Pauli;

    fn diag(v: &[f64]) -> RealMatrix {
        RealMatrix::from_diagonal(&nalgebra::DVector::from_row_slice(v))
    }

    fn x_gate() -> Channel {
        Channel::unitary(Pauli::X.matrix()).unwrap()
    }

    fn phi_plus(d: usize) -> ComplexMatrix {
        let mut v = vec![C0; d * d];
        for i in 0..d {
            v[i * d + i] = Complex64::new(1.0, 0.0);
        }
        ComplexMatrix::outer(&v, &v)
    }

    #[test]
    fn choi_of_identity_is_phi_plus() {
        let j = choi_of(&Channel::identity(1));
        assert!(j.approx_eq(&phi_plus(2), 1e-15));
        assert!((j.trace().re - 2.0).abs() < 1e-15);
    }

    #[test]
    fn choi_of_depolarizing_entrywise() {
        let w = 0.1;
        let j = choi_of(&Channel::depolarizing(1, w).unwrap());
        let expected =
            &phi_plus(2).scale_real(1.0 - w) + &ComplexMatrix::identity(4).scale_real(w / 2.0);
        assert!(j.approx_eq(&expected, 1e-14));
    }

    #[test]
    fn choi_of_x_unitary_by_conjugation() {
        let ix = kron(&ComplexMatrix::identity(2), &Pauli::X.matrix());
        let expected = phi_plus(2).conjugate_by(&ix);
        assert!(choi_of(&x_gate()).approx_eq(&expected, 1e-15));
    }

    #[test]
    fn ptm_examples() {
        assert!(
            (ptm_of(&Channel::identity(1)) - RealMatrix::identity(4, 4))
                .abs()
                .max()
                < 1e-15
        );
        assert!(
            (ptm_of(&x_gate()) - diag(&[1.0, 1.0, -1.0, -1.0]))
                .abs()
                .max()
                < 1e-15
        );
        let w = 0.1;
        let r = ptm_of(&Channel::depolarizing(1, w).unwrap());
        assert!((r - diag(&[1.0, 1.0 - w, 1.0 - w, 1.0 - w])).abs().max() < 1e-15);
    }

    #[test]
    fn compose_examples() {
        let e = Channel::depolarizing(1, 0.2).unwrap();
        let ei = compose(&e, &Channel::identity(1)).unwrap();
        assert!((ptm_of(&ei) - ptm_of(&e)).abs().max() < 1e-12);

        let xx = compose(&x_gate(), &x_gate()).unwrap();
        assert!((ptm_of(&xx) - RealMatrix::identity(4, 4)).abs().max() < 1e-12);

        let (w1, w2) = (0.1, 0.25);
        let d12 = compose(
            &Channel::depolarizing(1, w1).unwrap(),
            &Channel::depolarizing(1, w2).unwrap(),
        )
        .unwrap();
        let target = Channel::depolarizing(1, 1.0 - (1.0 - w1) * (1.0 - w2)).unwrap();
        assert!((ptm_of(&d12) - ptm_of(&target)).abs().max() < 1e-12);

        assert!(matches!(
            compose(&Channel::identity(1), &Channel::identity(2)),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn representations_agree() {
        let e = Channel::depolarizing(2, 0.3).unwrap();
        let r = Channel::ptm(ptm_of(&e)).unwrap();
        let j = Channel::choi(choi_of(&e)).unwrap();
        let rho = ComplexMatrix::from_fn(4, |a, b| {
            Complex64::new(1.0 / (1 + a + b) as f64, (a as f64 - b as f64) * 0.1)
        });
        let out = e.apply(&rho);
        assert!(r.apply(&rho).approx_eq(&out, 1e-12));
        assert!(j.apply(&rho).approx_eq(&out, 1e-12));
        assert!(choi_of(&r).approx_eq(&choi_of(&e), 1e-12));
    }

    #[test]
    fn choi_is_psd_with_identity_marginal() {
        let e = Channel::depolarizing(1, 0.7).unwrap();
        let j = choi_of(&e);
        assert!(min_eigenvalue(&j).unwrap() >= PSD_FLOOR);
        assert!(j
            .partial_trace_second(2)
            .approx_eq(&ComplexMatrix::identity(2), 1e-12));
    }

    #[test]
    fn invalid_channels_rejected() {
        let not_unitary = ComplexMatrix::from_real(2, &[1.0, 1.0, 0.0, 1.0]);
        assert!(Channel::unitary(not_unitary.clone()).is_err());
        assert!(Channel::kraus(vec![not_unitary]).is_err());
        assert!(Channel::ptm(diag(&[0.5, 1.0, 1.0, 1.0])).is_err());
        assert!(Channel::choi(ComplexMatrix::identity(4).scale_real(-1.0)).is_err());
        assert!(Channel::depolarizing(1, 1.5).is_err());
    }
}
