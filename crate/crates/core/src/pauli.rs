//! Pauli operators and Pauli strings.
//!
//! Qubit `q` of an `n`-qubit register is the tensor factor at position `q`
//! (qubit 0 leftmost), i.e. bit `n - 1 - q` of a basis-state index. The
//! Pauli basis is ordered `I, X, Y, Z` per qubit with qubit 0 most
//! significant: `II, IX, IY, IZ, XI, …, ZZ`.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{ComplexMatrix, C0, C1, CI};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Pauli {
    I,
    X,
    Y,
    Z,
}

impl Pauli {
    pub const ALL: [Pauli; 4] = [Pauli::I, Pauli::X, Pauli::Y, Pauli::Z];

    pub fn from_index(i: usize) -> Self {
        Self::ALL[i & 3]
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn matrix(self) -> ComplexMatrix {
        let data = match self {
            Pauli::I => vec![C1, C0, C0, C1],
            Pauli::X => vec![C0, C1, C1, C0],
            Pauli::Y => vec![C0, -CI, CI, C0],
            Pauli::Z => vec![C1, C0, C0, -C1],
        };
        ComplexMatrix::from_vec(2, data).expect("static Pauli matrix")
    }

    /// True when the two single-qubit Paulis anticommute.
    pub fn anticommutes(self, other: Pauli) -> bool {
        self != Pauli::I && other != Pauli::I && self != other
    }

    pub fn as_char(self) -> char {
        match self {
            Pauli::I => 'I',
            Pauli::X => 'X',
            Pauli::Y => 'Y',
            Pauli::Z => 'Z',
        }
    }

    pub fn from_char(c: char) -> Result<Self> {
        match c.to_ascii_uppercase() {
            'I' => Ok(Pauli::I),
            'X' => Ok(Pauli::X),
            'Y' => Ok(Pauli::Y),
            'Z' => Ok(Pauli::Z),
            other => Err(Error::InvalidParams(format!(
                "'{other}' is not a Pauli letter"
            ))),
        }
    }
}

/// A weighted tensor product of single-qubit Paulis.
#[derive(Debug, Clone, PartialEq)]
pub struct PauliString {
    letters: Vec<Pauli>,
    coeff: f64,
}

impl PauliString {
    pub fn new(letters: Vec<Pauli>, coeff: f64) -> Result<Self> {
        if letters.is_empty() {
            return Err(Error::InvalidParams("empty Pauli string".into()));
        }
        if !coeff.is_finite() {
            return Err(Error::InvalidParams("non-finite Pauli coefficient".into()));
        }
        Ok(Self { letters, coeff })
    }

    pub fn parse(label: &str, coeff: f64) -> Result<Self> {
        let letters = label
            .chars()
            .map(Pauli::from_char)
            .collect::<Result<Vec<_>>>()?;
        Self::new(letters, coeff)
    }

    /// Single-letter string: `p` on qubit `q` of an `n`-qubit register.
    pub fn single(n: usize, q: usize, p: Pauli, coeff: f64) -> Self {
        let mut letters = vec![Pauli::I; n];
        letters[q] = p;
        Self { letters, coeff }
    }

    /// Element `index` of the lexicographically ordered `n`-qubit Pauli basis.
    pub fn basis_element(n: usize, index: usize) -> Self {
        let letters = (0..n)
            .map(|q| Pauli::from_index(index >> (2 * (n - 1 - q))))
            .collect();
        Self {
            letters,
            coeff: 1.0,
        }
    }

    pub fn qubits(&self) -> usize {
        self.letters.len()
    }

    pub fn letters(&self) -> &[Pauli] {
        &self.letters
    }

    pub fn coeff(&self) -> f64 {
        self.coeff
    }

    pub fn with_coeff(&self, coeff: f64) -> Self {
        Self {
            letters: self.letters.clone(),
            coeff,
        }
    }

    pub fn label(&self) -> String {
        self.letters.iter().map(|p| p.as_char()).collect()
    }

    pub fn is_identity(&self) -> bool {
        self.letters.iter().all(|&p| p == Pauli::I)
    }

    /// Position in the lexicographic Pauli basis.
    pub fn basis_index(&self) -> usize {
        self.letters.iter().fold(0, |acc, p| acc * 4 + p.index())
    }

    /// Bit mask of qubits carrying X or Y (the bit-flip pattern).
    pub fn x_mask(&self) -> usize {
        self.mask(|p| matches!(p, Pauli::X | Pauli::Y))
    }

    /// Bit mask of qubits carrying Z or Y (the phase pattern).
    pub fn z_mask(&self) -> usize {
        self.mask(|p| matches!(p, Pauli::Z | Pauli::Y))
    }

    /// Bit mask of qubits carrying any non-identity letter.
    pub fn support_mask(&self) -> usize {
        self.mask(|p| p != Pauli::I)
    }

    fn mask(&self, pred: impl Fn(Pauli) -> bool) -> usize {
        let n = self.letters.len();
        self.letters
            .iter()
            .enumerate()
            .filter(|(_, &p)| pred(p))
            .fold(0, |m, (q, _)| m | (1 << (n - 1 - q)))
    }

    pub fn y_count(&self) -> usize {
        self.letters.iter().filter(|&&p| p == Pauli::Y).count()
    }

    pub fn commutes_with(&self, other: &PauliString) -> bool {
        let anti = self
            .letters
            .iter()
            .zip(&other.letters)
            .filter(|(a, b)| a.anticommutes(**b))
            .count();
        anti % 2 == 0
    }

    /// Unweighted dense matrix of the string.
    pub fn matrix(&self) -> ComplexMatrix {
        let mut m = self.letters[0].matrix();
        for p in &self.letters[1..] {
            m = m.kron(&p.matrix());
        }
        m
    }

    /// `Tr[P ρ]` for the unweighted string, in `O(dim)`.
    ///
    /// `P|k⟩ = φ(k)|k ⊕ x⟩` with `φ(k) = i^{#Y} (−1)^{|k ∧ z|}`, so
    /// `Tr[Pρ] = Σ_k φ(k) ρ[k, k ⊕ x]`.
    pub fn trace_with(&self, rho: &ComplexMatrix) -> Complex64 {
        let dim = rho.dim();
        assert_eq!(dim, 1 << self.qubits(), "Pauli string width mismatch");
        let (x, z) = (self.x_mask(), self.z_mask());
        let data = rho.data();
        let mut acc = C0;
        for k in 0..dim {
            let v = data[k * dim + (k ^ x)];
            if (k & z).count_ones() % 2 == 0 {
                acc += v;
            } else {
                acc -= v;
            }
        }
        acc * CI.powu(self.y_count() as u32)
    }
}

impl fmt::Display for PauliString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}*{}", self.coeff, self.label())
    }
}

impl FromStr for PauliString {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Self::parse(s, 1.0)
    }
}

/// Labels of the `n`-qubit Pauli basis in lexicographic order.
pub fn basis_labels(n: usize) -> Vec<String> {
    (0..1 << (2 * n))
        .map(|i| PauliString::basis_element(n, i).label())
        .collect()
}
