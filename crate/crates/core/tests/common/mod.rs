#![allow(dead_code)]

use nalgebra::DMatrix;
use num_complex::Complex64;
use pie_core::channel::Channel;
use pie_core::linalg::ComplexMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

pub fn gaussian_matrix<R: Rng>(dim: usize, rng: &mut R) -> DMatrix<Complex64> {
    DMatrix::from_fn(dim, dim, |_, _| {
        Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
    })
}

pub fn from_na(m: &DMatrix<Complex64>) -> ComplexMatrix {
    ComplexMatrix::from_fn(m.nrows(), |r, c| m[(r, c)])
}

/// Haar-ish random unitary from the QR decomposition of a Ginibre matrix.
pub fn random_unitary<R: Rng>(dim: usize, rng: &mut R) -> ComplexMatrix {
    let qr = gaussian_matrix(dim, rng).qr();
    let (q, r) = (qr.q(), qr.r());
    let phases = DMatrix::from_diagonal(&r.diagonal().map(|x| x / x.norm()));
    from_na(&(q * phases))
}

/// Random CPTP map with `env` Kraus operators via a Stinespring dilation.
pub fn random_channel<R: Rng>(qubits: usize, env: usize, rng: &mut R) -> Channel {
    let d = 1 << qubits;
    let v = random_unitary(d * env, rng);
    let ops = (0..env)
        .map(|a| ComplexMatrix::from_fn(d, |i, j| v[(i * env + a, j * env)]))
        .collect();
    Channel::kraus(ops).expect("Stinespring Kraus set is complete")
}

/// Random density matrix `G G† / Tr`.
pub fn random_density<R: Rng>(dim: usize, rng: &mut R) -> ComplexMatrix {
    let g = from_na(&gaussian_matrix(dim, rng));
    let rho = g.matmul(&g.adjoint());
    let tr = rho.trace().re;
    rho.scale_real(1.0 / tr)
}

/// `exp(A)` by scaling and squaring with a Taylor series.
pub fn expm(a: &ComplexMatrix) -> ComplexMatrix {
    let norm = a.frobenius_norm();
    let squarings = if norm > 0.5 {
        (norm / 0.5).log2().ceil() as u32
    } else {
        0
    };
    let scaled = a.scale_real(1.0 / f64::from(1u32 << squarings));
    let mut term = ComplexMatrix::identity(a.dim());
    let mut sum = term.clone();
    for k in 1..30 {
        term = term.matmul(&scaled).scale_real(1.0 / k as f64);
        sum = &sum + &term;
    }
    for _ in 0..squarings {
        sum = sum.matmul(&sum);
    }
    sum
}

/// Dense transverse-field Ising Hamiltonian on a ring.
pub fn ising_hamiltonian(n: usize, field: f64) -> ComplexMatrix {
    use pie_core::pauli::{Pauli, PauliString};
    let d = 1 << n;
    let mut h = ComplexMatrix::zeros(d);
    for i in 0..n {
        let mut letters = vec![Pauli::I; n];
        letters[i] = Pauli::X;
        letters[(i + 1) % n] = Pauli::X;
        h = &h - &PauliString::new(letters, 1.0).unwrap().matrix();
        h = &h
            - &PauliString::single(n, i, Pauli::Z, 1.0)
                .matrix()
                .scale_real(field);
    }
    h
}
