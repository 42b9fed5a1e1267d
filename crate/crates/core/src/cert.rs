//! Max-relative entropy between an ideal and a noisy channel, and the
//! certification report comparing it with the extrapolation slope.

use serde::{Deserialize, Serialize};

use crate::channel::{choi_of, Channel};
use crate::circuit::Circuit;
use crate::error::{Error, Result};
use crate::linalg::{min_eigenvalue, ComplexMatrix, C1};
use crate::mitigation::{collect, fit_pie, FitOptions, FitResult, Sampling};
use crate::noise::NoiseAttachment;
use crate::simulator::{apply_to_matrix, Observable};

/// Default bisection tolerance on `s`.
pub const DMAX_TOL: f64 = 1e-9;

/// Largest circuit whose channel is reconstructed for direct certification.
pub const DIRECT_MAX_QUBITS: usize = 3;

const FEASIBILITY_FLOOR: f64 = -1e-10;
const S_CAP: f64 = 1e9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Dmax {
    pub s: f64,
    pub d_max_bits: f64,
}

fn feasible(s: f64, j_noisy: &ComplexMatrix, j_ideal: &ComplexMatrix) -> Result<bool> {
    let m = &j_noisy.scale_real(s) - j_ideal;
    Ok(min_eigenvalue(&m)? >= FEASIBILITY_FLOOR)
}

/// Smallest `s ≥ 1` with `s·J_noisy − J_ideal ⪰ 0`, by bisection.
pub fn dmax(ideal: &Channel, noisy: &Channel, tol: f64) -> Result<Dmax> {
    if ideal.qubits() != noisy.qubits() {
        return Err(Error::DimensionMismatch {
            expected: ideal.qubits(),
            found: noisy.qubits(),
        });
    }
    if !(tol > 0.0) {
        return Err(Error::InvalidParams(format!(
            "tolerance must be positive, got {tol}"
        )));
    }
    let (ji, jn) = (choi_of(ideal), choi_of(noisy));
    if feasible(1.0, &jn, &ji)? {
        return Ok(Dmax {
            s: 1.0,
            d_max_bits: 0.0,
        });
    }
    let mut hi = 2.0;
    while !feasible(hi, &jn, &ji)? {
        hi *= 2.0;
        if hi > S_CAP {
            return Err(Error::Infeasible(S_CAP));
        }
    }
    let mut lo = hi / 2.0;
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if feasible(mid, &jn, &ji)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let s = (0.5 * (lo + hi)).max(1.0);
    Ok(Dmax {
        s,
        d_max_bits: s.log2(),
    })
}

/// `s` for global `n`-qubit depolarizing noise against the identity.
pub fn depolarizing_dmax_closed_form(qubits: usize, omega: f64) -> f64 {
    let d2 = (1u64 << (2 * qubits)) as f64;
    d2 / (d2 - (d2 - 1.0) * omega)
}

/// Choi matrix of a circuit with noise attached.
pub fn noisy_circuit_choi<N: NoiseAttachment + ?Sized>(
    circuit: &Circuit,
    noise: &N,
) -> Result<ComplexMatrix> {
    let n = circuit.qubits();
    if n > DIRECT_MAX_QUBITS {
        return Err(Error::TooLarge {
            requested: n,
            cap: DIRECT_MAX_QUBITS,
        });
    }
    let nc = noise.attach(circuit)?;
    let d = 1usize << n;
    let mut j = ComplexMatrix::zeros(d * d);
    for i in 0..d {
        for k in 0..d {
            let mut unit = ComplexMatrix::zeros(d);
            unit[(i, k)] = C1;
            apply_to_matrix(&nc, &mut unit)?;
            for a in 0..d {
                for b in 0..d {
                    j[(i * d + a, k * d + b)] = unit[(a, b)];
                }
            }
        }
    }
    Ok(j)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CertMode {
    /// Reconstruct the noisy channel and bisect for `s`.
    Direct,
    /// Report only the slope estimate.
    SlopeOnly,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertReport {
    pub s_direct: Option<f64>,
    pub d_max_bits: Option<f64>,
    pub s_from_slope: f64,
    pub relative_gap: Option<f64>,
    pub fit: FitResult,
}

#[allow(clippy::too_many_arguments)]
pub fn certify<N: NoiseAttachment + ?Sized>(
    base: &Circuit,
    noise: &N,
    obs: &Observable,
    folds: &[usize],
    sampling: Sampling,
    seed: u64,
    mode: CertMode,
) -> Result<CertReport> {
    if mode == CertMode::Direct && base.qubits() > DIRECT_MAX_QUBITS {
        return Err(Error::TooLarge {
            requested: base.qubits(),
            cap: DIRECT_MAX_QUBITS,
        });
    }
    let base = base.fold(0);
    let data = collect(&base, noise, obs, folds, sampling, seed)?;
    let fit = fit_pie(&data, FitOptions::default())?;
    let s_from_slope = fit.s_estimate.expect("log-linear fit reports s");
    let direct = match mode {
        CertMode::Direct => {
            let ideal = Channel::unitary(base.unitary())?;
            let noisy = Channel::choi(noisy_circuit_choi(&base, noise)?)?;
            Some(dmax(&ideal, &noisy, DMAX_TOL)?)
        }
        CertMode::SlopeOnly => None,
    };
    Ok(CertReport {
        s_direct: direct.map(|d| d.s),
        d_max_bits: direct.map(|d| d.d_max_bits),
        s_from_slope,
        relative_gap: direct.map(|d| (s_from_slope - d.s).abs() / d.s),
        fit,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::compose;
    use crate::circuit::build_ising_trotter;
    use crate::noise::{NoiseModel, SegmentNoise};
    use crate::pauli::Pauli;

    #[test]
    fn identical_channels() {
        let x = Channel::unitary(Pauli::X.matrix()).unwrap();
        let r = dmax(&x, &x, DMAX_TOL).unwrap();
        assert_eq!((r.s, r.d_max_bits), (1.0, 0.0));
    }

    #[test]
    fn depolarizing_closed_form() {
        let w = 0.1;
        let r = dmax(
            &Channel::identity(1),
            &Channel::depolarizing(1, w).unwrap(),
            DMAX_TOL,
        )
        .unwrap();
        assert!((r.s - 4.0 / 3.7).abs() < 1e-9);
        assert!((r.d_max_bits - r.s.log2()).abs() < 1e-12);
        assert!((depolarizing_dmax_closed_form(1, w) - 4.0 / 3.7).abs() < 1e-15);
    }

    #[test]
    fn eigenvalue_grid_oracle() {
        // Coarse-to-fine scan of the feasibility boundary, independent of bisection.
        let w = 0.2;
        let ji = choi_of(&Channel::identity(1));
        let jn = choi_of(&Channel::depolarizing(1, w).unwrap());
        let mut s = 1.0;
        let mut step = 0.1;
        while step > 1e-11 {
            while min_eigenvalue(&(&jn.scale_real(s + step) - &ji)).unwrap() < 0.0 {
                s += step;
            }
            step /= 10.0;
        }
        let r = dmax(
            &Channel::identity(1),
            &Channel::depolarizing(1, w).unwrap(),
            DMAX_TOL,
        )
        .unwrap();
        assert!((r.s - s).abs() < 1e-9);
    }

    #[test]
    fn unitary_covariance() {
        let w = 0.1;
        let x = Channel::unitary(Pauli::X.matrix()).unwrap();
        let noisy = compose(&Channel::depolarizing(1, w).unwrap(), &x).unwrap();
        let a = dmax(&x, &noisy, DMAX_TOL).unwrap();
        let b = dmax(
            &Channel::identity(1),
            &Channel::depolarizing(1, w).unwrap(),
            DMAX_TOL,
        )
        .unwrap();
        assert!((a.s - b.s).abs() < 1e-9);
    }

    #[test]
    fn infeasible_when_support_is_missed() {
        let x = Channel::unitary(Pauli::X.matrix()).unwrap();
        assert!(matches!(
            dmax(&Channel::identity(1), &x, DMAX_TOL),
            Err(Error::Infeasible(_))
        ));
    }

    #[test]
    fn noisy_choi_matches_channel_composition() {
        let c = build_ising_trotter(2, 0.5, 0.4, 1).unwrap();
        let noise = SegmentNoise::depolarizing(2, 0.1).unwrap();
        let j = noisy_circuit_choi(&c, &noise).unwrap();
        let expected = choi_of(
            &compose(
                &Channel::depolarizing(2, 0.1).unwrap(),
                &Channel::unitary(c.unitary()).unwrap(),
            )
            .unwrap(),
        );
        assert!(j.approx_eq(&expected, 1e-12));
    }

    #[test]
    fn certify_noiseless_and_too_large() {
        let c = build_ising_trotter(2, 0.5, 0.5, 1).unwrap();
        let obs = Observable::magnetization(2);
        let r = certify(
            &c,
            &NoiseModel::noiseless(),
            &obs,
            &[0, 1, 2],
            Sampling::Exact,
            0,
            CertMode::Direct,
        )
        .unwrap();
        assert!((r.s_from_slope - 1.0).abs() < 1e-6);
        assert_eq!(r.s_direct, Some(1.0));
        let big = build_ising_trotter(4, 0.5, 0.5, 1).unwrap();
        assert!(matches!(
            certify(
                &big,
                &NoiseModel::noiseless(),
                &Observable::magnetization(4),
                &[0, 1],
                Sampling::Exact,
                0,
                CertMode::Direct
            ),
            Err(Error::TooLarge {
                requested: 4,
                cap: 3
            })
        ));
    }

    #[test]
    fn certify_segment_depolarizing_slope() {
        let w = 0.08;
        let c = build_ising_trotter(2, 0.5, 0.5, 1).unwrap();
        let noise = SegmentNoise::depolarizing(2, w).unwrap();
        let r = certify(
            &c,
            &noise,
            &Observable::magnetization(2),
            &[0, 1, 2, 3],
            Sampling::Exact,
            0,
            CertMode::Direct,
        )
        .unwrap();
        assert!((r.s_from_slope - 1.0 / (1.0 - w)).abs() < 1e-6);
        let s = r.s_direct.unwrap();
        assert!((s - depolarizing_dmax_closed_form(2, w)).abs() < 1e-8);
        assert!(r.relative_gap.unwrap() > 0.0);
    }
}
