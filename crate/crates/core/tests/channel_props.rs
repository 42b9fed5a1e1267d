mod common;

use common::{random_channel, random_density};
use pie_core::channel::{choi_of, compose, ptm_of, Channel, PSD_FLOOR};
use pie_core::linalg::{min_eigenvalue, ComplexMatrix};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn basis_density(d: usize, k: usize) -> ComplexMatrix {
    // Diagonal projectors plus the standard off-diagonal superpositions span
    // all operators.
    let (i, j) = (k / d, k % d);
    let mut v = vec![num_complex::Complex64::new(0.0, 0.0); d];
    v[i] = 1.0.into();
    if i != j {
        v[j] = if i < j {
            1.0.into()
        } else {
            num_complex::Complex64::new(0.0, 1.0)
        };
    }
    let norm: f64 = v.iter().map(|x| x.norm_sqr()).sum();
    ComplexMatrix::outer(&v, &v).scale_real(1.0 / norm)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn kraus_choi_kraus_round_trip(seed in any::<u64>(), qubits in 1usize..=2, env in 1usize..=4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ch = random_channel(qubits, env, &mut rng);
        let via_choi = Channel::choi(choi_of(&ch)).unwrap();
        let back = Channel::kraus(via_choi.to_kraus()).unwrap();
        let via_ptm = Channel::ptm(ptm_of(&ch)).unwrap();
        let d = ch.dim();
        for k in 0..d * d {
            let rho = basis_density(d, k);
            let out = ch.apply(&rho);
            prop_assert!(back.apply(&rho).approx_eq(&out, 1e-9));
            prop_assert!(via_ptm.apply(&rho).approx_eq(&out, 1e-9));
        }
    }

    #[test]
    fn ptm_of_composition_is_product(seed in any::<u64>(), qubits in 1usize..=2) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = random_channel(qubits, 2, &mut rng);
        let b = random_channel(qubits, 3, &mut rng);
        let ab = compose(&a, &b).unwrap();
        let diff = (ptm_of(&ab) - ptm_of(&a) * ptm_of(&b)).abs().max();
        prop_assert!(diff < 1e-9);
        let rho = random_density(a.dim(), &mut rng);
        prop_assert!(ab.apply(&rho).approx_eq(&a.apply(&b.apply(&rho)), 1e-9));
    }

    #[test]
    fn choi_is_psd_with_identity_marginal(seed in any::<u64>(), qubits in 1usize..=2, env in 1usize..=4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ch = random_channel(qubits, env, &mut rng);
        let j = choi_of(&ch);
        prop_assert!(min_eigenvalue(&j).unwrap() >= PSD_FLOOR);
        let d = ch.dim();
        prop_assert!(j.partial_trace_second(d).max_abs_diff(&ComplexMatrix::identity(d)) < 1e-10);
        prop_assert!((j.trace().re - d as f64).abs() < 1e-10);
    }

    #[test]
    fn ptm_entries_bounded(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let r = ptm_of(&random_channel(2, 3, &mut rng));
        prop_assert!(r.iter().all(|x| x.abs() <= 1.0 + 1e-12));
    }
}

#[test]
fn min_eigenvalue_matches_characteristic_polynomial_root() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for _ in 0..5 {
        let g = common::from_na(&common::gaussian_matrix(4, &mut rng));
        let h = (&g + &g.adjoint()).scale_real(0.5);
        // det(h − xI) by cofactor expansion, root by bisection below the
        // Gershgorin lower bound.
        let det = |x: f64| -> f64 {
            let m = &h - &ComplexMatrix::identity(4).scale_real(x);
            fn det_rec(m: &[Vec<num_complex::Complex64>]) -> num_complex::Complex64 {
                if m.len() == 1 {
                    return m[0][0];
                }
                let mut acc = num_complex::Complex64::new(0.0, 0.0);
                for c in 0..m.len() {
                    let minor: Vec<Vec<_>> = m[1..]
                        .iter()
                        .map(|row| {
                            row.iter()
                                .enumerate()
                                .filter(|(k, _)| *k != c)
                                .map(|(_, v)| *v)
                                .collect()
                        })
                        .collect();
                    let s = if c % 2 == 0 { 1.0 } else { -1.0 };
                    acc += m[0][c] * det_rec(&minor) * s;
                }
                acc
            }
            let rows: Vec<Vec<_>> = (0..4)
                .map(|r| (0..4).map(|c| m[(r, c)]).collect())
                .collect();
            det_rec(&rows).re
        };
        let bound = (0..4)
            .map(|r| {
                h[(r, r)].re
                    - (0..4)
                        .filter(|&c| c != r)
                        .map(|c| h[(r, c)].norm())
                        .sum::<f64>()
            })
            .fold(f64::INFINITY, f64::min);
        // Step up from the bound until the sign flips, then bisect.
        let (mut lo, mut x) = (bound - 1.0, bound - 1.0);
        let s0 = det(lo).signum();
        while det(x).signum() == s0 {
            lo = x;
            x += 1e-3;
        }
        let mut hi = x;
        for _ in 0..100 {
            let mid = 0.5 * (lo + hi);
            if det(mid).signum() == s0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        assert!((min_eigenvalue(&h).unwrap() - lo).abs() < 1e-9);
    }
}
