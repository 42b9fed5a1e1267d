mod common;

use common::{expm, ising_hamiltonian};
use num_complex::Complex64;
use pie_core::circuit::{
    build_ising_trotter, build_su2_ansatz, random_circuit, su2_angle_count, Circuit,
};
use pie_core::linalg::ComplexMatrix;
use pie_core::noise::NoiseModel;
use pie_core::simulator::{expectation, run, Observable};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_observable(n: usize, rng: &mut ChaCha8Rng) -> Observable {
    let terms = (0..5)
        .map(|_| {
            let label: String = (0..n)
                .map(|_| ['I', 'X', 'Y', 'Z'][rng.random_range(0..4)])
                .collect();
            pie_core::pauli::PauliString::parse(&label, rng.random_range(-1.0..1.0)).unwrap()
        })
        .collect();
    Observable::new(n, terms, 0.0).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(20))]

    #[test]
    fn noiseless_expectations_are_fold_invariant(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let c = random_circuit(3, 25, &mut rng);
        let obs = random_observable(3, &mut rng);
        let base = expectation(&run(&c, &NoiseModel::noiseless()).unwrap(), &obs).unwrap();
        for n in 1..=4 {
            let folded = expectation(&run(&c.fold(n), &NoiseModel::noiseless()).unwrap(), &obs).unwrap();
            prop_assert!((folded - base).abs() < 1e-10);
        }
    }

    #[test]
    fn adjoint_is_an_involution(seed in any::<u64>(), depth in 0usize..40) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let c = random_circuit(4, depth, &mut rng);
        prop_assert_eq!(c.adjoint().adjoint(), c.clone());
        let prod = c.adjoint().unitary().matmul(&c.unitary());
        prop_assert!(prod.approx_eq(&ComplexMatrix::identity(16), 1e-10));
    }

    #[test]
    fn folded_gate_count(seed in any::<u64>(), n in 0usize..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let c = random_circuit(2, 7, &mut rng);
        let f = c.fold(n);
        prop_assert_eq!(f.len(), (2 * n + 1) * c.len());
        prop_assert_eq!(f.noise_scale(), 2 * n + 1);
    }

    #[test]
    fn trotter_at_zero_time_is_identity(n in 2usize..=4, steps in 1usize..4, field in -2.0f64..2.0) {
        let c = build_ising_trotter(n, field, 0.0, steps).unwrap();
        prop_assert!(c.unitary().approx_eq(&ComplexMatrix::identity(1 << n), 1e-12));
    }
}

#[test]
fn trotter_converges_to_exact_dynamics() {
    let (n, field, t) = (4, 0.5, 0.5);
    let h = ising_hamiltonian(n, field);
    let exact = expm(&h.scale(Complex64::new(0.0, -t)));
    let errs: Vec<f64> = [1, 2, 4, 8, 16]
        .iter()
        .map(|&steps| {
            build_ising_trotter(n, field, t, steps)
                .unwrap()
                .unitary()
                .max_abs_diff(&exact)
        })
        .collect();
    // First-order product formula: error halves with each doubling of R.
    for w in errs.windows(2) {
        assert!((w[0] / w[1] - 2.0).abs() < 0.05, "{errs:?}");
    }
    assert!(errs[4] < 0.025);
}

#[test]
fn su2_zero_angles_keep_zero_state() {
    let c = build_su2_ansatz(4, 2, &vec![0.0; su2_angle_count(4, 2)]).unwrap();
    let s = run(&c, &NoiseModel::noiseless()).unwrap();
    assert!((s.rho()[(0, 0)].re - 1.0).abs() < 1e-12);
    assert!((expectation(&s, &Observable::magnetization(4)).unwrap() - 1.0).abs() < 1e-12);
}

#[test]
fn su2_statevector_matches_dense_product() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let angles: Vec<f64> = (0..su2_angle_count(2, 1))
        .map(|_| rng.random_range(-3.0..3.0))
        .collect();
    let c = build_su2_ansatz(2, 1, &angles).unwrap();
    // Statevector propagated gate by gate with embedded matrices.
    let mut psi = vec![Complex64::new(0.0, 0.0); 4];
    psi[0] = Complex64::new(1.0, 0.0);
    for g in c.gates() {
        psi = g.embedded_matrix(2).matvec(&psi);
    }
    let rho = ComplexMatrix::outer(&psi, &psi);
    let s = run(&c, &NoiseModel::noiseless()).unwrap();
    assert!(s.rho().approx_eq(&rho, 1e-12));
}

#[test]
fn json_round_trip() {
    let c = build_ising_trotter(3, 0.5, 1.0, 2).unwrap().fold(1);
    let text = serde_json::to_string(&c.to_record()).unwrap();
    let back = Circuit::from_record(&serde_json::from_str(&text).unwrap()).unwrap();
    assert_eq!(back, c);
    let bad = r#"{"qubits": 2, "gates": [{"name": "RZ", "targets": [0]}]}"#;
    assert!(Circuit::from_record(&serde_json::from_str(bad).unwrap()).is_err());
}
