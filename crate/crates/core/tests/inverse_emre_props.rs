use pie_core::circuit::{Circuit, Gate, GateKind};
use pie_core::inverse_emre::{enumerate, run_estimator, Estimator, PtmMode, QpdTable};
use pie_core::mitigation::Sampling;
use pie_core::noise::{NoiseModel, NoiseSpec};
use pie_core::pauli::PauliString;
use pie_core::simulator::{expectation, run, Observable};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn small_circuit(seed: u64, len: usize) -> Circuit {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let gates = (0..len)
        .map(|_| {
            let a = rng.random_range(-3.0..3.0);
            match rng.random_range(0..5) {
                0 => Gate::one(GateKind::H, rng.random_range(0..2)),
                1 => Gate::one(GateKind::Ry(a), rng.random_range(0..2)),
                2 => Gate::one(GateKind::Rz(a), rng.random_range(0..2)),
                3 => Gate::two(GateKind::Rxx(a), 0, 1),
                _ => Gate::two(GateKind::Cnot, 1, 0),
            }
            .unwrap()
        })
        .collect();
    Circuit::from_gates(2, gates).unwrap()
}

fn observable() -> Observable {
    Observable::new(
        2,
        vec![
            PauliString::parse("ZI", 1.0).unwrap(),
            PauliString::parse("XX", 0.5).unwrap(),
            PauliString::parse("IY", -0.7).unwrap(),
        ],
        0.25,
    )
    .unwrap()
}

fn spec_strategy() -> impl Strategy<Value = NoiseSpec> {
    prop_oneof![
        (0.001..0.1f64).prop_map(|omega| NoiseSpec::Depolarizing { omega }),
        (0.0..0.05f64, 0.0..0.05f64, 0.0..0.05f64)
            .prop_map(|(p_x, p_y, p_z)| NoiseSpec::MixedPauli { p_x, p_y, p_z }),
        (0.0..0.05f64, 0.0..0.05f64, 0.0..0.05f64)
            .prop_map(|(r_x, r_y, r_z)| NoiseSpec::PauliLindblad { r_x, r_y, r_z }),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn pec_limit_is_the_ideal_value(seed in any::<u64>(), len in 1usize..=4, spec in spec_strategy()) {
        let c = small_circuit(seed, len);
        let nm = NoiseModel::uniform(spec);
        let table = QpdTable::build(&c, &nm, PtmMode::Exact).unwrap();
        let obs = observable();
        let ideal = expectation(&run(&c, &NoiseModel::noiseless()).unwrap(), &obs).unwrap();
        let limit = enumerate(Estimator::Pec, &c, &nm, &table, &obs).unwrap();
        prop_assert!((limit - ideal).abs() < 1e-9, "{limit} vs {ideal}");
    }

    #[test]
    fn robustness_is_ordered(seed in any::<u64>(), len in 1usize..=6, spec in spec_strategy()) {
        let c = small_circuit(seed, len);
        let nm = NoiseModel::uniform(spec);
        let table = QpdTable::build(&c, &nm, PtmMode::Exact).unwrap();
        let obs = observable();
        let gamma = |m| run_estimator(m, &c, &nm, &table, &obs, 1, Sampling::Exact, 0).unwrap().robustness_product;
        let (pec, hemre, emre) = (gamma(Estimator::Pec), gamma(Estimator::Hemre), gamma(Estimator::Emre));
        prop_assert!(emre <= hemre + 1e-12 && hemre <= pec + 1e-12 && emre >= 1.0 - 1e-12);
    }
}

#[test]
fn depolarizing_decomposition_matches_closed_form() {
    let omega = 0.05;
    let c = Circuit::from_gates(2, vec![Gate::one(GateKind::H, 0).unwrap()]).unwrap();
    let table = QpdTable::build(&c, &NoiseModel::depolarizing(omega), PtmMode::Exact).unwrap();
    let q = table.get(&c.gates()[0]).unwrap();
    let f = 1.0 - omega;
    let expected = [
        (1.0 + 3.0 / f) / 4.0,
        (1.0 - 1.0 / f) / 4.0,
        (1.0 - 1.0 / f) / 4.0,
        (1.0 - 1.0 / f) / 4.0,
    ];
    for (a, b) in q.coeffs.iter().zip(expected) {
        assert!((a - b).abs() < 1e-10, "{:?}", q.coeffs);
    }
    assert!((q.gamma - (3.0 / f - 1.0) / 2.0).abs() < 1e-10);
}

#[test]
fn sampled_estimators_converge_to_their_limits() {
    let c = small_circuit(5, 4);
    let nm = NoiseModel::depolarizing(0.03);
    let table = QpdTable::build(&c, &nm, PtmMode::Exact).unwrap();
    let obs = observable();
    for mode in [Estimator::Pec, Estimator::Emre, Estimator::Hemre] {
        let limit = enumerate(mode, &c, &nm, &table, &obs).unwrap();
        let est = run_estimator(mode, &c, &nm, &table, &obs, 4000, Sampling::Exact, 9).unwrap();
        assert!(
            (est.mean - limit).abs() < 5.0 * est.std_error.max(1e-12),
            "{mode:?}: {} vs {limit}",
            est.mean
        );
        let again = run_estimator(mode, &c, &nm, &table, &obs, 4000, Sampling::Exact, 9).unwrap();
        assert_eq!(est, again);
    }
}

#[test]
fn shot_estimated_table_is_close_to_exact() {
    let c = small_circuit(8, 3);
    let nm = NoiseModel::depolarizing(0.02);
    let exact = QpdTable::build(&c, &nm, PtmMode::Exact).unwrap();
    let shots = QpdTable::build(
        &c,
        &nm,
        PtmMode::Shots {
            shots: 200_000,
            seed: 1,
        },
    )
    .unwrap();
    for (k, q) in &exact.entries {
        let s = &shots.entries[k];
        let diff = q
            .coeffs
            .iter()
            .zip(&s.coeffs)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(diff < 0.02, "{k}: {diff}");
    }
}
