use pie_core::circuit::build_ising_trotter;
use pie_core::mitigation::{
    collect, fit, fit_linear, fit_pie, DataPoint, ExtrapolationDataset, FitOptions, Model, Sampling,
};
use pie_core::noise::{NoiseModel, SegmentNoise};
use pie_core::pauli::PauliString;
use pie_core::simulator::{expectation, run, Observable};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const LAMBDAS: [f64; 4] = [1.0, 3.0, 5.0, 7.0];

fn dataset(values: &[f64], stds: &[f64]) -> ExtrapolationDataset {
    let points = LAMBDAS
        .iter()
        .zip(values.iter().zip(stds))
        .map(|(&lambda, (&value, &std))| DataPoint { lambda, value, std })
        .collect();
    ExtrapolationDataset::from_raw(points, 0.0).unwrap()
}

fn decay_strategy() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (
        0.2..1.0f64,
        1.01..1.5f64,
        prop::collection::vec(-1.0..1.0f64, 4),
        prop::collection::vec(0.001..0.01f64, 4),
    )
        .prop_map(|(a, s, eps, stds)| {
            let values = LAMBDAS
                .iter()
                .zip(&eps)
                .zip(&stds)
                .map(|((l, e), sd)| a * s.powf(-l) + 0.3 * e * sd)
                .collect();
            (values, stds)
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn fits_are_scale_equivariant((values, stds) in decay_strategy(), c in 0.1..10.0f64) {
        let base = dataset(&values, &stds);
        let scaled_values: Vec<f64> = values.iter().map(|v| c * v).collect();
        let scaled_stds: Vec<f64> = stds.iter().map(|s| c * s).collect();
        let scaled = dataset(&scaled_values, &scaled_stds);
        for model in Model::ALL {
            let a = fit(&base, model, FitOptions::default()).unwrap();
            let b = fit(&scaled, model, FitOptions::default()).unwrap();
            prop_assert!((b.mitigated - c * a.mitigated).abs() < 1e-6 * c.max(1.0), "{model}: {} vs {}", b.mitigated, c * a.mitigated);
            prop_assert!((b.variance - c * c * a.variance).abs() <= 1e-6 * (c * c * a.variance).max(1e-12), "{model}");
        }
    }

    #[test]
    fn pie_recovers_pure_exponentials(a in 0.05..1.0f64, s in 1.0..2.0f64) {
        let values: Vec<f64> = LAMBDAS.iter().map(|l| a * s.powf(-l)).collect();
        let d = dataset(&values, &[0.0; 4]);
        let r = fit_pie(&d, FitOptions::default()).unwrap();
        prop_assert!((r.mitigated - a).abs() < 1e-10);
        prop_assert!((r.s_estimate.unwrap() - s).abs() < 1e-9);
    }

    #[test]
    fn unweighted_line_matches_closed_form(values in prop::collection::vec(0.01..1.0f64, 4)) {
        let d = dataset(&values, &[0.01; 4]);
        let r = fit_linear(&d, FitOptions { weighted: false }).unwrap();
        let n = 4.0;
        let mx = LAMBDAS.iter().sum::<f64>() / n;
        let my = values.iter().sum::<f64>() / n;
        let sxy: f64 = LAMBDAS.iter().zip(&values).map(|(x, y)| (x - mx) * (y - my)).sum();
        let sxx: f64 = LAMBDAS.iter().map(|x| (x - mx).powi(2)).sum();
        let slope = sxy / sxx;
        let intercept = my - slope * mx;
        prop_assert!((r.mitigated - intercept).abs() < 1e-12);
        let rss: f64 = LAMBDAS.iter().zip(&values).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
        let s2 = rss / (n - 2.0);
        let var = s2 * (1.0 / n + mx * mx / sxx);
        prop_assert!((r.variance - var).abs() < 1e-12 + 1e-9 * var);
    }

    #[test]
    fn csv_round_trip((values, stds) in decay_strategy(), flip in any::<bool>()) {
        let values: Vec<f64> = values.iter().map(|v| if flip { -v } else { *v }).collect();
        let d = dataset(&values, &stds);
        let mut buf = Vec::new();
        d.write_csv(&mut buf).unwrap();
        let back = ExtrapolationDataset::read_csv(buf.as_slice()).unwrap();
        prop_assert_eq!(back.observable_sign, d.observable_sign);
        for (p, q) in back.points.iter().zip(&d.points) {
            prop_assert!((p.value - q.value).abs() < 1e-12 && (p.std - q.std).abs() < 1e-12);
        }
    }
}

#[test]
fn exponential_fit_never_returns_nan_on_flat_data() {
    for seed in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let values: Vec<f64> = LAMBDAS
            .iter()
            .map(|_| 0.5 + 1e-4 * rng.random_range(-1.0..1.0))
            .collect();
        let d = dataset(&values, &[1e-4; 4]);
        if let Ok(r) = fit(&d, Model::Exponential, FitOptions::default()) {
            assert!(
                r.mitigated.is_finite() && r.variance.is_finite(),
                "seed {seed}: {r:?}"
            );
        }
    }
}

#[test]
fn slope_does_not_depend_on_the_observable() {
    let n = 4;
    let c = build_ising_trotter(n, 1.0, 1.0, 2).unwrap();
    let noise = SegmentNoise::depolarizing(n, 0.02).unwrap();
    let observables = [
        Observable::magnetization(n),
        Observable::new(
            n,
            vec![
                PauliString::parse("ZZII", 1.0).unwrap(),
                PauliString::parse("IXXI", 0.4).unwrap(),
            ],
            0.0,
        )
        .unwrap(),
        Observable::new(n, vec![PauliString::parse("IIIZ", -1.0).unwrap()], 2.0).unwrap(),
    ];
    let slopes: Vec<f64> = observables
        .iter()
        .map(|o| {
            let d = collect(&c, &noise, o, &[0, 1, 2, 3], Sampling::Exact, 0).unwrap();
            fit_pie(&d, FitOptions::default())
                .unwrap()
                .s_estimate
                .unwrap()
        })
        .collect();
    let expected = 1.0 / (1.0 - 0.02);
    for s in &slopes {
        assert!((s - expected).abs() < 1e-10, "{slopes:?}");
    }
}

#[test]
fn pie_bias_shrinks_with_noise() {
    let n = 6;
    let c = build_ising_trotter(n, 0.5, 1.5, 3).unwrap();
    let obs = Observable::magnetization(n);
    let ideal = expectation(&run(&c, &NoiseModel::noiseless()).unwrap(), &obs).unwrap();
    let bias: Vec<f64> = [0.004, 0.002, 0.001, 0.0005]
        .iter()
        .map(|&w| {
            let d = collect(
                &c,
                &NoiseModel::depolarizing(w),
                &obs,
                &[0, 1, 2, 3],
                Sampling::Exact,
                0,
            )
            .unwrap();
            (fit_pie(&d, FitOptions::default()).unwrap().mitigated - ideal).abs()
        })
        .collect();
    for w in bias.windows(2) {
        assert!(w[1] < w[0], "{bias:?}");
    }
}
