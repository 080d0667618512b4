use ifdd_core::channel::{
    bessel_j0, correlation, frequency_correlation, sample_tdl, ChannelModelConfig, CorrelationAccumulator,
};
use ifdd_core::ofdm::Cplx;
use proptest::prelude::*;

fn vec_strategy(n: usize) -> impl Strategy<Value = Vec<Cplx>> {
    prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), n)
        .prop_map(|v| v.into_iter().map(|(a, b)| Cplx::new(a, b)).collect())
}

proptest! {
    #[test]
    fn correlation_symmetric_bounded_scale_free(
        a in vec_strategy(8),
        b in vec_strategy(8),
        s in 0.1f64..10.0,
        phase in 0.0f64..6.28,
    ) {
        prop_assume!(a.iter().any(|x| x.norm() > 1e-6) && b.iter().any(|x| x.norm() > 1e-6));
        let ab = correlation(&a, &b).unwrap();
        let ba = correlation(&b, &a).unwrap();
        prop_assert!((ab - ba).abs() < 1e-12);
        prop_assert!((0.0..=1.0).contains(&ab));
        let k = Cplx::from_polar(s, phase);
        let scaled: Vec<Cplx> = a.iter().map(|x| x * k).collect();
        prop_assert!((correlation(&scaled, &b).unwrap() - ab).abs() < 1e-12);
        prop_assert!((correlation(&a, &a).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn closed_form_increases_with_subcarriers(taps in 2usize..40, n in 64usize..1024) {
        prop_assume!(taps < n / 2);
        prop_assert!(frequency_correlation(taps, 2 * n, 1) >= frequency_correlation(taps, n, 1));
    }

    #[test]
    fn accumulator_equals_concatenation(a in vec_strategy(6), b in vec_strategy(6)) {
        prop_assume!(a.iter().any(|x| x.norm() > 1e-6) && b.iter().any(|x| x.norm() > 1e-6));
        let mut acc = CorrelationAccumulator::default();
        acc.add(&a[..3], &b[..3]).unwrap();
        let mut other = CorrelationAccumulator::default();
        other.add(&a[3..], &b[3..]).unwrap();
        acc.merge(&other);
        prop_assert!((acc.value().unwrap() - correlation(&a, &b).unwrap()).abs() < 1e-12);
    }
}

#[test]
fn tap_power_matches_uniform_profile() {
    let model = ChannelModelConfig {
        n_taps: 5,
        n_antennas: 50,
        ..Default::default()
    };
    let mut total = vec![0.0; 5];
    let draws = 400;
    for s in 0..draws {
        let ch = sample_tdl(&model, s);
        for k in 0..model.n_antennas {
            for (l, t) in ch.taps(k).iter().enumerate() {
                total[l] += t.norm_sqr();
            }
        }
    }
    for p in total {
        let mean = p / (draws as f64 * 50.0);
        assert!((mean - 0.2).abs() < 0.01, "tap power {mean}");
    }
}

#[test]
fn bessel_matches_reference_values() {
    // Tabulated values.
    for (x, j) in [
        (0.0, 1.0),
        (1.0, 0.765_197_686_557_966_6),
        (2.404_825_557_695_773, 0.0),
        (5.0, -0.177_596_771_314_338_3),
        (10.0, -0.245_935_764_451_348_3),
    ] {
        assert!((bessel_j0(x) - j).abs() < 1e-12, "J0({x})");
    }
}
