use ifdd_core::ofdm::{pulse_response, Cplx, Modem, OfdmConfig};
use proptest::prelude::*;

fn grid_strategy(n: usize) -> impl Strategy<Value = Vec<Cplx>> {
    prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), n)
        .prop_map(|v| v.into_iter().map(|(a, b)| Cplx::new(a, b)).collect())
}

fn energy(v: &[Cplx]) -> f64 {
    v.iter().map(|x| x.norm_sqr()).sum()
}

proptest! {
    #[test]
    fn round_trip_and_parseval(grid in grid_strategy(64), cp in 0usize..32) {
        let modem = Modem::new(OfdmConfig::new(1e6, 64, cp, 1e9).unwrap()).unwrap();
        let block = modem.modulate(&grid).unwrap();
        prop_assert_eq!(block.len(), 64 + cp);
        prop_assert!((energy(&block[cp..]) - energy(&grid)).abs() < 1e-9 * (1.0 + energy(&grid)));
        // The prefix is a copy of the tail.
        for i in 0..cp {
            prop_assert!((block[i] - block[64 + i]).norm() < 1e-12);
        }
        let back = modem.demodulate(&block).unwrap();
        for (a, b) in back.iter().zip(&grid) {
            prop_assert!((a - b).norm() < 1e-10);
        }
    }

    #[test]
    fn modulation_is_linear(a in grid_strategy(32), b in grid_strategy(32), s in -3.0f64..3.0) {
        let modem = Modem::new(OfdmConfig::new(1e6, 32, 4, 1e9).unwrap()).unwrap();
        let mix: Vec<Cplx> = a.iter().zip(&b).map(|(x, y)| x * s + y).collect();
        let lhs = modem.modulate(&mix).unwrap();
        let xa = modem.modulate(&a).unwrap();
        let xb = modem.modulate(&b).unwrap();
        for i in 0..lhs.len() {
            prop_assert!((lhs[i] - (xa[i] * s + xb[i])).norm() < 1e-10);
        }
    }

    #[test]
    fn pulse_response_bounded_and_even(x in -40.0f64..40.0, n in 3usize..512) {
        let cfg = OfdmConfig::new(1e6, n, 0, 1e9).unwrap();
        let f = x * cfg.subcarrier_spacing_hz();
        let g = pulse_response(f, &cfg);
        prop_assert!(g.norm() <= 1.0 + 1e-12);
        prop_assert!((g.norm() - pulse_response(-f, &cfg).norm()).abs() < 1e-12);
    }

    #[test]
    fn pulse_response_nulls_at_other_subcarriers(k in 1i64..200, n in 201usize..1024) {
        let cfg = OfdmConfig::new(1e6, n, 0, 1e9).unwrap();
        let g = pulse_response(k as f64 * cfg.subcarrier_spacing_hz(), &cfg);
        prop_assert!(g.norm() < 1e-9);
    }
}

#[test]
fn unit_response_at_zero_offset() {
    let cfg = OfdmConfig::default();
    assert!((pulse_response(0.0, &cfg) - Cplx::new(1.0, 0.0)).norm() < 1e-15);
}
