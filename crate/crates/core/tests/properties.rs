use std::f64::consts::{PI, TAU};

use dmabeam::array::{guide_field, ArrayConfig, Beamformer};
use dmabeam::channel::{generate_user_channel, splitmix64, user_seed, ChannelConfig};
use dmabeam::element::{circle_deviation, quantize_to_available, LorentzianWeight, TuningTable};
use dmabeam::mapping::{euclidean_map, lorentzian_map, rotate_and_map, MappingMethod};
use dmabeam::Complex64;
use proptest::prelude::*;

fn nonzero() -> impl Strategy<Value = Complex64> {
    (0.01f64..3.0, -PI..PI).prop_map(|(r, t)| Complex64::from_polar(r, t))
}

proptest! {
    #[test]
    fn mapped_weights_stay_on_circle(w in nonzero()) {
        prop_assert!(circle_deviation(euclidean_map(w).value()) < 1e-12);
        prop_assert!(circle_deviation(lorentzian_map(w).unwrap().value()) < 1e-12);
    }

    #[test]
    fn euclidean_beats_circle_samples(w in nonzero(), phi in -PI..PI) {
        let best = (euclidean_map(w).value() - w).norm();
        let other = (LorentzianWeight::from_phase(phi).value() - w).norm();
        prop_assert!(best <= other + 1e-12);
    }

    #[test]
    fn lorentzian_keeps_target_phase(w in nonzero()) {
        // seen from the circle centre −j/2 the mapped point points along w
        let offset = lorentzian_map(w).unwrap().value() + Complex64::new(0.0, 0.5);
        prop_assert!((offset.norm() - 0.5).abs() < 1e-12);
        prop_assert!((offset / w).arg().abs() < 1e-9);
    }

    #[test]
    fn quantized_weight_is_achievable(phi in -PI..PI, gap in 0.0f64..1.0) {
        let table = TuningTable::synthetic(64, gap).unwrap();
        let q = quantize_to_available(&LorentzianWeight::from_phase(phi), &table).unwrap();
        let input = LorentzianWeight::from_phase(phi);
        prop_assert!(circle_deviation(q.value()) < 1e-12);
        if table.is_achievable(input.phase()) {
            prop_assert_eq!(q, input);
        } else {
            let edge = table.gaps().iter().any(|g| {
                [g.start, g.end()].iter().any(|&e| (LorentzianWeight::from_phase(e).value() - q.value()).norm() < 1e-12)
            });
            prop_assert!(edge);
        }
    }

    #[test]
    fn rotation_is_periodic(zeta in 0.0f64..TAU, seed in any::<u64>()) {
        let cfg = ArrayConfig::reference_dma();
        let m = guide_field(&cfg).unwrap();
        let mut s = seed;
        let w: Vec<Complex64> = (0..cfg.num_elements())
            .map(|_| Complex64::from_polar(1.0, (splitmix64(&mut s) >> 11) as f64 / (1u64 << 53) as f64 * TAU))
            .collect();
        let f = Beamformer::desired(w).unwrap();
        let a = rotate_and_map(&f, &m, zeta, MappingMethod::Euclidean).unwrap();
        let b = rotate_and_map(&f, &m, zeta + TAU, MappingMethod::Euclidean).unwrap();
        for (x, y) in a.weights().iter().zip(b.weights()) {
            prop_assert!((x - y).norm() < 1e-9);
        }
    }

    #[test]
    fn user_seeds_are_distinct(master in any::<u64>(), u in 0usize..1000) {
        prop_assert_ne!(user_seed(master, u), user_seed(master, u + 1));
    }
}

#[test]
fn user_channel_depends_only_on_seed_and_index() {
    let cfg = ChannelConfig { seed: 42, subcarriers: 4, ..ChannelConfig::default() };
    let array = ArrayConfig::reference_dma();
    let a = generate_user_channel(&cfg, &array, 7).unwrap();
    let b = generate_user_channel(&cfg, &array, 7).unwrap();
    let c = generate_user_channel(&cfg, &array, 8).unwrap();
    assert_eq!(a.h, b.h);
    assert_ne!(a.h, c.h);
    assert_eq!(a.num_elements(), 40);
    assert_eq!(a.subcarriers(), 4);
}
