use mixprec_core::{FixedFormat, RandomSource, Rounding};
use proptest::prelude::*;

fn format() -> impl Strategy<Value = FixedFormat> {
    (1u32..=8, 0u32..=20).prop_map(|(m, n)| FixedFormat::signed(m, n).unwrap())
}

fn in_range(f: FixedFormat) -> impl Strategy<Value = (FixedFormat, f64)> {
    (f.min_value()..=f.max_value()).prop_map(move |x| (f, x))
}

fn on_grid(f: &FixedFormat, v: f64) -> bool {
    (v / f.epsilon()).fract() == 0.0 && v >= f.min_value() && v <= f.max_value()
}

proptest! {
    #[test]
    fn nearest_is_within_half_a_step((f, x) in format().prop_flat_map(in_range)) {
        let v = f.round_nearest(x).unwrap().to_f64();
        prop_assert!((v - x).abs() <= f.epsilon() / 2.0);
        prop_assert!(on_grid(&f, v));
    }

    #[test]
    fn stochastic_picks_a_neighbour((f, x) in format().prop_flat_map(in_range), seed in any::<u64>()) {
        let mut rng = RandomSource::new(seed);
        let v = f.round_stochastic(x, &mut rng).unwrap().to_f64();
        prop_assert!((v - x).abs() < f.epsilon());
        prop_assert!(on_grid(&f, v));
        let lo = f.floor_to_grid(x).unwrap().to_f64();
        prop_assert!(v == lo || v == lo + f.epsilon());
    }

    #[test]
    fn every_operation_stays_on_the_grid(
        f in format(),
        a in any::<i64>(),
        b in any::<i64>(),
        seed in any::<u64>(),
    ) {
        let (x, y) = (f.from_raw(a), f.from_raw(b));
        let mut rng = RandomSource::new(seed);
        let results = [
            x.add(&y).unwrap(),
            x.sub(&y).unwrap(),
            x.neg(),
            x.mul(&y, Rounding::Nearest, &mut rng).unwrap(),
            x.mul(&y, Rounding::Stochastic, &mut rng).unwrap(),
        ];
        for r in results {
            prop_assert!(r.raw() >= f.min_raw() && r.raw() <= f.max_raw());
            prop_assert!(on_grid(&f, r.to_f64()));
        }
    }

    #[test]
    fn sums_are_exact_or_saturated(f in format(), a in any::<i32>(), b in any::<i32>()) {
        let (x, y) = (f.from_raw(a as i64), f.from_raw(b as i64));
        let exact = x.raw() as i128 + y.raw() as i128;
        let got = x.add(&y).unwrap().raw() as i128;
        let want = exact.clamp(f.min_raw() as i128, f.max_raw() as i128);
        prop_assert_eq!(got, want);
    }

    #[test]
    fn nearest_product_is_within_half_a_step(f in format(), a in any::<i16>(), b in any::<i16>()) {
        let (x, y) = (f.from_raw(a as i64), f.from_raw(b as i64));
        let exact = x.to_f64() * y.to_f64();
        prop_assume!(exact >= f.min_value() && exact <= f.max_value());
        let got = x.mul(&y, Rounding::Nearest, &mut RandomSource::new(0)).unwrap().to_f64();
        prop_assert!((got - exact).abs() <= f.epsilon() / 2.0);
    }

    #[test]
    fn stochastic_sequences_replay(f in format(), xs in prop::collection::vec(-1.0f64..1.0, 1..50), seed in any::<u64>()) {
        let run = || {
            let mut rng = RandomSource::new(seed);
            xs.iter()
                .map(|&x| f.quantize(x, Rounding::Stochastic, &mut rng).unwrap().raw())
                .collect::<Vec<_>>()
        };
        prop_assert_eq!(run(), run());
    }
}

#[test]
fn unsigned_patterns_are_weighted_bit_sums() {
    for m in 1..=12 {
        for n in 0..=12 - m {
            let f = FixedFormat::unsigned(m, n).unwrap();
            for bits in 0..1u64 << (m + n) {
                let want: f64 = (0..m + n)
                    .filter(|i| bits >> i & 1 == 1)
                    .map(|i| 2f64.powi(i as i32 - n as i32))
                    .sum();
                assert_eq!(f.from_unsigned_bits(bits).unwrap().to_f64(), want);
            }
        }
    }
}
