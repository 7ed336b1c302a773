use cascade_transfer::oracles;
use cascade_transfer::simulator::{commutator_check, integrate_transfer, integrate_transfer_lossy, IntegratorConfig};
use cascade_transfer::{profile_value, CouplingProfile, SystemParams, TimeGrid};
use proptest::prelude::*;

proptest! {
    #[test]
    fn optimal_profile_is_increasing_and_positive(
        gamma in 0.05f64..20.0,
        gt in 0.1f64..15.0,
        cut_frac in 1e-4f64..0.2,
    ) {
        let t_end = gt / gamma;
        let p = SystemParams::lossless(gamma, t_end);
        let c = CouplingProfile::optimal(cut_frac * t_end);
        let cut = t_end - cut_frac * t_end;
        let mut prev = 0.0;
        for k in 0..=200 {
            let t = cut * k as f64 / 200.0;
            let v = profile_value(&c, &p, t).unwrap();
            prop_assert!(v > prev || (v == prev && v == 0.0));
            prev = v;
        }
        // held value beyond the cut
        prop_assert!(profile_value(&c, &p, t_end).unwrap() > 0.0);
    }

    #[test]
    fn optimal_profile_identity(gamma in 0.05f64..20.0, gt in 0.1f64..15.0, frac in 0.0f64..0.999) {
        let t_end = gt / gamma;
        let t = frac * t_end;
        let g1 = oracles::optimal_profile(gamma, t_end, t).unwrap();
        let back = g1 * (2.0 * gamma * (t_end - t)).exp_m1();
        prop_assert!((back / gamma - 1.0).abs() < 1e-12);
    }

    #[test]
    fn sampled_profiles_are_nonnegative(values in prop::collection::vec(0.0f64..50.0, 2..40), t in 0.0f64..1.0) {
        let n = values.len();
        let p = SystemParams::lossless(1.0, 2.0);
        let c = CouplingProfile::sampled(TimeGrid::new(2.0, n).unwrap(), values).unwrap();
        prop_assert!(profile_value(&c, &p, 2.0 * t).unwrap() >= 0.0);
    }

    #[test]
    fn optimal_fidelity_is_monotone(gamma in 0.1f64..10.0, gt in 0.01f64..20.0, a in 0.0f64..1.0, b in 0.0f64..1.0) {
        let t_end = gt / gamma;
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        prop_assert!(oracles::fidelity_optimal(gamma, t_end, lo * t_end) <= oracles::fidelity_optimal(gamma, t_end, hi * t_end));
        prop_assert!(oracles::fidelity_optimal_final(gamma, lo * t_end + 1e-9) <= oracles::fidelity_optimal_final(gamma, hi * t_end + 1e-9));
    }

    #[test]
    fn lossless_oracle_reduction_is_bitwise(gamma in 0.01f64..50.0, gt in 1e-3f64..20.0, frac in 0.0f64..=1.0) {
        let t_end = gt / gamma;
        let p = SystemParams::lossless(gamma, t_end);
        let t = frac * t_end;
        prop_assert_eq!(
            oracles::fidelity_lossy(&p, t).unwrap().to_bits(),
            oracles::fidelity_optimal(gamma, t_end, t).to_bits()
        );
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn sum_rule_holds_for_random_links(
        gamma in 0.3f64..3.0,
        gt in 1.0f64..6.0,
        rate in 0.0f64..3.0,
        eta in 0.5f64..=1.0,
        loss_frac in 0.0f64..0.2,
        optimal in any::<bool>(),
    ) {
        let t_end = gt / gamma;
        let p = SystemParams::lossless(gamma, t_end).with_losses(loss_frac * gamma, eta);
        let c = if optimal {
            CouplingProfile::optimal(1e-2 * t_end)
        } else {
            CouplingProfile::constant(rate * gamma)
        };
        let cfg = IntegratorConfig::rk4(1000).with_kernels();
        let lossless = commutator_check(&integrate_transfer(&c, &p, &cfg).unwrap()).unwrap();
        prop_assert!(lossless.max_abs() < 1e-6, "lossless deficit {}", lossless.max_abs());
        let lossy = commutator_check(&integrate_transfer_lossy(&c, &p, &cfg).unwrap()).unwrap();
        prop_assert!(lossy.max_abs() < 1e-6, "lossy deficit {}", lossy.max_abs());
    }
}
