use eos_core::dynamics::{gd_step, gfs_sharpness_lower_bound, predicted_product_step, product_deviation_step};
use eos_core::gf_exact::{gfs_sharpness, weight_from_product, BalanceSignature};
use eos_core::order_theory::{balance_leq, log_majorizes, sample_log_majorizing_pair};
use eos_core::scalar_net::{gradient, leave_one_out_products, loss, sharpness, WeightVector};
use eos_core::stability_set::in_stability_set;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn weights(depth: std::ops::RangeInclusive<usize>) -> impl Strategy<Value = WeightVector> {
    depth
        .prop_flat_map(|d| prop::collection::vec((0.2f64..2.5, any::<bool>()), d))
        .prop_map(|v| WeightVector::new(v.into_iter().map(|(x, neg)| if neg { -x } else { x }).collect()).unwrap())
}

/// Positive-product weights with log-spread `sigma`, product `pi` and step size `eta`.
fn member_candidate() -> impl Strategy<Value = (WeightVector, f64)> {
    (2usize..=4)
        .prop_flat_map(|d| {
            (
                prop::collection::vec(-1.0f64..1.0, d),
                0.0f64..1.0,
                0.1f64..2.5,
                prop::sample::select(vec![0.05, 0.2, 0.5]),
                any::<bool>(),
            )
        })
        .prop_map(|(logs, sigma, pi, eta, flip)| {
            let d = logs.len();
            let shift = (pi.ln() - sigma * logs.iter().sum::<f64>()) / d as f64;
            let mut w: Vec<f64> = logs.iter().map(|l| (sigma * l + shift).exp()).collect();
            if flip {
                w[0] = -w[0];
                w[d - 1] = -w[d - 1];
            }
            (WeightVector::new(w).unwrap(), eta)
        })
}

proptest! {
    #[test]
    fn gfs_is_constant_along_the_flow_curve(w in weights(2..=6), x in 0.05f64..5.0) {
        prop_assume!(w.product() > 0.0);
        let sig = BalanceSignature::of(&w);
        let v = weight_from_product(&sig, x).unwrap();
        prop_assert!((v.product() - x).abs() <= 1e-10 * x);
        let (a, b) = (gfs_sharpness(&w).unwrap(), gfs_sharpness(&v).unwrap());
        prop_assert!((a - b).abs() <= 1e-9 * a, "{} vs {}", a, b);
    }

    #[test]
    fn sharpness_at_a_minimum_is_the_gfs_sharpness(w in weights(2..=6)) {
        prop_assume!(w.product() > 0.0);
        let at_min = weight_from_product(&BalanceSignature::of(&w), 1.0).unwrap();
        let (s, phi) = (sharpness(&at_min), gfs_sharpness(&w).unwrap());
        prop_assert!((s - phi).abs() <= 1e-9 * phi);
        prop_assert!(loss(&at_min) < 1e-24);
    }

    #[test]
    fn leave_one_out_matches_division(w in weights(2..=6)) {
        let p = w.product();
        for (i, l) in leave_one_out_products(w.as_slice()).iter().enumerate() {
            let expected = p / w.as_slice()[i];
            prop_assert!((l - expected).abs() <= 1e-12 * expected.abs().max(1e-300));
        }
        let g = gradient(&w);
        prop_assert_eq!(g.len(), w.depth());
    }

    #[test]
    fn deviation_form_matches_product_form(w in weights(2..=5), eta in 0.01f64..0.5) {
        prop_assume!(w.product() > 0.0);
        let sig = BalanceSignature::of(&w);
        let x = w.product();
        let q = predicted_product_step(&sig, x, eta).unwrap();
        let e = product_deviation_step(&sig, x - 1.0, eta).unwrap();
        prop_assert!((q - (1.0 + e)).abs() <= 1e-12 * q.abs().max(x));
    }

    #[test]
    fn gd_decreases_balances_inside_the_set((w, eta) in member_candidate()) {
        prop_assume!(in_stability_set(&w, eta).unwrap().member);
        let next = gd_step(&w, eta).unwrap();
        prop_assert!(balance_leq(&next, &w).unwrap());
    }

    #[test]
    fn gd_preserves_signs_inside_the_set((w, eta) in member_candidate()) {
        prop_assume!(in_stability_set(&w, eta).unwrap().member);
        let next = gd_step(&w, eta).unwrap();
        for (a, b) in w.as_slice().iter().zip(next.as_slice()) {
            prop_assert_eq!(a.signum(), b.signum());
        }
    }

    #[test]
    fn gfs_sharpness_drops_by_a_bounded_amount((w, eta) in member_candidate()) {
        prop_assume!(in_stability_set(&w, eta).unwrap().member);
        let next = gd_step(&w, eta).unwrap();
        let phi = gfs_sharpness(&w).unwrap();
        let bound = gfs_sharpness_lower_bound(phi, eta, w.product(), loss(&w));
        prop_assert!(gfs_sharpness(&next).unwrap() >= bound - 1e-9);
    }

    #[test]
    fn membership_depends_only_on_squares_and_product((w, eta) in member_candidate()) {
        let flipped: Vec<f64> = w.as_slice().iter().enumerate()
            .map(|(i, v)| if i < 2 { -v } else { *v }).collect();
        let a = in_stability_set(&w, eta).unwrap();
        let b = in_stability_set(&WeightVector::new(flipped).unwrap(), eta).unwrap();
        prop_assert_eq!(a.member, b.member);
    }

    #[test]
    fn generated_pairs_log_majorize(seed in any::<u64>(), depth in 2usize..=6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pair = sample_log_majorizing_pair(depth, &mut rng);
        prop_assert!(log_majorizes(&pair.u, &pair.v).unwrap());
    }
}
