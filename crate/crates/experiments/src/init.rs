//! The symmetric-pair family `[a, …, a, b, …, b]` indexed by initial GFS
//! sharpness and product.

use eos_core::gf_exact::{weight_from_product, BalanceSignature};
use eos_core::scalar_net::WeightVector;
use eos_core::{Error, Result};

/// Offset `c` of the family member with GFS sharpness `phi0`.
///
/// At product one the squares are `u` and `u + c` with `u(u + c) = 1`, so
/// `φ = (D/2)(1/u + 1/(u + c)) = (D/2)·√(c² + 4)`.
pub fn family_offset(depth: usize, phi0: f64) -> Result<f64> {
    if depth < 2 || !depth.is_multiple_of(2) {
        return Err(Error::InvalidArgument(format!("the family needs an even depth, got {depth}")));
    }
    let half = depth as f64 / 2.0;
    if !(phi0.is_finite() && phi0 >= depth as f64) {
        return Err(Error::InvalidArgument(format!(
            "phi0 = {phi0} is infeasible: the family has GFS sharpness at least {depth}"
        )));
    }
    let r = phi0 / half;
    Ok(((r - 2.0) * (r + 2.0)).max(0.0).sqrt())
}

/// Signature `[c, …, c, 0, …, 0]` with half the coordinates offset.
pub fn family_signature(depth: usize, phi0: f64) -> Result<BalanceSignature> {
    let c = family_offset(depth, phi0)?;
    let mut offsets = vec![c; depth / 2];
    offsets.resize(depth, 0.0);
    BalanceSignature::from_offsets(offsets)
}

/// The family member with GFS sharpness `phi0` and product `pi0`.
pub fn init_from_phi_pi(depth: usize, phi0: f64, pi0: f64) -> Result<WeightVector> {
    weight_from_product(&family_signature(depth, phi0)?, pi0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use eos_core::gf_exact::gfs_sharpness;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn balanced_at_minimum() {
        let w = init_from_phi_pi(4, 4.0, 1.0).unwrap();
        for v in w.as_slice() {
            assert!((v - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn recovers_reference_offsets() {
        let w = WeightVector::new(vec![12.5, 12.5, 0.05, 0.05]).unwrap();
        let phi = gfs_sharpness(&w).unwrap();
        let c = family_offset(4, phi).unwrap();
        assert!((c - 156.2475).abs() < 1e-8, "{c}");
        let back = init_from_phi_pi(4, phi, w.product()).unwrap();
        for (a, b) in back.as_slice().iter().zip(w.as_slice()) {
            assert!((a - b).abs() < 1e-10 * b, "{a} vs {b}");
        }
    }

    #[test]
    fn round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..500 {
            let depth = 2 * rng.random_range(1..=4);
            let phi0 = depth as f64 * rng.random_range(1.0..50.0);
            let pi0 = rng.random_range(0.05..4.0);
            let w = init_from_phi_pi(depth, phi0, pi0).unwrap();
            let phi = gfs_sharpness(&w).unwrap();
            assert!((phi - phi0).abs() < 1e-8 * phi0, "{phi} vs {phi0}");
            assert!((w.product() - pi0).abs() < 1e-12 * pi0.max(1.0));
        }
    }

    #[test]
    fn infeasible_inputs() {
        assert!(init_from_phi_pi(4, 3.9, 1.0).is_err());
        assert!(init_from_phi_pi(3, 5.0, 1.0).is_err());
        assert!(init_from_phi_pi(4, 5.0, -1.0).is_err());
    }
}
