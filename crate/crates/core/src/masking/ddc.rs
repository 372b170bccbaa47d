//! Gradient-driven edge masks and the score-driven ablations.
//!
//! Pipeline for one layer: take absolute scores, z-score them over the whole
//! layer, turn each z into a candidate probability `q` gated at `tau`, lift
//! it to `min(p + p_g * q, 1)` and sample one Bernoulli per edge.

use super::policy::{Direction, DropPolicy, MaskOutcome};
use crate::error::{Error, Result};
use crate::math::{bernoulli_mask, sigmoid, zscore, Matrix, Rng};

fn check_tau(tau: f64) -> Result<()> {
    if (0.0..=1.0).contains(&tau) {
        Ok(())
    } else {
        Err(Error::Domain(format!("tau = {tau} outside [0, 1]")))
    }
}

/// Candidate probabilities `q = 1 - sigmoid(z)`, zeroed where below `tau`.
pub fn ddc_candidate_probs(z: &Matrix, tau: f64) -> Result<Matrix> {
    candidate_probs(z, tau, Direction::DropSmall)
}

/// Candidate probabilities for either direction.
///
/// `DropSmall` uses `1 - sigmoid(z)` (low scores favoured for dropping),
/// `DropBig` uses `sigmoid(z)`. Values below `tau` become 0; a value equal to
/// `tau` survives.
pub fn candidate_probs(z: &Matrix, tau: f64, direction: Direction) -> Result<Matrix> {
    check_tau(tau)?;
    z.check_finite("candidate_probs")?;
    Ok(z.map(|zij| {
        let q = match direction {
            Direction::DropSmall => 1.0 - sigmoid(zij),
            Direction::DropBig => sigmoid(zij),
        };
        if q >= tau {
            q
        } else {
            0.0
        }
    }))
}

/// Final per-edge drop probabilities `min(p + p_g * q, 1)`.
pub fn ddc_drop_probs(q: &Matrix, p: f64, p_g: f64) -> Result<Matrix> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::Domain(format!("p = {p} outside [0, 1]")));
    }
    if !(p_g >= 0.0 && p_g.is_finite()) {
        return Err(Error::Domain(format!("p_g = {p_g} must be >= 0")));
    }
    if let Some(v) = q.as_slice().iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(Error::Domain(format!("candidate probability {v} outside [0, 1]")));
    }
    Ok(q.map(|qij| (p + p_g * qij).min(1.0)))
}

/// Realized drop rate: the fraction of ones in a (0,1)-mask.
pub fn realized_drop_rate(mask: &Matrix) -> Result<f64> {
    let mut ones = 0usize;
    for &v in mask.as_slice() {
        if v == 1.0 {
            ones += 1;
        } else if v != 0.0 {
            return Err(Error::Domain(format!("mask entry {v} is not 0 or 1")));
        }
    }
    Ok(ones as f64 / mask.len() as f64)
}

/// Samples a mask from per-edge probabilities and packages the outcome.
pub fn sample_outcome(probs: Matrix, rng: &mut Rng) -> Result<MaskOutcome> {
    let mask = bernoulli_mask(&probs, rng)?;
    let drop_rate = realized_drop_rate(&mask)?;
    Ok(MaskOutcome {
        mask,
        drop_rate,
        probs,
    })
}

/// Drop probabilities for a score matrix (before sampling).
pub fn scored_drop_probs(
    scores: &Matrix,
    direction: Direction,
    policy: &DropPolicy,
) -> Result<Matrix> {
    policy.validate()?;
    let magnitudes = scores.map(f64::abs);
    let z = zscore(&magnitudes, policy.zscore_denominator)?;
    let q = candidate_probs(&z, policy.tau, direction)?;
    ddc_drop_probs(&q, policy.p, policy.p_g)
}

/// Mask for a layer from its most recent weight gradients.
///
/// Identical to [`generate_variant_mask`] with `Direction::DropSmall` on the
/// gradients, including the random draws consumed.
pub fn generate_ddc_mask(grads: &Matrix, policy: &DropPolicy, rng: &mut Rng) -> Result<MaskOutcome> {
    generate_variant_mask(grads, Direction::DropSmall, policy, rng)
}

/// Mask for the ablation strategies. `scores` is `|G|` or `|W|`.
pub fn generate_variant_mask(
    scores: &Matrix,
    direction: Direction,
    policy: &DropPolicy,
    rng: &mut Rng,
) -> Result<MaskOutcome> {
    let probs = scored_drop_probs(scores, direction, policy)?;
    sample_outcome(probs, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::masking::baselines::dropconnect_mask;

    fn oracle_sigmoid(x: f64) -> f64 {
        1.0 / (1.0 + (-x).exp())
    }

    #[test]
    fn candidate_at_zero_survives_the_gate() {
        let z = Matrix::row(&[0.0, 10.0, -1.0]).unwrap();
        let q = ddc_candidate_probs(&z, 0.5).unwrap();
        assert_eq!(q.get(0, 0), 0.5);
        assert_eq!(q.get(0, 1), 0.0);
        assert!((q.get(0, 2) - oracle_sigmoid(1.0)).abs() < 1e-15);
        assert!((q.get(0, 2) - 0.7311).abs() < 1e-4);
    }

    #[test]
    fn candidate_rejects_bad_tau() {
        let z = Matrix::zeros(1, 1);
        assert!(ddc_candidate_probs(&z, 1.2).is_err());
    }

    #[test]
    fn drop_probs_arithmetic() {
        let q = Matrix::row(&[0.0, 0.3, 0.9]).unwrap();
        let p = ddc_drop_probs(&q, 0.2, 0.0).unwrap();
        assert_eq!(p.as_slice(), &[0.2, 0.2, 0.2]);

        let q = Matrix::row(&[0.731]).unwrap();
        assert_eq!(ddc_drop_probs(&q, 0.9, 0.5).unwrap().get(0, 0), 1.0);

        let q = Matrix::row(&[0.5]).unwrap();
        let v = ddc_drop_probs(&q, 0.1, 0.4).unwrap().get(0, 0);
        assert!((v - 0.3).abs() < 1e-15);
    }

    #[test]
    fn drop_probs_validation() {
        let q = Matrix::row(&[0.5]).unwrap();
        assert!(ddc_drop_probs(&q, -0.1, 0.0).is_err());
        assert!(ddc_drop_probs(&q, 0.1, -1.0).is_err());
        assert!(ddc_drop_probs(&Matrix::row(&[1.5]).unwrap(), 0.1, 0.1).is_err());
    }

    #[test]
    fn equal_gradients_give_uniform_probabilities() {
        let policy = DropPolicy::ddc(0.2, 0.3);
        let out = generate_ddc_mask(&Matrix::zeros(3, 4), &policy, &mut Rng::new(1)).unwrap();
        for &v in out.probs.as_slice() {
            assert_eq!(v, 0.2 + 0.5 * 0.3);
        }
        let out = generate_ddc_mask(&Matrix::filled(3, 4, 7.0), &policy, &mut Rng::new(1)).unwrap();
        assert!(out.probs.as_slice().iter().all(|&v| v == 0.35));
    }

    #[test]
    fn zero_rates_give_empty_mask() {
        let mut rng = Rng::new(3);
        let grads = Matrix::from_fn(4, 4, |i, j| (i * 4 + j) as f64);
        let out = generate_ddc_mask(&grads, &DropPolicy::ddc(0.0, 0.0), &mut rng).unwrap();
        assert_eq!(out.mask, Matrix::zeros(4, 4));
        assert_eq!(out.drop_rate, 0.0);
    }

    #[test]
    fn large_gradient_edge_is_protected() {
        let grads = Matrix::from_rows(&[vec![10.0, 0.1], vec![0.1, 0.1]]).unwrap();
        let policy = DropPolicy::ddc(0.1, 0.5);
        let probs = scored_drop_probs(&grads, Direction::DropSmall, &policy).unwrap();

        // Hand computation: mean 2.575, population std sqrt(18.376875),
        // giving z = +sqrt(3) for the big entry and -1/sqrt(3) for the rest.
        let v = [10.0, 0.1, 0.1, 0.1];
        let mu = v.iter().sum::<f64>() / 4.0;
        let s = (v.iter().map(|x| (x - mu) * (x - mu)).sum::<f64>() / 4.0).sqrt();
        assert!(((10.0 - mu) / s - 3f64.sqrt()).abs() < 1e-12);
        let z_small = (0.1 - mu) / s;
        let q_small = 1.0 - oracle_sigmoid(z_small);
        assert!(q_small >= 0.5);

        assert_eq!(probs.get(0, 0), 0.1);
        for (i, j) in [(0, 1), (1, 0), (1, 1)] {
            assert!((probs.get(i, j) - (0.1 + 0.5 * q_small)).abs() < 1e-12);
            assert!(probs.get(0, 0) < probs.get(i, j));
        }
    }

    #[test]
    fn drop_big_flips_the_sign() {
        let z = Matrix::row(&[10.0, 1.0, -1.0]).unwrap();
        let q = candidate_probs(&z, 0.5, Direction::DropBig).unwrap();
        assert!(q.get(0, 0) > 0.9999);
        assert!((q.get(0, 1) - 0.7311).abs() < 1e-4);
        assert_eq!(q.get(0, 2), 0.0);
    }

    #[test]
    fn drop_big_on_symmetric_scores() {
        // |scores| = {1, 3}: two-point set, z = -1 / +1
        let scores = Matrix::row(&[-1.0, 3.0]).unwrap();
        let policy = DropPolicy::scored(crate::masking::DropKind::DropBigGradient, 0.0, 1.0);
        let probs = scored_drop_probs(&scores, Direction::DropBig, &policy).unwrap();
        assert_eq!(probs.get(0, 0), 0.0);
        assert!((probs.get(0, 1) - oracle_sigmoid(1.0)).abs() < 1e-15);
    }

    #[test]
    fn drop_small_on_gradients_equals_ddc() {
        let mut seed_rng = Rng::new(77);
        let grads = Matrix::from_fn(5, 6, |_, _| seed_rng.normal());
        let policy = DropPolicy::ddc(0.2, 0.6);
        let a = generate_ddc_mask(&grads, &policy, &mut Rng::new(4)).unwrap();
        let b = generate_variant_mask(&grads, Direction::DropSmall, &policy, &mut Rng::new(4)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn zero_gradient_rate_matches_dropconnect() {
        let mut seed_rng = Rng::new(5);
        let grads = Matrix::from_fn(7, 3, |_, _| seed_rng.normal());
        let ddc = generate_ddc_mask(&grads, &DropPolicy::ddc(0.35, 0.0), &mut Rng::new(9)).unwrap();
        let dc = dropconnect_mask(7, 3, 0.35, &mut Rng::new(9)).unwrap();
        assert_eq!(ddc.mask, dc.mask);
        assert_eq!(ddc.drop_rate, dc.drop_rate);
    }

    #[test]
    fn realized_rate_counts_ones() {
        assert_eq!(realized_drop_rate(&Matrix::zeros(3, 3)).unwrap(), 0.0);
        assert_eq!(realized_drop_rate(&Matrix::ones(3, 4)).unwrap(), 1.0);
        let m = Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 0.0]]).unwrap();
        assert_eq!(realized_drop_rate(&m).unwrap(), 0.25);
        assert!(realized_drop_rate(&Matrix::filled(1, 1, 0.5)).is_err());
    }

    fn zero_candidate_fraction(scores: impl Fn(&mut Rng) -> f64) -> f64 {
        let mut data = Rng::new(2024);
        let policy = DropPolicy::ddc(0.0, 1.0);
        let mut total = 0.0;
        for _ in 0..100 {
            let g = Matrix::from_fn(32, 32, |_, _| scores(&mut data));
            let probs = scored_drop_probs(&g, Direction::DropSmall, &policy).unwrap();
            total += probs.as_slice().iter().filter(|&&v| v == 0.0).count() as f64 / 1024.0;
        }
        total / 100.0
    }

    #[test]
    fn zero_candidate_fraction_for_normal_gradients() {
        // |g| is half-normal: q = 0 exactly when |g| exceeds its mean sqrt(2/pi),
        // which happens with probability 2 * (1 - Phi(sqrt(2/pi))) = 0.42494.
        let frac = zero_candidate_fraction(Rng::normal);
        assert!((frac - 0.42494).abs() < 0.01, "{frac}");
    }

    #[test]
    fn zero_candidate_fraction_for_symmetric_magnitudes() {
        // symmetric magnitude distribution: half of the z-scores are positive
        let frac = zero_candidate_fraction(|r| r.uniform_range(1.0, 2.0));
        assert!((frac - 0.5).abs() < 0.01, "{frac}");
    }
}
