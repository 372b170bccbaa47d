use serde::{Deserialize, Serialize};

use super::{Matrix, Rng};
use crate::error::{Error, Result};

/// Spread below this is treated as zero by [`zscore`].
pub const MIN_SPREAD: f64 = 1e-12;

/// What [`zscore`] divides the centered values by.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ZScoreDenominator {
    /// Population standard deviation.
    #[default]
    Stddev,
    /// Population variance (the square of the above), kept for comparison runs.
    Variance,
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Population mean and standard deviation over all entries.
pub fn mean_and_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Z-score normalization over every entry of `values`.
///
/// Returns all zeros when the spread is below [`MIN_SPREAD`].
pub fn zscore(values: &Matrix, denominator: ZScoreDenominator) -> Result<Matrix> {
    values.check_finite("zscore")?;
    let (mean, std) = mean_and_std(values.as_slice());
    let spread = match denominator {
        ZScoreDenominator::Stddev => std,
        ZScoreDenominator::Variance => std * std,
    };
    if !(spread >= MIN_SPREAD) {
        return Ok(Matrix::zeros(values.rows(), values.cols()));
    }
    let out = values.map(|v| (v - mean) / spread);
    out.check_finite("zscore")?;
    Ok(out)
}

/// Samples a (0,1)-matrix with `P(entry = 1) = probs_ij`.
///
/// Exactly one uniform draw is consumed per entry, in row-major order, so two
/// probability matrices with equal entries give bit-identical masks from equal
/// generator states.
pub fn bernoulli_mask(probs: &Matrix, rng: &mut Rng) -> Result<Matrix> {
    if let Some(p) = probs.as_slice().iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(Error::Domain(format!("probability {p} outside [0, 1]")));
    }
    Ok(probs.map(|p| if rng.uniform() < p { 1.0 } else { 0.0 }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use crate::math::Rng;

    #[test]
    fn zscore_constant_input_is_zero() {
        let m = Matrix::ones(2, 2);
        assert_eq!(
            zscore(&m, ZScoreDenominator::Stddev).unwrap(),
            Matrix::zeros(2, 2)
        );
    }

    #[test]
    fn zscore_two_point() {
        let m = Matrix::row(&[0.0, 2.0]).unwrap();
        let z = zscore(&m, ZScoreDenominator::Stddev).unwrap();
        assert_eq!(z.as_slice(), &[-1.0, 1.0]);
    }

    #[test]
    fn zscore_variance_denominator() {
        // mean 2, population variance 4, std 2
        let m = Matrix::row(&[0.0, 4.0]).unwrap();
        let z = zscore(&m, ZScoreDenominator::Variance).unwrap();
        assert_eq!(z.as_slice(), &[-0.5, 0.5]);
    }

    #[test]
    fn zscore_rejects_non_finite() {
        let mut m = Matrix::zeros(1, 2);
        m.as_mut_slice()[0] = f64::INFINITY;
        assert!(matches!(
            zscore(&m, ZScoreDenominator::Stddev),
            Err(Error::NonFinite(_))
        ));
    }

    #[test]
    fn sigmoid_is_stable_at_extremes() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!(sigmoid(-800.0) >= 0.0);
        assert!(sigmoid(800.0) <= 1.0);
        assert!((sigmoid(1.0) - 1.0 / (1.0 + (-1.0f64).exp())).abs() < 1e-16);
    }

    #[test]
    fn bernoulli_degenerate_probabilities() {
        let mut rng = Rng::new(0);
        assert_eq!(
            bernoulli_mask(&Matrix::zeros(5, 5), &mut rng).unwrap(),
            Matrix::zeros(5, 5)
        );
        assert_eq!(
            bernoulli_mask(&Matrix::ones(5, 5), &mut rng).unwrap(),
            Matrix::ones(5, 5)
        );
    }

    #[test]
    fn bernoulli_rejects_out_of_range() {
        let mut rng = Rng::new(0);
        let p = Matrix::filled(2, 2, 1.5);
        assert!(matches!(
            bernoulli_mask(&p, &mut rng),
            Err(Error::Domain(_))
        ));
        let p = Matrix::filled(2, 2, -0.1);
        assert!(bernoulli_mask(&p, &mut rng).is_err());
    }

    #[test]
    fn bernoulli_frequency_over_seeds() {
        let probs = Matrix::filled(100, 100, 0.3);
        for seed in 0..50 {
            let mut rng = Rng::new(seed);
            let frac = bernoulli_mask(&probs, &mut rng).unwrap().mean();
            assert!((0.27..=0.33).contains(&frac), "seed {seed}: {frac}");
        }
    }

    proptest! {
        #[test]
        fn zscore_moments(data in prop::collection::vec(-1e3f64..1e3, 15)) {
            let m = Matrix::from_vec(3, 5, data).unwrap();
            let (_, s) = mean_and_std(m.as_slice());
            prop_assume!(s >= MIN_SPREAD * 1e3);
            let z = zscore(&m, ZScoreDenominator::Stddev).unwrap();
            let (mz, sz) = mean_and_std(z.as_slice());
            prop_assert!(mz.abs() < 1e-10);
            prop_assert!((sz - 1.0).abs() < 1e-10);
        }

        #[test]
        fn bernoulli_is_reproducible(seed in any::<u64>(), p in 0.0f64..=1.0) {
            let probs = Matrix::filled(8, 9, p);
            let a = bernoulli_mask(&probs, &mut Rng::new(seed)).unwrap();
            let b = bernoulli_mask(&probs, &mut Rng::new(seed)).unwrap();
            prop_assert_eq!(a, b);
        }

        #[test]
        fn bernoulli_frequency_bound(seed in any::<u64>(), p in 0.0f64..=1.0) {
            let n = 4096usize;
            let probs = Matrix::filled(64, 64, p);
            let frac = bernoulli_mask(&probs, &mut Rng::new(seed)).unwrap().mean();
            let bound = 5.0 * (p * (1.0 - p) / n as f64).sqrt();
            prop_assert!((frac - p).abs() <= bound + 1e-12, "p={} frac={}", p, frac);
        }
    }
}
