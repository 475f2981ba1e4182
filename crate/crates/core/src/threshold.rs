//! Global thresholding: Otsu's automatic method and fixed thresholds.
//!
//! The foreground convention everywhere is strictly-greater-than: a pixel is
//! foreground iff its intensity exceeds the threshold, so `t = 255` selects
//! nothing and lowering `t` only adds foreground.

use num_bigint::BigInt;
use thiserror::Error;

use crate::raster::{BinaryMask, GrayImage, Histogram256};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ThresholdError {
    #[error("empty histogram: total pixel count is zero")]
    EmptyHistogram,
    #[error("threshold {0} out of range [0, 255]")]
    OutOfRange(i64),
}

/// A chosen threshold and the between-class variance it attains.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThresholdResult {
    /// Pixels with intensity strictly greater than `t` become foreground.
    pub t: u8,
    pub between_class_variance: f64,
}

/// Otsu's method: the threshold maximizing between-class variance
/// `sigma_b^2(t) = w0(t) * w1(t) * (mu0(t) - mu1(t))^2`, where class 0 holds
/// intensities `<= t` and class 1 intensities `> t`.
///
/// Candidates are compared in exact integer arithmetic, so ties are decided
/// by count equality alone and the smallest tying `t` wins. A histogram with
/// a single occupied bin has no two-class split; its intensity is returned
/// with variance 0, which makes the foreground empty.
pub fn otsu(hist: &Histogram256) -> Result<ThresholdResult, ThresholdError> {
    let total = hist.total();
    if total == 0 {
        return Err(ThresholdError::EmptyHistogram);
    }
    let bins = hist.bins();
    let weighted_sum: u64 = bins.iter().enumerate().map(|(v, &n)| v as u64 * n).sum();

    let lo = bins.iter().position(|&n| n > 0).unwrap();
    let hi = bins.iter().rposition(|&n| n > 0).unwrap();
    if lo == hi {
        return Ok(ThresholdResult {
            t: lo as u8,
            between_class_variance: 0.0,
        });
    }

    // sigma_b^2(t) = num(t)^2 / (w0 * w1 * N^2) with
    // num(t) = s0 * w1 - s1 * w0 over integer counts; the common N^2 factor
    // is dropped for the argmax and ratios are compared by cross-multiplying
    // in big-integer arithmetic.
    let mut w0: u64 = 0;
    let mut s0: u64 = 0;
    let mut best: Option<(u8, i128, u128)> = None;
    for (t, &count) in bins.iter().enumerate().take(hi).skip(lo) {
        w0 += count;
        s0 += t as u64 * count;
        let w1 = total - w0;
        let s1 = weighted_sum - s0;
        if w0 == 0 || w1 == 0 {
            continue;
        }
        let num = s0 as i128 * w1 as i128 - s1 as i128 * w0 as i128;
        let denom = w0 as u128 * w1 as u128;
        let better = match &best {
            None => true,
            Some((_, best_num, best_denom)) => {
                let lhs = BigInt::from(num) * BigInt::from(num) * BigInt::from(*best_denom);
                let rhs = BigInt::from(*best_num) * BigInt::from(*best_num) * BigInt::from(denom);
                lhs > rhs
            }
        };
        if better {
            best = Some((t as u8, num, denom));
        }
    }
    let (t, _, _) = best.expect("at least one two-class split exists");
    Ok(ThresholdResult {
        t,
        between_class_variance: variance_at(hist, t),
    })
}

/// A user-chosen fixed threshold. The reported variance is `sigma_b^2(t)`
/// computed from `hist` when one is supplied, otherwise 0.
pub fn fixed(t: i64, hist: Option<&Histogram256>) -> Result<ThresholdResult, ThresholdError> {
    if !(0..=255).contains(&t) {
        return Err(ThresholdError::OutOfRange(t));
    }
    let between_class_variance = hist.map_or(0.0, |h| variance_at(h, t as u8));
    Ok(ThresholdResult {
        t: t as u8,
        between_class_variance,
    })
}

/// Binarize: `mask[i] = 1` iff `img[i] > t`.
pub fn apply_threshold(img: &GrayImage, t: u8) -> BinaryMask {
    let data = img.data().iter().map(|&v| (v > t) as u8).collect();
    BinaryMask::new(img.width(), img.height(), data)
}

/// Between-class variance of the split at `t`, 0 if either class is empty.
pub fn variance_at(hist: &Histogram256, t: u8) -> f64 {
    let bins = hist.bins();
    let total = hist.total();
    if total == 0 {
        return 0.0;
    }
    let w0: u64 = bins[..=t as usize].iter().sum();
    let s0: u64 = bins[..=t as usize]
        .iter()
        .enumerate()
        .map(|(v, &n)| v as u64 * n)
        .sum();
    let w1 = total - w0;
    if w0 == 0 || w1 == 0 {
        return 0.0;
    }
    let weighted_sum: u64 = bins.iter().enumerate().map(|(v, &n)| v as u64 * n).sum();
    let s1 = weighted_sum - s0;
    let num = s0 as i128 * w1 as i128 - s1 as i128 * w0 as i128;
    let num = num as f64;
    num * num / (w0 as f64 * w1 as f64 * total as f64 * total as f64)
}
