// SPDX-License-Identifier: Apache-2.0

//! Small statistics toolbox: Gaussian tail functions, moments, Pearson and
//! Spearman correlation, percentiles and the pool-adjacent-violators
//! projection.

use libm::erfc;
use statrs::function::erf::erfc_inv;

use crate::scalar::Scalar;

/// Upper tail `P(Z > z)` of a standard normal variable.
pub fn normal_sf<T: Scalar>(z: T) -> T {
    T::lit(0.5 * erfc(z.as_f64() / std::f64::consts::SQRT_2))
}

/// Lower tail `P(Z <= z)` of a standard normal variable.
pub fn normal_cdf<T: Scalar>(z: T) -> T {
    T::lit(0.5 * erfc(-z.as_f64() / std::f64::consts::SQRT_2))
}

/// Inverse of [`normal_cdf`]. `p` must lie strictly inside (0, 1).
pub fn normal_quantile<T: Scalar>(p: T) -> T {
    T::lit(-std::f64::consts::SQRT_2 * erfc_inv(2.0 * p.as_f64()))
}

pub fn mean<T: Scalar>(xs: &[T]) -> Option<T> {
    if xs.is_empty() {
        return None;
    }
    let sum = xs.iter().fold(T::zero(), |acc, &x| acc + x);
    Some(sum / T::from_usize_lossy(xs.len()))
}

/// Sample standard deviation (n - 1 denominator).
pub fn std_dev<T: Scalar>(xs: &[T]) -> Option<T> {
    if xs.len() < 2 {
        return None;
    }
    let m = mean(xs)?;
    let ss = xs.iter().fold(T::zero(), |acc, &x| acc + (x - m) * (x - m));
    Some((ss / T::from_usize_lossy(xs.len() - 1)).sqrt())
}

/// Coefficient of variation, `std / |mean|`. `None` for a zero mean.
pub fn coefficient_of_variation<T: Scalar>(xs: &[T]) -> Option<T> {
    let m = mean(xs)?;
    let s = std_dev(xs)?;
    if m == T::zero() {
        return None;
    }
    Some(s / m.abs())
}

pub fn median<T: Scalar>(xs: &[T]) -> Option<T> {
    percentile(xs, T::lit(50.0))
}

/// Linearly interpolated percentile (`q` in percent) of an unsorted sample.
pub fn percentile<T: Scalar>(xs: &[T], q: T) -> Option<T> {
    if xs.is_empty() || xs.iter().any(|x| x.is_nan()) {
        return None;
    }
    let mut sorted = xs.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("NaN filtered above"));
    let rank = (q / T::lit(100.0)).max(T::zero()).min(T::one())
        * T::from_usize_lossy(sorted.len() - 1);
    let lo = rank.floor().to_usize().unwrap_or(0);
    let hi = rank.ceil().to_usize().unwrap_or(0).min(sorted.len() - 1);
    let frac = rank - rank.floor();
    Some(sorted[lo] + (sorted[hi] - sorted[lo]) * frac)
}

/// Pearson correlation from centered second moments.
///
/// Returns `None` when the series differ in length, have fewer than two
/// points, or either has zero variance.
pub fn pearson<T: Scalar>(xs: &[T], ys: &[T]) -> Option<T> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return None;
    }
    let mx = mean(xs)?;
    let my = mean(ys)?;
    let (mut sxx, mut syy, mut sxy) = (T::zero(), T::zero(), T::zero());
    for (&x, &y) in xs.iter().zip(ys) {
        let dx = x - mx;
        let dy = y - my;
        sxx = sxx + dx * dx;
        syy = syy + dy * dy;
        sxy = sxy + dx * dy;
    }
    if sxx <= T::zero() || syy <= T::zero() {
        return None;
    }
    let r = sxy / (sxx * syy).sqrt();
    Some(r.max(-T::one()).min(T::one()))
}

/// Ranks starting at 1, ties receive the average of their ranks.
pub fn average_ranks<T: Scalar>(xs: &[T]) -> Vec<T> {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&a, &b| xs[a].partial_cmp(&xs[b]).unwrap_or(std::cmp::Ordering::Equal));
    let mut ranks = vec![T::zero(); xs.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && xs[idx[j + 1]] == xs[idx[i]] {
            j += 1;
        }
        let avg = T::from_usize_lossy(i + j + 2) / T::lit(2.0);
        for &k in &idx[i..=j] {
            ranks[k] = avg;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman rank correlation (Pearson on average ranks).
pub fn spearman<T: Scalar>(xs: &[T], ys: &[T]) -> Option<T> {
    pearson(&average_ranks(xs), &average_ranks(ys))
}

/// Weighted L2 projection of `values` onto the cone of non-increasing
/// sequences (pool adjacent violators).
pub fn pav_non_increasing<T: Scalar>(values: &[T], weights: &[T]) -> Vec<T> {
    assert_eq!(values.len(), weights.len(), "one weight per value");
    // Blocks of (weighted mean, total weight, length).
    let mut blocks: Vec<(T, T, usize)> = Vec::with_capacity(values.len());
    for (&v, &w) in values.iter().zip(weights) {
        blocks.push((v, w, 1));
        while blocks.len() >= 2 {
            let (m2, w2, n2) = blocks[blocks.len() - 1];
            let (m1, w1, n1) = blocks[blocks.len() - 2];
            if m1 >= m2 {
                break;
            }
            blocks.truncate(blocks.len() - 2);
            let w = w1 + w2;
            let m = if w > T::zero() {
                (m1 * w1 + m2 * w2) / w
            } else {
                (m1 + m2) / T::lit(2.0)
            };
            blocks.push((m, w, n1 + n2));
        }
    }
    blocks
        .into_iter()
        .flat_map(|(m, _, n)| std::iter::repeat_n(m, n))
        .collect()
}
