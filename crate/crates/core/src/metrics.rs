use alloc::vec::Vec;

use crate::info::max_radius;
use crate::Error;

/// Percentage runtime gain of `a` over `b`: `(1 - a/b) * 100`. Losses are
/// negative.
pub fn gain(a_median: f64, b_median: f64) -> Result<f64, Error> {
    if !(b_median > 0.0) {
        return Err(Error::Argument("reference median must be positive"));
    }
    Ok((1.0 - a_median / b_median) * 100.0)
}

/// Radius covering 20% of the ring, rounded half up, within `[1, (P-1)/2]`.
pub fn radius_default(ranks: usize) -> usize {
    let r = libm::floor(0.2 * ranks as f64 + 0.5) as usize;
    r.clamp(1, max_radius(ranks))
}

/// Median of a sample; the mean of the two middle values for even sizes.
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v: Vec<f64> = values.to_vec();
    v.sort_by(f64::total_cmp);
    let mid = v.len() / 2;
    Some(if v.len() % 2 == 1 {
        v[mid]
    } else {
        (v[mid - 1] + v[mid]) / 2.0
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gain_examples() {
        assert!((gain(90.0, 100.0).unwrap() - 10.0).abs() < 1e-12);
        assert_eq!(gain(100.0, 100.0).unwrap(), 0.0);
        assert!((gain(2.139, 2.1).unwrap() + 1.857142857142857).abs() < 1e-9);
        assert!(gain(1.0, 0.0).is_err());
        assert!(gain(1.0, -3.0).is_err());
    }

    #[test]
    fn radius_examples() {
        assert_eq!(radius_default(64), 13);
        assert_eq!(radius_default(8), 2);
        assert_eq!(radius_default(2), 1);
        assert_eq!(radius_default(128), 26);
        assert_eq!(radius_default(3), 1);
    }

    #[test]
    fn median_odd_is_observed() {
        let xs = [3.0, 1.0, 2.0, 9.0, 4.0];
        assert_eq!(median(&xs), Some(3.0));
        assert_eq!(median(&[1.0, 2.0]), Some(1.5));
        assert_eq!(median(&[]), None);
    }
}
