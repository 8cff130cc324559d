//! Compensated summation.
//!
//! Every increment sum in the crate (quadratic variation, Riemann sums,
//! Stieltjes sums) goes through [`KahanSum`] so that sums over 2^16 and
//! more increments keep identities such as polarization tight.

/// Neumaier's variant of Kahan summation.
#[derive(Debug, Clone, Copy, Default)]
pub struct KahanSum {
    sum: f64,
    comp: f64,
}

impl KahanSum {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    #[inline]
    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

impl std::iter::FromIterator<f64> for KahanSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut s = KahanSum::new();
        for x in iter {
            s.add(x);
        }
        s
    }
}

/// Compensated sum of an iterator.
pub fn ksum<I: IntoIterator<Item = f64>>(iter: I) -> f64 {
    iter.into_iter().collect::<KahanSum>().value()
}

/// Running compensated sums: `out[0] = 0`, `out[j+1] = out[j] + terms[j]`.
pub fn cumulative(terms: impl IntoIterator<Item = f64>) -> Vec<f64> {
    let iter = terms.into_iter();
    let mut out = Vec::with_capacity(iter.size_hint().0 + 1);
    let mut acc = KahanSum::new();
    out.push(0.0);
    for x in iter {
        acc.add(x);
        out.push(acc.value());
    }
    out
}

/// Distance between two floats in units in the last place of `scale`.
pub fn ulps_of(diff: f64, scale: f64) -> f64 {
    let s = scale.abs().max(f64::MIN_POSITIVE);
    diff.abs() / (s * f64::EPSILON)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recovers_cancelled_terms() {
        let terms = [1.0, 1e100, 1.0, -1e100];
        assert_eq!(ksum(terms), 2.0);
        let naive: f64 = terms.iter().sum();
        assert_eq!(naive, 0.0);
    }

    #[test]
    fn cumulative_starts_at_zero() {
        let c = cumulative([1.0, 2.0, 3.0]);
        assert_eq!(c, vec![0.0, 1.0, 3.0, 6.0]);
    }

    #[test]
    fn many_small_terms() {
        let n = 1 << 20;
        let s = ksum((0..n).map(|_| 0.1));
        assert!((s - 0.1 * n as f64).abs() <= 1e-9);
    }
}
