use serde::Serialize;

use super::ClassifierError;

/// Empirical distribution of a sample, kept as sorted values.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EmpiricalCdf {
    values: Vec<f64>,
}

impl EmpiricalCdf {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Share of the sample strictly below `x`.
    pub fn fraction_below(&self, x: f64) -> f64 {
        let below = self.values.partition_point(|&v| v < x);
        below as f64 / self.values.len() as f64
    }

    /// Smallest sample value `v` with at least `q` of the sample at or below it.
    pub fn quantile(&self, q: f64) -> f64 {
        let n = self.values.len();
        let rank = ((q.clamp(0.0, 1.0) * n as f64).ceil() as usize).clamp(1, n);
        self.values[rank - 1]
    }

    /// `(value, cumulative_fraction)` steps: for each distinct value, the
    /// share of the sample at or below it.
    pub fn steps(&self) -> Vec<(f64, f64)> {
        let n = self.values.len() as f64;
        let mut out: Vec<(f64, f64)> = Vec::new();
        for (i, &v) in self.values.iter().enumerate() {
            let frac = (i + 1) as f64 / n;
            match out.last_mut() {
                Some(last) if last.0 == v => last.1 = frac,
                _ => out.push((v, frac)),
            }
        }
        out
    }
}

pub fn compute_cdf<I>(values: I) -> Result<EmpiricalCdf, ClassifierError>
where
    I: IntoIterator<Item = f64>,
{
    let mut values: Vec<f64> = values.into_iter().collect();
    if values.is_empty() {
        return Err(ClassifierError::EmptySample);
    }
    if values.iter().any(|v| v.is_nan()) {
        return Err(ClassifierError::NanSample);
    }
    values.sort_by(f64::total_cmp);
    Ok(EmpiricalCdf { values })
}

pub fn fraction_below(cdf: &EmpiricalCdf, x: f64) -> f64 {
    cdf.fraction_below(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn strict_fraction_examples() {
        let cdf = compute_cdf([1.0, 2.0, 3.0]).unwrap();
        assert!((cdf.fraction_below(2.5) - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(compute_cdf([5.0]).unwrap().fraction_below(5.0), 0.0);
        assert!(matches!(
            compute_cdf(Vec::new()),
            Err(ClassifierError::EmptySample)
        ));
        assert!(matches!(
            compute_cdf([f64::NAN]),
            Err(ClassifierError::NanSample)
        ));
    }

    #[test]
    fn quantile_and_steps() {
        let cdf = compute_cdf([4.0, 1.0, 3.0, 3.0]).unwrap();
        assert_eq!(cdf.quantile(0.5), 3.0);
        assert_eq!(cdf.quantile(0.0), 1.0);
        assert_eq!(cdf.quantile(1.0), 4.0);
        assert_eq!(cdf.steps(), vec![(1.0, 0.25), (3.0, 0.75), (4.0, 1.0)]);
    }

    proptest! {
        #[test]
        fn monotone_and_bounded(mut xs in proptest::collection::vec(-1e6f64..1e6, 1..200), a in -2e6f64..2e6, b in -2e6f64..2e6) {
            let cdf = compute_cdf(xs.clone()).unwrap();
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(cdf.fraction_below(lo) <= cdf.fraction_below(hi));
            xs.sort_by(f64::total_cmp);
            prop_assert_eq!(cdf.fraction_below(xs[0]), 0.0);
            prop_assert_eq!(cdf.fraction_below(xs[xs.len() - 1] + 1.0), 1.0);
        }
    }
}
