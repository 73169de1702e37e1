use serde::{Deserialize, Serialize};

use super::FitError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegressionSummary {
    pub slope: f64,
    pub intercept: f64,
    pub pearson_r: f64,
    pub n_points: usize,
    pub n_outliers_removed: usize,
    /// `None` when no rejection was asked for.
    pub outlier_threshold_sd: Option<f64>,
}

/// Mean and sample standard deviation (`None` for fewer than two values).
pub fn mean_sd(xs: &[f64]) -> (f64, Option<f64>) {
    let n = xs.len();
    if n == 0 {
        return (f64::NAN, None);
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, None);
    }
    let ss: f64 = xs.iter().map(|x| (x - mean).powi(2)).sum();
    (mean, Some((ss / (n - 1) as f64).sqrt()))
}

struct Moments {
    mx: f64,
    my: f64,
    sxx: f64,
    syy: f64,
    sxy: f64,
}

fn moments(pairs: &[(f64, f64)]) -> Moments {
    let n = pairs.len() as f64;
    let mx = pairs.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pairs.iter().map(|p| p.1).sum::<f64>() / n;
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for &(x, y) in pairs {
        let (dx, dy) = (x - mx, y - my);
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    Moments { mx, my, sxx, syy, sxy }
}

/// Ordinary least squares `y = slope * x + intercept`.
pub fn ols(pairs: &[(f64, f64)]) -> Result<(f64, f64), FitError> {
    if pairs.len() < 2 {
        return Err(FitError::Statistics(format!("need at least 2 points, got {}", pairs.len())));
    }
    let m = moments(pairs);
    if !(m.sxx > 0.0) {
        return Err(FitError::Statistics("x has zero variance; slope undefined".into()));
    }
    let slope = m.sxy / m.sxx;
    Ok((slope, m.my - slope * m.mx))
}

/// Pearson correlation; 0 when `y` is constant.
pub fn pearson_r(pairs: &[(f64, f64)]) -> Result<f64, FitError> {
    if pairs.len() < 2 {
        return Err(FitError::Statistics(format!("need at least 2 points, got {}", pairs.len())));
    }
    let m = moments(pairs);
    if !(m.sxx > 0.0) {
        return Err(FitError::Statistics("x has zero variance; correlation undefined".into()));
    }
    if m.syy == 0.0 {
        return Ok(0.0);
    }
    Ok((m.sxy / (m.sxx * m.syy).sqrt()).clamp(-1.0, 1.0))
}

/// OLS, then one pass removing points whose residual exceeds
/// `threshold_sd` residual standard deviations, then a refit.
pub fn regress_with_outlier_rejection(
    pairs: &[(f64, f64)],
    threshold_sd: f64,
) -> Result<RegressionSummary, FitError> {
    if pairs.len() < 3 {
        return Err(FitError::Statistics(format!("need at least 3 points, got {}", pairs.len())));
    }
    if !(threshold_sd > 0.0) {
        return Err(FitError::Statistics(format!("threshold must be positive, got {threshold_sd}")));
    }
    if pairs.iter().any(|(x, y)| !x.is_finite() || !y.is_finite()) {
        return Err(FitError::Statistics("non-finite input pair".into()));
    }
    let (a, b) = ols(pairs)?;
    let resid: Vec<f64> = pairs.iter().map(|&(x, y)| y - (a * x + b)).collect();
    let (_, sd) = mean_sd(&resid);
    let sd = sd.unwrap_or(0.0);
    // residuals at rounding level are not outliers
    let scale = pairs.iter().map(|p| p.1.abs()).fold(0.0, f64::max);
    let floor = f64::EPSILON.sqrt() * (1.0 + scale);
    let kept: Vec<(f64, f64)> = if threshold_sd.is_finite() && sd > floor {
        pairs
            .iter()
            .zip(&resid)
            .filter(|(_, r)| r.abs() <= threshold_sd * sd)
            .map(|(p, _)| *p)
            .collect()
    } else {
        pairs.to_vec()
    };
    if kept.len() < 2 {
        return Err(FitError::Statistics("outlier rejection left fewer than 2 points".into()));
    }
    let (slope, intercept) = ols(&kept)?;
    Ok(RegressionSummary {
        slope,
        intercept,
        pearson_r: pearson_r(&kept)?,
        n_points: kept.len(),
        n_outliers_removed: pairs.len() - kept.len(),
        outlier_threshold_sd: threshold_sd.is_finite().then_some(threshold_sd),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn exact_line() {
        let pairs: Vec<_> = (0..10).map(|i| (i as f64, 2.0 * i as f64 + 1.0)).collect();
        let s = regress_with_outlier_rejection(&pairs, 3.0).unwrap();
        assert!((s.slope - 2.0).abs() < 1e-12);
        assert!((s.intercept - 1.0).abs() < 1e-12);
        assert!((s.pearson_r - 1.0).abs() < 1e-12);
        assert_eq!(s.n_outliers_removed, 0);
        assert_eq!(s.n_points, 10);
    }

    #[test]
    fn one_gross_outlier_is_removed() {
        let mut pairs: Vec<_> = (0..20).map(|i| (i as f64, 2.0 * i as f64 + 1.0)).collect();
        pairs[7].1 += 100.0;
        // with 19 exact points the outlier's residual is about 4.2 residual SDs
        let (a, b) = ols(&pairs).unwrap();
        let resid: Vec<f64> = pairs.iter().map(|&(x, y)| y - a * x - b).collect();
        let sd = mean_sd(&resid).1.unwrap();
        assert!(resid[7] > 3.0 * sd);
        let s = regress_with_outlier_rejection(&pairs, 3.0).unwrap();
        assert_eq!(s.n_outliers_removed, 1);
        assert!((s.slope - 2.0).abs() < 1e-12);
        assert!((s.intercept - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rejection_is_single_pass() {
        // a second outlier hidden behind the first stays in
        let mut pairs: Vec<_> = (0..30).map(|i| (i as f64, i as f64)).collect();
        pairs[3].1 += 1000.0;
        pairs[20].1 += 3.0;
        let s = regress_with_outlier_rejection(&pairs, 3.0).unwrap();
        assert_eq!(s.n_outliers_removed, 1);
        assert_eq!(s.n_points, 29);
    }

    #[test]
    fn degenerate_inputs() {
        let flat_x = [(1.0, 1.0), (1.0, 2.0), (1.0, 3.0)];
        assert!(matches!(regress_with_outlier_rejection(&flat_x, 3.0), Err(FitError::Statistics(_))));
        assert!(matches!(regress_with_outlier_rejection(&[(0.0, 0.0), (1.0, 1.0)], 3.0), Err(FitError::Statistics(_))));
        assert!(matches!(
            regress_with_outlier_rejection(&[(0.0, 0.0), (1.0, 1.0), (2.0, f64::NAN)], 3.0),
            Err(FitError::Statistics(_))
        ));
    }

    #[test]
    fn constant_y_has_zero_correlation() {
        let pairs = [(0.0, 5.0), (1.0, 5.0), (2.0, 5.0), (3.0, 5.0)];
        let s = regress_with_outlier_rejection(&pairs, 3.0).unwrap();
        assert_eq!(s.slope, 0.0);
        assert_eq!(s.pearson_r, 0.0);
    }

    #[test]
    fn mean_sd_examples() {
        assert_eq!(mean_sd(&[3.0]), (3.0, None));
        let (m, sd) = mean_sd(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        assert!((sd.unwrap() - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
    }

    fn arb_pairs() -> impl Strategy<Value = Vec<(f64, f64)>> {
        prop::collection::vec((-100.0f64..100.0, -100.0f64..100.0), 3..60)
            .prop_filter("x must vary", |v| v.iter().any(|p| (p.0 - v[0].0).abs() > 1e-3))
    }

    proptest! {
        #[test]
        fn infinite_threshold_is_plain_ols(pairs in arb_pairs()) {
            let s = regress_with_outlier_rejection(&pairs, f64::INFINITY).unwrap();
            let (a, b) = ols(&pairs).unwrap();
            prop_assert_eq!(s.slope, a);
            prop_assert_eq!(s.intercept, b);
            prop_assert_eq!(s.n_outliers_removed, 0);
        }

        #[test]
        fn pearson_is_affine_invariant(
            pairs in arb_pairs(),
            sx in 0.01f64..100.0, tx in -50.0f64..50.0,
            sy in 0.01f64..100.0, ty in -50.0f64..50.0,
        ) {
            let r0 = pearson_r(&pairs).unwrap();
            let moved: Vec<_> = pairs.iter().map(|&(x, y)| (sx * x + tx, sy * y + ty)).collect();
            let r1 = pearson_r(&moved).unwrap();
            prop_assert!((r0 - r1).abs() < 1e-9, "{} vs {}", r0, r1);
            prop_assert!((-1.0..=1.0).contains(&r1));
        }

        #[test]
        fn summary_invariants(pairs in arb_pairs(), t in 1.0f64..5.0) {
            if let Ok(s) = regress_with_outlier_rejection(&pairs, t) {
                prop_assert!((-1.0..=1.0).contains(&s.pearson_r));
                prop_assert!(s.n_points >= 2);
                prop_assert_eq!(s.n_points + s.n_outliers_removed, pairs.len());
            }
        }
    }
}
