//! Error metrics and per-cell summaries.

use serde::Serialize;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::estimators::{LinearFit, LinearModel};
use crate::numerics::SymMatrix;

/// `(β̂ − β*)ᵀ Σ (β̂ − β*)`; support-restricted fits are zero off-support.
pub fn mse_sigma_norm(fit: &LinearFit, model: &LinearModel, sigma: &SymMatrix) -> Result<f64> {
    let d = model.dim();
    if sigma.dim() != d {
        return Err(Error::Shape(format!(
            "{}-dim Σ for a {d}-dim model",
            sigma.dim()
        )));
    }
    let beta = fit.embedded(d)?;
    let delta: Vec<f64> = beta.iter().zip(&model.beta).map(|(a, b)| a - b).collect();
    sigma.quad_form(&delta)
}

/// Mean squared residual on held-out rows, no intercept.
pub fn test_mse(fit: &LinearFit, test: &Dataset) -> Result<f64> {
    let beta = fit.embedded(test.dim())?;
    let y = test.responses()?;
    if y.is_empty() {
        return Err(Error::State("empty test set".into()));
    }
    let pred = test.x.mat_vec(&beta)?;
    Ok(pred
        .iter()
        .zip(y)
        .map(|(p, t)| (p - t).powi(2))
        .sum::<f64>()
        / y.len() as f64)
}

/// Order statistic at `⌊p (m − 1)⌋` of ascending `sorted` (lower interpolation).
pub fn lower_quantile(sorted: &[f64], p: f64) -> Option<f64> {
    if sorted.is_empty() {
        return None;
    }
    let idx = (p.clamp(0.0, 1.0) * (sorted.len() - 1) as f64).floor() as usize;
    Some(sorted[idx])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QuantileBand {
    pub lower_p: f64,
    pub upper_p: f64,
    pub lower: f64,
    pub upper: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Stats {
    pub mean: f64,
    pub median: f64,
    pub bands: Vec<QuantileBand>,
}

/// `None` for an empty sample.
pub fn describe(values: &[f64], pairs: &[(f64, f64)]) -> Option<Stats> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    Some(Stats {
        mean,
        median: lower_quantile(&v, 0.5)?,
        bands: pairs
            .iter()
            .map(|&(lo, hi)| QuantileBand {
                lower_p: lo,
                upper_p: hi,
                lower: lower_quantile(&v, lo).unwrap_or(f64::NAN),
                upper: lower_quantile(&v, hi).unwrap_or(f64::NAN),
            })
            .collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::FitMethod;
    use crate::numerics::Matrix;
    use proptest::prelude::*;

    fn fit(coefs: Vec<f64>, dims: Vec<usize>) -> LinearFit {
        LinearFit {
            coefficients: coefs,
            method: FitMethod::Ols,
            regularization: 0.0,
            design_rows: 0,
            dims_used: dims,
            warning: None,
        }
    }

    #[test]
    fn sigma_norm_cases() {
        let model = LinearModel::new(vec![1.0, -2.0, 0.5], 1.0).unwrap();
        let eye = SymMatrix::identity(3);
        assert_eq!(
            mse_sigma_norm(&fit(model.beta.clone(), vec![0, 1, 2]), &model, &eye).unwrap(),
            0.0
        );
        let f = fit(vec![2.0, 0.0, 0.0], vec![0, 1, 2]);
        assert!((mse_sigma_norm(&f, &model, &eye).unwrap() - (1.0 + 4.0 + 0.25)).abs() < 1e-12);
        // support-restricted: coordinate 1 only
        let f = fit(vec![-2.0], vec![1]);
        assert!((mse_sigma_norm(&f, &model, &eye).unwrap() - 1.25).abs() < 1e-12);
        assert!(mse_sigma_norm(&f, &model, &SymMatrix::identity(2)).is_err());
    }

    #[test]
    fn sigma_norm_matches_double_loop() {
        let mut r = crate::rng::stream(5, &[]);
        let sigma = crate::datagen::random_spd(6, 0.3, 4.0, &mut r).unwrap();
        let model = LinearModel::new(vec![0.3, -1.0, 2.0, 0.0, 1.5, -0.7], 1.0).unwrap();
        let f = fit(vec![0.1, -0.8, 2.4, 0.2, 1.0, -0.9], (0..6).collect());
        let delta: Vec<f64> = f
            .coefficients
            .iter()
            .zip(&model.beta)
            .map(|(a, b)| a - b)
            .collect();
        let mut naive = 0.0;
        for i in 0..6 {
            for j in 0..6 {
                naive += delta[i] * sigma[(i, j)] * delta[j];
            }
        }
        assert!((mse_sigma_norm(&f, &model, &sigma).unwrap() - naive).abs() < 1e-12);
    }

    #[test]
    fn test_error() {
        let x = Matrix::from_rows(&[[1.0, 0.0], [0.0, 1.0]]).unwrap();
        let ds = Dataset::new(x, Some(vec![1.0, 3.0])).unwrap();
        let f = fit(vec![1.0, 1.0], vec![0, 1]);
        assert!((test_mse(&f, &ds).unwrap() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn quantile_conventions() {
        let v: Vec<f64> = (1..=100).map(f64::from).collect();
        let s = describe(&v, &[(0.05, 0.95), (0.25, 0.75)]).unwrap();
        assert_eq!(s.median, 50.0);
        assert_eq!((s.bands[0].lower, s.bands[0].upper), (5.0, 95.0));
        assert_eq!((s.bands[1].lower, s.bands[1].upper), (25.0, 75.0));
        assert!((s.mean - 50.5).abs() < 1e-12);
        let c = describe(&[3.0; 7], &[(0.05, 0.95)]).unwrap();
        assert_eq!(
            (c.mean, c.median, c.bands[0].lower, c.bands[0].upper),
            (3.0, 3.0, 3.0, 3.0)
        );
        assert!(describe(&[], &[(0.05, 0.95)]).is_none());
    }

    proptest! {
        #[test]
        fn bands_bracket_median(v in proptest::collection::vec(-1e6f64..1e6, 1..200)) {
            let s = describe(&v, &[(0.05, 0.95)]).unwrap();
            prop_assert!(s.bands[0].lower <= s.median && s.median <= s.bands[0].upper);
        }
    }
}
