//! Covariance estimation (batch and streaming) and the whitening map
//! `x ↦ D^{-1/2} Uᵀ x` for `Σ = U D Uᵀ`.
//!
//! Sample covariances use the `1/N` normalization and are taken about the
//! sample mean. The whitening map itself is linear: it never subtracts a mean.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::numerics::{eig_sym, Matrix, SymMatrix, SPD_RELATIVE_FLOOR};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum CovarianceSource {
    Exact,
    BatchEstimated,
    OnlineEstimated,
}

/// Whitening map built from an eigendecomposition `Σ = U D Uᵀ`.
#[derive(Debug, Clone, PartialEq)]
pub struct WhiteningTransform {
    rotation: Matrix,
    scales: Vec<f64>,
    inv_sqrt_scales: Vec<f64>,
    source: CovarianceSource,
}

impl WhiteningTransform {
    /// Identity map in `dim` dimensions (`Σ = I`).
    pub fn identity(dim: usize) -> Self {
        Self {
            rotation: Matrix::identity(dim),
            scales: vec![1.0; dim],
            inv_sqrt_scales: vec![1.0; dim],
            source: CovarianceSource::Exact,
        }
    }

    /// Transform for a known covariance.
    pub fn from_covariance(sigma: &SymMatrix) -> Result<Self> {
        Self::build(sigma, CovarianceSource::Exact)
    }

    fn build(sigma: &SymMatrix, source: CovarianceSource) -> Result<Self> {
        let eig = eig_sym(sigma)?;
        let max = eig.max_eigenvalue();
        let floor = SPD_RELATIVE_FLOOR * max.max(0.0);
        let null: Vec<String> = eig
            .eigenvalues
            .iter()
            .enumerate()
            .filter(|(_, &l)| !(l > floor) || max <= 0.0)
            .map(|(i, &l)| {
                let dir: Vec<String> = eig
                    .eigenvectors
                    .column(i)
                    .iter()
                    .map(|v| format!("{v:.4}"))
                    .collect();
                format!("λ={l:e} along [{}]", dir.join(", "))
            })
            .collect();
        if !null.is_empty() {
            return Err(Error::RankDeficient(format!(
                "covariance has null directions: {}",
                null.join("; ")
            )));
        }
        let inv_sqrt_scales = eig.eigenvalues.iter().map(|l| 1.0 / l.sqrt()).collect();
        Ok(Self {
            rotation: eig.eigenvectors,
            scales: eig.eigenvalues,
            inv_sqrt_scales,
            source,
        })
    }

    pub fn dim(&self) -> usize {
        self.scales.len()
    }

    pub fn rotation(&self) -> &Matrix {
        &self.rotation
    }

    /// Eigenvalues of the covariance the transform was built from.
    pub fn scales(&self) -> &[f64] {
        &self.scales
    }

    pub fn source(&self) -> CovarianceSource {
        self.source
    }

    pub fn condition_number(&self) -> f64 {
        let max = self.scales.iter().cloned().fold(f64::MIN, f64::max);
        let min = self.scales.iter().cloned().fold(f64::MAX, f64::min);
        max / min
    }

    /// `D^{-1/2} Uᵀ x`.
    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.dim()];
        self.apply_into(x, &mut out)?;
        Ok(out)
    }

    pub fn apply_into(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        let d = self.dim();
        if x.len() != d || out.len() != d {
            return Err(Error::Shape(format!(
                "observation of dim {} for a {d}-dim transform",
                x.len()
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("observation has non-finite entries".into()));
        }
        for (j, o) in out.iter_mut().enumerate() {
            let mut s = 0.0;
            for (i, &xi) in x.iter().enumerate() {
                s += self.rotation[(i, j)] * xi;
            }
            *o = s * self.inv_sqrt_scales[j];
        }
        Ok(())
    }

    /// Whitens every row.
    pub fn apply_rows(&self, x: &Matrix) -> Result<Matrix> {
        let mut out = Matrix::zeros(x.nrows(), self.dim());
        for i in 0..x.nrows() {
            self.apply_into(x.row(i), out.row_mut(i))?;
        }
        Ok(out)
    }
}

/// Free-function form of [`WhiteningTransform::apply`].
pub fn apply_whitening(t: &WhiteningTransform, x: &[f64]) -> Result<Vec<f64>> {
    t.apply(x)
}

/// Mean-centered, `1/N`-normalized sample covariance of the rows of `x`.
pub fn sample_covariance(x: &Matrix) -> Result<SymMatrix> {
    let mut state = OnlineCovariance::new(x.ncols());
    for r in x.rows_iter() {
        state.update(r)?;
    }
    state.covariance()
}

/// Batch estimate of the whitening transform from sample rows.
pub fn fit_covariance_batch(x: &Matrix) -> Result<WhiteningTransform> {
    let d = x.ncols();
    if d == 0 {
        return Err(Error::Shape("dataset has no columns".into()));
    }
    if x.nrows() < d + 1 {
        return Err(Error::SampleTooSmall(format!(
            "{} rows cannot estimate a {d}-dim covariance (need {})",
            x.nrows(),
            d + 1
        )));
    }
    if !x.is_finite() {
        return Err(Error::Domain("dataset has non-finite entries".into()));
    }
    // Two-pass centering keeps batch estimates free of streaming round-off.
    let n = x.nrows() as f64;
    let mut mean = vec![0.0; d];
    for r in x.rows_iter() {
        for (m, v) in mean.iter_mut().zip(r) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut cov = Matrix::zeros(d, d);
    let mut centered = vec![0.0; d];
    for r in x.rows_iter() {
        for ((c, v), m) in centered.iter_mut().zip(r).zip(&mean) {
            *c = v - m;
        }
        for a in 0..d {
            for b in a..d {
                cov[(a, b)] += centered[a] * centered[b];
            }
        }
    }
    for a in 0..d {
        for b in a..d {
            cov[(a, b)] /= n;
            cov[(b, a)] = cov[(a, b)];
        }
    }
    WhiteningTransform::build(&SymMatrix::new(cov)?, CovarianceSource::BatchEstimated)
}

/// Welford-style streaming mean and co-moment matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct OnlineCovariance {
    count: usize,
    mean: Vec<f64>,
    comoment: Matrix,
}

impl OnlineCovariance {
    pub fn new(dim: usize) -> Self {
        Self {
            count: 0,
            mean: vec![0.0; dim],
            comoment: Matrix::zeros(dim, dim),
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    /// Ingests one observation in `O(d²)`.
    pub fn update(&mut self, x: &[f64]) -> Result<()> {
        let d = self.dim();
        if x.len() != d {
            return Err(Error::Shape(format!(
                "observation of dim {} for a {d}-dim estimator",
                x.len()
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("observation has non-finite entries".into()));
        }
        self.count += 1;
        let n = self.count as f64;
        let delta: Vec<f64> = x.iter().zip(&self.mean).map(|(v, m)| v - m).collect();
        for (m, dl) in self.mean.iter_mut().zip(&delta) {
            *m += dl / n;
        }
        // comoment += delta_old * delta_newᵀ
        for a in 0..d {
            let da = delta[a];
            for b in a..d {
                let db_new = x[b] - self.mean[b];
                self.comoment[(a, b)] += da * db_new;
            }
        }
        for a in 0..d {
            for b in 0..a {
                self.comoment[(a, b)] = self.comoment[(b, a)];
            }
        }
        Ok(())
    }

    /// `1/N` covariance of everything ingested so far.
    pub fn covariance(&self) -> Result<SymMatrix> {
        if self.count < 2 {
            return Err(Error::SampleTooSmall(format!(
                "covariance needs at least 2 observations, have {}",
                self.count
            )));
        }
        let n = self.count as f64;
        let d = self.dim();
        let mut c = self.comoment.clone();
        for a in 0..d {
            for b in 0..d {
                c[(a, b)] /= n;
            }
        }
        SymMatrix::new(c)
    }

    /// Builds the whitening transform of the current estimate.
    pub fn finalize(&self) -> Result<WhiteningTransform> {
        let d = self.dim();
        if self.count < d + 1 {
            return Err(Error::SampleTooSmall(format!(
                "{} observations cannot estimate a {d}-dim covariance (need {})",
                self.count,
                d + 1
            )));
        }
        WhiteningTransform::build(&self.covariance()?, CovarianceSource::OnlineEstimated)
    }
}

/// Functional form of [`OnlineCovariance::update`].
pub fn update_covariance_online(
    mut state: OnlineCovariance,
    x: &[f64],
) -> Result<OnlineCovariance> {
    state.update(x)?;
    Ok(state)
}

/// Number of observations the adaptive selector ingests before trusting the
/// online covariance estimate.
pub fn warmup_rows(dim: usize) -> usize {
    (dim + 1).max(2 * dim)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{spd_inverse_trace, trace_product_inverse};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn gaussian_rows(n: usize, d: usize, seed: u64) -> Matrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Matrix::from_vec(
            n,
            d,
            (0..n * d).map(|_| rng.sample(StandardNormal)).collect(),
        )
        .unwrap()
    }

    fn random_spd(d: usize, rng: &mut ChaCha8Rng) -> SymMatrix {
        let a = Matrix::from_vec(
            d,
            d,
            (0..d * d).map(|_| rng.random_range(-1.0..1.0)).collect(),
        )
        .unwrap();
        let mut g = a.gram().into_matrix();
        for i in 0..d {
            g[(i, i)] += 0.2;
        }
        SymMatrix::new(g).unwrap()
    }

    fn max_dev_from_identity(s: &SymMatrix) -> f64 {
        let d = s.dim();
        let mut e = 0.0_f64;
        for i in 0..d {
            for j in 0..d {
                let t = if i == j { 1.0 } else { 0.0 };
                e = e.max((s[(i, j)] - t).abs());
            }
        }
        e
    }

    #[test]
    fn white_sample_whitens_to_identity() {
        let x = gaussian_rows(100_000, 5, 1);
        let t = fit_covariance_batch(&x).unwrap();
        assert_eq!(t.source(), CovarianceSource::BatchEstimated);
        let w = t.apply_rows(&x).unwrap();
        assert!(max_dev_from_identity(&sample_covariance(&w).unwrap()) < 0.05);
        // the raw sample is already near-white
        assert!(max_dev_from_identity(&sample_covariance(&x).unwrap()) < 0.05);
    }

    #[test]
    fn diagonal_covariance_scales_coordinates() {
        let t = WhiteningTransform::from_covariance(&SymMatrix::from_diag(&[4.0, 1.0]).unwrap())
            .unwrap();
        let out = t.apply(&[2.0, 3.0]).unwrap();
        assert!((out[0].abs() - 1.0).abs() < 1e-15);
        assert!((out[1].abs() - 3.0).abs() < 1e-15);
        // eigenvectors are axis-aligned, possibly sign-flipped
        let e0 = t.apply(&[1.0, 0.0]).unwrap();
        assert!((e0[0].abs() - 0.5).abs() < 1e-15 && e0[1] == 0.0);
    }

    #[test]
    fn identity_transform_is_noop() {
        let t = WhiteningTransform::identity(3);
        assert_eq!(t.apply(&[1.0, -2.0, 0.5]).unwrap(), vec![1.0, -2.0, 0.5]);
        assert!(matches!(t.apply(&[1.0, 2.0]), Err(Error::Shape(_))));
        assert!(matches!(
            t.apply(&[1.0, f64::NAN, 0.0]),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn rewhitening_training_rows_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let sigma = random_spd(4, &mut rng);
        let raw = gaussian_rows(300, 4, 8);
        let chol_t = WhiteningTransform::from_covariance(&sigma).unwrap();
        // correlate via U D^{1/2}
        let mut x = Matrix::zeros(300, 4);
        for i in 0..300 {
            for a in 0..4 {
                x[(i, a)] = (0..4)
                    .map(|j| chol_t.rotation()[(a, j)] * chol_t.scales()[j].sqrt() * raw[(i, j)])
                    .sum();
            }
        }
        let t = fit_covariance_batch(&x).unwrap();
        let w = t.apply_rows(&x).unwrap();
        assert!(max_dev_from_identity(&sample_covariance(&w).unwrap()) < 1e-8);
    }

    #[test]
    fn exact_transform_whitens_generating_covariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for d in 1..7 {
            let sigma = random_spd(d, &mut rng);
            let t = WhiteningTransform::from_covariance(&sigma).unwrap();
            // W Σ Wᵀ with W = D^{-1/2} Uᵀ
            let mut w = Matrix::zeros(d, d);
            for j in 0..d {
                let col = t
                    .apply(
                        &(0..d)
                            .map(|i| if i == j { 1.0 } else { 0.0 })
                            .collect::<Vec<_>>(),
                    )
                    .unwrap();
                for i in 0..d {
                    w[(i, j)] = col[i];
                }
            }
            let img = w
                .matmul(sigma.matrix())
                .unwrap()
                .matmul(&w.transpose())
                .unwrap();
            assert!(max_dev_from_identity(&SymMatrix::new(img).unwrap()) < 1e-8);
        }
    }

    #[test]
    fn trace_identity_whitened_vs_raw() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for rep in 0..100 {
            let sigma = random_spd(4, &mut rng);
            let x = gaussian_rows(50, 4, 1000 + rep);
            let raw = trace_product_inverse(&sigma, &x.gram()).unwrap();
            let t = WhiteningTransform::from_covariance(&sigma).unwrap();
            let xbar = t.apply_rows(&x).unwrap();
            let white = spd_inverse_trace(&xbar.gram()).unwrap();
            assert!(
                (raw - white).abs() <= 1e-6 * raw,
                "rep {rep}: {raw} vs {white}"
            );
        }
    }

    #[test]
    fn rank_deficient_lists_null_direction() {
        let x = Matrix::from_rows(&[[1.0, 1.0], [2.0, 2.0], [-1.0, -1.0], [0.5, 0.5]]).unwrap();
        match fit_covariance_batch(&x) {
            Err(Error::RankDeficient(msg)) => assert!(msg.contains("along")),
            other => panic!("expected rank deficiency, got {other:?}"),
        }
        let too_few = Matrix::from_rows(&[[1.0, 2.0], [3.0, 4.0]]).unwrap();
        assert!(matches!(
            fit_covariance_batch(&too_few),
            Err(Error::SampleTooSmall(_))
        ));
    }

    #[test]
    fn online_matches_batch() {
        let x = gaussian_rows(100, 6, 3);
        let mut state = OnlineCovariance::new(6);
        for r in x.rows_iter() {
            state = update_covariance_online(state, r).unwrap();
        }
        let online = state.covariance().unwrap();
        let batch = {
            let t = fit_covariance_batch(&x).unwrap();
            // reconstruct U D Uᵀ
            let d = 6;
            let mut m = Matrix::zeros(d, d);
            for i in 0..d {
                for j in 0..d {
                    m[(i, j)] = (0..d)
                        .map(|k| t.rotation()[(i, k)] * t.scales()[k] * t.rotation()[(j, k)])
                        .sum();
                }
            }
            m
        };
        for i in 0..6 {
            for j in 0..6 {
                assert!((online[(i, j)] - batch[(i, j)]).abs() < 1e-10);
            }
        }
        let fo = state.finalize().unwrap();
        let fb = fit_covariance_batch(&x).unwrap();
        for (a, b) in fo.scales().iter().zip(fb.scales()) {
            assert!((a - b).abs() < 1e-10);
        }
        assert_eq!(fo.source(), CovarianceSource::OnlineEstimated);
    }

    #[test]
    fn online_single_row_rejected() {
        let mut s = OnlineCovariance::new(3);
        s.update(&[1.0, 2.0, 3.0]).unwrap();
        assert!(matches!(s.finalize(), Err(Error::SampleTooSmall(_))));
        assert!(matches!(s.update(&[1.0]), Err(Error::Shape(_))));
    }

    #[test]
    fn online_white_gaussian_converges() {
        let x = gaussian_rows(100_000, 4, 77);
        let mut s = OnlineCovariance::new(4);
        for r in x.rows_iter() {
            s.update(r).unwrap();
        }
        assert!(max_dev_from_identity(&s.covariance().unwrap()) < 0.05);
    }

    #[test]
    fn warmup_length() {
        assert_eq!(warmup_rows(1), 2);
        assert_eq!(warmup_rows(10), 20);
    }
}
