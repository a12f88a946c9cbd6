use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector, SymmetricEigen};

/// Covariance shrinkage added to fitted statistics.
pub const SHRINKAGE: f64 = 1e-3;

/// Mean and covariance of a feature distribution. The covariance is kept
/// symmetric with non-negative eigenvalues.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianStats {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

fn sym_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    let e = SymmetricEigen::new(m.clone());
    let d = DMatrix::from_diagonal(&e.eigenvalues.map(|v| v.max(0.0).sqrt()));
    &e.eigenvectors * d * e.eigenvectors.transpose()
}

impl GaussianStats {
    /// Symmetrizes `cov` and clamps its eigenvalues at 0.
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        let d = mean.len();
        if cov.nrows() != d || cov.ncols() != d {
            return Err(Error::dim(format!("covariance {}x{} for a {d}-d mean", cov.nrows(), cov.ncols())));
        }
        if mean.iter().chain(cov.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Numeric("non-finite Gaussian statistics".into()));
        }
        let sym = (&cov + cov.transpose()) * 0.5;
        let e = SymmetricEigen::new(sym);
        let lam = DMatrix::from_diagonal(&e.eigenvalues.map(|v| v.max(0.0)));
        let c = &e.eigenvectors * lam * e.eigenvectors.transpose();
        let cov = (&c + c.transpose()) * 0.5;
        Ok(Self { mean, cov })
    }

    /// Sample mean and unbiased covariance (zero for one sample), plus
    /// `shrinkage * I`.
    pub fn fit(features: &[Vec<f64>], shrinkage: f64) -> Result<Self> {
        let n = features.len();
        if n == 0 {
            return Err(Error::Metric("no features to fit".into()));
        }
        let d = features[0].len();
        if features.iter().any(|f| f.len() != d) {
            return Err(Error::dim("features differ in dimension"));
        }
        let x = DMatrix::from_fn(n, d, |i, j| features[i][j]);
        let mean = DVector::from_fn(d, |j, _| x.column(j).mean());
        let mut cov = DMatrix::<f64>::zeros(d, d);
        if n > 1 {
            let centred = DMatrix::from_fn(n, d, |i, j| x[(i, j)] - mean[j]);
            cov = centred.transpose() * &centred / (n - 1) as f64;
        }
        cov += DMatrix::<f64>::identity(d, d) * shrinkage;
        Self::new(mean, cov)
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

/// Squared 2-Wasserstein distance between two Gaussians, clamped at 0.
pub fn frechet_distance(p: &GaussianStats, q: &GaussianStats) -> Result<f64> {
    if p.dim() != q.dim() {
        return Err(Error::dim(format!("Frechet distance between {}-d and {}-d stats", p.dim(), q.dim())));
    }
    let dm = (&p.mean - &q.mean).norm_squared();
    let sp = sym_sqrt(&p.cov);
    let m = &sp * &q.cov * &sp;
    let m = (&m + m.transpose()) * 0.5;
    let cross: f64 = SymmetricEigen::new(m).eigenvalues.iter().map(|v| v.max(0.0).sqrt()).sum();
    let d = dm + p.cov.trace() + q.cov.trace() - 2.0 * cross;
    if !d.is_finite() {
        return Err(Error::Numeric(format!("Frechet distance is {d}")));
    }
    Ok(d.max(0.0))
}
