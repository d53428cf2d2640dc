use nalgebra::{DMatrix, DVector};

use super::mlp::IntrospectiveModel;
use crate::error::{Error, Result};

/// Largest number of reference points kept by [`fit_variance`].
pub const MAX_REFERENCES: usize = 512;

/// Posterior variance of a unit-variance RBF process on embeddings:
/// `v(x) = 1 - k_xᵀ (K + jitter·I)⁻¹ k_x`.
#[derive(Clone, Debug)]
pub struct VarianceEstimator {
    pub length_scale: f64,
    pub jitter: f64,
    model: IntrospectiveModel,
    refs: Vec<Vec<f64>>,
    /// Lower Cholesky factor of `K + jitter·I`.
    chol: DMatrix<f64>,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

impl VarianceEstimator {
    fn kernel(&self, a: &[f64], b: &[f64]) -> f64 {
        (-sq_dist(a, b) / (2.0 * self.length_scale * self.length_scale)).exp()
    }

    pub fn references(&self) -> &[Vec<f64>] {
        &self.refs
    }

    pub fn variance_of_embedding(&self, h: &[f64]) -> f64 {
        let k =
            DVector::from_iterator(self.refs.len(), self.refs.iter().map(|r| self.kernel(h, r)));
        let w = self
            .chol
            .solve_lower_triangular(&k)
            .expect("factor has a positive diagonal");
        (1.0 - w.norm_squared()).max(0.0)
    }

    pub fn variance(&self, x: &[f64]) -> Result<f64> {
        Ok(self.variance_of_embedding(&self.model.embed(x)?))
    }

    pub fn variances(&self, xs: &[Vec<f64>]) -> Result<Vec<f64>> {
        xs.iter().map(|x| self.variance(x)).collect()
    }
}

/// Builds the estimator on the embeddings of `train_x`, keeping at most
/// [`MAX_REFERENCES`] points chosen by a fixed stride.
pub fn fit_variance(
    model: &IntrospectiveModel,
    train_x: &[Vec<f64>],
    bandwidth: f64,
    jitter: f64,
) -> Result<VarianceEstimator> {
    if train_x.len() < 2 {
        return Err(Error::invalid("need at least two reference points"));
    }
    if !(bandwidth.is_finite() && bandwidth > 0.0) {
        return Err(Error::invalid("bandwidth must be positive"));
    }
    if !(jitter.is_finite() && jitter > 0.0) {
        return Err(Error::invalid("jitter must be positive"));
    }
    let stride = train_x.len().div_ceil(MAX_REFERENCES);
    let refs: Vec<Vec<f64>> = train_x
        .iter()
        .step_by(stride)
        .map(|x| model.embed(x))
        .collect::<Result<_>>()?;
    let m = refs.len();
    let mut est = VarianceEstimator {
        length_scale: bandwidth,
        jitter,
        model: model.clone(),
        refs,
        chol: DMatrix::zeros(0, 0),
    };
    let k = DMatrix::from_fn(m, m, |i, j| {
        est.kernel(&est.refs[i], &est.refs[j]) + if i == j { jitter } else { 0.0 }
    });
    match k.clone().cholesky() {
        Some(c) => {
            est.chol = c.l();
            Ok(est)
        }
        None => {
            let ev = k.symmetric_eigenvalues();
            let max = ev.iter().fold(0.0f64, |a, v| a.max(v.abs()));
            let min = ev.iter().fold(f64::INFINITY, |a, v| a.min(v.abs()));
            Err(Error::SingularKernel {
                condition: max / min,
            })
        }
    }
}
