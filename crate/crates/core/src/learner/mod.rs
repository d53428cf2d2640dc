//! Small feed-forward networks with a shared embedding, a label head and a
//! bias head, trained by SGD, plus a kernel posterior variance on embeddings.

mod mlp;
mod train;
mod variance;

pub use mlp::{bias_awareness_gap, Activation, Forward, IntrospectiveModel, MlpSpec};
pub use train::{
    label_accuracy, train_erm, train_introspective, train_with_callback, training_gradient,
    training_loss, Sample, TrainConfig, TrainReport,
};
pub use variance::{fit_variance, VarianceEstimator, MAX_REFERENCES};

pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Binary cross-entropy of target `t` against logit `z`, stable for large |z|.
pub(crate) fn bce_logit(t: f64, z: f64) -> f64 {
    z.max(0.0) - z * t + (-z.abs()).exp().ln_1p()
}
