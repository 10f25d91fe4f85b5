//! Standardization, the feedforward network, training and evaluation.

mod metrics;
mod model;
mod network;
mod scaler;
mod train;

pub use metrics::{compute_metrics, roc_auc, Confusion, Metrics};
pub use model::{Model, DECISION_THRESHOLD, MODEL_VERSION};
pub use network::{
    bce_loss, BatchNorm, ForwardPass, Gradients, Layer, LayerGrad, Mode, Network, LOSS_EPS,
};
pub use scaler::{fit_scaler, ScalerParams};
pub use train::{stratified_split, train, train_from, TrainReport};
