//! The adapter-augmented network: frozen backbone, trainable low-rank
//! adapters, analytic gradients.

mod network;
mod params;

pub use network::{
    accuracy_from_logits, argmax, backbone_loss_and_grad, softmax_rows, AdaptedNet, Distill,
    Forward, LossParts,
};
pub use params::{AdapterParams, Arch, BackboneParams, Batch, ParamVector};
