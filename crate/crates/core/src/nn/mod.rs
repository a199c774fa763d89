//! Dense networks with hand-written backpropagation, Adam, softmax and the
//! worst-action cross-entropy used by the gradient attacks.

pub mod adam;
pub mod checkpoint;
pub mod dense;
pub mod loss;

pub use adam::{adam_step, adam_step_net, AdamState};
pub use dense::{Activation, Backprop, DenseGrads, DenseLayer, DenseNet, ForwardCache, ForwardPass};
pub use loss::{softmax, worst_action_loss, PolicyPmf, WorstActionLoss};
