//! Learned splat dynamics: radius graphs over splat centers, a message-passing
//! network predicting per-splat displacement and rotation under a push, and its
//! Chamfer training loop.

mod graph;
mod loss;
mod model;
mod train;

pub use graph::{build_graph, SceneGraph, NODE_FEATURES, POSITION_OFFSET, ROTATION_OFFSET};
pub use loss::{apply, apply_backward, chamfer_loss, chamfer_loss_grad, ApplyGrad, Matching};
pub use model::{flatten, Delta, DynamicsModel, ModelConfig, ModelGrad, SageLayer, Tape, INPUT_WIDTH, OUTPUT_WIDTH};
pub use train::{rollout, train, transition_loss, transition_loss_grad, write_loss_csv, TrainConfig, Transition};
