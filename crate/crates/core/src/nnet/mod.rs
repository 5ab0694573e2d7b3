//! Dense tensors, layers with reverse-mode gradients, and the recurrent
//! waypoint policies built from them.

pub mod action_map;
pub mod checkpoint;
pub mod dense;
pub mod gradcheck;
pub mod layers;
pub mod optim;
pub mod policy;
pub mod tensor;

pub use action_map::{sample_waypoint, ActionMap, Waypoint};
pub use dense::{FitConfig, MlpModel};
pub use policy::{NetConfig, NetKind, PolicyInput, PolicyNet, StepCache, StepOutput};
pub use tensor::{Grads, ParamSet, Tensor};
