//! Minimal dense-tensor arithmetic with reverse-mode automatic
//! differentiation, the layers built on it, and the Adam optimizer.

pub mod adam;
pub mod gradcheck;
pub mod graph;
pub mod layers;
pub mod params;
pub mod session;
pub mod tensor;

pub use adam::AdamState;
pub use graph::{Gradients, Graph, VarId};
pub use params::ParamStore;
pub use session::{site_tag, Session};
pub use tensor::Tensor;
