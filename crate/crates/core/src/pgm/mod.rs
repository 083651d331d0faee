//! Graphical-model inference from noisy marginals.

mod estimate;
pub mod factor;
mod junction_tree;
mod model;

pub use estimate::{
    count_loss, estimate, estimate_total, normalized_loss, theta_gradient, EstimateOptions,
    SolverDiagnostics,
};
pub use junction_tree::JunctionTree;
pub use model::{Beliefs, GraphicalModel, ModelDocument};
