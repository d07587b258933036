pub mod baselines;
pub mod eval;
pub mod gnn;
pub mod graph;
pub mod optim;
pub mod pairs;
pub mod prompt;
pub mod scalar;
pub mod sparse;

pub use scalar::Scalar;

pub type GraphF32 = graph::Graph<f32>;
pub type GraphF64 = graph::Graph<f64>;
pub type TargetModelF32 = gnn::TargetModel<f32>;
pub type TargetModelF64 = gnn::TargetModel<f64>;
pub type PosteriorsF32 = gnn::PosteriorMatrix<f32>;
pub type PosteriorsF64 = gnn::PosteriorMatrix<f64>;
