//! Two-view relative pose estimation from epipolar correspondence graphs.

pub mod epipolar;
pub mod eval;
pub mod geom;
pub mod graph;
pub mod loss;
pub mod nn;
pub mod scalar;
pub mod synth;
pub mod train;

pub use scalar::Real;

pub type Pose64 = geom::Pose<f64>;
pub type Quaternion64 = geom::Quaternion<f64>;
pub type Intrinsics64 = geom::Intrinsics<f64>;
pub type EssentialMatrix64 = geom::EssentialMatrix<f64>;
pub type Model64 = nn::Model<f64>;
pub type DenseMatrix64 = nn::DenseMatrix<f64>;
pub type GraphInput64 = nn::GraphInput<f64>;
pub type Prediction64 = nn::Prediction<f64>;
pub type Checkpoint64 = nn::Checkpoint<f64>;
pub type GroundTruth64 = loss::GroundTruth<f64>;
pub type LossBreakdown64 = loss::LossBreakdown<f64>;
