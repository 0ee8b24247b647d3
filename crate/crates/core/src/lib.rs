//! Spatio-temporal interpolation of daily station temperatures.
//!
//! The numerical core is generic over the scalar type (see [`Real`]); the
//! aliases at the bottom of this file fix it to `f64` for typical use.

// `!(x > 0)` checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bsp;
pub mod deform;
pub mod error;
pub mod eval;
pub mod geo;
pub mod ingest;
pub mod kriging;
pub mod linalg;
pub mod pipeline;
pub mod scalar;
pub mod trend;
pub mod variogram;

pub use error::{Error, ErrorKind, Result};
pub use scalar::Real;

pub type StationTableF64 = ingest::StationTable<f64>;
pub type ObservationMatrixF64 = ingest::ObservationMatrix<f64>;
pub type ClimateGridF64 = ingest::ClimateGrid<f64>;
pub type TrendModelF64 = trend::TrendModel<f64>;
pub type DeformationF64 = deform::Deformation<f64>;
pub type BspHyperparamsF64 = bsp::BspHyperparams<f64>;
pub type PredictiveTF64 = bsp::PredictiveT<f64>;
pub type MlCovFitF64 = kriging::MlCovFit<f64>;
pub type PipelineOutputF64 = pipeline::PipelineOutput<f64>;

pub type StationTableF32 = ingest::StationTable<f32>;
pub type ObservationMatrixF32 = ingest::ObservationMatrix<f32>;
pub type PredictiveTF32 = bsp::PredictiveT<f32>;
