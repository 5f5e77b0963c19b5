//! Performance, cost and scheduling models for running molecular dynamics
//! ensembles on rented cloud instances.
//!
//! `perfmodel` and `costmodel` are generic over the floating-point type; the
//! aliases below fix it to `f32` or `f64`.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod catalog;
pub mod costmodel;
pub mod orchestrator;
pub mod perfmodel;
pub mod scalar;
pub mod workload;

pub use scalar::Scalar;

pub type BenchmarkRecordF64 = perfmodel::BenchmarkRecord<f64>;
pub type BenchmarkRecordF32 = perfmodel::BenchmarkRecord<f32>;
pub type ScalingSeriesF64 = perfmodel::ScalingSeries<f64>;
pub type ScalingSeriesF32 = perfmodel::ScalingSeries<f32>;
pub type PerfPointF64 = perfmodel::PerfPoint<f64>;
pub type PerfPointF32 = perfmodel::PerfPoint<f32>;
pub type OnPremNodeSpecF64 = costmodel::OnPremNodeSpec<f64>;
pub type OnPremNodeSpecF32 = costmodel::OnPremNodeSpec<f32>;
pub type OverheadSpecF64 = costmodel::OverheadSpec<f64>;
pub type OverheadSpecF32 = costmodel::OverheadSpec<f32>;
pub type CostReportEntryF64 = costmodel::CostReportEntry<f64>;
pub type CostReportEntryF32 = costmodel::CostReportEntry<f32>;
