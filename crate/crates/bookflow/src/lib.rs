//! Order book simulation driven by mutually exciting order flows.

pub mod hawkes;
pub mod ingest;
pub mod lob;
mod scalar;
pub mod stats;

pub use scalar::Scalar;

/// Concrete double-precision aliases for the scalar-generic model types.
pub type Kernel = hawkes::ExponentialKernel<f64>;
pub type Model = hawkes::HawkesModel<f64>;
pub type Stream = hawkes::EventStream<f64>;
pub type Fit = hawkes::FitResult<f64>;
