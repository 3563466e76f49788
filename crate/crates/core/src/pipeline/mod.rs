//! End-to-end stages: black-frame subtraction, pair registration, triplet
//! assembly, dataset builds, error metrics, the dual-reference loss and the
//! precision benchmark.

mod bench;
mod dataset;
mod metrics;
mod register;
mod triplet;

pub use bench::{run_precision, PrecisionProfile, PrecisionReport, PrecisionSummary, TrialRecord};
pub use dataset::{build_dataset, DatasetSummary, Job, JobSource, JobsFile, MANIFEST_NAME};
pub use metrics::{dual_reference_loss, registration_error, ErrorReport, GRID_SIZE};
pub use register::{register_pair, register_transform, subtract_black, PairRegistration, RegisterOptions};
pub use triplet::{build_triplet, RegisteredCapture, Triplet, TripletRecord};
