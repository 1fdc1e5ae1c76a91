//! Online regularized least squares in a reproducing kernel Hilbert space
//! driven by non-stationary data streams.

pub mod analysis;
pub mod error;
pub mod excitation;
pub mod experiment;
pub mod kernel;
pub mod learner;
pub mod path_oracle;
pub mod rkhs;
pub mod schedule;
pub mod stream;

pub use error::{Error, Result};
pub use kernel::{Interval, Kernel, KernelFamily};
pub use learner::{LearnerState, Trajectory, UpdateMode};
pub use path_oracle::{DiscretizedOperator, PathOracle, QuadratureGrid};
pub use rkhs::{KernelExpansion, TargetFunction};
pub use schedule::GainSchedule;
pub use stream::{dual_norm_drift, MarginalMeasure, NoiseModel, StreamKind, StreamSpec};
