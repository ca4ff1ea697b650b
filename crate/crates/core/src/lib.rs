//! Simulation and tomography of multi-time quantum processes.
//!
//! The crate is organized around temporal quasiprobability distributions:
//! complex-valued distributions over trajectories of a temporal phase space
//! that fully characterize a process when the underlying operator frames are
//! informationally complete.
//!
//! - [`qla`]: dense complex operator algebra with tensor-factor bookkeeping.
//! - [`frames`]: rank-one positive bases, IC-POVMs, Gram/dual machinery.
//! - [`snapshot`]: Choi calculus, quantum instruments, and decomposition of
//!   arbitrary superoperators into instrument outcomes.
//! - [`tqd`]: exact temporal quasiprobabilities and temporal-state
//!   reconstruction routes.
//! - [`simulate`]: trajectory distributions and seeded Monte-Carlo sampling.
//! - [`tst`]: the tomography pipeline, physical fitting, channel extraction,
//!   and the sample planner.
//!
//! All core math is generic over the real scalar type ([`Real`]); the
//! `*64` aliases below pin `f64` for everyday use.

pub mod error;
pub(crate) mod flat;
pub mod frames;
pub mod qla;
pub mod random;
pub mod scalar;
pub mod simulate;
pub mod snapshot;
pub mod tqd;
pub mod tst;

pub use error::{Error, Result};
pub use scalar::{Complex, Real, Tolerances};

pub type Operator64 = qla::Operator<f64>;
pub type Frame64 = frames::OperatorFrame<f64>;
pub type Superoperator64 = snapshot::Superoperator<f64>;
pub type Instrument64 = snapshot::Instrument<f64>;
pub type Process64 = tqd::TemporalProcess<f64>;
pub type Tqd64 = tqd::Tqd<f64>;
pub type TemporalState64 = tqd::TemporalState<f64>;
pub type Tolerances64 = Tolerances<f64>;
