//! Sub-generation network coding for erasure broadcast.
//!
//! After an uncoded systematic phase, the packets still missing somewhere are
//! grouped into sub-generations built from the coding sets of an IDNC
//! solution. A sub-generation size of one set gives plain IDNC; putting every
//! set in one group gives RLNC. Sizes in between trade block completion time
//! against decoding delay.
//!
//! - [`model`]: demand matrix, erasure channel, systematic phase
//! - [`idnc`]: IDNC graph and clique-cover solvers
//! - [`galois`]: GF(2^m) arithmetic and the encode/decode kernel
//! - [`partition`]: partitioning and analytic metrics
//! - [`transmit`]: coded-phase simulation under erasures

pub mod galois;
pub mod idnc;
pub mod model;
pub mod partition;
pub mod transmit;

pub use galois::Field;
pub use idnc::{IdncGraph, IdncSolution};
pub use model::{ErasureChannel, StateFeedbackMatrix};
pub use partition::{AnalyticMetrics, Partition};
