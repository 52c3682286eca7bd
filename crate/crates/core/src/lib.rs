//! Simulator and analysis library for XOR-coded caching in shared-cache
//! broadcast networks where every user-group may request arbitrarily many
//! files.
//!
//! The pipeline: [`prefetch::place`] builds the coded placement,
//! [`delivery::build_schedule`] produces the five-stage broadcast schedule,
//! [`verify::verify_all`] proves each group can decode everything it asked
//! for over GF(2), and [`analysis`] cross-checks the achieved rate against
//! the closed-form rate, the worst-rate formulas and the cut-set bound.
//! [`harness`] adds seeded Monte-Carlo sweeps.

pub mod analysis;
pub mod combinatorics;
pub mod delivery;
pub mod harness;
pub mod model;
pub mod prefetch;
pub mod verify;

pub use combinatorics::{binom, Combo, ComboTable};
pub use delivery::{build_schedule, classify_packets};
pub use model::{
    parse_profile, profile_document, DeliveryStats, FragmentId, PacketId, Rat, RequestProfile,
    Stage, SystemParams, Transmission, TransmissionSchedule,
};
pub use prefetch::{place, PlacementState};
pub use verify::{verify_all, VerifyReport};
