//! Watchdog testing of opaque autonomous systems.
//!
//! A constraint checker sorts actions into HS, HS' and H'. Testing agents
//! probe a black-box system under test, cluster its behavior and guard its
//! output channel. A shepherd tunes the agents and splits the input space
//! between them.

pub mod bssn;
pub mod campaign;
pub mod constraint;
pub mod geometry;
pub mod scenario;
pub mod shepherd;
pub mod space;
pub mod sut;

pub use bssn::{BssnParams, Cluster, SpaceTag};
pub use campaign::{run_campaign, CampaignConfig, CampaignReport};
pub use constraint::{ActionClassification, Category, ConstraintSystem};
pub use geometry::IntervalBox;
pub use space::{Assignment, Value, VariableSpace};
pub use sut::{make_reference_sut, GateState, SutHandle, SutSpec};
