//! Discrete-event simulation of an on-demand electric shuttle service that
//! connects neighborhoods to transit stops.
//!
//! The pieces, bottom up:
//!
//! - [`network`]: road graph with 15-minute travel-time profiles, earliest
//!   arrival routing and walking distances.
//! - [`planner`]: k-means stop placement, walk coverage and depot siting.
//! - [`demand`]: first/last-mile trip requests from hourly OD totals.
//! - [`dispatch`]: greedy insertion offers and the per-trip state machine.
//! - [`energy`]: battery draw and the charger waitlist.
//! - [`engine`]: the event loop, result bundles and parameter sweeps.
//! - [`traffic`]: background cars slowed by shuttles on no-passing roads.
//! - [`metrics`]: rider, vehicle, energy and traffic summaries.

pub mod demand;
pub mod dispatch;
pub mod energy;
pub mod engine;
pub mod error;
pub mod metrics;
pub mod network;
pub mod planner;
pub mod reference;
pub mod rng;
pub mod traffic;

pub use demand::{OdMatrix, TripKind, TripRequest};
pub use dispatch::{Shuttle, ShuttleId, ShuttleState};
pub use energy::{Battery, BatterySpec, ChargingSession};
pub use engine::{run_scenario, DemandProfile, ScenarioConfig, SimulationResult};
pub use error::{Error, Result};
pub use metrics::MetricsReport;
pub use network::{load_network, EdgeId, NodeId, Path, RoadNetwork, TravelMode};
pub use planner::{Parcel, StopPlan};
