//! Regional inertia security regions for multi-region power systems:
//! modal RoCoF analysis, analytic maximum RoCoF, boundary tracing in
//! inertia space, convex decomposition of the secure region, and a
//! RoCoF-secure commitment/inertia dispatch.

pub mod boundary;
pub mod dispatch;
pub mod error;
pub mod geometry;
pub mod modal;
pub mod rocof;
pub mod simulate;
pub mod system;

pub use error::{Error, Result};
pub use modal::{decompose, ModalDecomposition};
pub use rocof::{global_max, system_global_max, Anchor, GlobalMax, MaxOptions};
pub use system::{load_document, load_scenario, MultiRegionSystem, Region, Scenario, TieLine};
