//! Static scanner for pickle-based model files.

pub mod anomaly;
pub mod container;
pub mod forge;
pub mod pickle;
pub mod report;
pub mod risk;
pub mod scan;

pub use anomaly::{Anomaly, AnomalyKind};
