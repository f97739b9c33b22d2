//! The link to the physical asset: a deterministic simulator, fixed and
//! parameterized queries, and polling synchronization.

pub mod session;
pub mod signal;
pub mod sim;
pub mod sync;

pub use session::{AssetError, QueryAgg, QueryFilter, QueryResult, QuerySpec, Sample, Session, MAX_QUERY_POINTS};
pub use signal::{sim_signal, UnknownVariable, COOLING, SIGNALS};
pub use sim::{sim_endpoint, sim_run, SetRecord, SimClock, SimConfig, SimError, SimHandle};
pub use sync::{start_sync, PropertySink, PropertyUpdate, SyncError, SyncHandle, SyncStats, TriggerRecord};
