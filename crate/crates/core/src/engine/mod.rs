//! Gradient routing between split task towers, the aggregation updater, and
//! the PCGrad baseline.

pub mod bounds;
pub mod flatten;
pub mod pcgrad;
pub mod router;
pub mod update;
pub mod updater;

pub use bounds::{norm_bound_check, table1_oracle, NormBoundReport, SignRegime, Table1Report};
pub use flatten::{flatten, unflatten, Layout};
pub use pcgrad::pcgrad_project;
pub use router::{cosine, l2_norm, route, scale_ratio, GradientTriple, RouterOutput};
pub use update::{apply_routed_update, TowerOptimizers, Towers};
pub use updater::{updater_step, UpdaterState};
