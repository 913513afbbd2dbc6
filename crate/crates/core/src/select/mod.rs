//! Start points and tuning-parameter selection.

mod ransac;
mod rocv;

pub use ransac::{ransac_init, RansacConfig, RansacFit};
pub use rocv::{fold_assignment, rocv_scores, rocv_select, select_from, RocvConfig, RocvResult};
