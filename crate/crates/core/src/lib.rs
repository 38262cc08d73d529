pub mod agents;
pub mod error;
pub mod estimators;
pub mod games;
pub mod harness;
pub mod metrics;
pub mod noregret;
pub mod opponents;
pub mod posterior;
pub mod rng;
pub mod runlog;
pub mod simplex;
pub mod tntp;
pub mod types;

pub use error::{Error, Result};
pub use rng::{derive_seed, RngStream};
pub use runlog::{RoundRecord, RunLog};
pub use simplex::{sample_action, ActionId, Simplex};
pub use types::{RewardMap, RewardSample};
