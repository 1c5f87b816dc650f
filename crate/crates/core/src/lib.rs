//! Bayesian nonparametric clustering of subjects by multi-state network
//! connectivity, with block-level feature selection, fitted by
//! coordinate-ascent variational inference.

pub mod cavi;
pub mod config;
pub mod error;
pub mod io;
pub mod metrics;
pub mod par;
pub mod replicate;
pub mod selection;
pub mod special;
pub mod sim;
pub mod state;
pub mod summary;
pub mod tensor;

pub use config::{AlphaMode, ModelConfig, NoiseMode};
pub use error::{Error, Result};
pub use par::Exec;
pub use state::{init_state, VariationalState};
pub use tensor::{block_suffstats, BlockSuffStats, ConnectivityTensor, Family, PairIndex};
