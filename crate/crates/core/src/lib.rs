//! Cell-free massive MIMO over OFDM: system-level Monte Carlo simulation of
//! cell-free (CF), user-centric (UC) and opportunistic AP selection
//! (SU-OAS / MU-OAS) transmission, their closed-form uplink and downlink
//! SINRs, and a link-level oracle that checks those closed forms by
//! symbol-level simulation.
//!
//! Module map:
//!
//! - [`config`]: parameters, config-file loading, random network drops.
//! - [`propagation`]: three-slope COST-Hata path loss with log-normal shadowing.
//! - [`ofdm`]: DFT/IDFT, cyclic prefix, multipath convolution, tap gains.
//! - [`estimation`]: block-fading channel draws and MMSE estimates.
//! - [`selection`]: RB user assignment, AP selection, UC association.
//! - [`sinr`]: closed-form SINR expressions and full-power allocation.
//! - [`oracle`]: link-level Monte Carlo validation of the closed forms.
//! - [`experiment`]: drops, CDFs, percentiles, sweeps and report files.
//! - [`validate`]: the self-check suite behind `cellfree validate`.

pub mod config;
pub mod error;
pub mod estimation;
pub mod experiment;
pub mod ofdm;
pub mod oracle;
pub mod propagation;
pub mod rng;
pub mod selection;
pub mod sinr;
pub mod stats;
pub mod validate;

pub use config::{SystemConfig, Topology};
pub use error::{Error, Result};
pub use estimation::{EstimationStats, RbChannel};
pub use propagation::LargeScaleMatrix;
pub use selection::SelectionPlan;
pub use sinr::{Approach, Direction, PowerAllocation, SinrInputs};
