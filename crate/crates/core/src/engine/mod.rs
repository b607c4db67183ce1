//! The measurement loop: prior chain, variational training against the
//! Barber–Agakov bound, information-gain scans, setting selection and run
//! logs.

mod campaign;
mod chain;
mod grid;
mod log;
mod scan;
mod strategy;
mod train;

pub use campaign::{run_campaign, Campaign, CampaignConfig, SelectionMode, StepOutcome};
pub use chain::{ChainRecord, PriorChain};
pub use grid::GridPosterior;
pub use log::{snapshot_stem, without_timing, RunHeader, RunLog, StepRecord, HEADER_FILE, LOG_FILE, SNAPSHOT_DIR};
pub use scan::{eig_scan, linspace, EigCurve};
pub use strategy::{argmax_first, select_x, Strategy};
pub use train::{ba_loss, train_posterior, window_means, BaLoss, EarlyStop, TrainConfig, TrainReport, Trainer, XSource};

pub(crate) use train::mean_stderr;
