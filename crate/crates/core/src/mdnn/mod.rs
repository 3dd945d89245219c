//! Multi-target network over token labels of every level, with a narrow
//! linear bottleneck whose activations become the next iteration's features.

mod input;
mod io;
mod net;
mod train;

pub use input::{build_targets, extract_bnf, make_iteration_input};
pub use io::{read_mdnn, write_mdnn};
pub use net::{gradient_check, Dense, GradientReport, MdnnModel};
pub use train::{evaluate, train_mdnn, training_log_csv, EpochLog, MdnnConfig};

#[cfg(test)]
mod tests;
