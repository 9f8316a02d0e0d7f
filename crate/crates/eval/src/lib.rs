//! Evaluation harness: metrics, method comparison, k-space analyses and
//! figure output behind the `pfrecon` command line.

pub mod error;
pub mod evaluate;
pub mod figures;
pub mod kmax;
pub mod methods;
pub mod stats;

pub use error::{Error, Result};
pub use evaluate::{evaluate, write_metrics_csv, EvalRecord, EvalReport, MethodSummary, PairedTest, Panel};
pub use figures::emit_figures;
pub use kmax::{max_freq_histogram, pe_argmax, KmaxHistogram};
pub use methods::{reconstruct, Method};
pub use stats::{summarize, wilcoxon_signed_rank, Summary, Wilcoxon};
