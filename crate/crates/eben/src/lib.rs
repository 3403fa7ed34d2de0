//! File formats, corpus processing, benchmarking and the `eben` command line
//! on top of `eben-core`.

pub mod batch;
pub mod bench;
pub mod cli;
pub mod formats;
pub mod wav;
pub mod weights_file;

pub use batch::{batch_degrade, BatchMode, CorpusReport, FileEntry};
pub use bench::{bench_forward, BenchError, BenchReport};
pub use cli::{run_cli, run_cli_with};
pub use wav::{read_wav, write_wav, Encoding, WavError};
pub use weights_file::{load_weights, save_weights, WeightsFileError};
