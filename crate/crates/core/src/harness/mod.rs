//! Timing GEMM runs and gathering the training dataset.

mod dataset;
mod gather;
mod timing;

pub use dataset::{
    meta_path, read_dataset, read_shapes, write_dataset, write_shapes, DatasetWriter, TimingDataset, TimingRecord,
    DATASET_HEADER,
};
pub use gather::{default_thread_grid, gather_dataset, run_worker, Isolation, WorkerCommand, MAX_SKIP_FRACTION};
pub use timing::{aggregate, measure_eval_latency, time_gemm, time_gemm_on, Statistic, TimingConfig};
