//! Benchmarks, image metrics and camera paths.

mod bench;
mod config;
mod metrics;
mod trajectory;

pub use bench::{bench_run, bench_run_with, BenchMode, BenchReport, FrameRow};
pub use config::{load_field, FieldSource, LoadedField, SceneConfig};
pub use metrics::{mssim, psnr, SSIM_SIGMA, SSIM_WINDOW};
pub use trajectory::{orbit_trajectory, Orbit};
