//! Criterion benchmarks for `islandwalk`; see `benches/kernels.rs`.
//!
//! Run with `cargo bench -p islandwalk-bench`.
