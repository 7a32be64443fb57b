//! Benchmark-only crate; see `benches/schedulers.rs`.
