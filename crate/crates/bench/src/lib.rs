//! This crate only exists to host the Criterion benchmarks in `benches/`;
//! see `core_ops.rs` there for what is measured.
