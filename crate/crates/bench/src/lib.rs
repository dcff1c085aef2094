//! Criterion benchmarks for the collision map, the particle process and the
//! discrete collision operator; see `benches/kernels.rs`.
