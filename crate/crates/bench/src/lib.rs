//! Criterion benchmarks for the spectral and simulation kernels live in `benches/`.
