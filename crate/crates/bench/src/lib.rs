//! Criterion benchmarks for `mixprec-core` live under `benches/`.
