//! Criterion benchmarks for hitchin-core live under `benches/`.
