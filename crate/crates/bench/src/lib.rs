//! Criterion benchmarks for the `maxdiff` pipeline live under `benches/`.
