//! Criterion benchmarks for the `reactive-vol` estimators; see `benches/`.
