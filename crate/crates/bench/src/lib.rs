//! Criterion benchmarks for coverbcd; see `benches/`.
