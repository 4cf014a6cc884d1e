//! Criterion benchmarks for the omsync engines live in `benches/`.
