//! Criterion benchmarks of the controllers live in `benches/`.
