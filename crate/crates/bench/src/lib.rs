//! Criterion benchmarks for `spinsense-core`; see `benches/rotations.rs`.
