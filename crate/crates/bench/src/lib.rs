//! Criterion benchmarks for `betalm-core`; see `benches/`.
