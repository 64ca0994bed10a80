//! Criterion benchmarks for `ccdae-core`; the benchmarks live in `benches/`.
