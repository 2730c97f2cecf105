//! Benchmarks for the hot kernels of `l2h-core`; see `benches/`.
