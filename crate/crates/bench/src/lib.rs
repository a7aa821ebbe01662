//! Criterion benchmarks live in `benches/`; the acceptance suite in `tests/`.
