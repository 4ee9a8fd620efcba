//! Criterion benchmarks for `tape-core`: topology sampling and edge
//! connectivity, the policy-gradient estimators, a critic step and short
//! training runs. Run with `cargo bench -p tape-bench`.
