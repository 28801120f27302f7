// `!(x > 0.0)` style checks are deliberate: they reject NaN as well
#![allow(clippy::neg_cmp_op_on_partial_ord)]
// rollout math walks several parallel arrays by index
#![allow(clippy::needless_range_loop)]

pub mod geometry;
pub mod harness;
pub mod masks;
pub mod parsing;
pub mod qc;
pub mod rewards;
pub mod rl;
pub mod service;
