//! Lifted variable elimination.

mod engine;
mod log;
mod ops;

pub use engine::{eliminate, enter_evidence, lve_answer, Keep};
pub use log::{EliminationStep, OpKind, OperatorLog};
pub use ops::{
    absorb, count_convert, count_convert_joint, extend_crv, ground_parfactor, multiply, normalise, shatter,
    split_crv, sum_out, sum_out_at, ShatterReport, GROUND_TABLE_LIMIT,
};
