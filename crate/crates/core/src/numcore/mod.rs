//! Dense matrices, reverse-mode differentiation, initialization and Adam.

mod adam;
mod gradcheck;
mod init;
mod matrix;
mod params;
mod real;
mod tape;

pub use adam::{adam_step, AdamState, DEFAULT_LR};
pub use gradcheck::{check_single, finite_diff_check, GradCheckReport, DEFAULT_STEP, REL_FLOOR};
pub use init::{dropout_mask, stream_rng, xavier_init, xavier_with};
pub use matrix::Matrix;
pub use params::{ParamId, ParamStore};
pub use real::Real;
pub use tape::{Gradients, IncidenceLayout, SegmentLayout, Tape, Var};

pub(crate) use tape::softmax_groups_value;
pub use tape::log_sum_exp;

/// Row-wise softmax inside each column group, outside any tape.
pub fn softmax_per_group<T: Real>(values: &Matrix<T>, groups: &[Vec<usize>]) -> Matrix<T> {
    softmax_groups_value(values, groups)
}

pub fn l1_norm<T: Real>(v: &[T]) -> T {
    v.iter().map(|x| x.abs()).sum()
}

pub fn l2_norm<T: Real>(v: &[T]) -> T {
    v.iter().map(|&x| x * x).sum::<T>().sqrt()
}

pub fn relu<T: Real>(m: &Matrix<T>) -> Matrix<T> {
    m.map(|x| if x > T::zero() { x } else { T::zero() })
}
