// Negated float comparisons are used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod bounds;
pub mod data;
pub mod datagen;
pub mod error;
pub mod estimators;
pub mod harness;
pub mod numerics;
pub mod par;
pub mod rng;
pub mod selectors;
pub mod thresholds;
pub mod whitening;
