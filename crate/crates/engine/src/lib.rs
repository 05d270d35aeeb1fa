//! File formats, offline and live sessions, benchmarking and the command
//! line around [`ioct_sonify_core`].

// `!(x > y)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bench;
pub mod config;
pub mod live;
pub mod offline;
pub mod priority;
pub mod protocol;
pub mod sequence;
pub mod spectrogram;
pub mod wav;

pub use ioct_sonify_core as core;
