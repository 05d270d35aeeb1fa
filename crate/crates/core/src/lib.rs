//! Core of the iOCT sonification engine.
//!
//! Everything in this crate is pure computation: it takes per-frame retinal
//! layer segmentations (ILM, RPE, needle evidence), builds an anatomy-anchored
//! mass-spring-damper lattice and integrates it at audio rate. File formats,
//! threads, sockets and the command line live in the `ioct-sonify` crate.
//!
//! The crate is `no_std` (with `alloc`) unless the `std` feature is enabled.

#![cfg_attr(not(feature = "std"), no_std)]
// `!(x > y)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
// Numeric kernels index several parallel arrays by the same node.
#![allow(clippy::needless_range_loop)]

extern crate alloc;

pub mod anatomy;
pub mod baseline;
pub mod config;
pub mod dynamics;
pub mod frame;
pub mod geom;
pub mod lattice;
pub mod math;
pub mod phantom;
pub mod render;
pub mod session;

pub use config::{Method, SessionConfig};
pub use frame::{BScanFrame, SegFrame};
pub use geom::Vec2;

/// Audio sample rate used throughout the engine.
pub const SAMPLE_RATE: u32 = 44_100;
