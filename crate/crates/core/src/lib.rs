//! Physically based snowfall and wet-ground augmentation for rotating
//! multi-beam LiDAR sweeps.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod batch;
pub mod calibration;
pub mod dror;
pub mod echo;
pub mod error;
pub mod interop;
pub mod io;
pub mod occlusion;
pub mod pipeline;
pub mod sensor;
pub mod snow;
pub mod wet;

pub use error::{Error, Result};

/// Independent seed for stream `stream` of a run seeded with `base`
/// (splitmix64 finalizer over the pair).
pub fn derive_seed(base: u64, stream: u64) -> u64 {
    let mut z = base ^ stream.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
