//! Default per-stage mixing coefficients for trained three-stage models,
//! bundled as JSON so every frontend loads the same bytes.
//!
//! Set names follow the operator configuration they were fitted for:
//! `fp_pixel_shuffle` (mixed downsampler with the shuffle upsampler, plus
//! its two drop-high variants), `freq_avg_up` (the full symmetric
//! sandwich) and `split_up` (the split-upsampler ablation). Sets without
//! a fitted beta carry the 0.3 initialization values.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::sampling::MixCoefficients;

/// Raw bytes of the bundled coefficient sets.
pub const TRAINED_COEFFICIENTS_JSON: &str = include_str!("coefficients.json");

fn parse_all() -> BTreeMap<String, MixCoefficients> {
    serde_json::from_str(TRAINED_COEFFICIENTS_JSON).expect("bundled coefficient JSON is valid")
}

/// Loads one named coefficient set.
pub fn trained(name: &str) -> Result<MixCoefficients> {
    parse_all()
        .remove(name)
        .ok_or_else(|| Error::UnknownOp(format!("coefficient set '{name}'")))
}

/// All bundled set names, sorted.
pub fn available_sets() -> Vec<String> {
    parse_all().into_keys().collect()
}
