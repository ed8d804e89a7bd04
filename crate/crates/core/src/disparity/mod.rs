//! Disparity estimation for rectified grayscale pairs.
//!
//! Two sources produce a [`DisparityMap`]: the in-repo semi-global matcher
//! ([`estimate_disparity`]) and [`import_disparity`], which reads maps written
//! by an external estimator as PFM.

mod census;
mod map;
mod pfm;
mod sgm;

pub use census::{census_transform, CensusImage};
pub use map::{DisparityMap, INVALID_DISPARITY};
pub use pfm::{decode_pfm, encode_pfm, import_disparity, write_pfm};
pub use sgm::{
    aggregate_costs, aggregate_path, estimate_disparity, lr_consistency_check,
    matching_cost_volume, path_directions, select_disparity, SgmParams, Volume,
};
