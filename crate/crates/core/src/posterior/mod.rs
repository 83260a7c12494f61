//! Parameter grid, per-cell feature statistics and grid posteriors `p(t | x_1..x_N)`.

mod features;
mod field;
mod grid;

pub use features::{build_feature_table, ingest_features, write_feature_csv, FeatureTable};
pub use field::{
    auto_n_eff, oracle_log_posterior_row, oracle_posterior, oracle_posterior_from_table, oracle_posterior_row, posterior_from_features, smoothed_target, PosteriorField,
    PosteriorMeta, Weighting,
};
pub use grid::ParamGrid;
