//! Fisher metric as the Hessian of a learned potential, geodesics under that metric, and
//! derived diagnostics.

mod geodesic;
mod metric;
mod svg;

pub use geodesic::{geodesic, path_curvature, path_length, read_points, write_points, GeodesicConfig, GeodesicPath};
pub use metric::{hessian_field, hessian_field_from_values, phase_map, HessianMode, MetricField, PhaseMap};
pub use svg::heatmap_svg;
