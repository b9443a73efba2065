//! Chart-based Riemannian geometry: metric tensor, Christoffel symbols,
//! curvature, parallel transport and the conformal connecting map.

mod connect;
mod metric;
mod transport;

pub use connect::{conformal_connect, convexity_margin, path_defect, BvpConfig, CurvePath};
pub use metric::{
    gradient, hessian_form_matrix, hessian_quadform, max_sectional, ChartBox, ChartManifold,
    MetricPoint, TangentVector,
};
pub use transport::{transport_frame, transport_vector, Curve, SampledCurve, TangentFrame};
