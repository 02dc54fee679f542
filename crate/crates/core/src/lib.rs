//! Exact computations in Lipschitz-free spaces over finite pointed metric
//! spaces: transport norms, retraction systems, Schauder projections and their
//! constants, circle searches and extensional operators on circle unions.

pub mod error;
pub mod experiments;
pub mod extensional;
pub mod flow;
pub mod io;
pub mod lp;
pub mod metric;
pub mod operator;
pub mod retraction;
pub mod basis;
pub mod scalar;
pub mod search;
pub mod transport;

pub use error::{Error, Result};
pub use metric::{build_circle, build_circle_union, build_grid_net, validate_metric, PointedMetricSpace};
pub use operator::{operator_norm, LinearOperator, OperatorNorm};
pub use scalar::{Rational, Scalar, FLOAT_TOL};
pub use transport::{kr_norm, kr_norm_dual, LipschitzFunction, Measure};
pub use basis::{basis_constant, projections_from_system, unconditional_constant, ProjectionFamily};
pub use extensional::{enumerate_circle_union, CircleUnionEnumeration};
pub use retraction::{lip_constant, max_lip, validate_system, RetractionSystem};
pub use search::{certify_circle_lower_bound, theorem32_bound, SearchCertificate, Target};
