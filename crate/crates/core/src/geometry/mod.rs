//! Hypersurfaces given by defining functions and their pointwise CR data.

pub mod certify;
pub mod chart;
pub mod frame;
pub mod function;
pub mod sampler;

pub use certify::{certify_strict_c_convexity, ConvexityCertificate, POSITIVITY_THRESHOLD};
pub use chart::{adapted_frame_and_graph, GraphChart, GraphValue};
pub use frame::{
    cr_frame, cr_frame_with_order, project_to_hypersurface, shape_operator,
    shape_operator_in_frame, CrFrame, ShapeOperatorData,
};
pub use function::{Builtin, DefiningFunction, DerivativeMode, FiniteDifference, HyperplaneSlice};
pub use sampler::{sample_point, sample_points};
