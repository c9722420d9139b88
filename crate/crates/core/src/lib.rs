//! Pseudospherical surfaces from sine-Gordon angle fields: Goursat solver,
//! extended frames, Sym reconstruction, twisted loop-group splitting and the
//! normalized potentials on the axes.

// `!(x > 0.0)` style guards are deliberate: they also reject NaN.
// Index loops mirror the stencils they implement.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod algebra;
pub mod error;
pub mod frames;
pub mod grid;
pub mod io;
pub mod loops;
pub mod potentials;
pub mod sinegordon;
pub mod surfaces;
pub mod verify;

pub use algebra::{Mat2C, Mat3, Mat3C, Vec3, C64};
pub use error::{Error, Result};
pub use frames::{integrate_frame, ExtendedFrame, FrameOptions, Integrator, PathOrder};
pub use grid::{GridSpec, ScalarField};
pub use loops::{birkhoff_split, Direction, LaurentLoop, SampledLoop, Split, SplitOptions};
pub use potentials::{eta_x, eta_y, integrate_minus, integrate_plus, PotentialForm};
pub use sinegordon::{goursat_solve, soliton_angle, AngleField, DerivativeSource, ExactAngle};
pub use surfaces::{sym_immersion, Immersion, SurfaceGeometry};
pub use verify::{verify, CheckResult, VerifyOptions, VerifyReport};
