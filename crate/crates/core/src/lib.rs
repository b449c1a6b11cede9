//! Numerical geometry of Lagrangian and nearly Lagrangian immersed tori in
//! flat `C^n` (`n = 1, 2`) and their mean curvature flow.
//!
//! Immersions are sampled on a periodic parameter grid. [`geometry`] builds
//! every pointwise tensor from spectral (or fourth-order) derivatives,
//! [`identities`] evaluates the structural identities as residual fields,
//! [`hodge`] provides the exterior calculus on the parameter torus and
//! [`flow`] integrates `dF/dt = -η^{mn} θ_m ν_n`.

pub mod ambient;
pub mod error;
pub mod flow;
pub mod geometry;
pub mod grid;
pub mod hodge;
pub mod identities;
pub mod immersion;
pub mod json;
pub mod scenarios;
pub mod tensor;

pub use ambient::AmbientStructure;
pub use error::{Error, Result};
pub use geometry::{GeometryOptions, GeometryState};
pub use grid::{Field, ParamGrid, Scheme};
pub use immersion::ImmersionField;
pub use scenarios::{make_scenario, Scenario};
pub use tensor::{TensorField, Variance};
