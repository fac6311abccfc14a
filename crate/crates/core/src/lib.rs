//! Numerical laboratory for the backwards Ricci flow of connection-type
//! metrics on principal torus bundles over products of Fano Kähler-Einstein
//! factors.
//!
//! The geometric input is purely combinatorial: factor dimensions, Einstein
//! constants, and the integer matrix of Euler-class coefficients (see
//! [`bundle::BundleSpec`]). The flow reduces to polynomial ODE systems:
//!
//! * rank one ([`circle`], [`integrator`]): the phase variables `Y_i = a/b_i`
//!   evolve by `dY_i/du = -Y_i F_i(Y)` in the rescaled clock `u`, coupled to
//!   the metric coefficients `(a, b_i)` in backwards time `tau`;
//! * rank `r > 1` ([`torus`]): the fibre metric `H` evolves by
//!   `dH/dtau = H V(b) H` coupled to the base coefficients.
//!
//! On top of the flows the crate provides the fixed-point structure and its
//! spectral analysis ([`spectral`]), curvature and collapse diagnostics
//! ([`diagnostics`]), shooting for the distinguished ancient solutions
//! ([`shooting`]), and a scenario-driven command layer with a verification
//! suite ([`scenario`], [`verify`]).

pub mod bundle;
pub mod circle;
pub mod diagnostics;
pub mod error;
pub mod integrator;
pub mod ode;
pub mod presets;
pub mod scenario;
pub mod shooting;
pub mod spectral;
pub mod torus;
pub mod verify;

pub use bundle::{BundleSpec, CouplingConstants, ValidationReport};
pub use circle::{CircleState, CircleSystem, FixedPointSet, RegionTag};
pub use error::{Error, Result};
