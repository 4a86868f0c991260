//! Small-strain elastoplasticity with vectorized sparse assembly.
//!
//! The global strain-displacement operator `B`, the integration weights and the
//! elastic stiffness `K_elast = B^T D_elast B` are built once per mesh. Newton
//! iterations then only refresh the constitutive blocks of integration points
//! that yield, through `K_tangent = K_elast + B^T (D_tangent - D_elast) B`.

pub mod assembly;
pub mod cli_io;
pub mod constitutive;
pub mod error;
pub mod linalg;
pub mod mesh;
pub mod reference_elements;
pub mod solver;

pub use error::{FemError, Result};
pub use reference_elements::{ElementType, Family};
