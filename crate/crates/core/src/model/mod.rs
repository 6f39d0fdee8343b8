//! Geometry, material, rheology, boundary-condition and load-program data.
//!
//! Everything in here is immutable once built and can be shared read-only
//! between concurrent solver runs.

mod bc;
mod generate;
mod load;
mod material;
mod mesh;
mod rheology;
mod validate;

pub use bc::{ContactBc, ContactDirection, DirBc, Frame, GroupBc};
pub use generate::{generate_mesh, MeshShape, QuarterDiskSpec, RectangleSpec};
pub use load::LoadProgram;
pub use material::Material;
pub use mesh::{Element, Mesh, Point};
pub use rheology::{rheology_preset, Preset, PresetParams, RheologyCoeffs};
pub use validate::validate_model;
