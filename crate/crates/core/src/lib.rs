pub mod error;
pub mod gallery;
pub mod geom;
pub mod homog;
pub mod num;
pub mod svmap;
pub mod certify;
pub mod clarke;
pub mod coderiv;
pub mod calculus;
pub mod regcover;
pub mod strictify;
pub mod corpus;
pub mod instance;

pub use error::{Error, Result};
pub use geom::{Ball, Halfspace, Polyhedron, Region, Vector};
pub use homog::HomogMap;
pub use svmap::SVMap;
