//! Co-orbital dynamics of two planets around a star: Hill-variable
//! reduction, Taylor flow, periodic orbits, the averaged model and
//! stability maps.

pub mod averaged;
pub mod cartography;
pub mod error;
pub mod flow;
pub mod hill;
pub mod orbit;
pub mod scalar;
pub mod taylor;

pub use error::{Error, Result};
