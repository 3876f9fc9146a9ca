pub mod error;
pub mod estimation;
pub mod linalg;
pub mod majorana;
pub mod metrology;
mod nelder_mead;
pub mod states;
pub mod su2;
pub mod two_mode;

pub use error::{Error, Result};
pub use nelder_mead::{Minimum, NelderMead};
