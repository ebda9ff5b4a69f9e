pub mod assembly;
pub mod error;
pub mod geometry;
pub mod harness;
pub mod linsolve;
pub mod nonlinear;
pub mod pencil;
pub mod postproc;
pub mod problems;
pub mod quadrature;
pub mod sparse;
pub mod splines;

pub use error::{Error, Result};

#[cfg(doctest)]
pub mod guide {
    #[doc = include_str!("../../../book/src/introduction.md")]
    pub mod introduction {}
    #[doc = include_str!("../../../book/src/splines.md")]
    pub mod splines {}
    #[doc = include_str!("../../../book/src/space-time.md")]
    pub mod space_time {}
    #[doc = include_str!("../../../book/src/pencil.md")]
    pub mod pencil {}
    #[doc = include_str!("../../../book/src/preconditioner.md")]
    pub mod preconditioner {}
    #[doc = include_str!("../../../book/src/picard.md")]
    pub mod picard {}
    #[doc = include_str!("../../../book/src/studies.md")]
    pub mod studies {}
}
