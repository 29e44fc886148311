//! Morse–Bott flow categories, Check complexes and continuation maps on
//! manifolds with boundary, computed numerically from explicit vector fields.

pub mod expr;
pub mod linalg;
pub mod f2;
pub mod geometry;
pub mod fields;
pub mod flow;
pub mod catalog;
pub mod strata;
pub mod complex;
pub mod continuation;
pub mod equivariant;
pub mod oracle;

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/intro.md")]
    mod intro {}
    #[doc = include_str!("../../../book/src/fields.md")]
    mod fields {}
    #[doc = include_str!("../../../book/src/complex.md")]
    mod complex {}
    #[doc = include_str!("../../../book/src/continuation.md")]
    mod continuation {}
    #[doc = include_str!("../../../book/src/equivariant.md")]
    mod equivariant {}
    #[doc = include_str!("../../../book/src/oracles.md")]
    mod oracles {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
