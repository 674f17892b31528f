//! Lyrics-conditioned melody generation with a discrete-output GAN.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod autodiff;
pub mod error;
pub mod gan;
pub mod lyrics;
pub mod mi;
pub mod nn;
pub mod recommend;
pub mod score;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use tensor::Tensor;

// The guide's snippets run as doc tests.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    struct Introduction;
    #[doc = include_str!("../../../book/src/autodiff.md")]
    struct Autodiff;
    #[doc = include_str!("../../../book/src/lyrics.md")]
    struct Lyrics;
    #[doc = include_str!("../../../book/src/gan.md")]
    struct Gan;
    #[doc = include_str!("../../../book/src/mi.md")]
    struct Mi;
    #[doc = include_str!("../../../book/src/training.md")]
    struct Training;
    #[doc = include_str!("../../../book/src/score.md")]
    struct Score;
    #[doc = include_str!("../../../book/src/service.md")]
    struct Service;
}
