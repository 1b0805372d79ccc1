pub mod cgats;
pub mod chart;
pub mod classify;
pub mod color;
pub mod corpus;
pub mod error;
pub mod evaluate;
pub mod imageio;
pub mod pipeline;
pub mod press;
pub mod profile;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/classification.md")]
    mod classification {}
    #[doc = include_str!("../../../book/src/charts.md")]
    mod charts {}
    #[doc = include_str!("../../../book/src/press-model.md")]
    mod press_model {}
    #[doc = include_str!("../../../book/src/separation.md")]
    mod separation {}
    #[doc = include_str!("../../../book/src/evaluation.md")]
    mod evaluation {}
    #[doc = include_str!("../../../book/src/pipeline.md")]
    mod pipeline {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
    #[doc = include_str!("../../../book/src/formats.md")]
    mod formats {}
}
