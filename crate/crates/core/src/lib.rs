//! Graph-guided point-cloud scene augmentation.

pub mod decompose;
pub mod embed;
pub mod geometry;
pub mod io;
pub mod layout;
pub mod losses;
pub mod optimize;
pub mod org;
pub mod pipeline;
pub mod relations;

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/scenes.md")]
    mod scenes {}
    #[doc = include_str!("../../../book/src/relations.md")]
    mod relations {}
    #[doc = include_str!("../../../book/src/graphs.md")]
    mod graphs {}
    #[doc = include_str!("../../../book/src/synthesis.md")]
    mod synthesis {}
    #[doc = include_str!("../../../book/src/outputs.md")]
    mod outputs {}
    #[doc = include_str!("../../../book/src/quickstart.md")]
    mod quickstart {}
}
