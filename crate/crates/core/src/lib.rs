//! Greek NLP toolkit core: document model, encoder, task heads, Greeklish
//! transliteration, training and the annotation pipeline.

#![allow(clippy::needless_range_loop)]

pub mod conllu;
pub mod container;
pub mod doc;
pub mod encoder;
pub mod error;
pub mod g2g;
pub mod ner;
pub mod nn;
pub mod normalize;
pub mod parser;
pub mod pipeline;
pub mod tagger;
pub mod train;

pub use error::{Error, Result};
