// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod checkpoint;
pub mod data;
pub mod error;
pub mod frame;
pub mod metrics;
pub mod model;
pub mod report;
pub mod study;
pub mod synth;
pub mod tensor;
pub mod trainer;

pub use error::{Error, ErrorKind, Result};

// The guide in book/ is compiled as doctests so its snippets cannot rot.
macro_rules! book_chapters {
    ($($name:ident => $file:literal),* $(,)?) => {
        $(
            #[cfg(doctest)]
            #[doc = include_str!(concat!("../../../book/src/", $file))]
            mod $name {}
        )*
    };
}

book_chapters! {
    book_introduction => "introduction.md",
    book_data => "data.md",
    book_profiles => "profiles.md",
    book_frames => "frames.md",
    book_model => "model.md",
    book_attention => "attention.md",
    book_gradients => "gradients.md",
    book_training => "training.md",
    book_synthetic => "synthetic.md",
    book_evaluation => "evaluation.md",
    book_cli => "cli.md",
    book_real_data => "real-data.md",
    book_verification => "verification.md",
}
