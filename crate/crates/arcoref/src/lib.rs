//! Arabic neural coreference resolution at desk scale.
//!
//! The crate covers the full loop: CoNLL-2012 corpus parsing and writing,
//! Arabic orthography normalization, a from-scratch autodiff core, a
//! span-ranking coreference model with coarse-to-fine antecedent scoring and
//! second-order refinement, a separately trained biaffine mention detector,
//! an annealed end-to-end/pipeline training schedule, and the MUC, B³, and
//! CEAF_φ4 coreference metrics.
//!
//! Start with the runnable programs under `examples/`; each one exercises a
//! single capability end to end on the bundled synthetic corpus.

pub mod arabic;
pub mod cli;
pub mod conll;
pub mod detector;
pub mod embed;
pub mod error;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod synth;
pub mod train;

pub use conll::{ClusterSet, Document, Span, Token};
pub use error::{Error, Result};
