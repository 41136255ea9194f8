//! Cross-lingual representational similarity for multilingual language
//! models.
//!
//! Layer activations for two languages of a parallel corpus are compared
//! with Average Neuron-Wise Correlation (ANC), Linear CKA, CCA, SVCCA and
//! PWCCA, and probed with cosine sentence matching. The [`synth`] module
//! provides the generators and reference implementations behind the
//! invariance checks in [`validate`].

pub mod activation;
pub mod error;
pub mod indexes;
pub mod io;
pub mod pipeline;
pub mod probes;
pub mod synth;
pub mod validate;

pub use activation::{
    center_columns, validate_pair, ActivationMatrix, CenteredMatrix, IndexKind, PairCheck, SimilarityResult, Warning,
};
pub use error::{Error, Result};
pub use indexes::{
    anc, cca, gram_spectrum, linear_cka, pearson, pwcca, svcca, CanonicalDecomposition, CkaMethod, Correlation,
    DegeneratePolicy, GramSpectrum, IndexParams,
};
pub use probes::{matching_accuracy, MatchingReport};
