use std::collections::BTreeMap;

use super::ExperimentError;
use crate::prte::PriorSpec;

/// Shipped prior files by name.
pub const LIBRARY: &[(&str, &str)] = &[
    ("example1", include_str!("../../priors/example1.prte")),
    ("grm", include_str!("../../priors/grm.prte")),
    ("hook", include_str!("../../priors/hook.prte")),
    ("hyp", include_str!("../../priors/hyp.prte")),
    ("iso", include_str!("../../priors/iso.prte")),
    ("mrs", include_str!("../../priors/mrs.prte")),
    ("sum", include_str!("../../priors/sum.prte")),
    ("toy", include_str!("../../priors/toy.prte")),
];

pub fn library_source(name: &str) -> Option<&'static str> {
    LIBRARY.iter().find(|(n, _)| *n == name).map(|(_, text)| *text)
}

pub fn library_prior(name: &str) -> Result<PriorSpec, ExperimentError> {
    let text = library_source(name).ok_or_else(|| ExperimentError::UnknownPrior(name.to_string()))?;
    Ok(PriorSpec::parse(text).unwrap_or_else(|e| panic!("shipped prior `{name}` is invalid: {e}")))
}

/// Every shipped prior, parsed.
pub fn prior_library() -> BTreeMap<&'static str, PriorSpec> {
    LIBRARY
        .iter()
        .map(|(name, _)| (*name, library_prior(name).expect("listed name")))
        .collect()
}
