//! Benign test corpus: canary pickles pushed through every supported loading
//! path, the malformed-archive cases, direct calls to database gadgets, and
//! seeded fuzz inputs. The canary only ever prints a sentinel string.

pub mod assemble;
pub mod corpus;
pub mod fuzz;
pub mod lint;
pub mod malform;
pub mod wrap;

pub use assemble::{assemble_pickle, is_benign, Literal, Variant, BENIGN_CANARIES, SENTINEL};
pub use corpus::{
    bomb_fixtures, eop_fixture, full_corpus, gadget_fixture, manifest, row_fixture, Family, Fixture, ManifestEntry,
};
pub use fuzz::fuzz_inputs;
pub use lint::{benignity_lint, LintError};
pub use malform::{malform, Eop};
pub use wrap::{wrap, Layer};

use crate::risk::{load_list, Classifier, GadgetDatabase, ListKind, Policy, RuleList, DEFAULT_ALLOWLIST, DEFAULT_DENYLIST};

/// Denylist overlay that ranks the canary like the payload it stands in for.
pub const CANARY_RULES: &str = include_str!("../../data/canary_rules.toml");

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ForgeError {
    #[error("{0} is not a benign canary")]
    NotBenign(String),
    #[error("cannot encode {0:?} as a quoted STRING operand")]
    Unencodable(String),
    #[error("unknown layer {0:?}")]
    UnknownLayer(String),
    #[error("unknown variant {0:?}")]
    UnknownVariant(String),
    #[error("unknown directive {0:?}")]
    UnknownDirective(String),
    #[error("{directive} does not apply: {format}")]
    DirectiveMismatch { directive: String, format: String },
    #[error("unknown family {0:?}")]
    UnknownFamily(String),
    #[error("{0}")]
    Io(String),
}

/// The built-in classifier with the canary overlay merged into the denylist.
pub fn canary_classifier(policy: Policy) -> Classifier {
    let mut deny = load_list(DEFAULT_DENYLIST, ListKind::Deny).expect("shipped denylist is valid");
    deny.merge(load_list(CANARY_RULES, ListKind::Deny).expect("canary rules are valid"));
    Classifier::new(
        policy,
        deny,
        GadgetDatabase::seed(),
        load_list(DEFAULT_ALLOWLIST, ListKind::Allow).expect("shipped allowlist is valid"),
        RuleList::default(),
    )
}
