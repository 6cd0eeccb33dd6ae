//! Dependency-parse ingestion and the four-level text syntax hierarchy
//! (sentence, verbs, nouns, adjectives).

mod conllu;
mod hierarchy;

pub use conllu::{parse_conllu, ParsedToken};
pub use hierarchy::{build_hierarchy, Node, NodeKind, SyntaxHierarchy, HIERARCHY_FORMAT_VERSION};
