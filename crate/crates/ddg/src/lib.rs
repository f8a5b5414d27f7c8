//! Data-dependency gadget search over function ASTs.
//!
//! Units arrive in the interchange format read by [`ast::load_dump`]. Each
//! unit gets a dependency graph ([`graph::build_ddg`]); parameters that reach
//! a critical argument of a configured sink make a [`GadgetCandidate`].

pub mod ast;
pub mod corpus;
pub mod graph;
pub mod oracle;
pub mod search;
pub mod sinks;

pub use ast::{load_dump, Dump, FunctionUnit, Node};
pub use corpus::{evaluate, load_labels, run_dumps, CorpusReport, Evaluation, Labels};
pub use graph::{build_ddg, build_ddg_with, DdgGraph, Edge, Mutators, Rule};
pub use search::{find_candidates, GadgetCandidate, Witness};
pub use sinks::{default_sinks, load_sinks, ArgSel, Require, SinkSet, SinkSpec};
