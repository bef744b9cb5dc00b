//! File formats, Graphviz output and the command-line front end for
//! [`ca_core`].

pub mod cli;
pub mod dot;
pub mod format;
