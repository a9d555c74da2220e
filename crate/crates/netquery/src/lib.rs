//! Distributed evaluation of FO and inflationary fixpoint queries on
//! simulated message-passing networks, the Netlog language, a Datalog¬ to
//! Netlog compiler and the local fragments FO_loc / FP_loc.

pub mod corpus;
pub mod engine_fo;
pub mod engine_fp;
pub mod netlog;
pub mod local_engine;
pub mod logic;
pub mod oracle;
pub mod rewriter;
pub mod simnet;
