//! Isolation checking for mini-transaction histories.
//!
//! A mini-transaction reads one or two keys and writes at most two, and only
//! keys it has already read. With unique write values this shape pins down
//! most of the dependency graph, so strict serializability, serializability
//! and snapshot isolation reduce to acyclicity tests over a graph with a
//! linear number of edges ([`check`]). The crate also has a brute-force
//! [`oracle`], a seeded [`workload`] generator, a simulated [`store`] with
//! fault injection, and a checker for compare-and-set register histories
//! ([`lwt`]).

pub mod anomaly;
pub mod check;
pub mod cli;
pub mod cycle;
pub mod fixtures;
pub mod graph;
pub mod history;
pub mod lwt;
pub mod oracle;
pub mod store;
pub mod workload;

pub use anomaly::{screen, AnomalyInstance, AnomalyKind};
pub use check::{check, check_ser, check_si, check_sser, CheckError, Counterexample, Level, Verdict};
pub use graph::{cons_dep, detect_fork, DependencyGraph, Edge, EdgeKind, EdgeLabel, ForkInstance};
pub use history::{check_int, validate_mt, History, HistoryError, Key, Operation, Transaction, TxnId, Value};
pub use lwt::{verify_all, verify_lwt, LwtHistory, LwtOp};
pub use oracle::{oracle_lin, oracle_ser, oracle_si, OracleBudget, OracleOutcome};
pub use store::{abort_stats, execute, Fault, Isolation, StoreConfig};
pub use workload::{generate, KeyDistribution, WorkloadConfig, WorkloadMode};
