//! Exact laboratory for query protocols over composed problems.
//!
//! The library models a two-layer query problem: an outer relation over
//! `n`-bit strings composed with an inner promise function applied to `n`
//! blocks of `m` bits each. It provides
//!
//! * exact (arbitrary-precision rational) representations of promise
//!   functions, relations and input distributions ([`problems`]),
//! * deterministic bit-query protocol trees and randomised polarised
//!   protocol trees with per-index memory registers ([`trees`]),
//! * an evaluation and verification engine that computes errors, expected
//!   query counts, per-leaf predictor statistics and structural checks,
//!   all with exact arithmetic ([`eval`]),
//! * the node-by-node translation of a deterministic protocol for the
//!   composed problem into a polarised protocol for the outer problem,
//!   together with the tree isomorphism it induces ([`transform`]),
//! * single-block restrictions of a protocol and confidence-threshold
//!   trimming, with their accuracy/cost guarantees ([`restrict`]),
//! * brute-force hardness certificates for tiny inner functions over an
//!   enumerated family of decision trees ([`hardness`]),
//! * the gap-threshold instance with its majority-of-probes protocol,
//!   exact advantage computation and a seeded Monte Carlo harness
//!   ([`gap_majority`]).
//!
//! Everything outside [`gap_majority`]'s Monte Carlo harness is exact:
//! probabilities are `BigRational`s and every invariant is checked with
//! zero tolerance.

pub mod eval;
pub mod gap_majority;
pub mod gen;
pub mod hardness;
pub mod io;
pub mod problems;
pub mod rational;
pub mod restrict;
pub mod rng;
pub mod transform;
pub mod trees;

pub use problems::{Bitstring, Distribution, GVal, PromiseFunction, Relation};
pub use rational::Rat;

use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("bit length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("answer {0:?} is not in the relation's alphabet")]
    UnknownAnswer(String),
    #[error("conditioning event has probability zero")]
    ZeroProbability,
    #[error("distribution support contains an input that violates the promise")]
    IllegalSupport,
    #[error("function is constant on the distribution's support")]
    ConstantOnSupport,
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),
    #[error("protocol tree is not acyclic")]
    CyclicTree,
    #[error("node id {0} out of range")]
    BadNodeId(usize),
    #[error("index {index} out of range for {limit} positions")]
    IndexOutOfRange { index: usize, limit: usize },
    #[error("leaf without an answer label")]
    UnlabeledLeaf,
    #[error("polarity violation at node {node}")]
    PolarityViolation { node: usize },
    #[error("parameter out of range: {0}")]
    ParameterRange(String),
    #[error("family contains no tree with positive advantage")]
    NoPositiveAdvantage,
    #[error("enumeration exceeds the size cap ({0} trees)")]
    FamilyTooLarge(usize),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("internal consistency violation: {0}")]
    Internal(String),
}

pub type Result<T> = std::result::Result<T, Error>;
