//! Simulation and verification laboratory for favorite sites (most visited
//! sites) of simple random walk on `Z^d`.
//!
//! The crate is organized around seven areas:
//!
//! * [`walk`], [`local_time`], [`favorites`], [`pair_thick`], [`enumerate`]:
//!   lattice walk simulation, sparse local-time bookkeeping, favorite-site
//!   event detection, and exhaustive small-case oracles.
//! * [`decomp`], [`pairing`], [`near_favorite`]: the 2D split of local time
//!   into jump-chain and lazy parts, horizontal-neighbor site pairings, and
//!   the derived near-favorite / threshold site sets.
//! * [`analytics`]: closed-form and exactly solved quantities (negative
//!   binomial laws, local CLT, moderate deviations, lattice Green functions,
//!   hitting probabilities, escape constants, Brownian max-abs series).
//! * [`samplers`]: conditional samplers for holding counts and truncated
//!   lazy laws, verified against direct simulation.
//! * [`urn`]: urn toy models with exact enumeration oracles.
//! * [`excursion`], [`mjp`]: nested-annuli excursion counting and the
//!   matching birth-death jump process with upcrossing bookkeeping.
//! * [`harness`], [`accept`], [`cli`]: deterministic parallel trial runner,
//!   acceptance suite, and the command-line interface.

pub mod accept;
pub mod analytics;
pub mod cli;
pub mod decomp;
pub mod enumerate;
pub mod error;
pub mod excursion;
pub mod favorites;
pub mod harness;
pub mod hash;
pub mod lattice;
pub mod local_time;
pub mod mjp;
pub mod near_favorite;
pub mod pair_thick;
pub mod pairing;
pub mod rng;
pub mod samplers;
pub mod stats;
pub mod urn;
pub mod walk;

pub use error::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
