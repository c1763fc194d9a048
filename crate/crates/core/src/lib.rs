//! Timing game between a VM-migrating defender and a collocating attacker.
//!
//! The defender picks a migration time `tau_d`, the attacker a launch rate
//! `lambda_a`. This crate evaluates expected payoffs, best responses and pure
//! Nash equilibria, checks sufficient conditions for existence, and simulates
//! realized payoffs.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod best_response;
pub mod error;
pub mod game;
pub mod monte_carlo;
pub mod nash;
pub mod payoff;
pub mod quadrature;
pub mod special;

pub use error::{Error, Result, Violation};
pub use game::{validate_config, CollocationModel, Game, GameConfig, RewardModel};
