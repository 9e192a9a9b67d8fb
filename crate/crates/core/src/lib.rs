//! Tabular distributional policy evaluation.
//!
//! The crate computes return distributions of a fixed policy on a finite MDP
//! with categorical distributional dynamic programming, estimates them from
//! generative-model samples, and builds plug-in confidence sets around the
//! estimates:
//!
//! * [`measures`]: categorical and zero-mass signed measures on a shared
//!   return grid, W1/Wp/KS/TV metrics and the functionals used for inference.
//! * [`mdp`]: tabular MDPs, policies, reward laws, generative sampling and
//!   the JSON model format.
//! * [`bellman`]: the (empirical) distributional Bellman operator, dynamic
//!   programming, classical evaluation and the truncated Neumann inverse.
//! * [`inference`]: Gaussian limit sampling, confidence balls and
//!   delta-method intervals.
//! * [`oracle`]: Monte-Carlo rollouts used to cross-check the operator route.
//! * [`experiments`]: the convergence and coverage studies behind the
//!   `distrl` binary.
//!
//! ```
//! use distrl::bellman::{ddp, BellmanOperator, ReturnDistributionVector};
//! use distrl::mdp::{Policy, RewardSpec, TabularMdp, TransitionTensor};
//! use distrl::measures::{CategoricalMeasure, GridWeights, ReturnGrid};
//!
//! let mdp = TabularMdp::new(
//!     0.5,
//!     TransitionTensor::new(1, 1, vec![1.0]).unwrap(),
//!     vec![RewardSpec::Bernoulli { q: 0.5 }],
//! )
//! .unwrap();
//! let policy = Policy::uniform(1, 1);
//! let grid = ReturnGrid::new(200, 0.5).unwrap();
//! let op = BellmanOperator::from_mdp(&mdp, &policy, grid).unwrap();
//! let eta0 = ReturnDistributionVector::constant(1, &CategoricalMeasure::dirac(grid, 0.0).unwrap());
//! let out = ddp(&op, &eta0, 1_000, 1e-10).unwrap();
//! assert!(out.trace.converged);
//! assert!((out.eta.measure(0).mean() - 1.0).abs() < grid.spacing());
//! ```
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bellman;
pub mod error;
pub mod experiments;
pub mod inference;
pub mod mdp;
pub mod measures;
pub mod oracle;
pub mod seed;

pub use error::{Error, Result};
