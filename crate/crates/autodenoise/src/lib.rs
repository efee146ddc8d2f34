//! Reinforcement-learning instance denoising for CTR prediction.
//!
//! A policy network scores every training instance with select/deselect
//! probabilities and is trained in two alternating phases: a searching
//! phase that rewards per-instance loss improvement against a rolling
//! historical baseline, and a validation phase that keeps the top-k
//! instances per batch and trains a fresh CTR model to convergence on the
//! selection. The best-performing subset and policy across epochs are the
//! run's output, and the subset transfers to other backbones.
//!
//! The crate ships the numeric kernel (hand-written MLP with batchnorm,
//! dropout and exact gradients), FM and DeepFM-lite backbones, the
//! denoising engine, AUC/logloss metrics, truncation/reweighting baseline
//! denoisers, a synthetic noisy-dataset generator, and a small CLI. See
//! `examples/` for runnable entry points per capability.

pub mod baselines;
pub mod checkpoint;
pub mod config;
pub mod data;
pub mod engine;
pub mod error;
pub mod metrics;
pub mod models;
pub mod nn;
pub mod policy;
pub mod report;
pub mod rng;
pub mod runner;

pub use error::{Error, Result};
