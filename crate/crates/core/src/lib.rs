//! Simulator for fairness-aware federated cognitive diagnosis.
//!
//! Schools act as federated clients. Each trains a cognitive-diagnosis model
//! (NCD or a differentiable DINA) on its private response logs, keeps its
//! student embeddings and diagnostic network local, and uploads only the
//! exercise embeddings. The server merges those with a loss-weighted softmax
//! so that poorly fitted schools pull the shared embeddings toward themselves.
//!
//! Module map:
//! - [`data`]: response logs, Q-matrix, ingestion, filtering, splitting, synthetic data
//! - [`model`]: NCD and soft-DINA forward/backward passes, BCE loss, Adam, local training
//! - [`federation`]: aggregation rules, Laplace noise, the round loop, centralized baseline
//! - [`metrics`]: ACC/RMSE/AUC, group fairness, degree of agreement, evaluation reports
//! - [`harness`]: experiment configs, multi-seed runs, comparison tables

pub mod data;
pub mod error;
pub mod federation;
pub mod harness;
pub mod metrics;
pub mod model;

pub use error::{Error, Result};
