//! Benchmarking framework for unsupervised domain adaptation (UDA) applied to
//! machinery fault diagnosis.
//!
//! The crate provides:
//!
//! - a shared 1D-CNN feature-extraction backbone with bottleneck, classifier
//!   heads, and domain discriminators ([`models`]),
//! - eleven transfer strategies covering mapping-based (MK-MMD, JMMD, CORAL),
//!   adversarial (DANN, CDAN), label-inconsistent (PADA, OSBP, UAN), and
//!   multi-source (MS-UADA, IAN) training, plus the AdaBN statistic swap
//!   ([`discrepancy`], [`adversarial`], [`label_shift`], [`multidomain`]),
//! - dataset adapters for five public vibration datasets and a synthetic
//!   domain-shift generator for desk-scale testing ([`data`]),
//! - the exact training protocol (Adam, step decay, progressive trade-off
//!   ramp, source-only pretraining, multi-seed repeats) ([`trainer`]),
//! - evaluation metrics including the open-set family, H-score, TOPSIS
//!   ranking, and Best/Last x Mean/Max aggregation ([`metrics`]).
//!
//! All numerics run on a small tape-based reverse-mode autodiff substrate
//! ([`tensor`]) over `ndarray`; no GPU or external ML framework is required.

pub mod adversarial;
pub mod config;
pub mod data;
pub mod discrepancy;
pub mod label_shift;
pub mod metrics;
pub mod models;
pub mod multidomain;
pub mod nn;
pub mod tasks;
pub mod tensor;
pub mod trainer;

use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid task: {0}")]
    Task(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("dataset layout mismatch: {0}")]
    Layout(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("snapshot error: {0}")]
    Snapshot(String),
    #[error("test-set leakage: {0}")]
    Leakage(String),
    #[error("non-finite loss at {0}")]
    NonFinite(String),
    #[error("parse error in {path}: {msg}")]
    Parse { path: String, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
