//! Knowledge-tracing models for SLAM-format learner data, and a between-group
//! fairness audit built on the absolute area between ROC curves (ABROCA).

pub mod cli;
pub mod digest;
pub mod error;
pub mod fairness;
pub mod features;
pub mod gbdt;
pub mod grouping;
pub mod loss;
pub mod manifest;
pub mod metrics;
pub mod model;
pub mod multitask;
pub mod plot;
pub mod slam;
pub mod synth;

pub use error::{Error, Result};
pub use fairness::{abroca, group_audit, AbrocaReport, AbrocaResult, AuditOptions};
pub use features::{build_vocab, encode, FeatureConfig, FeatureVector, Vocabulary};
pub use gbdt::{best_split, predict_gbdt, train_gbdt, GbdtConfig, GbdtModel};
pub use grouping::{classify_country, slice, CountryClassification, Development, Dimension, Group, GroupTag};
pub use metrics::{auc_rank, auc_trapezoid, f1_at_threshold, roc_curve, F1Score, Prediction, RocCurve, RocPoint};
pub use model::{ModelFile, TrainedModel};
pub use multitask::{forward, grad, train_multitask, MtConfig, MtModel};
pub use slam::{join_labels, parse_exercise_stream, parse_label_key, Client, Dataset, Label, Split, TokenInstance, Track};
