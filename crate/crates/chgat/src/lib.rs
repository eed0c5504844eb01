//! Chinese name-gender prediction with a heterogeneous character graph
//! attention network, plus a Naïve Bayes baseline and ablation variants.
//!
//! The pipeline: a character decomposition table feeds per-character
//! semantic/phonetic component graphs and a shared pronunciation meta-path
//! graph; a three-level attention network fuses those with transformer text
//! encoders over the characters and their pinyin; a linear head predicts the
//! gender of a first name.

pub mod baselines;
pub mod chars;
pub mod checkpoint;
pub mod cli;
pub mod dataset;
pub mod graph;
pub mod model;
pub mod par;
pub mod params;
pub mod tape;
pub mod tensor;
pub mod training;

pub use baselines::{nb_predict, nb_train, NBModel};
pub use chars::{CharacterRecord, CharacterTable, ComponentRef, FormationType, PinyinSyllable};
pub use dataset::{compute_stats, derive_labels, split, DatasetStats, LabeledExample, NameRecord};
pub use graph::{ComponentGraph, HetGraphBundle, MetaPathGraph, NodeId, NodeKind};
pub use model::{Model, ModelConfig, Prediction, VariantKind};
pub use training::{evaluate_model, evaluate_nb, grid_search, train, EvalReport, TrainConfig};
