//! Performance design rules from schedule measurements.

pub mod cart;
pub mod dag;
pub mod dataset;
pub mod error;
pub mod exec;
pub mod features;
pub mod labels;
pub mod mcts;
pub mod pipeline;
pub mod rules;
pub mod schedule;

pub use cart::{grow_tree, hyperparam_search, TrainedTree};
pub use dag::{OpKind, ProgramDag};
pub use dataset::{Dataset, Record};
pub use error::{Error, Result};
pub use exec::{CostModel, Executor, ExternalCommand, Measurement, MeasurementProtocol, Simulator};
pub use features::{build_matrix, Feature, FeatureMatrix, FeatureVocabulary};
pub use labels::{make_labels, ClassId, LabelParams, Labeling, PerfClass};
pub use mcts::{run_search, SearchTree};
pub use rules::{evaluate_accuracy, extract_rules, render_report, RuleReport, RuleSet};
pub use schedule::{enumerate_schedules, ExecutedOp, Prefix, Schedule};
