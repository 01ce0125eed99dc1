//! Binary schedule features.
//!
//! `Ordering(u, v)` is 1 when `u` runs before `v`; `SameStream(u, v)` is 1
//! when both are bound to the same stream. Pairs are stored once with
//! `u < v` by name. A feature touching an op missing from a schedule is 0.

use std::collections::{BTreeSet, HashMap};
use std::fmt::{self, Write as _};

use crate::dataset::Dataset;
use crate::schedule::Schedule;

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Feature {
    Ordering { u: String, v: String },
    SameStream { u: String, v: String },
}

impl Feature {
    pub fn ordering(a: &str, b: &str) -> Self {
        let (u, v) = if a < b { (a, b) } else { (b, a) };
        Feature::Ordering {
            u: u.into(),
            v: v.into(),
        }
    }

    pub fn same_stream(a: &str, b: &str) -> Self {
        let (u, v) = if a < b { (a, b) } else { (b, a) };
        Feature::SameStream {
            u: u.into(),
            v: v.into(),
        }
    }

    pub fn ops(&self) -> (&str, &str) {
        match self {
            Feature::Ordering { u, v } | Feature::SameStream { u, v } => (u, v),
        }
    }

    fn eval(&self, pos: &HashMap<&str, usize>, stream: &HashMap<&str, u32>) -> u8 {
        match self {
            Feature::Ordering { u, v } => match (pos.get(u.as_str()), pos.get(v.as_str())) {
                (Some(a), Some(b)) => u8::from(a < b),
                _ => 0,
            },
            Feature::SameStream { u, v } => {
                match (stream.get(u.as_str()), stream.get(v.as_str())) {
                    (Some(a), Some(b)) => u8::from(a == b),
                    _ => 0,
                }
            }
        }
    }
}

impl fmt::Display for Feature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Feature::Ordering { u, v } => write!(f, "{u} before {v}"),
            Feature::SameStream { u, v } => write!(f, "{u} same stream as {v}"),
        }
    }
}

/// Candidate features over a set of schedules.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVocabulary {
    pub features: Vec<Feature>,
    /// Which features survive constant-column removal.
    pub retained: Vec<bool>,
    /// Op names present in every schedule the vocabulary was built from.
    pub always_present: BTreeSet<String>,
}

impl FeatureVocabulary {
    /// Every ordering pair over all op names, and every same-stream pair
    /// over ops that carry a stream in some schedule. Nothing is dropped yet.
    pub fn build<'a>(schedules: impl IntoIterator<Item = &'a Schedule>) -> Self {
        let mut names = BTreeSet::new();
        let mut streamed = BTreeSet::new();
        let mut always: Option<BTreeSet<String>> = None;
        for s in schedules {
            let here: BTreeSet<String> = s.ops().iter().map(|o| o.name.clone()).collect();
            streamed.extend(
                s.ops()
                    .iter()
                    .filter(|o| o.stream().is_some())
                    .map(|o| o.name.clone()),
            );
            always = Some(match always {
                None => here.clone(),
                Some(a) => a.intersection(&here).cloned().collect(),
            });
            names.extend(here);
        }
        let names: Vec<&String> = names.iter().collect();
        let streamed: Vec<&String> = streamed.iter().collect();
        let mut features = Vec::new();
        for (i, u) in names.iter().enumerate() {
            for v in &names[i + 1..] {
                features.push(Feature::ordering(u, v));
            }
        }
        for (i, u) in streamed.iter().enumerate() {
            for v in &streamed[i + 1..] {
                features.push(Feature::same_stream(u, v));
            }
        }
        let retained = vec![true; features.len()];
        FeatureVocabulary {
            features,
            retained,
            always_present: always.unwrap_or_default(),
        }
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn retained_features(&self) -> impl Iterator<Item = &Feature> {
        self.features
            .iter()
            .zip(&self.retained)
            .filter(|(_, &r)| r)
            .map(|(f, _)| f)
    }
}

/// Full-width vector over `vocab.features`, ignoring the retained mask.
pub fn featurize(schedule: &Schedule, vocab: &FeatureVocabulary) -> Vec<u8> {
    featurize_with(schedule, &vocab.features)
}

fn featurize_with(schedule: &Schedule, features: &[Feature]) -> Vec<u8> {
    let pos: HashMap<&str, usize> = schedule
        .ops()
        .iter()
        .enumerate()
        .map(|(i, o)| (o.name.as_str(), i))
        .collect();
    let stream: HashMap<&str, u32> = schedule
        .ops()
        .iter()
        .filter_map(|o| Some((o.name.as_str(), o.stream()?)))
        .collect();
    features.iter().map(|f| f.eval(&pos, &stream)).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub keys: Vec<String>,
    /// Retained columns.
    pub columns: Vec<Feature>,
    pub rows: Vec<Vec<u8>>,
    /// Columns removed for being constant.
    pub dropped: Vec<Feature>,
    pub vocab: FeatureVocabulary,
}

impl FeatureMatrix {
    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn n_cols(&self) -> usize {
        self.columns.len()
    }

    /// A new schedule's vector over the retained columns.
    pub fn featurize(&self, schedule: &Schedule) -> Vec<u8> {
        featurize_with(schedule, &self.columns)
    }

    /// Header of feature names, then one `key \t bits...` row per schedule.
    pub fn to_tsv(&self) -> String {
        let mut s = String::from("key");
        for c in &self.columns {
            let _ = write!(s, "\t{c}");
        }
        s.push('\n');
        for (k, row) in self.keys.iter().zip(&self.rows) {
            s.push_str(k);
            for b in row {
                let _ = write!(s, "\t{b}");
            }
            s.push('\n');
        }
        s
    }
}

pub fn build_matrix(dataset: &Dataset) -> FeatureMatrix {
    let mut vocab = FeatureVocabulary::build(dataset.records().map(|r| &r.schedule));
    let full: Vec<Vec<u8>> = dataset
        .records()
        .map(|r| featurize(&r.schedule, &vocab))
        .collect();
    for (j, keep) in vocab.retained.iter_mut().enumerate() {
        *keep = full.windows(2).any(|w| w[0][j] != w[1][j]);
    }
    let mut columns = Vec::new();
    let mut dropped = Vec::new();
    for (f, &keep) in vocab.features.iter().zip(&vocab.retained) {
        if keep { &mut columns } else { &mut dropped }.push(f.clone());
    }
    let rows = full
        .into_iter()
        .map(|r| {
            r.into_iter()
                .zip(&vocab.retained)
                .filter(|(_, &k)| k)
                .map(|(b, _)| b)
                .collect()
        })
        .collect();
    FeatureMatrix {
        keys: dataset.keys().map(str::to_string).collect(),
        columns,
        rows,
        dropped,
        vocab,
    }
}
