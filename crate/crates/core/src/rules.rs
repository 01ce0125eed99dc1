//! Design rules: one ruleset per root-to-leaf path of a trained tree.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use crate::cart::{NodeKind, TrainedTree};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::features::{Feature, FeatureMatrix};
use crate::labels::{ClassId, Labeling};

pub const ANY_IMPLEMENTATION: &str = "(any implementation)";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Condition {
    pub feature: Feature,
    pub value: bool,
}

impl Condition {
    /// A negated ordering reads as the reverse ordering only when both ops
    /// exist in every schedule; otherwise absence also yields 0.
    pub fn render(&self, always_present: &BTreeSet<String>) -> String {
        match (&self.feature, self.value) {
            (Feature::Ordering { u, v }, true) => format!("{u} before {v}"),
            (Feature::Ordering { u, v }, false) => {
                if always_present.contains(u) && always_present.contains(v) {
                    format!("{v} before {u}")
                } else {
                    format!("not ({u} before {v})")
                }
            }
            (Feature::SameStream { u, v }, true) => format!("{u} same stream as {v}"),
            (Feature::SameStream { u, v }, false) => format!("{u} different stream than {v}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RuleSet {
    pub class: ClassId,
    pub leaf: usize,
    /// Conditions from root to leaf.
    pub conditions: Vec<Condition>,
    pub rules: Vec<String>,
    pub samples: usize,
    /// Training samples per class at the leaf.
    pub distribution: Vec<(ClassId, usize)>,
}

impl RuleSet {
    pub fn is_pure(&self) -> bool {
        self.distribution.iter().filter(|(_, n)| *n > 0).count() <= 1
    }

    fn mixed_note(&self) -> String {
        let d = self
            .distribution
            .iter()
            .filter(|(_, n)| *n > 0)
            .map(|(c, n)| format!("{c}={n}"))
            .collect::<Vec<_>>()
            .join(", ");
        format!("mixed: {d}")
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RuleReport {
    /// Rulesets per majority class, most samples first.
    pub classes: BTreeMap<ClassId, Vec<RuleSet>>,
}

impl RuleReport {
    pub fn rulesets(&self) -> impl Iterator<Item = &RuleSet> {
        self.classes.values().flatten()
    }

    pub fn len(&self) -> usize {
        self.classes.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `class \t ruleset \t samples \t rule`, one line per rule.
    pub fn to_tsv(&self) -> String {
        let mut s = String::from("# class\truleset\tsamples\trule\n");
        for (class, sets) in &self.classes {
            for (i, rs) in sets.iter().enumerate() {
                if rs.rules.is_empty() {
                    let _ = writeln!(
                        s,
                        "{class}\t{}\t{}\t{ANY_IMPLEMENTATION}",
                        i + 1,
                        rs.samples
                    );
                }
                for r in &rs.rules {
                    let _ = writeln!(s, "{class}\t{}\t{}\t{r}", i + 1, rs.samples);
                }
            }
        }
        s
    }
}

/// Every root-to-leaf path, grouped by the leaf's majority class.
/// `columns` names the tree's feature indices.
pub fn extract_rules(
    tree: &TrainedTree,
    columns: &[Feature],
    always_present: &BTreeSet<String>,
) -> RuleReport {
    let mut report = RuleReport::default();
    let mut stack = vec![(0usize, Vec::<Condition>::new())];
    while let Some((id, path)) = stack.pop() {
        let node = &tree.nodes[id];
        match node.kind {
            NodeKind::Split {
                feature,
                left,
                right,
            } => {
                let f = columns[feature].clone();
                let mut r = path.clone();
                r.push(Condition {
                    feature: f.clone(),
                    value: true,
                });
                stack.push((right, r));
                let mut l = path;
                l.push(Condition {
                    feature: f,
                    value: false,
                });
                stack.push((left, l));
            }
            NodeKind::Leaf => {
                let class = tree.classes[node.majority_index()];
                let rules = path.iter().map(|c| c.render(always_present)).collect();
                report.classes.entry(class).or_default().push(RuleSet {
                    class,
                    leaf: id,
                    conditions: path,
                    rules,
                    samples: node.samples,
                    distribution: tree
                        .classes
                        .iter()
                        .copied()
                        .zip(node.counts.iter().copied())
                        .collect(),
                });
            }
        }
    }
    for sets in report.classes.values_mut() {
        sets.sort_by(|a, b| b.samples.cmp(&a.samples).then(a.leaf.cmp(&b.leaf)));
    }
    report
}

/// Per-class blocks of the `top_k` largest rulesets (all when `None`).
pub fn render_report(report: &RuleReport, top_k: Option<usize>) -> String {
    let mut s = String::from("# design rules\n");
    for (class, sets) in &report.classes {
        let _ = writeln!(s, "\nclass {class}");
        for (i, rs) in sets.iter().take(top_k.unwrap_or(usize::MAX)).enumerate() {
            let _ = writeln!(s, "  ruleset {} ({} samples)", i + 1, rs.samples);
            if rs.rules.is_empty() {
                let _ = writeln!(s, "    {ANY_IMPLEMENTATION}");
            }
            for r in &rs.rules {
                let _ = writeln!(s, "    {r}");
            }
            if !rs.is_pure() {
                let _ = writeln!(s, "    {}", rs.mixed_note());
            }
        }
    }
    s
}

/// Fraction of `full` whose time lies inside the range of the class the
/// tree predicts for it.
pub fn evaluate_accuracy(
    tree: &TrainedTree,
    matrix: &FeatureMatrix,
    labeling: &Labeling,
    full: &Dataset,
) -> Result<f64> {
    if full.is_empty() {
        return Err(Error::Usage("full-space dataset is empty".into()));
    }
    let mut hits = 0usize;
    for rec in full {
        let class = tree.predict(&matrix.featurize(&rec.schedule))?;
        let range = labeling
            .class(class)
            .ok_or_else(|| Error::Internal(format!("predicted class {class} has no time range")))?;
        hits += usize::from(range.contains_time(rec.time));
    }
    Ok(hits as f64 / full.len() as f64)
}
