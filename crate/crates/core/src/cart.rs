//! CART classification trees over binary features.
//!
//! Gini impurity, class weights `M / (K * M_c)`, and best-first growth: the
//! leaf whose split removes the most weighted impurity is split next, until
//! the leaf or depth cap binds or every leaf is pure or unsplittable.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::features::Feature;
use crate::labels::ClassId;

/// Decreases closer than this count as equal.
const MIN_DECREASE: f64 = 1e-12;

/// Number of larger leaf caps tried before the search gives up.
pub const SEARCH_PROBES: usize = 5;

/// Weight per class in ascending class order, with the class list.
pub fn balanced_weights(labels: &[ClassId]) -> (Vec<ClassId>, Vec<f64>) {
    let mut classes: Vec<ClassId> = labels.to_vec();
    classes.sort();
    classes.dedup();
    let m = labels.len() as f64;
    let k = classes.len() as f64;
    let weights = classes
        .iter()
        .map(|c| {
            let mc = labels.iter().filter(|l| *l == c).count() as f64;
            m / (k * mc)
        })
        .collect();
    (classes, weights)
}

pub fn gini(mass: &[f64]) -> Result<f64> {
    let total: f64 = mass.iter().sum();
    if total <= 0.0 {
        return Err(Error::ZeroMass);
    }
    Ok(1.0 - mass.iter().map(|m| (m / total).powi(2)).sum::<f64>())
}

fn gini_or_zero(mass: &[f64]) -> f64 {
    gini(mass).unwrap_or(0.0)
}

/// Training rows as class indices with per-class weights.
struct Problem<'a> {
    rows: &'a [Vec<u8>],
    y: Vec<usize>,
    weights: Vec<f64>,
    n_classes: usize,
}

impl Problem<'_> {
    fn mass(&self, idx: &[usize]) -> (Vec<f64>, Vec<usize>) {
        let mut mass = vec![0.0; self.n_classes];
        let mut counts = vec![0; self.n_classes];
        for &i in idx {
            mass[self.y[i]] += self.weights[self.y[i]];
            counts[self.y[i]] += 1;
        }
        (mass, counts)
    }

    /// Best feature and its decrease `G - mL/m GL - mR/m GR`. An impure node
    /// may split with zero decrease, which lets later splits separate
    /// patterns such as xor.
    fn best_split(&self, idx: &[usize]) -> Option<(usize, f64)> {
        let (mass, _) = self.mass(idx);
        let m: f64 = mass.iter().sum();
        let g = gini_or_zero(&mass);
        if g <= 0.0 {
            return None;
        }
        let n_features = self.rows.first().map_or(0, Vec::len);
        let mut best: Option<(usize, f64)> = None;
        let mut right = vec![0.0; self.n_classes];
        for f in 0..n_features {
            right.iter_mut().for_each(|x| *x = 0.0);
            let mut n_right = 0;
            for &i in idx {
                if self.rows[i][f] != 0 {
                    right[self.y[i]] += self.weights[self.y[i]];
                    n_right += 1;
                }
            }
            if n_right == 0 || n_right == idx.len() {
                continue;
            }
            let left: Vec<f64> = mass.iter().zip(&right).map(|(a, b)| a - b).collect();
            let ml: f64 = left.iter().sum();
            let mr: f64 = right.iter().sum();
            let d = g - ml / m * gini_or_zero(&left) - mr / m * gini_or_zero(&right);
            if d > -MIN_DECREASE && best.is_none_or(|(_, bd)| d > bd + MIN_DECREASE) {
                best = Some((f, d.max(0.0)));
            }
        }
        best
    }
}

/// The feature with the largest weighted impurity decrease on `rows`, ties
/// going to the lower column; `None` when the rows are pure or no feature
/// varies.
pub fn best_split(rows: &[Vec<u8>], labels: &[ClassId]) -> Option<(usize, f64)> {
    let (classes, weights) = balanced_weights(labels);
    let y = labels
        .iter()
        .map(|l| classes.binary_search(l).unwrap())
        .collect();
    let p = Problem {
        rows,
        y,
        weights,
        n_classes: classes.len(),
    };
    let idx: Vec<usize> = (0..rows.len()).collect();
    p.best_split(&idx)
}

#[derive(Debug, Clone, PartialEq)]
pub enum NodeKind {
    /// `left` takes feature value 0, `right` value 1.
    Split {
        feature: usize,
        left: usize,
        right: usize,
    },
    Leaf,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TreeNode {
    pub kind: NodeKind,
    /// Weighted class mass, aligned with [`TrainedTree::classes`].
    pub distribution: Vec<f64>,
    pub counts: Vec<usize>,
    pub samples: usize,
    pub depth: usize,
}

impl TreeNode {
    pub fn is_leaf(&self) -> bool {
        self.kind == NodeKind::Leaf
    }

    /// Index of the heaviest class; ties go to the earlier (faster) class.
    pub fn majority_index(&self) -> usize {
        let mut best = 0;
        for (i, &m) in self.distribution.iter().enumerate() {
            if m > self.distribution[best] {
                best = i;
            }
        }
        best
    }

    pub fn is_pure(&self) -> bool {
        self.counts.iter().filter(|&&c| c > 0).count() <= 1
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedTree {
    /// Node 0 is the root.
    pub nodes: Vec<TreeNode>,
    pub classes: Vec<ClassId>,
    pub n_features: usize,
    pub max_leaf_nodes: usize,
    pub max_depth: usize,
    pub training_error: f64,
}

impl TrainedTree {
    /// A tree assembled by hand; the training error is left at 0.
    pub fn from_parts(nodes: Vec<TreeNode>, classes: Vec<ClassId>, n_features: usize) -> Self {
        let leaves = nodes.iter().filter(|n| n.is_leaf()).count();
        let depth = nodes.iter().map(|n| n.depth).max().unwrap_or(0);
        TrainedTree {
            nodes,
            classes,
            n_features,
            max_leaf_nodes: leaves,
            max_depth: depth,
            training_error: 0.0,
        }
    }

    pub fn leaf_count(&self) -> usize {
        self.nodes.iter().filter(|n| n.is_leaf()).count()
    }

    pub fn depth(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| n.is_leaf())
            .map(|n| n.depth)
            .max()
            .unwrap_or(0)
    }

    pub fn leaf_for(&self, x: &[u8]) -> Result<usize> {
        if x.len() != self.n_features {
            return Err(Error::FeatureWidth {
                expected: self.n_features,
                got: x.len(),
            });
        }
        let mut cur = 0;
        while let NodeKind::Split {
            feature,
            left,
            right,
        } = self.nodes[cur].kind
        {
            cur = if x[feature] != 0 { right } else { left };
        }
        Ok(cur)
    }

    pub fn predict(&self, x: &[u8]) -> Result<ClassId> {
        let leaf = self.leaf_for(x)?;
        Ok(self.classes[self.nodes[leaf].majority_index()])
    }

    /// Indented node listing with sample counts and class counts.
    pub fn render(&self, columns: &[Feature]) -> String {
        let mut s = String::new();
        self.render_node(0, 0, "", columns, &mut s);
        s
    }

    fn render_node(
        &self,
        id: usize,
        indent: usize,
        edge: &str,
        columns: &[Feature],
        out: &mut String,
    ) {
        let n = &self.nodes[id];
        let pad = "  ".repeat(indent);
        let counts = self
            .classes
            .iter()
            .zip(&n.counts)
            .map(|(c, k)| format!("{c}:{k}"))
            .collect::<Vec<_>>()
            .join(" ");
        match n.kind {
            NodeKind::Split {
                feature,
                left,
                right,
            } => {
                let name = columns
                    .get(feature)
                    .map_or(format!("x{feature}"), |f| f.to_string());
                let _ = writeln!(
                    out,
                    "{pad}{edge}[{id}] {name}? samples={} classes=[{counts}]",
                    n.samples
                );
                self.render_node(left, indent + 1, "0: ", columns, out);
                self.render_node(right, indent + 1, "1: ", columns, out);
            }
            NodeKind::Leaf => {
                let _ = writeln!(
                    out,
                    "{pad}{edge}[{id}] leaf class={} samples={} classes=[{counts}]",
                    self.classes[n.majority_index()],
                    n.samples
                );
            }
        }
    }
}

/// Grows a tree best-first under both caps.
/// A leaf still eligible for splitting: node, rows reaching it, its best split.
type OpenLeaf = (usize, Vec<usize>, Option<(usize, f64)>);

pub fn grow_tree(
    rows: &[Vec<u8>],
    labels: &[ClassId],
    max_leaf_nodes: usize,
    max_depth: usize,
) -> Result<TrainedTree> {
    if rows.is_empty() || rows.len() != labels.len() {
        return Err(Error::EmptyMatrix);
    }
    let n_features = rows[0].len();
    if let Some(r) = rows.iter().find(|r| r.len() != n_features) {
        return Err(Error::FeatureWidth {
            expected: n_features,
            got: r.len(),
        });
    }
    let (classes, weights) = balanced_weights(labels);
    let y: Vec<usize> = labels
        .iter()
        .map(|l| classes.binary_search(l).unwrap())
        .collect();
    let p = Problem {
        rows,
        y,
        weights,
        n_classes: classes.len(),
    };

    let make = |p: &Problem, idx: &[usize], depth: usize| {
        let (distribution, counts) = p.mass(idx);
        TreeNode {
            kind: NodeKind::Leaf,
            distribution,
            counts,
            samples: idx.len(),
            depth,
        }
    };
    let all: Vec<usize> = (0..rows.len()).collect();
    let mut nodes = vec![make(&p, &all, 0)];
    let mut open: Vec<OpenLeaf> = Vec::new();
    let candidate = |p: &Problem, idx: &[usize], depth: usize| {
        if depth < max_depth {
            p.best_split(idx)
        } else {
            None
        }
    };
    open.push((0, all.clone(), candidate(&p, &all, 0)));
    let mut leaves = 1;

    while leaves < max_leaf_nodes {
        // largest mass-weighted decrease; ties go to the older leaf
        let mut pick: Option<(usize, f64)> = None;
        for (i, (node, _, split)) in open.iter().enumerate() {
            if let Some((_, d)) = split {
                let gain = d * nodes[*node].distribution.iter().sum::<f64>();
                if pick.is_none_or(|(_, g)| gain > g) {
                    pick = Some((i, gain));
                }
            }
        }
        let Some((i, _)) = pick else { break };
        let (node, idx, split) = open.remove(i);
        let (feature, _) = split.expect("picked leaf has a split");
        let depth = nodes[node].depth + 1;
        let (r, l): (Vec<usize>, Vec<usize>) = idx.iter().partition(|&&j| rows[j][feature] != 0);
        let left = nodes.len();
        nodes.push(make(&p, &l, depth));
        let right = nodes.len();
        nodes.push(make(&p, &r, depth));
        nodes[node].kind = NodeKind::Split {
            feature,
            left,
            right,
        };
        open.push((left, l.clone(), candidate(&p, &l, depth)));
        open.push((right, r.clone(), candidate(&p, &r, depth)));
        leaves += 1;
    }

    // summed per class from integer counts, so trees making the same
    // mistakes report bit-identical errors
    let mut missed = vec![0usize; p.n_classes];
    for n in nodes.iter().filter(|n| n.is_leaf()) {
        let keep = n.majority_index();
        for (c, &k) in n.counts.iter().enumerate() {
            if c != keep {
                missed[c] += k;
            }
        }
    }
    let total: f64 = nodes[0].distribution.iter().sum();
    let wrong: f64 = missed
        .iter()
        .zip(&p.weights)
        .map(|(&k, w)| k as f64 * w)
        .sum();
    Ok(TrainedTree {
        nodes,
        classes,
        n_features,
        max_leaf_nodes,
        max_depth,
        training_error: wrong / total,
    })
}

/// One `train(mln)` call made by [`hyperparam_search`].
#[derive(Debug, Clone, PartialEq)]
pub struct SearchStep {
    pub max_leaf_nodes: usize,
    pub error: f64,
    pub leaves: usize,
    pub depth: usize,
    pub accepted: bool,
}

/// Starting from two leaves, tries up to five larger leaf caps and moves to
/// the first that strictly lowers the training error; stops when none does.
/// Depth is capped at one less than the leaf cap.
pub fn hyperparam_search(
    rows: &[Vec<u8>],
    labels: &[ClassId],
) -> Result<(TrainedTree, Vec<SearchStep>)> {
    let train = |mln: usize| grow_tree(rows, labels, mln, mln - 1);
    let step = |t: &TrainedTree, accepted| SearchStep {
        max_leaf_nodes: t.max_leaf_nodes,
        error: t.training_error,
        leaves: t.leaf_count(),
        depth: t.depth(),
        accepted,
    };
    let mut mln = 2;
    let mut err = f64::INFINITY;
    let mut clf = train(mln)?;
    let mut cur = clf.training_error;
    let mut trace = vec![step(&clf, true)];
    while cur < err {
        err = cur;
        for i in 1..=SEARCH_PROBES {
            let next = train(mln + i)?;
            cur = next.training_error;
            let better = cur < err;
            trace.push(step(&next, better));
            if better {
                clf = next;
                mln += i;
                break;
            }
        }
    }
    Ok((clf, trace))
}

/// Tab-separated search trace.
pub fn trace_tsv(trace: &[SearchStep]) -> String {
    let mut s = String::from("# max_leaf_nodes\terror\tleaves\tdepth\taccepted\n");
    for t in trace {
        let _ = writeln!(
            s,
            "{}\t{}\t{}\t{}\t{}",
            t.max_leaf_nodes,
            t.error,
            t.leaves,
            t.depth,
            u8::from(t.accepted)
        );
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ids(v: &[u32]) -> Vec<ClassId> {
        v.iter().map(|&c| ClassId(c)).collect()
    }

    #[test]
    fn weights() {
        let mut l = vec![ClassId(1); 90];
        l.extend(vec![ClassId(2); 10]);
        let (c, w) = balanced_weights(&l);
        assert_eq!(c, ids(&[1, 2]));
        assert!((w[0] - 100.0 / 180.0).abs() < 1e-12 && w[1] == 5.0);
        assert_eq!(balanced_weights(&ids(&[3, 3])).1, vec![1.0]);
        assert_eq!(balanced_weights(&ids(&[1, 2, 1, 2])).1, vec![1.0, 1.0]);
    }

    #[test]
    fn gini_values() {
        assert_eq!(gini(&[4.0, 0.0]).unwrap(), 0.0);
        assert_eq!(gini(&[1.0, 1.0]).unwrap(), 0.5);
        assert_eq!(gini(&[3.0, 1.0]).unwrap(), 0.375);
        assert!(matches!(gini(&[0.0, 0.0]), Err(Error::ZeroMass)));
    }

    #[test]
    fn split_selection() {
        let rows = vec![vec![0, 1], vec![0, 0], vec![0, 1], vec![0, 0]];
        assert_eq!(best_split(&rows, &ids(&[1, 2, 1, 2])), Some((1, 0.5)));
        assert_eq!(best_split(&[vec![1, 0], vec![1, 0]], &ids(&[1, 2])), None);
        // xor: neither feature alone helps, so the first is taken
        let rows = vec![vec![0, 0], vec![0, 1], vec![1, 0], vec![1, 1]];
        assert_eq!(best_split(&rows, &ids(&[1, 2, 2, 1])), Some((0, 0.0)));
        let t = grow_tree(&rows, &ids(&[1, 2, 2, 1]), 4, 3).unwrap();
        assert_eq!(t.training_error, 0.0);
        // equal decrease on both: first column wins
        let rows = vec![vec![0, 0], vec![0, 0], vec![1, 1], vec![1, 1]];
        assert_eq!(best_split(&rows, &ids(&[1, 1, 2, 2])).map(|s| s.0), Some(0));
    }

    #[test]
    fn two_leaves_means_one_split() {
        let rows: Vec<Vec<u8>> = (0..8u8)
            .map(|i| vec![i & 1, (i >> 1) & 1, (i >> 2) & 1])
            .collect();
        let labels: Vec<ClassId> = rows
            .iter()
            .map(|r| ClassId(1 + u32::from(r[2]) + u32::from(r[0] & r[1])))
            .collect();
        let t = grow_tree(&rows, &labels, 2, 1).unwrap();
        assert_eq!(t.leaf_count(), 2);
        assert!(!t.nodes[0].is_leaf());
        let full = grow_tree(&rows, &labels, 10, 9).unwrap();
        assert_eq!(full.training_error, 0.0);
        for (r, l) in rows.iter().zip(&labels) {
            assert_eq!(full.predict(r).unwrap(), *l);
        }
    }

    #[test]
    fn search_on_pure_data_stops_at_two() {
        let rows = vec![vec![0, 1], vec![1, 0], vec![1, 1]];
        let (t, trace) = hyperparam_search(&rows, &ids(&[2, 2, 2])).unwrap();
        assert_eq!(t.max_leaf_nodes, 2);
        assert_eq!(t.training_error, 0.0);
        assert_eq!(t.leaf_count(), 1);
        assert_eq!(trace.len(), 1 + SEARCH_PROBES);
        assert_eq!(t.predict(&[0, 0]).unwrap(), ClassId(2));
    }

    #[test]
    fn search_stops_at_three_leaves_when_enough() {
        // classes decided by x0, then x1 within x0 = 1
        let rows: Vec<Vec<u8>> = (0..16u8)
            .map(|i| vec![i & 1, (i >> 1) & 1, (i >> 2) & 1])
            .collect();
        let labels: Vec<ClassId> = rows
            .iter()
            .map(|r| ClassId(if r[0] == 0 { 1 } else { 2 + u32::from(r[1]) }))
            .collect();
        let (t, _) = hyperparam_search(&rows, &labels).unwrap();
        assert_eq!(t.max_leaf_nodes, 3);
        assert_eq!(t.training_error, 0.0);
    }

    #[test]
    fn width_is_checked() {
        let t = grow_tree(&[vec![0], vec![1]], &ids(&[1, 2]), 2, 1).unwrap();
        assert!(matches!(
            t.predict(&[0, 1]),
            Err(Error::FeatureWidth {
                expected: 1,
                got: 2
            })
        ));
        assert!(matches!(grow_tree(&[], &[], 2, 1), Err(Error::EmptyMatrix)));
    }

    #[test]
    fn leaf_ties_prefer_faster_class() {
        let t = grow_tree(&[vec![0], vec![0]], &ids(&[2, 1]), 2, 1).unwrap();
        assert_eq!(t.predict(&[0]).unwrap(), ClassId(1));
        assert_eq!(t.training_error, 0.5);
    }
}
