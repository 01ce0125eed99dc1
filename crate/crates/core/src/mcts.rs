//! Monte-Carlo tree search over schedule prefixes.
//!
//! Each tree node is a prefix; its children append one more DAG vertex. The
//! search does not look for the single fastest schedule. Selection favors
//! subtrees whose observed times span a large part of their parent's range,
//! so the measurements it collects concentrate where decisions matter.

use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dag::ProgramDag;
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::exec::{measure, Executor, Measurement, MeasurementProtocol};
use crate::schedule::{expand_children, ExecutedOp, Prefix, Schedule};

pub const EXPLORATION: f64 = std::f64::consts::SQRT_2;

#[derive(Debug, Clone)]
pub struct SearchNode {
    pub prefix: Prefix,
    pub parent: Option<usize>,
    pub children: Vec<usize>,
    /// Children have been materialized.
    pub expanded: bool,
    /// Rollouts that passed through this node.
    pub n: u64,
    pub t_min: f64,
    pub t_max: f64,
    pub fully_explored: bool,
}

impl SearchNode {
    fn new(prefix: Prefix, parent: Option<usize>) -> Self {
        SearchNode {
            prefix,
            parent,
            children: Vec::new(),
            expanded: false,
            n: 0,
            t_min: f64::INFINITY,
            t_max: f64::NEG_INFINITY,
            fully_explored: false,
        }
    }

    /// The op this node appended, `None` at the root.
    pub fn op(&self) -> Option<&ExecutedOp> {
        if self.prefix.is_empty() {
            None
        } else {
            self.prefix.ops().last()
        }
    }

    pub fn is_terminal(&self) -> bool {
        self.prefix.is_complete()
    }
}

/// `c * sqrt(ln N / n)`, or negative infinity for a fully explored child.
pub fn explore_value(parent_n: u64, child_n: u64, child_fully_explored: bool) -> f64 {
    if child_fully_explored {
        return f64::NEG_INFINITY;
    }
    EXPLORATION * ((parent_n as f64).ln() / child_n as f64).sqrt()
}

/// Fraction of the parent's observed time range the child covers; 1 when
/// either side has fewer than two rollouts or the parent range is empty.
pub fn exploit_value(child: &SearchNode, parent: &SearchNode) -> f64 {
    let denom = parent.t_max - parent.t_min;
    if child.n >= 2 && parent.n >= 2 && denom > 0.0 {
        (child.t_max - child.t_min) / denom
    } else {
        1.0
    }
}

/// Returned by [`SearchTree::select`] once every schedule has been benchmarked.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SearchComplete;

#[derive(Debug, Clone)]
pub struct SearchTree {
    nodes: Vec<SearchNode>,
}

impl SearchTree {
    pub fn new(dag: &ProgramDag) -> Self {
        SearchTree {
            nodes: vec![SearchNode::new(Prefix::empty(dag), None)],
        }
    }

    pub const ROOT: usize = 0;

    pub fn root(&self) -> &SearchNode {
        &self.nodes[Self::ROOT]
    }

    pub fn node(&self, id: usize) -> &SearchNode {
        &self.nodes[id]
    }

    pub fn nodes(&self) -> &[SearchNode] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn materialize(&mut self, id: usize, dag: &ProgramDag) {
        if self.nodes[id].expanded {
            return;
        }
        let kids = expand_children(&self.nodes[id].prefix, dag);
        let first = self.nodes.len();
        self.nodes
            .extend(kids.into_iter().map(|p| SearchNode::new(p, Some(id))));
        let last = self.nodes.len();
        let node = &mut self.nodes[id];
        node.children = (first..last).collect();
        node.expanded = true;
    }

    /// Descends by maximal explore + exploit value, stopping at the first
    /// node that has an unvisited child or no materialized children.
    pub fn select(&self) -> std::result::Result<Vec<usize>, SearchComplete> {
        if self.root().fully_explored {
            return Err(SearchComplete);
        }
        let mut path = vec![Self::ROOT];
        let mut cur = Self::ROOT;
        loop {
            let node = &self.nodes[cur];
            if node.children.is_empty() || node.children.iter().any(|&c| self.nodes[c].n == 0) {
                return Ok(path);
            }
            let mut best = None;
            let mut best_val = f64::NEG_INFINITY;
            for &c in &node.children {
                let child = &self.nodes[c];
                let val = explore_value(node.n, child.n, child.fully_explored)
                    + exploit_value(child, node);
                if best.is_none() || val > best_val {
                    best = Some(c);
                    best_val = val;
                }
            }
            let next = best.expect("non-empty children");
            if self.nodes[next].fully_explored {
                // every child is exhausted; backpropagation marks this node
                return Ok(path);
            }
            path.push(next);
            cur = next;
        }
    }

    /// Materializes `node`'s children if needed and returns a random
    /// zero-rollout child. Returns `node` itself if it is terminal.
    pub fn expand(&mut self, node: usize, dag: &ProgramDag, rng: &mut ChaCha8Rng) -> usize {
        self.materialize(node, dag);
        let fresh: Vec<usize> = self.nodes[node]
            .children
            .iter()
            .copied()
            .filter(|&c| self.nodes[c].n == 0)
            .collect();
        fresh.choose(rng).copied().unwrap_or(node)
    }

    /// Completes `node`'s prefix with uniformly random legal choices, adding
    /// every node on the way to the tree, and benchmarks the result. Returns
    /// the path below `node` (excluding it). Counters are not touched.
    pub fn rollout(
        &mut self,
        node: usize,
        dag: &ProgramDag,
        executor: &mut dyn Executor,
        protocol: &MeasurementProtocol,
        rng: &mut ChaCha8Rng,
    ) -> Result<(Vec<usize>, Schedule, Measurement)> {
        let mut tail = Vec::new();
        let mut cur = node;
        while !self.nodes[cur].is_terminal() {
            self.materialize(cur, dag);
            cur = *self.nodes[cur]
                .children
                .choose(rng)
                .ok_or_else(|| Error::Internal("incomplete prefix without children".into()))?;
            tail.push(cur);
        }
        let schedule = self.nodes[cur].prefix.to_schedule()?;
        let m = measure(&schedule, executor, protocol)?;
        Ok((tail, schedule, m))
    }

    /// Updates counts and time ranges along `path` (root first), then marks
    /// nodes whose whole subtree has been benchmarked.
    pub fn backpropagate(&mut self, path: &[usize], time: f64) {
        for &id in path {
            let n = &mut self.nodes[id];
            n.n += 1;
            n.t_min = n.t_min.min(time);
            n.t_max = n.t_max.max(time);
        }
        for &id in path.iter().rev() {
            let node = &self.nodes[id];
            let done = if node.is_terminal() {
                node.n >= 1
            } else {
                node.expanded && node.children.iter().all(|&c| self.nodes[c].fully_explored)
            };
            if done {
                self.nodes[id].fully_explored = true;
            } else {
                break;
            }
        }
    }

    pub fn summary(&self) -> TreeSummary {
        let visited = self.nodes.iter().filter(|n| n.n > 0).count();
        let explored = self.nodes.iter().filter(|n| n.fully_explored).count();
        TreeSummary {
            nodes: self.nodes.len(),
            visited,
            fully_explored: explored,
            root_fully_explored: self.root().fully_explored,
            rollouts: self.root().n,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TreeSummary {
    pub nodes: usize,
    pub visited: usize,
    pub fully_explored: usize,
    pub root_fully_explored: bool,
    pub rollouts: u64,
}

impl TreeSummary {
    pub fn explored_fraction(&self) -> f64 {
        self.fully_explored as f64 / self.nodes.max(1) as f64
    }
}

/// Runs `iterations` select/expand/rollout/backpropagate cycles, or fewer
/// if the whole space gets benchmarked first. A failed rollout is retried
/// once before the error is returned.
pub fn run_search(
    dag: &ProgramDag,
    executor: &mut dyn Executor,
    protocol: &MeasurementProtocol,
    iterations: usize,
    seed: u64,
) -> Result<(Dataset, SearchTree)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut tree = SearchTree::new(dag);
    let mut dataset = Dataset::new();
    for _ in 0..iterations {
        let Ok(mut path) = tree.select() else { break };
        let leaf = *path.last().expect("path starts at root");
        let child = tree.expand(leaf, dag, &mut rng);
        if child != leaf {
            path.push(child);
        }
        let (tail, schedule, m) = match tree.rollout(child, dag, executor, protocol, &mut rng) {
            Ok(r) => r,
            Err(_) => tree.rollout(child, dag, executor, protocol, &mut rng)?,
        };
        path.extend(tail);
        let t = m.time;
        dataset.add(schedule, m);
        tree.backpropagate(&path, t);
    }
    Ok((dataset, tree))
}
