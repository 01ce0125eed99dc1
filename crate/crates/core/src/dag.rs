//! Program DAGs.
//!
//! A [`ProgramDag`] lists the operations of an asynchronous program and the
//! dependencies between them. It defines the design space: every topological
//! order of its vertices, combined with every assignment of GPU vertices to
//! streams, is one candidate implementation.

use std::collections::{HashMap, VecDeque};
use std::fmt;
use std::path::Path;

use serde::Deserialize;

use crate::error::{Error, Result};

pub const START: &str = "start";
pub const END: &str = "end";

/// Prefixes reserved for automatically inserted synchronization operations.
pub const RESERVED_PREFIXES: [&str; 3] = ["CER-", "CES-", "CSWE-"];

const SPMV_TOML: &str = include_str!("../data/spmv.dag.toml");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum OpKind {
    Cpu,
    Gpu,
    PostSend,
    PostRecv,
    WaitSend,
    WaitRecv,
}

impl OpKind {
    pub fn is_gpu(self) -> bool {
        self == OpKind::Gpu
    }

    /// Everything except `Gpu` runs on the host timeline.
    pub fn is_host(self) -> bool {
        !self.is_gpu()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            OpKind::Cpu => "cpu",
            OpKind::Gpu => "gpu",
            OpKind::PostSend => "post_send",
            OpKind::PostRecv => "post_recv",
            OpKind::WaitSend => "wait_send",
            OpKind::WaitRecv => "wait_recv",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "cpu" => OpKind::Cpu,
            "gpu" => OpKind::Gpu,
            "post_send" => OpKind::PostSend,
            "post_recv" => OpKind::PostRecv,
            "wait_send" => OpKind::WaitSend,
            "wait_recv" => OpKind::WaitRecv,
            _ => return None,
        })
    }

    /// The post kind a wait of this kind completes.
    fn posted_by(self) -> Option<OpKind> {
        match self {
            OpKind::WaitSend => Some(OpKind::PostSend),
            OpKind::WaitRecv => Some(OpKind::PostRecv),
            _ => None,
        }
    }
}

impl fmt::Display for OpKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Vertex {
    pub name: String,
    pub kind: OpKind,
    pub cost_key: String,
    /// For wait vertices: name of the post this wait completes.
    pub pairs_with: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    ZeroStreams,
    MissingStart,
    MissingEnd,
    NotCpu(String),
    BadName(String),
    Cycle(Vec<String>),
    UnreachableFromStart(String),
    NoPathToEnd(String),
    UnmatchedWait(String),
    WaitNotDescendant { wait: String, post: String },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::ZeroStreams => write!(f, "num_streams must be positive"),
            Violation::MissingStart => write!(f, "no `{START}` vertex"),
            Violation::MissingEnd => write!(f, "no `{END}` vertex"),
            Violation::NotCpu(v) => write!(f, "`{v}` must be a cpu vertex"),
            Violation::BadName(v) => write!(f, "`{v}` is not a usable vertex name"),
            Violation::Cycle(vs) => write!(f, "cycle among or upstream of {}", vs.join(", ")),
            Violation::UnreachableFromStart(v) => {
                write!(f, "`{v}` is not reachable from `{START}`")
            }
            Violation::NoPathToEnd(v) => write!(f, "`{v}` has no path to `{END}`"),
            Violation::UnmatchedWait(v) => write!(f, "`{v}` has no unique matching post"),
            Violation::WaitNotDescendant { wait, post } => {
                write!(f, "`{wait}` is not a descendant of its post `{post}`")
            }
        }
    }
}

/// Invariant violations found by [`ProgramDag::validate`]; empty iff valid.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn has(&self, pred: impl Fn(&Violation) -> bool) -> bool {
        self.violations.iter().any(pred)
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for v in &self.violations {
            writeln!(f, "  - {v}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct ProgramDag {
    vertices: Vec<Vertex>,
    edges: Vec<(usize, usize)>,
    preds: Vec<Vec<usize>>,
    succs: Vec<Vec<usize>>,
    partner: Vec<Option<usize>>,
    index: HashMap<String, usize>,
    num_streams: u32,
}

impl ProgramDag {
    pub fn builder() -> DagBuilder {
        DagBuilder::default()
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn num_streams(&self) -> u32 {
        self.num_streams
    }

    /// Same graph, different stream count.
    pub fn with_streams(mut self, num_streams: u32) -> Self {
        self.num_streams = num_streams;
        self
    }

    pub fn vertices(&self) -> &[Vertex] {
        &self.vertices
    }

    pub fn vertex(&self, v: usize) -> &Vertex {
        &self.vertices[v]
    }

    pub fn name(&self, v: usize) -> &str {
        &self.vertices[v].name
    }

    pub fn kind(&self, v: usize) -> OpKind {
        self.vertices[v].kind
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    /// Predecessors of `v` in edge declaration order.
    pub fn preds(&self, v: usize) -> &[usize] {
        &self.preds[v]
    }

    pub fn succs(&self, v: usize) -> &[usize] {
        &self.succs[v]
    }

    /// The post vertex a wait vertex completes.
    pub fn partner(&self, v: usize) -> Option<usize> {
        self.partner[v]
    }

    pub fn gpu_vertices(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.len()).filter(|&v| self.kind(v).is_gpu())
    }

    /// Kahn's algorithm; `None` if the graph has a cycle.
    pub fn topological_order(&self) -> Option<Vec<usize>> {
        let order = self.kahn();
        (order.len() == self.len()).then_some(order)
    }

    /// Vertices Kahn's algorithm can emit; on a cycle, this is a strict subset.
    fn kahn(&self) -> Vec<usize> {
        let mut indeg: Vec<usize> = self.preds.iter().map(Vec::len).collect();
        let mut queue: VecDeque<usize> = (0..self.len()).filter(|&v| indeg[v] == 0).collect();
        let mut order = Vec::with_capacity(self.len());
        while let Some(u) = queue.pop_front() {
            order.push(u);
            for &w in &self.succs[u] {
                indeg[w] -= 1;
                if indeg[w] == 0 {
                    queue.push_back(w);
                }
            }
        }
        order
    }

    fn reachable(&self, from: usize, forward: bool) -> Vec<bool> {
        let mut seen = vec![false; self.len()];
        let mut stack = vec![from];
        seen[from] = true;
        while let Some(u) = stack.pop() {
            let next = if forward {
                &self.succs[u]
            } else {
                &self.preds[u]
            };
            for &w in next {
                if !seen[w] {
                    seen[w] = true;
                    stack.push(w);
                }
            }
        }
        seen
    }

    pub fn validate(&self) -> ValidationReport {
        let mut out = Vec::new();
        if self.num_streams == 0 {
            out.push(Violation::ZeroStreams);
        }
        for v in &self.vertices {
            let bad = v.name.is_empty()
                || v.name
                    .chars()
                    .any(|c| c.is_whitespace() || matches!(c, ',' | ';' | '@' | '\t'))
                || RESERVED_PREFIXES.iter().any(|p| v.name.starts_with(p));
            if bad {
                out.push(Violation::BadName(v.name.clone()));
            }
        }

        let emitted = self.kahn();
        if emitted.len() < self.len() {
            // left over: on or behind a cycle
            let mut done = vec![false; self.len()];
            emitted.iter().for_each(|&v| done[v] = true);
            let stuck = (0..self.len())
                .filter(|&v| !done[v])
                .map(|v| self.name(v).to_string());
            out.push(Violation::Cycle(stuck.collect()));
        }

        let start = self.index_of(START);
        let end = self.index_of(END);
        match start {
            None => out.push(Violation::MissingStart),
            Some(s) => {
                if self.kind(s) != OpKind::Cpu {
                    out.push(Violation::NotCpu(START.into()));
                }
                let seen = self.reachable(s, true);
                for v in (0..self.len()).filter(|&v| !seen[v]) {
                    out.push(Violation::UnreachableFromStart(self.name(v).into()));
                }
            }
        }
        match end {
            None => out.push(Violation::MissingEnd),
            Some(e) => {
                if self.kind(e) != OpKind::Cpu {
                    out.push(Violation::NotCpu(END.into()));
                }
                let seen = self.reachable(e, false);
                for v in (0..self.len()).filter(|&v| !seen[v]) {
                    out.push(Violation::NoPathToEnd(self.name(v).into()));
                }
            }
        }

        for v in 0..self.len() {
            if self.kind(v).posted_by().is_none() {
                continue;
            }
            match self.partner[v] {
                None => out.push(Violation::UnmatchedWait(self.name(v).into())),
                Some(p) => {
                    if !self.reachable(p, true)[v] || p == v {
                        out.push(Violation::WaitNotDescendant {
                            wait: self.name(v).into(),
                            post: self.name(p).into(),
                        });
                    }
                }
            }
        }
        ValidationReport { violations: out }
    }

    /// Consumes the DAG, returning it only if [`validate`](Self::validate) is clean.
    pub fn validated(self) -> Result<Self> {
        let report = self.validate();
        if report.is_valid() {
            Ok(self)
        } else {
            Err(Error::InvalidDag(report))
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let file: DagFile = toml::from_str(text).map_err(|e| Error::MalformedDag(e.to_string()))?;
        let mut b = ProgramDag::builder().streams(file.num_streams);
        for v in file.vertices {
            let kind = OpKind::parse(&v.kind).ok_or_else(|| {
                Error::MalformedDag(format!("unknown kind `{}` for `{}`", v.kind, v.name))
            })?;
            b = b.vertex_full(Vertex {
                cost_key: v.cost.unwrap_or_else(|| v.name.clone()),
                name: v.name,
                kind,
                pairs_with: v.pairs_with,
            });
        }
        for (u, v) in file.edges {
            b = b.edge(&u, &v);
        }
        b.build()
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        let mut s = format!("num_streams = {}\nedges = [\n", self.num_streams);
        for &(u, v) in &self.edges {
            s.push_str(&format!(
                "  [\"{}\", \"{}\"],\n",
                self.name(u),
                self.name(v)
            ));
        }
        s.push_str("]\n");
        for v in &self.vertices {
            s.push_str(&format!(
                "\n[[vertex]]\nname = \"{}\"\nkind = \"{}\"\ncost = \"{}\"\n",
                v.name, v.kind, v.cost_key
            ));
            if let Some(p) = &v.pairs_with {
                s.push_str(&format!("pairs_with = \"{p}\"\n"));
            }
        }
        s
    }
}

/// The distributed sparse matrix-vector multiply shipped with the crate:
/// local and remote products overlapped with a halo exchange.
pub fn spmv_example() -> ProgramDag {
    ProgramDag::from_toml_str(SPMV_TOML).expect("shipped DAG parses")
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct DagFile {
    num_streams: u32,
    #[serde(default)]
    edges: Vec<(String, String)>,
    #[serde(rename = "vertex", default)]
    vertices: Vec<VertexEntry>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct VertexEntry {
    name: String,
    kind: String,
    cost: Option<String>,
    pairs_with: Option<String>,
}

#[derive(Debug, Default)]
pub struct DagBuilder {
    vertices: Vec<Vertex>,
    edges: Vec<(String, String)>,
    num_streams: Option<u32>,
}

impl DagBuilder {
    pub fn streams(mut self, n: u32) -> Self {
        self.num_streams = Some(n);
        self
    }

    pub fn vertex(self, name: &str, kind: OpKind) -> Self {
        self.vertex_full(Vertex {
            name: name.into(),
            kind,
            cost_key: name.into(),
            pairs_with: None,
        })
    }

    pub fn cpu(self, name: &str) -> Self {
        self.vertex(name, OpKind::Cpu)
    }

    pub fn gpu(self, name: &str) -> Self {
        self.vertex(name, OpKind::Gpu)
    }

    pub fn vertex_full(mut self, v: Vertex) -> Self {
        self.vertices.push(v);
        self
    }

    pub fn edge(mut self, from: &str, to: &str) -> Self {
        self.edges.push((from.into(), to.into()));
        self
    }

    /// Resolves names; fails only on structurally unusable input (duplicate
    /// vertices, unknown edge endpoints). Invariants are checked by `validate`.
    pub fn build(self) -> Result<ProgramDag> {
        let mut index = HashMap::new();
        for (i, v) in self.vertices.iter().enumerate() {
            if index.insert(v.name.clone(), i).is_some() {
                return Err(Error::MalformedDag(format!(
                    "duplicate vertex `{}`",
                    v.name
                )));
            }
        }
        let n = self.vertices.len();
        let lookup = |name: &str| {
            index.get(name).copied().ok_or_else(|| {
                Error::MalformedDag(format!("edge references unknown vertex `{name}`"))
            })
        };
        let mut edges = Vec::with_capacity(self.edges.len());
        let mut preds = vec![Vec::new(); n];
        let mut succs = vec![Vec::new(); n];
        for (a, b) in &self.edges {
            let (u, v) = (lookup(a)?, lookup(b)?);
            if edges.contains(&(u, v)) {
                continue;
            }
            edges.push((u, v));
            preds[v].push(u);
            succs[u].push(v);
        }

        let mut partner = vec![None; n];
        for (i, v) in self.vertices.iter().enumerate() {
            let Some(post_kind) = v.kind.posted_by() else {
                continue;
            };
            partner[i] = match &v.pairs_with {
                Some(p) => index
                    .get(p)
                    .copied()
                    .filter(|&j| self.vertices[j].kind == post_kind),
                None => {
                    let mut posts = self
                        .vertices
                        .iter()
                        .enumerate()
                        .filter(|(_, w)| w.kind == post_kind);
                    match (posts.next(), posts.next()) {
                        (Some((j, _)), None) => Some(j),
                        _ => None,
                    }
                }
            };
        }

        Ok(ProgramDag {
            vertices: self.vertices,
            edges,
            preds,
            succs,
            partner,
            index,
            num_streams: self.num_streams.unwrap_or(1),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chain() -> ProgramDag {
        ProgramDag::builder()
            .cpu("start")
            .cpu("A")
            .cpu("end")
            .edge("start", "A")
            .edge("A", "end")
            .build()
            .unwrap()
    }

    #[test]
    fn minimal_chain_is_valid() {
        assert!(chain().validate().is_valid());
    }

    #[test]
    fn two_cycle_is_reported() {
        let dag = ProgramDag::builder()
            .cpu("start")
            .cpu("A")
            .edge("start", "A")
            .edge("A", "start")
            .build()
            .unwrap();
        let report = dag.validate();
        assert!(report.has(|v| matches!(v, Violation::Cycle(_))), "{report}");
    }

    #[test]
    fn dangling_vertex_has_no_path_to_end() {
        let dag = ProgramDag::builder()
            .cpu("start")
            .cpu("A")
            .cpu("B")
            .cpu("end")
            .edge("start", "A")
            .edge("A", "end")
            .edge("start", "B")
            .build()
            .unwrap();
        let report = dag.validate();
        assert_eq!(report.violations, vec![Violation::NoPathToEnd("B".into())]);
    }

    #[test]
    fn wait_must_descend_from_its_post() {
        let dag = ProgramDag::builder()
            .cpu("start")
            .vertex("Ps", OpKind::PostSend)
            .vertex("Ws", OpKind::WaitSend)
            .cpu("end")
            .edge("start", "Ps")
            .edge("start", "Ws")
            .edge("Ps", "end")
            .edge("Ws", "end")
            .build()
            .unwrap();
        assert!(dag
            .validate()
            .has(|v| matches!(v, Violation::WaitNotDescendant { .. })));
    }

    #[test]
    fn reserved_names_rejected() {
        let dag = ProgramDag::builder()
            .cpu("start")
            .cpu("CES-b4-x")
            .cpu("end")
            .edge("start", "CES-b4-x")
            .edge("CES-b4-x", "end")
            .build()
            .unwrap();
        assert!(dag.validate().has(|v| matches!(v, Violation::BadName(_))));
    }

    #[test]
    fn unknown_edge_endpoint_is_malformed() {
        let err = ProgramDag::builder()
            .cpu("start")
            .edge("start", "nope")
            .build()
            .unwrap_err();
        assert!(matches!(err, Error::MalformedDag(_)));
    }

    #[test]
    fn shipped_spmv_dag() {
        let dag = spmv_example();
        assert!(dag.validate().is_valid(), "{}", dag.validate());
        assert_eq!(dag.len(), 10);
        assert_eq!(dag.num_streams(), 2);
        assert_eq!(dag.gpu_vertices().count(), 4);
        let ws = dag.index_of("WaitSend").unwrap();
        assert_eq!(dag.partner(ws), dag.index_of("PostSend"));
    }

    #[test]
    fn toml_round_trip() {
        let dag = spmv_example();
        let again = ProgramDag::from_toml_str(&dag.to_toml_string()).unwrap();
        assert_eq!(again.vertices(), dag.vertices());
        assert_eq!(again.edges(), dag.edges());
    }
}
