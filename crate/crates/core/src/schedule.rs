//! Concrete implementations of a [`ProgramDag`].
//!
//! A [`Prefix`] is built one DAG vertex at a time. Each GPU vertex is bound to
//! a stream when it is appended, and the synchronization a dependency needs is
//! derived from the prefix so far:
//!
//! | producer      | consumer      | inserted                                |
//! |---------------|---------------|-----------------------------------------|
//! | host          | anything      | nothing                                 |
//! | gpu on `i`    | host          | event record on `i`, host event sync    |
//! | gpu on `i`    | gpu on `i`    | nothing                                 |
//! | gpu on `i`    | gpu on `j`    | event record on `i`, stream `j` waits   |
//!
//! A dependency the prefix already orders (through an earlier sync or stream
//! order) inserts nothing. A complete prefix becomes a [`Schedule`].

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use crate::dag::{OpKind, ProgramDag};
use crate::error::{Error, Result};

pub const DEFAULT_ENUMERATION_CAP: usize = 100_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ExecKind {
    /// A non-GPU DAG vertex, run on the host timeline.
    Host(OpKind),
    Gpu {
        stream: u32,
    },
    EventRecord {
        stream: u32,
        event: u32,
    },
    EventSync {
        event: u32,
    },
    StreamWaitEvent {
        stream: u32,
        event: u32,
    },
}

impl ExecKind {
    fn token(&self) -> &'static str {
        match self {
            ExecKind::Host(k) => k.as_str(),
            ExecKind::Gpu { .. } => "gpu",
            ExecKind::EventRecord { .. } => "event_record",
            ExecKind::EventSync { .. } => "event_sync",
            ExecKind::StreamWaitEvent { .. } => "stream_wait_event",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ExecutedOp {
    pub name: String,
    pub kind: ExecKind,
}

impl ExecutedOp {
    pub fn host(name: impl Into<String>, kind: OpKind) -> Self {
        debug_assert!(kind.is_host());
        ExecutedOp {
            name: name.into(),
            kind: ExecKind::Host(kind),
        }
    }

    pub fn gpu(name: impl Into<String>, stream: u32) -> Self {
        ExecutedOp {
            name: name.into(),
            kind: ExecKind::Gpu { stream },
        }
    }

    /// The op for DAG vertex `v`, bound to `stream` if it is a GPU vertex.
    pub fn for_vertex(dag: &ProgramDag, v: usize, stream: Option<u32>) -> Result<Self> {
        let name = dag.name(v);
        match (dag.kind(v), stream) {
            (OpKind::Gpu, Some(s)) => Ok(Self::gpu(name, s)),
            (OpKind::Gpu, None) => Err(bad_binding(name, "gpu vertex needs a stream")),
            (k, None) => Ok(Self::host(name, k)),
            (_, Some(_)) => Err(bad_binding(name, "only gpu vertices bind to streams")),
        }
    }

    pub fn is_sync(&self) -> bool {
        matches!(
            self.kind,
            ExecKind::EventRecord { .. }
                | ExecKind::EventSync { .. }
                | ExecKind::StreamWaitEvent { .. }
        )
    }

    pub fn is_vertex(&self) -> bool {
        !self.is_sync()
    }

    pub fn stream(&self) -> Option<u32> {
        match self.kind {
            ExecKind::Gpu { stream }
            | ExecKind::EventRecord { stream, .. }
            | ExecKind::StreamWaitEvent { stream, .. } => Some(stream),
            _ => None,
        }
    }

    pub fn is_bound_gpu(&self) -> bool {
        matches!(self.kind, ExecKind::Gpu { .. })
    }

    fn relabeled(&self, map: &[u32]) -> Self {
        let kind = match self.kind {
            ExecKind::Gpu { stream } => ExecKind::Gpu {
                stream: map[stream as usize],
            },
            ExecKind::EventRecord { stream, event } => ExecKind::EventRecord {
                stream: map[stream as usize],
                event,
            },
            ExecKind::StreamWaitEvent { stream, event } => ExecKind::StreamWaitEvent {
                stream: map[stream as usize],
                event,
            },
            k => k,
        };
        ExecutedOp {
            name: self.name.clone(),
            kind,
        }
    }

    fn key_token(&self) -> String {
        match self.stream() {
            Some(s) => format!("{}@{}", self.name, s),
            None => self.name.clone(),
        }
    }
}

fn bad_binding(name: &str, reason: &str) -> Error {
    Error::BadBinding {
        vertex: name.into(),
        reason: reason.into(),
    }
}

/// `<name> <kind> [stream=<i>] [event=<id>]`
impl fmt::Display for ExecutedOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}", self.name, self.kind.token())?;
        match self.kind {
            ExecKind::Gpu { stream } => write!(f, " stream={stream}"),
            ExecKind::EventRecord { stream, event }
            | ExecKind::StreamWaitEvent { stream, event } => {
                write!(f, " stream={stream} event={event}")
            }
            ExecKind::EventSync { event } => write!(f, " event={event}"),
            ExecKind::Host(_) => Ok(()),
        }
    }
}

impl FromStr for ExecutedOp {
    type Err = String;

    fn from_str(line: &str) -> std::result::Result<Self, String> {
        let mut toks = line.split_whitespace();
        let name = toks.next().ok_or("empty op")?.to_string();
        let kind_tok = toks
            .next()
            .ok_or_else(|| format!("`{name}`: missing kind"))?;
        let (mut stream, mut event) = (None, None);
        for t in toks {
            let (k, v) = t
                .split_once('=')
                .ok_or_else(|| format!("bad attribute `{t}`"))?;
            let v: u32 = v.parse().map_err(|_| format!("bad number in `{t}`"))?;
            match k {
                "stream" => stream = Some(v),
                "event" => event = Some(v),
                _ => return Err(format!("unknown attribute `{k}`")),
            }
        }
        let need =
            |x: Option<u32>, what: &str| x.ok_or_else(|| format!("`{name}`: missing {what}"));
        let kind = match kind_tok {
            "gpu" => ExecKind::Gpu {
                stream: need(stream, "stream")?,
            },
            "event_record" => ExecKind::EventRecord {
                stream: need(stream, "stream")?,
                event: need(event, "event")?,
            },
            "event_sync" => ExecKind::EventSync {
                event: need(event, "event")?,
            },
            "stream_wait_event" => ExecKind::StreamWaitEvent {
                stream: need(stream, "stream")?,
                event: need(event, "event")?,
            },
            other => ExecKind::Host(
                OpKind::parse(other)
                    .filter(|k| k.is_host())
                    .ok_or_else(|| format!("unknown kind `{other}`"))?,
            ),
        };
        Ok(ExecutedOp { name, kind })
    }
}

/// Relabels streams in order of first use; unused labels follow in ascending order.
fn first_use_map<'a>(ops: impl IntoIterator<Item = &'a ExecutedOp>, num_streams: u32) -> Vec<u32> {
    let mut map = vec![u32::MAX; num_streams as usize];
    let mut next = 0;
    for s in ops.into_iter().filter_map(ExecutedOp::stream) {
        let s = s as usize;
        if s >= map.len() {
            map.resize(s + 1, u32::MAX);
        }
        if map[s] == u32::MAX {
            map[s] = next;
            next += 1;
        }
    }
    for m in map.iter_mut().filter(|m| **m == u32::MAX) {
        *m = next;
        next += 1;
    }
    map
}

fn canonical_key<'a>(ops: impl IntoIterator<Item = &'a ExecutedOp> + Clone) -> String {
    let map = first_use_map(ops.clone(), 0);
    ops.into_iter()
        .map(|op| op.relabeled(&map).key_token())
        .collect::<Vec<_>>()
        .join(",")
}

/// A complete implementation: every DAG vertex plus its derived syncs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Schedule {
    ops: Vec<ExecutedOp>,
    key: String,
}

impl Schedule {
    /// Wraps an op list without checking it against a DAG; see [`rederive`].
    pub fn from_ops(ops: Vec<ExecutedOp>) -> Self {
        let key = canonical_key(&ops);
        Schedule { ops, key }
    }

    pub fn ops(&self) -> &[ExecutedOp] {
        &self.ops
    }

    /// Stream-relabeled serialization; equal for schedules that differ only
    /// by a permutation of streams.
    pub fn key(&self) -> &str {
        &self.key
    }

    /// DAG-vertex ops only.
    pub fn projection(&self) -> impl Iterator<Item = &ExecutedOp> {
        self.ops.iter().filter(|op| op.is_vertex())
    }

    /// External-schedule format, one op per line.
    pub fn to_text(&self) -> String {
        self.ops.iter().map(|op| format!("{op}\n")).collect()
    }

    pub fn from_text(text: &str) -> std::result::Result<Self, String> {
        let ops = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(str::parse)
            .collect::<std::result::Result<Vec<_>, _>>()?;
        Ok(Schedule::from_ops(ops))
    }
}

/// Streams relabeled in order of first use. Idempotent.
pub fn canonical_stream_form(schedule: &Schedule) -> Schedule {
    let map = first_use_map(&schedule.ops, 0);
    Schedule {
        ops: schedule.ops.iter().map(|op| op.relabeled(&map)).collect(),
        key: schedule.key.clone(),
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
struct VertexSet(Vec<u64>);

impl VertexSet {
    fn new(n: usize) -> Self {
        VertexSet(vec![0; n.div_ceil(64)])
    }

    fn insert(&mut self, v: usize) {
        self.0[v / 64] |= 1 << (v % 64);
    }

    fn contains(&self, v: usize) -> bool {
        self.0[v / 64] & (1 << (v % 64)) != 0
    }

    fn union_with(&mut self, other: &VertexSet) {
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            *a |= b;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct Event {
    stream: u32,
    /// GPU vertices complete once the event fires.
    covers: VertexSet,
}

/// A partial traversal that can still be completed.
#[derive(Debug, Clone)]
pub struct Prefix {
    ops: Vec<ExecutedOp>,
    order: Vec<usize>,
    executed: VertexSet,
    stream_of: Vec<Option<u32>>,
    /// GPU vertices the host has synchronized with.
    host_done: VertexSet,
    /// Per stream: GPU vertices finished before the next op on that stream starts.
    stream_done: Vec<VertexSet>,
    events: Vec<Event>,
    num_vertices: usize,
}

impl Prefix {
    pub fn empty(dag: &ProgramDag) -> Self {
        let n = dag.len();
        Prefix {
            ops: Vec::new(),
            order: Vec::new(),
            executed: VertexSet::new(n),
            stream_of: vec![None; n],
            host_done: VertexSet::new(n),
            stream_done: vec![VertexSet::new(n); dag.num_streams() as usize],
            events: Vec::new(),
            num_vertices: n,
        }
    }

    pub fn ops(&self) -> &[ExecutedOp] {
        &self.ops
    }

    /// DAG vertices in execution order. Its length is the prefix length k;
    /// inserted syncs do not count.
    pub fn order(&self) -> &[usize] {
        &self.order
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    pub fn is_complete(&self) -> bool {
        self.order.len() == self.num_vertices
    }

    pub fn contains(&self, v: usize) -> bool {
        self.executed.contains(v)
    }

    pub fn stream_of(&self, v: usize) -> Option<u32> {
        self.stream_of[v]
    }

    pub fn last_vertex(&self) -> Option<usize> {
        self.order.last().copied()
    }

    pub fn key(&self) -> String {
        canonical_key(&self.ops)
    }

    /// Vertices not yet executed whose predecessors all are, in declaration order.
    pub fn frontier(&self, dag: &ProgramDag) -> Vec<usize> {
        (0..dag.len())
            .filter(|&v| !self.contains(v) && dag.preds(v).iter().all(|&u| self.contains(u)))
            .collect()
    }

    fn check_next(&self, dag: &ProgramDag, next: &ExecutedOp) -> Result<(usize, Option<u32>)> {
        let v = dag
            .index_of(&next.name)
            .ok_or_else(|| Error::NotInFrontier(next.name.clone()))?;
        if next.is_sync() {
            return Err(bad_binding(
                &next.name,
                "sync ops are derived, not scheduled",
            ));
        }
        if self.contains(v) || !dag.preds(v).iter().all(|&u| self.contains(u)) {
            return Err(Error::NotInFrontier(next.name.clone()));
        }
        let stream = match next.kind {
            ExecKind::Gpu { stream } => {
                if !dag.kind(v).is_gpu() {
                    return Err(bad_binding(&next.name, "only gpu vertices bind to streams"));
                }
                if stream >= dag.num_streams() {
                    return Err(bad_binding(
                        &next.name,
                        &format!("stream {stream} >= {}", dag.num_streams()),
                    ));
                }
                Some(stream)
            }
            ExecKind::Host(k) => {
                if k != dag.kind(v) {
                    return Err(bad_binding(
                        &next.name,
                        &format!("kind {k} does not match the DAG"),
                    ));
                }
                None
            }
            _ => unreachable!(),
        };
        Ok((v, stream))
    }

    /// Sync ops that must precede `next`, without modifying the prefix.
    pub fn insert_syncs(&self, dag: &ProgramDag, next: &ExecutedOp) -> Result<Vec<ExecutedOp>> {
        let mut child = self.clone();
        let before = child.ops.len();
        child.push(dag, next)?;
        child.ops.pop();
        Ok(child.ops.split_off(before))
    }

    /// Appends `next` preceded by whatever synchronization it needs.
    pub fn push(&mut self, dag: &ProgramDag, next: &ExecutedOp) -> Result<()> {
        let (v, stream) = self.check_next(dag, next)?;
        let name = dag.name(v);
        let covered = |p: &Prefix, u: usize| match stream {
            None => p.host_done.contains(u),
            Some(j) => p.host_done.contains(u) || p.stream_done[j as usize].contains(u),
        };

        let mut chosen: Vec<usize> = Vec::new();
        for &u in dag.preds(v) {
            if !dag.kind(u).is_gpu() || covered(self, u) {
                continue;
            }
            if chosen.iter().any(|&e| self.events[e].covers.contains(u)) {
                continue;
            }
            let event = match self.events.iter().position(|e| e.covers.contains(u)) {
                Some(e) => e,
                None => {
                    let s = self.stream_of[u].expect("executed gpu vertex has a stream");
                    let mut covers = self.stream_done[s as usize].clone();
                    covers.union_with(&self.host_done);
                    let id = self.events.len();
                    self.events.push(Event { stream: s, covers });
                    self.ops.push(ExecutedOp {
                        name: format!("CER-after-{}", dag.name(u)),
                        kind: ExecKind::EventRecord {
                            stream: s,
                            event: id as u32,
                        },
                    });
                    id
                }
            };
            chosen.push(event);
        }

        for (i, &e) in chosen.iter().enumerate() {
            let suffix = if i == 0 {
                String::new()
            } else {
                format!("-{}", i + 1)
            };
            let covers = self.events[e].covers.clone();
            let op = match stream {
                None => {
                    self.host_done.union_with(&covers);
                    ExecutedOp {
                        name: format!("CES-b4-{name}{suffix}"),
                        kind: ExecKind::EventSync { event: e as u32 },
                    }
                }
                Some(j) => {
                    self.stream_done[j as usize].union_with(&covers);
                    ExecutedOp {
                        name: format!("CSWE-b4-{name}{suffix}"),
                        kind: ExecKind::StreamWaitEvent {
                            stream: j,
                            event: e as u32,
                        },
                    }
                }
            };
            self.ops.push(op);
        }

        if let Some(j) = stream {
            self.stream_done[j as usize].insert(v);
            self.stream_of[v] = Some(j);
        }
        self.executed.insert(v);
        self.order.push(v);
        self.ops.push(next.clone());
        Ok(())
    }

    /// Appends vertex `v`, bound to `stream` if it is a GPU vertex.
    pub fn push_vertex(&mut self, dag: &ProgramDag, v: usize, stream: Option<u32>) -> Result<()> {
        let op = ExecutedOp::for_vertex(dag, v, stream)?;
        self.push(dag, &op)
    }

    /// Streams relabeled by first use, carrying the sync state along.
    pub fn canonicalized(&self) -> Prefix {
        let map = first_use_map(&self.ops, self.stream_done.len() as u32);
        let mut stream_done = self.stream_done.clone();
        for (old, &new) in map.iter().enumerate() {
            stream_done[new as usize] = self.stream_done[old].clone();
        }
        Prefix {
            ops: self.ops.iter().map(|op| op.relabeled(&map)).collect(),
            order: self.order.clone(),
            executed: self.executed.clone(),
            stream_of: self
                .stream_of
                .iter()
                .map(|s| s.map(|s| map[s as usize]))
                .collect(),
            host_done: self.host_done.clone(),
            stream_done,
            events: self
                .events
                .iter()
                .map(|e| Event {
                    stream: map[e.stream as usize],
                    covers: e.covers.clone(),
                })
                .collect(),
            num_vertices: self.num_vertices,
        }
    }

    pub fn to_schedule(&self) -> Result<Schedule> {
        if !self.is_complete() {
            return Err(Error::InvalidSchedule(format!(
                "prefix has {} of {} vertices",
                self.order.len(),
                self.num_vertices
            )));
        }
        Ok(Schedule::from_ops(self.ops.clone()))
    }
}

/// One child per frontier vertex and stream choice, syncs inserted, with
/// children equal under a stream bijection to an earlier sibling removed.
/// Children are returned in canonical stream form.
pub fn expand_children(prefix: &Prefix, dag: &ProgramDag) -> Vec<Prefix> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for v in prefix.frontier(dag) {
        let streams: Vec<Option<u32>> = if dag.kind(v).is_gpu() {
            (0..dag.num_streams()).map(Some).collect()
        } else {
            vec![None]
        };
        for s in streams {
            let mut child = prefix.clone();
            child
                .push_vertex(dag, v, s)
                .expect("frontier vertex is pushable");
            let child = child.canonicalized();
            if seen.insert(child.key()) {
                out.push(child);
            }
        }
    }
    out
}

/// Every distinct schedule of `dag`, by depth-first expansion.
pub fn enumerate_schedules(dag: &ProgramDag, cap: usize) -> Result<Vec<Schedule>> {
    walk(dag, cap, |_, _| {})
}

/// One line per expanded prefix: its vertex sequence and child count.
#[derive(Debug, Clone, PartialEq)]
pub struct BranchingLine {
    pub depth: usize,
    pub prefix: String,
    pub children: usize,
}

/// Enumerates like [`enumerate_schedules`], recording the branching factor of
/// every prefix on the way.
pub fn branching_trace(
    dag: &ProgramDag,
    cap: usize,
) -> Result<(Vec<Schedule>, Vec<BranchingLine>)> {
    let mut lines = Vec::new();
    let schedules = walk(dag, cap, |p, n| {
        let prefix = p
            .ops()
            .iter()
            .filter(|op| op.is_vertex())
            .map(ExecutedOp::key_token)
            .collect::<Vec<_>>()
            .join(",");
        lines.push(BranchingLine {
            depth: p.len(),
            prefix,
            children: n,
        });
    })?;
    Ok((schedules, lines))
}

fn walk(
    dag: &ProgramDag,
    cap: usize,
    mut visit: impl FnMut(&Prefix, usize),
) -> Result<Vec<Schedule>> {
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    let mut stack = vec![Prefix::empty(dag)];
    while let Some(p) = stack.pop() {
        if p.is_complete() {
            let s = p.to_schedule()?;
            if seen.insert(s.key().to_string()) {
                if out.len() == cap {
                    return Err(Error::EnumerationTooLarge { cap });
                }
                out.push(s);
            }
            continue;
        }
        let children = expand_children(&p, dag);
        visit(&p, children.len());
        stack.extend(children.into_iter().rev());
    }
    Ok(out)
}

/// Replays the vertex projection of `schedule` and checks that the derived
/// syncs reproduce it exactly.
pub fn rederive(dag: &ProgramDag, schedule: &Schedule) -> Result<Schedule> {
    let mut p = Prefix::empty(dag);
    for op in schedule.projection() {
        p.push(dag, op)
            .map_err(|e| Error::InvalidSchedule(e.to_string()))?;
    }
    let again = p.to_schedule()?;
    if again.ops() != schedule.ops() {
        return Err(Error::InvalidSchedule(format!(
            "derived syncs differ:\n  expected {}\n  found    {}",
            again.key(),
            schedule.key()
        )));
    }
    Ok(again)
}
