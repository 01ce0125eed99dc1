#![allow(dead_code)]

use std::collections::BTreeSet;
use std::sync::OnceLock;

use design_rules::cart::{NodeKind, TrainedTree, TreeNode};
use design_rules::dag::{spmv_example, OpKind, ProgramDag};
use design_rules::exec::CostModel;
use design_rules::labels::ClassId;
use design_rules::schedule::{enumerate_schedules, ExecKind, Prefix, Schedule};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

pub fn diamond() -> ProgramDag {
    ProgramDag::builder()
        .cpu("start")
        .cpu("A")
        .cpu("B")
        .cpu("end")
        .edge("start", "A")
        .edge("start", "B")
        .edge("A", "end")
        .edge("B", "end")
        .build()
        .unwrap()
}

/// The SpMV DAG without the receive side's unpack and remote product.
pub fn spmv_subset() -> ProgramDag {
    let text = r#"
num_streams = 2
edges = [
  ["start", "Pack"], ["start", "y_L"], ["start", "PostRecv"],
  ["Pack", "PostSend"], ["PostSend", "WaitSend"], ["PostRecv", "WaitRecv"],
  ["y_L", "end"], ["WaitSend", "end"], ["WaitRecv", "end"],
]
[[vertex]]
name = "start"
kind = "cpu"
[[vertex]]
name = "Pack"
kind = "gpu"
[[vertex]]
name = "y_L"
kind = "gpu"
[[vertex]]
name = "PostSend"
kind = "post_send"
[[vertex]]
name = "PostRecv"
kind = "post_recv"
[[vertex]]
name = "WaitSend"
kind = "wait_send"
[[vertex]]
name = "WaitRecv"
kind = "wait_recv"
[[vertex]]
name = "end"
kind = "cpu"
"#;
    ProgramDag::from_toml_str(text).unwrap()
}

/// A random valid DAG with at most `max_vertices` vertices (start and end
/// included) and 1 or 2 streams. Inner vertices are CPU or GPU work, plus
/// sometimes a send post/wait pair.
pub fn random_dag(rng: &mut ChaCha8Rng, max_vertices: usize) -> ProgramDag {
    let inner_budget = max_vertices - 2;
    let with_comm = inner_budget >= 3 && rng.random_bool(0.3);
    let plain = rng.random_range(1..=inner_budget - if with_comm { 2 } else { 0 });
    let mut names: Vec<(String, OpKind)> = (0..plain)
        .map(|i| {
            let k = if rng.random_bool(0.6) {
                OpKind::Gpu
            } else {
                OpKind::Cpu
            };
            (format!("v{i}"), k)
        })
        .collect();
    if with_comm {
        names.push(("Send".into(), OpKind::PostSend));
        names.push(("Done".into(), OpKind::WaitSend));
    }
    let n = names.len();
    let mut b = ProgramDag::builder()
        .streams(rng.random_range(1..=2))
        .cpu("start");
    for (name, kind) in &names {
        b = b.vertex(name, *kind);
    }
    b = b.cpu("end");
    let mut has_pred = vec![false; n];
    let mut has_succ = vec![false; n];
    for i in 0..n {
        for j in i + 1..n {
            let forced = with_comm && names[i].0 == "Send" && names[j].0 == "Done";
            if forced || rng.random_bool(0.35) {
                b = b.edge(&names[i].0, &names[j].0);
                has_succ[i] = true;
                has_pred[j] = true;
            }
        }
    }
    for i in 0..n {
        if !has_pred[i] {
            b = b.edge("start", &names[i].0);
        }
        if !has_succ[i] {
            b = b.edge(&names[i].0, "end");
        }
    }
    b.build().unwrap().validated().unwrap()
}

/// Every topological order of `dag`, by brute force.
pub fn topological_orders(dag: &ProgramDag) -> Vec<Vec<usize>> {
    fn go(
        dag: &ProgramDag,
        order: &mut Vec<usize>,
        used: &mut Vec<bool>,
        out: &mut Vec<Vec<usize>>,
    ) {
        if order.len() == dag.len() {
            out.push(order.clone());
            return;
        }
        for v in 0..dag.len() {
            if !used[v] && dag.preds(v).iter().all(|&p| used[p]) {
                used[v] = true;
                order.push(v);
                go(dag, order, used, out);
                order.pop();
                used[v] = false;
            }
        }
    }
    let mut out = Vec::new();
    go(dag, &mut Vec::new(), &mut vec![false; dag.len()], &mut out);
    out
}

/// Schedule keys from every topological order times every stream
/// assignment, with streams renamed in order of first use.
pub fn oracle_keys(dag: &ProgramDag) -> BTreeSet<String> {
    let gpu: Vec<usize> = dag.gpu_vertices().collect();
    let s = dag.num_streams() as usize;
    let combos = s.pow(gpu.len() as u32);
    let mut keys = BTreeSet::new();
    for order in topological_orders(dag) {
        for mut c in 0..combos {
            let mut assign = vec![0u32; dag.len()];
            for &g in &gpu {
                assign[g] = (c % s) as u32;
                c /= s;
            }
            let mut rename: Vec<Option<u32>> = vec![None; s];
            let mut next = 0;
            let mut p = Prefix::empty(dag);
            for &v in &order {
                let stream = dag.kind(v).is_gpu().then(|| {
                    *rename[assign[v] as usize].get_or_insert_with(|| {
                        next += 1;
                        next - 1
                    })
                });
                p.push_vertex(dag, v, stream).unwrap();
            }
            keys.insert(p.to_schedule().unwrap().key().to_string());
        }
    }
    keys
}

/// Three well separated Gaussian clusters of 200 times each, gaps of 1.0
/// against a spread of 0.01.
pub fn trimodal(seed: u64) -> Vec<(String, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for mu in [1.0, 2.0, 3.0] {
        let d = Normal::new(mu, 0.01).unwrap();
        for _ in 0..200 {
            out.push((format!("s{:03}", out.len()), d.sample(&mut rng)));
        }
    }
    out
}

/// 500 random rows of 12 bits labeled `1 + x3 + x7`.
pub fn separable(seed: u64) -> (Vec<Vec<u8>>, Vec<ClassId>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows: Vec<Vec<u8>> = (0..500)
        .map(|_| (0..12).map(|_| u8::from(rng.random_bool(0.5))).collect())
        .collect();
    let labels = rows
        .iter()
        .map(|r| ClassId(1 + u32::from(r[3]) + u32::from(r[7])))
        .collect();
    (rows, labels)
}

pub fn leaf(counts: Vec<usize>, depth: usize) -> TreeNode {
    TreeNode {
        kind: NodeKind::Leaf,
        distribution: counts.iter().map(|&c| c as f64).collect(),
        samples: counts.iter().sum(),
        counts,
        depth,
    }
}

pub fn split(
    feature: usize,
    left: usize,
    right: usize,
    counts: Vec<usize>,
    depth: usize,
) -> TreeNode {
    TreeNode {
        kind: NodeKind::Split {
            feature,
            left,
            right,
        },
        ..leaf(counts, depth)
    }
}

/// Root splits on column 0; its 1 side splits on column 1.
pub fn depth_two_tree() -> TrainedTree {
    TrainedTree::from_parts(
        vec![
            split(0, 1, 2, vec![50, 50], 0),
            leaf(vec![5, 40], 1),
            split(1, 3, 4, vec![45, 10], 1),
            leaf(vec![10, 10], 2),
            leaf(vec![35, 0], 2),
        ],
        vec![ClassId(1), ClassId(2)],
        3,
    )
}

fn spmv_space() -> &'static [Schedule] {
    static SPACE: OnceLock<Vec<Schedule>> = OnceLock::new();
    SPACE.get_or_init(|| enumerate_schedules(&spmv_example(), 100_000).unwrap())
}

/// A random DAG, one of its schedules, and random costs for it.
pub fn simulator_case(seed: u64) -> (ProgramDag, Schedule, CostModel) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (dag, all) = if rng.random_bool(0.2) {
        (spmv_example(), spmv_space().to_vec())
    } else {
        let dag = random_dag(&mut rng, 8);
        let all = enumerate_schedules(&dag, 1_000_000).unwrap();
        (dag, all)
    };
    let s = all[rng.random_range(0..all.len())].clone();
    let mut model = CostModel {
        gpu_launch_overhead: rng.random_range(0.0..1e-5),
        comm_latency: rng.random_range(0.0..1e-4),
        sync_overhead: rng.random_range(0.0..1e-5),
        ..CostModel::default()
    };
    for v in dag.vertices() {
        model = model.with(&v.cost_key, rng.random_range(0.0..1e-4));
    }
    (dag, s, model)
}

/// Host busy time, and per-stream kernel time.
pub fn resource_sums(dag: &ProgramDag, s: &Schedule, m: &CostModel) -> (f64, Vec<f64>) {
    let mut host = 0.0;
    let mut streams = vec![0.0; dag.num_streams() as usize];
    for op in s.ops() {
        match op.kind {
            ExecKind::Host(_) => host += m.durations[&op.name],
            ExecKind::Gpu { stream } => {
                host += m.gpu_launch_overhead;
                streams[stream as usize] += m.durations[&op.name];
            }
            _ => host += m.sync_overhead,
        }
    }
    (host, streams)
}
