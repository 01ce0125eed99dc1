//! Timing schedules.
//!
//! [`simulate`] is a discrete-event model of one host thread, a set of GPU
//! streams with events, and nonblocking point-to-point communication. It
//! stands in for running candidates on real hardware; [`ExternalCommand`]
//! hands the schedule to an outside benchmark instead. Either way,
//! [`measure`] repeats executions until a time budget is spent.

use std::collections::BTreeMap;
use std::io::Write;
use std::process::Command;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::Deserialize;

use crate::dag::{OpKind, ProgramDag};
use crate::error::{Error, Result};
use crate::schedule::{ExecKind, Schedule};

pub const SCHEDULE_FILE_PLACEHOLDER: &str = "{schedule_file}";

fn default_launch_overhead() -> f64 {
    5e-6
}

fn default_comm_latency() -> f64 {
    1e-4
}

/// Per-operation costs, in seconds.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostModel {
    /// Duration per cost key. Vertices without an entry are an error.
    #[serde(default)]
    pub durations: BTreeMap<String, f64>,
    #[serde(default = "default_launch_overhead")]
    pub gpu_launch_overhead: f64,
    #[serde(default = "default_comm_latency")]
    pub comm_latency: f64,
    /// Host time spent issuing each inserted record, sync or stream wait.
    #[serde(default)]
    pub sync_overhead: f64,
    #[serde(default)]
    pub noise_rel_sigma: f64,
    #[serde(default)]
    pub seed: u64,
}

impl Default for CostModel {
    fn default() -> Self {
        CostModel {
            durations: BTreeMap::new(),
            gpu_launch_overhead: default_launch_overhead(),
            comm_latency: default_comm_latency(),
            sync_overhead: 0.0,
            noise_rel_sigma: 0.0,
            seed: 0,
        }
    }
}

impl CostModel {
    /// All durations zero unless set.
    pub fn zero() -> Self {
        CostModel {
            gpu_launch_overhead: 0.0,
            comm_latency: 0.0,
            ..Default::default()
        }
    }

    pub fn with(mut self, key: &str, seconds: f64) -> Self {
        self.durations.insert(key.into(), seconds);
        self
    }

    /// Costs for the shipped sparse matrix-vector DAG. The local and remote
    /// products are about the same size, so overlapping them with the halo
    /// exchange matters.
    pub fn spmv_example() -> Self {
        CostModel {
            sync_overhead: 2e-6,
            ..Default::default()
        }
        .with("start", 0.0)
        .with("end", 0.0)
        .with("Pack", 3e-5)
        .with("y_L", 1.5e-4)
        .with("Unpack", 3e-5)
        .with("y_R", 1.5e-4)
        .with("PostSend", 1e-5)
        .with("PostRecv", 1e-5)
        .with("WaitSend", 5e-6)
        .with("WaitRecv", 5e-6)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |x: f64| !(x.is_finite() && x >= 0.0);
        for (k, &d) in &self.durations {
            if bad(d) {
                return Err(Error::InvalidCostModel(format!("duration of `{k}` is {d}")));
            }
        }
        for (what, x) in [
            ("gpu_launch_overhead", self.gpu_launch_overhead),
            ("comm_latency", self.comm_latency),
            ("sync_overhead", self.sync_overhead),
            ("noise_rel_sigma", self.noise_rel_sigma),
        ] {
            if bad(x) {
                return Err(Error::InvalidCostModel(format!("{what} is {x}")));
            }
        }
        Ok(())
    }

    pub fn duration(&self, key: &str) -> Result<f64> {
        self.durations
            .get(key)
            .copied()
            .ok_or_else(|| Error::UnknownCostKey(key.into()))
    }
}

/// Noise-free end-to-end time of `schedule`: the host clock after `end`.
pub fn simulate(dag: &ProgramDag, schedule: &Schedule, model: &CostModel) -> Result<f64> {
    let mut host = 0.0_f64;
    let mut streams = vec![0.0_f64; dag.num_streams() as usize];
    let mut events: Vec<f64> = Vec::new();
    let mut comm_done: Vec<Option<f64>> = vec![None; dag.len()];

    let vertex = |name: &str| {
        dag.index_of(name)
            .ok_or_else(|| Error::InvalidSchedule(format!("`{name}` is not a DAG vertex")))
    };

    for op in schedule.ops() {
        match op.kind {
            ExecKind::Host(kind) => {
                let v = vertex(&op.name)?;
                let d = model.duration(&dag.vertex(v).cost_key)?;
                match kind {
                    OpKind::PostSend | OpKind::PostRecv => {
                        host += d;
                        comm_done[v] = Some(host + model.comm_latency);
                    }
                    OpKind::WaitSend | OpKind::WaitRecv => {
                        let done = dag.partner(v).and_then(|p| comm_done[p]).ok_or_else(|| {
                            Error::NoMatchingPost {
                                wait: op.name.clone(),
                            }
                        })?;
                        host = host.max(done) + d;
                    }
                    _ => host += d,
                }
            }
            ExecKind::Gpu { stream } => {
                let v = vertex(&op.name)?;
                let d = model.duration(&dag.vertex(v).cost_key)?;
                let s = stream_slot(&mut streams, stream)?;
                host += model.gpu_launch_overhead;
                *s = s.max(host) + d;
            }
            ExecKind::EventRecord { stream, event } => {
                host += model.sync_overhead;
                let t = *stream_slot(&mut streams, stream)?;
                let e = event as usize;
                if events.len() <= e {
                    events.resize(e + 1, f64::NAN);
                }
                events[e] = t;
            }
            ExecKind::EventSync { event } => {
                host += model.sync_overhead;
                host = host.max(event_time(&events, event, &op.name)?);
            }
            ExecKind::StreamWaitEvent { stream, event } => {
                host += model.sync_overhead;
                let t = event_time(&events, event, &op.name)?;
                let s = stream_slot(&mut streams, stream)?;
                *s = s.max(t);
            }
        }
    }
    Ok(host)
}

fn stream_slot(streams: &mut [f64], stream: u32) -> Result<&mut f64> {
    let n = streams.len();
    streams.get_mut(stream as usize).ok_or_else(|| {
        Error::InvalidSchedule(format!("stream {stream} out of range for {n} streams"))
    })
}

fn event_time(events: &[f64], event: u32, name: &str) -> Result<f64> {
    events
        .get(event as usize)
        .copied()
        .filter(|t| !t.is_nan())
        .ok_or_else(|| {
            Error::InvalidSchedule(format!("`{name}` waits on unrecorded event {event}"))
        })
}

/// Something that can time one execution of a schedule.
pub trait Executor {
    fn execute(&mut self, schedule: &Schedule) -> Result<f64>;
}

impl<F: FnMut(&Schedule) -> Result<f64>> Executor for F {
    fn execute(&mut self, schedule: &Schedule) -> Result<f64> {
        self(schedule)
    }
}

/// [`simulate`] with optional seeded multiplicative noise.
#[derive(Debug, Clone)]
pub struct Simulator {
    dag: ProgramDag,
    model: CostModel,
    noise: Option<Normal<f64>>,
    rng: ChaCha8Rng,
}

impl Simulator {
    pub fn new(dag: ProgramDag, model: CostModel) -> Result<Self> {
        model.validate()?;
        let noise = (model.noise_rel_sigma > 0.0)
            .then(|| Normal::new(1.0, model.noise_rel_sigma).expect("sigma validated"));
        let rng = ChaCha8Rng::seed_from_u64(model.seed);
        Ok(Simulator {
            dag,
            model,
            noise,
            rng,
        })
    }

    pub fn model(&self) -> &CostModel {
        &self.model
    }

    fn factor(&mut self) -> f64 {
        match &self.noise {
            None => 1.0,
            Some(n) => loop {
                let f = n.sample(&mut self.rng);
                if f > 0.0 {
                    break f;
                }
            },
        }
    }
}

impl Executor for Simulator {
    fn execute(&mut self, schedule: &Schedule) -> Result<f64> {
        let t = simulate(&self.dag, schedule, &self.model)?;
        Ok(t * self.factor())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Measurement {
    pub key: String,
    pub time: f64,
    pub n_samples: u32,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeasurementProtocol {
    pub t_measure: f64,
    pub max_samples: u32,
}

impl Default for MeasurementProtocol {
    fn default() -> Self {
        MeasurementProtocol {
            t_measure: 0.01,
            max_samples: 10_000,
        }
    }
}

/// Runs `schedule` until the accumulated time reaches `t_measure` (or
/// `max_samples` runs) and reports the per-run average.
pub fn measure(
    schedule: &Schedule,
    executor: &mut dyn Executor,
    protocol: &MeasurementProtocol,
) -> Result<Measurement> {
    let mut total = 0.0;
    let mut n = 0u32;
    while n == 0 || (total < protocol.t_measure && n < protocol.max_samples) {
        let t = executor.execute(schedule).map_err(|e| Error::Executor {
            key: schedule.key().to_string(),
            source: Box::new(e),
        })?;
        if !(t.is_finite() && t > 0.0) {
            return Err(Error::Executor {
                key: schedule.key().to_string(),
                source: Box::new(Error::UnparsableOutput {
                    output: t.to_string(),
                }),
            });
        }
        total += t;
        n += 1;
    }
    Ok(Measurement {
        key: schedule.key().to_string(),
        time: total / n as f64,
        n_samples: n,
    })
}

/// Writes the schedule to a temporary file, substitutes its path for
/// `{schedule_file}` in `command_template`, runs the result with `sh -c` and
/// reads one decimal number of seconds from stdout.
pub fn external_execute(schedule: &Schedule, command_template: &str) -> Result<f64> {
    let mut file = tempfile::Builder::new()
        .prefix("schedule-")
        .suffix(".txt")
        .tempfile()?;
    file.write_all(schedule.to_text().as_bytes())?;
    file.flush()?;
    let command =
        command_template.replace(SCHEDULE_FILE_PLACEHOLDER, &file.path().to_string_lossy());
    let out = Command::new("sh").arg("-c").arg(&command).output()?;
    if !out.status.success() {
        return Err(Error::CommandFailed {
            status: out.status.to_string(),
            stderr: String::from_utf8_lossy(&out.stderr).trim().to_string(),
        });
    }
    let stdout = String::from_utf8_lossy(&out.stdout);
    let text = stdout.trim();
    text.parse::<f64>()
        .ok()
        .filter(|t| t.is_finite() && *t >= 0.0)
        .ok_or_else(|| Error::UnparsableOutput {
            output: text.to_string(),
        })
}

/// An executor backed by an external benchmark command. Calls run one at a time.
#[derive(Debug, Clone)]
pub struct ExternalCommand {
    pub template: String,
}

impl Executor for ExternalCommand {
    fn execute(&mut self, schedule: &Schedule) -> Result<f64> {
        external_execute(schedule, &self.template)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schedule::{ExecutedOp, Prefix};

    fn run(dag: &ProgramDag, seq: &[(&str, Option<u32>)]) -> Schedule {
        let mut p = Prefix::empty(dag);
        for &(name, s) in seq {
            p.push_vertex(dag, dag.index_of(name).unwrap(), s).unwrap();
        }
        p.to_schedule().unwrap()
    }

    #[test]
    fn serial_cpu_ops_add_up() {
        let dag = ProgramDag::builder()
            .cpu("start")
            .cpu("a")
            .cpu("b")
            .cpu("end")
            .edge("start", "a")
            .edge("a", "b")
            .edge("b", "end")
            .build()
            .unwrap();
        let model = CostModel::zero()
            .with("start", 0.0)
            .with("end", 0.0)
            .with("a", 1.0)
            .with("b", 2.0);
        let s = run(
            &dag,
            &[("start", None), ("a", None), ("b", None), ("end", None)],
        );
        assert_eq!(simulate(&dag, &s, &model).unwrap(), 3.0);
    }

    #[test]
    fn independent_streams_overlap() {
        let dag = ProgramDag::builder()
            .cpu("start")
            .gpu("g1")
            .gpu("g2")
            .cpu("end")
            .edge("start", "g1")
            .edge("start", "g2")
            .edge("g1", "end")
            .edge("g2", "end")
            .streams(2)
            .build()
            .unwrap();
        let model = CostModel::zero()
            .with("start", 0.0)
            .with("end", 0.0)
            .with("g1", 1.0)
            .with("g2", 1.0);
        let s = run(
            &dag,
            &[
                ("start", None),
                ("g1", Some(0)),
                ("g2", Some(1)),
                ("end", None),
            ],
        );
        assert_eq!(simulate(&dag, &s, &model).unwrap(), 1.0);
        let same = run(
            &dag,
            &[
                ("start", None),
                ("g1", Some(0)),
                ("g2", Some(0)),
                ("end", None),
            ],
        );
        assert_eq!(simulate(&dag, &same, &model).unwrap(), 2.0);
    }

    #[test]
    fn pack_then_send_trace() {
        // Pack on stream 0 (1.0), record, host sync, PostSend (0.1), latency 0.5:
        // the send completes at 1.0 + 0.1 + 0.5.
        let dag = ProgramDag::builder()
            .cpu("start")
            .gpu("Pack")
            .vertex("PostSend", OpKind::PostSend)
            .vertex("WaitSend", OpKind::WaitSend)
            .cpu("end")
            .edge("start", "Pack")
            .edge("Pack", "PostSend")
            .edge("PostSend", "WaitSend")
            .edge("WaitSend", "end")
            .build()
            .unwrap();
        let model = CostModel {
            comm_latency: 0.5,
            ..CostModel::zero()
        }
        .with("start", 0.0)
        .with("end", 0.0)
        .with("Pack", 1.0)
        .with("PostSend", 0.1)
        .with("WaitSend", 0.0);
        let s = run(
            &dag,
            &[
                ("start", None),
                ("Pack", Some(0)),
                ("PostSend", None),
                ("WaitSend", None),
                ("end", None),
            ],
        );
        let names: Vec<_> = s.ops().iter().map(|o| o.name.as_str()).collect();
        assert_eq!(
            names,
            [
                "start",
                "Pack",
                "CER-after-Pack",
                "CES-b4-PostSend",
                "PostSend",
                "WaitSend",
                "end"
            ]
        );
        let t = simulate(&dag, &s, &model).unwrap();
        assert!((t - 1.6).abs() < 1e-12, "{t}");
    }

    #[test]
    fn unknown_cost_key() {
        let dag = ProgramDag::builder()
            .cpu("start")
            .cpu("end")
            .edge("start", "end")
            .build()
            .unwrap();
        let s = run(&dag, &[("start", None), ("end", None)]);
        let err = simulate(&dag, &s, &CostModel::zero().with("start", 0.0)).unwrap_err();
        assert!(matches!(err, Error::UnknownCostKey(k) if k == "end"));
    }

    #[test]
    fn wait_without_post() {
        let dag = ProgramDag::builder()
            .cpu("start")
            .vertex("Ps", OpKind::PostSend)
            .vertex("Ws", OpKind::WaitSend)
            .cpu("end")
            .edge("start", "Ps")
            .edge("Ps", "Ws")
            .edge("Ws", "end")
            .build()
            .unwrap();
        let model = CostModel::zero()
            .with("start", 0.0)
            .with("end", 0.0)
            .with("Ps", 0.0)
            .with("Ws", 0.0);
        let bogus = Schedule::from_ops(vec![
            ExecutedOp::host("start", OpKind::Cpu),
            ExecutedOp::host("Ws", OpKind::WaitSend),
            ExecutedOp::host("end", OpKind::Cpu),
        ]);
        assert!(matches!(
            simulate(&dag, &bogus, &model),
            Err(Error::NoMatchingPost { .. })
        ));
    }

    fn fixed(t: f64) -> impl FnMut(&Schedule) -> Result<f64> {
        move |_| Ok(t)
    }

    #[test]
    fn measurement_sample_counts() {
        let s = Schedule::from_ops(vec![]);
        let p = MeasurementProtocol::default();
        let m = measure(&s, &mut fixed(0.004), &p).unwrap();
        assert_eq!(m.n_samples, 3);
        assert!((m.time - 0.004).abs() < 1e-15);
        assert_eq!(measure(&s, &mut fixed(0.02), &p).unwrap().n_samples, 1);
        let capped = MeasurementProtocol {
            max_samples: 2,
            ..p
        };
        assert_eq!(
            measure(&s, &mut fixed(0.001), &capped).unwrap().n_samples,
            2
        );
    }

    #[test]
    fn noisy_measurements_are_seeded() {
        let dag = crate::dag::spmv_example();
        let s = crate::schedule::enumerate_schedules(&dag, 10_000)
            .unwrap()
            .swap_remove(5);
        let model = CostModel {
            noise_rel_sigma: 0.05,
            seed: 7,
            ..CostModel::spmv_example()
        };
        let p = MeasurementProtocol::default();
        let a = measure(
            &s,
            &mut Simulator::new(dag.clone(), model.clone()).unwrap(),
            &p,
        )
        .unwrap();
        let b = measure(
            &s,
            &mut Simulator::new(dag.clone(), model.clone()).unwrap(),
            &p,
        )
        .unwrap();
        assert_eq!(a, b);
        let det = simulate(&dag, &s, &CostModel::spmv_example()).unwrap();
        assert!(a.time != det && (a.time / det - 1.0).abs() < 0.05);
    }

    #[test]
    fn executor_error_carries_key() {
        let s = Schedule::from_ops(vec![ExecutedOp::host("start", OpKind::Cpu)]);
        let mut failing = |_: &Schedule| -> Result<f64> { Err(Error::Internal("boom".into())) };
        let err = measure(&s, &mut failing, &MeasurementProtocol::default()).unwrap_err();
        assert!(matches!(err, Error::Executor { ref key, .. } if key == "start"));
    }

    #[test]
    fn external_command_outputs() {
        let s = Schedule::from_ops(vec![ExecutedOp::host("start", OpKind::Cpu)]);
        assert_eq!(external_execute(&s, "echo 0.5").unwrap(), 0.5);
        assert!(matches!(
            external_execute(&s, "exit 1"),
            Err(Error::CommandFailed { .. })
        ));
        match external_execute(&s, "echo abc") {
            Err(Error::UnparsableOutput { output }) => assert_eq!(output, "abc"),
            other => panic!("{other:?}"),
        }
        // the placeholder names a file holding the schedule
        assert_eq!(
            external_execute(&s, "grep -c start {schedule_file}").unwrap(),
            1.0
        );
    }
}
