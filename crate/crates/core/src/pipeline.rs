//! Run configuration and the four pipeline stages.
//!
//! Stages talk through files in the output directory, so analysis can be
//! rerun on a fixed dataset:
//!
//! | stage       | writes                                                       |
//! |-------------|--------------------------------------------------------------|
//! | `enumerate` | `enumerate.dataset.tsv`, `branching_trace.txt` on a count mismatch |
//! | `search`    | `search.dataset.tsv`, `search.tree.txt`                      |
//! | `analyze`   | `labels.tsv`, `classes.tsv`, `sorted_times.tsv`, `features.tsv`, `tree.txt`, `hyperparams.tsv`, `rules.txt`, `rules.tsv` |
//! | `evaluate`  | `evaluate.txt`                                               |

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::cart::{hyperparam_search, trace_tsv, SearchStep, TrainedTree};
use crate::dag::{spmv_example, ProgramDag};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::exec::{measure, CostModel, Executor, ExternalCommand, MeasurementProtocol, Simulator};
use crate::features::{build_matrix, FeatureMatrix};
use crate::labels::{make_labels, LabelParams, Labeling, DEFAULT_PERCENTILE};
use crate::mcts::{run_search, TreeSummary};
use crate::rules::{evaluate_accuracy, extract_rules, render_report, RuleReport};
use crate::schedule::{branching_trace, BranchingLine, DEFAULT_ENUMERATION_CAP};

pub const DEFAULT_TOP_K: usize = 3;

#[derive(Debug, Clone, PartialEq, Eq, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ExecutorChoice {
    #[default]
    Simulator,
    /// Shell command printing seconds; `{schedule_file}` is replaced with
    /// the path of a file holding the schedule.
    External { command: String },
}

/// The config file as written. Every field is optional.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    dag: Option<PathBuf>,
    num_streams: Option<u32>,
    costs: Option<CostModel>,
    executor: Option<ExecutorChoice>,
    seed: Option<u64>,
    iterations: Option<usize>,
    t_measure: Option<f64>,
    max_samples: Option<u32>,
    radius: Option<usize>,
    percentile: Option<f64>,
    out_dir: Option<PathBuf>,
    enumeration_cap: Option<usize>,
    expected_count: Option<usize>,
    top_k: Option<usize>,
}

/// Command-line values that win over the config file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub iterations: Option<usize>,
    pub radius: Option<usize>,
    pub percentile: Option<f64>,
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub dag: ProgramDag,
    pub costs: CostModel,
    pub executor: ExecutorChoice,
    /// Seeds the tree search. Simulator noise uses `costs.seed`.
    pub seed: u64,
    pub iterations: usize,
    pub protocol: MeasurementProtocol,
    pub labels: LabelParams,
    pub out_dir: PathBuf,
    pub enumeration_cap: usize,
    pub expected_count: Option<usize>,
    pub top_k: usize,
}

impl RunConfig {
    /// The shipped SpMV problem on the simulator.
    pub fn spmv() -> Self {
        RunConfig {
            dag: spmv_example(),
            costs: CostModel::spmv_example(),
            executor: ExecutorChoice::Simulator,
            seed: 0,
            iterations: 400,
            protocol: MeasurementProtocol::default(),
            labels: LabelParams::default(),
            out_dir: PathBuf::from("out"),
            enumeration_cap: DEFAULT_ENUMERATION_CAP,
            expected_count: None,
            top_k: DEFAULT_TOP_K,
        }
    }

    /// A DAG path in the file is relative to the file's directory. Without
    /// one, the built-in SpMV DAG and its costs are used.
    pub fn from_toml_str(text: &str, base_dir: &Path) -> Result<Self> {
        let f: ConfigFile = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        let mut cfg = RunConfig::spmv();
        if let Some(p) = &f.dag {
            let path = base_dir.join(p);
            if !path.is_file() {
                return Err(Error::Config(format!(
                    "dag file {} does not exist",
                    path.display()
                )));
            }
            cfg.dag = ProgramDag::load(&path)?;
            cfg.costs = CostModel::default();
        }
        if let Some(n) = f.num_streams {
            if n == 0 {
                return Err(Error::Config("num_streams must be at least 1".into()));
            }
            cfg.dag = cfg.dag.with_streams(n);
        }
        if let Some(c) = f.costs {
            cfg.costs = c;
        }
        cfg.costs.validate()?;
        if let Some(e) = f.executor {
            cfg.executor = e;
        }
        cfg.seed = f.seed.unwrap_or(cfg.seed);
        cfg.iterations = f.iterations.unwrap_or(cfg.iterations);
        cfg.protocol.t_measure = f.t_measure.unwrap_or(cfg.protocol.t_measure);
        cfg.protocol.max_samples = f.max_samples.unwrap_or(cfg.protocol.max_samples);
        cfg.labels.radius = f.radius.or(cfg.labels.radius);
        cfg.labels.percentile = f.percentile.unwrap_or(DEFAULT_PERCENTILE);
        cfg.out_dir = f.out_dir.unwrap_or(cfg.out_dir);
        cfg.enumeration_cap = f.enumeration_cap.unwrap_or(cfg.enumeration_cap);
        cfg.expected_count = f.expected_count;
        cfg.top_k = f.top_k.unwrap_or(cfg.top_k);
        cfg.check()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text, path.parent().unwrap_or(Path::new(".")))
    }

    pub fn apply(mut self, o: &Overrides) -> Result<Self> {
        self.seed = o.seed.unwrap_or(self.seed);
        self.iterations = o.iterations.unwrap_or(self.iterations);
        self.labels.radius = o.radius.or(self.labels.radius);
        self.labels.percentile = o.percentile.unwrap_or(self.labels.percentile);
        if let Some(d) = &o.out_dir {
            self.out_dir = d.clone();
        }
        self.check()?;
        Ok(self)
    }

    fn check(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::Usage("iterations must be at least 1".into()));
        }
        if self.labels.radius == Some(0) {
            return Err(Error::Usage("radius must be at least 1".into()));
        }
        if !(0.0..=100.0).contains(&self.labels.percentile) {
            return Err(Error::Usage(format!(
                "percentile {} is outside 0..=100",
                self.labels.percentile
            )));
        }
        if !(self.protocol.t_measure.is_finite() && self.protocol.t_measure >= 0.0) {
            return Err(Error::Usage(
                "t_measure must be a non-negative number".into(),
            ));
        }
        if let ExecutorChoice::External { command } = &self.executor {
            if command.trim().is_empty() {
                return Err(Error::Config("external executor needs a command".into()));
            }
        }
        Ok(())
    }

    pub fn executor(&self) -> Result<Box<dyn Executor>> {
        Ok(match &self.executor {
            ExecutorChoice::Simulator => {
                Box::new(Simulator::new(self.dag.clone(), self.costs.clone())?)
            }
            ExecutorChoice::External { command } => Box::new(ExternalCommand {
                template: command.clone(),
            }),
        })
    }

    fn out_file(&self, name: &str) -> Result<PathBuf> {
        std::fs::create_dir_all(&self.out_dir)?;
        Ok(self.out_dir.join(name))
    }
}

#[derive(Debug, Clone)]
pub struct EnumerateOutcome {
    pub count: usize,
    pub expected: Option<usize>,
    pub dataset: Dataset,
    pub dataset_path: PathBuf,
    pub trace: Vec<BranchingLine>,
    /// Written only when `count` differs from `expected`.
    pub trace_path: Option<PathBuf>,
}

impl EnumerateOutcome {
    pub fn matches_expected(&self) -> Option<bool> {
        self.expected.map(|e| e == self.count)
    }

    pub fn message(&self) -> String {
        let mut s = format!("{} schedules", self.count);
        match self.expected {
            Some(e) if e == self.count => {
                let _ = write!(s, " (matches expected {e})");
            }
            Some(e) => {
                let _ = write!(
                    s,
                    " (expected {e}, differs by {})",
                    self.count as i64 - e as i64
                );
                if let Some(p) = &self.trace_path {
                    let _ = write!(s, "; branching trace in {}", p.display());
                }
            }
            None => {}
        }
        s
    }
}

pub fn branching_trace_text(lines: &[BranchingLine]) -> String {
    let mut s = String::from("# depth\tchildren\tprefix\n");
    for l in lines {
        let _ = writeln!(s, "{}\t{}\t{}", l.depth, l.children, l.prefix);
    }
    s
}

/// Enumerates and measures the whole design space.
pub fn cmd_enumerate(cfg: &RunConfig) -> Result<EnumerateOutcome> {
    let (schedules, trace) = branching_trace(&cfg.dag, cfg.enumeration_cap)?;
    let mut ex = cfg.executor()?;
    let mut dataset = Dataset::new();
    for s in schedules {
        let m = measure(&s, ex.as_mut(), &cfg.protocol)?;
        dataset.add(s, m);
    }
    let dataset_path = cfg.out_file("enumerate.dataset.tsv")?;
    dataset.save(&dataset_path)?;
    let count = dataset.len();
    let trace_path = match cfg.expected_count {
        Some(e) if e != count => {
            let p = cfg.out_file("branching_trace.txt")?;
            std::fs::write(&p, branching_trace_text(&trace))?;
            Some(p)
        }
        _ => None,
    };
    Ok(EnumerateOutcome {
        count,
        expected: cfg.expected_count,
        dataset,
        dataset_path,
        trace,
        trace_path,
    })
}

#[derive(Debug, Clone)]
pub struct SearchOutcome {
    pub dataset: Dataset,
    pub summary: TreeSummary,
    pub dataset_path: PathBuf,
}

pub fn summary_text(s: &TreeSummary) -> String {
    format!(
        "nodes\t{}\nvisited\t{}\nfully_explored\t{}\nexplored_fraction\t{}\nroot_fully_explored\t{}\nrollouts\t{}\n",
        s.nodes,
        s.visited,
        s.fully_explored,
        s.explored_fraction(),
        s.root_fully_explored,
        s.rollouts
    )
}

/// Runs the tree search for the configured number of iterations.
pub fn cmd_search(cfg: &RunConfig) -> Result<SearchOutcome> {
    let mut ex = cfg.executor()?;
    let (dataset, tree) = run_search(
        &cfg.dag,
        ex.as_mut(),
        &cfg.protocol,
        cfg.iterations,
        cfg.seed,
    )?;
    let summary = tree.summary();
    let dataset_path = cfg.out_file("search.dataset.tsv")?;
    dataset.save(&dataset_path)?;
    std::fs::write(cfg.out_file("search.tree.txt")?, summary_text(&summary))?;
    Ok(SearchOutcome {
        dataset,
        summary,
        dataset_path,
    })
}

/// Everything derived from one dataset.
#[derive(Debug, Clone)]
pub struct Analysis {
    pub labeling: Labeling,
    pub matrix: FeatureMatrix,
    pub tree: TrainedTree,
    pub trace: Vec<SearchStep>,
    pub report: RuleReport,
    pub warnings: Vec<String>,
}

/// Labels, featurizes, trains and extracts rules, without touching disk.
pub fn analyze(dataset: &Dataset, params: &LabelParams) -> Result<Analysis> {
    let labeling = make_labels(dataset, params)?;
    let labels = labeling.labels_for(dataset)?;
    let matrix = build_matrix(dataset);
    let (tree, trace) = hyperparam_search(&matrix.rows, &labels)?;
    let report = extract_rules(&tree, &matrix.columns, &matrix.vocab.always_present);
    let mut warnings = Vec::new();
    if labeling.num_classes() == 1 {
        warnings
            .push("only one performance class found; every schedule performs alike".to_string());
    }
    if tree.training_error > 0.0 {
        warnings.push(format!(
            "training error {} is above zero; some rulesets are mixed",
            tree.training_error
        ));
    }
    Ok(Analysis {
        labeling,
        matrix,
        tree,
        trace,
        report,
        warnings,
    })
}

/// [`analyze`] plus all artifacts written to the output directory.
pub fn cmd_analyze(dataset_path: &Path, cfg: &RunConfig) -> Result<Analysis> {
    let dataset = Dataset::load(dataset_path)?;
    let a = analyze(&dataset, &cfg.labels)?;
    let files = [
        ("labels.tsv", a.labeling.to_tsv()),
        ("classes.tsv", a.labeling.summary()),
        ("sorted_times.tsv", a.labeling.plot_data()),
        ("features.tsv", a.matrix.to_tsv()),
        ("tree.txt", a.tree.render(&a.matrix.columns)),
        ("hyperparams.tsv", trace_tsv(&a.trace)),
        ("rules.txt", render_report(&a.report, Some(cfg.top_k))),
        ("rules.tsv", a.report.to_tsv()),
    ];
    for (name, text) in files {
        std::fs::write(cfg.out_file(name)?, text)?;
    }
    Ok(a)
}

/// Trains on `subset` and scores the rules against `full`.
pub fn evaluate(subset: &Dataset, full: &Dataset, params: &LabelParams) -> Result<f64> {
    if subset.is_empty() {
        return Err(Error::Usage("subset dataset is empty".into()));
    }
    if let Some(k) = subset.keys().find(|k| !full.contains(k)) {
        return Err(Error::DagMismatch(format!(
            "subset schedule `{k}` is not in the full dataset"
        )));
    }
    let a = analyze(subset, params)?;
    evaluate_accuracy(&a.tree, &a.matrix, &a.labeling, full)
}

pub fn cmd_evaluate(subset_path: &Path, full_path: &Path, cfg: &RunConfig) -> Result<f64> {
    let subset = Dataset::load(subset_path)?;
    let full = Dataset::load(full_path)?;
    let acc = evaluate(&subset, &full, &cfg.labels)?;
    std::fs::write(
        cfg.out_file("evaluate.txt")?,
        format!(
            "subset\t{}\nfull\t{}\naccuracy\t{acc}\n",
            subset.len(),
            full.len()
        ),
    )?;
    Ok(acc)
}
