//! The end-to-end loop: explore, discover, grow the tree, label; with
//! restarts on structural inconsistency and a global step budget.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::contrastive::{discover_next, ContrastiveConfig, Discovery, Objective};
use crate::error::{Error, Result};
use crate::explorer::{ExploreReport, Explorer, ExplorerConfig};
use crate::gridworld::{GroundTruth, World};
use crate::labeler::{decode_labeling, LabelingProblem, Verdict};
use crate::subgoal_tree::{matches_ground_truth, NodeId, SubgoalTree};
use crate::tl::FsmMetrics;
use crate::trajectory::{conditioned_on, ends_on, Buffers, StateKey, Trajectory};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Full,
    Baseline1NoFr,
    Baseline2Eq2,
    FlatRl,
    FixedExplore,
}

impl std::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.to_ascii_lowercase().replace(['-', '_'], "").as_str() {
            "full" => Variant::Full,
            "baseline1" | "baseline1nofr" | "nofr" => Variant::Baseline1NoFr,
            "baseline2" | "baseline2eq2" | "eq2" => Variant::Baseline2Eq2,
            "flatrl" | "flat" => Variant::FlatRl,
            "fixedexplore" | "fixed" => Variant::FixedExplore,
            _ => return Err(Error::Config(format!("unknown variant `{s}`"))),
        })
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Bundled environment name or spec file path.
    pub env: String,
    pub seed: u64,
    /// Increment of the positive-count threshold between attempts.
    pub k_t: usize,
    pub contrastive: ContrastiveConfig,
    pub explorer: ExplorerConfig,
    /// Environment steps across all attempts, evaluation excluded.
    pub max_steps: u64,
    pub curve_every: u64,
    pub eval_episodes: usize,
    pub output_dir: Option<PathBuf>,
    pub variant: Variant,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            env: "letter.task1".into(),
            seed: 0,
            k_t: 80,
            contrastive: ContrastiveConfig::default(),
            explorer: ExplorerConfig::default(),
            max_steps: 200_000,
            curve_every: 1_000,
            eval_episodes: 20,
            output_dir: None,
            variant: Variant::Full,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = fs::read_to_string(path)?;
        let cfg: RunConfig = serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.k_t == 0 || self.curve_every == 0 || self.eval_episodes == 0 {
            return Err(Error::Config("k_t, curve_every and eval_episodes must be positive".into()));
        }
        self.contrastive.validate()?;
        self.explorer.validate()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RunVerdict {
    Success,
    /// Tree complete but the labeling has several solutions.
    Ambiguous,
    BudgetExhausted,
    /// The explorer could not find enough positives.
    ExplorationFailed,
}

#[derive(Clone, Debug, Serialize)]
pub struct CurvePoint {
    pub steps: u64,
    pub value: f64,
}

/// Importance values at one working node, per grid cell.
#[derive(Clone, Debug)]
pub struct NodeTable {
    pub path: Vec<StateKey>,
    pub discovery: Discovery,
}

#[derive(Clone, Debug)]
pub struct RunReport {
    pub env: String,
    pub variant: Variant,
    pub seed: u64,
    pub verdict: RunVerdict,
    pub restarts: usize,
    /// Threshold used by each attempt.
    pub thresholds: Vec<usize>,
    pub tree: SubgoalTree,
    pub key_states: Vec<StateKey>,
    pub labeling: Option<Verdict>,
    pub steps: u64,
    pub episodes: usize,
    /// Episodes collected when every hidden subgoal first appeared in the tree.
    pub episodes_until_learned: Option<usize>,
    pub success_curve: Vec<CurvePoint>,
    pub accuracy_curve: Vec<CurvePoint>,
    pub tables: Vec<NodeTable>,
    pub explore_log: Vec<ExploreReport>,
    pub tree_matches_ground_truth: bool,
    pub labeling_accuracy: Option<f64>,
    pub subgoal_accuracy: f64,
    pub error: Option<String>,
    pub world: Arc<World>,
}

/// Overlap of discovered keys with the hidden subgoal keys.
pub fn subgoal_accuracy(found: &[StateKey], truth: &GroundTruth) -> f64 {
    let f: BTreeSet<&StateKey> = found.iter().collect();
    let t: BTreeSet<&StateKey> = truth.subgoal_keys.values().collect();
    let union = f.union(&t).count();
    if union == 0 {
        return 0.0;
    }
    f.intersection(&t).count() as f64 / union as f64
}

enum Attempt {
    Done(RunVerdict),
    Restart,
}

/// Step counts and curve sampling.
struct Tracker {
    steps: u64,
    episodes: usize,
    next_checkpoint: u64,
    checkpoint_index: u64,
    success_curve: Vec<CurvePoint>,
    accuracy_curve: Vec<CurvePoint>,
    error: Option<Error>,
}

impl Tracker {
    fn record(&mut self, ex: &Explorer, steps: u64, path: &[StateKey], accuracy: f64, cfg: &RunConfig) {
        self.steps += steps;
        self.episodes += 1;
        while self.steps >= self.next_checkpoint && self.error.is_none() {
            let seed = derive_seed(cfg.seed, 0x1000 + self.checkpoint_index);
            match ex.evaluate(path, cfg.eval_episodes, seed) {
                Ok(rate) => self.success_curve.push(CurvePoint {
                    steps: self.next_checkpoint,
                    value: rate,
                }),
                Err(e) => self.error = Some(e),
            }
            self.accuracy_curve.push(CurvePoint {
                steps: self.next_checkpoint,
                value: accuracy,
            });
            self.checkpoint_index += 1;
            self.next_checkpoint += cfg.curve_every;
        }
    }
}

struct Run<'a> {
    cfg: &'a RunConfig,
    world: Arc<World>,
    truth: GroundTruth,
    metrics: FsmMetrics,
    explorer: Explorer,
    rng: ChaCha8Rng,
    remaining: u64,
    tracker: Tracker,
    tables: Vec<NodeTable>,
    explore_log: Vec<ExploreReport>,
    episodes_until_learned: Option<usize>,
    tree: SubgoalTree,
    buffers: Buffers,
    labeling: Option<Verdict>,
    persistent: Option<Vec<StateKey>>,
    reopened: BTreeSet<NodeId>,
    depth_check: bool,
    expanded: bool,
}

impl Run<'_> {
    fn working_path(&self) -> Vec<StateKey> {
        self.tree.path_of(self.tree.cursor()).unwrap_or_default()
    }

    fn note_learned(&mut self) {
        if self.episodes_until_learned.is_none() {
            let keys: BTreeSet<StateKey> = self.tree.key_states().into_iter().collect();
            if self.truth.subgoal_keys.values().all(|k| keys.contains(k)) {
                self.episodes_until_learned = Some(self.tracker.episodes);
            }
        }
    }

    fn explore(&mut self, path: &[StateKey], required: usize) -> Result<()> {
        let accuracy = subgoal_accuracy(&self.tree.key_states(), &self.truth);
        let tracker = &mut self.tracker;
        let cfg = self.cfg;
        let res = self.explorer.explore_with(
            path,
            required,
            &mut self.buffers,
            &mut self.remaining,
            cfg.max_steps,
            &mut |ex, t| tracker.record(ex, t.steps() as u64, path, accuracy, cfg),
        );
        if let Some(e) = self.tracker.error.take() {
            return Err(e);
        }
        let report = res?;
        self.explore_log.push(report);
        Ok(())
    }

    fn conditioned<'t>(&self, ts: &'t [Trajectory], path: &[StateKey]) -> Vec<&'t Trajectory> {
        ts.iter().filter(|t| conditioned_on(t, path).is_some()).collect()
    }

    fn explained(&self, t: &Trajectory) -> bool {
        self.tree.satisfying().iter().any(|seq| ends_on(t, seq))
    }

    fn attempt(&mut self, n_t: usize) -> Result<Attempt> {
        self.tree = SubgoalTree::new();
        self.buffers = Buffers::new();
        self.reopened.clear();
        self.explore(&[], n_t)?;
        loop {
            let v = self.tree.cursor();
            let path = self.working_path();
            let positives = self.buffers.positives();
            let cond = self.conditioned(positives, &path);
            let unexplained: Vec<&Trajectory> = cond.iter().copied().filter(|t| !self.explained(t)).collect();

            // (*) the path itself is satisfying
            if v != SubgoalTree::ROOT && !self.tree.is_satisfying(&path) && cond.iter().any(|t| ends_on(t, &path)) {
                self.tree.add_satisfying(path.clone());
                // a satisfying path no labeling can ground means the tree is wrong
                let problem = LabelingProblem::new(
                    self.world.fsm().clone(),
                    self.tree.satisfying().to_vec(),
                    self.tree.key_states(),
                )?;
                if !problem.groundable() {
                    self.labeling = Some(Verdict::Infeasible);
                    return Ok(Attempt::Restart);
                }
                let seen = positives.len();
                self.tree.mark_explored(v, seen)?;
                self.tree.set_cursor(self.tree.parent(v)?.expect("non-root"))?;
                continue;
            }

            if v == SubgoalTree::ROOT && unexplained.is_empty() && !self.tree.satisfying().is_empty() {
                let problem = LabelingProblem::new(
                    self.world.fsm().clone(),
                    self.tree.satisfying().to_vec(),
                    self.tree.key_states(),
                )?;
                let verdict = problem.solve()?;
                let outcome = match verdict {
                    Verdict::Unique(_) => Attempt::Done(RunVerdict::Success),
                    Verdict::Ambiguous { .. } => Attempt::Done(RunVerdict::Ambiguous),
                    // some branch has not been walked yet
                    Verdict::Infeasible if problem.groundable() => {
                        self.explore(&path, self.cfg.explorer.batch)?;
                        continue;
                    }
                    Verdict::Infeasible => Attempt::Restart,
                };
                self.labeling = Some(verdict);
                return Ok(outcome);
            }

            if unexplained.len() >= n_t {
                let negatives = self.conditioned(self.buffers.negatives(), &path);
                if negatives.is_empty() {
                    self.explore(&path, self.cfg.explorer.batch)?;
                    continue;
                }
                let mut ccfg = self.cfg.contrastive.clone();
                ccfg.seed = self.rng.gen();
                ccfg.objective = match self.cfg.variant {
                    Variant::Baseline1NoFr => Objective::NoFrAblation,
                    Variant::Baseline2Eq2 => Objective::ConventionalEq2,
                    _ => ccfg.objective,
                };
                let discovery = match discover_next(&unexplained, &negatives, &path, &ccfg) {
                    Ok(d) => d,
                    // nothing follows the path in the positives
                    Err(Error::EmptyPositives) => {
                        self.explore(&path, self.cfg.explorer.batch)?;
                        continue;
                    }
                    Err(e) => return Err(e),
                };
                // a child reopened once and closed again has had its chance
                let mut skip = path.clone();
                let pick = loop {
                    let Some(key) = discovery.best_excluding(&skip) else {
                        break None;
                    };
                    match self.tree.child_with_key(v, &key)? {
                        Some(child) if self.reopened.contains(&child) => skip.push(key),
                        other => break Some((key, other)),
                    }
                };
                self.tables.push(NodeTable {
                    path: path.clone(),
                    discovery,
                });
                let Some((key, existing)) = pick else {
                    self.explore(&path, self.cfg.explorer.batch)?;
                    continue;
                };
                if let Some(child) = existing {
                    if self.tree.closed_at(child)? == Some(positives.len()) {
                        self.explore(&path, self.cfg.explorer.batch)?;
                    } else {
                        self.tree.reopen(child)?;
                        self.reopened.insert(child);
                        self.tree.set_cursor(child)?;
                    }
                    continue;
                }
                let child = self.tree.add_child(v, key)?;
                self.note_learned();
                if !self.expanded {
                    self.expanded = true;
                    if self.cfg.variant == Variant::FixedExplore {
                        self.explorer.policy.frozen = true;
                    }
                }
                // (***) deeper or wider than the machine
                if self.depth_check && self.tree.check_inconsistent(&self.metrics) {
                    let offending = self.tree.deepest_path();
                    if self.persistent.as_ref() == Some(&offending) {
                        self.depth_check = false;
                    } else {
                        self.persistent = Some(offending);
                        return Ok(Attempt::Restart);
                    }
                }
                self.tree.set_cursor(child)?;
                continue;
            }

            // (**) enough evidence and almost everything explained
            if v != SubgoalTree::ROOT && cond.len() >= n_t {
                let seen = positives.len();
                self.tree.mark_explored(v, seen)?;
                self.tree.set_cursor(self.tree.parent(v)?.expect("non-root"))?;
                continue;
            }

            self.explore(&path, self.cfg.explorer.batch)?;
        }
    }
}

fn derive_seed(seed: u64, salt: u64) -> u64 {
    let mut r = ChaCha8Rng::seed_from_u64(seed ^ salt.rotate_left(17));
    r.gen()
}

/// Full LSTOC loop with the configured variant.
pub fn run_lstoc(cfg: &RunConfig) -> Result<RunReport> {
    run_comparison(cfg, cfg.variant)
}

pub fn run_comparison(cfg: &RunConfig, variant: Variant) -> Result<RunReport> {
    cfg.validate()?;
    let world = World::load(&cfg.env)?;
    let mut cfg = cfg.clone();
    cfg.variant = variant;
    let cfg = &cfg;
    let truth = world.ground_truth();
    let metrics = world.fsm().metrics()?;
    let mut explorer = Explorer::new(world.clone(), cfg.explorer.clone(), derive_seed(cfg.seed, 1));
    if variant == Variant::FlatRl {
        explorer.shaping = false;
    }
    let mut run = Run {
        cfg,
        world: world.clone(),
        truth,
        metrics,
        explorer,
        rng: ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, 2)),
        remaining: cfg.max_steps,
        tracker: Tracker {
            steps: 0,
            episodes: 0,
            next_checkpoint: cfg.curve_every,
            checkpoint_index: 0,
            success_curve: Vec::new(),
            accuracy_curve: Vec::new(),
            error: None,
        },
        tables: Vec::new(),
        explore_log: Vec::new(),
        episodes_until_learned: None,
        tree: SubgoalTree::new(),
        buffers: Buffers::new(),
        labeling: None,
        persistent: None,
        reopened: BTreeSet::new(),
        depth_check: true,
        expanded: false,
    };

    let mut thresholds = Vec::new();
    let mut error = None;
    let verdict = if variant == Variant::FlatRl {
        // terminal reward only, no tree
        thresholds.push(cfg.k_t);
        loop {
            match run.explore(&[], usize::MAX) {
                Err(Error::BudgetExhausted(_)) => break RunVerdict::BudgetExhausted,
                Err(Error::ExploreCap { .. }) if run.remaining > 0 => continue,
                Err(Error::ExploreCap { .. }) => break RunVerdict::BudgetExhausted,
                Err(e) => return Err(e),
                Ok(()) => unreachable!("unbounded request"),
            }
        }
    } else {
        let mut n_t = cfg.k_t;
        loop {
            if run.remaining == 0 {
                break RunVerdict::BudgetExhausted;
            }
            thresholds.push(n_t);
            match run.attempt(n_t) {
                Ok(Attempt::Done(v)) => break v,
                Ok(Attempt::Restart) => n_t += cfg.k_t,
                Err(Error::BudgetExhausted(_)) => break RunVerdict::BudgetExhausted,
                Err(e @ Error::ExploreCap { .. }) => {
                    error = Some(e.to_string());
                    break RunVerdict::ExplorationFailed;
                }
                Err(e) => return Err(e),
            }
        }
    };

    let key_states = run.tree.key_states();
    let labeling_accuracy = match &run.labeling {
        Some(Verdict::Unique(a)) => Some(decode_labeling(a, &run.truth).accuracy),
        Some(_) => Some(0.0),
        None => None,
    };
    let tree_matches_ground_truth = matches_ground_truth(&run.tree, world.fsm(), &run.truth.subgoal_keys);
    Ok(RunReport {
        env: cfg.env.clone(),
        variant,
        seed: cfg.seed,
        verdict,
        restarts: thresholds.len().saturating_sub(1),
        thresholds,
        subgoal_accuracy: subgoal_accuracy(&key_states, &run.truth),
        key_states,
        labeling: run.labeling,
        steps: run.tracker.steps,
        episodes: run.tracker.episodes,
        episodes_until_learned: run.episodes_until_learned,
        success_curve: run.tracker.success_curve,
        accuracy_curve: run.tracker.accuracy_curve,
        tables: run.tables,
        explore_log: run.explore_log,
        tree_matches_ground_truth,
        labeling_accuracy,
        tree: run.tree,
        error,
        world,
    })
}

impl RunReport {
    pub fn describe_key(&self, k: &StateKey) -> String {
        let cells = self.world.cells_of(k);
        match cells.as_slice() {
            [c] => format!("({},{})", c.0, c.1),
            [] => k.digest(),
            _ => format!("{} [{} cells]", k.digest(), cells.len()),
        }
    }

    pub fn summary_json(&self) -> serde_json::Value {
        serde_json::json!({
            "env": self.env,
            "variant": self.variant,
            "seed": self.seed,
            "verdict": self.verdict,
            "restarts": self.restarts,
            "thresholds": self.thresholds,
            "steps": self.steps,
            "episodes": self.episodes,
            "episodes_until_learned": self.episodes_until_learned,
            "key_states": self.key_states.iter().map(|k| self.describe_key(k)).collect::<Vec<_>>(),
            "satisfying": self.tree.satisfying().iter()
                .map(|p| p.iter().map(|k| self.describe_key(k)).collect::<Vec<_>>())
                .collect::<Vec<_>>(),
            "tree_matches_ground_truth": self.tree_matches_ground_truth,
            "subgoal_accuracy": self.subgoal_accuracy,
            "labeling_accuracy": self.labeling_accuracy,
            "labeling": self.labeling.as_ref().map(Verdict::to_json),
            "error": self.error,
        })
    }
}

fn curve_csv(header: &str, points: &[CurvePoint]) -> String {
    let mut s = format!("steps,{header}\n");
    for p in points {
        let _ = writeln!(s, "{},{:.6}", p.steps, p.value);
    }
    s
}

/// Writes curves, per-node importance grids, the tree and the verdict.
pub fn emit_metrics(report: &RunReport, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let mut put = |name: &str, body: String| -> Result<()> {
        let p = dir.join(name);
        fs::write(&p, body)?;
        written.push(p);
        Ok(())
    };
    put("success_curve.csv", curve_csv("success_rate", &report.success_curve))?;
    put("accuracy_curve.csv", curve_csv("subgoal_accuracy", &report.accuracy_curve))?;

    let spec = report.world.spec();
    for (i, t) in report.tables.iter().enumerate() {
        let mut s = String::from("x,y,logit\n");
        for c in spec.free_cells() {
            let _ = writeln!(s, "{},{},{:.6}", c.0, c.1, t.discovery.table.get(report.world.key_at(c)));
        }
        put(&format!("importance_grid_{i:03}.csv"), s)?;
        let mut csv = Vec::new();
        t.discovery.write_csv(&mut csv)?;
        put(
            &format!("importance_table_{i:03}.csv"),
            String::from_utf8(csv).expect("ascii csv"),
        )?;
    }
    put("tree.dot", report.tree.to_dot(&|k| report.describe_key(k)))?;
    let verdict = report
        .labeling
        .as_ref()
        .map_or_else(|| serde_json::json!({"verdict": "none", "assignments": [], "enumerated_count": 0}), Verdict::to_json);
    put("verdict.json", serde_json::to_string_pretty(&verdict)? + "\n")?;
    put("satisfying.json", serde_json::to_string(&report.tree.satisfying_json())? + "\n")?;
    put("key_states.json", serde_json::to_string(&report.key_states)? + "\n")?;
    put("report.json", serde_json::to_string_pretty(&report.summary_json())? + "\n")?;
    let mut log = Vec::new();
    for r in &report.explore_log {
        r.write_jsonl(&mut log)?;
    }
    put("explore_log.jsonl", String::from_utf8(log).expect("json"))?;
    Ok(written)
}

/// Working-node order of a finished tree, for inspection.
pub fn node_paths(tree: &SubgoalTree) -> BTreeMap<NodeId, Vec<StateKey>> {
    (0..tree.len()).map(|i| (i, tree.path_of(i).unwrap_or_default())).collect()
}
