//! Grid environments that hide their labeling function and report only a
//! binary task label when the episode ends.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tl::{Alphabet, Formula, Fsm, Symbol, TraceRun};
use crate::trajectory::{canonical_key, StateKey, Trajectory};

/// `(x, y)`, with `y` growing northwards.
pub type Cell = (usize, usize);

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Action {
    N,
    S,
    E,
    W,
}

impl Action {
    pub const ALL: [Action; 4] = [Action::N, Action::S, Action::E, Action::W];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_char(c: char) -> Option<Action> {
        match c.to_ascii_uppercase() {
            'N' => Some(Action::N),
            'S' => Some(Action::S),
            'E' => Some(Action::E),
            'W' => Some(Action::W),
            _ => None,
        }
    }

    pub fn parse_seq(text: &str) -> Result<Vec<Action>> {
        text.chars()
            .filter(|c| !c.is_whitespace() && *c != ',')
            .map(|c| Action::from_char(c).ok_or_else(|| Error::Config(format!("unknown action `{c}`"))))
            .collect()
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ObservationMode {
    Full,
    Partial { radius: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Start {
    Fixed(Cell),
    Random,
}

#[derive(Clone, Debug)]
pub struct EnvSpec {
    pub name: String,
    pub note: Option<String>,
    pub width: usize,
    pub height: usize,
    pub walls: BTreeSet<Cell>,
    pub objects: BTreeMap<Cell, Symbol>,
    pub observation: ObservationMode,
    pub horizon: usize,
    pub task: Formula,
    /// Task alphabet; may be a strict subset of the placed objects.
    pub alphabet: Alphabet,
    pub start: Start,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSpec {
    #[serde(default)]
    name: Option<String>,
    #[serde(default)]
    note: Option<String>,
    width: usize,
    height: usize,
    #[serde(default)]
    walls: Vec<[usize; 2]>,
    #[serde(default)]
    objects: BTreeMap<String, [usize; 2]>,
    #[serde(default)]
    observation: Option<RawObservation>,
    horizon: usize,
    task: String,
    #[serde(default)]
    alphabet: Option<Vec<String>>,
    #[serde(default)]
    start: Option<serde_json::Value>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawObservation {
    mode: String,
    #[serde(default)]
    radius: Option<usize>,
}

const BUNDLED: &[(&str, &str)] = &[
    ("letter.task1", include_str!("../assets/envs/letter.task1.json")),
    ("letter.task2", include_str!("../assets/envs/letter.task2.json")),
    ("letter.task3", include_str!("../assets/envs/letter.task3.json")),
    ("office.task1", include_str!("../assets/envs/office.task1.json")),
    ("office.task2", include_str!("../assets/envs/office.task2.json")),
    ("office.task3", include_str!("../assets/envs/office.task3.json")),
    ("craft.task1", include_str!("../assets/envs/craft.task1.json")),
    ("craft.task2", include_str!("../assets/envs/craft.task2.json")),
    ("craft.task3", include_str!("../assets/envs/craft.task3.json")),
    ("motivating", include_str!("../assets/envs/motivating.json")),
    ("bottleneck", include_str!("../assets/envs/bottleneck.json")),
    ("symmetric", include_str!("../assets/envs/symmetric.json")),
];

/// The nine benchmark tasks.
pub const BENCHMARK_TASKS: [&str; 9] = [
    "letter.task1",
    "letter.task2",
    "letter.task3",
    "office.task1",
    "office.task2",
    "office.task3",
    "craft.task1",
    "craft.task2",
    "craft.task3",
];

pub fn bundled_names() -> impl Iterator<Item = &'static str> {
    BUNDLED.iter().map(|(n, _)| *n)
}

impl EnvSpec {
    pub fn bundled(name: &str) -> Option<Result<EnvSpec>> {
        BUNDLED
            .iter()
            .find(|(n, _)| *n == name)
            .map(|(n, text)| EnvSpec::from_json(text, n))
    }

    /// A bundled name, else a path to a JSON spec file.
    pub fn load(name_or_path: &str) -> Result<EnvSpec> {
        if let Some(spec) = EnvSpec::bundled(name_or_path) {
            return spec;
        }
        let path = Path::new(name_or_path);
        let text = std::fs::read_to_string(path)?;
        let stem = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| name_or_path.to_string());
        EnvSpec::from_json(&text, &stem)
    }

    pub fn from_json(text: &str, default_name: &str) -> Result<EnvSpec> {
        let raw: RawSpec = serde_json::from_str(text).map_err(|e| Error::spec("$", e.to_string()))?;
        let width = raw.width;
        let height = raw.height;
        if width == 0 || height == 0 {
            return Err(Error::spec("width", "grid dimensions must be positive"));
        }
        let in_bounds = |c: [usize; 2]| c[0] < width && c[1] < height;

        let mut walls = BTreeSet::new();
        for (i, w) in raw.walls.iter().enumerate() {
            if !in_bounds(*w) {
                return Err(Error::spec(format!("walls[{i}]"), "cell out of bounds"));
            }
            walls.insert((w[0], w[1]));
        }

        let mut objects = BTreeMap::new();
        for (name, cell) in &raw.objects {
            let path = format!("objects.{name}");
            let mut chars = name.chars();
            let sym = match (chars.next().and_then(Symbol::new), chars.next()) {
                (Some(s), None) => s,
                _ => return Err(Error::spec(path, "object names are single ASCII letters")),
            };
            if !in_bounds(*cell) {
                return Err(Error::spec(path, "cell out of bounds"));
            }
            let c = (cell[0], cell[1]);
            if walls.contains(&c) {
                return Err(Error::spec(path, "object placed on a wall"));
            }
            if let Some(other) = objects.insert(c, sym) {
                return Err(Error::spec(path, format!("cell already holds `{other}`")));
            }
        }
        let placed: Alphabet = objects.values().copied().collect();

        let task_syms = Formula::parse_open(&raw.task)
            .map_err(|e| Error::spec("task", e.to_string()))?
            .symbols();
        let alphabet: Alphabet = match &raw.alphabet {
            Some(list) => {
                let mut set = Alphabet::new();
                for (i, s) in list.iter().enumerate() {
                    let mut chars = s.chars();
                    match (chars.next().and_then(Symbol::new), chars.next()) {
                        (Some(sym), None) => {
                            set.insert(sym);
                        }
                        _ => return Err(Error::spec(format!("alphabet[{i}]"), "expected a single letter")),
                    }
                }
                set
            }
            None => task_syms,
        };
        let task = Formula::parse(&raw.task, &alphabet).map_err(|e| Error::spec("task", e.to_string()))?;
        if let Some(missing) = alphabet.iter().find(|s| !placed.contains(s)) {
            return Err(Error::spec("alphabet", format!("symbol `{missing}` is not placed on the map")));
        }

        let observation = match &raw.observation {
            None => ObservationMode::Full,
            Some(o) => match o.mode.as_str() {
                "full" => ObservationMode::Full,
                "partial" => {
                    let radius = o.radius.unwrap_or(2);
                    if radius == 0 {
                        return Err(Error::spec("observation.radius", "radius must be at least 1"));
                    }
                    ObservationMode::Partial { radius }
                }
                other => return Err(Error::spec("observation.mode", format!("unknown mode `{other}`"))),
            },
        };
        if raw.horizon == 0 {
            return Err(Error::spec("horizon", "horizon must be at least 1"));
        }

        let start = match &raw.start {
            None => Start::Fixed((0, 0)),
            Some(serde_json::Value::String(s)) if s == "random" => Start::Random,
            Some(v) => {
                let c: [usize; 2] = serde_json::from_value(v.clone())
                    .map_err(|_| Error::spec("start", "expected [x, y] or \"random\""))?;
                if !in_bounds(c) {
                    return Err(Error::spec("start", "cell out of bounds"));
                }
                if walls.contains(&(c[0], c[1])) {
                    return Err(Error::spec("start", "start cell is a wall"));
                }
                Start::Fixed((c[0], c[1]))
            }
        };

        Ok(EnvSpec {
            name: raw.name.unwrap_or_else(|| default_name.to_string()),
            note: raw.note,
            width,
            height,
            walls,
            objects,
            observation,
            horizon: raw.horizon,
            task,
            alphabet,
            start,
        })
    }

    pub fn to_json(&self) -> serde_json::Value {
        let objects: BTreeMap<String, [usize; 2]> = self
            .objects
            .iter()
            .map(|(c, s)| (s.to_string(), [c.0, c.1]))
            .collect();
        let observation = match self.observation {
            ObservationMode::Full => serde_json::json!({"mode": "full"}),
            ObservationMode::Partial { radius } => serde_json::json!({"mode": "partial", "radius": radius}),
        };
        let start = match self.start {
            Start::Fixed(c) => serde_json::json!([c.0, c.1]),
            Start::Random => serde_json::json!("random"),
        };
        serde_json::json!({
            "name": self.name,
            "width": self.width,
            "height": self.height,
            "walls": self.walls.iter().map(|c| [c.0, c.1]).collect::<Vec<_>>(),
            "objects": objects,
            "observation": observation,
            "horizon": self.horizon,
            "task": self.task.to_string(),
            "alphabet": self.alphabet.iter().map(|s| s.to_string()).collect::<Vec<_>>(),
            "start": start,
        })
    }

    /// Object kinds in channel order, then wall, then agent.
    pub fn channel_names(&self) -> Vec<String> {
        let mut names: Vec<String> = self.kinds().iter().map(|s| s.to_string()).collect();
        if self.has_wall_channel() {
            names.push("wall".into());
        }
        names.push("agent".into());
        names
    }

    fn kinds(&self) -> Vec<Symbol> {
        let set: BTreeSet<Symbol> = self.objects.values().copied().collect();
        set.into_iter().collect()
    }

    fn has_wall_channel(&self) -> bool {
        !self.walls.is_empty() || matches!(self.observation, ObservationMode::Partial { .. })
    }

    pub fn is_free(&self, c: Cell) -> bool {
        c.0 < self.width && c.1 < self.height && !self.walls.contains(&c)
    }

    pub fn free_cells(&self) -> Vec<Cell> {
        let mut out = Vec::new();
        for y in 0..self.height {
            for x in 0..self.width {
                if self.is_free((x, y)) {
                    out.push((x, y));
                }
            }
        }
        out
    }

    pub fn move_from(&self, c: Cell, a: Action) -> Cell {
        let next = match a {
            Action::N => (c.0, c.1 + 1),
            Action::S => (c.0, c.1.wrapping_sub(1)),
            Action::E => (c.0 + 1, c.1),
            Action::W => (c.0.wrapping_sub(1), c.1),
        };
        if self.is_free(next) {
            next
        } else {
            c
        }
    }

    /// The hidden label of a cell restricted to the task alphabet.
    pub fn label_of(&self, c: Cell) -> Option<Symbol> {
        self.objects.get(&c).copied().filter(|s| self.alphabet.contains(s))
    }

    pub fn observe(&self, agent: Cell) -> Observation {
        let kinds = self.kinds();
        let wall_ch = self.has_wall_channel().then_some(kinds.len());
        let channels = kinds.len() + usize::from(wall_ch.is_some()) + 1;
        let agent_ch = channels - 1;
        let kind_ch = |s: Symbol| kinds.binary_search(&s).expect("placed kind");
        match self.observation {
            ObservationMode::Full => {
                let mut obs = Observation::empty(self.width, self.height, channels);
                for y in 0..self.height {
                    for x in 0..self.width {
                        let c = (x, y);
                        if let Some(&s) = self.objects.get(&c) {
                            obs.set(x, y, kind_ch(s));
                        }
                        if let Some(w) = wall_ch {
                            if self.walls.contains(&c) {
                                obs.set(x, y, w);
                            }
                        }
                    }
                }
                obs.set(agent.0, agent.1, agent_ch);
                obs
            }
            ObservationMode::Partial { radius } => {
                let side = 2 * radius + 1;
                let wall = wall_ch.expect("partial views carry a wall channel");
                let mut obs = Observation::empty(side, side, channels);
                for vy in 0..side {
                    for vx in 0..side {
                        let x = agent.0 as isize + vx as isize - radius as isize;
                        let y = agent.1 as isize + vy as isize - radius as isize;
                        if x < 0 || y < 0 || x as usize >= self.width || y as usize >= self.height {
                            obs.set(vx, vy, wall);
                            continue;
                        }
                        let c = (x as usize, y as usize);
                        if self.walls.contains(&c) {
                            obs.set(vx, vy, wall);
                        }
                        if let Some(&s) = self.objects.get(&c) {
                            obs.set(vx, vy, kind_ch(s));
                        }
                    }
                }
                obs.set(radius, radius, agent_ch);
                obs
            }
        }
    }
}

/// A binary tensor indexed `(x, y, channel)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Observation {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub bits: Vec<bool>,
}

impl Observation {
    pub fn empty(width: usize, height: usize, channels: usize) -> Self {
        Observation {
            width,
            height,
            channels,
            bits: vec![false; width * height * channels],
        }
    }

    fn idx(&self, x: usize, y: usize, c: usize) -> usize {
        (y * self.width + x) * self.channels + c
    }

    pub fn get(&self, x: usize, y: usize, c: usize) -> bool {
        self.bits[self.idx(x, y, c)]
    }

    pub fn set(&mut self, x: usize, y: usize, c: usize) {
        let i = self.idx(x, y, c);
        self.bits[i] = true;
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.width, self.height, self.channels)
    }
}

/// Hidden ground truth, for evaluation only.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GroundTruth {
    /// Every placed object, task symbol or not.
    pub labeling: BTreeMap<Cell, Symbol>,
    /// Cells of the task symbols.
    pub subgoal_cells: BTreeMap<Symbol, Cell>,
    /// Keys observed when standing on each task symbol.
    pub subgoal_keys: BTreeMap<Symbol, StateKey>,
}

/// A validated spec with its compiled task machine and per-cell keys.
#[derive(Debug)]
pub struct World {
    spec: EnvSpec,
    fsm: Fsm,
    keys: Vec<Option<StateKey>>,
}

impl World {
    pub fn new(spec: EnvSpec) -> Arc<World> {
        let fsm = Fsm::compile(&spec.task);
        let mut keys = vec![None; spec.width * spec.height];
        for c in spec.free_cells() {
            keys[c.1 * spec.width + c.0] = Some(canonical_key(&spec.observe(c)));
        }
        Arc::new(World { spec, fsm, keys })
    }

    pub fn load(name_or_path: &str) -> Result<Arc<World>> {
        Ok(World::new(EnvSpec::load(name_or_path)?))
    }

    pub fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    pub fn fsm(&self) -> &Fsm {
        &self.fsm
    }

    /// Key of the observation with the agent standing on a free cell.
    pub fn key_at(&self, c: Cell) -> &StateKey {
        self.keys[c.1 * self.spec.width + c.0]
            .as_ref()
            .expect("keys exist for free cells")
    }

    /// Free cells whose observation has this key.
    pub fn cells_of(&self, key: &StateKey) -> Vec<Cell> {
        self.spec.free_cells().into_iter().filter(|&c| self.key_at(c) == key).collect()
    }

    pub fn ground_truth(&self) -> GroundTruth {
        let subgoal_cells: BTreeMap<Symbol, Cell> = self
            .spec
            .objects
            .iter()
            .filter(|(_, s)| self.spec.alphabet.contains(s))
            .map(|(c, s)| (*s, *c))
            .collect();
        let subgoal_keys = subgoal_cells.iter().map(|(s, c)| (*s, self.key_at(*c).clone())).collect();
        GroundTruth {
            labeling: self.spec.objects.clone(),
            subgoal_cells,
            subgoal_keys,
        }
    }

    pub fn reset(self: &Arc<Self>, seed: u64) -> Result<(Env, Observation)> {
        let pos = match self.spec.start {
            Start::Fixed(c) if self.spec.is_free(c) => c,
            Start::Fixed(_) => return Err(Error::NoFreeStart),
            Start::Random => {
                let free = self.spec.free_cells();
                if free.is_empty() {
                    return Err(Error::NoFreeStart);
                }
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                free[rng.gen_range(0..free.len())]
            }
        };
        let first = self.spec.label_of(pos);
        let env = Env {
            world: Arc::clone(self),
            pos,
            run: TraceRun::new(&self.fsm, first),
            labels: vec![first],
            keys: vec![self.key_at(pos).clone()],
            actions: Vec::new(),
            done: false,
            label: None,
        };
        Ok((env, self.spec.observe(pos)))
    }

    /// Runs a recorded action sequence from reset.
    pub fn replay(self: &Arc<Self>, seed: u64, actions: &[Action]) -> Result<Env> {
        let (mut env, _) = self.reset(seed)?;
        for &a in actions {
            env.step_key(a)?;
        }
        Ok(env)
    }
}

#[derive(Clone, Debug)]
pub struct StepOutcome {
    pub key: StateKey,
    pub done: bool,
    pub label: Option<bool>,
}

/// One episode; single-threaded.
#[derive(Clone, Debug)]
pub struct Env {
    world: Arc<World>,
    pos: Cell,
    run: TraceRun,
    labels: Vec<Option<Symbol>>,
    keys: Vec<StateKey>,
    actions: Vec<Action>,
    done: bool,
    label: Option<bool>,
}

impl Env {
    pub fn world(&self) -> &Arc<World> {
        &self.world
    }

    pub fn position(&self) -> Cell {
        self.pos
    }

    pub fn key(&self) -> &StateKey {
        self.keys.last().expect("nonempty")
    }

    pub fn steps(&self) -> usize {
        self.actions.len()
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    pub fn label(&self) -> Option<bool> {
        self.label
    }

    /// Ground-truth label trace so far; evaluation only.
    pub fn label_trace(&self) -> &[Option<Symbol>] {
        &self.labels
    }

    pub fn step(&mut self, a: Action) -> Result<(Observation, bool, Option<bool>)> {
        let out = self.step_key(a)?;
        Ok((self.world.spec.observe(self.pos), out.done, out.label))
    }

    /// Like [`Env::step`] but returns the key instead of the full observation.
    pub fn step_key(&mut self, a: Action) -> Result<StepOutcome> {
        if self.done {
            return Err(Error::EpisodeDone);
        }
        let spec = &self.world.spec;
        self.pos = spec.move_from(self.pos, a);
        let sym = spec.label_of(self.pos);
        self.labels.push(sym);
        self.actions.push(a);
        let key = self.world.key_at(self.pos).clone();
        self.keys.push(key.clone());
        if self.run.push(&self.world.fsm, sym) {
            self.done = true;
            self.label = Some(true);
        } else if self.actions.len() >= spec.horizon {
            self.done = true;
            self.label = Some(false);
        }
        Ok(StepOutcome {
            key,
            done: self.done,
            label: self.label,
        })
    }

    /// The episode so far as a trajectory; label is false until acceptance.
    pub fn trajectory(&self) -> Trajectory {
        Trajectory {
            keys: self.keys.clone(),
            actions: self.actions.clone(),
            label: self.label == Some(true),
            truncated: self.label == Some(false),
        }
    }

    pub fn into_trajectory(self) -> Trajectory {
        let label = self.label == Some(true);
        let truncated = self.label == Some(false);
        Trajectory {
            keys: self.keys,
            actions: self.actions,
            label,
            truncated,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    fn world(name: &str) -> Arc<World> {
        World::load(name).unwrap()
    }

    fn walk(env: &mut Env, path: &[Action]) -> StepOutcome {
        let mut last = None;
        for &a in path {
            last = Some(env.step_key(a).unwrap());
        }
        last.unwrap()
    }

    fn moves(from: Cell, to: Cell) -> Vec<Action> {
        let mut v = Vec::new();
        let (mut x, mut y) = from;
        while x < to.0 {
            v.push(Action::E);
            x += 1;
        }
        while x > to.0 {
            v.push(Action::W);
            x -= 1;
        }
        while y < to.1 {
            v.push(Action::N);
            y += 1;
        }
        while y > to.1 {
            v.push(Action::S);
            y -= 1;
        }
        v
    }

    #[test]
    fn all_bundled_specs_load() {
        for name in bundled_names() {
            let spec = EnvSpec::bundled(name).unwrap().unwrap_or_else(|e| panic!("{name}: {e}"));
            assert!(spec.note.is_some(), "{name} should say it is a reconstruction");
        }
    }

    #[test]
    fn observation_shapes() {
        let w = world("letter.task1");
        let (_, obs) = w.reset(0).unwrap();
        let k = w.spec().objects.len();
        assert_eq!(obs.shape(), (10, 10, k + 1));
        let (_, obs) = world("office.task1").reset(0).unwrap();
        assert_eq!(obs.shape(), (5, 5, 7));
        let (_, obs) = world("craft.task1").reset(0).unwrap();
        assert_eq!(obs.shape(), (5, 5, 9));
        let office = EnvSpec::bundled("office.task2").unwrap().unwrap();
        assert_eq!((office.height, office.width), (19, 25));
        let craft = EnvSpec::bundled("craft.task1").unwrap().unwrap();
        assert_eq!((craft.width, craft.height), (20, 20));
    }

    #[test]
    fn full_observation_has_one_agent_bit_and_one_object_per_cell() {
        let w = world("letter.task1");
        let spec = w.spec();
        let agent = spec.channel_names().len() - 1;
        for c in spec.free_cells().into_iter().step_by(7) {
            let obs = spec.observe(c);
            let mut agents = 0;
            for y in 0..obs.height {
                for x in 0..obs.width {
                    agents += usize::from(obs.get(x, y, agent));
                    let objs = (0..agent).filter(|&ch| obs.get(x, y, ch)).count();
                    assert!(objs <= 1);
                }
            }
            assert_eq!(agents, 1);
            assert!(obs.get(c.0, c.1, agent));
        }
    }

    #[test]
    fn full_keys_are_in_bijection_with_cells() {
        let w = world("letter.task1");
        let cells = w.spec().free_cells();
        let keys: HashSet<_> = cells.iter().map(|&c| w.key_at(c).clone()).collect();
        assert_eq!(keys.len(), cells.len());
    }

    #[test]
    fn partial_views_depend_only_on_the_neighbourhood() {
        let w = world("office.task1");
        let spec = w.spec();
        // two room interiors far from any object look alike
        let a = spec.observe((8, 8));
        let b = spec.observe((14, 8));
        let near_objects = |c: Cell| spec.objects.keys().any(|o| o.0.abs_diff(c.0) <= 2 && o.1.abs_diff(c.1) <= 2);
        if !near_objects((8, 8)) && !near_objects((14, 8)) {
            assert_eq!(a, b);
        }
        // out-of-bounds reads as wall
        let corner = spec.observe((1, 1));
        let wall = spec.channel_names().iter().position(|n| n == "wall").unwrap();
        assert!(corner.get(0, 0, wall));
    }

    #[test]
    fn ground_truth_positions() {
        let gt = world("letter.task1").ground_truth();
        let s = |c| Symbol::new(c).unwrap();
        assert_eq!(gt.subgoal_cells[&s('a')], (3, 1));
        assert_eq!(gt.subgoal_cells[&s('b')], (5, 2));
        assert_eq!(gt.subgoal_cells[&s('c')], (7, 7));
        let gt = world("office.task1").ground_truth();
        assert_eq!(gt.subgoal_cells[&s('c')], (20, 14));
        assert_eq!(gt.subgoal_cells[&s('o')], (14, 2));
        assert_eq!(gt.subgoal_cells[&s('p')], (3, 14));
    }

    #[test]
    fn empty_object_spec_has_empty_ground_truth() {
        let mut spec = EnvSpec::bundled("letter.task1").unwrap().unwrap();
        spec.objects.clear();
        spec.alphabet.clear();
        let gt = World::new(spec).ground_truth();
        assert!(gt.labeling.is_empty() && gt.subgoal_cells.is_empty());
    }

    #[test]
    fn in_order_visit_is_labelled_positive_on_the_last_subgoal() {
        let w = world("letter.task1");
        let (mut env, _) = w.reset(0).unwrap();
        walk(&mut env, &moves((0, 0), (3, 1)));
        walk(&mut env, &moves((3, 1), (5, 2)));
        let path = moves((5, 2), (7, 7));
        let (last, init) = path.split_last().unwrap();
        let o = walk(&mut env, init);
        assert!(!o.done);
        let o = env.step_key(*last).unwrap();
        assert!(o.done);
        assert_eq!(o.label, Some(true));
        assert!(matches!(env.step_key(Action::N), Err(Error::EpisodeDone)));
        let t = env.trajectory();
        assert!(t.label && !t.truncated);
        assert!(w.spec().task.satisfies(env.label_trace()));
    }

    #[test]
    fn motivating_layout_accepts_at_the_diamond() {
        let w = world("motivating");
        let (mut env, _) = w.reset(0).unwrap();
        let start = env.position();
        walk(&mut env, &moves(start, (0, 9)));
        walk(&mut env, &moves((0, 9), (3, 7)));
        let o = walk(&mut env, &moves((3, 7), (9, 9)));
        assert_eq!((o.done, o.label), (true, Some(true)));
        assert_eq!(env.position(), (9, 9));
    }

    #[test]
    fn horizon_gives_negative() {
        let w = world("letter.task1");
        let (mut env, _) = w.reset(0).unwrap();
        let h = w.spec().horizon;
        for i in 0..h {
            let o = env.step_key(if i % 2 == 0 { Action::W } else { Action::S }).unwrap();
            assert_eq!(o.done, i + 1 == h);
        }
        assert_eq!(env.label(), Some(false));
        assert!(env.trajectory().truncated);
    }

    #[test]
    fn walls_block_movement() {
        let w = world("office.task1");
        let spec = w.spec();
        // (1,1) sits in the south-west room; its west and south are walls
        assert_eq!(spec.move_from((1, 1), Action::W), (1, 1));
        assert_eq!(spec.move_from((1, 1), Action::S), (1, 1));
        assert_eq!(spec.move_from((1, 1), Action::N), (1, 2));
    }

    #[test]
    fn replay_is_deterministic() {
        let w = world("letter.task2");
        let acts = Action::parse_seq("EENNNENWWSSEEEENNNNNN").unwrap();
        let a = w.replay(3, &acts).unwrap().into_trajectory();
        let b = w.replay(3, &acts).unwrap().into_trajectory();
        assert_eq!(a, b);
    }

    #[test]
    fn no_free_start() {
        let mut spec = EnvSpec::bundled("letter.task1").unwrap().unwrap();
        spec.objects.clear();
        spec.alphabet.clear();
        for y in 0..spec.height {
            for x in 0..spec.width {
                spec.walls.insert((x, y));
            }
        }
        spec.start = Start::Random;
        assert!(matches!(World::new(spec.clone()).reset(0), Err(Error::NoFreeStart)));
        spec.start = Start::Fixed((0, 0));
        assert!(matches!(World::new(spec).reset(0), Err(Error::NoFreeStart)));
    }

    #[test]
    fn spec_errors_name_the_field() {
        let bad = r#"{"width":3,"height":3,"walls":[[1,1]],"objects":{"a":[1,1]},"horizon":5,"task":"a"}"#;
        match EnvSpec::from_json(bad, "t") {
            Err(Error::Spec { path, .. }) => assert_eq!(path, "objects.a"),
            other => panic!("{other:?}"),
        }
        let bad = r#"{"width":3,"height":3,"objects":{"a":[1,1]},"horizon":0,"task":"a"}"#;
        assert!(matches!(EnvSpec::from_json(bad, "t"), Err(Error::Spec { path, .. }) if path == "horizon"));
        let bad = r#"{"width":3,"height":3,"objects":{"a":[1,1]},"horizon":4,"task":"a;q"}"#;
        assert!(matches!(EnvSpec::from_json(bad, "t"), Err(Error::Spec { path, .. }) if path == "alphabet"));
        let bad = r#"{"width":3,"height":3,"objects":{"a":[1,1]},"horizon":4,"task":"a","observation":{"mode":"partial","radius":0}}"#;
        assert!(matches!(EnvSpec::from_json(bad, "t"), Err(Error::Spec { path, .. }) if path == "observation.radius"));
    }

    #[test]
    fn spec_json_round_trip() {
        let spec = EnvSpec::bundled("craft.task2").unwrap().unwrap();
        let text = spec.to_json().to_string();
        let back = EnvSpec::from_json(&text, "x").unwrap();
        assert_eq!(back.walls, spec.walls);
        assert_eq!(back.objects, spec.objects);
        assert_eq!(back.task, spec.task);
        assert_eq!(back.observation, spec.observation);
    }
}
