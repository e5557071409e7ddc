//! Trajectory collection with a tabular epsilon-greedy learner whose rewards
//! are shaped toward the working node's path.

use std::collections::HashMap;
use std::io::Write;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gridworld::{Action, World};
use crate::trajectory::{conditioned_on, Buffers, StateKey, Trajectory};

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExplorerConfig {
    pub epsilon: f64,
    pub alpha: f64,
    pub gamma: f64,
    pub aux_reward: f64,
    pub terminal_reward: f64,
    /// Episodes allowed per explore call.
    pub episode_cap: usize,
    /// Positives requested per incremental explore call.
    pub batch: usize,
}

impl Default for ExplorerConfig {
    fn default() -> Self {
        ExplorerConfig {
            epsilon: 0.5,
            alpha: 0.05,
            gamma: 0.95,
            aux_reward: 0.1,
            terminal_reward: 1.0,
            episode_cap: 50_000,
            batch: 20,
        }
    }
}

impl ExplorerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.epsilon) {
            return Err(Error::Config(format!("epsilon {} outside [0, 1]", self.epsilon)));
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::Config(format!("alpha {} outside (0, 1]", self.alpha)));
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(Error::Config(format!("discount {} outside [0, 1)", self.gamma)));
        }
        if self.aux_reward < 0.0 || self.episode_cap == 0 || self.batch == 0 {
            return Err(Error::Config("explorer reward, cap and batch must be positive".into()));
        }
        Ok(())
    }
}

/// Per step, how many path elements have been matched in order.
pub fn progress(keys: &[StateKey], path: &[StateKey]) -> Vec<usize> {
    let mut p = 0;
    keys.iter()
        .map(|k| {
            if p < path.len() && *k == path[p] {
                p += 1;
            }
            p
        })
        .collect()
}

/// Reward for each transition: `aux` at in-order first visits of path
/// elements until one is first visited out of order, plus `terminal` on
/// the final step of a positive.
pub fn shaped_rewards(traj: &Trajectory, path: &[StateKey], aux: f64, terminal: f64) -> Vec<f64> {
    let mut rewards = vec![0.0; traj.steps()];
    let mut visited = vec![false; path.len()];
    let mut next = 0;
    let mut broken = false;
    for (t, k) in traj.keys.iter().enumerate() {
        for (j, pk) in path.iter().enumerate() {
            if visited[j] || pk != k {
                continue;
            }
            visited[j] = true;
            if j == next && !broken {
                next += 1;
                if t > 0 {
                    rewards[t - 1] += aux;
                }
            } else {
                broken = true;
            }
        }
    }
    if traj.label {
        if let Some(last) = rewards.last_mut() {
            *last += terminal;
        }
    }
    rewards
}

type Context = (StateKey, usize);

/// Action values over `(key, progress)` contexts.
#[derive(Clone, Debug)]
pub struct ShapedPolicy {
    q: HashMap<Context, [f64; 4]>,
    pub frozen: bool,
}

impl Default for ShapedPolicy {
    fn default() -> Self {
        Self::new()
    }
}

impl ShapedPolicy {
    pub fn new() -> Self {
        ShapedPolicy {
            q: HashMap::new(),
            frozen: false,
        }
    }

    pub fn values(&self, key: &StateKey, prog: usize) -> [f64; 4] {
        self.q.get(&(key.clone(), prog)).copied().unwrap_or([0.0; 4])
    }

    pub fn len(&self) -> usize {
        self.q.len()
    }

    pub fn is_empty(&self) -> bool {
        self.q.is_empty()
    }

    /// Greedy action with random tie-breaking.
    pub fn greedy<R: Rng + ?Sized>(&self, key: &StateKey, prog: usize, rng: &mut R) -> Action {
        let v = self.values(key, prog);
        let best = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let ties: Vec<usize> = (0..4).filter(|&a| v[a] == best).collect();
        Action::ALL[ties[rng.gen_range(0..ties.len())]]
    }

    pub fn act<R: Rng + ?Sized>(&self, key: &StateKey, prog: usize, epsilon: f64, rng: &mut R) -> Action {
        if rng.gen::<f64>() < epsilon {
            Action::ALL[rng.gen_range(0..4)]
        } else {
            self.greedy(key, prog, rng)
        }
    }

    /// One backward pass moving each visited context toward its discounted
    /// return. Returns rather than bootstrapped targets keep values honest
    /// when different histories share one context.
    pub fn update(&mut self, traj: &Trajectory, path: &[StateKey], rewards: &[f64], cfg: &ExplorerConfig) {
        if self.frozen {
            return;
        }
        let prog = progress(&traj.keys, path);
        let mut ret = 0.0;
        for t in (0..traj.steps()).rev() {
            ret = rewards[t] + cfg.gamma * ret;
            let ctx = (traj.keys[t].clone(), prog[t]);
            let a = traj.actions[t].index();
            let cur = self.q.get(&ctx).map_or(0.0, |v| v[a]);
            let updated = cur + cfg.alpha * (ret - cur);
            if updated != cur {
                self.q.entry(ctx).or_insert([0.0; 4])[a] = updated;
            }
        }
    }
}

pub fn policy_update(
    policy: &mut ShapedPolicy,
    traj: &Trajectory,
    path: &[StateKey],
    rewards: &[f64],
    cfg: &ExplorerConfig,
) -> Result<()> {
    if rewards.len() != traj.steps() {
        return Err(Error::Config(format!(
            "{} rewards for {} steps",
            rewards.len(),
            traj.steps()
        )));
    }
    policy.update(traj, path, rewards, cfg);
    Ok(())
}

/// Counts from one explore call.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct ExploreReport {
    pub path_len: usize,
    pub episodes: usize,
    pub positives: usize,
    pub conditioned_positives: usize,
    pub steps: u64,
}

impl ExploreReport {
    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<()> {
        serde_json::to_writer(&mut w, self)?;
        w.write_all(b"\n")?;
        Ok(())
    }
}

/// Episode runner holding the learner and its random stream.
#[derive(Clone, Debug)]
pub struct Explorer {
    pub world: Arc<World>,
    pub policy: ShapedPolicy,
    pub cfg: ExplorerConfig,
    /// Shaping toward the path; off for the flat learner.
    pub shaping: bool,
    rng: ChaCha8Rng,
}

impl Explorer {
    pub fn new(world: Arc<World>, cfg: ExplorerConfig, seed: u64) -> Self {
        Explorer {
            world,
            policy: ShapedPolicy::new(),
            cfg,
            shaping: true,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// One epsilon-greedy episode, learning from it unless frozen.
    pub fn episode(&mut self, path: &[StateKey], epsilon: f64) -> Result<Trajectory> {
        let seed = self.rng.gen();
        let (mut env, _) = self.world.reset(seed)?;
        let mut p = 0;
        loop {
            if p < path.len() && *env.key() == path[p] {
                p += 1;
            }
            let a = self.policy.act(env.key(), p, epsilon, &mut self.rng);
            if env.step_key(a)?.done {
                break;
            }
        }
        let traj = env.into_trajectory();
        let aux = if self.shaping { self.cfg.aux_reward } else { 0.0 };
        let rewards = shaped_rewards(&traj, path, aux, self.cfg.terminal_reward);
        self.policy.update(&traj, path, &rewards, &self.cfg);
        Ok(traj)
    }

    /// Collects episodes into `buffers` until `required` new positives
    /// conditioned on `path` arrive. `step_budget` is decremented and the call
    /// fails once it runs out.
    pub fn explore(
        &mut self,
        path: &[StateKey],
        required: usize,
        buffers: &mut Buffers,
        step_budget: &mut u64,
        total_budget: u64,
    ) -> Result<ExploreReport> {
        self.explore_with(path, required, buffers, step_budget, total_budget, &mut |_, _| {})
    }

    /// [`Explorer::explore`] with a hook called after every episode.
    pub fn explore_with(
        &mut self,
        path: &[StateKey],
        required: usize,
        buffers: &mut Buffers,
        step_budget: &mut u64,
        total_budget: u64,
        observe: &mut dyn FnMut(&Explorer, &Trajectory),
    ) -> Result<ExploreReport> {
        let mut report = ExploreReport {
            path_len: path.len(),
            ..Default::default()
        };
        while report.conditioned_positives < required {
            if report.episodes >= self.cfg.episode_cap {
                return Err(Error::ExploreCap {
                    episodes: report.episodes,
                    positives: report.conditioned_positives,
                    required,
                });
            }
            if *step_budget == 0 {
                return Err(Error::BudgetExhausted(total_budget));
            }
            let traj = self.episode(path, self.cfg.epsilon)?;
            let steps = traj.steps() as u64;
            *step_budget = step_budget.saturating_sub(steps);
            report.steps += steps;
            report.episodes += 1;
            if traj.label {
                report.positives += 1;
                if conditioned_on(&traj, path).is_some() {
                    report.conditioned_positives += 1;
                }
            }
            observe(self, &traj);
            buffers.push(traj);
        }
        Ok(report)
    }

    /// Success rate of greedy episodes on a separate random stream, without learning.
    pub fn evaluate(&self, path: &[StateKey], episodes: usize, seed: u64) -> Result<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut wins = 0;
        for _ in 0..episodes {
            let (mut env, _) = self.world.reset(rng.gen())?;
            let mut p = 0;
            loop {
                if p < path.len() && *env.key() == path[p] {
                    p += 1;
                }
                let a = self.policy.greedy(env.key(), p, &mut rng);
                if env.step_key(a)?.done {
                    break;
                }
            }
            wins += usize::from(env.label() == Some(true));
        }
        Ok(wins as f64 / episodes.max(1) as f64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn k(n: u8) -> StateKey {
        StateKey::from_bytes(vec![n])
    }

    fn traj(keys: &[u8], label: bool) -> Trajectory {
        Trajectory {
            keys: keys.iter().map(|&n| k(n)).collect(),
            actions: vec![Action::E; keys.len() - 1],
            label,
            truncated: !label,
        }
    }

    #[test]
    fn rewards_for_in_order_visits() {
        let t = traj(&[0, 1, 5, 2, 1, 2], false);
        let r = shaped_rewards(&t, &[k(1), k(2)], 0.1, 1.0);
        assert_eq!(r, vec![0.1, 0.0, 0.1, 0.0, 0.0]);
        let out_of_order = traj(&[0, 2, 1, 2], false);
        assert!(shaped_rewards(&out_of_order, &[k(1), k(2)], 0.1, 1.0).iter().all(|&x| x == 0.0));
        let neg = traj(&[0, 3, 4], false);
        assert!(shaped_rewards(&neg, &[], 0.1, 1.0).iter().all(|&x| x == 0.0));
        let pos = traj(&[0, 3, 4], true);
        assert_eq!(shaped_rewards(&pos, &[], 0.1, 1.0), vec![0.0, 1.0]);
    }

    #[test]
    fn zero_rewards_leave_the_table_empty() {
        let mut p = ShapedPolicy::new();
        let t = traj(&[0, 1, 2], false);
        policy_update(&mut p, &t, &[], &[0.0, 0.0], &ExplorerConfig::default()).unwrap();
        assert!(p.is_empty());
        assert!(policy_update(&mut p, &t, &[], &[0.0], &ExplorerConfig::default()).is_err());
    }

    #[test]
    fn rewarded_context_value_rises() {
        let mut p = ShapedPolicy::new();
        let t = traj(&[0, 1, 2], false);
        let cfg = ExplorerConfig::default();
        policy_update(&mut p, &t, &[k(2)], &[0.0, 0.1], &cfg).unwrap();
        assert!(p.values(&k(1), 0)[Action::E.index()] > 0.0);
    }

    #[test]
    fn progress_tracks_in_order_matches() {
        let keys: Vec<_> = [0u8, 1, 3, 1, 2].iter().map(|&n| k(n)).collect();
        assert_eq!(progress(&keys, &[k(1), k(2)]), vec![0, 1, 1, 1, 2]);
    }

    #[test]
    fn explore_collects_conditioned_positives() {
        let world = World::load("letter.task1").unwrap();
        let mut ex = Explorer::new(world, ExplorerConfig::default(), 3);
        let mut buf = Buffers::new();
        let mut budget = u64::MAX;
        let r = ex.explore(&[], 5, &mut buf, &mut budget, u64::MAX).unwrap();
        assert_eq!(r.conditioned_positives, 5);
        assert_eq!(buf.positives().len(), 5);
        assert_eq!(buf.len(), r.episodes);
    }

    #[test]
    fn sealed_subgoal_hits_the_cap() {
        let mut spec = crate::gridworld::EnvSpec::bundled("letter.task1").unwrap().unwrap();
        let a = (3, 1);
        for c in [(2, 1), (4, 1), (3, 0), (3, 2)] {
            spec.walls.insert(c);
        }
        assert!(spec.objects.contains_key(&a));
        let cfg = ExplorerConfig {
            episode_cap: 30,
            ..Default::default()
        };
        let mut ex = Explorer::new(World::new(spec), cfg, 0);
        let mut budget = u64::MAX;
        let err = ex.explore(&[], 1, &mut Buffers::new(), &mut budget, u64::MAX).unwrap_err();
        assert!(matches!(err, Error::ExploreCap { episodes: 30, .. }));
    }

    #[test]
    fn budget_is_enforced() {
        let world = World::load("letter.task1").unwrap();
        let mut ex = Explorer::new(world, ExplorerConfig::default(), 0);
        let mut budget = 0;
        let err = ex.explore(&[], 1, &mut Buffers::new(), &mut budget, 0).unwrap_err();
        assert!(matches!(err, Error::BudgetExhausted(0)));
    }
}
