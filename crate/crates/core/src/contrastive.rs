//! Contrastive discovery of the next key state.

use std::collections::{BTreeMap, HashMap};
use std::io::Write;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trajectory::{fr_preprocess, raw_suffix, FrTrace, StateKey, Trajectory};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    /// Geometric per-state sampling over first-visit traces.
    Proposed,
    /// Whole-trajectory ratio with one positive and one negative.
    ConventionalEq2,
    /// Proposed sampling over the raw suffix, repeats kept.
    NoFrAblation,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ContrastiveConfig {
    pub iterations: usize,
    pub batch: usize,
    pub lr: f64,
    pub gamma: f64,
    pub seed: u64,
    pub objective: Objective,
}

impl Default for ContrastiveConfig {
    fn default() -> Self {
        ContrastiveConfig {
            iterations: 70_000,
            batch: 64,
            lr: 1e-4,
            gamma: 0.9,
            seed: 0,
            objective: Objective::Proposed,
        }
    }
}

impl ContrastiveConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 || self.batch == 0 {
            return Err(Error::Config("iterations and batch must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(Error::Config(format!("sampling discount {} outside [0, 1)", self.gamma)));
        }
        if !(self.lr > 0.0) || !self.lr.is_finite() {
            return Err(Error::Config(format!("learning rate {} must be positive", self.lr)));
        }
        Ok(())
    }
}

/// Logits `f` over keys; unseen keys read as 0.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ImportanceTable {
    logits: BTreeMap<StateKey, f64>,
}

impl ImportanceTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, k: &StateKey) -> f64 {
        self.logits.get(k).copied().unwrap_or(0.0)
    }

    pub fn set(&mut self, k: StateKey, v: f64) {
        self.logits.insert(k, v);
    }

    pub fn add(&mut self, k: &StateKey, delta: f64) {
        *self.logits.entry(k.clone()).or_insert(0.0) += delta;
    }

    pub fn iter(&self) -> impl Iterator<Item = (&StateKey, f64)> {
        self.logits.iter().map(|(k, v)| (k, *v))
    }

    pub fn len(&self) -> usize {
        self.logits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.logits.is_empty()
    }

    /// Adds `c` to every stored logit.
    pub fn shift(&mut self, c: f64) {
        for v in self.logits.values_mut() {
            *v += c;
        }
    }
}

/// An index in `[0, len)` drawn from `Geom(1 - gamma)` on `{0, 1, ...}`,
/// redrawn when too large and falling back to uniform.
pub fn sample_geometric<R: Rng + ?Sized>(gamma: f64, len: usize, rng: &mut R) -> usize {
    assert!(len >= 1, "cannot sample from an empty trace");
    if gamma <= 0.0 {
        return 0;
    }
    Geometric::new(gamma).draw_truncated(len, rng)
}

/// Failures before the first success with success probability `1 - gamma`,
/// by inversion.
#[derive(Clone, Copy, Debug)]
struct Geometric {
    ln_gamma: f64,
}

impl Geometric {
    fn new(gamma: f64) -> Self {
        assert!(gamma > 0.0 && gamma < 1.0, "gamma in (0, 1)");
        Geometric { ln_gamma: gamma.ln() }
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        // 1 - u lies in (0, 1], so the log is finite
        ((1.0 - rng.gen::<f64>()).ln() / self.ln_gamma).floor()
    }

    fn draw_truncated<R: Rng + ?Sized>(&self, len: usize, rng: &mut R) -> usize {
        for _ in 0..32 {
            let t = self.sample(rng);
            if t < len as f64 {
                return t as usize;
            }
        }
        rng.gen_range(0..len)
    }
}

fn logsumexp(xs: impl Iterator<Item = f64> + Clone) -> f64 {
    let m = xs.clone().fold(f64::NEG_INFINITY, f64::max);
    m + xs.map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// `log p` for one positive key against sampled negative keys.
pub fn log_objective(table: &ImportanceTable, pos: &StateKey, negs: &[StateKey]) -> f64 {
    let fp = table.get(pos);
    let terms = std::iter::once(fp).chain(negs.iter().map(|k| table.get(k)));
    fp - logsumexp(terms.collect::<Vec<_>>().into_iter())
}

/// Gradient of [`log_objective`] with respect to each touched logit.
pub fn log_objective_grad(table: &ImportanceTable, pos: &StateKey, negs: &[StateKey]) -> BTreeMap<StateKey, f64> {
    let terms: Vec<f64> = std::iter::once(table.get(pos)).chain(negs.iter().map(|k| table.get(k))).collect();
    let lz = logsumexp(terms.iter().copied());
    let mut grad = BTreeMap::new();
    *grad.entry(pos.clone()).or_insert(0.0) += 1.0;
    for (k, &f) in std::iter::once(pos).chain(negs.iter()).zip(&terms) {
        *grad.entry(k.clone()).or_insert(0.0) -= (f - lz).exp();
    }
    grad
}

/// One ascent step on `log p` for sampled states; returns `p` before the step.
pub fn contrastive_step<R: Rng + ?Sized>(
    table: &mut ImportanceTable,
    pos: &[StateKey],
    negs: &[&[StateKey]],
    cfg: &ContrastiveConfig,
    rng: &mut R,
) -> f64 {
    let sp = pos[sample_geometric(cfg.gamma, pos.len(), rng)].clone();
    let sn: Vec<StateKey> = negs
        .iter()
        .map(|n| n[sample_geometric(cfg.gamma, n.len(), rng)].clone())
        .collect();
    let p = log_objective(table, &sp, &sn).exp();
    for (k, g) in log_objective_grad(table, &sp, &sn) {
        table.add(&k, cfg.lr * g);
    }
    p
}

/// `log` of the whole-trajectory ratio `sum_pos / (sum_pos + sum_neg)`.
pub fn ratio_objective(table: &ImportanceTable, pos: &[StateKey], neg: &[StateKey]) -> f64 {
    let fp: Vec<f64> = pos.iter().map(|k| table.get(k)).collect();
    let all: Vec<f64> = fp.iter().copied().chain(neg.iter().map(|k| table.get(k))).collect();
    logsumexp(fp.into_iter()) - logsumexp(all.into_iter())
}

pub fn ratio_objective_grad(table: &ImportanceTable, pos: &[StateKey], neg: &[StateKey]) -> BTreeMap<StateKey, f64> {
    let fp: Vec<f64> = pos.iter().map(|k| table.get(k)).collect();
    let fa: Vec<f64> = fp.iter().copied().chain(neg.iter().map(|k| table.get(k))).collect();
    let lp = logsumexp(fp.iter().copied());
    let la = logsumexp(fa.iter().copied());
    let mut grad = BTreeMap::new();
    for (k, f) in pos.iter().zip(&fp) {
        *grad.entry(k.clone()).or_insert(0.0) += (f - lp).exp();
    }
    for (k, f) in pos.iter().chain(neg.iter()).zip(&fa) {
        *grad.entry(k.clone()).or_insert(0.0) -= (f - la).exp();
    }
    grad
}

/// One ascent step on the whole-trajectory ratio; returns the ratio before the step.
pub fn baseline_objective_step(
    table: &mut ImportanceTable,
    pos: &[StateKey],
    neg: &[StateKey],
    cfg: &ContrastiveConfig,
) -> Result<f64> {
    if cfg.objective != Objective::ConventionalEq2 {
        return Err(Error::Config("baseline step requires the conventional objective".into()));
    }
    if pos.is_empty() {
        return Err(Error::EmptyPositives);
    }
    let r = ratio_objective(table, pos, neg).exp();
    for (k, g) in ratio_objective_grad(table, pos, neg) {
        table.add(&k, cfg.lr * g);
    }
    Ok(r)
}

/// Result of one discovery call.
#[derive(Clone, Debug)]
pub struct Discovery {
    pub key: StateKey,
    pub table: ImportanceTable,
    /// Mean index of each key in the preprocessed positives that contain it.
    pub mean_first_visit: BTreeMap<StateKey, f64>,
}

impl Discovery {
    /// Highest-valued key seen in the positives outside `exclude`; ties go to
    /// the earlier mean first visit.
    pub fn best_excluding(&self, exclude: &[StateKey]) -> Option<StateKey> {
        self.mean_first_visit
            .iter()
            .filter(|(k, _)| !exclude.contains(k))
            .max_by(|(ka, ma), (kb, mb)| {
                self.table
                    .get(ka)
                    .total_cmp(&self.table.get(kb))
                    .then_with(|| mb.total_cmp(ma))
                    .then_with(|| kb.cmp(ka))
            })
            .map(|(k, _)| k.clone())
    }

    /// CSV with `key_digest,logit,mean_first_visit`, highest logit first.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "key_digest,logit,mean_first_visit")?;
        let mut rows: Vec<_> = self.table.iter().collect();
        rows.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        for (k, v) in rows {
            let mfv = self
                .mean_first_visit
                .get(k)
                .map_or(String::new(), |m| format!("{m:.4}"));
            writeln!(w, "{},{:.6},{}", k.digest(), v, mfv)?;
        }
        Ok(())
    }
}

fn preprocess(t: &Trajectory, path: &[StateKey], objective: Objective) -> Result<Vec<StateKey>> {
    match objective {
        Objective::Proposed | Objective::ConventionalEq2 => Ok(fr_preprocess(t, path)?.keys().to_vec()),
        Objective::NoFrAblation => raw_suffix(t, path),
    }
}

/// Index-addressed logits used inside [`discover_next`]; mirrors the
/// key-addressed steps above without map lookups.
#[derive(Default)]
struct Dense {
    index: HashMap<StateKey, u32>,
    keys: Vec<StateKey>,
    logits: Vec<f64>,
    touched: Vec<bool>,
    terms: Vec<f64>,
    idx: Vec<u32>,
}

impl Dense {
    fn intern(&mut self, trace: &[StateKey]) -> Vec<u32> {
        trace
            .iter()
            .map(|k| {
                *self.index.entry(k.clone()).or_insert_with(|| {
                    self.keys.push(k.clone());
                    self.logits.push(0.0);
                    self.touched.push(false);
                    (self.keys.len() - 1) as u32
                })
            })
            .collect()
    }

    fn apply(&mut self, i: u32, delta: f64) {
        self.logits[i as usize] += delta;
        self.touched[i as usize] = true;
    }

    fn contrastive_step<R: Rng + ?Sized>(
        &mut self,
        pos: &[u32],
        negs: &[&[u32]],
        geo: Option<&Geometric>,
        lr: f64,
        rng: &mut R,
    ) {
        let draw = |len: usize, rng: &mut R| geo.map_or(0, |g| g.draw_truncated(len, rng));
        self.idx.clear();
        self.idx.push(pos[draw(pos.len(), rng)]);
        for n in negs {
            self.idx.push(n[draw(n.len(), rng)]);
        }
        self.terms.clear();
        self.terms.extend(self.idx.iter().map(|&i| self.logits[i as usize]));
        let lz = logsumexp(self.terms.iter().copied());
        for (j, f) in self.terms.iter_mut().enumerate() {
            *f = lr * (f64::from(j == 0) - (*f - lz).exp());
        }
        for j in 0..self.idx.len() {
            let i = self.idx[j] as usize;
            self.logits[i] += self.terms[j];
            self.touched[i] = true;
        }
    }

    fn ratio_step(&mut self, pos: &[u32], neg: &[u32], lr: f64) {
        let fp: Vec<f64> = pos.iter().map(|&i| self.logits[i as usize]).collect();
        let fa: Vec<f64> = fp.iter().copied().chain(neg.iter().map(|&i| self.logits[i as usize])).collect();
        let lp = logsumexp(fp.iter().copied());
        let la = logsumexp(fa.iter().copied());
        let mut deltas: Vec<(u32, f64)> = pos.iter().zip(&fp).map(|(&i, f)| (i, lr * (f - lp).exp())).collect();
        deltas.extend(pos.iter().chain(neg).zip(&fa).map(|(&i, f)| (i, -lr * (f - la).exp())));
        for (i, d) in deltas {
            self.apply(i, d);
        }
    }

    fn into_table(self) -> ImportanceTable {
        let mut table = ImportanceTable::new();
        for ((k, v), t) in self.keys.into_iter().zip(self.logits).zip(self.touched) {
            if t {
                table.set(k, v);
            }
        }
        table
    }
}

/// Trains a fresh table on trajectories conditioned on `path` and returns the
/// highest-valued key seen in the positives, excluding keys on the path.
pub fn discover_next(
    positives: &[&Trajectory],
    negatives: &[&Trajectory],
    path: &[StateKey],
    cfg: &ContrastiveConfig,
) -> Result<Discovery> {
    cfg.validate()?;
    if positives.is_empty() {
        return Err(Error::EmptyBuffer("positive"));
    }
    if negatives.is_empty() {
        return Err(Error::EmptyBuffer("negative"));
    }
    let pos: Vec<Vec<StateKey>> = positives
        .iter()
        .map(|t| preprocess(t, path, cfg.objective))
        .filter(|r| !matches!(r, Ok(v) if v.is_empty()))
        .collect::<Result<_>>()?;
    if pos.is_empty() {
        return Err(Error::EmptyPositives);
    }
    let neg: Vec<Vec<StateKey>> = negatives
        .iter()
        .map(|t| preprocess(t, path, cfg.objective))
        .filter(|r| !matches!(r, Ok(v) if v.is_empty()))
        .collect::<Result<_>>()?;

    let mut dense = Dense::default();
    let pos_ix: Vec<Vec<u32>> = pos.iter().map(|t| dense.intern(t)).collect();
    let neg_ix: Vec<Vec<u32>> = neg.iter().map(|t| dense.intern(t)).collect();
    let geo = (cfg.gamma > 0.0).then(|| Geometric::new(cfg.gamma));
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut batch: Vec<&[u32]> = Vec::with_capacity(cfg.batch);
    for _ in 0..cfg.iterations {
        let p = pos_ix.choose(&mut rng).expect("nonempty");
        match cfg.objective {
            Objective::ConventionalEq2 => {
                let n: &[u32] = neg_ix.choose(&mut rng).map_or(&[], |v| v.as_slice());
                dense.ratio_step(p, n, cfg.lr);
            }
            Objective::Proposed | Objective::NoFrAblation => {
                batch.clear();
                if !neg_ix.is_empty() {
                    for _ in 0..cfg.batch {
                        batch.push(neg_ix[rng.gen_range(0..neg_ix.len())].as_slice());
                    }
                }
                dense.contrastive_step(p, &batch, geo.as_ref(), cfg.lr, &mut rng);
            }
        }
    }
    let table = dense.into_table();

    // mean first-visit index over positives, using first-visit order
    let mut sums: BTreeMap<StateKey, (f64, usize)> = BTreeMap::new();
    for p in &pos {
        let fr = FrTrace::from_keys(p);
        for (i, k) in fr.keys().iter().enumerate() {
            let e = sums.entry(k.clone()).or_insert((0.0, 0));
            e.0 += i as f64;
            e.1 += 1;
        }
    }
    let mean_first_visit: BTreeMap<StateKey, f64> = sums.into_iter().map(|(k, (s, n))| (k, s / n as f64)).collect();

    let mut d = Discovery {
        key: StateKey::from_bytes(Vec::new()),
        table,
        mean_first_visit,
    };
    d.key = d.best_excluding(path).ok_or(Error::EmptyPositives)?;
    Ok(d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gridworld::Action;

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
    fn geometric_edge_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            assert_eq!(sample_geometric(0.0, 10, &mut rng), 0);
            assert_eq!(sample_geometric(0.9, 1, &mut rng), 0);
            assert!(sample_geometric(0.99, 3, &mut rng) < 3);
        }
    }

    #[test]
    fn geometric_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 1_000_000;
        let sum: f64 = (0..n).map(|_| sample_geometric(0.9, 1_000_000, &mut rng) as f64).sum();
        let mean = sum / n as f64;
        assert!((mean - 9.0).abs() < 0.45, "mean {mean}");
    }

    #[test]
    fn uniform_start_gives_quarter() {
        let t = ImportanceTable::new();
        let p = log_objective(&t, &k(0), &[k(1), k(2), k(3)]).exp();
        assert!((p - 0.25).abs() < 1e-12);
    }

    #[test]
    fn positive_logit_rises() {
        let cfg = ContrastiveConfig::default();
        let mut t = ImportanceTable::new();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let pos = [k(0)];
        let n1 = [k(1)];
        let n2 = [k(2)];
        contrastive_step(&mut t, &pos, &[&n1, &n2], &cfg, &mut rng);
        assert!(t.get(&k(0)) > 0.0);
        assert!(t.get(&k(1)) < 0.0);
    }

    #[test]
    fn repeated_key_gradient() {
        let mut t = ImportanceTable::new();
        t.set(k(0), 0.3);
        t.set(k(1), -0.2);
        let negs = [k(0), k(1), k(0)];
        let g = log_objective_grad(&t, &k(0), &negs);
        let z = 3.0 * 0.3f64.exp() + (-0.2f64).exp();
        let p = 0.3f64.exp() / z;
        // (1 - p) minus the mass of its two negative draws
        assert!((g[&k(0)] - ((1.0 - p) - 2.0 * p)).abs() < 1e-12);
        assert!((g[&k(1)] + (-0.2f64).exp() / z).abs() < 1e-12);
    }

    #[test]
    fn ratio_is_half_for_equal_trajectories() {
        let t = ImportanceTable::new();
        let a = [k(0), k(1), k(2)];
        assert!((ratio_objective(&t, &a, &a).exp() - 0.5).abs() < 1e-12);
        let g = ratio_objective_grad(&t, &a, &a);
        assert!(g.values().all(|v| v.abs() < 1e-12));
        let cfg = ContrastiveConfig {
            objective: Objective::ConventionalEq2,
            ..Default::default()
        };
        let mut t = ImportanceTable::new();
        baseline_objective_step(&mut t, &[k(0), k(5)], &[k(0), k(1)], &cfg).unwrap();
        assert!(t.get(&k(5)) > 0.0);
        let mut t2 = ImportanceTable::new();
        let s = baseline_objective_step(&mut t2, &[k(3)], &[k(4)], &cfg).unwrap();
        assert!((s - 0.5).abs() < 1e-12);
        assert!(baseline_objective_step(&mut t2, &[k(3)], &[k(4)], &ContrastiveConfig::default()).is_err());
    }

    #[test]
    fn single_key_positives() {
        let pos = [traj(&[4], true), traj(&[4], true)];
        let neg = [traj(&[1, 2], false), traj(&[2, 3], false)];
        let d = discover_next(&pos.iter().collect::<Vec<_>>(), &neg.iter().collect::<Vec<_>>(), &[], &ContrastiveConfig::default())
            .unwrap();
        assert_eq!(d.key, k(4));
    }

    #[test]
    fn discovery_errors() {
        let pos = [traj(&[1, 2], true)];
        let neg = [traj(&[1, 3], false)];
        let cfg = ContrastiveConfig::default();
        let p: Vec<_> = pos.iter().collect();
        let n: Vec<_> = neg.iter().collect();
        assert!(matches!(discover_next(&[], &n, &[], &cfg), Err(Error::EmptyBuffer("positive"))));
        assert!(matches!(discover_next(&p, &[], &[], &cfg), Err(Error::EmptyBuffer("negative"))));
        // conditioned on the final key leaves nothing after it
        let conditioned_pos = [traj(&[1, 2], true)];
        let cp: Vec<_> = conditioned_pos.iter().collect();
        assert!(matches!(discover_next(&cp, &n, &[k(2)], &cfg), Err(Error::EmptyPositives)));
    }

    #[test]
    fn discovery_is_deterministic_and_shift_invariant() {
        let pos: Vec<Trajectory> = (0..10).map(|i| traj(&[0, 1 + i % 3, 9, 5], true)).collect();
        let neg: Vec<Trajectory> = (0..10).map(|i| traj(&[0, 1 + i % 3, 6, 7], false)).collect();
        let p: Vec<_> = pos.iter().collect();
        let n: Vec<_> = neg.iter().collect();
        let cfg = ContrastiveConfig { seed: 5, ..Default::default() };
        let a = discover_next(&p, &n, &[], &cfg).unwrap();
        let b = discover_next(&p, &n, &[], &cfg).unwrap();
        assert_eq!(a.table, b.table);
        assert_eq!(a.key, k(9));
        let mut shifted = a.table.clone();
        shifted.shift(3.5);
        let best = a
            .mean_first_visit
            .keys()
            .max_by(|x, y| shifted.get(x).total_cmp(&shifted.get(y)))
            .unwrap();
        assert_eq!(best, &a.key);
        let mut csv = Vec::new();
        a.write_csv(&mut csv).unwrap();
        let text = String::from_utf8(csv).unwrap();
        assert!(text.starts_with("key_digest,logit,mean_first_visit\n"));
        assert!(text.lines().nth(1).unwrap().starts_with(&k(9).digest()));
    }
}
