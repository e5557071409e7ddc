#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use lstoc::gridworld::Action;
use lstoc::trajectory::{StateKey, TabularMdp, Trajectory};

pub fn k(n: u8) -> StateKey {
    StateKey::from_bytes(vec![n])
}

pub fn traj(keys: &[StateKey], label: bool) -> Trajectory {
    Trajectory {
        keys: keys.to_vec(),
        actions: vec![Action::N; keys.len().saturating_sub(1)],
        label,
        truncated: !label,
    }
}

/// Positives carry `planted` at a random point among noise keys; negatives
/// are noise only.
pub fn planted_buffers(seed: u64, planted: &StateKey) -> (Vec<Trajectory>, Vec<Trajectory>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = |rng: &mut ChaCha8Rng| -> Vec<StateKey> {
        let len = rng.gen_range(6..14);
        (0..len).map(|_| k(rng.gen_range(1..40))).collect()
    };
    let mut pos = Vec::new();
    let mut neg = Vec::new();
    for _ in 0..60 {
        let mut keys = noise(&mut rng);
        let at = rng.gen_range(1..keys.len());
        keys.insert(at, planted.clone());
        pos.push(traj(&keys, true));
    }
    for _ in 0..120 {
        neg.push(traj(&noise(&mut rng), false));
    }
    (pos, neg)
}

/// Key with the largest gap between the fraction of positives and of
/// negatives that visit it.
pub fn frequency_difference_oracle(pos: &[Trajectory], neg: &[Trajectory]) -> StateKey {
    let share = |ts: &[Trajectory]| {
        let mut m: BTreeMap<StateKey, f64> = BTreeMap::new();
        for t in ts {
            let seen: BTreeSet<&StateKey> = t.keys.iter().skip(1).collect();
            for s in seen {
                *m.entry(s.clone()).or_default() += 1.0 / ts.len() as f64;
            }
        }
        m
    };
    let (p, n) = (share(pos), share(neg));
    p.iter()
        .map(|(key, v)| (v - n.get(key).copied().unwrap_or(0.0), key))
        .max_by(|a, b| a.0.total_cmp(&b.0).then_with(|| b.1.cmp(a.1)))
        .map(|(_, key)| key.clone())
        .expect("nonempty")
}

/// A walk on `0..n` with left/right actions; a move off either end stays
/// in place.
pub fn random_walk(n: usize) -> TabularMdp {
    let transitions = (0..n)
        .map(|s| vec![vec![(s.saturating_sub(1), 1.0)], vec![((s + 1).min(n - 1), 1.0)]])
        .collect();
    TabularMdp { transitions }
}

/// Monte-Carlo estimate of the first-occupancy discount from `s` to `t`.
pub fn fr_monte_carlo(mdp: &TabularMdp, policy: &[Vec<f64>], gamma: f64, s: usize, t: usize, rollouts: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut total = 0.0;
    for _ in 0..rollouts {
        let mut cur = s;
        let mut disc = 1.0;
        // discount below 1e-12 contributes nothing measurable
        while cur != t && disc > 1e-12 {
            let a = pick(&policy[cur], &mut rng);
            cur = pick_next(&mdp.transitions[cur][a], &mut rng);
            disc *= gamma;
        }
        if cur == t {
            total += disc;
        }
    }
    total / rollouts as f64
}

fn pick(probs: &[f64], rng: &mut ChaCha8Rng) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

fn pick_next(outcomes: &[(usize, f64)], rng: &mut ChaCha8Rng) -> usize {
    let probs: Vec<f64> = outcomes.iter().map(|o| o.1).collect();
    outcomes[pick(&probs, rng)].0
}
