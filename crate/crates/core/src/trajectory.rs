//! Trajectories, state identity, and the first-occupancy utilities used by
//! subgoal discovery.

use std::collections::HashSet;
use std::fmt;
use std::hash::{Hash, Hasher};
use std::io::{BufRead, Write};
use std::sync::Arc;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::gridworld::{Action, Observation};

/// Canonical identity of an observation: its exact tensor content.
#[derive(Clone)]
pub struct StateKey(Arc<[u8]>);

impl StateKey {
    pub fn from_bytes(bytes: impl Into<Arc<[u8]>>) -> Self {
        StateKey(bytes.into())
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.0
    }

    /// Short stable digest for display and file output.
    pub fn digest(&self) -> String {
        let hash = Sha256::digest(&self.0);
        hex::encode(&hash[..8])
    }

    pub fn to_hex(&self) -> String {
        hex::encode(&self.0)
    }

    pub fn from_hex(s: &str) -> Result<Self> {
        let bytes = hex::decode(s).map_err(|e| Error::Config(format!("bad key `{s}`: {e}")))?;
        Ok(StateKey::from_bytes(bytes))
    }
}

impl PartialEq for StateKey {
    fn eq(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.0, &other.0) || self.0 == other.0
    }
}

impl Eq for StateKey {}

impl Hash for StateKey {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.0.hash(state)
    }
}

impl PartialOrd for StateKey {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for StateKey {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.cmp(&other.0)
    }
}

impl fmt::Display for StateKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.digest())
    }
}

impl fmt::Debug for StateKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "StateKey({})", self.digest())
    }
}

impl Serialize for StateKey {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for StateKey {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        StateKey::from_hex(&s).map_err(serde::de::Error::custom)
    }
}

/// Packs the tensor shape and bits, so keys are equal iff tensors are.
pub fn canonical_key(obs: &Observation) -> StateKey {
    let mut bytes = Vec::with_capacity(6 + obs.bits.len().div_ceil(8));
    for dim in [obs.width, obs.height, obs.channels] {
        bytes.extend_from_slice(&(dim as u16).to_le_bytes());
    }
    let mut acc = 0u8;
    for (i, &b) in obs.bits.iter().enumerate() {
        if b {
            acc |= 1 << (i % 8);
        }
        if i % 8 == 7 {
            bytes.push(acc);
            acc = 0;
        }
    }
    if obs.bits.len() % 8 != 0 {
        bytes.push(acc);
    }
    StateKey::from_bytes(bytes)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trajectory {
    /// One key per visited state, including the start state.
    pub keys: Vec<StateKey>,
    pub actions: Vec<Action>,
    pub label: bool,
    /// The episode ended because the horizon was reached.
    pub truncated: bool,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    pub fn steps(&self) -> usize {
        self.actions.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.keys.len() != self.actions.len() + 1 {
            return Err(Error::Config(format!(
                "trajectory has {} states but {} actions",
                self.keys.len(),
                self.actions.len()
            )));
        }
        Ok(())
    }
}

/// Writes one JSON trajectory per line.
pub fn write_jsonl<'a, W: Write>(
    mut w: W,
    trajectories: impl IntoIterator<Item = &'a Trajectory>,
) -> Result<()> {
    for t in trajectories {
        serde_json::to_writer(&mut w, t)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_jsonl<R: BufRead>(r: R) -> Result<Vec<Trajectory>> {
    let mut out = Vec::new();
    for line in r.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let t: Trajectory = serde_json::from_str(&line)?;
        t.validate()?;
        out.push(t);
    }
    Ok(out)
}

/// Positive and negative trajectory buffers.
#[derive(Clone, Debug, Default)]
pub struct Buffers {
    positives: Vec<Trajectory>,
    negatives: Vec<Trajectory>,
}

impl Buffers {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, t: Trajectory) {
        if t.label {
            self.positives.push(t);
        } else {
            self.negatives.push(t);
        }
    }

    pub fn extend(&mut self, ts: impl IntoIterator<Item = Trajectory>) {
        for t in ts {
            self.push(t);
        }
    }

    pub fn positives(&self) -> &[Trajectory] {
        &self.positives
    }

    pub fn negatives(&self) -> &[Trajectory] {
        &self.negatives
    }

    pub fn len(&self) -> usize {
        self.positives.len() + self.negatives.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn clear(&mut self) {
        self.positives.clear();
        self.negatives.clear();
    }
}

/// Matches `path` against the trajectory as an ordered subsequence, taking
/// for each element its first visit after the previous element's match.
/// Returns the index of each match.
pub fn path_matches(keys: &[StateKey], path: &[StateKey]) -> Option<Vec<usize>> {
    let mut out = Vec::with_capacity(path.len());
    let mut from = 0;
    for k in path {
        let i = from + keys[from..].iter().position(|x| x == k)?;
        out.push(i);
        from = i + 1;
    }
    Some(out)
}

/// Index just past the match of the path's last element; `Some(0)` for the
/// empty path, `None` when the trajectory does not visit the path in order.
pub fn conditioned_on(traj: &Trajectory, path: &[StateKey]) -> Option<usize> {
    let matches = path_matches(&traj.keys, path)?;
    Some(matches.last().map_or(0, |&i| i + 1))
}

/// Is the positive trajectory accounted for by one of the sequences, i.e.
/// does it visit the sequence in order and end exactly on its last element?
pub fn explained_by<'a>(
    traj: &Trajectory,
    sequences: impl IntoIterator<Item = &'a [StateKey]>,
) -> Result<bool> {
    if !traj.label {
        return Err(Error::NotPositive);
    }
    Ok(sequences.into_iter().any(|seq| ends_on(traj, seq)))
}

pub(crate) fn ends_on(traj: &Trajectory, seq: &[StateKey]) -> bool {
    !seq.is_empty() && conditioned_on(traj, seq) == Some(traj.len())
}

/// Distinct keys in first-visit order.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct FrTrace(Vec<StateKey>);

impl FrTrace {
    pub fn keys(&self) -> &[StateKey] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn from_keys(keys: &[StateKey]) -> Self {
        let mut seen = HashSet::new();
        FrTrace(keys.iter().filter(|k| seen.insert(*k)).cloned().collect())
    }
}

/// The part of the trajectory after the path, reduced to first visits.
pub fn fr_preprocess(traj: &Trajectory, path: &[StateKey]) -> Result<FrTrace> {
    let start = conditioned_on(traj, path).ok_or(Error::NotConditioned)?;
    Ok(FrTrace::from_keys(&traj.keys[start..]))
}

/// The part of the trajectory after the path, repeats kept.
pub fn raw_suffix(traj: &Trajectory, path: &[StateKey]) -> Result<Vec<StateKey>> {
    let start = conditioned_on(traj, path).ok_or(Error::NotConditioned)?;
    Ok(traj.keys[start..].to_vec())
}

/// A finite MDP given as `transitions[state][action] = [(next, prob), ...]`.
#[derive(Clone, Debug)]
pub struct TabularMdp {
    pub transitions: Vec<Vec<Vec<(usize, f64)>>>,
}

impl TabularMdp {
    pub fn states(&self) -> usize {
        self.transitions.len()
    }

    /// A chain `0 -> 1 -> ... -> n-1` with a single action; the last state absorbs.
    pub fn chain(n: usize) -> Self {
        let transitions = (0..n).map(|s| vec![vec![((s + 1).min(n - 1), 1.0)]]).collect();
        TabularMdp { transitions }
    }
}

/// First-occupancy matrix `F[s][s']`: expected discount at the first visit
/// of `s'` starting from `s`, via the fixed point
/// `F(s,s') = 1 if s = s' else gamma * E[F(next, s')]`.
pub fn fr_matrix(mdp: &TabularMdp, policy: &[Vec<f64>], gamma: f64) -> Result<Vec<Vec<f64>>> {
    if !(0.0..1.0).contains(&gamma) {
        return Err(Error::Config(format!("discount {gamma} outside [0, 1)")));
    }
    let n = mdp.states();
    if policy.len() != n {
        return Err(Error::Config(format!("policy has {} rows for {n} states", policy.len())));
    }
    for (s, row) in policy.iter().enumerate() {
        let sum: f64 = row.iter().sum();
        if row.len() != mdp.transitions[s].len() || row.iter().any(|&p| p < 0.0) || (sum - 1.0).abs() > 1e-9 {
            return Err(Error::PolicyRow(s));
        }
    }
    // state-to-state kernel under the policy
    let mut kernel = vec![vec![0.0; n]; n];
    for s in 0..n {
        for (a, outcomes) in mdp.transitions[s].iter().enumerate() {
            for &(t, p) in outcomes {
                kernel[s][t] += policy[s][a] * p;
            }
        }
    }
    let mut f = vec![vec![0.0; n]; n];
    for (s, row) in f.iter_mut().enumerate() {
        row[s] = 1.0;
    }
    for _ in 0..100_000 {
        let mut delta: f64 = 0.0;
        let mut next = f.clone();
        for s in 0..n {
            for target in 0..n {
                if s == target {
                    continue;
                }
                let v = gamma * (0..n).map(|t| kernel[s][t] * f[t][target]).sum::<f64>();
                delta = delta.max((v - f[s][target]).abs());
                next[s][target] = v;
            }
        }
        f = next;
        if delta < 1e-14 {
            break;
        }
    }
    Ok(f)
}
