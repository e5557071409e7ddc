//! Grounding discovered key states to task symbols by exhaustive search over
//! injective assignments.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::gridworld::GroundTruth;
use crate::tl::{Fsm, Symbol};
use crate::trajectory::StateKey;

pub const DEFAULT_CAP: usize = 10_000;
const MAX_WITNESSES: usize = 5;

#[derive(Clone, Debug)]
pub struct LabelingProblem {
    pub fsm: Fsm,
    pub sequences: Vec<Vec<StateKey>>,
    pub keys: Vec<StateKey>,
}

/// Keys absent from the map are ignored.
pub type Assignment = BTreeMap<StateKey, Symbol>;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Verdict {
    Unique(Assignment),
    Ambiguous { count: usize, witnesses: Vec<Assignment> },
    Infeasible,
}

impl Verdict {
    pub fn name(&self) -> &'static str {
        match self {
            Verdict::Unique(_) => "unique",
            Verdict::Ambiguous { .. } => "ambiguous",
            Verdict::Infeasible => "infeasible",
        }
    }

    pub fn count(&self) -> usize {
        match self {
            Verdict::Unique(_) => 1,
            Verdict::Ambiguous { count, .. } => *count,
            Verdict::Infeasible => 0,
        }
    }

    pub fn assignments(&self) -> Vec<&Assignment> {
        match self {
            Verdict::Unique(a) => vec![a],
            Verdict::Ambiguous { witnesses, .. } => witnesses.iter().collect(),
            Verdict::Infeasible => Vec::new(),
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        let assignments: Vec<BTreeMap<String, String>> = self
            .assignments()
            .into_iter()
            .map(|a| a.iter().map(|(k, s)| (k.digest(), s.to_string())).collect())
            .collect();
        serde_json::json!({
            "verdict": self.name(),
            "assignments": assignments,
            "enumerated_count": self.count(),
        })
    }
}

impl LabelingProblem {
    pub fn new(fsm: Fsm, sequences: Vec<Vec<StateKey>>, keys: Vec<StateKey>) -> Result<Self> {
        if sequences.is_empty() {
            return Err(Error::Config("labeling needs at least one satisfying sequence".into()));
        }
        let known: BTreeSet<&StateKey> = keys.iter().collect();
        if known.len() != keys.len() {
            return Err(Error::Config("key states must be distinct".into()));
        }
        if let Some(k) = sequences.iter().flatten().find(|k| !known.contains(k)) {
            return Err(Error::Config(format!("sequence key {k} is not a discovered key state")));
        }
        Ok(LabelingProblem { fsm, sequences, keys })
    }

    fn symbols(&self) -> Vec<Symbol> {
        self.fsm.alphabet().into_iter().collect()
    }

    /// Every symbol has exactly one key in the problem, and no key has two.
    pub fn is_well_formed(&self, a: &Assignment) -> bool {
        let used: BTreeSet<Symbol> = a.values().copied().collect();
        used.len() == a.len()
            && used == self.fsm.alphabet()
            && a.keys().all(|k| self.keys.contains(k))
    }

    /// Does every sequence drive the machine from an initial to an accepting
    /// node, mapped keys along edges and ignored keys in place?
    pub fn check_assignment(&self, a: &Assignment) -> bool {
        self.is_well_formed(a)
            && self.sequences.iter().all(|seq| {
                let end = self.run(seq, |k| Slot::from(a.get(k).copied()), &BTreeSet::new());
                end.iter().any(|v| self.fsm.accepting.contains(v))
            })
    }

    fn run(&self, seq: &[StateKey], slot: impl Fn(&StateKey) -> Slot, free: &BTreeSet<Symbol>) -> BTreeSet<usize> {
        let mut cur = self.fsm.initial.clone();
        for k in seq {
            cur = match slot(k) {
                Slot::Ignored => cur,
                Slot::Mapped(s) => self.fsm.advance(&cur, s),
                // not yet decided: ignored, or any symbol still free
                Slot::Open => {
                    let mut next = cur.clone();
                    for &s in free {
                        next.extend(self.fsm.advance(&cur, s));
                    }
                    next
                }
            };
            if cur.is_empty() {
                break;
            }
        }
        cur
    }

    /// Enumerates all feasible assignments up to `cap`.
    pub fn solve_with_cap(&self, cap: usize) -> Result<Verdict> {
        let symbols = self.symbols();
        let mut search = Search {
            problem: self,
            symbols: &symbols,
            slots: vec![Slot::Open; self.keys.len()],
            index: self.keys.iter().enumerate().map(|(i, k)| (k.clone(), i)).collect(),
            found: Vec::new(),
            count: 0,
            cap,
            partial: false,
        };
        search.go(0)?;
        let mut found = search.found;
        found.sort();
        Ok(match search.count {
            0 => Verdict::Infeasible,
            1 => Verdict::Unique(found.pop().expect("one witness")),
            count => Verdict::Ambiguous {
                count,
                witnesses: found.into_iter().take(MAX_WITNESSES).collect(),
            },
        })
    }

    pub fn solve(&self) -> Result<Verdict> {
        self.solve_with_cap(DEFAULT_CAP)
    }

    /// Could more key states still complete a labeling? Runs the same search
    /// with symbols allowed to stay unassigned.
    pub fn groundable(&self) -> bool {
        let symbols = self.symbols();
        let mut search = Search {
            problem: self,
            symbols: &symbols,
            slots: vec![Slot::Open; self.keys.len()],
            index: self.keys.iter().enumerate().map(|(i, k)| (k.clone(), i)).collect(),
            found: Vec::new(),
            count: 0,
            cap: usize::MAX,
            partial: true,
        };
        search.go(0).is_ok() && search.count > 0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Slot {
    Open,
    Ignored,
    Mapped(Symbol),
}

impl From<Option<Symbol>> for Slot {
    fn from(s: Option<Symbol>) -> Self {
        s.map_or(Slot::Ignored, Slot::Mapped)
    }
}

struct Search<'a> {
    problem: &'a LabelingProblem,
    symbols: &'a [Symbol],
    slots: Vec<Slot>,
    index: BTreeMap<StateKey, usize>,
    found: Vec<Assignment>,
    count: usize,
    cap: usize,
    partial: bool,
}

impl Search<'_> {
    fn free(&self) -> BTreeSet<Symbol> {
        let used: BTreeSet<Symbol> = self
            .slots
            .iter()
            .filter_map(|s| match s {
                Slot::Mapped(x) => Some(*x),
                _ => None,
            })
            .collect();
        self.symbols.iter().copied().filter(|s| !used.contains(s)).collect()
    }

    fn plausible(&self) -> bool {
        let free = self.free();
        let open = self.slots.iter().filter(|s| **s == Slot::Open).count();
        if !self.partial && free.len() > open {
            return false;
        }
        self.problem.sequences.iter().all(|seq| {
            let end = self.problem.run(seq, |k| self.slots[self.index[k]], &free);
            end.iter().any(|v| self.problem.fsm.accepting.contains(v))
        })
    }

    fn go(&mut self, i: usize) -> Result<()> {
        if (self.partial && self.count > 0) || !self.plausible() {
            return Ok(());
        }
        if i == self.slots.len() {
            self.count += 1;
            if self.count > self.cap {
                return Err(Error::EnumerationCap(self.cap));
            }
            let a: Assignment = self
                .problem
                .keys
                .iter()
                .zip(&self.slots)
                .filter_map(|(k, s)| match s {
                    Slot::Mapped(x) => Some((k.clone(), *x)),
                    _ => None,
                })
                .collect();
            debug_assert!(self.partial || self.problem.check_assignment(&a));
            self.found.push(a);
            return Ok(());
        }
        let free = self.free();
        for s in free {
            self.slots[i] = Slot::Mapped(s);
            self.go(i + 1)?;
        }
        self.slots[i] = Slot::Ignored;
        self.go(i + 1)?;
        self.slots[i] = Slot::Open;
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LabelingReport {
    pub accuracy: f64,
    pub correct: BTreeMap<String, bool>,
}

/// Fraction of task symbols whose assigned key is the key of its hidden cell.
pub fn decode_labeling(a: &Assignment, truth: &GroundTruth) -> LabelingReport {
    let mut correct = BTreeMap::new();
    for (sym, key) in &truth.subgoal_keys {
        let ok = a.iter().any(|(k, s)| s == sym && k == key);
        correct.insert(sym.to_string(), ok);
    }
    let n = correct.len().max(1);
    let accuracy = correct.values().filter(|&&b| b).count() as f64 / n as f64;
    LabelingReport { accuracy, correct }
}

/// Accuracy of each witness; empty for an infeasible verdict.
pub fn verdict_accuracies(v: &Verdict, truth: &GroundTruth) -> Vec<f64> {
    v.assignments().into_iter().map(|a| decode_labeling(a, truth).accuracy).collect()
}
