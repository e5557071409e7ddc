//! The subgoal tree built from discovered key states.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::tl::{Fsm, FsmMetrics, Symbol};
use crate::trajectory::{ends_on, StateKey, Trajectory};

pub type NodeId = usize;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeStatus {
    Unexplored,
    FullyExplored,
}

#[derive(Clone, Debug)]
struct Node {
    key: Option<StateKey>,
    parent: Option<NodeId>,
    children: Vec<NodeId>,
    status: NodeStatus,
    closed_at: Option<usize>,
}

#[derive(Clone, Debug)]
pub struct SubgoalTree {
    nodes: Vec<Node>,
    cursor: NodeId,
    satisfying: Vec<Vec<StateKey>>,
}

impl Default for SubgoalTree {
    fn default() -> Self {
        Self::new()
    }
}

impl SubgoalTree {
    pub const ROOT: NodeId = 0;

    pub fn new() -> Self {
        SubgoalTree {
            nodes: vec![Node {
                key: None,
                parent: None,
                children: Vec::new(),
                status: NodeStatus::Unexplored,
                closed_at: None,
            }],
            cursor: Self::ROOT,
            satisfying: Vec::new(),
        }
    }

    fn node(&self, id: NodeId) -> Result<&Node> {
        self.nodes.get(id).ok_or(Error::UnknownNode(id))
    }

    fn node_mut(&mut self, id: NodeId) -> Result<&mut Node> {
        self.nodes.get_mut(id).ok_or(Error::UnknownNode(id))
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.len() == 1
    }

    pub fn key(&self, id: NodeId) -> Result<Option<&StateKey>> {
        Ok(self.node(id)?.key.as_ref())
    }

    pub fn parent(&self, id: NodeId) -> Result<Option<NodeId>> {
        Ok(self.node(id)?.parent)
    }

    pub fn children(&self, id: NodeId) -> Result<&[NodeId]> {
        Ok(&self.node(id)?.children)
    }

    pub fn status(&self, id: NodeId) -> Result<NodeStatus> {
        Ok(self.node(id)?.status)
    }

    /// Buffer size recorded when the node was closed.
    pub fn closed_at(&self, id: NodeId) -> Result<Option<usize>> {
        Ok(self.node(id)?.closed_at)
    }

    pub fn mark_explored(&mut self, id: NodeId, positives_seen: usize) -> Result<()> {
        let n = self.node_mut(id)?;
        n.status = NodeStatus::FullyExplored;
        n.closed_at = Some(positives_seen);
        Ok(())
    }

    pub fn reopen(&mut self, id: NodeId) -> Result<()> {
        let n = self.node_mut(id)?;
        n.status = NodeStatus::Unexplored;
        n.closed_at = None;
        Ok(())
    }

    pub fn cursor(&self) -> NodeId {
        self.cursor
    }

    pub fn set_cursor(&mut self, id: NodeId) -> Result<()> {
        self.node(id)?;
        self.cursor = id;
        Ok(())
    }

    pub fn path_of(&self, id: NodeId) -> Result<Vec<StateKey>> {
        let mut out = Vec::new();
        let mut cur = Some(id);
        while let Some(c) = cur {
            let n = self.node(c)?;
            if let Some(k) = &n.key {
                out.push(k.clone());
            }
            cur = n.parent;
        }
        out.reverse();
        Ok(out)
    }

    pub fn child_with_key(&self, parent: NodeId, key: &StateKey) -> Result<Option<NodeId>> {
        Ok(self
            .node(parent)?
            .children
            .iter()
            .copied()
            .find(|&c| self.nodes[c].key.as_ref() == Some(key)))
    }

    pub fn add_child(&mut self, parent: NodeId, key: StateKey) -> Result<NodeId> {
        if self.child_with_key(parent, &key)?.is_some() {
            return Err(Error::DuplicateChild(key.digest()));
        }
        let id = self.nodes.len();
        self.nodes.push(Node {
            key: Some(key),
            parent: Some(parent),
            children: Vec::new(),
            status: NodeStatus::Unexplored,
            closed_at: None,
        });
        self.nodes[parent].children.push(id);
        Ok(id)
    }

    /// Condition (*): some positive ended exactly on completing the node's
    /// path. On success the path joins the satisfying set and the node closes.
    pub fn check_satisfying(&mut self, id: NodeId, positives: &[Trajectory]) -> Result<bool> {
        if id == Self::ROOT {
            return Ok(false);
        }
        let path = self.path_of(id)?;
        let hit = positives.iter().any(|t| t.label && ends_on(t, &path));
        if hit {
            self.add_satisfying(path);
            self.mark_explored(id, positives.len())?;
        }
        Ok(hit)
    }

    pub fn add_satisfying(&mut self, path: Vec<StateKey>) -> bool {
        if self.satisfying.contains(&path) {
            return false;
        }
        self.satisfying.push(path);
        true
    }

    pub fn is_satisfying(&self, path: &[StateKey]) -> bool {
        self.satisfying.iter().any(|p| p == path)
    }

    /// Satisfying sequences in discovery order.
    pub fn satisfying(&self) -> &[Vec<StateKey>] {
        &self.satisfying
    }

    /// Distinct keys in node order.
    pub fn key_states(&self) -> Vec<StateKey> {
        let mut seen = BTreeSet::new();
        self.nodes
            .iter()
            .filter_map(|n| n.key.clone())
            .filter(|k| seen.insert(k.clone()))
            .collect()
    }

    pub fn depth(&self, id: NodeId) -> Result<usize> {
        Ok(self.path_of(id)?.len())
    }

    /// Longest root-to-leaf edge count.
    pub fn longest_path(&self) -> usize {
        (0..self.nodes.len()).map(|i| self.depth(i).unwrap_or(0)).max().unwrap_or(0)
    }

    pub fn max_children(&self) -> usize {
        self.nodes.iter().map(|n| n.children.len()).max().unwrap_or(0)
    }

    /// Condition (***): the tree is deeper or wider than the machine allows.
    pub fn check_inconsistent(&self, metrics: &FsmMetrics) -> bool {
        self.longest_path() > metrics.longest_path || self.max_children() > metrics.max_out_degree
    }

    /// Keys along the deepest branch, used to recognise a recurring violation.
    pub fn deepest_path(&self) -> Vec<StateKey> {
        let mut best: Vec<StateKey> = Vec::new();
        for i in 0..self.nodes.len() {
            let p = self.path_of(i).unwrap_or_default();
            if p.len() > best.len() {
                best = p;
            }
        }
        best
    }

    pub fn to_dot(&self, describe: &dyn Fn(&StateKey) -> String) -> String {
        let mut s = String::from("digraph tree {\n  rankdir=TB;\n  n0 [label=\"root\"];\n");
        for (i, n) in self.nodes.iter().enumerate().skip(1) {
            let k = n.key.as_ref().expect("non-root nodes carry keys");
            let shape = if self.is_satisfying(&self.path_of(i).unwrap_or_default()) {
                "doublecircle"
            } else {
                "circle"
            };
            let _ = writeln!(s, "  n{i} [label=\"{}\", shape={shape}];", describe(k));
        }
        for (i, n) in self.nodes.iter().enumerate() {
            for c in &n.children {
                let _ = writeln!(s, "  n{i} -> n{c};");
            }
        }
        s.push_str("}\n");
        s
    }

    /// JSON list of satisfying sequences as full key hex strings.
    pub fn satisfying_json(&self) -> serde_json::Value {
        serde_json::to_value(&self.satisfying).expect("keys serialize")
    }
}

/// Symbol sequences along every run from the initial node to an accepting node.
pub fn fsm_words(fsm: &Fsm) -> Vec<Vec<Symbol>> {
    fn go(fsm: &Fsm, v: usize, word: &mut Vec<Symbol>, out: &mut BTreeSet<Vec<Symbol>>) {
        if fsm.accepting.contains(&v) {
            out.insert(word.clone());
        }
        for e in fsm.out_edges(v) {
            word.push(e.symbol);
            go(fsm, e.to, word, out);
            word.pop();
        }
    }
    let mut out = BTreeSet::new();
    for &v in &fsm.initial {
        go(fsm, v, &mut Vec::new(), &mut out);
    }
    out.into_iter().filter(|w| !w.is_empty()).collect()
}

/// The satisfying key sequences implied by a symbol-to-key map.
pub fn ground_truth_sequences(fsm: &Fsm, keys: &BTreeMap<Symbol, StateKey>) -> BTreeSet<Vec<StateKey>> {
    fsm_words(fsm)
        .into_iter()
        .filter_map(|w| w.iter().map(|s| keys.get(s).cloned()).collect::<Option<Vec<_>>>())
        .collect()
}

/// Does the tree's satisfying set equal the ground-truth set?
pub fn matches_ground_truth(tree: &SubgoalTree, fsm: &Fsm, keys: &BTreeMap<Symbol, StateKey>) -> bool {
    let found: BTreeSet<Vec<StateKey>> = tree.satisfying().iter().cloned().collect();
    found == ground_truth_sequences(fsm, keys)
}
