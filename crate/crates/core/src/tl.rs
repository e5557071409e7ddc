//! Task formulas over subgoal symbols.
//!
//! A formula is built from single-letter subgoal symbols and three binary
//! operators: `;` (then), `&` (and, either order) and `|` (or). Precedence
//! is `;` > `&` > `|`, all left-associative, and parentheses override it.
//!
//! Two acceptance notions live here. [`Formula::satisfies`] works on a full
//! per-state label trace and follows the recursive state-level rules
//! directly. [`Fsm`] is the compiled machine; [`Fsm::accepts`] consumes a
//! bare symbol sequence, while [`TraceRun`] / [`Fsm::accepts_trace`] run the
//! machine over a label trace and agree exactly with `satisfies`.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// A subgoal symbol. Symbols are single ASCII letters.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Symbol(char);

impl Symbol {
    pub fn new(c: char) -> Option<Self> {
        c.is_ascii_alphabetic().then_some(Symbol(c))
    }

    pub fn as_char(self) -> char {
        self.0
    }
}

impl fmt::Display for Symbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl std::str::FromStr for Symbol {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        let mut chars = s.chars();
        match (chars.next(), chars.next()) {
            (Some(c), None) => Symbol::new(c).ok_or_else(|| format!("`{s}` is not a letter")),
            _ => Err(format!("`{s}` is not a single-letter symbol")),
        }
    }
}

impl Serialize for Symbol {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Symbol {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

pub type Alphabet = BTreeSet<Symbol>;

/// Builds an alphabet from a string of letters, e.g. `alphabet("abc")`.
pub fn alphabet(letters: &str) -> Alphabet {
    letters.chars().filter_map(Symbol::new).collect()
}

/// One entry per environment state: the subgoal it satisfies, if any.
pub type LabelTrace = [Option<Symbol>];

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Formula {
    Leaf(Symbol),
    Then(Box<Formula>, Box<Formula>),
    Or(Box<Formula>, Box<Formula>),
    And(Box<Formula>, Box<Formula>),
}

impl Formula {
    pub fn leaf(c: char) -> Self {
        Formula::Leaf(Symbol::new(c).expect("leaf symbol must be a letter"))
    }

    pub fn then(l: Formula, r: Formula) -> Self {
        Formula::Then(Box::new(l), Box::new(r))
    }

    pub fn or(l: Formula, r: Formula) -> Self {
        Formula::Or(Box::new(l), Box::new(r))
    }

    pub fn and(l: Formula, r: Formula) -> Self {
        Formula::And(Box::new(l), Box::new(r))
    }

    /// Parses `text`, rejecting symbols outside `alphabet`.
    pub fn parse(text: &str, alphabet: &Alphabet) -> Result<Formula> {
        let mut p = Parser {
            chars: text.char_indices().collect(),
            at: 0,
            len: text.len(),
            alphabet,
        };
        let f = p.or_expr()?;
        p.skip_ws();
        if let Some(&(pos, c)) = p.chars.get(p.at) {
            return Err(Error::Syntax {
                pos,
                msg: format!("unexpected `{c}`"),
            });
        }
        Ok(f)
    }

    /// Parses with the alphabet taken to be every letter in `text`.
    pub fn parse_open(text: &str) -> Result<Formula> {
        Formula::parse(text, &alphabet(text))
    }

    pub fn symbols(&self) -> Alphabet {
        let mut out = Alphabet::new();
        self.collect_symbols(&mut out);
        out
    }

    fn collect_symbols(&self, out: &mut Alphabet) {
        match self {
            Formula::Leaf(s) => {
                out.insert(*s);
            }
            Formula::Then(l, r) | Formula::Or(l, r) | Formula::And(l, r) => {
                l.collect_symbols(out);
                r.collect_symbols(out);
            }
        }
    }

    fn precedence(&self) -> u8 {
        match self {
            Formula::Leaf(_) => 4,
            Formula::Then(..) => 3,
            Formula::And(..) => 2,
            Formula::Or(..) => 1,
        }
    }

    /// Decides whether the label trace satisfies the formula.
    ///
    /// A leaf `g` needs at least two states, a first state not labeled `g`
    /// and a last state labeled `g`. `l;r` splits the trace at a shared
    /// boundary state. `l&r` is `l;r` or `r;l`.
    pub fn satisfies(&self, trace: &LabelTrace) -> bool {
        if trace.len() < 2 {
            return false;
        }
        let mut nodes = Vec::new();
        let root = flatten(self, &mut nodes);
        let mut sat = Satisfier {
            nodes: &nodes,
            trace,
            memo: HashMap::new(),
        };
        sat.holds(root, 0, trace.len() - 1)
    }
}

impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (l, r, op) = match self {
            Formula::Leaf(s) => return write!(f, "{s}"),
            Formula::Then(l, r) => (l, r, ';'),
            Formula::And(l, r) => (l, r, '&'),
            Formula::Or(l, r) => (l, r, '|'),
        };
        let p = self.precedence();
        // left-associative: the left operand only needs parens when it binds looser
        if l.precedence() < p {
            write!(f, "({l})")?;
        } else {
            write!(f, "{l}")?;
        }
        write!(f, "{op}")?;
        if r.precedence() <= p {
            write!(f, "({r})")
        } else {
            write!(f, "{r}")
        }
    }
}

struct Parser<'a> {
    chars: Vec<(usize, char)>,
    at: usize,
    len: usize,
    alphabet: &'a Alphabet,
}

impl Parser<'_> {
    fn skip_ws(&mut self) {
        while matches!(self.chars.get(self.at), Some((_, c)) if c.is_whitespace()) {
            self.at += 1;
        }
    }

    fn peek(&mut self) -> Option<(usize, char)> {
        self.skip_ws();
        self.chars.get(self.at).copied()
    }

    fn eat(&mut self, op: char) -> bool {
        if matches!(self.peek(), Some((_, c)) if c == op) {
            self.at += 1;
            true
        } else {
            false
        }
    }

    fn or_expr(&mut self) -> Result<Formula> {
        let mut f = self.and_expr()?;
        while self.eat('|') {
            f = Formula::or(f, self.and_expr()?);
        }
        Ok(f)
    }

    fn and_expr(&mut self) -> Result<Formula> {
        let mut f = self.then_expr()?;
        while self.eat('&') {
            f = Formula::and(f, self.then_expr()?);
        }
        Ok(f)
    }

    fn then_expr(&mut self) -> Result<Formula> {
        let mut f = self.atom()?;
        while self.eat(';') {
            f = Formula::then(f, self.atom()?);
        }
        Ok(f)
    }

    fn atom(&mut self) -> Result<Formula> {
        match self.peek() {
            None => Err(Error::Syntax {
                pos: self.len,
                msg: "unexpected end of formula".into(),
            }),
            Some((open, '(')) => {
                self.at += 1;
                let f = self.or_expr()?;
                if !self.eat(')') {
                    let pos = self.peek().map_or(self.len, |(p, _)| p);
                    return Err(Error::Syntax {
                        pos,
                        msg: format!("unclosed `(` opened at offset {open}"),
                    });
                }
                Ok(f)
            }
            Some((pos, c)) => {
                let Some(sym) = Symbol::new(c) else {
                    return Err(Error::Syntax {
                        pos,
                        msg: format!("expected a symbol or `(`, found `{c}`"),
                    });
                };
                if !self.alphabet.contains(&sym) {
                    return Err(Error::UnknownSymbol { symbol: c, pos });
                }
                self.at += 1;
                Ok(Formula::Leaf(sym))
            }
        }
    }
}

#[derive(Clone, Copy)]
enum Flat {
    Leaf(Symbol),
    Then(usize, usize),
    Or(usize, usize),
    And(usize, usize),
}

fn flatten(f: &Formula, nodes: &mut Vec<Flat>) -> usize {
    let flat = match f {
        Formula::Leaf(s) => Flat::Leaf(*s),
        Formula::Then(l, r) => Flat::Then(flatten(l, nodes), flatten(r, nodes)),
        Formula::Or(l, r) => Flat::Or(flatten(l, nodes), flatten(r, nodes)),
        Formula::And(l, r) => Flat::And(flatten(l, nodes), flatten(r, nodes)),
    };
    nodes.push(flat);
    nodes.len() - 1
}

struct Satisfier<'a> {
    nodes: &'a [Flat],
    trace: &'a LabelTrace,
    memo: HashMap<(usize, usize, usize), bool>,
}

impl Satisfier<'_> {
    /// Does `trace[i..=j]` satisfy node `n`?
    fn holds(&mut self, n: usize, i: usize, j: usize) -> bool {
        if j <= i {
            return false;
        }
        if let Some(&v) = self.memo.get(&(n, i, j)) {
            return v;
        }
        let v = match self.nodes[n] {
            Flat::Leaf(g) => self.trace[i] != Some(g) && self.trace[j] == Some(g),
            Flat::Then(l, r) => self.then(l, r, i, j),
            Flat::Or(l, r) => self.holds(l, i, j) || self.holds(r, i, j),
            Flat::And(l, r) => self.then(l, r, i, j) || self.then(r, l, i, j),
        };
        self.memo.insert((n, i, j), v);
        v
    }

    fn then(&mut self, l: usize, r: usize, i: usize, j: usize) -> bool {
        (i + 1..j).any(|k| self.holds(l, i, k) && self.holds(r, k, j))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Edge {
    pub from: usize,
    pub symbol: Symbol,
    pub to: usize,
}

/// Nondeterministic machine over subgoal symbols. Nodes are `0..node_count`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fsm {
    pub node_count: usize,
    pub edges: Vec<Edge>,
    pub initial: BTreeSet<usize>,
    pub accepting: BTreeSet<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FsmMetrics {
    /// Most edges on any initial-to-accepting path.
    pub longest_path: usize,
    /// Most out-edges (distinct symbol/target pairs) leaving one node.
    pub max_out_degree: usize,
}

impl Fsm {
    /// Compiles a formula. The result has one initial node (`v0`) and one
    /// accepting sink; `l;r` glues `l`'s sink onto `r`'s source, `l|r`
    /// shares the source and merges sinks, `l&r` is `(l;r)|(r;l)`.
    pub fn compile(f: &Formula) -> Fsm {
        let mut b = Builder::default();
        let start = b.node();
        let end = b.build(f, start);
        b.finish(start, end)
    }

    pub fn alphabet(&self) -> Alphabet {
        self.edges.iter().map(|e| e.symbol).collect()
    }

    pub fn out_edges(&self, node: usize) -> impl Iterator<Item = &Edge> {
        self.edges.iter().filter(move |e| e.from == node)
    }

    fn targets(&self, node: usize, symbol: Symbol) -> impl Iterator<Item = usize> + '_ {
        self.out_edges(node)
            .filter(move |e| e.symbol == symbol)
            .map(|e| e.to)
    }

    /// Consumes `symbols` from the initial set. A symbol follows every
    /// matching out-edge of the current node; a node with no matching edge
    /// keeps its position.
    pub fn accepts(&self, symbols: &[Symbol]) -> bool {
        let mut current = self.initial.clone();
        for &s in symbols {
            current = self.step_set(&current, s);
        }
        !current.is_disjoint(&self.accepting)
    }

    /// One subset-construction step with stay-when-unmatched semantics.
    pub fn step_set(&self, current: &BTreeSet<usize>, s: Symbol) -> BTreeSet<usize> {
        let mut next = BTreeSet::new();
        for &v in current {
            let mut matched = false;
            for t in self.targets(v, s) {
                matched = true;
                next.insert(t);
            }
            if !matched {
                next.insert(v);
            }
        }
        next
    }

    /// Strict successor set: only edges labeled `s`, no staying.
    pub fn advance(&self, current: &BTreeSet<usize>, s: Symbol) -> BTreeSet<usize> {
        current.iter().flat_map(|&v| self.targets(v, s)).collect()
    }

    /// Runs the machine over a per-state label trace; agrees with
    /// [`Formula::satisfies`] on the formula this machine was compiled from.
    pub fn accepts_trace(&self, trace: &LabelTrace) -> bool {
        let Some((&first, rest)) = trace.split_first() else {
            return false;
        };
        let mut run = TraceRun::new(self, first);
        let mut last = false;
        for &label in rest {
            last = run.push(self, label);
        }
        last
    }

    pub fn metrics(&self) -> Result<FsmMetrics> {
        let mut memo: Vec<Option<Option<usize>>> = vec![None; self.node_count];
        let mut on_stack = vec![false; self.node_count];
        let mut longest = 0;
        for &i in &self.initial {
            if let Some(d) = self.longest_from(i, &mut memo, &mut on_stack)? {
                longest = longest.max(d);
            }
        }
        let max_out_degree = (0..self.node_count)
            .map(|v| {
                self.out_edges(v)
                    .map(|e| (e.symbol, e.to))
                    .collect::<BTreeSet<_>>()
                    .len()
            })
            .max()
            .unwrap_or(0);
        Ok(FsmMetrics {
            longest_path: longest,
            max_out_degree,
        })
    }

    /// Longest edge count from `v` to an accepting node, `None` if none is reachable.
    fn longest_from(
        &self,
        v: usize,
        memo: &mut Vec<Option<Option<usize>>>,
        on_stack: &mut Vec<bool>,
    ) -> Result<Option<usize>> {
        if let Some(m) = memo[v] {
            return Ok(m);
        }
        if on_stack[v] {
            return Err(Error::CyclicFsm(v));
        }
        on_stack[v] = true;
        let mut best = self.accepting.contains(&v).then_some(0);
        let succ: Vec<usize> = self.out_edges(v).map(|e| e.to).collect();
        for t in succ {
            if let Some(d) = self.longest_from(t, memo, on_stack)? {
                best = Some(best.map_or(d + 1, |b: usize| b.max(d + 1)));
            }
        }
        on_stack[v] = false;
        memo[v] = Some(best);
        Ok(best)
    }

    pub fn to_dot(&self) -> String {
        let mut out = String::from("digraph fsm {\n  rankdir=LR;\n");
        out.push_str("  __start [shape=point];\n");
        for v in 0..self.node_count {
            let shape = if self.accepting.contains(&v) {
                "doublecircle"
            } else {
                "circle"
            };
            out.push_str(&format!("  v{v} [shape={shape}];\n"));
        }
        for &i in &self.initial {
            out.push_str(&format!("  __start -> v{i};\n"));
        }
        for e in &self.edges {
            out.push_str(&format!("  v{} -> v{} [label=\"{}\"];\n", e.from, e.to, e.symbol));
        }
        out.push_str("}\n");
        out
    }
}

#[derive(Default)]
struct Builder {
    nodes: usize,
    edges: Vec<Edge>,
}

impl Builder {
    fn node(&mut self) -> usize {
        self.nodes += 1;
        self.nodes - 1
    }

    /// Builds `f` starting at `start` and returns its sink.
    fn build(&mut self, f: &Formula, start: usize) -> usize {
        match f {
            Formula::Leaf(s) => {
                let end = self.node();
                self.edges.push(Edge {
                    from: start,
                    symbol: *s,
                    to: end,
                });
                end
            }
            Formula::Then(l, r) => {
                let mid = self.build(l, start);
                self.build(r, mid)
            }
            Formula::Or(l, r) => {
                let a = self.build(l, start);
                let b = self.build(r, start);
                self.merge(b, a);
                a
            }
            Formula::And(l, r) => {
                let mid = self.build(l, start);
                let a = self.build(r, mid);
                let mid = self.build(r, start);
                let b = self.build(l, mid);
                self.merge(b, a);
                a
            }
        }
    }

    fn merge(&mut self, from: usize, into: usize) {
        for e in &mut self.edges {
            if e.from == from {
                e.from = into;
            }
            if e.to == from {
                e.to = into;
            }
        }
    }

    /// Renumbers live nodes in topological order: source first, sink last.
    fn finish(self, start: usize, end: usize) -> Fsm {
        let mut edges = self.edges;
        edges.sort();
        edges.dedup();
        let live: BTreeSet<usize> = edges
            .iter()
            .flat_map(|e| [e.from, e.to])
            .chain([start, end])
            .collect();
        let mut indeg: BTreeMap<usize, usize> = live.iter().map(|&v| (v, 0)).collect();
        for e in &edges {
            *indeg.get_mut(&e.to).unwrap() += 1;
        }
        let mut order = Vec::new();
        let mut ready: BTreeSet<usize> = indeg
            .iter()
            .filter(|(_, &d)| d == 0)
            .map(|(&v, _)| v)
            .collect();
        while let Some(v) = ready.pop_first() {
            order.push(v);
            for e in edges.iter().filter(|e| e.from == v) {
                let d = indeg.get_mut(&e.to).unwrap();
                *d -= 1;
                if *d == 0 {
                    ready.insert(e.to);
                }
            }
        }
        let id: BTreeMap<usize, usize> = order.iter().enumerate().map(|(i, &v)| (v, i)).collect();
        let mut edges: Vec<Edge> = edges
            .into_iter()
            .map(|e| Edge {
                from: id[&e.from],
                symbol: e.symbol,
                to: id[&e.to],
            })
            .collect();
        edges.sort();
        Fsm {
            node_count: order.len(),
            edges,
            initial: BTreeSet::from([id[&start]]),
            accepting: BTreeSet::from([id[&end]]),
        }
    }
}

/// Incremental trace-level run of an [`Fsm`].
///
/// Each tracked position is a node plus the symbol that entered it (the
/// first state's label for initial nodes). A labeled state may advance any
/// position along an edge with its symbol, except when that symbol is the
/// one that entered the position; every position may also stay. The run
/// accepts at a step when that step's label moves some position into an
/// accepting node.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TraceRun {
    positions: BTreeSet<(usize, Option<Symbol>)>,
}

impl TraceRun {
    pub fn new(fsm: &Fsm, first_label: Option<Symbol>) -> Self {
        TraceRun {
            positions: fsm.initial.iter().map(|&v| (v, first_label)).collect(),
        }
    }

    /// Feeds the next state's label; returns whether the run accepts here.
    pub fn push(&mut self, fsm: &Fsm, label: Option<Symbol>) -> bool {
        let Some(s) = label else {
            return false;
        };
        let entered: Vec<(usize, Option<Symbol>)> = self
            .positions
            .iter()
            .filter(|(_, entry)| *entry != Some(s))
            .flat_map(|&(v, _)| fsm.targets(v, s))
            .map(|t| (t, Some(s)))
            .collect();
        let accepted = entered.iter().any(|(t, _)| fsm.accepting.contains(t));
        self.positions.extend(entered);
        accepted
    }

    /// Nodes currently reachable.
    pub fn nodes(&self) -> BTreeSet<usize> {
        self.positions.iter().map(|&(v, _)| v).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sym(c: char) -> Symbol {
        Symbol::new(c).unwrap()
    }

    fn trace(s: &str) -> Vec<Option<Symbol>> {
        s.chars().map(|c| if c == '_' { None } else { Some(sym(c)) }).collect()
    }

    fn syms(s: &str) -> Vec<Symbol> {
        s.chars().map(sym).collect()
    }

    fn fig1b() -> Fsm {
        Fsm::compile(&Formula::parse("c;(b|w);d", &alphabet("cbwd")).unwrap())
    }

    #[test]
    fn parses_motivating_example() {
        let f = Formula::parse("c;(b|w);d", &alphabet("cbwd")).unwrap();
        let want = Formula::then(
            Formula::then(Formula::leaf('c'), Formula::or(Formula::leaf('b'), Formula::leaf('w'))),
            Formula::leaf('d'),
        );
        assert_eq!(f, want);
    }

    #[test]
    fn parses_single_leaf_and_precedence() {
        assert_eq!(Formula::parse("a", &alphabet("a")).unwrap(), Formula::leaf('a'));
        let f = Formula::parse("a;b|b;c", &alphabet("abc")).unwrap();
        let want = Formula::or(
            Formula::then(Formula::leaf('a'), Formula::leaf('b')),
            Formula::then(Formula::leaf('b'), Formula::leaf('c')),
        );
        assert_eq!(f, want);
        let g = Formula::parse("a|b&c;d", &alphabet("abcd")).unwrap();
        let want = Formula::or(
            Formula::leaf('a'),
            Formula::and(Formula::leaf('b'), Formula::then(Formula::leaf('c'), Formula::leaf('d'))),
        );
        assert_eq!(g, want);
    }

    #[test]
    fn parse_errors_carry_positions() {
        match Formula::parse("a;(b", &alphabet("ab")) {
            Err(Error::Syntax { pos, .. }) => assert_eq!(pos, 4),
            other => panic!("{other:?}"),
        }
        match Formula::parse("a;x", &alphabet("ab")) {
            Err(Error::UnknownSymbol { symbol: 'x', pos: 2 }) => {}
            other => panic!("{other:?}"),
        }
        assert!(matches!(Formula::parse("a b", &alphabet("ab")), Err(Error::Syntax { pos: 2, .. })));
        assert!(matches!(Formula::parse("", &alphabet("ab")), Err(Error::Syntax { .. })));
        assert!(matches!(Formula::parse("a;;b", &alphabet("ab")), Err(Error::Syntax { pos: 2, .. })));
    }

    #[test]
    fn display_round_trips() {
        for text in ["c;(b|w);d", "(a;b)|(b;c)", "a;(b;c)", "(a|b)&c", "a&(b&c)", "((a;b)|c)&d"] {
            let f = Formula::parse_open(text).unwrap();
            let printed = f.to_string();
            assert_eq!(Formula::parse_open(&printed).unwrap(), f, "{text} -> {printed}");
        }
        assert_eq!(Formula::parse_open("(a;b)|(b;c)").unwrap().to_string(), "a;b|b;c");
    }

    #[test]
    fn satisfaction_examples() {
        let f = Formula::parse("c;(b|w);d", &alphabet("cbwd")).unwrap();
        assert!(f.satisfies(&trace("_cwd")));
        assert!(!Formula::leaf('c').satisfies(&trace("c")));
        // b then a: prefix [_,b] satisfies b, suffix [b,_,a] satisfies a
        let and = Formula::and(Formula::leaf('a'), Formula::leaf('b'));
        assert!(and.satisfies(&trace("_b_a")));
        assert!(!and.satisfies(&trace("_b_b")));
        // the shared boundary state makes an immediate repeat unsatisfiable
        let aa = Formula::parse_open("a;a").unwrap();
        assert!(!aa.satisfies(&trace("_a_a")));
        assert!(!Formula::leaf('a').satisfies(&trace("a_a")));
        assert!(!Formula::leaf('a').satisfies(&trace("_a_")));
    }

    #[test]
    fn compiles_motivating_machine() {
        let m = fig1b();
        assert_eq!(m.node_count, 4);
        let e = |from, c, to| Edge { from, symbol: sym(c), to };
        assert_eq!(m.edges, vec![e(0, 'c', 1), e(1, 'b', 2), e(1, 'w', 2), e(2, 'd', 3)]);
        assert_eq!(m.initial, BTreeSet::from([0]));
        assert_eq!(m.accepting, BTreeSet::from([3]));

        let leaf = Fsm::compile(&Formula::leaf('a'));
        assert_eq!(leaf.node_count, 2);
        assert_eq!(leaf.edges, vec![e(0, 'a', 1)]);
    }

    #[test]
    fn symbol_level_acceptance() {
        let m = fig1b();
        assert!(m.accepts(&syms("cbd")));
        assert!(m.accepts(&syms("cwd")));
        assert!(!m.accepts(&syms("bcd")));
        assert!(!m.accepts(&[]));
        let or = Fsm::compile(&Formula::parse_open("(a;b)|(b;c)").unwrap());
        assert!(or.accepts(&syms("ab")));
        assert!(or.accepts(&syms("bc")));
        assert!(!or.accepts(&syms("ba")));
        assert!(!or.accepts(&syms("ca")));
    }

    #[test]
    fn empty_run_accepts_iff_initial_is_accepting() {
        let mut m = Fsm::compile(&Formula::leaf('a'));
        assert!(!m.accepts(&[]));
        m.accepting.insert(0);
        assert!(m.accepts(&[]));
    }

    #[test]
    fn metrics_match_enumeration() {
        assert_eq!(
            fig1b().metrics().unwrap(),
            FsmMetrics { longest_path: 3, max_out_degree: 2 }
        );
        assert_eq!(
            Fsm::compile(&Formula::leaf('a')).metrics().unwrap(),
            FsmMetrics { longest_path: 1, max_out_degree: 1 }
        );
        let sym6 = Fsm::compile(&Formula::parse_open("(a;b;c)|(d;e;f)").unwrap());
        assert_eq!(sym6.metrics().unwrap(), FsmMetrics { longest_path: 3, max_out_degree: 2 });
    }

    #[test]
    fn cyclic_machine_is_rejected() {
        let mut m = Fsm::compile(&Formula::parse_open("a;b").unwrap());
        m.edges.push(Edge { from: 1, symbol: sym('c'), to: 0 });
        assert!(matches!(m.metrics(), Err(Error::CyclicFsm(_))));
    }

    #[test]
    fn trace_run_matches_satisfaction_on_examples() {
        let f = Formula::parse("c;(b|w);d", &alphabet("cbwd")).unwrap();
        let m = Fsm::compile(&f);
        for t in ["_cwd", "_cbd", "_bcd", "c_bd", "_cbdx", "_cb_d", "_cbd_", "_cdbd"] {
            let t = trace(t);
            assert_eq!(m.accepts_trace(&t), f.satisfies(&t), "{t:?}");
        }
    }

    #[test]
    fn dot_marks_accepting_nodes() {
        let dot = fig1b().to_dot();
        assert!(dot.contains("v3 [shape=doublecircle]"));
        assert!(dot.contains("v1 -> v2 [label=\"w\"]"));
    }
}
