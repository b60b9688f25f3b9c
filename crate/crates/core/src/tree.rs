//! Finite event trees of aggregate shocks with per-class employment
//! distributions attached to every transition.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type NodeId = usize;
pub type ClassId = usize;

const PROB_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Child {
    pub node: NodeId,
    pub prob: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub id: NodeId,
    /// 1-based period index; the root sits at period 1.
    pub period: usize,
    /// Aggregate productivity shock realized on entry to this node.
    pub z: f64,
    #[serde(default)]
    pub parent: Option<NodeId>,
    #[serde(default)]
    pub children: Vec<Child>,
}

impl Node {
    pub fn is_terminal(&self) -> bool {
        self.children.is_empty()
    }
}

/// One support point of an employment distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Outcome {
    /// Wage-bill share.
    pub e: f64,
    pub prob: f64,
    /// Class the agent belongs to after this outcome; `None` keeps the
    /// current class.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub next_class: Option<ClassId>,
}

impl Outcome {
    pub fn new(e: f64, prob: f64) -> Self {
        Self { e, prob, next_class: None }
    }

    pub fn to_class(mut self, class: ClassId) -> Self {
        self.next_class = Some(class);
        self
    }

    pub fn next_class_or(&self, current: ClassId) -> ClassId {
        self.next_class.unwrap_or(current)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmploymentDist {
    pub outcomes: Vec<Outcome>,
}

impl EmploymentDist {
    pub fn new(outcomes: Vec<Outcome>) -> Self {
        Self { outcomes }
    }

    pub fn degenerate(e: f64) -> Self {
        Self { outcomes: vec![Outcome::new(e, 1.0)] }
    }

    /// Probability mass on a zero wage share.
    pub fn unemployment_mass(&self) -> f64 {
        self.outcomes.iter().filter(|o| o.e == 0.0).map(|o| o.prob).sum()
    }

    pub fn total_mass(&self) -> f64 {
        self.outcomes.iter().map(|o| o.prob).sum()
    }

    pub fn mean(&self) -> f64 {
        self.outcomes.iter().map(|o| o.e * o.prob).sum()
    }
}

/// A prospects class: agents sharing employment distributions at every
/// transition. `transitions[child]` is the distribution on the edge into
/// `child`; the root entry is `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProspectsClass {
    pub name: String,
    pub transitions: Vec<Option<EmploymentDist>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventTree {
    pub nodes: Vec<Node>,
    pub classes: Vec<ProspectsClass>,
    pub z_max: f64,
}

impl EventTree {
    pub fn root(&self) -> &Node {
        &self.nodes[0]
    }

    pub fn node(&self, id: NodeId) -> &Node {
        &self.nodes[id]
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn class_count(&self) -> usize {
        self.classes.len()
    }

    /// Number of periods spanned by the tree.
    pub fn depth(&self) -> usize {
        self.nodes.iter().map(|n| n.period).max().unwrap_or(0)
    }

    /// Remaining horizon at a node, counting the node's own period.
    pub fn horizon(&self, id: NodeId) -> usize {
        self.depth() + 1 - self.nodes[id].period
    }

    pub fn dist(&self, class: ClassId, child: NodeId) -> Option<&EmploymentDist> {
        self.classes.get(class)?.transitions.get(child)?.as_ref()
    }

    /// Node ids grouped by period, leaf periods last.
    pub fn levels(&self) -> Vec<Vec<NodeId>> {
        let mut out = vec![Vec::new(); self.depth()];
        for n in &self.nodes {
            out[n.period - 1].push(n.id);
        }
        out
    }

    pub fn non_terminal(&self) -> impl Iterator<Item = &Node> {
        self.nodes.iter().filter(|n| !n.is_terminal())
    }

    /// Probability of reaching each node from the root.
    pub fn reach_probabilities(&self) -> Vec<f64> {
        let mut p = vec![0.0; self.nodes.len()];
        p[0] = 1.0;
        for n in &self.nodes {
            for c in &n.children {
                p[c.node] = p[n.id] * c.prob;
            }
        }
        p
    }

    /// Checks structural invariants: a single root at period 1, parents
    /// listed before children, probabilities summing to one, bounded
    /// shocks, employment supports inside `[0,1]`, leaves at depth `periods`.
    pub fn check(&self, periods: usize) -> Result<()> {
        let bad = |m: String| Err(Error::Validation(m));
        if self.nodes.is_empty() {
            return bad("event tree has no nodes".into());
        }
        if self.classes.is_empty() {
            return bad("event tree declares no prospects classes".into());
        }
        for (i, n) in self.nodes.iter().enumerate() {
            if n.id != i {
                return bad(format!("node at index {i} carries id {}", n.id));
            }
            if !(n.z > 0.0 && n.z.is_finite()) {
                return bad(format!("node {i}: shock z={} must be positive", n.z));
            }
            if n.z > self.z_max {
                return bad(format!("node {i}: z={} exceeds z_max={}", n.z, self.z_max));
            }
            match (i, n.parent) {
                (0, None) if n.period == 1 => {}
                (0, _) => return bad("root must be node 0 at period 1 without parent".into()),
                (_, None) => return bad(format!("node {i} has no parent (multiple roots)")),
                (_, Some(p)) => {
                    if p >= i {
                        return bad(format!("node {i}: parent {p} must precede it"));
                    }
                    if self.nodes[p].period + 1 != n.period {
                        return bad(format!("node {i}: period does not follow parent"));
                    }
                    if !self.nodes[p].children.iter().any(|c| c.node == i) {
                        return bad(format!("node {i} is not listed among its parent's children"));
                    }
                }
            }
            if n.is_terminal() {
                if n.period != periods {
                    return bad(format!("leaf {i} sits at period {} but the horizon is {periods}", n.period));
                }
            } else {
                let mass: f64 = n.children.iter().map(|c| c.prob).sum();
                if (mass - 1.0).abs() > PROB_TOL {
                    return bad(format!("node {i}: child probabilities sum to {mass}"));
                }
                for c in &n.children {
                    if c.node >= self.nodes.len() || self.nodes[c.node].parent != Some(i) {
                        return bad(format!("node {i}: dangling child {}", c.node));
                    }
                    if !(c.prob >= 0.0) {
                        return bad(format!("node {i}: negative child probability"));
                    }
                }
            }
        }
        for (l, class) in self.classes.iter().enumerate() {
            if class.transitions.len() != self.nodes.len() {
                return bad(format!("class {l}: expected one transition slot per node"));
            }
            for (child, slot) in class.transitions.iter().enumerate() {
                match (child, slot) {
                    (0, None) => {}
                    (0, Some(_)) => return bad(format!("class {l}: root has no incoming transition")),
                    (_, None) => return bad(format!("class {l}: missing distribution into node {child}")),
                    (_, Some(d)) => {
                        if d.outcomes.is_empty() {
                            return bad(format!("class {l}, node {child}: empty distribution"));
                        }
                        for o in &d.outcomes {
                            if !(0.0..=1.0).contains(&o.e) {
                                return bad(format!("class {l}, node {child}: support point {} outside [0,1]", o.e));
                            }
                            if !(o.prob >= 0.0) {
                                return bad(format!("class {l}, node {child}: negative probability"));
                            }
                            if let Some(nc) = o.next_class {
                                if nc >= self.classes.len() {
                                    return bad(format!("class {l}, node {child}: unknown next class {nc}"));
                                }
                            }
                        }
                        let m = d.total_mass();
                        if (m - 1.0).abs() > PROB_TOL {
                            return bad(format!("class {l}, node {child}: employment probabilities sum to {m}"));
                        }
                    }
                }
            }
        }
        if self.depth() != periods {
            return bad(format!("tree depth {} differs from T={periods}", self.depth()));
        }
        Ok(())
    }
}

/// Incremental builder used by the process generators and tests.
#[derive(Debug, Default)]
pub struct TreeBuilder {
    nodes: Vec<Node>,
}

impl TreeBuilder {
    pub fn new(root_z: f64) -> Self {
        Self { nodes: vec![Node { id: 0, period: 1, z: root_z, parent: None, children: Vec::new() }] }
    }

    pub fn add_child(&mut self, parent: NodeId, z: f64, prob: f64) -> NodeId {
        let id = self.nodes.len();
        let period = self.nodes[parent].period + 1;
        self.nodes.push(Node { id, period, z, parent: Some(parent), children: Vec::new() });
        self.nodes[parent].children.push(Child { node: id, prob });
        id
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    /// Finishes the tree; `dist(class, child)` supplies every transition.
    pub fn finish<F>(self, class_names: &[&str], z_max: f64, mut dist: F) -> EventTree
    where
        F: FnMut(ClassId, &Node) -> EmploymentDist,
    {
        let classes = class_names
            .iter()
            .enumerate()
            .map(|(l, name)| ProspectsClass {
                name: (*name).to_string(),
                transitions: self
                    .nodes
                    .iter()
                    .map(|n| if n.parent.is_none() { None } else { Some(dist(l, n)) })
                    .collect(),
            })
            .collect();
        EventTree { nodes: self.nodes, classes, z_max }
    }
}

/// A deterministic chain of `periods` nodes at shock `z` with a single class
/// facing `dist` at every transition.
pub fn chain(periods: usize, z: f64, dist: EmploymentDist) -> EventTree {
    let mut b = TreeBuilder::new(z);
    let mut last = 0;
    for _ in 1..periods {
        last = b.add_child(last, z, 1.0);
    }
    b.finish(&["all"], 10.0 * z, |_, _| dist.clone())
}
