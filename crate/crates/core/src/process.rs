//! Shock-process specifications, their expansion into event trees, and the
//! risk-of-unemployment / bounded-shock validation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::EconomyParams;
use crate::tree::{ClassId, EmploymentDist, EventTree, NodeId, Outcome, TreeBuilder};

const PROB_TOL: f64 = 1e-12;
pub const DEFAULT_MAX_NODES: usize = 1 << 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProcessSpec {
    #[serde(flatten)]
    pub kind: ProcessKind,
    /// Minimum probability of a zero wage share required at every transition.
    #[serde(default = "default_min_unemp")]
    pub min_unemp_prob: f64,
    /// Bound on aggregate shocks; defaults to ten times the largest shock.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub z_max: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_nodes: Option<usize>,
}

fn default_min_unemp() -> f64 {
    0.01
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ProcessKind {
    /// Each period `(1-u)N` agents are employed and split the wage bill evenly.
    UniformEmployment {
        u: f64,
        #[serde(default = "one")]
        z: f64,
    },
    KsMarkov(KsMarkov),
    ExplicitTree {
        tree: EventTree,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AggState {
    G,
    B,
}

impl AggState {
    fn index(self) -> usize {
        match self {
            AggState::G => 0,
            AggState::B => 1,
        }
    }
}

/// Two-state aggregate Markov chain with aggregate-state-dependent
/// employment transitions. State index 0 is good, 1 is bad; employment
/// index 0 is unemployed, 1 employed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KsMarkov {
    pub z_good: f64,
    pub z_bad: f64,
    /// `transition[s][s']` aggregate transition probabilities.
    pub transition: [[f64; 2]; 2],
    /// `joint[s][s'][e][e']`: probability of moving from `(s, e)` to `(s', e')`.
    pub joint: [[[[f64; 2]; 2]; 2]; 2],
    #[serde(default = "default_state")]
    pub initial_state: AggState,
    /// Unemployment rate per aggregate state used to size the employed wage
    /// share `1/((1-u)N)`; defaults to the stationary rate of the
    /// within-state employment chain.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub unemployment_rates: Option<[f64; 2]>,
}

fn default_state() -> AggState {
    AggState::G
}

impl KsMarkov {
    /// Conditional probability of employment status `e2` after moving from
    /// `(s, e)` to aggregate state `s2`.
    pub fn conditional(&self, s: usize, s2: usize, e: usize, e2: usize) -> f64 {
        self.joint[s][s2][e][e2] / self.transition[s][s2]
    }

    pub fn unemployment_rate(&self, s: usize) -> f64 {
        if let Some(u) = self.unemployment_rates {
            return u[s];
        }
        let loss = self.conditional(s, s, 1, 0);
        let find = self.conditional(s, s, 0, 1);
        if loss + find == 0.0 {
            0.0
        } else {
            loss / (loss + find)
        }
    }

    fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Validation(m));
        if !(self.z_good > self.z_bad && self.z_bad > 0.0) {
            return bad("ks-markov requires z_good > z_bad > 0".into());
        }
        for s in 0..2 {
            let row: f64 = self.transition[s].iter().sum();
            if (row - 1.0).abs() > PROB_TOL || self.transition[s].iter().any(|p| *p < 0.0) {
                return bad(format!("aggregate transition row {s} sums to {row}"));
            }
            for s2 in 0..2 {
                if self.transition[s][s2] == 0.0 {
                    continue;
                }
                for e in 0..2 {
                    let mass: f64 = (0..2).map(|e2| self.conditional(s, s2, e, e2)).sum();
                    if (mass - 1.0).abs() > PROB_TOL || self.joint[s][s2][e].iter().any(|p| *p < 0.0) {
                        return bad(format!("conditional employment mass for (s={s}, s'={s2}, e={e}) is {mass}"));
                    }
                }
            }
        }
        if let Some(u) = self.unemployment_rates {
            if u.iter().any(|x| !(*x >= 0.0 && *x < 1.0)) {
                return bad("unemployment rates must lie in [0,1)".into());
            }
        }
        Ok(())
    }
}

impl ProcessSpec {
    pub fn uniform(u: f64) -> Self {
        Self {
            kind: ProcessKind::UniformEmployment { u, z: 1.0 },
            min_unemp_prob: default_min_unemp(),
            z_max: None,
            max_nodes: None,
        }
    }

    pub fn explicit(tree: EventTree) -> Self {
        Self {
            kind: ProcessKind::ExplicitTree { tree },
            min_unemp_prob: default_min_unemp(),
            z_max: None,
            max_nodes: None,
        }
    }

    pub fn ks(ks: KsMarkov) -> Self {
        Self { kind: ProcessKind::KsMarkov(ks), min_unemp_prob: default_min_unemp(), z_max: None, max_nodes: None }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.min_unemp_prob >= 0.0 && self.min_unemp_prob < 1.0) {
            return Err(Error::Validation("min_unemp_prob must lie in [0,1)".into()));
        }
        match &self.kind {
            ProcessKind::UniformEmployment { u, z } => {
                if !(*u > 0.0 && *u < 1.0) {
                    return Err(Error::Validation(format!("unemployment rate u={u} must lie in (0,1)")));
                }
                if !(*z > 0.0) {
                    return Err(Error::Validation("z must be positive".into()));
                }
                Ok(())
            }
            ProcessKind::KsMarkov(ks) => ks.validate(),
            ProcessKind::ExplicitTree { .. } => Ok(()),
        }
    }

    /// Prospects classes an agent may start in, by name.
    pub fn class_names(&self) -> Vec<String> {
        match &self.kind {
            ProcessKind::UniformEmployment { .. } => vec!["all".into()],
            ProcessKind::KsMarkov(_) => vec!["unemployed".into(), "employed".into()],
            ProcessKind::ExplicitTree { tree } => tree.classes.iter().map(|c| c.name.clone()).collect(),
        }
    }
}

/// Expands a process specification into a depth-`T` event tree.
pub fn build_event_tree(spec: &ProcessSpec, params: &EconomyParams) -> Result<EventTree> {
    spec.validate()?;
    params.validate()?;
    let periods = params.periods;
    let n = params.agents as f64;
    let cap = spec.max_nodes.unwrap_or(DEFAULT_MAX_NODES);
    let tree = match &spec.kind {
        ProcessKind::UniformEmployment { u, z } => {
            if periods > cap {
                return Err(Error::Resource(format!("{periods} nodes exceed cap {cap}")));
            }
            let share = 1.0 / ((1.0 - u) * n);
            if share > 1.0 {
                return Err(Error::Validation(format!(
                    "employed share 1/((1-u)N) = {share} exceeds one; need (1-u)N >= 1"
                )));
            }
            let dist = EmploymentDist::new(vec![Outcome::new(0.0, *u), Outcome::new(share, 1.0 - u)]);
            let mut b = TreeBuilder::new(*z);
            let mut last = 0;
            for _ in 1..periods {
                last = b.add_child(last, *z, 1.0);
            }
            let z_max = spec.z_max.unwrap_or(10.0 * z);
            b.finish(&["all"], z_max, |_, _| dist.clone())
        }
        ProcessKind::KsMarkov(ks) => build_ks(ks, periods, n, cap, spec.z_max)?,
        ProcessKind::ExplicitTree { tree } => tree.clone(),
    };
    tree.check(periods)?;
    Ok(tree)
}

fn build_ks(ks: &KsMarkov, periods: usize, n: f64, cap: usize, z_max: Option<f64>) -> Result<EventTree> {
    let zs = [ks.z_good, ks.z_bad];
    let mut shares = [0.0; 2];
    for s in 0..2 {
        let u = ks.unemployment_rate(s);
        shares[s] = 1.0 / ((1.0 - u) * n);
        if shares[s] > 1.0 {
            return Err(Error::Validation(format!("employed share in state {s} is {}; need (1-u)N >= 1", shares[s])));
        }
    }
    let s0 = ks.initial_state.index();
    let mut b = TreeBuilder::new(zs[s0]);
    let mut states: Vec<usize> = vec![s0];
    let mut frontier: Vec<NodeId> = vec![0];
    for _ in 1..periods {
        let mut next = Vec::new();
        for &parent in &frontier {
            let s = states[parent];
            for s2 in 0..2 {
                let p = ks.transition[s][s2];
                if p == 0.0 {
                    continue;
                }
                if b.len() >= cap {
                    return Err(Error::Resource(format!("event tree exceeds {cap} nodes")));
                }
                let id = b.add_child(parent, zs[s2], p);
                states.push(s2);
                next.push(id);
            }
        }
        frontier = next;
    }
    let parents: Vec<Option<NodeId>> = b.nodes().iter().map(|n| n.parent).collect();
    let z_max = z_max.unwrap_or(10.0 * ks.z_good);
    Ok(b.finish(&["unemployed", "employed"], z_max, |class: ClassId, node| {
        let s = states[parents[node.id].expect("non-root")];
        let s2 = states[node.id];
        EmploymentDist::new(vec![
            Outcome::new(0.0, ks.conditional(s, s2, class, 0)).to_class(0),
            Outcome::new(shares[s2], ks.conditional(s, s2, class, 1)).to_class(1),
        ])
    }))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionMass {
    pub class: ClassId,
    pub node: NodeId,
    pub unemployment_mass: f64,
    pub ok: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub pass: bool,
    pub min_unemp_prob: f64,
    pub transitions: Vec<TransitionMass>,
    pub z_bounded: bool,
    #[serde(default)]
    pub population_ok: Option<bool>,
    pub failures: Vec<String>,
}

impl ValidationReport {
    /// Every agent must belong to exactly one known class.
    pub fn check_population(&mut self, tree: &EventTree, classes: &[ClassId], agents: usize) {
        let mut ok = classes.len() == agents;
        if !ok {
            self.failures.push(format!("{} class labels for {agents} agents", classes.len()));
        }
        for (j, &l) in classes.iter().enumerate() {
            if l >= tree.class_count() {
                ok = false;
                self.failures.push(format!("agent {j} assigned to unknown class {l}"));
            }
        }
        self.population_ok = Some(ok);
        self.pass &= ok;
    }
}

/// Reports the zero-wage mass at every class/transition pair. Never fails;
/// callers decide what to do with a failing report.
pub fn validate_process(tree: &EventTree, min_unemp_prob: f64) -> ValidationReport {
    let mut transitions = Vec::new();
    let mut failures = Vec::new();
    for (l, class) in tree.classes.iter().enumerate() {
        for (node, slot) in class.transitions.iter().enumerate() {
            if let Some(d) = slot {
                let mass = d.unemployment_mass() + 0.0;
                let ok = mass >= min_unemp_prob && mass > 0.0;
                if !ok {
                    failures.push(format!(
                        "class {l} ({}) into node {node}: unemployment mass {mass} must be positive and at least {min_unemp_prob}",
                        class.name
                    ));
                }
                transitions.push(TransitionMass { class: l, node, unemployment_mass: mass, ok });
            }
        }
    }
    let mut z_bounded = true;
    for n in &tree.nodes {
        if n.z > tree.z_max {
            z_bounded = false;
            failures.push(format!("node {}: z={} exceeds z_max={}", n.id, n.z, tree.z_max));
        }
    }
    ValidationReport {
        pass: failures.is_empty(),
        min_unemp_prob,
        transitions,
        z_bounded,
        population_ok: None,
        failures,
    }
}
