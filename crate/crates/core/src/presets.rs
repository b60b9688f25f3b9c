//! Small canonical economies used by the test suite, benches, and CLI
//! examples.

use crate::error::Result;
use crate::params::EconomyParams;
use crate::process::{build_event_tree, AggState, KsMarkov, ProcessSpec};
use crate::tree::{EmploymentDist, EventTree, Outcome, TreeBuilder};

/// Two-state aggregate chain with persistence 0.875 and a positive chance
/// of unemployment on every transition.
pub fn ks_example() -> KsMarkov {
    let t = [[0.875, 0.125], [0.125, 0.875]];
    let unemp = |s: usize, s2: usize, e: usize| -> f64 {
        match (s, s2, e) {
            (0, 0, 0) => 0.6,
            (0, 0, 1) => 0.03,
            (0, 1, 0) => 0.75,
            (0, 1, 1) => 0.08,
            (1, 0, 0) => 0.4,
            (1, 0, 1) => 0.02,
            (1, 1, 0) => 0.7,
            _ => 0.05,
        }
    };
    let mut joint = [[[[0.0; 2]; 2]; 2]; 2];
    for s in 0..2 {
        for s2 in 0..2 {
            for e in 0..2 {
                let u = unemp(s, s2, e);
                joint[s][s2][e] = [u * t[s][s2], (1.0 - u) * t[s][s2]];
            }
        }
    }
    KsMarkov {
        z_good: 1.01,
        z_bad: 0.99,
        transition: t,
        joint,
        initial_state: AggState::G,
        unemployment_rates: Some([0.04, 0.1]),
    }
}

/// Uniform-employment chain: `e = 0` with probability `u`, otherwise the
/// equal share `1/((1-u)N)`.
pub fn uniform_tree(u: f64, params: &EconomyParams) -> Result<EventTree> {
    build_event_tree(&ProcessSpec::uniform(u), params)
}

/// Chain on which nobody ever earns a wage.
pub fn no_employment_tree(periods: usize) -> EventTree {
    crate::tree::chain(periods, 1.0, EmploymentDist::degenerate(0.0))
}

/// Deterministic chain with the whole wage bill paid every period.
pub fn full_employment_tree(periods: usize) -> EventTree {
    crate::tree::chain(periods, 1.0, EmploymentDist::degenerate(1.0))
}

/// Binary aggregate tree (good/bad shocks) with a two-point employment
/// distribution whose unemployment risk is higher after a bad shock.
pub fn branching_tree(periods: usize) -> EventTree {
    let mut b = TreeBuilder::new(1.0);
    let mut frontier = vec![0];
    for _ in 1..periods {
        let mut next = Vec::new();
        for p in frontier {
            next.push(b.add_child(p, 1.05, 0.6));
            next.push(b.add_child(p, 0.95, 0.4));
        }
        frontier = next;
    }
    b.finish(&["all"], 10.5, |_, node| {
        if node.z > 1.0 {
            EmploymentDist::new(vec![Outcome::new(0.0, 0.05), Outcome::new(0.8, 0.95)])
        } else {
            EmploymentDist::new(vec![Outcome::new(0.0, 0.2), Outcome::new(0.6, 0.8)])
        }
    })
}

/// Deterministic-aggregate chain with a two-point employment distribution.
pub fn two_point_chain(periods: usize, u: f64, e: f64) -> EventTree {
    crate::tree::chain(periods, 1.0, EmploymentDist::new(vec![Outcome::new(0.0, u), Outcome::new(e, 1.0 - u)]))
}
