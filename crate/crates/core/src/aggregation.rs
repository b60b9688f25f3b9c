//! Approximate-aggregation diagnostics on solved savings functions.
//!
//! Agents of each prospects class are grouped into wealth intervals
//! `[a, b)` cut where the savings rate has risen by `epsilon` since the left
//! endpoint. Aggregate investment is then approximated by charging every
//! member of a bin the rate at its left endpoint.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::population::PopulationState;
use crate::rng;
use crate::solver::{AgentModel, Policy};
use crate::tree::{ClassId, NodeId};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bin {
    pub class: ClassId,
    pub lo: f64,
    /// Open right endpoint; `None` for the last bin of a class.
    pub hi: Option<f64>,
    /// Savings rate at the left endpoint.
    pub rate: f64,
    pub members: Vec<usize>,
    /// Bin wealth in goods units, `sum of omega_j * Y`.
    pub wealth: f64,
}

impl Bin {
    pub fn contains(&self, omega: f64) -> bool {
        omega >= self.lo && self.hi.is_none_or(|h| omega < h)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Binning {
    pub node: NodeId,
    pub epsilon: f64,
    pub goods: f64,
    pub classes: usize,
    pub agents: usize,
    pub bins: Vec<Bin>,
}

impl Binning {
    /// Number of bins constructed, occupied or not.
    pub fn count(&self) -> usize {
        self.bins.len()
    }

    pub fn occupied(&self) -> usize {
        self.bins.iter().filter(|b| !b.members.is_empty()).count()
    }

    /// `M epsilon / s`: the constant in the bin-count estimate.
    pub fn count_constant(&self) -> f64 {
        self.count() as f64 * self.epsilon.min(1.0) / self.classes as f64
    }

    /// Largest within-bin spread of member savings rates.
    pub fn max_spread(&self, pop: &PopulationState, policy: &Policy) -> f64 {
        self.bins
            .iter()
            .filter(|b| !b.members.is_empty())
            .map(|b| {
                let g = b.members.iter().map(|&j| policy.gamma(self.node, b.class, pop.wealth[j]));
                let (lo, hi) = g.fold((f64::MAX, f64::MIN), |(lo, hi), x| (lo.min(x), hi.max(x)));
                hi - lo
            })
            .fold(0.0, f64::max)
    }
}

/// Greedy epsilon-binning of the population at `pop.node`.
///
/// Within a class, members are swept in order of wealth. A bin opens at the
/// wealth of its first member `a` and takes every following member whose
/// rate is below `gamma(a) + epsilon`; the next bin opens at the first member
/// left out. An empty bin `[0, a)` below the poorest member completes the
/// partition.
pub fn bin_agents(pop: &PopulationState, policy: &Policy, epsilon: f64, goods: f64) -> Result<Binning> {
    if !(epsilon > 0.0) {
        return Err(Error::Domain(format!("epsilon must be positive, got {epsilon}")));
    }
    let node = pop.node;
    if policy.terminal.get(node).copied().unwrap_or(true) {
        return Err(Error::Consistency(format!("no savings function at node {node}")));
    }
    let classes = policy.tables[node].len();
    if let Some(bad) = pop.classes.iter().find(|&&l| l >= classes) {
        return Err(Error::Consistency(format!("agent class {bad} unknown to the policy")));
    }
    let mut bins = Vec::new();
    for class in 0..classes {
        let g = |w: f64| policy.gamma(node, class, w);
        let mut members: Vec<usize> = (0..pop.len()).filter(|&j| pop.classes[j] == class).collect();
        members.sort_by(|&a, &b| pop.wealth[a].total_cmp(&pop.wealth[b]));
        let empty = |lo: f64, hi: Option<f64>| Bin { class, lo, hi, rate: g(lo), members: Vec::new(), wealth: 0.0 };
        let Some(&first) = members.first() else {
            bins.push(empty(0.0, None));
            continue;
        };
        if pop.wealth[first] > 0.0 {
            bins.push(empty(0.0, Some(pop.wealth[first])));
        }
        let mut k = 0;
        while k < members.len() {
            let lo = pop.wealth[members[k]];
            let mut bin = empty(lo, None);
            let target = bin.rate + epsilon;
            while k < members.len() && (epsilon >= 1.0 || g(pop.wealth[members[k]]) < target) {
                bin.members.push(members[k]);
                bin.wealth += pop.wealth[members[k]] * goods;
                k += 1;
            }
            if k < members.len() {
                bin.hi = Some(pop.wealth[members[k]]);
            }
            bins.push(bin);
        }
    }
    Ok(Binning { node, epsilon, goods, classes, agents: pop.len(), bins })
}

/// Exact aggregate investment `sum_j gamma(omega_j) omega_j Y`.
pub fn exact_investment(pop: &PopulationState, policy: &Policy, goods: f64) -> f64 {
    pop.classes.iter().zip(&pop.wealth).map(|(&l, &w)| policy.gamma(pop.node, l, w) * w * goods).sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AggregationError {
    pub exact: f64,
    pub binned: f64,
    pub error: f64,
    /// `error / (epsilon Y)`; at most one for a passing estimate.
    pub ratio: f64,
    pub pass: bool,
}

/// Gap between exact and binned aggregate investment.
pub fn aggregation_error(binning: &Binning, pop: &PopulationState, policy: &Policy) -> Result<AggregationError> {
    if binning.node != pop.node || binning.agents != pop.len() {
        return Err(Error::Consistency("binning was built from a different population".into()));
    }
    let mut seen = vec![false; pop.len()];
    for b in &binning.bins {
        for &j in &b.members {
            if seen[j] || pop.classes[j] != b.class || !b.contains(pop.wealth[j]) {
                return Err(Error::Consistency(format!("agent {j} does not belong to its bin")));
            }
            seen[j] = true;
        }
    }
    if seen.iter().any(|s| !s) {
        return Err(Error::Consistency("binning does not cover every agent".into()));
    }
    let exact = exact_investment(pop, policy, binning.goods);
    let binned: f64 = binning.bins.iter().map(|b| b.rate * b.wealth).sum();
    let error = (exact - binned).abs();
    let ratio = error / (binning.epsilon * binning.goods);
    Ok(AggregationError { exact, binned, error, ratio, pass: ratio <= 1.0 })
}

/// Redistributes wealth inside every bin by random pairwise transfers that
/// keep each bin's total and keep members inside the bin's interval.
pub fn reshuffle_within_bins<R: Rng>(binning: &Binning, pop: &PopulationState, rng: &mut R) -> PopulationState {
    let mut wealth = pop.wealth.clone();
    for b in &binning.bins {
        let m = b.members.len();
        if m < 2 {
            continue;
        }
        for _ in 0..2 * m {
            let i = b.members[rng.random_range(0..m)];
            let j = b.members[rng.random_range(0..m)];
            if i == j {
                continue;
            }
            let room_i = wealth[i] - b.lo;
            let room_j = b.hi.map_or(f64::INFINITY, |h| (h - wealth[j]) * (1.0 - 1e-12));
            let t = rng.random::<f64>() * room_i.min(room_j).max(0.0);
            wealth[i] -= t;
            wealth[j] += t;
        }
    }
    PopulationState { node: pop.node, classes: pop.classes.clone(), wealth }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustnessReport {
    pub trials: usize,
    pub base: f64,
    pub max_change: f64,
    /// `max_change / (epsilon Y)`; the estimate allows up to two.
    pub ratio: f64,
    pub pass: bool,
}

/// Largest change in exact aggregate investment over `trials` within-bin
/// reshuffles.
pub fn redistribution_robustness(
    binning: &Binning,
    pop: &PopulationState,
    policy: &Policy,
    trials: usize,
    seed: u64,
) -> RobustnessReport {
    let base = exact_investment(pop, policy, binning.goods);
    let max_change = (0..trials)
        .map(|t| {
            let mut r = rng::stream(seed, binning.node as u64, t as u64, rng::DOMAIN_RESHUFFLE);
            let moved = reshuffle_within_bins(binning, pop, &mut r);
            (exact_investment(&moved, policy, binning.goods) - base).abs()
        })
        .fold(0.0, f64::max);
    let ratio = max_change / (binning.epsilon * binning.goods);
    RobustnessReport { trials, base, max_change, ratio, pass: ratio <= 2.0 }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TotalVariation {
    /// Sum of `|delta gamma|` over adjacent grid points in `(0, upper]`.
    pub tv: f64,
    /// The same sum over every other grid point.
    pub tv_coarse: f64,
    pub refinement_delta: f64,
    /// `gamma(upper) - gamma(omega_min)`.
    pub endpoint_span: f64,
}

pub fn total_variation(policy: &Policy, node: NodeId, class: ClassId, upper: f64) -> TotalVariation {
    if policy.terminal[node] {
        return TotalVariation { tv: 0.0, tv_coarse: 0.0, refinement_delta: 0.0, endpoint_span: 0.0 };
    }
    let t = policy.table(node, class).expect("solved node");
    let k = policy.grid.partition_point(|&w| w <= upper);
    let g = &t.gamma[..k];
    let tv: f64 = g.windows(2).map(|w| (w[1] - w[0]).abs()).sum();
    let coarse: Vec<f64> = g.iter().step_by(2).chain(g.last()).copied().collect();
    let tv_coarse: f64 = coarse.windows(2).map(|w| (w[1] - w[0]).abs()).sum();
    let endpoint_span = policy.gamma(node, class, upper) - g[0];
    TotalVariation { tv, tv_coarse, refinement_delta: (tv - tv_coarse).abs(), endpoint_span }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DerivativeReport {
    pub node: NodeId,
    pub class: ClassId,
    /// Smallest central-difference slope of the tabulated savings rate.
    pub min_slope: f64,
    pub monotone: bool,
    /// Largest `omega * gamma'`.
    pub max_wealth_slope: f64,
    /// Largest `gamma' * omega^(1-sigma)`.
    pub max_scaled_slope: f64,
    /// Largest relative gap between finite-difference and envelope `V'`.
    pub max_envelope_error: f64,
    pub envelope_points: usize,
}

/// Slope diagnostics on the tabulated savings function, plus the envelope
/// check at every `stride`-th interior grid point below one.
pub fn derivative_checks(
    model: &AgentModel,
    policy: &Policy,
    node: NodeId,
    class: ClassId,
    stride: usize,
) -> DerivativeReport {
    let grid = &policy.grid;
    let sigma = model.params.sigma;
    let mut min_slope = f64::INFINITY;
    let mut max_wealth_slope: f64 = 0.0;
    let mut max_scaled_slope: f64 = 0.0;
    if let Some(t) = policy.table(node, class) {
        for i in 1..grid.len() - 1 {
            let d = (t.gamma[i + 1] - t.gamma[i - 1]) / (grid[i + 1] - grid[i - 1]);
            min_slope = min_slope.min(d);
            max_wealth_slope = max_wealth_slope.max(grid[i] * d);
            max_scaled_slope = max_scaled_slope.max(d * grid[i].powf(1.0 - sigma));
        }
    } else {
        min_slope = 0.0;
    }
    let mut max_envelope_error: f64 = 0.0;
    let mut envelope_points = 0;
    for i in (1..grid.len() - 1).step_by(stride.max(1)) {
        let w = grid[i];
        if w >= 1.0 {
            break;
        }
        if let Ok((_, dv)) = model.value_and_derivative(policy, node, class, w) {
            let h = 1e-5 * w;
            let fd = (model.value(policy, node, class, w + h) - model.value(policy, node, class, w - h)) / (2.0 * h);
            max_envelope_error = max_envelope_error.max(((fd - dv) / dv).abs());
            envelope_points += 1;
        }
    }
    DerivativeReport {
        node,
        class,
        min_slope,
        monotone: min_slope >= -1e-10,
        max_wealth_slope,
        max_scaled_slope,
        max_envelope_error,
        envelope_points,
    }
}
