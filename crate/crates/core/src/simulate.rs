//! Forward simulation of the economy along sampled paths of the event tree.

use std::io::Write;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::aggregates::Aggregates;
use crate::auctioneer::Forecasts;
use crate::employment::{draw_employment, RealizationMode};
use crate::error::{Error, Result};
use crate::params::EconomyParams;
use crate::population::PopulationState;
use crate::rng;
use crate::solver::Policy;
use crate::tree::{ClassId, EventTree, NodeId};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentRecord {
    pub class: ClassId,
    /// Realized wage-bill share on arrival; `None` at the root.
    pub e: Option<f64>,
    pub e_eff: Option<f64>,
    pub omega: f64,
    pub s: f64,
    /// Consumption in goods units.
    pub c: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodRecord {
    pub period: usize,
    pub node: NodeId,
    pub z: f64,
    pub y: f64,
    pub y_eff: f64,
    /// Capital used in production at this node.
    pub capital: Option<f64>,
    /// Forecast capital share; `None` at terminal nodes.
    pub forecast: Option<f64>,
    /// `sum_j s_j - 1`.
    pub clearing_residual: f64,
    /// Goods on hand: output plus undepreciated capital.
    pub resources: f64,
    /// `sum_j c_j + K' - resources` with `K'` the capital agents carry forward.
    pub goods_gap: f64,
    pub below_grid: usize,
    pub agents: Vec<AgentRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathRecord {
    pub path: usize,
    pub periods: Vec<PeriodRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationPanel {
    pub scenario_hash: String,
    pub rng: String,
    pub seed: u64,
    pub paths: Vec<PathRecord>,
}

impl SimulationPanel {
    pub fn below_grid(&self) -> usize {
        self.paths.iter().flat_map(|p| &p.periods).map(|r| r.below_grid).sum()
    }

    pub fn max_goods_gap(&self) -> f64 {
        self.paths.iter().flat_map(|p| &p.periods).map(|r| r.goods_gap.abs()).fold(0.0, f64::max)
    }

    /// One row per path, period and agent.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record([
            "scenario", "path", "period", "node", "z", "y", "y_eff", "capital", "agent", "class", "e", "e_eff",
            "omega", "s", "c",
        ])?;
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for p in &self.paths {
            for r in &p.periods {
                for (j, a) in r.agents.iter().enumerate() {
                    out.write_record([
                        self.scenario_hash.clone(),
                        p.path.to_string(),
                        r.period.to_string(),
                        r.node.to_string(),
                        r.z.to_string(),
                        r.y.to_string(),
                        r.y_eff.to_string(),
                        opt(r.capital),
                        j.to_string(),
                        a.class.to_string(),
                        opt(a.e),
                        opt(a.e_eff),
                        a.omega.to_string(),
                        a.s.to_string(),
                        a.c.to_string(),
                    ])?;
                }
            }
        }
        out.flush()?;
        Ok(())
    }

    /// Population at the `period`-th stop of `path`.
    pub fn population(&self, path: usize, period: usize) -> Option<PopulationState> {
        let r = self.paths.get(path)?.periods.iter().find(|r| r.period == period)?;
        Some(PopulationState {
            node: r.node,
            classes: r.agents.iter().map(|a| a.class).collect(),
            wealth: r.agents.iter().map(|a| a.omega).collect(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimulationOptions {
    pub paths: usize,
    pub seed: u64,
    pub mode: RealizationMode,
}

impl Default for SimulationOptions {
    fn default() -> Self {
        Self { paths: 16, seed: 0, mode: RealizationMode::ExactFraction }
    }
}

fn pick_child<R: Rng>(tree: &EventTree, node: NodeId, rng: &mut R) -> NodeId {
    let children = &tree.node(node).children;
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for c in children {
        acc += c.prob;
        if u < acc {
            return c.node;
        }
    }
    children.iter().rev().find(|c| c.prob > 0.0).expect("checked tree").node
}

/// Simulates `opts.paths` independent paths from `initial` at the root.
pub fn simulate_paths(
    tree: &EventTree,
    params: &EconomyParams,
    forecasts: &Forecasts,
    policy: &Policy,
    initial: &PopulationState,
    opts: &SimulationOptions,
) -> Result<SimulationPanel> {
    if initial.node != tree.root().id {
        return Err(Error::Consistency("simulation starts at the root".into()));
    }
    let agg = Aggregates::compute(tree, params, forecasts, Default::default())?;
    let paths = (0..opts.paths)
        .into_par_iter()
        .map(|path| simulate_one(tree, params, forecasts, policy, &agg, initial, opts, path))
        .collect::<Result<Vec<_>>>()?;
    Ok(SimulationPanel {
        scenario_hash: policy.scenario_hash.clone(),
        rng: rng::RNG_NAME.into(),
        seed: opts.seed,
        paths,
    })
}

#[allow(clippy::too_many_arguments)]
fn simulate_one(
    tree: &EventTree,
    params: &EconomyParams,
    forecasts: &Forecasts,
    policy: &Policy,
    agg: &Aggregates,
    initial: &PopulationState,
    opts: &SimulationOptions,
    path: usize,
) -> Result<PathRecord> {
    let mut node = tree.root().id;
    let mut classes = initial.classes.clone();
    let mut wealth = initial.wealth.clone();
    let mut wages: Option<(Vec<f64>, Vec<f64>)> = None;
    let mut periods = Vec::new();
    loop {
        let n = tree.node(node);
        let y_eff = agg.y_eff(node);
        let forecast = forecasts.omega[node];
        let mut below = 0;
        let agents: Vec<AgentRecord> = (0..wealth.len())
            .map(|j| {
                let ev = policy.eval(node, classes[j], wealth[j]);
                below += ev.below_grid as usize;
                let s = forecast.map_or(0.0, |f| ev.gamma * wealth[j] / f);
                let c = (wealth[j] - s * forecast.unwrap_or(0.0)) * y_eff;
                AgentRecord {
                    class: classes[j],
                    e: wages.as_ref().map(|w| w.0[j]),
                    e_eff: wages.as_ref().map(|w| w.1[j]),
                    omega: wealth[j],
                    s,
                    c,
                }
            })
            .collect();
        let total_s: f64 = agents.iter().map(|a| a.s).sum();
        let carried = forecast.map_or(0.0, |f| total_s * f * y_eff);
        let consumed: f64 = agents.iter().map(|a| a.c).sum();
        let resources = match agg.nodes[node].capital_in {
            Some(k) => agg.nodes[node].y + (1.0 - params.delta) * k,
            None => y_eff,
        };
        periods.push(PeriodRecord {
            period: n.period,
            node,
            z: n.z,
            y: agg.nodes[node].y,
            y_eff,
            capital: agg.nodes[node].capital_in,
            forecast,
            clearing_residual: if forecast.is_some() { total_s - 1.0 } else { 0.0 },
            resources,
            goods_gap: consumed + carried - resources,
            below_grid: below,
            agents,
        });
        if n.is_terminal() {
            break;
        }
        let mut r = rng::stream(opts.seed, path as u64, n.period as u64, rng::DOMAIN_SIMULATION);
        let child = pick_child(tree, node, &mut r);
        let draw = draw_employment(tree, child, &classes, opts.mode, &mut r)?;
        let ws = agg.wage_scale(child);
        let last = periods.last().unwrap();
        let e_eff: Vec<f64> = draw.shares.iter().map(|e| e * ws).collect();
        wealth = last.agents.iter().zip(&e_eff).map(|(a, &e)| params.alpha * a.s + (1.0 - params.alpha) * e).collect();
        classes = draw.next_class;
        wages = Some((draw.shares, e_eff));
        node = child;
    }
    Ok(PathRecord { path, periods })
}
