//! Realization of wage-bill shares for a population at one tree transition.
//!
//! Two realization modes are offered. In exact-fraction mode each class
//! splits its members across support points in proportion to the class
//! distribution (largest-remainder rounding), members are shuffled into
//! those slots, and shares are normalized to sum to one. In independent
//! mode every agent draws on its own and shares are renormalized.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tree::{ClassId, EmploymentDist, EventTree, NodeId};

pub const DRAW_RETRIES: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RealizationMode {
    #[default]
    ExactFraction,
    Independent,
}

/// Realized employment for every agent on one transition.
#[derive(Debug, Clone, PartialEq)]
pub struct Draw {
    /// Realized wage-bill shares, summing to one unless nobody can work.
    pub shares: Vec<f64>,
    pub next_class: Vec<ClassId>,
}

fn dists<'a>(tree: &'a EventTree, child: NodeId, classes: &[ClassId]) -> Result<Vec<&'a EmploymentDist>> {
    (0..tree.class_count())
        .map(|l| {
            tree.dist(l, child)
                .ok_or_else(|| Error::Consistency(format!("class {l} has no distribution into node {child}")))
        })
        .collect::<Result<Vec<_>>>()
        .and_then(|d| {
            if let Some(bad) = classes.iter().find(|&&l| l >= d.len()) {
                Err(Error::Consistency(format!("unknown class {bad}")))
            } else {
                Ok(d)
            }
        })
}

fn any_positive(dists: &[&EmploymentDist], classes: &[ClassId]) -> bool {
    classes.iter().any(|&l| dists[l].outcomes.iter().any(|o| o.e > 0.0 && o.prob > 0.0))
}

/// Builds a draw from per-agent outcome indices. Returns `None` when a
/// positive wage share was possible but nobody received one.
fn assemble(dists: &[&EmploymentDist], classes: &[ClassId], picks: &[usize], can_work: bool) -> Option<Draw> {
    let mut shares: Vec<f64> = classes.iter().zip(picks).map(|(&l, &k)| dists[l].outcomes[k].e).collect();
    let total: f64 = shares.iter().sum();
    if total > 0.0 {
        shares.iter_mut().for_each(|e| *e /= total);
    } else if can_work {
        return None;
    }
    let next_class = classes.iter().zip(picks).map(|(&l, &k)| dists[l].outcomes[k].next_class_or(l)).collect();
    Some(Draw { shares, next_class })
}

/// Largest-remainder apportionment of `n` members over probabilities `probs`.
pub fn apportion(n: usize, probs: &[f64]) -> Vec<usize> {
    let raw: Vec<f64> = probs.iter().map(|p| p * n as f64).collect();
    let mut counts: Vec<usize> = raw.iter().map(|r| r.floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..probs.len()).collect();
    order.sort_by(|&a, &b| {
        let fa = raw[a] - raw[a].floor();
        let fb = raw[b] - raw[b].floor();
        fb.partial_cmp(&fa).unwrap_or(std::cmp::Ordering::Equal).then(a.cmp(&b))
    });
    for &k in order.iter().take(n.saturating_sub(assigned)) {
        counts[k] += 1;
    }
    counts
}

fn members_by_class(classes: &[ClassId], class_count: usize) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new(); class_count];
    for (j, &l) in classes.iter().enumerate() {
        out[l].push(j);
    }
    out
}

/// Draws employment for agents with current classes `classes` on the
/// transition into `child`.
pub fn draw_employment<R: Rng + ?Sized>(
    tree: &EventTree,
    child: NodeId,
    classes: &[ClassId],
    mode: RealizationMode,
    rng: &mut R,
) -> Result<Draw> {
    let dists = dists(tree, child, classes)?;
    let can_work = any_positive(&dists, classes);
    match mode {
        RealizationMode::ExactFraction => {
            let mut picks = vec![0usize; classes.len()];
            for (l, members) in members_by_class(classes, dists.len()).into_iter().enumerate() {
                if members.is_empty() {
                    continue;
                }
                let probs: Vec<f64> = dists[l].outcomes.iter().map(|o| o.prob).collect();
                let counts = apportion(members.len(), &probs);
                let mut slots: Vec<usize> =
                    counts.iter().enumerate().flat_map(|(k, &c)| std::iter::repeat_n(k, c)).collect();
                slots.shuffle(rng);
                for (j, k) in members.into_iter().zip(slots) {
                    picks[j] = k;
                }
            }
            assemble(&dists, classes, &picks, can_work)
                .ok_or_else(|| Error::Draw(format!("exact-fraction assignment into node {child} employs nobody")))
        }
        RealizationMode::Independent => {
            for _ in 0..DRAW_RETRIES {
                let picks: Vec<usize> = classes.iter().map(|&l| sample(dists[l], rng)).collect();
                if let Some(d) = assemble(&dists, classes, &picks, can_work) {
                    return Ok(d);
                }
            }
            Err(Error::Draw(format!(
                "every agent drawn unemployed {DRAW_RETRIES} times on the transition into node {child}"
            )))
        }
    }
}

fn sample<R: Rng + ?Sized>(d: &EmploymentDist, rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (k, o) in d.outcomes.iter().enumerate() {
        acc += o.prob;
        if u < acc {
            return k;
        }
    }
    d.outcomes.iter().rposition(|o| o.prob > 0.0).unwrap_or(0)
}

/// Every possible realization on a transition together with its
/// probability, or `None` when there are more than `cap` of them.
pub fn enumerate_draws(
    tree: &EventTree,
    child: NodeId,
    classes: &[ClassId],
    mode: RealizationMode,
    cap: usize,
) -> Result<Option<Vec<(f64, Draw)>>> {
    let dists = dists(tree, child, classes)?;
    let can_work = any_positive(&dists, classes);
    let mut out = Vec::new();
    match mode {
        RealizationMode::ExactFraction => {
            let groups = members_by_class(classes, dists.len());
            let mut per_class: Vec<Vec<Vec<usize>>> = Vec::new();
            let mut total: f64 = 1.0;
            for (l, members) in groups.iter().enumerate() {
                if members.is_empty() {
                    per_class.push(vec![Vec::new()]);
                    continue;
                }
                let probs: Vec<f64> = dists[l].outcomes.iter().map(|o| o.prob).collect();
                let counts = apportion(members.len(), &probs);
                total *= multinomial(members.len(), &counts);
                if total > cap as f64 {
                    return Ok(None);
                }
                per_class.push(multiset_permutations(&counts));
            }
            let weight = 1.0 / total;
            let mut picks = vec![0usize; classes.len()];
            let mut failed = false;
            cartesian(&per_class, &mut |choice: &[&Vec<usize>]| {
                for (l, arrangement) in choice.iter().enumerate() {
                    for (&j, &k) in groups[l].iter().zip(arrangement.iter()) {
                        picks[j] = k;
                    }
                }
                match assemble(&dists, classes, &picks, can_work) {
                    Some(d) => out.push((weight, d)),
                    None => failed = true,
                }
            });
            if failed {
                return Err(Error::Draw(format!("exact-fraction assignment into node {child} employs nobody")));
            }
        }
        RealizationMode::Independent => {
            let options: Vec<Vec<usize>> = classes
                .iter()
                .map(|&l| dists[l].outcomes.iter().enumerate().filter(|(_, o)| o.prob > 0.0).map(|(k, _)| k).collect())
                .collect();
            let count: f64 = options.iter().map(|o| o.len() as f64).product();
            if count > cap as f64 {
                return Ok(None);
            }
            let as_vecs: Vec<Vec<Vec<usize>>> = options.iter().map(|o| o.iter().map(|&k| vec![k]).collect()).collect();
            cartesian(&as_vecs, &mut |choice: &[&Vec<usize>]| {
                let picks: Vec<usize> = choice.iter().map(|v| v[0]).collect();
                let w: f64 = classes.iter().zip(&picks).map(|(&l, &k)| dists[l].outcomes[k].prob).product();
                if let Some(d) = assemble(&dists, classes, &picks, can_work) {
                    out.push((w, d));
                }
            });
            let mass: f64 = out.iter().map(|(w, _)| w).sum();
            if mass <= 0.0 {
                return Err(Error::Draw(format!("no admissible realization into node {child}")));
            }
            out.iter_mut().for_each(|(w, _)| *w /= mass);
        }
    }
    Ok(Some(out))
}

fn multinomial(n: usize, counts: &[usize]) -> f64 {
    let ln_fact = |k: usize| (1..=k).map(|i| (i as f64).ln()).sum::<f64>();
    let v = ln_fact(n) - counts.iter().map(|&c| ln_fact(c)).sum::<f64>();
    v.exp().round()
}

/// All distinct sequences with `counts[k]` copies of symbol `k`.
fn multiset_permutations(counts: &[usize]) -> Vec<Vec<usize>> {
    fn rec(counts: &mut [usize], prefix: &mut Vec<usize>, len: usize, out: &mut Vec<Vec<usize>>) {
        if prefix.len() == len {
            out.push(prefix.clone());
            return;
        }
        for k in 0..counts.len() {
            if counts[k] > 0 {
                counts[k] -= 1;
                prefix.push(k);
                rec(counts, prefix, len, out);
                prefix.pop();
                counts[k] += 1;
            }
        }
    }
    let len = counts.iter().sum();
    let mut out = Vec::new();
    rec(&mut counts.to_vec(), &mut Vec::with_capacity(len), len, &mut out);
    out
}

fn cartesian<'a, T, F: FnMut(&[&'a T])>(sets: &'a [Vec<T>], f: &mut F) {
    fn rec<'a, T, F: FnMut(&[&'a T])>(sets: &'a [Vec<T>], acc: &mut Vec<&'a T>, f: &mut F) {
        if acc.len() == sets.len() {
            f(acc);
            return;
        }
        for item in &sets[acc.len()] {
            acc.push(item);
            rec(sets, acc, f);
            acc.pop();
        }
    }
    rec(sets, &mut Vec::with_capacity(sets.len()), f);
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::EconomyParams;
    use crate::process::{build_event_tree, ProcessSpec};
    use crate::tree::{chain, Outcome};
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn uniform(n: usize, u: f64) -> EventTree {
        let p = EconomyParams { agents: n, periods: 2, ..Default::default() };
        build_event_tree(&ProcessSpec::uniform(u), &p).unwrap()
    }

    #[test]
    fn exact_fraction_ten_agents() {
        let tree = uniform(10, 0.1);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let d = draw_employment(&tree, 1, &[0; 10], RealizationMode::ExactFraction, &mut rng).unwrap();
        let employed = d.shares.iter().filter(|&&e| e > 0.0).count();
        assert_eq!(employed, 9);
        for e in d.shares.iter().filter(|&&e| e > 0.0) {
            assert!((e - 1.0 / 9.0).abs() < 1e-15);
        }
        assert!((d.shares.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn single_agent_takes_whole_bill() {
        let tree = chain(2, 1.0, EmploymentDist::degenerate(1.0));
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for mode in [RealizationMode::ExactFraction, RealizationMode::Independent] {
            let d = draw_employment(&tree, 1, &[0], mode, &mut rng).unwrap();
            assert_eq!(d.shares, vec![1.0]);
        }
    }

    #[test]
    fn independent_all_unemployed_errors_after_retries() {
        let dist = EmploymentDist::new(vec![Outcome::new(0.0, 1.0), Outcome::new(0.5, 1e-300)]);
        let tree = chain(2, 1.0, dist);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let err = draw_employment(&tree, 1, &[0, 0], RealizationMode::Independent, &mut rng).unwrap_err();
        assert!(matches!(err, Error::Draw(_)));
    }

    #[test]
    fn no_employment_process_leaves_zero_shares() {
        let tree = chain(2, 1.0, EmploymentDist::degenerate(0.0));
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let d = draw_employment(&tree, 1, &[0, 0, 0], RealizationMode::ExactFraction, &mut rng).unwrap();
        assert_eq!(d.shares, vec![0.0; 3]);
    }

    #[test]
    fn apportion_matches_expected_counts() {
        assert_eq!(apportion(10, &[0.1, 0.9]), vec![1, 9]);
        assert_eq!(apportion(7, &[0.5, 0.5]), vec![4, 3]);
        assert_eq!(apportion(3, &[1.0 / 3.0; 3]), vec![1, 1, 1]);
    }

    #[test]
    fn enumeration_counts_and_weights() {
        let tree = uniform(10, 0.1);
        let all = enumerate_draws(&tree, 1, &[0; 10], RealizationMode::ExactFraction, 1000).unwrap().unwrap();
        assert_eq!(all.len(), 10);
        assert!((all.iter().map(|(w, _)| w).sum::<f64>() - 1.0).abs() < 1e-12);
        // each agent is unemployed in exactly one arrangement
        for j in 0..10 {
            assert_eq!(all.iter().filter(|(_, d)| d.shares[j] == 0.0).count(), 1);
        }
        assert!(enumerate_draws(&tree, 1, &[0; 10], RealizationMode::ExactFraction, 5).unwrap().is_none());
    }

    #[test]
    fn independent_enumeration_excludes_all_unemployed() {
        let tree = uniform(4, 0.5);
        let all = enumerate_draws(&tree, 1, &[0, 0], RealizationMode::Independent, 100).unwrap().unwrap();
        assert_eq!(all.len(), 3);
        assert!((all.iter().map(|(w, _)| w).sum::<f64>() - 1.0).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn shares_partition_the_wage_bill(n in 1usize..60, u in 0.01f64..0.6, seed in 0u64..1000, indep in any::<bool>()) {
            prop_assume!((1.0 - u) * n as f64 >= 1.0);
            let tree = uniform(n, u);
            let mode = if indep { RealizationMode::Independent } else { RealizationMode::ExactFraction };
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            if let Ok(d) = draw_employment(&tree, 1, &vec![0; n], mode, &mut rng) {
                prop_assert!((d.shares.iter().sum::<f64>() - 1.0).abs() < 1e-12);
                prop_assert!(d.shares.iter().all(|&e| (0.0..=1.0).contains(&e)));
            }
        }
    }
}
