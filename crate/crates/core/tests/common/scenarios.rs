//! Finish-time distributions by enumerating every travel scenario.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use teamroute::distrib::{initial_distribution, propagate, FinishDistribution};
use teamroute::model::{StochasticTravelTime, Time};

/// One leg of a route: travel into the task, processing time, earliest start.
#[derive(Debug, Clone)]
pub struct Leg {
    pub travel: StochasticTravelTime,
    pub processing: Time,
    pub earliest_start: Time,
}

/// Per-leg finish distributions over the joint scenario space. Every
/// scenario is one choice of travel outcome per leg; its probability is the
/// product of the chosen outcome probabilities.
pub fn enumerate(leave: Time, legs: &[Leg]) -> Vec<BTreeMap<Time, f64>> {
    let mut out = vec![BTreeMap::new(); legs.len()];
    walk(leave, 1.0, legs, 0, &mut out);
    out
}

fn walk(clock: Time, prob: f64, legs: &[Leg], k: usize, out: &mut [BTreeMap<Time, f64>]) {
    if k == legs.len() {
        return;
    }
    let leg = &legs[k];
    for &(t, p) in leg.travel.points() {
        let arrive = clock + t;
        let start = if arrive < leg.earliest_start { leg.earliest_start } else { arrive };
        let finish = start + leg.processing;
        *out[k].entry(finish).or_insert(0.0) += prob * p;
        walk(finish, prob * p, legs, k + 1, out);
    }
}

pub fn random_legs(seed: u64) -> (Time, Vec<Leg>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xd157);
    let n = rng.gen_range(1..=4);
    let legs = (0..n)
        .map(|_| {
            let size = rng.gen_range(1..=4);
            let base = rng.gen_range(1..6);
            let mut times: Vec<Time> = Vec::new();
            while times.len() < size {
                let t = base + rng.gen_range(0..6);
                if !times.contains(&t) {
                    times.push(t);
                }
            }
            times.sort_unstable();
            let w: Vec<f64> = (0..size).map(|_| rng.gen_range(0.05..1.0)).collect();
            let total: f64 = w.iter().sum();
            Leg {
                travel: StochasticTravelTime::new(times.into_iter().zip(w).map(|(t, x)| (t, x / total)).collect()),
                processing: rng.gen_range(1..6),
                earliest_start: rng.gen_range(0..25),
            }
        })
        .collect();
    (rng.gen_range(0..10), legs)
}

/// Chains the library's propagation over `legs`.
pub fn propagated(leave: Time, legs: &[Leg]) -> Vec<FinishDistribution> {
    let mut out: Vec<FinishDistribution> = Vec::with_capacity(legs.len());
    for leg in legs {
        let next = match out.last() {
            None => initial_distribution(leave, &leg.travel, leg.processing, leg.earliest_start),
            Some(prev) => propagate(prev, &leg.travel, leg.processing, leg.earliest_start),
        };
        out.push(next);
    }
    out
}

/// Compares the two on one seeded route; returns the largest deviation.
pub fn check_seed(seed: u64) -> Result<f64, String> {
    let (leave, legs) = random_legs(seed);
    let want = enumerate(leave, &legs);
    let got = propagated(leave, &legs);
    let mut worst = 0.0f64;
    for (k, (w, g)) in want.iter().zip(&got).enumerate() {
        if (g.mass() - 1.0).abs() > 1e-9 {
            return Err(format!("seed {seed} leg {k}: mass {}", g.mass()));
        }
        let gm: BTreeMap<Time, f64> = g.points().iter().copied().collect();
        if gm.keys().ne(w.keys()) {
            return Err(format!("seed {seed} leg {k}: support {:?} vs {:?}", gm.keys(), w.keys()));
        }
        for (t, p) in w {
            let d = (gm[t] - p).abs();
            worst = worst.max(d);
            if d > 1e-12 {
                return Err(format!("seed {seed} leg {k} time {t}: {} vs {p}", gm[t]));
            }
        }
    }
    Ok(worst)
}
