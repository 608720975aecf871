//! Exact arithmetic on discrete finish-time distributions along a route.

use crate::model::{StochasticTravelTime, Time, PROB_TOL};

/// Masses below this are dropped after convolution.
const DUST: f64 = 1e-15;

/// Probability mass over the finish times of one task on a route.
/// Support is sorted ascending; all masses are positive.
#[derive(Debug, Clone, PartialEq)]
pub struct FinishDistribution {
    points: Vec<(Time, f64)>,
}

impl FinishDistribution {
    pub fn point(t: Time) -> Self {
        Self { points: vec![(t, 1.0)] }
    }

    /// Builds a distribution from unsorted, possibly repeated points.
    /// Repeated times are merged, dust is pruned and masses renormalized.
    pub fn from_points(mut raw: Vec<(Time, f64)>) -> Self {
        raw.sort_by_key(|p| p.0);
        let mut points: Vec<(Time, f64)> = Vec::with_capacity(raw.len());
        for (t, p) in raw {
            match points.last_mut() {
                Some(last) if last.0 == t => last.1 += p,
                _ => points.push((t, p)),
            }
        }
        points.retain(|&(_, p)| p > DUST);
        let total: f64 = points.iter().map(|p| p.1).sum();
        if total > 0.0 && (total - 1.0).abs() > f64::EPSILON {
            for p in &mut points {
                p.1 /= total;
            }
        }
        Self { points }
    }

    pub fn points(&self) -> &[(Time, f64)] {
        &self.points
    }

    pub fn mass(&self) -> f64 {
        self.points.iter().map(|p| p.1).sum()
    }

    /// Worst-case finish time, the largest time in the support.
    pub fn max_time(&self) -> Time {
        self.points.last().map(|p| p.0).unwrap_or(0)
    }

    pub fn min_time(&self) -> Time {
        self.points.first().map(|p| p.0).unwrap_or(0)
    }

    pub fn cdf(&self, t: Time) -> f64 {
        self.points.iter().take_while(|p| p.0 <= t).map(|p| p.1).sum()
    }

    pub fn mean(&self) -> f64 {
        self.points.iter().map(|&(t, p)| t as f64 * p).sum()
    }

    /// First-order stochastic dominance: `P(self ≤ t) ≥ P(other ≤ t)` for all `t`.
    pub fn stochastically_le(&self, other: &FinishDistribution, tol: f64) -> bool {
        if self.max_time() > other.max_time() {
            return false;
        }
        // Both CDFs are step functions; checking at every support point of
        // either side suffices.
        let (mut i, mut j) = (0, 0);
        let (mut ca, mut cb) = (0.0, 0.0);
        while i < self.points.len() || j < other.points.len() {
            let ta = self.points.get(i).map(|p| p.0).unwrap_or(Time::MAX);
            let tb = other.points.get(j).map(|p| p.0).unwrap_or(Time::MAX);
            let t = ta.min(tb);
            while i < self.points.len() && self.points[i].0 == t {
                ca += self.points[i].1;
                i += 1;
            }
            while j < other.points.len() && other.points[j].0 == t {
                cb += other.points[j].1;
                j += 1;
            }
            if ca < cb - tol {
                return false;
            }
        }
        true
    }
}

/// Finish distribution of task `j` after task `i`: travel is added to every
/// finish of `i`, then processing; arrivals before `ES_j` wait so every
/// outcome earlier than `ES_j + p` collapses onto it.
pub fn propagate(
    prev: &FinishDistribution,
    travel: &StochasticTravelTime,
    processing: Time,
    earliest_start: Time,
) -> FinishDistribution {
    let earliest_finish = earliest_start + processing;
    let mut raw = Vec::with_capacity(prev.points.len() * travel.len());
    for &(f, pf) in &prev.points {
        for &(t, pt) in travel.points() {
            raw.push(((f + t + processing).max(earliest_finish), pf * pt));
        }
    }
    FinishDistribution::from_points(raw)
}

/// Finish distribution of the first task on a route leaving the depot at `leave`.
pub fn initial_distribution(
    leave: Time,
    travel_from_depot: &StochasticTravelTime,
    processing: Time,
    earliest_start: Time,
) -> FinishDistribution {
    propagate(&FinishDistribution::point(leave), travel_from_depot, processing, earliest_start)
}

/// Quadratic lateness penalty.
pub fn penalty(finish: Time, latest_finish: Time) -> f64 {
    if finish > latest_finish {
        let d = (finish - latest_finish) as f64;
        d * d
    } else {
        0.0
    }
}

/// `P(F ≤ LF) ≥ α`.
pub fn chance_ok(f: &FinishDistribution, latest_finish: Time, alpha: f64) -> bool {
    f.cdf(latest_finish) >= alpha - PROB_TOL
}

/// `P(F > LF^e) = 0`.
pub fn hard_ok(f: &FinishDistribution, extended_finish: Time) -> bool {
    f.max_time() <= extended_finish
}

/// `w · E[(F − EF) + P(F)]`.
pub fn expected_task_cost(f: &FinishDistribution, weight: f64, earliest_finish: Time, latest_finish: Time) -> f64 {
    weight * f.points.iter().map(|&(t, p)| p * ((t - earliest_finish) as f64 + penalty(t, latest_finish))).sum::<f64>()
}
