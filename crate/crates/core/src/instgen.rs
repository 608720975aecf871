//! Seeded instance generator.
//!
//! Worker counts follow a supply/demand rule. Each task is charged to its
//! cheapest profile (least crew size times processing time) among those
//! that can serve it on a single-task route, over
//! the interval from `ES - t_out` to `LFe + t_back`. With `P_k` the peak
//! number of level-`≥ k` workers demanded at any time point and `B_k` the
//! largest level-`k` requirement among the charged profiles,
//! `N_0 = B_0 + ceil(2 · WS · max(2, P_0))` and
//! `N_k = max(B_k, ceil(2 · WS · P_k))`, clipped so `N` is non-increasing.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::distrib::{chance_ok, hard_ok, initial_distribution};
use crate::model::{Instance, Loc, Profile, SkillLevel, StochasticTravelTime, Task, Time, TravelTable};

#[derive(Debug, Error, PartialEq)]
pub enum GenError {
    #[error("invalid parameters: {0}")]
    Params(String),
    #[error("horizon too short for task {0}")]
    HorizonTooShort(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenParams {
    pub seed: u64,
    pub n_tasks: usize,
    pub n_skills: usize,
    pub n_profiles: usize,
    pub horizon: Time,
    pub worker_strength: f64,
    /// Largest number of support points per travel distribution.
    pub max_support: usize,
    /// Window slack relative to the fastest processing time.
    pub window_factor: f64,
    pub service_level: f64,
    pub padding_width: usize,
}

impl Default for GenParams {
    fn default() -> Self {
        Self {
            seed: 0,
            n_tasks: 8,
            n_skills: 2,
            n_profiles: 3,
            horizon: 48,
            worker_strength: 0.6,
            max_support: 3,
            window_factor: 1.5,
            service_level: 0.8,
            padding_width: 4,
        }
    }
}

impl GenParams {
    fn check(&self) -> Result<(), GenError> {
        let bad = |m: &str| Err(GenError::Params(m.to_string()));
        if self.n_profiles == 0 {
            return bad("n_profiles must be at least 1");
        }
        if self.n_skills == 0 {
            return bad("n_skills must be at least 1");
        }
        if !(self.worker_strength > 0.0 && self.worker_strength <= 1.0) {
            return bad("worker_strength must lie in (0, 1]");
        }
        if self.max_support == 0 || self.max_support > self.padding_width {
            return bad("max_support must lie in 1..=padding_width");
        }
        if !(0.0..=1.0).contains(&self.service_level) {
            return bad("service_level must lie in [0, 1]");
        }
        if self.window_factor.is_nan() || self.window_factor < 0.0 {
            return bad("window_factor must be non-negative");
        }
        if self.n_tasks > crate::model::MAX_TASKS {
            return bad("too many tasks");
        }
        if self.horizon <= 0 {
            return bad("horizon must be positive");
        }
        Ok(())
    }
}

pub fn generate(p: &GenParams) -> Result<Instance, GenError> {
    p.check()?;
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);

    let profiles = gen_profiles(&mut rng, p.n_profiles, p.n_skills);
    let strength: Vec<u32> = profiles.iter().map(|q| q.requirements.iter().sum()).collect();

    // Locations on a 12x12 grid, depot in the middle.
    let coords: Vec<(f64, f64)> = std::iter::once((6.0, 6.0))
        .chain((0..p.n_tasks).map(|_| (rng.gen_range(0.0..12.0), rng.gen_range(0.0..12.0))))
        .collect();
    let loc = |idx: usize| {
        if idx == 0 {
            Loc::Depot
        } else {
            Loc::Task(idx - 1)
        }
    };
    let mut travel = TravelTable::new(p.n_tasks);
    for a in 0..coords.len() {
        for b in 0..coords.len() {
            if a == b {
                continue;
            }
            let (dx, dy) = (coords[a].0 - coords[b].0, coords[a].1 - coords[b].1);
            let base = ((dx * dx + dy * dy).sqrt() / 3.0).round().max(1.0) as Time;
            travel.set(loc(a), loc(b), gen_travel(&mut rng, base, p.max_support));
        }
    }

    let mut tasks = Vec::with_capacity(p.n_tasks);
    for i in 0..p.n_tasks {
        let mut compatible: Vec<usize> = (0..p.n_profiles).filter(|_| rng.gen_bool(0.6)).collect();
        if compatible.is_empty() {
            compatible.push(rng.gen_range(0..p.n_profiles));
        }
        // Weaker crews first, so the slowest processing time goes first.
        compatible.sort_by_key(|&q| (strength[q], q));
        let base: Time = rng.gen_range(2..=6);
        let m = compatible.len() as Time;
        let processing: BTreeMap<usize, Time> =
            compatible.iter().enumerate().map(|(rank, &q)| (q, base + (m - 1 - rank as Time))).collect();
        let p_min = base;

        let out = travel.get(Loc::Depot, Loc::Task(i)).expect("generated").worst_case();
        let back = travel.get(Loc::Task(i), Loc::Depot).expect("generated").worst_case();
        let slack = (rng.gen::<f64>() * p.window_factor * p_min as f64).round() as Time;
        let ext: Time = rng.gen_range(0..=3);
        let upper = p.horizon - 1 - back - ext - slack - p_min;
        if upper < out {
            return Err(GenError::HorizonTooShort(i));
        }
        let es = rng.gen_range(0..=upper);
        // The fastest profile leaving at max(0, ES - t_out) finishes by this
        // time in every scenario.
        let worst_single = es.max(out) + p_min;
        let lf = worst_single + slack;
        tasks.push(Task {
            weight: rng.gen_range(1..=5) as f64,
            earliest_start: es,
            latest_finish: lf,
            extended_finish: lf + ext,
            processing,
        });
    }

    let skills = worker_counts(p, &profiles, &tasks, &travel);
    Ok(Instance {
        name: format!("gen-s{}-n{}-q{}-ws{}", p.seed, p.n_tasks, p.n_profiles, p.worker_strength),
        horizon: p.horizon,
        skills,
        profiles,
        tasks,
        travel,
        service_level: p.service_level,
        padding_width: p.padding_width,
    })
}

fn gen_profiles(rng: &mut ChaCha8Rng, n: usize, n_skills: usize) -> Vec<Profile> {
    let mut out: Vec<Profile> = Vec::with_capacity(n);
    let mut cap = 3u32;
    let mut attempts = 0;
    while out.len() < n {
        attempts += 1;
        if attempts % 200 == 0 {
            cap += 1;
        }
        let mut req = Vec::with_capacity(n_skills);
        let mut prev = rng.gen_range(1..=cap);
        req.push(prev);
        for _ in 1..n_skills {
            prev = rng.gen_range(0..=prev);
            req.push(prev);
        }
        if !out.iter().any(|q| q.requirements == req) {
            out.push(Profile { requirements: req });
        }
    }
    out
}

fn gen_travel(rng: &mut ChaCha8Rng, base: Time, max_support: usize) -> StochasticTravelTime {
    let size = rng.gen_range(1..=max_support);
    let mut offsets: Vec<Time> = (0..4).collect();
    offsets.shuffle(rng);
    let mut times: Vec<Time> = offsets[..size].iter().map(|o| base + o).collect();
    times.sort_unstable();
    let weights: Vec<u32> = (0..size).map(|_| rng.gen_range(1..=6)).collect();
    let total: u32 = weights.iter().sum();
    StochasticTravelTime::new(times.into_iter().zip(weights).map(|(t, w)| (t, w as f64 / total as f64)).collect())
}

fn worker_counts(p: &GenParams, profiles: &[Profile], tasks: &[Task], travel: &TravelTable) -> Vec<SkillLevel> {
    let ns = p.n_skills;
    let horizon = p.horizon.max(1) as usize;
    let mut load = vec![vec![0u32; horizon]; ns];
    let mut base = vec![0u32; ns];
    for (i, task) in tasks.iter().enumerate() {
        let t_out = travel.get(Loc::Depot, Loc::Task(i)).expect("generated");
        let out = t_out.worst_case();
        let back = travel.get(Loc::Task(i), Loc::Depot).expect("generated").worst_case();
        // Cheapest profile that can serve the task alone: least worker-time,
        // then fewest workers.
        let fits = |d: Time| {
            let f = initial_distribution((task.earliest_start - out).max(0), t_out, d, task.earliest_start);
            chance_ok(&f, task.latest_finish, p.service_level) && hard_ok(&f, task.extended_finish)
        };
        let &q = task
            .processing
            .iter()
            .filter(|(_, &d)| fits(d))
            .min_by_key(|(&q, &d)| {
                let size: u32 = profiles[q].requirements.iter().sum();
                (size as Time * d, size, q)
            })
            .map(|(q, _)| q)
            .expect("the fastest profile always fits");
        let from = (task.earliest_start - out).max(0) as usize;
        let to = ((task.extended_finish + back) as usize).min(horizon - 1);
        for k in 0..ns {
            let need = profiles[q].requirements[k];
            base[k] = base[k].max(need);
            for slot in &mut load[k][from..=to] {
                *slot += need;
            }
        }
    }
    let peak: Vec<f64> = load.iter().map(|l| l.iter().copied().max().unwrap_or(0) as f64).collect();
    let mut at_least = vec![0u32; ns];
    at_least[0] = base[0] + (p.worker_strength * 2.0 * peak[0].max(2.0)).ceil() as u32;
    for k in 1..ns {
        let v = base[k].max((p.worker_strength * 2.0 * peak[k]).ceil() as u32);
        at_least[k] = v.min(at_least[k - 1]);
    }
    (0..ns)
        .map(|k| SkillLevel { at_least: at_least[k], exact: at_least[k] - at_least.get(k + 1).copied().unwrap_or(0) })
        .collect()
}
