//! Problem instances: tasks, skills, working profiles, stochastic travel times.
//!
//! Time is discrete. Every time value is an index into the horizon `0..horizon`.
//! Skill levels are indexed from 0 (lowest) upwards; a worker of level `k`
//! can also work at every level below `k`.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Discrete time step.
pub type Time = i64;

/// Probability normalization tolerance.
pub const PROB_TOL: f64 = 1e-9;

/// Hard limit on the number of tasks, bounded by the bitset used for
/// elementarity in the labeling algorithm.
pub const MAX_TASKS: usize = 128;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("no travel data")]
    NoTravelData,
    #[error("missing travel entry from {from} to {to}")]
    MissingTravel { from: Loc, to: Loc },
    #[error("invalid instance: {0}")]
    Invalid(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("parse error: {0}")]
    Parse(#[from] serde_json::Error),
}

/// A location: the depot or the site of a task.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Loc {
    Depot,
    Task(usize),
}

impl Loc {
    fn slot(self) -> usize {
        match self {
            Loc::Depot => 0,
            Loc::Task(i) => i + 1,
        }
    }
}

impl fmt::Display for Loc {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Loc::Depot => write!(f, "depot"),
            Loc::Task(i) => write!(f, "{i}"),
        }
    }
}

impl Serialize for Loc {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Loc::Depot => s.serialize_str("depot"),
            Loc::Task(i) => s.serialize_u64(*i as u64),
        }
    }
}

impl<'de> Deserialize<'de> for Loc {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Index(usize),
            Name(String),
        }
        match Raw::deserialize(d)? {
            Raw::Index(i) => Ok(Loc::Task(i)),
            Raw::Name(s) if s == "depot" => Ok(Loc::Depot),
            Raw::Name(s) => {
                Err(serde::de::Error::custom(format!("unknown location {s:?}, expected \"depot\" or a task index")))
            }
        }
    }
}

/// Discrete travel-time distribution between two locations.
///
/// The support is expected sorted ascending with distinct times; use
/// [`StochasticTravelTime::violations`] to check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct StochasticTravelTime {
    points: Vec<(Time, f64)>,
}

impl StochasticTravelTime {
    pub fn new(points: Vec<(Time, f64)>) -> Self {
        Self { points }
    }

    pub fn deterministic(t: Time) -> Self {
        Self { points: vec![(t, 1.0)] }
    }

    pub fn points(&self) -> &[(Time, f64)] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Largest travel time in the support, `t(ω_max)`.
    pub fn worst_case(&self) -> Time {
        self.points.iter().map(|&(t, _)| t).max().unwrap_or(0)
    }

    /// Smallest `t*` in the support with `P(t ≤ t*) ≥ alpha`.
    pub fn quantile(&self, alpha: f64) -> Result<Time, ModelError> {
        if self.points.is_empty() {
            return Err(ModelError::NoTravelData);
        }
        let mut cdf = 0.0;
        for &(t, p) in &self.points {
            cdf += p;
            if cdf >= alpha - PROB_TOL {
                return Ok(t);
            }
        }
        Ok(self.worst_case())
    }

    pub fn violations(&self, field: &str, padding_width: usize) -> Vec<Violation> {
        let mut out = Vec::new();
        if self.points.is_empty() {
            out.push(Violation::new(field, "empty support"));
            return out;
        }
        let sum: f64 = self.points.iter().map(|&(_, p)| p).sum();
        if (sum - 1.0).abs() > PROB_TOL {
            out.push(Violation::new(field, format!("probabilities sum {sum}")));
        }
        if self.points.iter().any(|&(_, p)| !(0.0..=1.0).contains(&p)) {
            out.push(Violation::new(field, "probability outside [0, 1]"));
        }
        if self.points.iter().any(|&(t, _)| t < 0) {
            out.push(Violation::new(field, "negative travel time"));
        }
        if self.points.windows(2).any(|w| w[0].0 >= w[1].0) {
            out.push(Violation::new(field, "support not strictly ascending"));
        }
        if self.points.len() > padding_width {
            out.push(Violation::new(
                field,
                format!("support size {} exceeds padding width {padding_width}", self.points.len()),
            ));
        }
        out
    }
}

/// Crew composition: `requirements[k]` workers with skill level at least `k`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Profile {
    pub requirements: Vec<u32>,
}

impl Profile {
    pub fn crew_size(&self) -> u32 {
        self.requirements.first().copied().unwrap_or(0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Task {
    pub weight: f64,
    pub earliest_start: Time,
    pub latest_finish: Time,
    pub extended_finish: Time,
    /// Processing time per compatible profile.
    pub processing: BTreeMap<usize, Time>,
}

impl Task {
    pub fn processing_time(&self, profile: usize) -> Option<Time> {
        self.processing.get(&profile).copied()
    }

    pub fn is_compatible(&self, profile: usize) -> bool {
        self.processing.contains_key(&profile)
    }

    /// `EF_i = ES_i + min_q p_{i,q}`.
    pub fn earliest_finish(&self) -> Time {
        self.earliest_start + self.processing.values().copied().min().unwrap_or(0)
    }

    /// `EFQ_{i,q} = ES_i + p_{i,q}`.
    pub fn earliest_finish_with(&self, profile: usize) -> Option<Time> {
        self.processing_time(profile).map(|p| self.earliest_start + p)
    }

    /// `LSQ_{i,q} = LF^e_i − p_{i,q}`.
    pub fn latest_start_with(&self, profile: usize) -> Option<Time> {
        self.processing_time(profile).map(|p| self.extended_finish - p)
    }
}

/// Dense table of travel distributions between every ordered pair of
/// distinct locations.
#[derive(Debug, Clone, PartialEq)]
pub struct TravelTable {
    n_tasks: usize,
    entries: Vec<Option<StochasticTravelTime>>,
}

impl TravelTable {
    pub fn new(n_tasks: usize) -> Self {
        let n = n_tasks + 1;
        Self { n_tasks, entries: vec![None; n * n] }
    }

    fn index(&self, from: Loc, to: Loc) -> usize {
        from.slot() * (self.n_tasks + 1) + to.slot()
    }

    pub fn set(&mut self, from: Loc, to: Loc, t: StochasticTravelTime) {
        let idx = self.index(from, to);
        self.entries[idx] = Some(t);
    }

    pub fn get(&self, from: Loc, to: Loc) -> Option<&StochasticTravelTime> {
        if let Loc::Task(i) = from {
            if i >= self.n_tasks {
                return None;
            }
        }
        if let Loc::Task(j) = to {
            if j >= self.n_tasks {
                return None;
            }
        }
        self.entries[self.index(from, to)].as_ref()
    }

    pub fn n_tasks(&self) -> usize {
        self.n_tasks
    }

    pub fn iter(&self) -> impl Iterator<Item = (Loc, Loc, &StochasticTravelTime)> + '_ {
        let locs: Vec<Loc> = std::iter::once(Loc::Depot).chain((0..self.n_tasks).map(Loc::Task)).collect();
        let pairs: Vec<(Loc, Loc)> = locs.iter().flat_map(|&a| locs.iter().map(move |&b| (a, b))).collect();
        pairs.into_iter().filter_map(move |(a, b)| self.get(a, b).map(|t| (a, b, t)))
    }
}

/// Worker availability for one skill level.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SkillLevel {
    /// `N_k`: workers with level at least `k`.
    pub at_least: u32,
    /// `n_k`: workers with level exactly `k`.
    pub exact: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "InstanceFile", into = "InstanceFile")]
pub struct Instance {
    pub name: String,
    /// Number of time points; the horizon is `0..horizon`.
    pub horizon: Time,
    pub skills: Vec<SkillLevel>,
    pub profiles: Vec<Profile>,
    pub tasks: Vec<Task>,
    pub travel: TravelTable,
    pub service_level: f64,
    /// `M`: fixed length of the travel-time feature vectors is `2M`.
    pub padding_width: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TravelEntry {
    from: Loc,
    to: Loc,
    times: Vec<(Time, f64)>,
}

/// On-disk layout of an instance document.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct InstanceFile {
    name: String,
    horizon: Time,
    service_level: f64,
    padding_width: usize,
    skills: Vec<SkillLevel>,
    profiles: Vec<Profile>,
    tasks: Vec<Task>,
    travel: Vec<TravelEntry>,
}

impl TryFrom<InstanceFile> for Instance {
    type Error = ModelError;

    fn try_from(f: InstanceFile) -> Result<Self, Self::Error> {
        if f.tasks.len() > MAX_TASKS {
            return Err(ModelError::Invalid(format!(
                "{} tasks exceed the supported maximum of {MAX_TASKS}",
                f.tasks.len()
            )));
        }
        let mut travel = TravelTable::new(f.tasks.len());
        for e in f.travel {
            for loc in [e.from, e.to] {
                if let Loc::Task(i) = loc {
                    if i >= f.tasks.len() {
                        return Err(ModelError::Invalid(format!("travel entry names unknown task {i}")));
                    }
                }
            }
            if e.from == e.to {
                return Err(ModelError::Invalid(format!("travel entry from {} to itself", e.from)));
            }
            travel.set(e.from, e.to, StochasticTravelTime::new(e.times));
        }
        Ok(Instance {
            name: f.name,
            horizon: f.horizon,
            skills: f.skills,
            profiles: f.profiles,
            tasks: f.tasks,
            travel,
            service_level: f.service_level,
            padding_width: f.padding_width,
        })
    }
}

impl From<Instance> for InstanceFile {
    fn from(inst: Instance) -> Self {
        let travel =
            inst.travel.iter().map(|(from, to, t)| TravelEntry { from, to, times: t.points().to_vec() }).collect();
        InstanceFile {
            name: inst.name,
            horizon: inst.horizon,
            service_level: inst.service_level,
            padding_width: inst.padding_width,
            skills: inst.skills,
            profiles: inst.profiles,
            tasks: inst.tasks,
            travel,
        }
    }
}

/// A broken instance invariant, naming the offending field.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub field: String,
    pub rule: String,
}

impl Violation {
    pub fn new(field: impl Into<String>, rule: impl Into<String>) -> Self {
        Self { field: field.into(), rule: rule.into() }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.rule)
    }
}

impl Instance {
    pub fn n_tasks(&self) -> usize {
        self.tasks.len()
    }

    pub fn n_skills(&self) -> usize {
        self.skills.len()
    }

    pub fn n_profiles(&self) -> usize {
        self.profiles.len()
    }

    /// Travel distribution between two locations. Instances that pass
    /// validation define every ordered pair.
    pub fn travel(&self, from: Loc, to: Loc) -> &StochasticTravelTime {
        self.travel.get(from, to).unwrap_or_else(|| panic!("missing travel entry from {from} to {to}"))
    }

    pub fn try_travel(&self, from: Loc, to: Loc) -> Result<&StochasticTravelTime, ModelError> {
        self.travel.get(from, to).ok_or(ModelError::MissingTravel { from, to })
    }

    /// Tasks compatible with a profile, in index order.
    pub fn tasks_for(&self, profile: usize) -> Vec<usize> {
        (0..self.tasks.len()).filter(|&i| self.tasks[i].is_compatible(profile)).collect()
    }

    pub fn from_json(s: &str) -> Result<Self, ModelError> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("instance serializes")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ModelError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), ModelError> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    /// Upper bound on the expected cost of any single task, used for big-M.
    pub fn route_cost_bound(&self) -> f64 {
        self.tasks
            .iter()
            .map(|t| {
                let late = (t.extended_finish - t.latest_finish) as f64;
                t.weight * (self.horizon as f64 + late * late)
            })
            .sum()
    }
}

/// Checks every structural invariant and returns the list of violations.
pub fn validate_instance(inst: &Instance) -> Vec<Violation> {
    let mut out = Vec::new();
    if inst.horizon <= 0 {
        out.push(Violation::new("horizon", "horizon must be positive"));
    }
    if !(0.0..=1.0).contains(&inst.service_level) {
        out.push(Violation::new("service_level", "alpha outside [0, 1]"));
    }
    if inst.padding_width == 0 {
        out.push(Violation::new("padding_width", "must be positive"));
    }
    if inst.skills.is_empty() {
        out.push(Violation::new("skills", "at least one skill level required"));
    }
    for k in 0..inst.skills.len() {
        let tail: u32 = inst.skills[k..].iter().map(|s| s.exact).sum();
        if inst.skills[k].at_least != tail {
            out.push(Violation::new(
                format!("skills[{k}]"),
                format!("at_least {} differs from sum of exact counts {tail}", inst.skills[k].at_least),
            ));
        }
        if k > 0 && inst.skills[k].at_least > inst.skills[k - 1].at_least {
            out.push(Violation::new(format!("skills[{k}]"), "monotonicity: at_least increases with level"));
        }
    }
    for (q, prof) in inst.profiles.iter().enumerate() {
        let field = format!("profiles[{q}]");
        if prof.requirements.len() != inst.skills.len() {
            out.push(Violation::new(&field, "requirement vector length differs from skill count"));
        }
        if prof.requirements.windows(2).any(|w| w[1] > w[0]) {
            out.push(Violation::new(&field, "requirements increase with level"));
        }
        if prof.crew_size() == 0 {
            out.push(Violation::new(&field, "empty crew"));
        }
    }
    if inst.tasks.len() > MAX_TASKS {
        out.push(Violation::new("tasks", format!("more than {MAX_TASKS} tasks")));
    }
    for (i, task) in inst.tasks.iter().enumerate() {
        let field = format!("tasks[{i}]");
        if task.earliest_start > task.latest_finish || task.latest_finish > task.extended_finish {
            out.push(Violation::new(&field, "window order: need ES <= LF <= LF^e"));
        }
        if task.earliest_start < 0 || task.extended_finish >= inst.horizon {
            out.push(Violation::new(&field, "window outside horizon"));
        }
        if task.weight < 0.0 || !task.weight.is_finite() {
            out.push(Violation::new(&field, "weight must be finite and non-negative"));
        }
        if task.processing.is_empty() {
            out.push(Violation::new(&field, "no compatible profile"));
        }
        for (&q, &p) in &task.processing {
            if q >= inst.profiles.len() {
                out.push(Violation::new(&field, format!("unknown profile {q}")));
            }
            if p <= 0 {
                out.push(Violation::new(&field, format!("processing time for profile {q} not positive")));
            }
        }
    }
    let n = inst.tasks.len();
    let locs: Vec<Loc> = std::iter::once(Loc::Depot).chain((0..n).map(Loc::Task)).collect();
    for &a in &locs {
        for &b in &locs {
            if a == b {
                continue;
            }
            let field = format!("travel[{a}->{b}]");
            match inst.travel.get(a, b) {
                None => out.push(Violation::new(field, "missing travel entry")),
                Some(t) => out.extend(t.violations(&field, inst.padding_width)),
            }
        }
    }
    out
}
