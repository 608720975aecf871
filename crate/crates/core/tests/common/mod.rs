//! Independent oracles shared by the integration and acceptance tests.
#![allow(dead_code)]

pub mod cuts;
pub mod gnn_oracle;
pub mod scenarios;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use teamroute::instgen::{generate, GenParams};
use teamroute::model::{validate_instance, Instance, Loc, StochasticTravelTime, Time};
use teamroute::pricing::{build_network, BranchState};
use teamroute::rmp::{Column, ColumnError, DualSolution};

/// A random pricing problem: instance, profile, duals and branch state.
pub struct PricingCase {
    pub inst: Instance,
    pub profile: usize,
    pub duals: DualSolution,
    pub branch: BranchState,
}

/// Instance with at most 8 tasks and at most 6 useful leave times per task.
pub fn small_pricing_instance(seed: u64) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let mut p = GenParams {
        seed,
        n_tasks: rng.gen_range(2..=8),
        n_skills: rng.gen_range(1..=2),
        n_profiles: rng.gen_range(1..=3),
        horizon: 24,
        window_factor: 1.5,
        ..Default::default()
    };
    // A short horizon packs tasks together so more arcs survive.
    let mut inst = loop {
        match generate(&p) {
            Ok(inst) => break inst,
            Err(_) => p.horizon += 4,
        }
    };
    for i in 0..inst.n_tasks() {
        let out = inst.travel(Loc::Depot, Loc::Task(i)).worst_case();
        let t = &mut inst.tasks[i];
        let p_max = *t.processing.values().max().unwrap();
        let lo = (t.earliest_start - out).max(0);
        let cap = lo + 5 + p_max + out;
        t.extended_finish = t.extended_finish.min(cap);
        t.latest_finish = t.latest_finish.min(t.extended_finish);
    }
    inst
}

/// Like [`small_pricing_instance`] but with windows staggered along a random
/// task order and short travel, so long routes are feasible.
pub fn chain_pricing_instance(seed: u64) -> Instance {
    let mut inst = small_pricing_instance(seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xc4a1);
    let n = inst.n_tasks();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let mut es: Time = rng.gen_range(1..4);
    let n_profiles = inst.n_profiles();
    for &i in &order {
        let t = &mut inst.tasks[i];
        let slowest = *t.processing.values().max().unwrap();
        for q in 0..n_profiles {
            t.processing.entry(q).or_insert(slowest);
        }
        let p_min = *t.processing.values().min().unwrap();
        let p_max = *t.processing.values().max().unwrap();
        t.earliest_start = es;
        t.latest_finish = es + p_max + rng.gen_range(0..=2);
        t.extended_finish = t.latest_finish + rng.gen_range(0..=1);
        es += p_min + rng.gen_range(0..=3);
    }
    for a in std::iter::once(Loc::Depot).chain((0..n).map(Loc::Task)) {
        for b in std::iter::once(Loc::Depot).chain((0..n).map(Loc::Task)) {
            if a == b {
                continue;
            }
            let size = rng.gen_range(1..=3);
            let mut times: Vec<Time> = vec![1, 2, 3];
            times.shuffle(&mut rng);
            times.truncate(size);
            times.sort_unstable();
            let w: Vec<f64> = (0..size).map(|_| rng.gen_range(1..=4) as f64).collect();
            let total: f64 = w.iter().sum();
            inst.travel.set(
                a,
                b,
                StochasticTravelTime::new(times.into_iter().zip(w).map(|(t, w)| (t, w / total)).collect()),
            );
        }
    }
    inst.horizon = inst.tasks.iter().map(|t| t.extended_finish).max().unwrap_or(0) + 8;
    inst
}

pub fn pricing_case(seed: u64) -> PricingCase {
    let inst = if seed.is_multiple_of(2) { chain_pricing_instance(seed) } else { small_pricing_instance(seed) };
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(7919) + 1);
    let profile = rng.gen_range(0..inst.n_profiles());
    let mut duals = DualSolution::zeros(&inst);
    for m in &mut duals.mu {
        *m = rng.gen_range(0.0..40.0);
    }
    for row in &mut duals.delta {
        for v in row.iter_mut() {
            if rng.gen_bool(0.3) {
                *v = -rng.gen_range(0.0..3.0);
            }
        }
    }
    for t in 0..inst.horizon as usize {
        if rng.gen_bool(0.1) {
            duals.rho[t] = -rng.gen_range(0.0..2.0);
        }
        if rng.gen_bool(0.1) {
            duals.gamma[t] = rng.gen_range(0.0..2.0);
        }
    }
    let mut branch = BranchState::default();
    for (i, t) in inst.tasks.iter().enumerate() {
        let ef = t.earliest_start + t.processing.values().min().unwrap();
        if rng.gen_bool(0.2) {
            branch.finish_upper.insert(i, ef + rng.gen_range(0..6));
        } else if rng.gen_bool(0.2) {
            branch.finish_lower.insert(i, ef + rng.gen_range(0..6));
        }
    }
    if rng.gen_bool(0.5) {
        let mut cols = all_feasible_columns(&inst, profile, &branch);
        cols.sort_by(|a, b| duals.reduced_cost(&inst, a).total_cmp(&duals.reduced_cost(&inst, b)));
        for c in cols.iter().take(rng.gen_range(1..=2)) {
            branch.forbid_column(c.key());
        }
    }
    debug_assert!(validate_instance(&inst).is_empty());
    PricingCase { inst, profile, duals, branch }
}

/// Every elementary path of the pricing network and every leave time no
/// earlier than `ES − t_out(max)`, filtered by feasibility, branch bounds and
/// forbidden keys.
pub fn all_feasible_columns(inst: &Instance, q: usize, branch: &BranchState) -> Vec<Column> {
    let net = build_network(inst, q, branch);
    let mut out = Vec::new();
    for &first in &net.tasks {
        let t = &inst.tasks[first];
        let lo = (t.earliest_start - inst.travel(Loc::Depot, Loc::Task(first)).worst_case()).max(0);
        for tl in lo..inst.horizon {
            let mut route = vec![first];
            walk(inst, q, branch, &net, tl, &mut route, &mut out);
        }
    }
    out.retain(|c| !branch.forbidden.contains(&c.key()));
    out
}

fn walk(
    inst: &Instance,
    q: usize,
    branch: &BranchState,
    net: &teamroute::pricing::PricingNetwork,
    tl: Time,
    route: &mut Vec<usize>,
    out: &mut Vec<Column>,
) {
    match Column::evaluate(inst, q, route, tl) {
        Ok(c) => {
            if !prefix_respects_upper(branch, &c) {
                return;
            }
            if branch.admits(&c) {
                out.push(c);
            } else if !prefix_respects_lower(branch, &c) {
                return;
            }
        }
        Err(ColumnError::LateReturn(_)) => {}
        Err(_) => return,
    }
    let last = *route.last().unwrap();
    for &j in net.successors(last) {
        if route.contains(&j) {
            continue;
        }
        route.push(j);
        walk(inst, q, branch, net, tl, route, out);
        route.pop();
    }
}

fn prefix_respects_upper(branch: &BranchState, c: &Column) -> bool {
    c.route.iter().zip(&c.finishes).all(|(i, &f)| branch.finish_upper.get(i).is_none_or(|&u| f <= u))
}

fn prefix_respects_lower(branch: &BranchState, c: &Column) -> bool {
    c.route.iter().zip(&c.finishes).all(|(i, &f)| branch.finish_lower.get(i).is_none_or(|&l| f >= l))
}

/// Minimum reduced cost by exhaustive enumeration, computed from raw duals.
pub fn brute_force_pp(case: &PricingCase) -> Option<f64> {
    all_feasible_columns(&case.inst, case.profile, &case.branch)
        .iter()
        .map(|c| case.duals.reduced_cost(&case.inst, c))
        .min_by(f64::total_cmp)
}

/// Every elementary task sequence of every profile and every leave time,
/// with no arc elimination, keeping only feasible columns.
pub fn all_columns_unpruned(inst: &Instance) -> Vec<Column> {
    let mut out = Vec::new();
    for q in 0..inst.n_profiles() {
        let tasks = inst.tasks_for(q);
        let mut route = Vec::new();
        extend_unpruned(inst, q, &tasks, &mut route, &mut out);
    }
    out
}

fn extend_unpruned(inst: &Instance, q: usize, tasks: &[usize], route: &mut Vec<usize>, out: &mut Vec<Column>) {
    for &i in tasks {
        if route.contains(&i) {
            continue;
        }
        route.push(i);
        let mut any = false;
        for tl in 0..inst.horizon {
            if let Ok(c) = Column::evaluate(inst, q, route, tl) {
                out.push(c);
                any = true;
            }
        }
        // Any feasible extension has a feasible prefix at the same leave time.
        if any {
            extend_unpruned(inst, q, tasks, route, out);
        }
        route.pop();
    }
}

/// Drops a column when another with the same route and profile costs no
/// more and is away from the depot during a sub-interval of its time.
pub fn drop_dominated(cols: Vec<Column>) -> Vec<Column> {
    let mut keep = Vec::new();
    'outer: for (a, ca) in cols.iter().enumerate() {
        for (b, cb) in cols.iter().enumerate() {
            if a == b || ca.route != cb.route || ca.profile != cb.profile {
                continue;
            }
            let dominates = cb.cost <= ca.cost && cb.leave >= ca.leave && cb.ret <= ca.ret;
            let strictly = cb.cost < ca.cost || cb.leave > ca.leave || cb.ret < ca.ret;
            if dominates && (strictly || b < a) {
                continue 'outer;
            }
        }
        keep.push(ca.clone());
    }
    keep
}

/// Direct assignment of individual workers to routes in leave-time order;
/// a worker can take a route once its previous route has returned. Routes
/// are visited by leave time, so every worker free at a route's leave stays
/// free for all later routes and same-level free workers are interchangeable:
/// only how many of each level a route takes matters.
pub fn assignment_feasible(inst: &Instance, routes: &[Column]) -> bool {
    let mut workers = Vec::new();
    for (k, s) in inst.skills.iter().enumerate() {
        for _ in 0..s.exact {
            workers.push((k, Time::MIN));
        }
    }
    let mut order: Vec<&Column> = routes.iter().collect();
    order.sort_by_key(|c| (c.leave, c.ret));
    assign(inst, &order, &mut workers)
}

fn assign(inst: &Instance, routes: &[&Column], workers: &mut Vec<(usize, Time)>) -> bool {
    let Some((r, rest)) = routes.split_first() else {
        return true;
    };
    let beta = &inst.profiles[r.profile].requirements;
    let nk = inst.n_skills();
    let mut avail = vec![0u32; nk];
    for &(k, free) in workers.iter() {
        if free <= r.leave {
            avail[k] += 1;
        }
    }
    let covers = |take: &[u32]| (0..nk).all(|k| take[k..].iter().sum::<u32>() >= beta[k]);
    let mut take = vec![0u32; nk];
    loop {
        let minimal = (0..nk).filter(|&k| take[k] > 0).all(|k| {
            let mut t = take.clone();
            t[k] -= 1;
            !covers(&t)
        });
        if covers(&take) && minimal {
            let mut saved = Vec::new();
            for k in 0..nk {
                let mut left = take[k];
                for (w, slot) in workers.iter_mut().enumerate() {
                    if left == 0 {
                        break;
                    }
                    if slot.0 == k && slot.1 <= r.leave {
                        saved.push((w, slot.1));
                        slot.1 = r.ret;
                        left -= 1;
                    }
                }
            }
            if assign(inst, rest, workers) {
                return true;
            }
            for (w, t) in saved {
                workers[w].1 = t;
            }
        }
        // Next count vector in mixed radix.
        let mut k = 0;
        loop {
            if k == nk {
                return false;
            }
            if take[k] < avail[k] {
                take[k] += 1;
                break;
            }
            take[k] = 0;
            k += 1;
        }
    }
}

/// Whether at-least-level worker counts hold at every time step.
pub fn capacity_ok(inst: &Instance, routes: &[Column]) -> bool {
    (0..inst.horizon).all(|tau| {
        (0..inst.n_skills())
            .all(|k| routes.iter().map(|c| c.usage(inst, k, tau)).sum::<u32>() <= inst.skills[k].at_least)
    })
}

/// Optimal objective over all covering selections of feasible columns that
/// respect capacities and admit a worker assignment.
pub fn exhaustive_optimum(inst: &Instance) -> Option<f64> {
    let cols = drop_dominated(all_columns_unpruned(inst));
    let n = inst.n_tasks();
    let mut by_task: Vec<Vec<&Column>> = vec![Vec::new(); n];
    for c in &cols {
        for &i in &c.route {
            by_task[i].push(c);
        }
    }
    for v in &mut by_task {
        v.sort_by(|a, b| a.cost.total_cmp(&b.cost));
    }
    let mut best = f64::INFINITY;
    let mut chosen: Vec<Column> = Vec::new();
    cover(inst, &by_task, 0u128, 0.0, &mut chosen, &mut best);
    if n == 0 {
        return Some(0.0);
    }
    best.is_finite().then_some(best)
}

fn cover(
    inst: &Instance,
    by_task: &[Vec<&Column>],
    covered: u128,
    cost: f64,
    chosen: &mut Vec<Column>,
    best: &mut f64,
) {
    let n = by_task.len();
    let Some(t) = (0..n).find(|&i| covered & (1 << i) == 0) else {
        if cost < *best && assignment_feasible(inst, chosen) {
            *best = cost;
        }
        return;
    };
    for c in &by_task[t] {
        if cost + c.cost >= *best - 1e-12 {
            break;
        }
        chosen.push((*c).clone());
        if capacity_ok(inst, chosen) {
            let mask = c.route.iter().fold(covered, |m, &i| m | (1 << i));
            cover(inst, by_task, mask, cost + c.cost, chosen, best);
        }
        chosen.pop();
    }
}

/// Instance with at most 4 tasks and 2 profiles, often with scarce workers
/// so that branching and assignment cuts come into play.
pub fn tiny_instance(seed: u64) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x7e57);
    let mut p = GenParams {
        seed,
        n_tasks: rng.gen_range(2..=4),
        n_profiles: rng.gen_range(1..=2),
        n_skills: rng.gen_range(1..=3),
        horizon: rng.gen_range(20..=34),
        worker_strength: rng.gen_range(0.0..0.8),
        max_support: rng.gen_range(1..=3),
        window_factor: rng.gen_range(0.5..3.0),
        ..Default::default()
    };
    loop {
        match generate(&p) {
            Ok(inst) => return inst,
            Err(_) => p.horizon += 4,
        }
    }
}

/// Up to `max_routes` random feasible columns of a random instance with up to
/// three skill levels and a handful of workers.
pub fn random_route_set(seed: u64, max_routes: usize) -> (Instance, Vec<Column>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xfea5);
    let mut p = GenParams {
        seed,
        n_tasks: rng.gen_range(3..=6),
        n_skills: rng.gen_range(1..=3),
        n_profiles: rng.gen_range(1..=3),
        horizon: 30,
        worker_strength: rng.gen_range(0.0..0.6),
        ..Default::default()
    };
    let mut inst = loop {
        match generate(&p) {
            Ok(inst) => break inst,
            Err(_) => p.horizon += 4,
        }
    };
    // Shrink the crew so that both outcomes are common.
    let shrink = rng.gen_bool(0.5);
    for s in &mut inst.skills {
        if shrink {
            s.exact = s.exact.min(rng.gen_range(1..=3));
        }
    }
    let mut at_least = 0;
    for s in inst.skills.iter_mut().rev() {
        at_least += s.exact;
        s.at_least = at_least;
    }
    let cols = all_columns_unpruned(&inst);
    let n = rng.gen_range(1..=max_routes);
    let routes = (0..n).map(|_| cols[rng.gen_range(0..cols.len())].clone()).collect();
    (inst, routes)
}

/// Generated instance with up to 10 tasks for column-generation tests.
pub fn cg_instance(seed: u64) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xc9);
    let mut p = GenParams {
        seed,
        n_tasks: rng.gen_range(4..=10),
        n_profiles: rng.gen_range(2..=5),
        n_skills: rng.gen_range(1..=3),
        horizon: rng.gen_range(30..=48),
        worker_strength: rng.gen_range(0.2..1.0),
        ..Default::default()
    };
    loop {
        match generate(&p) {
            Ok(inst) => return inst,
            Err(_) => p.horizon += 4,
        }
    }
}

/// All strategies the loop must agree on; the predictor stub is applied at
/// the root too so that its selection path runs.
pub fn all_strategies(seed: u64) -> Vec<Box<dyn teamroute::pcg::Strategy>> {
    use teamroute::pcg::{Full, Gamache, Gnn, RandomSubset, Rothenbaecher, StubPredictor};
    let mut stub = Gnn::new(Box::new(StubPredictor::new(seed)), 0.5, "stub");
    stub.apply_at_root = true;
    vec![
        Box::new(Full),
        Box::new(Gamache { max_negative: 1 }),
        Box::new(Gamache { max_negative: 2 }),
        Box::new(Gamache { max_negative: 3 }),
        Box::new(Rothenbaecher),
        Box::new(RandomSubset::new(0.3, seed)),
        Box::new(RandomSubset::new(0.5, seed)),
        Box::new(stub),
    ]
}
