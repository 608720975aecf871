//! Forbid-cut check by enumerating every 0/1 point of a small master.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use teamroute::lp::MilpOptions;
use teamroute::rmp::{Column, ColumnKey, MasterColumn, Rmp, RmpStatus};

/// What one seed exercised.
pub struct CutOutcome {
    pub columns: usize,
    pub points: usize,
    /// Points removed by the cut besides the cut solution itself; all are
    /// supersets of it.
    pub supersets_removed: usize,
}

/// Whether the master admits the route-column point `mask` (slack and
/// surplus columns stay free).
fn admits(rmp: &Rmp, routes: &[usize], mask: u32) -> bool {
    let mut fixed = rmp.clone();
    for (b, &j) in routes.iter().enumerate() {
        let v = if mask & (1 << b) != 0 { 1.0 } else { 0.0 };
        fixed.set_bounds(j, v, v);
    }
    fixed.solve() == RmpStatus::Optimal
}

fn point_cost(rmp: &Rmp, routes: &[usize], mask: u32, n_tasks: usize) -> f64 {
    let mut covered = vec![false; n_tasks];
    let mut cost = 0.0;
    for (b, &j) in routes.iter().enumerate() {
        if mask & (1 << b) != 0 {
            let MasterColumn::Route(c) = rmp.column(j) else { unreachable!() };
            cost += c.cost;
            for &i in &c.route {
                covered[i] = true;
            }
        }
    }
    cost + rmp.big_m() * covered.iter().filter(|c| !**c).count() as f64
}

/// Builds a master over at most 10 random columns of a small instance,
/// solves it as an integer program, cuts the solution off and checks the
/// re-solve and every 0/1 point against the cut's intent. `Ok(None)` when
/// the integer optimum uses no route column, so there is nothing to cut.
pub fn check_seed(seed: u64) -> Result<Option<CutOutcome>, String> {
    let (inst, _) = super::random_route_set(seed, 1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xc07);
    let mut cols: Vec<Column> = super::drop_dominated(super::all_columns_unpruned(&inst));
    cols.shuffle(&mut rng);
    cols.truncate(rng.gen_range(3..=10));
    let mut rmp = Rmp::new(&inst);
    let routes: Vec<usize> = cols.iter().filter_map(|c| rmp.add_column(c.clone())).collect();
    let n = routes.len();

    let chosen =
        |x: &[f64]| -> u32 { routes.iter().enumerate().filter(|(_, &j)| x[j] > 0.5).fold(0, |m, (b, _)| m | (1 << b)) };
    let opts = MilpOptions::default();
    let first = rmp.solve_integer(&opts);
    let x = first.values.ok_or(format!("seed {seed}: integer master has no solution"))?;
    let cut_mask = chosen(&x);
    if cut_mask == 0 {
        return Ok(None);
    }
    let before: Vec<bool> = (0..1u32 << n).map(|m| admits(&rmp, &routes, m)).collect();
    if !before[cut_mask as usize] {
        return Err(format!("seed {seed}: integer optimum not admitted by its own master"));
    }

    let members: Vec<ColumnKey> = (0..n)
        .filter(|b| cut_mask & (1 << b) != 0)
        .map(|b| match rmp.column(routes[b]) {
            MasterColumn::Route(c) => c.key(),
            _ => unreachable!(),
        })
        .collect();
    rmp.add_forbid_cut(&members);

    let mut supersets_removed = 0;
    let mut best = f64::INFINITY;
    for m in 0..1u32 << n {
        let after = admits(&rmp, &routes, m);
        let contains_cut = m & cut_mask == cut_mask;
        let expected = before[m as usize] && !contains_cut;
        if after != expected {
            return Err(format!("seed {seed}: point {m:b} admitted {after}, expected {expected}"));
        }
        if before[m as usize] && contains_cut && m != cut_mask {
            supersets_removed += 1;
        }
        if after {
            best = best.min(point_cost(&rmp, &routes, m, inst.n_tasks()));
        }
    }

    let second = rmp.solve_integer(&opts);
    let x = second.values.ok_or(format!("seed {seed}: no solution after the cut"))?;
    let m = chosen(&x);
    if m & cut_mask == cut_mask {
        return Err(format!("seed {seed}: re-solve returned {m:b} containing the cut set {cut_mask:b}"));
    }
    let obj = second.objective.unwrap_or(f64::NAN);
    if (obj - best).abs() > 1e-6 * best.abs().max(1.0) {
        return Err(format!("seed {seed}: re-solve objective {obj}, enumeration {best}"));
    }
    Ok(Some(CutOutcome { columns: n, points: 1 << n, supersets_removed }))
}
