mod common;

use common::{exhaustive_optimum, tiny_instance};
use teamroute::bnp::{solve, SolveOptions, SolveStatus};
use teamroute::pcg::Full;

#[test]
fn matches_exhaustive() {
    let (mut branched, mut cut, mut infeasible) = (0, 0, 0);
    for seed in 0..200 {
        let inst = tiny_instance(seed);
        let oracle = exhaustive_optimum(&inst);
        let res = solve(&inst, &mut Full, &SolveOptions::default()).unwrap();
        if res.stats.nodes > 1 {
            branched += 1;
        }
        if res.stats.cuts > 0 {
            cut += 1;
        }
        if oracle.is_none() {
            infeasible += 1;
        }
        match oracle {
            Some(v) => {
                assert_eq!(res.status, SolveStatus::Optimal, "seed {seed}");
                assert!((res.objective().unwrap() - v).abs() <= 1e-6, "seed {seed}: {v} vs {:?}", res.objective());
            }
            None => assert_eq!(res.status, SolveStatus::InfeasibleProved, "seed {seed}"),
        }
    }
    // The sample must exercise branching and both outcomes.
    assert!(
        branched > 0 && infeasible > 0 && infeasible < 200,
        "branched {branched} cut {cut} infeasible {infeasible}"
    );
}
