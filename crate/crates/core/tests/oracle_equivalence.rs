mod brute_force;
mod support;

#[test]
fn planner_matches_brute_force() {
    for (i, p) in support::problems(2024, 200).iter().enumerate() {
        let lib = support::library_solve(p);
        let oracle = brute_force::solve(p);
        assert_eq!(
            (lib.plan.cut_index, lib.plan.gpu_frequency_hz.to_bits()),
            (oracle.cut, oracle.freq.to_bits()),
            "problem {i}: {p:?}"
        );
        assert_eq!(lib.feasible, oracle.feasible, "problem {i}");
        let rel = |a: f64, b: f64| (a - b).abs() / b.abs().max(1e-300);
        assert!(rel(lib.metrics.delay_s, oracle.delay) < 1e-9, "problem {i}");
        assert!(rel(lib.metrics.total_energy_j, oracle.energy) < 1e-9, "problem {i}");
    }
}

#[test]
fn problems_mix_feasible_and_infeasible() {
    let results: Vec<bool> = support::problems(2024, 200)
        .iter()
        .map(|p| brute_force::solve(p).feasible)
        .collect();
    assert!(results.iter().any(|f| *f));
    assert!(results.iter().any(|f| !*f));
}
