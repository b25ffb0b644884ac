use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use super::*;
use crate::exprlang::ObjectiveExpr;
use crate::model::{Alternative, DecisionProblem, Distribution, ParameterSpec};
use crate::simengine::simulate;
use crate::testkit::{car_problem, two_var_problem};

fn matrix(columns: Vec<Vec<f64>>) -> ScenarioMatrix {
    let n = columns[0].len();
    ScenarioMatrix {
        alternatives: (0..columns.len()).map(|i| alloc::format!("alt{i}")).collect(),
        columns,
        seed: 1,
        sample_count: n,
        months: 12,
        paired: true,
    }
}

fn assert_identity(r: &ComparisonReport) {
    for a in &r.alternatives {
        for b in &r.alternatives {
            if a != b {
                let total = r.win(a, b) + r.win(b, a) + r.tie(a, b);
                assert!((total - 1.0).abs() < 1e-12, "{a},{b}: {total}");
                assert_eq!(r.tie(a, b), r.tie(b, a));
            }
        }
    }
    let sum: f64 = r.best_probability.values().sum();
    assert!((sum - 1.0).abs() <= 1.0 / r.sample_count as f64);
}

#[test]
fn car_at_72_months_recommends_buying() {
    let p = car_problem(72, false);
    let m = simulate(&p).unwrap();
    let r = compare(&m, p.direction).unwrap();
    assert_eq!(r.recommendation, "buy");
    assert_eq!(r.expected["buy"], 30_000.0);
    assert!((r.expected["lease"] - 31_500.0).abs() < 1e-9);
    assert_eq!(r.win("buy", "lease"), 1.0);
    assert_eq!(r.best_probability["buy"], 1.0);
    assert_eq!(r.narrative.runner_up.as_deref(), Some("lease"));
    assert_identity(&r);
}

#[test]
fn identical_alternatives_tie() {
    let col = vec![1.0, 2.0, 3.0, 4.0];
    let mut m = matrix(vec![col.clone(), col]);
    m.alternatives = vec!["zeta".into(), "alpha".into()];
    let r = compare(&m, Direction::Minimize).unwrap();
    assert_eq!(r.win("zeta", "alpha"), 0.0);
    assert_eq!(r.win("alpha", "zeta"), 0.0);
    assert_eq!(r.tie("alpha", "zeta"), 1.0);
    assert_eq!(r.recommendation, "alpha");
    assert_eq!(r.best_probability["alpha"], 0.5);
    assert_identity(&r);
    let rec = recommend(&r, DEFAULT_MIN_CONFIDENCE);
    assert!(rec.is_low_confidence());
    assert_eq!(rec.confidence, 0.5);
}

#[test]
fn stddev_breaks_expected_ties() {
    let m = matrix(vec![vec![0.0, 2.0], vec![1.0, 1.0]]);
    let r = compare(&m, Direction::Minimize).unwrap();
    assert_eq!(r.recommendation, "alt1");
}

#[test]
fn independent_uniforms_win_half_the_time() {
    let u = Distribution::uniform(0.0, 1.0);
    let m = simulate(&two_var_problem(u, u, 100_000, 2024)).unwrap();
    let r = compare(&m, Direction::Minimize).unwrap();
    // 3 / (2 sqrt(N)) ~ 0.0047; the stated tolerance is 0.01
    assert!((r.win("a", "b") - 0.5).abs() <= 0.01, "{}", r.win("a", "b"));
    assert_identity(&r);
    let rec = recommend(&r, 0.8);
    assert!((rec.confidence - 0.5).abs() < 0.01);
    assert!(rec.is_low_confidence());
}

#[test]
fn dominant_alternative_has_full_confidence() {
    let m = matrix(vec![vec![1.0, 2.0, 3.0], vec![5.0, 6.0, 7.0], vec![4.0, 9.0, 3.5]]);
    let r = compare(&m, Direction::Minimize).unwrap();
    let rec = recommend(&r, 0.8);
    assert_eq!(rec.alternative, "alt0");
    assert_eq!(rec.confidence, 1.0);
    assert!(rec.caveats.is_empty());
    assert_eq!(r.best_probability["alt1"], 0.0);
    assert_identity(&r);
}

#[test]
fn unpaired_and_empty_matrices_are_rejected() {
    let mut m = matrix(vec![vec![1.0], vec![2.0]]);
    m.paired = false;
    assert_eq!(compare(&m, Direction::Minimize), Err(CompareError::UnpairedMatrix));
    let mut m = matrix(vec![vec![1.0], vec![2.0]]);
    m.sample_count = 0;
    assert_eq!(compare(&m, Direction::Minimize), Err(CompareError::EmptyMatrix));
}

fn uniform_problem(n: usize, seed: u64) -> ScenarioMatrix {
    let u = Distribution::uniform(0.0, 1.0);
    simulate(&two_var_problem(u, Distribution::uniform(0.2, 1.1), n, seed)).unwrap()
}

#[test]
fn scaling_preserves_recommendation_and_wins() {
    let m = uniform_problem(5000, 9);
    let base = compare(&m, Direction::Minimize).unwrap();
    for c in [2.0, 3.7, 1e-3] {
        let mut scaled = m.clone();
        scaled.columns.iter_mut().flatten().for_each(|v| *v *= c);
        let r = compare(&scaled, Direction::Minimize).unwrap();
        assert_eq!(r.recommendation, base.recommendation);
        assert_eq!(r.win_matrix, base.win_matrix);
        assert_eq!(r.tie_mass, base.tie_mass);
        assert_eq!(r.best_probability, base.best_probability);
    }
}

#[test]
fn maximizing_negated_samples_mirrors_minimizing() {
    let m = uniform_problem(5000, 10);
    let min = compare(&m, Direction::Minimize).unwrap();
    let mut neg = m.clone();
    neg.columns.iter_mut().flatten().for_each(|v| *v = -*v);
    let max = compare(&neg, Direction::Maximize).unwrap();
    assert_eq!(max.recommendation, min.recommendation);
    assert_eq!(max.win_matrix, min.win_matrix);
    assert_eq!(max.tie_mass, min.tie_mass);
    assert_eq!(max.best_probability, min.best_probability);
    let negated: BTreeMap<String, f64> = min.expected.iter().map(|(k, v)| (k.clone(), -v)).collect();
    assert_eq!(max.expected, negated);
}

/// Exhaustive enumeration over independent 3-point distributions.
fn enumerate_wins(dists: &[Vec<(f64, f64)>]) -> Vec<Vec<f64>> {
    let k = dists.len();
    let mut wins = vec![vec![0.0; k]; k];
    let mut idx = vec![0usize; k];
    loop {
        let prob: f64 = idx.iter().enumerate().map(|(a, &i)| dists[a][i].1).product();
        for a in 0..k {
            for b in 0..k {
                if a != b && dists[a][idx[a]].0 < dists[b][idx[b]].0 {
                    wins[a][b] += prob;
                }
            }
        }
        let mut pos = 0;
        loop {
            if pos == k {
                return wins;
            }
            idx[pos] += 1;
            if idx[pos] < dists[pos].len() {
                break;
            }
            idx[pos] = 0;
            pos += 1;
        }
    }
}

/// Objective that maps a uniform parameter onto a 3-point distribution with
/// values v0 < v1 < v2 and probabilities p0, p1, p2 (as a sum of step terms).
fn three_point_source(param: &str, v: [f64; 3], p: [f64; 3]) -> (String, Distribution) {
    let c1 = p[0];
    let c2 = p[0] + p[1];
    // step(u - c) = max(0, min(1, (u - c) * 1e12)): 0 below c, 1 above
    let src = alloc::format!(
        "{v0} + {d1} * max(0, min(1, ({param} - {c1}) * 1000000000000)) \
         + {d2} * max(0, min(1, ({param} - {c2}) * 1000000000000))",
        v0 = v[0],
        d1 = v[1] - v[0],
        d2 = v[2] - v[1],
    );
    (src, Distribution::uniform(0.0, 1.0))
}

#[test]
fn monte_carlo_wins_match_enumeration() {
    let specs: [([f64; 3], [f64; 3]); 3] = [
        ([1.0, 2.0, 3.0], [0.2, 0.5, 0.3]),
        ([1.5, 2.0, 2.5], [0.3, 0.3, 0.4]),
        ([0.0, 2.0, 4.0], [0.1, 0.8, 0.1]),
    ];
    let names = ["p", "q", "r"];
    let mut terms = Vec::new();
    let mut alts = Vec::new();
    for (i, (v, pr)) in specs.iter().enumerate() {
        let (src, dist) = three_point_source(names[i], *v, *pr);
        terms.push(alloc::format!("sel_{i} * ({src})"));
        let mut alt = Alternative::new(&alloc::format!("alt{i}"), 1);
        for (j, n) in names.iter().enumerate() {
            alt = alt.bind(ParameterSpec::new(n, "", dist));
            let sel = if i == j { 1.0 } else { 0.0 };
            alt = alt.bind(ParameterSpec::new(&alloc::format!("sel_{j}"), "", Distribution::fixed(sel)));
        }
        alts.push(alt);
    }
    let problem = DecisionProblem {
        title: "three point".into(),
        alternatives: alts,
        objective: ObjectiveExpr::parse(&terms.join(" + ")).unwrap(),
        direction: Direction::Minimize,
        comparison_horizon_months: 1,
        sample_count: 200_000,
        seed: 77,
    };
    let r = compare(&simulate(&problem).unwrap(), Direction::Minimize).unwrap();
    let exact = enumerate_wins(
        &specs
            .iter()
            .map(|(v, p)| v.iter().copied().zip(p.iter().copied()).collect())
            .collect::<Vec<_>>(),
    );
    for a in 0..3 {
        for b in 0..3 {
            if a != b {
                let mc = r.win(&alloc::format!("alt{a}"), &alloc::format!("alt{b}"));
                // 200k scenarios here; the 1e6 run lives in the acceptance suite
                assert!((mc - exact[a][b]).abs() < 0.006, "{a}>{b}: {mc} vs {}", exact[a][b]);
            }
        }
    }
    assert_identity(&r);
}

#[test]
fn additive_sensitivity_matches_variance_shares() {
    let mut p = two_var_problem(Distribution::uniform(0.0, 1.0), Distribution::fixed(0.0), 100_000, 5);
    p.alternatives[0]
        .bindings
        .insert("y".into(), ParameterSpec::new("y", "", Distribution::uniform(0.0, 3.0)));
    let m = simulate(&p).unwrap();
    let t = sensitivity(&p, &m).unwrap();
    let x = t.contribution("a", "x").unwrap();
    let y = t.contribution("a", "y").unwrap();
    assert!((x - 0.10).abs() <= 0.02, "{x}");
    assert!((y - 0.90).abs() <= 0.02, "{y}");
    assert!((x + y - 1.0).abs() <= 0.03);
    assert_eq!(t.contribution("b", "x"), Some(0.0));
}

#[test]
fn all_fixed_problem_has_zero_contributions() {
    let p = car_problem(72, false);
    let m = simulate(&p).unwrap();
    let t = sensitivity(&p, &m).unwrap();
    for alt in t.alternatives.values() {
        assert!(alt.zero_variance);
        assert!(alt.contributions.values().all(|&c| c == 0.0));
    }
}

#[test]
fn car_sensitivity_matches_analytic_shares() {
    // buy at a 72-month horizon: 3000 + m * 60 + maint * 6, with
    // m ~ U(350, 450), maint ~ U(400, 600):
    //   Var(60 m) = 3600 * 10000/12 = 3.0e6, Var(6 maint) = 36 * 40000/12 = 1.2e5
    let (vm, vmaint) = (3.0e6, 1.2e5);
    let mut p = car_problem(72, true);
    p.sample_count = 100_000;
    let m = simulate(&p).unwrap();
    let t = sensitivity(&p, &m).unwrap();
    let monthly = t.contribution("buy", "monthly_payment").unwrap();
    let maint = t.contribution("buy", "maintenance_annual").unwrap();
    assert!((monthly - vm / (vm + vmaint)).abs() < 0.01, "{monthly}");
    assert!((maint - vmaint / (vm + vmaint)).abs() < 0.01, "{maint}");
    // overage is switched off for buying (rate Fixed at 0)
    assert_eq!(t.contribution("buy", "overage_rate"), Some(0.0));
    assert!(t.contribution("buy", "annual_miles").unwrap() < 1e-12);
    assert_eq!(t.contribution("buy", "down_payment"), Some(0.0));

    // lease: 72 m + 6 rate (miles - 12000), m ~ U(350,450), rate ~ U(0.10,0.20),
    // miles ~ U(13500,16500). First-order: Var(72 m) = 4.32e6,
    // rate alone at miles=15000: (6*3000)^2 * 0.01/12 = 2.7e5,
    // miles alone at rate=0.15: 0.9^2 * 9e6/12 = 6.075e5
    let lease_total_first = 4.32e6 + 2.7e5 + 6.075e5;
    let monthly = t.contribution("lease", "monthly_payment").unwrap();
    let miles = t.contribution("lease", "annual_miles").unwrap();
    let rate = t.contribution("lease", "overage_rate").unwrap();
    // the product term adds interaction variance 36 * (9e6/12) * (0.01/12) = 22500
    let total = lease_total_first + 22_500.0;
    assert!((monthly - 4.32e6 / total).abs() < 0.01, "{monthly}");
    assert!((miles - 6.075e5 / total).abs() < 0.01, "{miles}");
    assert!((rate - 2.7e5 / total).abs() < 0.01, "{rate}");
    assert!(monthly > miles && miles > rate);
}

#[test]
fn sensitivity_rejects_foreign_matrix() {
    let p = car_problem(72, true);
    let m = simulate(&p).unwrap();
    let mut q = p.clone();
    q.seed += 1;
    assert_eq!(sensitivity(&q, &m), Err(SensitivityError::MatrixMismatch("seed")));
}
