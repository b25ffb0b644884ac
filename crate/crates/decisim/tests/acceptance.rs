//! Acceptance gate. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::Arc;
use std::time::{Duration, Instant};

use axum::http::{Method, StatusCode};
use decisim::analysis::{analyze, report_json, RunOptions};
use decisim::core::exprlang::{BinaryOp, Expr, Function};
use decisim::core::simengine::{point_estimate, simulate_with_workers};
use decisim::core::{
    compare, sensitivity, Alternative, DecisionProblem, Direction, Distribution, ObjectiveExpr, ParameterSpec,
};
use decisim::dialog::{build_problem, DialogState, Phase, ScriptedBackend, SimConfig, Template};
use decisim::doc::ProblemDoc;
use decisim::warehouse::{NoPriors, Store};
use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestRng, TestRunner};

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

struct Criterion {
    name: &'static str,
    limit: Option<Duration>,
    check: fn() -> Outcome,
}

fn example(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("examples").join(name)
}

fn load(name: &str) -> ProblemDoc {
    ProblemDoc::from_json(&std::fs::read_to_string(example(name)).unwrap()).unwrap()
}

fn workers() -> usize {
    decisim::analysis::default_workers()
}

fn scripted_state(turns: &[&str]) -> DialogState {
    let backend = ScriptedBackend::new();
    let mut s = DialogState::new("acceptance", Arc::new(Template::builtin()));
    s.open(&backend);
    for t in turns {
        s.advance(t, &backend).unwrap();
    }
    s
}

fn tco_oracle() -> Outcome {
    let t = common::transcript();
    let turns: Vec<&str> = t.turns.iter().map(String::as_str).collect();
    let problem = build_problem(&scripted_state(&turns), &NoPriors, SimConfig::default()).map_err(|e| e.to_string())?;
    let buy = point_estimate(&problem, "buy", 60).map_err(|e| e.to_string())?;
    let lease = point_estimate(&problem, "lease", 36).map_err(|e| e.to_string())?;
    ensure!(buy == 29_500.0, "buy over 60 months = {buy}");
    ensure!(lease == 15_750.0, "lease over 36 months = {lease}");

    // the same values through the simulation engine
    let fixed = load("car_fixed.json").to_problem().unwrap();
    let m = simulate_with_workers(&fixed, 2).map_err(|e| e.to_string())?;
    ensure!(m.columns[0].iter().all(|&v| v == 29_500.0), "engine buy column differs");

    let mut doc: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(example("car_fixed.json")).unwrap()).unwrap();
    doc["comparison_horizon_months"] = 36.into();
    let lease_alt = doc["alternatives"][1].clone();
    let mut twin = lease_alt.clone();
    twin["name"] = "lease_twin".into();
    doc["alternatives"] = serde_json::json!([lease_alt, twin]);
    for alt in doc["alternatives"].as_array_mut().unwrap() {
        alt["bindings"]["payment_months"]["dist"]["value"] = 36.into();
    }
    let lease_only = ProblemDoc::from_json(&doc.to_string()).map_err(|e| e.to_string())?.to_problem().unwrap();
    let m = simulate_with_workers(&lease_only, 2).map_err(|e| e.to_string())?;
    ensure!(m.columns[0].iter().all(|&v| v == 15_750.0), "engine lease column differs");
    Ok(format!("buy {buy:.2}, lease {lease:.2}"))
}

fn recommendation_direction() -> Outcome {
    let t = common::transcript();
    let turns: Vec<&str> = t.turns.iter().map(String::as_str).collect();
    let store = common::seeded_store();
    let sim = SimConfig { sample_count: 100_000, seed: 42 };
    let problem = build_problem(&scripted_state(&turns), store.as_ref(), sim).map_err(|e| e.to_string())?;
    ensure!(problem.comparison_horizon_months == 72, "horizon {}", problem.comparison_horizon_months);
    let r = analyze(&problem, RunOptions { workers: workers(), sensitivity: false })
        .map_err(|e| e.to_string())?
        .report;
    ensure!(r.recommendation == "buy", "dialog problem recommends {}", r.recommendation);

    let car = load("car.json").to_problem().unwrap();
    ensure!(car.comparison_horizon_months == 72 && car.sample_count == 100_000, "car.json settings changed");
    let r2 = analyze(&car, RunOptions { workers: workers(), sensitivity: false })
        .map_err(|e| e.to_string())?
        .report;
    ensure!(r2.recommendation == "buy", "car.json recommends {}", r2.recommendation);
    Ok(format!(
        "buy {:.0} vs lease {:.0}, P(best buy) {:.3}",
        r.expected["buy"], r.expected["lease"], r.best_probability["buy"]
    ))
}

fn mc_convergence() -> Outcome {
    // Y = 2a + 3b - c + 10, a~U(0,1), b~U(10,20), c~U(-5,5)
    let mean = 2.0 * 0.5 + 3.0 * 15.0 - 0.0 + 10.0;
    let var: f64 = 4.0 / 12.0 + 9.0 * 100.0 / 12.0 + 100.0 / 12.0;
    let n = 10_000usize;
    let bound = 4.0 * var.sqrt() / (n as f64).sqrt();
    let mut inside = 0;
    let mut worst = 0.0f64;
    for seed in 1..=100u64 {
        let alt = |name: &str| {
            Alternative::new(name, 1)
                .bind(ParameterSpec::new("a", "", Distribution::uniform(0.0, 1.0)))
                .bind(ParameterSpec::new("b", "", Distribution::uniform(10.0, 20.0)))
                .bind(ParameterSpec::new("c", "", Distribution::uniform(-5.0, 5.0)))
        };
        let problem = DecisionProblem {
            title: "linear".into(),
            alternatives: vec![alt("x"), alt("y")],
            objective: ObjectiveExpr::parse("2 * a + 3 * b - c + 10").unwrap(),
            direction: Direction::Minimize,
            comparison_horizon_months: 1,
            sample_count: n,
            seed,
        };
        let m = simulate_with_workers(&problem, workers()).map_err(|e| e.to_string())?;
        let got = m.columns[0].iter().sum::<f64>() / n as f64;
        let err = (got - mean).abs();
        worst = worst.max(err / bound);
        if err <= bound {
            inside += 1;
        }
    }
    ensure!(inside >= 99, "{inside}/100 seeds within 4 sigma/sqrt(N)");
    Ok(format!("{inside}/100 seeds inside, worst at {worst:.2} of the bound"))
}

fn selector_problem(params: &[&str], sources: &[String], dist: Distribution, n: usize, seed: u64) -> DecisionProblem {
    let terms: Vec<String> = sources.iter().enumerate().map(|(i, s)| format!("sel_{i} * ({s})")).collect();
    let alternatives = (0..sources.len())
        .map(|i| {
            let mut alt = Alternative::new(&format!("alt{i}"), 1);
            for p in params {
                alt = alt.bind(ParameterSpec::new(p, "", dist));
            }
            for j in 0..sources.len() {
                let sel = if i == j { 1.0 } else { 0.0 };
                alt = alt.bind(ParameterSpec::new(&format!("sel_{j}"), "", Distribution::fixed(sel)));
            }
            alt
        })
        .collect();
    DecisionProblem {
        title: "selector".into(),
        alternatives,
        objective: ObjectiveExpr::parse(&terms.join(" + ")).unwrap(),
        direction: Direction::Minimize,
        comparison_horizon_months: 1,
        sample_count: n,
        seed,
    }
}

fn three_point(param: &str, v: [f64; 3], p: [f64; 3]) -> String {
    let (c1, c2) = (p[0], p[0] + p[1]);
    format!(
        "{v0} + {d1} * max(0, min(1, ({param} - {c1}) * 1000000000000)) \
         + {d2} * max(0, min(1, ({param} - {c2}) * 1000000000000))",
        v0 = v[0],
        d1 = v[1] - v[0],
        d2 = v[2] - v[1],
    )
}

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

fn win_probability() -> Outcome {
    let iid = selector_problem(&["u", "v"], &["u".into(), "v".into()], Distribution::uniform(0.0, 1.0), 100_000, 11);
    let m = simulate_with_workers(&iid, workers()).map_err(|e| e.to_string())?;
    let r = compare(&m, Direction::Minimize).map_err(|e| e.to_string())?;
    let w = r.win("alt0", "alt1");
    ensure!((w - 0.5).abs() <= 0.01, "iid uniform win {w}");

    let specs: [([f64; 3], [f64; 3]); 3] = [
        ([1.0, 2.0, 3.0], [0.2, 0.5, 0.3]),
        ([1.5, 2.0, 2.5], [0.3, 0.3, 0.4]),
        ([0.0, 2.0, 4.0], [0.1, 0.8, 0.1]),
    ];
    let names = ["p", "q", "r"];
    let sources: Vec<String> = specs.iter().zip(names).map(|((v, p), n)| three_point(n, *v, *p)).collect();
    let problem = selector_problem(&names, &sources, Distribution::uniform(0.0, 1.0), 1_000_000, 2024);
    let m = simulate_with_workers(&problem, workers()).map_err(|e| e.to_string())?;
    let r = compare(&m, Direction::Minimize).map_err(|e| e.to_string())?;
    let exact = enumerate_wins(&specs.iter().map(|(v, p)| v.iter().copied().zip(p.iter().copied()).collect()).collect::<Vec<_>>());
    let mut worst = 0.0f64;
    for a in 0..3 {
        for b in 0..3 {
            if a != b {
                let mc = r.win(&format!("alt{a}"), &format!("alt{b}"));
                worst = worst.max((mc - exact[a][b]).abs());
            }
        }
    }
    ensure!(worst <= 0.005, "3-point max deviation {worst:.4}");
    Ok(format!("iid win {w:.4}; 3-point max deviation {worst:.4}"))
}

fn sensitivity_oracle() -> Outcome {
    let alt = |name: &str, fixed: f64| {
        Alternative::new(name, 1)
            .bind(ParameterSpec::new("a", "", Distribution::uniform(0.0, 1.0)))
            .bind(ParameterSpec::new("b", "", Distribution::uniform(0.0, 3.0)))
            .bind(ParameterSpec::new("c", "", Distribution::fixed(fixed)))
    };
    let problem = DecisionProblem {
        title: "additive".into(),
        alternatives: vec![alt("one", 1.0), alt("two", 5.0)],
        objective: ObjectiveExpr::parse("a + b + c").unwrap(),
        direction: Direction::Minimize,
        comparison_horizon_months: 1,
        sample_count: 100_000,
        seed: 5,
    };
    let m = simulate_with_workers(&problem, workers()).map_err(|e| e.to_string())?;
    let table = sensitivity(&problem, &m).map_err(|e| e.to_string())?;
    let mut detail = String::new();
    for name in ["one", "two"] {
        let a = table.contribution(name, "a").unwrap_or(f64::NAN);
        let b = table.contribution(name, "b").unwrap_or(f64::NAN);
        let c = table.contribution(name, "c").unwrap_or(f64::NAN);
        ensure!((a - 0.10).abs() <= 0.02, "{name}: A = {a}");
        ensure!((b - 0.90).abs() <= 0.02, "{name}: B = {b}");
        ensure!(c == 0.0, "{name}: fixed C = {c}");
        ensure!((a + b + c - 1.0).abs() <= 0.03, "{name}: sum {}", a + b + c);
        if detail.is_empty() {
            detail = format!("A {a:.3}, B {b:.3}, C {c}, sum {:.3}", a + b + c);
        }
    }
    Ok(detail)
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let car = example("car.json");
    let run = || {
        Command::new(env!("CARGO_BIN_EXE_decisim"))
            .args(["run", car.to_str().unwrap(), "--seed", "42", "--format", "json"])
            .current_dir(dir.path())
            .output()
            .unwrap()
    };
    let (a, b) = (run(), run());
    ensure!(a.status.success(), "run failed: {}", String::from_utf8_lossy(&a.stderr));
    ensure!(a.stdout == b.stdout, "two runs differ");

    let problem = load("car.json").to_problem().unwrap();
    let one = simulate_with_workers(&problem, 1).map_err(|e| e.to_string())?;
    let eight = simulate_with_workers(&problem, 8).map_err(|e| e.to_string())?;
    let same = one.columns.len() == eight.columns.len()
        && one
            .columns
            .iter()
            .zip(&eight.columns)
            .all(|(x, y)| x.len() == y.len() && x.iter().zip(y).all(|(p, q)| p.to_bits() == q.to_bits()));
    ensure!(same, "1-worker and 8-worker matrices differ");
    Ok(format!("{} output bytes identical; {} x {} matrix identical", a.stdout.len(), one.columns.len(), one.sample_count))
}

fn slot_guard() -> Outcome {
    let t = common::transcript();
    let turns: Vec<&str> = t.turns.iter().map(String::as_str).collect();
    let full = scripted_state(&turns);
    ensure!(full.phase == Phase::ReadyToSimulate, "full transcript ends in {:?}", full.phase);

    let rt = tokio::runtime::Builder::new_current_thread().enable_all().build().unwrap();
    rt.block_on(async {
        let app = common::router(common::seeded_store(), 10_000);
        let id = common::new_session(&app).await;
        common::say(&app, &id, turns[0]).await;
        common::say(&app, &id, turns[1]).await;
        common::say(&app, &id, common::before_lease_answer(turns[2])).await;
        let (status, body) = common::call(&app, Method::POST, &format!("/v1/sessions/{id}/simulate"), None).await;
        let err = common::json(&body);
        ensure!(status == StatusCode::CONFLICT, "truncated transcript gave {status}");
        ensure!(err["error"] == "incomplete_slots", "error {}", err["error"]);
        let missing = err["missing"].as_array().cloned().unwrap_or_default();
        ensure!(missing.iter().any(|m| m == "lease_term_months"), "missing {missing:?}");
        Ok(format!("409 incomplete_slots, missing {}", serde_json::Value::Array(missing)))
    })
}

fn arb_expr() -> impl Strategy<Value = Expr> {
    let leaf = prop_oneof![
        prop_oneof![
            (0u32..10_000).prop_map(f64::from),
            0.0f64..1e6,
            Just(0.15),
            Just(1e-7),
            Just(2.5e12),
        ]
        .prop_map(Expr::Number),
        prop::sample::select(vec!["a", "b", "c_1", "months", "years"]).prop_map(Expr::ident),
    ];
    leaf.prop_recursive(6, 48, 3, |inner| {
        prop_oneof![
            (
                prop::sample::select(vec![BinaryOp::Add, BinaryOp::Sub, BinaryOp::Mul, BinaryOp::Div]),
                inner.clone(),
                inner.clone()
            )
                .prop_map(|(op, l, r)| {
                    let r = match r {
                        Expr::Number(v) if op == BinaryOp::Div && v == 0.0 => Expr::Number(1.0),
                        r => r,
                    };
                    Expr::binary(op, l, r)
                }),
            inner.clone().prop_map(|c| Expr::Neg(Box::new(c))),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::call(Function::Max, vec![a, b])),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::call(Function::Min, vec![a, b])),
            inner.prop_map(|a| Expr::call(Function::Abs, vec![a])),
        ]
    })
}

fn runner(seed_byte: u8) -> TestRunner {
    let config = Config {
        cases: 10_000,
        failure_persistence: None,
        ..Config::default()
    };
    TestRunner::new_with_rng(config, TestRng::from_seed(RngAlgorithm::ChaCha, &[seed_byte; 32]))
}

fn parser_properties() -> Outcome {
    runner(1)
        .run(&arb_expr(), |e| {
            let src = ObjectiveExpr::from_root(e.clone()).to_source();
            let reparsed = ObjectiveExpr::parse(&src).map_err(|err| TestCaseError::fail(format!("{src}: {err}")))?;
            prop_assert_eq!(reparsed.root(), &e, "source: {}", src);
            Ok(())
        })
        .map_err(|e| format!("round trip: {e}"))?;

    let token = prop::sample::select(vec![
        "a", "b", "1", "2.5", "1e3", "+", "-", "*", "/", "(", ")", ",", "max", "min", "abs", " ", "months", "0", ".", "e",
    ]);
    let soup = prop::collection::vec(token, 0..24).prop_map(|t| t.concat());
    let text = prop_oneof![soup, ".{0,64}", prop::collection::vec(any::<u8>(), 0..64).prop_map(|b| String::from_utf8_lossy(&b).into_owned())];
    let accepted = std::cell::Cell::new(0usize);
    runner(2)
        .run(&text, |s| {
            if let Ok(obj) = ObjectiveExpr::parse(&s) {
                accepted.set(accepted.get() + 1);
                let again = ObjectiveExpr::parse(&obj.to_source()).map_err(|e| TestCaseError::fail(e.to_string()))?;
                prop_assert_eq!(again.root(), obj.root());
            }
            Ok(())
        })
        .map_err(|e| format!("fuzz: {e}"))?;
    Ok(format!("10000 round trips, 10000 fuzz inputs ({} parsed)", accepted.get()))
}

fn replay_fidelity() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("store.jsonl");
    let t = common::transcript();
    {
        let store = Arc::new(Store::open(&path).map_err(|e| e.to_string())?);
        for p in decisim::warehouse::builtin_priors() {
            store.insert_prior(p).unwrap();
        }
        let rt = tokio::runtime::Builder::new_current_thread().enable_all().build().unwrap();
        rt.block_on(async {
            let app = common::router(Arc::clone(&store), 20_000);
            for seed in [42u64, 7, 1_000_003] {
                let id = common::new_session(&app).await;
                for turn in &t.turns {
                    common::say(&app, &id, turn).await;
                }
                let path = format!("/v1/sessions/{id}/simulate");
                let body = serde_json::json!({ "seed": seed, "sensitivity": seed != 7 });
                let (status, _) = common::call(&app, Method::POST, &path, Some(body)).await;
                assert_eq!(status, StatusCode::OK);
                common::call(&app, Method::POST, &path, Some(serde_json::json!({"sample_count": 5000}))).await;
            }
        });
    }
    let reopened = Store::open(&path).map_err(|e| e.to_string())?;
    let sessions = reopened.sessions();
    ensure!(sessions.len() == 6, "{} stored sessions", sessions.len());
    for record in &sessions {
        let again = decisim::analysis::replay(record, 3).map_err(|e| e.to_string())?;
        ensure!(report_json(&again) == report_json(&record.report), "{} differs in process", record.id);
    }

    let out = Command::new(env!("CARGO_BIN_EXE_decisim"))
        .args(["warehouse", "--store", path.to_str().unwrap(), "replay"])
        .output()
        .unwrap();
    let text = String::from_utf8_lossy(&out.stdout);
    ensure!(out.status.success(), "replay exited {:?}: {text}", out.status.code());
    let identical = text.lines().filter(|l| l.ends_with("\tidentical")).count();
    ensure!(identical == sessions.len(), "{identical} of {} identical", sessions.len());
    Ok(format!("{identical}/{} sessions identical after restart", sessions.len()))
}

fn main() {
    let criteria = [
        Criterion { name: "deterministic TCO oracle", limit: Some(Duration::from_secs(1)), check: tco_oracle },
        Criterion { name: "recommendation direction", limit: Some(Duration::from_secs(5)), check: recommendation_direction },
        Criterion { name: "Monte Carlo convergence", limit: Some(Duration::from_secs(30)), check: mc_convergence },
        Criterion { name: "win-probability oracle", limit: Some(Duration::from_secs(60)), check: win_probability },
        Criterion { name: "sensitivity oracle", limit: Some(Duration::from_secs(30)), check: sensitivity_oracle },
        Criterion { name: "determinism", limit: None, check: determinism },
        Criterion { name: "slot-completeness guard", limit: None, check: slot_guard },
        Criterion { name: "parser properties", limit: None, check: parser_properties },
        Criterion { name: "replay fidelity", limit: None, check: replay_fidelity },
    ];
    let mut failed = 0;
    for c in &criteria {
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(c.check)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let elapsed = start.elapsed();
        let result = match (result, c.limit) {
            (Ok(_), Some(limit)) if elapsed > limit => Err(format!("took {elapsed:.2?}, limit {limit:?}")),
            (r, _) => r,
        };
        match result {
            Ok(detail) => println!("PASS  {:<28} {:>9.2?}  {detail}", c.name, elapsed),
            Err(why) => {
                failed += 1;
                println!("FAIL  {:<28} {:>9.2?}  {why}", c.name, elapsed);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
