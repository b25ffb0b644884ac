//! Shared fixtures for unit tests.

use alloc::string::String;

use crate::exprlang::ObjectiveExpr;
use crate::model::{Alternative, DecisionProblem, Direction, Distribution, ParameterSpec};

pub const CAR_OBJECTIVE: &str = "down_payment + monthly_payment * min(months, payment_months) \
     + maintenance_annual * years + overage_rate * max(annual_miles - allowance, 0) * years";

fn p(name: &str, d: Distribution) -> ParameterSpec {
    ParameterSpec::new(name, "", d)
}

fn fx(v: f64) -> Distribution {
    Distribution::fixed(v)
}

/// Buy (60-month ownership) vs lease (36-month term, renewed over the horizon).
/// With `uncertain`, maintenance ±100, monthly ±50, miles ±1500 and overage rate ±0.05.
pub fn car_problem(horizon: u32, uncertain: bool) -> DecisionProblem {
    let pm = |point: f64, spread: f64| {
        if uncertain {
            Distribution::plus_minus(point, spread)
        } else {
            fx(point)
        }
    };
    let buy = Alternative::new("buy", 60)
        .bind(p("down_payment", fx(3000.0)))
        .bind(p("monthly_payment", pm(400.0, 50.0)))
        .bind(p("payment_months", fx(60.0)))
        .bind(p("maintenance_annual", pm(500.0, 100.0)))
        .bind(p("overage_rate", fx(0.0)))
        .bind(p("annual_miles", pm(15_000.0, 1500.0)))
        .bind(p("allowance", fx(0.0)));
    let lease = Alternative::new("lease", 36)
        .bind(p("down_payment", fx(0.0)))
        .bind(p("monthly_payment", pm(400.0, 50.0)))
        .bind(p("payment_months", fx(f64::from(horizon.max(36)))))
        .bind(p("maintenance_annual", fx(0.0)))
        .bind(p("overage_rate", pm(0.15, 0.05)))
        .bind(p("annual_miles", pm(15_000.0, 1500.0)))
        .bind(p("allowance", fx(12_000.0)));
    DecisionProblem {
        title: String::from("buy vs lease"),
        alternatives: alloc::vec![buy, lease],
        objective: ObjectiveExpr::parse(CAR_OBJECTIVE).unwrap(),
        direction: Direction::Minimize,
        comparison_horizon_months: horizon,
        sample_count: 2_000,
        seed: 42,
    }
}

/// Two alternatives over objective `x + y`: `a` binds x, `b` binds y.
pub fn two_var_problem(a: Distribution, b: Distribution, n: usize, seed: u64) -> DecisionProblem {
    DecisionProblem {
        title: String::from("pair"),
        alternatives: alloc::vec![
            Alternative::new("a", 1).bind(p("x", a)).bind(p("y", fx(0.0))),
            Alternative::new("b", 1).bind(p("x", fx(0.0))).bind(p("y", b)),
        ],
        objective: ObjectiveExpr::parse("x + y").unwrap(),
        direction: Direction::Minimize,
        comparison_horizon_months: 1,
        sample_count: n,
        seed,
    }
}
