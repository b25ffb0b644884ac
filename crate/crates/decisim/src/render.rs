//! Plain-text rendering of reports. Every number is the JSON value at 2 decimals.

use std::fmt::Write;

use decisim_core::optimizer::SensitivityTable;
use decisim_core::ComparisonReport;

fn money(v: f64) -> String {
    format!("{v:.2}")
}

pub fn report_text(report: &ComparisonReport) -> String {
    let mut out = String::new();
    let n = &report.narrative;
    let _ = writeln!(
        out,
        "recommendation: {} ({}, horizon {} months, {} samples, seed {})",
        report.recommendation,
        report.direction.as_str(),
        report.horizon_months,
        report.sample_count,
        report.seed
    );
    if let Some(runner_up) = &n.runner_up {
        let _ = writeln!(
            out,
            "advantage over {runner_up}: {} expected, wins {} of paired scenarios",
            money(n.expected_advantage),
            money(n.win_probability_vs_runner_up.unwrap_or(0.0)),
        );
    }
    out.push('\n');

    let width = report.alternatives.iter().map(|a| a.len()).max().unwrap_or(0).max("alternative".len());
    let _ = writeln!(
        out,
        "{:<width$}  {:>14}  {:>12}  {:>14}  {:>14}  {:>14}  {:>7}",
        "alternative", "expected", "stddev", "p5", "p50", "p95", "P(best)"
    );
    for alt in &report.alternatives {
        let s = &report.stats[alt];
        let _ = writeln!(
            out,
            "{:<width$}  {:>14}  {:>12}  {:>14}  {:>14}  {:>14}  {:>7}",
            alt,
            money(report.expected[alt]),
            money(s.stddev),
            money(s.percentiles.p5),
            money(s.percentiles.p50),
            money(s.percentiles.p95),
            money(report.best_probability[alt]),
        );
    }

    if report.alternatives.len() > 1 {
        out.push_str("\nwin probabilities (row beats column, ties in brackets):\n");
        for a in &report.alternatives {
            let _ = write!(out, "  {a:<width$}");
            for b in &report.alternatives {
                if a == b {
                    let _ = write!(out, "  {:>13}", "-");
                } else {
                    let _ = write!(out, "  {:>5} [{:>5}]", money(report.win(a, b)), money(report.tie(a, b)));
                }
            }
            out.push('\n');
        }
    }

    if let Some(table) = &report.sensitivity {
        out.push('\n');
        out.push_str(&sensitivity_text(table));
    }
    out
}

pub fn sensitivity_text(table: &SensitivityTable) -> String {
    let mut out = String::from("variance contributions (first order):\n");
    for (alt, row) in &table.alternatives {
        let _ = writeln!(out, "  {alt} (variance {})", money(row.total_variance));
        if row.zero_variance {
            out.push_str("    no variability\n");
        }
        let mut entries: Vec<_> = row.contributions.iter().collect();
        entries.sort_by(|x, y| y.1.total_cmp(x.1).then_with(|| x.0.cmp(y.0)));
        for (param, share) in entries {
            let _ = writeln!(out, "    {param:<24} {}", money(*share));
        }
    }
    out
}
