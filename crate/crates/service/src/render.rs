//! Plain-text rendering of tournament and bench reports.

use std::fmt::Write;

use dixit_core::benchkit::BenchReport;
use dixit_core::metrics::MetricReport;

fn pct(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.2}")).unwrap_or_else(|| "-".into())
}

pub fn tournament_tables(report: &MetricReport) -> String {
    let mut out = String::new();
    let width = report.model_order.iter().map(String::len).max().unwrap_or(5).max(5);

    let _ = writeln!(out, "Scores ({} matches, {} rounds)", report.matches, report.rounds);
    let _ = writeln!(
        out,
        "{:<width$}  {:>11}  {:>8}  {:>14}  {:>12}",
        "Model", "Storyteller", "Listener", "Overall(points)", "Overall(mean)"
    );
    for m in &report.models {
        let _ = writeln!(
            out,
            "{:<width$}  {:>11.2}  {:>8.2}  {:>15.2}  {:>13.2}",
            m.model, m.roles.storyteller_pct, m.roles.listener_pct, m.roles.overall_points_pct, m.roles.overall_mean_pct
        );
    }

    let _ = writeln!(out, "\nStoryteller outcomes (% of rounds told)");
    let _ = writeln!(out, "{:<width$}  {:>8}  {:>11}  {:>9}", "Model", "Partial", "All correct", "All wrong");
    for m in &report.models {
        let o = &m.storyteller_outcomes;
        let _ = writeln!(
            out,
            "{:<width$}  {:>8.2}  {:>11.2}  {:>9.2}",
            m.model, o.partial, o.all_correct, o.all_wrong
        );
    }

    let _ = writeln!(out, "\nHead-to-head (row model's normalized score against column model)");
    let _ = write!(out, "{:<width$}", "");
    for name in &report.model_order {
        let _ = write!(out, "  {name:>width$}");
    }
    let _ = writeln!(out);
    for (name, row) in report.model_order.iter().zip(&report.head_to_head) {
        let _ = write!(out, "{name:<width$}");
        for v in row {
            let _ = write!(out, "  {v:>width$.2}");
        }
        let _ = writeln!(out);
    }

    let _ = writeln!(out, "\nLeave-one-listener-out");
    let _ = writeln!(out, "{:<width$}  {:>8}  {:>9}  {:>9}  {:>9}", "Model", "Original", "Avg delta", "Std delta", "Stability");
    for m in &report.models {
        let l = &m.lolo;
        let _ = writeln!(
            out,
            "{:<width$}  {:>8}  {:>9.3}  {:>9.3}  {:>9.3}",
            m.model, l.original_score, l.avg_delta, l.std_delta, l.stability
        );
    }

    let _ = writeln!(out, "\nAgent decisions");
    let _ = writeln!(out, "{:<width$}  {:>9}  {:>9}  {:>8}  low-confidence matches", "Model", "Decisions", "Fallbacks", "Rate");
    for m in &report.models {
        let _ = writeln!(
            out,
            "{:<width$}  {:>9}  {:>9}  {:>7.2}%  {:?}",
            m.model,
            m.decisions,
            m.fallback_decisions,
            100.0 * m.fallback_rate,
            m.low_confidence_matches
        );
    }

    let chi = &report.position_uniformity;
    let _ = writeln!(
        out,
        "\nTarget position counts {:?}: chi2={:.3} df={} p={:.3}",
        chi.counts, chi.statistic, chi.df, chi.p_value
    );
    let hs = &report.hand_swap_all;
    let _ = writeln!(
        out,
        "Phase 1 minus phase 2 points per seat: mean {:.3}, mean |diff| {:.3}, per seat {:?}",
        hs.mean_phase_diff, hs.mean_abs_phase_diff, hs.per_seat_mean
    );
    if let Some(sp) = &report.hand_swap_self_play {
        let _ = writeln!(
            out,
            "Self-play only ({} matches): mean {:.3}, mean |diff| {:.3}",
            sp.matches, sp.mean_phase_diff, sp.mean_abs_phase_diff
        );
    }
    out
}

pub fn bench_table(report: &BenchReport) -> String {
    format!(
        "{} ({:?}): easy {} | hard {} | total {} | evaluated {} | failed {} | fallback decisions {}\n",
        report.agent,
        report.strategy,
        pct(report.easy_acc),
        pct(report.hard_acc),
        pct(report.total_acc),
        report.evaluated,
        report.failed,
        report.fallback_decisions
    )
}
