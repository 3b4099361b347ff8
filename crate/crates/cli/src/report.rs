//! CSV and console rendering for the pipeline outputs.

use dyadic_core::interaction::ParticipantProfile;
use dyadic_core::io::Split;
use dyadic_core::pipeline::{AnalysisRow, EvalRow};

fn opt(value: Option<f64>) -> String {
    value.map(|v| format!("{v}")).unwrap_or_default()
}

pub fn split_name(split: Split) -> &'static str {
    match split {
        Split::Dev => "dev",
        Split::Eval => "eval",
    }
}

/// `participants.csv`: one row per participant profile.
pub fn participants_csv(profiles: &[ParticipantProfile]) -> String {
    let mut out = String::from(
        "participant_id,n_windows,n_dyadic,dyadic_ratio,pause_time,response_time,severity_score,group\n",
    );
    for p in profiles {
        let pause = opt(p.timing.and_then(|t| t.pause_time));
        let response = opt(p.timing.and_then(|t| t.response_time));
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            p.participant_id,
            p.n_windows,
            p.n_dyadic,
            p.dyadic_ratio,
            pause,
            response,
            p.severity_score,
            p.group
        ));
    }
    out
}

/// `statistics.csv`: (analysis, n, statistic, p value) plus a note
/// column for analyses undefined on this cohort.
pub fn statistics_csv(rows: &[AnalysisRow]) -> String {
    let mut out = String::from("analysis,n,statistic,p_value,note\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.analysis,
            r.n,
            opt(r.statistic),
            opt(r.p_value),
            r.note.as_deref().unwrap_or("")
        ));
    }
    out
}

/// Tuning report CSV: accuracy at each grid threshold.
pub fn tune_csv(report: &dyadic_core::clustering::ThresholdTuneReport) -> String {
    let mut out = String::from("threshold,accuracy\n");
    for (t, a) in report.grid.iter().zip(&report.accuracy_per_threshold) {
        out.push_str(&format!("{t},{a}\n"));
    }
    out
}

/// Evaluation CSV: one row per detector/split.
pub fn eval_csv(rows: &[EvalRow], threshold: f64) -> String {
    let mut out = String::from("detector,split,threshold,n,accuracy,specificity,sensitivity\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.detector,
            split_name(r.split),
            threshold,
            r.n,
            r.metrics.accuracy,
            r.metrics.specificity,
            r.metrics.sensitivity
        ));
    }
    out
}

/// Console table in the with/without/baseline section layout.
pub fn eval_table(rows: &[EvalRow]) -> String {
    let mut out = String::new();
    let mut current = "";
    for r in rows {
        if r.detector != current {
            current = &r.detector;
            out.push_str(&format!("== {} ==\n", capitalize(current)));
        }
        out.push_str(&format!(
            "  {:<5} n={:<4} accuracy {:>5.1}%  specificity {:>5.1}%  sensitivity {:>5.1}%\n",
            split_name(r.split),
            r.n,
            100.0 * r.metrics.accuracy,
            100.0 * r.metrics.specificity,
            100.0 * r.metrics.sensitivity
        ));
    }
    out
}

/// Console summary of the statistics report.
pub fn statistics_summary(rows: &[AnalysisRow]) -> String {
    let mut out = String::new();
    for r in rows {
        match (r.statistic, &r.note) {
            (Some(s), _) => {
                let p = r
                    .p_value
                    .map(|p| format!(", p = {p:.4}"))
                    .unwrap_or_default();
                out.push_str(&format!(
                    "  {:<44} n={:<3} stat = {s:.4}{p}\n",
                    r.analysis, r.n
                ));
            }
            (None, note) => {
                out.push_str(&format!(
                    "  {:<44} n={:<3} unavailable ({})\n",
                    r.analysis,
                    r.n,
                    note.as_deref().unwrap_or("undefined")
                ));
            }
        }
    }
    out
}

fn capitalize(s: &str) -> String {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) => c.to_uppercase().collect::<String>() + chars.as_str(),
        None => String::new(),
    }
}
