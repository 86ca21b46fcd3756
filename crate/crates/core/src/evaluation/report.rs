use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::fidelity::FidelityReport;
use super::subgroup::SubgroupReport;
use super::sweep::SweepEntry;
use super::utility::UtilityReport;
use crate::error::{Error, Result};
use crate::numerics::ConfidenceInterval;

pub const REPORT_FORMAT_VERSION: u32 = 1;

const CSV_IN_MEMORY: &str = "rows have a fixed width and the sink is memory";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "body", rename_all = "snake_case")]
pub enum ReportBody {
    Utility(UtilityReport),
    Subgroups(SubgroupReport),
    Fidelity(FidelityReport),
    Sweep(Vec<SweepEntry>),
}

/// A published full-scale figure kept next to desk-scale results for
/// orientation. These are never recomputed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReferenceValue {
    pub dataset: String,
    pub task: String,
    pub generator: String,
    pub metric: String,
    pub value: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalReport {
    pub format_version: u32,
    pub config_hash: String,
    pub seed: u64,
    pub classifier_hash: String,
    #[serde(flatten)]
    pub body: ReportBody,
    pub references: Vec<ReferenceValue>,
}

fn reference(dataset: &str, task: &str, generator: &str, metric: &str, value: &str) -> ReferenceValue {
    ReferenceValue {
        dataset: dataset.into(),
        task: task.into(),
        generator: generator.into(),
        metric: metric.into(),
        value: value.into(),
    }
}

/// Published full-scale magnitudes (eICU and MIMIC-III, GPU-scale training)
/// relevant to one report kind.
pub fn reference_values(body: &ReportBody) -> Vec<ReferenceValue> {
    match body {
        ReportBody::Utility(_) | ReportBody::Sweep(_) => vec![
            reference("eICU", "los_24h", "TimeAutoDiff", "delta_tstr", "0.010 ± 0.002"),
            reference("eICU", "los_24h", "TimeAutoDiff", "delta_trts", "0.026 ± 0.002"),
            reference("eICU", "mortality_24h", "TimeAutoDiff", "delta_tstr", "0.011 ± 0.003"),
            reference("eICU", "mortality_24h", "TimeAutoDiff", "delta_trts", "0.039 ± 0.005"),
            reference("eICU", "mortality_24h", "TimeDiff", "delta_tstr", "0.003 ± 0.002"),
            reference("eICU", "mortality_24h", "TimeDiff", "delta_trts", "0.019 ± 0.003"),
            reference("eICU+MIMIC", "all", "Enhanced TimeAutoDiff", "delta_trts", "0.003 to 0.014"),
            reference("eICU+MIMIC", "all", "HealthGen", "delta_trts", "0.13 to 0.19"),
        ],
        ReportBody::Subgroups(_) => {
            let mut v = Vec::new();
            for (dataset, task, wins) in [
                ("eICU", "mortality_24h", ["48%", "60%", "76%"]),
                ("eICU", "los_24h", ["44%", "52%", "72%"]),
                ("MIMIC-III", "mortality_24h", ["68%", "68%", "84%"]),
                ("MIMIC-III", "los_24h", ["72%", "56%", "76%"]),
            ] {
                for (generator, w) in ["TimeAutoDiff", "TimeDiff", "Enhanced TimeAutoDiff"].iter().zip(wins) {
                    v.push(reference(dataset, task, generator, "win_fraction", w));
                }
            }
            v.push(reference("eICU", "los_24h", "Test / Enhanced TimeAutoDiff", "mean_eps", "0.044 / 0.028"));
            v.push(reference("eICU", "mortality_24h", "Test / Enhanced TimeAutoDiff", "mean_eps", "0.075 / 0.050"));
            v.push(reference("MIMIC-III", "mortality_24h", "Test / Enhanced TimeAutoDiff", "mean_eps", "0.142 / 0.081"));
            v.push(reference("MIMIC-III", "los_24h", "Test / Enhanced TimeAutoDiff", "mean_eps", "0.067 / 0.042"));
            v
        }
        ReportBody::Fidelity(_) => vec![
            reference("eICU+MIMIC", "all", "TimeDiff", "disc_score", "0.003 to 0.057"),
            reference("eICU+MIMIC", "all", "Enhanced TimeAutoDiff", "disc_score", "0.039 to 0.083"),
            reference("eICU+MIMIC", "all", "TimeAutoDiff", "disc_score", "0.081 to 0.147"),
            reference("eICU+MIMIC", "all", "HealthGen", "disc_score", "0.282 to 0.427"),
        ],
    }
}

impl EvalReport {
    pub fn new(config_hash: String, seed: u64, classifier_hash: String, body: ReportBody) -> Self {
        EvalReport {
            format_version: REPORT_FORMAT_VERSION,
            config_hash,
            seed,
            classifier_hash,
            references: reference_values(&body),
            body,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self.body {
            ReportBody::Utility(_) => "utility",
            ReportBody::Subgroups(_) => "subgroups",
            ReportBody::Fidelity(_) => "fidelity",
            ReportBody::Sweep(_) => "sweep",
        }
    }

    /// Recompute every aggregate from the stored runs.
    pub fn check_consistency(&self) -> Result<()> {
        let checked = match &self.body {
            ReportBody::Utility(u) => u.check_consistency(),
            ReportBody::Subgroups(s) => s.check_consistency(),
            ReportBody::Fidelity(f) => f.check_consistency(),
            ReportBody::Sweep(entries) => entries
                .iter()
                .filter_map(|e| e.report.as_ref())
                .try_for_each(UtilityReport::check_consistency),
        };
        checked.map_err(|detail| Error::Schema {
            location: format!("{} report", self.kind()),
            detail,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.format_version != REPORT_FORMAT_VERSION {
            return Err(Error::Schema {
                location: "report".into(),
                detail: format!("format_version {} is not supported", self.format_version),
            });
        }
        self.check_consistency()
    }
}

fn ci(c: &Option<ConfidenceInterval>) -> String {
    match c {
        Some(c) => format!("{:.4} ± {:.4}", c.mean, c.half_width()),
        None => "n/a".into(),
    }
}

fn opt(x: Option<f64>) -> String {
    x.map_or("n/a".into(), |v| format!("{v:.4}"))
}

fn ratio(u: &UtilityReport) -> String {
    match (u.delta_tstr, u.delta_trts) {
        (Some(a), Some(b)) if a.mean > 0.0 => format!("Δ_TRTS ≈ {:.1} × Δ_TSTR", b.mean / a.mean),
        _ => "n/a".into(),
    }
}

fn render_utility(out: &mut String, rows: &[(&str, &UtilityReport)]) {
    let _ = writeln!(out, "{:<24} {:<14} {:<22} {:<18} {:<18} {}", "Label", "Task", "Generator", "Δ_TSTR", "Δ_TRTS", "Ratio");
    for (label, u) in rows {
        let _ = writeln!(
            out,
            "{:<24} {:<14} {:<22} {:<18} {:<18} {}",
            label,
            u.task,
            u.source,
            ci(&u.delta_tstr),
            ci(&u.delta_trts),
            ratio(u)
        );
    }
    for (label, u) in rows {
        let [a, b, c, d] = u.mean_auroc();
        let _ = writeln!(
            out,
            "  {label}: mean AUROC TRTR_train {} | TSTR_train {} | TRTR_evaluate {} | TRTS_evaluate {}",
            opt(a),
            opt(b),
            opt(c),
            opt(d)
        );
        let failed = [&u.trtr_train, &u.tstr_train, &u.trtr_evaluate, &u.trts_evaluate]
            .iter()
            .map(|runs| runs.iter().filter(|r| r.auroc.is_none()).count())
            .sum::<usize>();
        if failed > 0 {
            let _ = writeln!(out, "  {label}: {failed} failed runs");
        }
    }
}

fn render_subgroups(out: &mut String, s: &SubgroupReport) {
    let _ = writeln!(out, "Subgroups ({}, source {})", s.task, s.source);
    let _ = writeln!(
        out,
        "{:<28} {:>5} {:>6} {:>6} {:>6} {:<18} {:<18} {}",
        "Subgroup", "n", "large", "small", "synth", "ε_naive", "ε_synth", "Verdict"
    );
    for e in &s.entries {
        let verdict = e.verdict.label();
        let _ = writeln!(
            out,
            "{:<28} {:>5} {:>6} {:>6} {:>6} {:<18} {:<18} {}",
            e.key.to_string(),
            e.n_group,
            e.n_large,
            e.n_small,
            e.n_synth,
            ci(&e.eps_naive),
            ci(&e.eps_synth),
            verdict
        );
    }
    let _ = writeln!(
        out,
        "Mean error: test {} | synthetic {}",
        opt(s.mean_eps_naive),
        opt(s.mean_eps_synth)
    );
    let _ = writeln!(
        out,
        "% of subgroups where synthetic < test error: {} ({} wins, {} losses, {} ties, {} skipped)",
        s.win_fraction.map_or("n/a".into(), |w| format!("{:.0}%", 100.0 * w)),
        s.wins,
        s.losses,
        s.ties,
        s.skipped
    );
}

fn render_references(out: &mut String, refs: &[ReferenceValue]) {
    if refs.is_empty() {
        return;
    }
    let _ = writeln!(out, "Published full-scale reference values (not reproduced here):");
    for r in refs {
        let _ = writeln!(out, "  {} {} {}: {} = {}", r.dataset, r.task, r.generator, r.metric, r.value);
    }
}

/// Human-readable tables for one or more reports. All reports must share a
/// downstream classifier configuration.
pub fn render_reports(reports: &[(String, EvalReport)]) -> Result<String> {
    if let Some((_, first)) = reports.first() {
        if let Some((name, other)) = reports.iter().find(|(_, r)| r.classifier_hash != first.classifier_hash) {
            return Err(Error::Config(format!(
                "report {name} used a different downstream classifier configuration ({} vs {}); results are not comparable",
                other.classifier_hash, first.classifier_hash
            )));
        }
    }
    let mut out = String::new();
    let utilities: Vec<(&str, &UtilityReport)> = reports
        .iter()
        .filter_map(|(n, r)| match &r.body {
            ReportBody::Utility(u) => Some((n.as_str(), u)),
            _ => None,
        })
        .collect();
    if !utilities.is_empty() {
        let _ = writeln!(out, "== Utility gaps ==");
        render_utility(&mut out, &utilities);
        out.push('\n');
    }
    for (name, r) in reports {
        match &r.body {
            ReportBody::Utility(_) => {}
            ReportBody::Subgroups(s) => {
                let _ = writeln!(out, "== {name} ==");
                render_subgroups(&mut out, s);
                out.push('\n');
            }
            ReportBody::Fidelity(f) => {
                let _ = writeln!(out, "== {name} ==");
                let _ = writeln!(
                    out,
                    "DiscAUC ({}, source {}): {:.4} ± {:.4} over {} runs",
                    f.task,
                    f.source,
                    f.disc_auc.mean,
                    f.disc_auc.half_width(),
                    f.runs.len()
                );
                out.push('\n');
            }
            ReportBody::Sweep(entries) => {
                let _ = writeln!(out, "== {name}: alignment-weight sweep ==");
                let _ = writeln!(
                    out,
                    "{:<5} {:<26} {:<18} {:<18} {}",
                    "Rank", "λ (ae_mmd, ae_cons, diff_mmd, diff_cons)", "Δ_TRTS", "Δ_TSTR", "Status"
                );
                for e in entries {
                    let w = e.weights;
                    let lam = format!("({}, {}, {}, {})", w.ae_mmd, w.ae_consistency, w.diff_mmd, w.diff_consistency);
                    let (trts, tstr) = e
                        .report
                        .as_ref()
                        .map_or(("n/a".into(), "n/a".into()), |u| (ci(&u.delta_trts), ci(&u.delta_tstr)));
                    let rank = e.rank.map_or("-".into(), |r| r.to_string());
                    let status = e.error.as_deref().unwrap_or("ok");
                    let _ = writeln!(out, "{rank:<5} {lam:<26} {trts:<18} {tstr:<18} {status}");
                }
                out.push('\n');
            }
        }
    }
    let mut seen: Vec<&str> = Vec::new();
    for (_, r) in reports {
        if !seen.contains(&r.kind()) {
            seen.push(r.kind());
            render_references(&mut out, &r.references);
        }
    }
    Ok(out)
}

fn ci_fields(c: &Option<ConfidenceInterval>) -> [String; 3] {
    match c {
        Some(c) => [c.mean.to_string(), c.lo.to_string(), c.hi.to_string()],
        None => [String::new(), String::new(), String::new()],
    }
}

/// Flat summary table: one row per utility report (sweep entries included).
pub fn utility_csv(reports: &[(String, EvalReport)]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "label",
        "task",
        "generator",
        "weights",
        "trtr_train",
        "tstr_train",
        "trtr_evaluate",
        "trts_evaluate",
        "delta_tstr",
        "delta_tstr_lo",
        "delta_tstr_hi",
        "delta_trts",
        "delta_trts_lo",
        "delta_trts_hi",
    ])
    .expect(CSV_IN_MEMORY);
    let mut rows: Vec<(String, String, &UtilityReport)> = Vec::new();
    for (name, r) in reports {
        match &r.body {
            ReportBody::Utility(u) => rows.push((name.clone(), String::new(), u)),
            ReportBody::Sweep(entries) => {
                for e in entries {
                    if let Some(u) = &e.report {
                        let w = e.weights;
                        let lam = format!("{}/{}/{}/{}", w.ae_mmd, w.ae_consistency, w.diff_mmd, w.diff_consistency);
                        rows.push((format!("{name}#{}", e.index), lam, u));
                    }
                }
            }
            _ => {}
        }
    }
    for (label, weights, u) in rows {
        let means = u.mean_auroc().map(|m| m.map_or(String::new(), |v| v.to_string()));
        let mut rec = vec![label, u.task.clone(), u.source.clone(), weights];
        rec.extend(means);
        rec.extend(ci_fields(&u.delta_tstr));
        rec.extend(ci_fields(&u.delta_trts));
        w.write_record(&rec).expect(CSV_IN_MEMORY);
    }
    String::from_utf8(w.into_inner().expect(CSV_IN_MEMORY)).expect("CSV output is UTF-8")
}

/// One row per subgroup.
pub fn subgroup_csv(report: &SubgroupReport) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "subgroup", "n_group", "n_large", "n_small", "n_synth", "eps_naive", "eps_naive_lo", "eps_naive_hi",
        "eps_synth", "eps_synth_lo", "eps_synth_hi", "paired_win_rate", "verdict",
    ])
    .expect(CSV_IN_MEMORY);
    for e in &report.entries {
        let mut rec = vec![
            e.key.to_string(),
            e.n_group.to_string(),
            e.n_large.to_string(),
            e.n_small.to_string(),
            e.n_synth.to_string(),
        ];
        rec.extend(ci_fields(&e.eps_naive));
        rec.extend(ci_fields(&e.eps_synth));
        rec.push(e.paired_win_rate.map_or(String::new(), |v| v.to_string()));
        rec.push(e.verdict.label().to_string());
        w.write_record(&rec).expect(CSV_IN_MEMORY);
    }
    String::from_utf8(w.into_inner().expect(CSV_IN_MEMORY)).expect("CSV output is UTF-8")
}
