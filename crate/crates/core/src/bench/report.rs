use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use serde::Serialize;

use super::{CriterionTable, EvalReport, GridResult, IntervalReport};
use crate::dataset::SplitScheme;
use crate::error::{Error, Result};
use crate::forest::{Criterion, TreeParams};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum ReportFormat {
    #[default]
    Text,
    Csv,
    Json,
}

impl FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "text" | "txt" => Ok(ReportFormat::Text),
            "csv" => Ok(ReportFormat::Csv),
            "json" => Ok(ReportFormat::Json),
            _ => Err(Error::InvalidParam(format!("unknown report format '{s}'"))),
        }
    }
}

fn split_name(s: SplitScheme) -> &'static str {
    match s {
        SplitScheme::KFold => "kfold",
        SplitScheme::SlidingWindow => "sliding",
        SplitScheme::Holdout => "holdout",
    }
}

fn criterion_label(c: Criterion) -> String {
    match c {
        Criterion::Pinball { alpha } => format!("pinball({alpha})"),
        other => other.name().to_string(),
    }
}

fn params_line(n_trees: usize, p: &TreeParams) -> String {
    let mf = p.max_features.map_or_else(|| "sqrt".to_string(), |m| m.to_string());
    format!(
        "trees={n_trees} max_depth={} min_samples_leaf={} min_samples_split={} max_features={mf} criterion={}",
        p.max_depth,
        p.min_samples_leaf,
        p.min_samples_split,
        criterion_label(p.criterion)
    )
}

fn to_json<T: Serialize>(v: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(v)?;
    s.push('\n');
    Ok(s)
}

/// `mins[a]` is true for every report attaining the minimum of `value`.
fn minima(values: &[Option<f64>]) -> Vec<bool> {
    let best = values.iter().flatten().copied().fold(f64::INFINITY, f64::min);
    values.iter().map(|v| *v == Some(best)).collect()
}

struct Marks {
    pinball: Vec<Vec<bool>>,
    mse: Vec<bool>,
    mape: Vec<bool>,
}

fn marks(reports: &[EvalReport]) -> Marks {
    let n_a = reports[0].alphas.len();
    let by_alpha: Vec<Vec<bool>> = (0..n_a)
        .map(|a| minima(&reports.iter().map(|r| Some(r.pinball[a])).collect::<Vec<_>>()))
        .collect();
    Marks {
        pinball: (0..reports.len())
            .map(|r| by_alpha.iter().map(|col| col[r]).collect())
            .collect(),
        mse: minima(&reports.iter().map(|r| Some(r.mse)).collect::<Vec<_>>()),
        mape: minima(&reports.iter().map(|r| r.mape).collect::<Vec<_>>()),
    }
}

fn check_reports(reports: &[EvalReport]) -> Result<()> {
    let first = reports.first().ok_or(Error::Empty)?;
    if reports.iter().any(|r| r.alphas != first.alphas) {
        return Err(Error::InvalidParam("reports use different quantile levels".into()));
    }
    Ok(())
}

#[derive(Serialize)]
struct JsonReports<'a> {
    reports: &'a [EvalReport],
    /// Schemes with the lowest pinball loss at each level.
    best_per_alpha: Vec<(f64, Vec<&'a str>)>,
}

/// Renders benchmark reports. Levels at which a scheme attains the lowest
/// loss across schemes are marked.
pub fn render_reports(reports: &[EvalReport], format: ReportFormat) -> Result<String> {
    check_reports(reports)?;
    let m = marks(reports);
    let first = &reports[0];
    let star = |b: bool| if b { "*" } else { " " };
    let mut out = String::new();
    match format {
        ReportFormat::Text => {
            let (lo, hi) = first.interval;
            writeln!(out, "dataset: {}", first.dataset).unwrap();
            writeln!(
                out,
                "split: {} folds={} aggregation={}",
                split_name(first.split),
                first.n_folds,
                match first.aggregation {
                    super::Aggregation::Mean => "mean",
                    super::Aggregation::Median => "median",
                }
            )
            .unwrap();
            writeln!(out, "seed: {}", first.seed).unwrap();
            writeln!(out, "params: {}", params_line(first.n_trees, &first.params)).unwrap();
            writeln!(out, "interval: [{lo}, {hi}]").unwrap();
            writeln!(out).unwrap();
            write!(out, "{:<10}", "scheme").unwrap();
            for a in &first.alphas {
                write!(out, "{:>12}", format!("q{a}")).unwrap();
            }
            writeln!(
                out,
                "{:>12}{:>10}{:>10}{:>11}{:>11}{:>8}{:>8}",
                "mse", "mape%", "coverage", "mean_w", "median_w", "n_eval", "n_undef"
            )
            .unwrap();
            for (i, r) in reports.iter().enumerate() {
                write!(out, "{:<10}", r.scheme.as_str()).unwrap();
                for (a, v) in r.pinball.iter().enumerate() {
                    write!(out, "{:>11.4}{}", v, star(m.pinball[i][a])).unwrap();
                }
                write!(out, "{:>11.4}{}", r.mse, star(m.mse[i])).unwrap();
                match r.mape {
                    Some(v) => write!(out, "{:>9.2}{}", v * 100.0, star(m.mape[i])).unwrap(),
                    None => write!(out, "{:>9} ", "NA").unwrap(),
                }
                writeln!(
                    out,
                    "{:>10.4}{:>11.4}{:>11.4}{:>8}{:>8}",
                    r.coverage, r.mean_width, r.median_width, r.n_evaluated, r.n_undefined
                )
                .unwrap();
            }
            writeln!(out).unwrap();
            writeln!(out, "* lowest across schemes").unwrap();
        }
        ReportFormat::Csv => {
            writeln!(
                out,
                "dataset,split,n_folds,aggregation,seed,n_trees,max_depth,min_samples_leaf,min_samples_split,max_features,criterion,scheme,metric,alpha,value,is_min,n_evaluated,n_undefined"
            )
            .unwrap();
            for (i, r) in reports.iter().enumerate() {
                let p = &r.params;
                let prefix = format!(
                    "{},{},{},{},{},{},{},{},{},{},{},{}",
                    r.dataset,
                    split_name(r.split),
                    r.n_folds,
                    match r.aggregation {
                        super::Aggregation::Mean => "mean",
                        super::Aggregation::Median => "median",
                    },
                    r.seed,
                    r.n_trees,
                    p.max_depth,
                    p.min_samples_leaf,
                    p.min_samples_split,
                    p.max_features.map_or_else(|| "sqrt".to_string(), |m| m.to_string()),
                    criterion_label(p.criterion),
                    r.scheme.as_str()
                );
                let counts = format!("{},{}", r.n_evaluated, r.n_undefined);
                let mut row = |metric: &str, alpha: String, value: String, is_min: String| {
                    writeln!(out, "{prefix},{metric},{alpha},{value},{is_min},{counts}").unwrap();
                };
                for (a, (&alpha, v)) in r.alphas.iter().zip(&r.pinball).enumerate() {
                    row("pinball", alpha.to_string(), v.to_string(), m.pinball[i][a].to_string());
                }
                row("mse", String::new(), r.mse.to_string(), m.mse[i].to_string());
                row(
                    "mape",
                    String::new(),
                    r.mape.map_or_else(|| "NA".to_string(), |v| v.to_string()),
                    m.mape[i].to_string(),
                );
                row("coverage", String::new(), r.coverage.to_string(), String::new());
                row("mean_width", String::new(), r.mean_width.to_string(), String::new());
                row("median_width", String::new(), r.median_width.to_string(), String::new());
            }
        }
        ReportFormat::Json => {
            let best_per_alpha = first
                .alphas
                .iter()
                .enumerate()
                .map(|(a, &alpha)| {
                    let schemes = reports
                        .iter()
                        .zip(&m.pinball)
                        .filter(|(_, mk)| mk[a])
                        .map(|(r, _)| r.scheme.as_str())
                        .collect();
                    (alpha, schemes)
                })
                .collect();
            out = to_json(&JsonReports {
                reports,
                best_per_alpha,
            })?;
        }
    }
    Ok(out)
}

/// Writes `content` to `path`.
pub fn write_file(path: impl AsRef<Path>, content: &str) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, content).map_err(|e| Error::io(path, e))
}

/// Renders `reports` and writes them to `out`.
pub fn emit_report(reports: &[EvalReport], format: ReportFormat, out: impl AsRef<Path>) -> Result<()> {
    write_file(out, &render_reports(reports, format)?)
}

/// Criterion table: one row per (level, scheme), one column per criterion.
/// For each level and criterion the lowest scheme is marked.
pub fn render_criterion_table(t: &CriterionTable, format: ReportFormat) -> Result<String> {
    let labels: Vec<String> = t.criteria.iter().map(|&c| criterion_label(c)).collect();
    let is_min = |c: usize, s: usize, a: usize| {
        let col: Vec<Option<f64>> = (0..t.schemes.len()).map(|s2| Some(t.mean[c][s2][a])).collect();
        minima(&col)[s]
    };
    let mut out = String::new();
    match format {
        ReportFormat::Text => {
            writeln!(out, "dataset: {}", t.dataset).unwrap();
            writeln!(out, "folds: {}", t.n_folds).unwrap();
            let seeds: Vec<String> = t.seeds.iter().map(u64::to_string).collect();
            writeln!(out, "seeds: {}", seeds.join(",")).unwrap();
            writeln!(out).unwrap();
            write!(out, "{:<8}{:<10}", "alpha", "scheme").unwrap();
            for l in &labels {
                write!(out, "{l:>15}").unwrap();
            }
            writeln!(out).unwrap();
            for (a, alpha) in t.alphas.iter().enumerate() {
                for (s, scheme) in t.schemes.iter().enumerate() {
                    write!(out, "{:<8}{:<10}", alpha, scheme.as_str()).unwrap();
                    for c in 0..t.criteria.len() {
                        let mark = if is_min(c, s, a) { "*" } else { " " };
                        write!(out, "{:>14.4}{mark}", t.mean[c][s][a]).unwrap();
                    }
                    writeln!(out).unwrap();
                }
            }
            writeln!(out).unwrap();
            writeln!(out, "* lowest scheme for the level and criterion").unwrap();
        }
        ReportFormat::Csv => {
            write!(out, "criterion,scheme,alpha,mean,is_min").unwrap();
            for seed in &t.seeds {
                write!(out, ",seed_{seed}").unwrap();
            }
            writeln!(out).unwrap();
            for (c, label) in labels.iter().enumerate() {
                for (s, scheme) in t.schemes.iter().enumerate() {
                    for (a, alpha) in t.alphas.iter().enumerate() {
                        write!(
                            out,
                            "{label},{},{alpha},{},{}",
                            scheme.as_str(),
                            t.mean[c][s][a],
                            is_min(c, s, a)
                        )
                        .unwrap();
                        for run in &t.per_seed[c] {
                            write!(out, ",{}", run[s][a]).unwrap();
                        }
                        writeln!(out).unwrap();
                    }
                }
            }
        }
        ReportFormat::Json => out = to_json(t)?,
    }
    Ok(out)
}

/// Per-sample interval table, narrowest first.
pub fn render_interval_report(r: &IntervalReport, format: ReportFormat) -> Result<String> {
    if format == ReportFormat::Json {
        return to_json(r);
    }
    let mut out = String::new();
    if format == ReportFormat::Text {
        writeln!(out, "# dataset: {}", r.dataset).unwrap();
        writeln!(
            out,
            "# scheme: {} level: {} interval: [{}, {}]",
            r.scheme, r.level, r.interval.0, r.interval.1
        )
        .unwrap();
        writeln!(
            out,
            "# coverage: {:.4} below: {:.4} above: {:.4} undefined: {}",
            r.coverage, r.frac_below, r.frac_above, r.n_undefined
        )
        .unwrap();
    }
    writeln!(
        out,
        "rank,index,fold,y,median,lower,upper,width,inside,lower_centered,upper_centered,y_centered"
    )
    .unwrap();
    for (rank, row) in r.rows.iter().enumerate() {
        writeln!(
            out,
            "{rank},{},{},{},{},{},{},{},{},{},{},{}",
            row.index,
            row.fold,
            row.y,
            row.median,
            row.lower,
            row.upper,
            row.width,
            row.inside,
            row.lower_centered,
            row.upper_centered,
            row.y_centered
        )
        .unwrap();
    }
    Ok(out)
}

/// Grid search scores in enumeration order; the selected row is marked.
pub fn render_grid_result(g: &GridResult, format: ReportFormat) -> Result<String> {
    if format == ReportFormat::Json {
        return to_json(g);
    }
    let objective = match g.objective {
        super::Objective::MeanPinball => "mean_pinball",
        super::Objective::Mse => "mse",
    };
    let mut out = String::new();
    if format == ReportFormat::Text {
        writeln!(
            out,
            "objective: {objective} scheme: {} folds: {} seed: {}",
            g.scheme, g.n_folds, g.seed
        )
        .unwrap();
        writeln!(out, "best: {}", params_line(g.best_row().n_trees, &g.best_row().params)).unwrap();
        writeln!(out).unwrap();
        writeln!(
            out,
            "{:>6}{:>10}{:>10}{:>10}{:>14}",
            "trees", "depth", "min_leaf", "min_split", objective
        )
        .unwrap();
        for (i, row) in g.rows.iter().enumerate() {
            let score = row.score.map_or_else(|| "NA".to_string(), |s| format!("{s:.6}"));
            let mark = if i == g.best { "*" } else { "" };
            writeln!(
                out,
                "{:>6}{:>10}{:>10}{:>10}{:>14}{mark}",
                row.n_trees, row.params.max_depth, row.params.min_samples_leaf, row.params.min_samples_split, score
            )
            .unwrap();
        }
        return Ok(out);
    }
    writeln!(
        out,
        "n_trees,max_depth,min_samples_leaf,min_samples_split,criterion,{objective},best"
    )
    .unwrap();
    for (i, row) in g.rows.iter().enumerate() {
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            row.n_trees,
            row.params.max_depth,
            row.params.min_samples_leaf,
            row.params.min_samples_split,
            criterion_label(row.params.criterion),
            row.score.map_or_else(|| "NA".to_string(), |s| s.to_string()),
            i == g.best
        )
        .unwrap();
    }
    Ok(out)
}
