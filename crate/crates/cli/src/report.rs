//! Renders the tables an experiment left in a directory into a markdown
//! summary and static SVG plots. The output depends only on the input files.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use lobsim_core::metrics::i_prop;
use lobsim_core::runner::output::STATS_COLUMNS;
use lobsim_core::runner::ImpactStudy;
use thiserror::Error;

use crate::svg::{self, num, Chart, Series, Style};

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("schema mismatch:\n  {}", .0.join("\n  "))]
    Schema(Vec<String>),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Status {
    /// Files written, relative to the output directory.
    Rendered(Vec<String>),
    NothingToReport,
}

/// Tables the report understands, with their exact column lists.
pub const TABLES: [(&str, &[&str]); 8] = [
    ("stats.csv", &STATS_COLUMNS),
    ("summary.csv", &["metric", "n", "mean", "std", "median"]),
    ("impact_curve.csv", &["q", "impact"]),
    ("decay.csv", &["z", "impact", "normalized"]),
    ("inventory_hist.csv", &["rho", "inventory", "count"]),
    ("sharpe_table.csv", &["phase", "side", "mean", "std", "n"]),
    ("slippage_table.csv", &["phase", "side", "mean", "std", "n"]),
    ("episode_returns.csv", &["episode", "episode_return"]),
];

const FIT_FILE: &str = "impact_fit.json";

/// A loaded table: header and string cells.
#[derive(Debug, Clone)]
struct Table {
    name: &'static str,
    columns: &'static [&'static str],
    rows: Vec<Vec<String>>,
}

impl Table {
    fn col(&self, name: &str) -> usize {
        self.columns.iter().position(|c| *c == name).expect("known column")
    }

    fn text<'a>(&'a self, row: &'a [String], name: &str) -> &'a str {
        &row[self.col(name)]
    }

    /// Numeric cell; empty cells are NaN.
    fn num(&self, row: &[String], name: &str, problems: &mut Vec<String>) -> f64 {
        let s = row[self.col(name)].trim();
        if s.is_empty() {
            return f64::NAN;
        }
        s.parse().unwrap_or_else(|_| {
            problems.push(format!("{}: column `{name}` has non-numeric value `{s}`", self.name));
            f64::NAN
        })
    }
}

fn header_problems(file: &str, got: &[String], want: &[&str]) -> Vec<String> {
    let mut out = Vec::new();
    let missing: Vec<&str> = want.iter().copied().filter(|w| !got.iter().any(|g| g == w)).collect();
    let unexpected: Vec<&str> = got.iter().map(String::as_str).filter(|g| !want.contains(g)).collect();
    if !missing.is_empty() {
        out.push(format!("{file}: missing columns {}", missing.join(", ")));
    }
    if !unexpected.is_empty() {
        out.push(format!("{file}: unexpected columns {}", unexpected.join(", ")));
    }
    if out.is_empty() && got.iter().map(String::as_str).ne(want.iter().copied()) {
        out.push(format!("{file}: columns out of order, expected {}", want.join(", ")));
    }
    out
}

fn load_tables(from: &Path, problems: &mut Vec<String>) -> Result<Vec<Table>, ReportError> {
    let mut tables = Vec::new();
    for (name, columns) in TABLES {
        let path = from.join(name);
        if !path.is_file() {
            continue;
        }
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_path(&path).map_err(csv_io)?;
        let header: Vec<String> = rdr.headers().map_err(csv_io)?.iter().map(str::to_string).collect();
        let bad = header_problems(name, &header, columns);
        if !bad.is_empty() {
            problems.extend(bad);
            continue;
        }
        let mut rows = Vec::new();
        for rec in rdr.records() {
            match rec {
                Ok(r) => rows.push(r.iter().map(str::to_string).collect()),
                Err(e) => {
                    problems.push(format!("{name}: {e}"));
                    break;
                }
            }
        }
        tables.push(Table { name, columns, rows });
    }
    Ok(tables)
}

fn csv_io(e: csv::Error) -> ReportError {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => ReportError::Io(io),
        other => ReportError::Schema(vec![format!("{other:?}")]),
    }
}

fn md_table(out: &mut String, header: &[&str], rows: &[Vec<String>]) {
    let _ = writeln!(out, "| {} |", header.join(" | "));
    let _ = writeln!(out, "|{}", "---|".repeat(header.len()));
    for r in rows {
        let _ = writeln!(out, "| {} |", r.join(" | "));
    }
    out.push('\n');
}

fn finite_mean(xs: &[f64]) -> f64 {
    let v: Vec<f64> = xs.iter().copied().filter(|x| x.is_finite()).collect();
    if v.is_empty() {
        f64::NAN
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

/// Validates every known file in `from`, then writes `report.md` and the
/// plots into `out`. Nothing is written when validation fails or when
/// `from` holds no known file.
pub fn render_report(from: &Path, out: &Path) -> Result<Status, ReportError> {
    if !from.is_dir() {
        return Err(ReportError::Io(std::io::Error::new(std::io::ErrorKind::NotFound, format!("{} is not a directory", from.display()))));
    }
    let mut problems = Vec::new();
    let tables = load_tables(from, &mut problems)?;
    let study: Option<ImpactStudy> = match fs::read_to_string(from.join(FIT_FILE)) {
        Ok(s) => match serde_json::from_str(&s) {
            Ok(v) => Some(v),
            Err(e) => {
                problems.push(format!("{FIT_FILE}: {e}"));
                None
            }
        },
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => None,
        Err(e) => return Err(e.into()),
    };
    if tables.is_empty() && study.is_none() && problems.is_empty() {
        return Ok(Status::NothingToReport);
    }

    let mut md = String::from("# Experiment report\n\n");
    let mut plots: Vec<(String, String)> = Vec::new();
    let get = |name: &str| tables.iter().find(|t| t.name == name);

    if let Some(t) = get("summary.csv") {
        md.push_str("## Summary\n\n");
        md_table(&mut md, t.columns, &t.rows);
    }
    if let Some(t) = get("stats.csv") {
        md.push_str("## Per-agent statistics\n\n");
        let mut agents: Vec<&str> = t.rows.iter().map(|r| t.text(r, "agent")).collect();
        agents.sort_unstable();
        agents.dedup();
        let mut rows = Vec::new();
        for a in agents {
            let rs: Vec<&Vec<String>> = t.rows.iter().filter(|r| t.text(r, "agent") == a).collect();
            let col = |name: &str, p: &mut Vec<String>| -> f64 { finite_mean(&rs.iter().map(|r| t.num(r, name, p)).collect::<Vec<_>>()) };
            let complete = rs.iter().filter(|r| t.text(r, "complete") == "true").count();
            rows.push(vec![
                a.to_string(),
                rs.len().to_string(),
                num(col("slippage_bps", &mut problems)),
                num(col("mean_child_size", &mut problems)),
                format!("{complete}/{}", rs.len()),
                num(col("sharpe_before", &mut problems)),
                num(col("sharpe_during", &mut problems)),
                num(col("episode_return", &mut problems)),
            ]);
        }
        md_table(
            &mut md,
            &["agent", "episodes", "mean slippage (bps)", "mean child size", "complete", "Sharpe before", "Sharpe during", "mean return"],
            &rows,
        );
    }
    if let Some(s) = &study {
        md.push_str("## Impact\n\n");
        let fit = s.fit.map_or_else(|| format!("fit failed: {}", s.fit_error.as_deref().unwrap_or("?")), |f| {
            format!("delta = {}, R² = {}, coefficient = {}", num(f.delta), num(f.r2), num(f.coefficient))
        });
        let decay = s.decay_fit.map_or_else(|| format!("fit failed: {}", s.decay_error.as_deref().unwrap_or("?")), |f| {
            format!("beta = {}, rmse = {}", num(f.beta), num(f.rmse))
        });
        let _ = writeln!(md, "- episodes: {}, quantity: {}, horizon: {} s", s.episodes, s.quantity, num(s.horizon));
        let _ = writeln!(md, "- impact exponent: {fit}");
        let _ = writeln!(md, "- decay: {decay}; peak impact {} bps\n", num(s.decay.peak * 1e4));
    }
    if let Some(t) = get("impact_curve.csv") {
        let pts: Vec<(f64, f64)> = t.rows.iter().map(|r| (t.num(r, "q", &mut problems), t.num(r, "impact", &mut problems) * 1e4)).collect();
        let mut series = vec![Series::new("binned mean impact", Style::Markers, pts.clone())];
        if let Some(f) = study.as_ref().and_then(|s| s.fit) {
            let fitted = pts.iter().map(|&(q, _)| (q, f.coefficient * q.powf(f.delta) * 1e4)).collect();
            series.push(Series::new(format!("c·Q^δ, δ = {}", num(f.delta)), Style::Line, fitted));
        }
        let chart = Chart { title: "Impact during execution".into(), x_label: "executed quantity".into(), y_label: "impact (bps)".into(), series };
        plots.push(("impact_curve.svg".into(), svg::render(&chart)));
    }
    if let Some(t) = get("decay.csv") {
        let pts: Vec<(f64, f64)> = t.rows.iter().map(|r| (t.num(r, "z", &mut problems), t.num(r, "normalized", &mut problems))).collect();
        let mut series = vec![Series::new("mean normalized impact", Style::Markers, pts.clone())];
        if let Some(f) = study.as_ref().and_then(|s| s.decay_fit) {
            let fitted = pts.iter().map(|&(z, _)| (z, i_prop(z, f.beta))).collect();
            series.push(Series::new(format!("I_prop, β = {}", num(f.beta)), Style::Line, fitted));
        }
        let chart = Chart { title: "Impact decay after execution".into(), x_label: "z = t / T".into(), y_label: "impact / peak".into(), series };
        plots.push(("decay.svg".into(), svg::render(&chart)));
    }
    if let Some(t) = get("inventory_hist.csv") {
        md.push_str("## Inventory by rho\n\n");
        let mut rhos: Vec<i64> = Vec::new();
        let mut bins = Vec::new();
        for r in &t.rows {
            let rho = t.num(r, "rho", &mut problems);
            let inv = t.num(r, "inventory", &mut problems);
            let n = t.num(r, "count", &mut problems);
            if rho.is_finite() {
                rhos.push(rho as i64);
            }
            bins.push((rho as i64, inv, n));
        }
        rhos.sort_unstable();
        rhos.dedup();
        let mut rows = Vec::new();
        for rho in rhos {
            let pts: Vec<(f64, f64)> = bins.iter().filter(|b| b.0 == rho).map(|b| (b.1, b.2)).collect();
            let total: f64 = pts.iter().map(|p| p.1).sum();
            let mean = pts.iter().map(|p| p.0 * p.1).sum::<f64>() / total;
            rows.push(vec![rho.to_string(), num(total), num(mean)]);
            let name = match rho {
                r if r < 0 => format!("inventory_hist_rho_m{}.svg", -r),
                r => format!("inventory_hist_rho_{r}.svg"),
            };
            let chart = Chart {
                title: format!("RL inventory, rho = {rho}"),
                x_label: "inventory".into(),
                y_label: "samples".into(),
                series: vec![Series::new(format!("rho = {rho}"), Style::Bars, pts)],
            };
            plots.push((name, svg::render(&chart)));
        }
        md_table(&mut md, &["rho", "samples", "mean inventory"], &rows);
    }
    for (name, title) in [("sharpe_table.csv", "Sharpe ratio"), ("slippage_table.csv", "TWAP slippage (bps)")] {
        if let Some(t) = get(name) {
            let _ = writeln!(md, "## {title}\n");
            md_table(&mut md, t.columns, &t.rows);
        }
    }
    if let Some(t) = get("episode_returns.csv") {
        let pts: Vec<(f64, f64)> =
            t.rows.iter().map(|r| (t.num(r, "episode", &mut problems), t.num(r, "episode_return", &mut problems))).collect();
        let chart = Chart {
            title: "Training episode returns".into(),
            x_label: "episode".into(),
            y_label: "return".into(),
            series: vec![Series::new("episode return", Style::Line, pts)],
        };
        plots.push(("returns.svg".into(), svg::render(&chart)));
    }
    if !problems.is_empty() {
        return Err(ReportError::Schema(problems));
    }
    if !plots.is_empty() {
        md.push_str("## Plots\n\n");
        for (name, _) in &plots {
            let _ = writeln!(md, "- [{name}]({name})");
        }
    }

    fs::create_dir_all(out)?;
    let mut written = vec!["report.md".to_string()];
    fs::write(out.join("report.md"), md)?;
    for (name, body) in plots {
        fs::write(out.join(&name), body)?;
        written.push(name);
    }
    Ok(Status::Rendered(written))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_problems_name_columns() {
        let got: Vec<String> = ["q", "impactt", "extra"].iter().map(|s| s.to_string()).collect();
        let p = header_problems("impact_curve.csv", &got, &["q", "impact"]);
        assert_eq!(p, vec!["impact_curve.csv: missing columns impact", "impact_curve.csv: unexpected columns impactt, extra"]);
        let got: Vec<String> = ["impact", "q"].iter().map(|s| s.to_string()).collect();
        assert_eq!(header_problems("f", &got, &["q", "impact"]).len(), 1);
        let got: Vec<String> = ["q", "impact"].iter().map(|s| s.to_string()).collect();
        assert!(header_problems("f", &got, &["q", "impact"]).is_empty());
    }

    #[test]
    fn empty_dir_has_nothing_to_report() {
        let d = tempfile::tempdir().unwrap();
        let out = d.path().join("report");
        assert_eq!(render_report(d.path(), &out).unwrap(), Status::NothingToReport);
        assert!(!out.exists());
    }
}
