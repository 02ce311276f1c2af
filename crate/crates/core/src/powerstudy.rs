//! Scenario harness for power tables: run a list of two-distribution
//! scenarios through the warp-speed bootstrap and emit the rejection rates
//! as CSV or a markdown grid.

use std::time::Instant;

use serde::Deserialize;

use crate::resampling::{warp_speed_power, RngSeed};
use crate::sampling::DistributionSpec;
use crate::specfun::SeriesControl;
use crate::{Error, Result};

/// One cell of a power table: a pair of distributions, sample sizes and
/// Monte-Carlo settings.
#[derive(Debug, Clone)]
pub struct ScenarioSpec {
    pub row: DistributionSpec,
    pub col: DistributionSpec,
    pub n1: usize,
    pub n2: usize,
    pub nu: f64,
    pub alpha: f64,
    pub replications: usize,
    pub seed: RngSeed,
}

/// Outcome of one scenario. A failed scenario carries its error message and
/// a NaN rejection rate instead of aborting its siblings.
#[derive(Debug, Clone)]
pub struct PowerRow {
    pub scenario: ScenarioSpec,
    pub rejection_percent: f64,
    pub rejections: Option<usize>,
    pub runtime_seconds: f64,
    pub error: Option<String>,
}

/// Run every scenario in order. `parallelism = 0` keeps the global worker
/// pool; a positive value pins the pool size (replication-level parallelism
/// lives inside the warp-speed loop, so results do not depend on it).
pub fn run_power_table(config: &[ScenarioSpec], parallelism: usize) -> Result<Vec<PowerRow>> {
    if config.is_empty() {
        return Err(Error::EmptyInput("scenario list".into()));
    }
    let run = || config.iter().map(run_scenario).collect::<Vec<_>>();
    let rows = if parallelism == 0 {
        run()
    } else {
        rayon::ThreadPoolBuilder::new()
            .num_threads(parallelism)
            .build()
            .map_err(|e| Error::InvalidParameter(format!("worker pool: {e}")))?
            .install(run)
    };
    Ok(rows)
}

fn run_scenario(scenario: &ScenarioSpec) -> PowerRow {
    let ctl = SeriesControl::default();
    let start = Instant::now();
    let outcome = warp_speed_power(
        &scenario.row,
        &scenario.col,
        scenario.n1,
        scenario.n2,
        scenario.nu,
        scenario.alpha,
        scenario.replications,
        scenario.seed,
        &ctl,
    );
    let runtime_seconds = start.elapsed().as_secs_f64();
    match outcome {
        Ok(report) => PowerRow {
            scenario: scenario.clone(),
            rejection_percent: 100.0 * report.rejection_rate,
            rejections: Some((report.rejection_rate * scenario.replications as f64).round()
                as usize),
            runtime_seconds,
            error: None,
        },
        Err(e) => PowerRow {
            scenario: scenario.clone(),
            rejection_percent: f64::NAN,
            rejections: None,
            runtime_seconds,
            error: Some(e.to_string()),
        },
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TableFormat {
    Csv,
    Markdown,
}

/// Render power rows. CSV carries every field (the raw rejection count
/// keeps it lossless); markdown folds a full cross product into a grid and
/// falls back to a long-format table otherwise.
pub fn emit_table(rows: &[PowerRow], format: TableFormat) -> String {
    match format {
        TableFormat::Csv => emit_csv(rows),
        TableFormat::Markdown => emit_markdown(rows),
    }
}

/// Quote a CSV field when needed (distribution labels carry commas).
fn csv_field(text: &str) -> String {
    if text.contains(',') || text.contains('"') {
        format!("\"{}\"", text.replace('"', "\"\""))
    } else {
        text.to_string()
    }
}

fn emit_csv(rows: &[PowerRow]) -> String {
    let mut out = String::from(
        "row_spec,col_spec,n1,n2,nu,alpha,replications,seed,\
         rejection_percent,rejections,runtime_seconds,error\n",
    );
    for row in rows {
        let s = &row.scenario;
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{:.3},{}\n",
            csv_field(&s.row.to_string()),
            csv_field(&s.col.to_string()),
            s.n1,
            s.n2,
            s.nu,
            s.alpha,
            s.replications,
            s.seed,
            format_percent(row.rejection_percent),
            row.rejections.map(|r| r.to_string()).unwrap_or_default(),
            row.runtime_seconds,
            csv_field(row.error.as_deref().unwrap_or("")),
        ));
    }
    out
}

fn format_percent(p: f64) -> String {
    if p.is_nan() {
        String::new()
    } else {
        format!("{p:.1}")
    }
}

fn emit_markdown(rows: &[PowerRow]) -> String {
    if let Some(grid) = try_grid(rows) {
        return grid;
    }
    let mut out = String::from("| row | col | n1 | n2 | power % |\n|---|---|---|---|---|\n");
    for row in rows {
        let s = &row.scenario;
        out.push_str(&format!(
            "| {} | {} | {} | {} | {} |\n",
            s.row,
            s.col,
            s.n1,
            s.n2,
            row.error
                .clone()
                .unwrap_or_else(|| format_percent(row.rejection_percent)),
        ));
    }
    out
}

/// A grid is possible when the rows are exactly one scenario per
/// (row label, col label) combination, in row-major order of the distinct
/// labels as first encountered.
fn try_grid(rows: &[PowerRow]) -> Option<String> {
    let mut row_labels: Vec<String> = Vec::new();
    let mut col_labels: Vec<String> = Vec::new();
    for row in rows {
        let r = row.scenario.row.to_string();
        let c = row.scenario.col.to_string();
        if !row_labels.contains(&r) {
            row_labels.push(r);
        }
        if !col_labels.contains(&c) {
            col_labels.push(c);
        }
    }
    if rows.len() != row_labels.len() * col_labels.len() {
        return None;
    }
    let mut cells =
        vec![vec![None::<String>; col_labels.len()]; row_labels.len()];
    for row in rows {
        let i = row_labels
            .iter()
            .position(|l| *l == row.scenario.row.to_string())?;
        let j = col_labels
            .iter()
            .position(|l| *l == row.scenario.col.to_string())?;
        if cells[i][j].is_some() {
            return None; // duplicate combination, no grid
        }
        cells[i][j] = Some(
            row.error
                .clone()
                .unwrap_or_else(|| format_percent(row.rejection_percent)),
        );
    }
    let mut out = String::from("| |");
    for c in &col_labels {
        out.push_str(&format!(" {c} |"));
    }
    out.push('\n');
    out.push_str("|---|");
    for _ in &col_labels {
        out.push_str("---|");
    }
    out.push('\n');
    for (i, r) in row_labels.iter().enumerate() {
        out.push_str(&format!("| {r} |"));
        for j in 0..col_labels.len() {
            out.push_str(&format!(" {} |", cells[i][j].clone().unwrap_or_default()));
        }
        out.push('\n');
    }
    Some(out)
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    nu: Option<f64>,
    alpha: Option<f64>,
    replications: Option<usize>,
    seed: Option<RngSeed>,
    n1: Option<usize>,
    n2: Option<usize>,
    rows: Option<Vec<String>>,
    cols: Option<Vec<String>>,
    scenario: Option<Vec<ScenarioEntry>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioEntry {
    row: String,
    col: String,
    n1: Option<usize>,
    n2: Option<usize>,
    nu: Option<f64>,
    alpha: Option<f64>,
    replications: Option<usize>,
    seed: Option<RngSeed>,
}

/// Parse a TOML scenario configuration.
///
/// Top-level keys set defaults (`nu = 1.0`, `alpha = 0.05`,
/// `replications = 1000`, `seed = 0`, `n1 = n2 = 20`). Scenarios come from
/// explicit `[[scenario]]` entries, from the cross product of `rows` and
/// `cols` lists, or both; distributions use the canonical text form.
/// Scenario seeds default to `seed + index` so cells stay independent.
pub fn parse_scenarios(text: &str) -> Result<Vec<ScenarioSpec>> {
    let config: ConfigFile =
        toml::from_str(text).map_err(|e| Error::Parse(format!("scenario config: {e}")))?;
    let nu = config.nu.unwrap_or(1.0);
    let alpha = config.alpha.unwrap_or(0.05);
    let replications = config.replications.unwrap_or(1000);
    let seed = config.seed.unwrap_or(0);
    let n1 = config.n1.unwrap_or(20);
    let n2 = config.n2.unwrap_or(20);

    let mut scenarios = Vec::new();
    if let (Some(rows), Some(cols)) = (&config.rows, &config.cols) {
        for r in rows {
            for c in cols {
                let index = scenarios.len() as u64;
                scenarios.push(ScenarioSpec {
                    row: r.parse()?,
                    col: c.parse()?,
                    n1,
                    n2,
                    nu,
                    alpha,
                    replications,
                    seed: seed.wrapping_add(index),
                });
            }
        }
    } else if config.rows.is_some() != config.cols.is_some() {
        return Err(Error::Parse(
            "rows and cols must be given together".into(),
        ));
    }
    for entry in config.scenario.unwrap_or_default() {
        let index = scenarios.len() as u64;
        scenarios.push(ScenarioSpec {
            row: entry.row.parse()?,
            col: entry.col.parse()?,
            n1: entry.n1.unwrap_or(n1),
            n2: entry.n2.unwrap_or(n2),
            nu: entry.nu.unwrap_or(nu),
            alpha: entry.alpha.unwrap_or(alpha),
            replications: entry.replications.unwrap_or(replications),
            seed: entry.seed.unwrap_or(seed.wrapping_add(index)),
        });
    }
    if scenarios.is_empty() {
        return Err(Error::EmptyInput("scenario config holds no scenarios".into()));
    }
    Ok(scenarios)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_row(row: &str, col: &str, percent: f64) -> PowerRow {
        PowerRow {
            scenario: ScenarioSpec {
                row: row.parse().unwrap(),
                col: col.parse().unwrap(),
                n1: 20,
                n2: 20,
                nu: 1.0,
                alpha: 0.05,
                replications: 100,
                seed: 0,
            },
            rejection_percent: percent,
            rejections: Some(percent.round() as usize),
            runtime_seconds: 0.1,
            error: None,
        }
    }

    #[test]
    fn empty_rows_render_a_header_only_csv() {
        let csv = emit_table(&[], TableFormat::Csv);
        assert_eq!(csv.lines().count(), 1);
        assert!(csv.starts_with("row_spec,col_spec"));
    }

    #[test]
    fn single_row_formats_percent_to_one_decimal() {
        let rows = vec![toy_row("W(d=2,a=2.5,sigma=I)", "CMU(d=2,nvec=3)", 97.4999)];
        let csv = emit_table(&rows, TableFormat::Csv);
        let data_line = csv.lines().nth(1).unwrap();
        assert!(data_line.contains(",97.5,"), "{data_line}");
    }

    #[test]
    fn full_cross_product_becomes_a_grid() {
        let labels = [
            "W(d=2,a=2.5,sigma=I)",
            "IW(d=2,a=2.5,sigma=I)",
            "CMU(d=2,nvec=3)",
        ];
        let mut rows = Vec::new();
        for (i, r) in labels.iter().enumerate() {
            for (j, c) in labels.iter().enumerate() {
                rows.push(toy_row(r, c, (10 * (i + j)) as f64));
            }
        }
        let md = emit_table(&rows, TableFormat::Markdown);
        let lines: Vec<&str> = md.lines().collect();
        // header + separator + 3 data rows
        assert_eq!(lines.len(), 5);
        assert!(lines[0].contains("W(d=2,a=2.5,sigma=I)"));
        assert!(lines[2].starts_with("| W(d=2,a=2.5,sigma=I) | 0.0 | 10.0 | 20.0 |"));
    }

    #[test]
    fn partial_lists_fall_back_to_long_format() {
        let rows = vec![
            toy_row("W(d=2,a=2.5,sigma=I)", "CMU(d=2,nvec=3)", 99.0),
            toy_row("W(d=2,a=2.5,sigma=I)", "IW(d=2,a=2.5,sigma=I)", 40.0),
            toy_row("IW(d=2,a=2.5,sigma=I)", "CMU(d=2,nvec=3)", 98.0),
        ];
        let md = emit_table(&rows, TableFormat::Markdown);
        assert!(md.starts_with("| row | col |"));
        assert_eq!(md.lines().count(), 5);
    }

    #[test]
    fn config_parses_defaults_cross_products_and_entries() {
        let text = r#"
            nu = 1.0
            alpha = 0.05
            replications = 500
            seed = 7
            n1 = 20
            n2 = 30
            rows = ["W(d=2,a=2.5,sigma=I)", "IW(d=2,a=2.5,sigma=I)"]
            cols = ["W(d=2,a=2.5,sigma=I)"]

            [[scenario]]
            row = "CMU(d=2,nvec=3)"
            col = "CMU(d=2,nvec=3)"
            n1 = 5
            replications = 100
        "#;
        let scenarios = parse_scenarios(text).unwrap();
        assert_eq!(scenarios.len(), 3);
        assert_eq!(scenarios[0].seed, 7);
        assert_eq!(scenarios[1].seed, 8);
        assert_eq!(scenarios[0].n2, 30);
        assert_eq!(scenarios[2].n1, 5);
        assert_eq!(scenarios[2].n2, 30);
        assert_eq!(scenarios[2].replications, 100);
    }

    #[test]
    fn bad_configs_error_with_context() {
        assert!(parse_scenarios("rows = [\"W(d=2,a=2.5,sigma=I)\"]").is_err());
        assert!(parse_scenarios("").is_err());
        assert!(parse_scenarios("nonsense = true").is_err());
    }

    #[test]
    fn run_power_table_smoke_and_error_isolation() {
        let good: DistributionSpec = "W(d=2,a=2.5,sigma=I)".parse().unwrap();
        // dimension mismatch in the second scenario must not kill the first
        let bad_col: DistributionSpec = "W(d=3,a=3,sigma=I)".parse().unwrap();
        let scenarios = vec![
            ScenarioSpec {
                row: good.clone(),
                col: good.clone(),
                n1: 5,
                n2: 5,
                nu: 1.0,
                alpha: 0.05,
                replications: 100,
                seed: 1,
            },
            ScenarioSpec {
                row: good.clone(),
                col: bad_col,
                n1: 5,
                n2: 5,
                nu: 1.0,
                alpha: 0.05,
                replications: 100,
                seed: 2,
            },
        ];
        let rows = run_power_table(&scenarios, 2).unwrap();
        assert_eq!(rows.len(), 2);
        assert!(rows[0].error.is_none());
        assert!(rows[0].rejection_percent >= 0.0);
        assert!(rows[1].error.is_some());
        assert!(rows[1].rejection_percent.is_nan());
        assert!(run_power_table(&[], 1).is_err());
    }
}
