//! `spdtest`: two-sample testing of SPD matrix distributions.
//!
//! Subcommands: `specfun` (ad-hoc special-function evaluation), `test`
//! (two-sample test on matrix or return files), `power` (warp-speed power
//! tables from a scenario config), `data` (close-price pipeline and change
//! test). Exit codes: 0 success, 1 usage or input error, 2 numerical
//! non-convergence, 3 internal inconsistency.

mod matrixio;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use spdtest::kernel::SampleSet;
use spdtest::marketdata::{
    block_covariances, change_test, load_close_series, log_returns, summarize_blocks,
    ColumnSchema, PriceSeries, ReturnBlock,
};
use spdtest::powerstudy::{emit_table, parse_scenarios, run_power_table, TableFormat};
use spdtest::resampling::{pooled_bootstrap_pvalue, TwoSampleResult};
use spdtest::sampling::Normalization;
use spdtest::specfun::{
    hyp0f1_double, hyp0f1_single, mv_gamma_ln, zonal, Partition, SeriesControl, SeriesValue,
};
use spdtest::Error;

const EXIT_USAGE: u8 = 1;
const EXIT_NON_CONVERGED: u8 = 2;
const EXIT_INCONSISTENT: u8 = 3;

#[derive(Parser)]
#[command(name = "spdtest", version, about = "Two-sample tests for SPD matrix distributions")]
struct Cli {
    /// Worker threads (0 = one per core). Changes runtime, never values.
    #[arg(long, global = true, default_value_t = 0)]
    parallel: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate a matrix-argument special function.
    Specfun(SpecfunArgs),
    /// Two-sample test between two matrix CSV files (or return files).
    Test(TestArgs),
    /// Run a power table from a TOML scenario config.
    Power(PowerArgs),
    /// Close-price pipeline: returns, block covariances, change test.
    Data(DataArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Function {
    #[value(name = "J")]
    J,
    #[value(name = "J2")]
    J2,
    #[value(name = "0F1")]
    Hyp0f1,
    #[value(name = "0F1two")]
    Hyp0f1Two,
    Zonal,
    Mvgamma,
}

#[derive(Args)]
struct SeriesArgs {
    /// Highest series degree before flagging non-convergence.
    #[arg(long, default_value_t = 120)]
    max_degree: usize,
    /// Relative layer tolerance for series truncation.
    #[arg(long, default_value_t = 1e-12)]
    rel_tol: f64,
}

impl SeriesArgs {
    fn control(&self) -> SeriesControl {
        SeriesControl {
            max_degree: self.max_degree,
            rel_tol: self.rel_tol,
            ..SeriesControl::default()
        }
    }
}

#[derive(Args)]
struct SpecfunArgs {
    /// Which function to evaluate.
    #[arg(long = "fn")]
    function: Function,
    /// Order parameter for J and J2.
    #[arg(long, default_value_t = 1.0)]
    nu: f64,
    /// Series parameter for 0F1 and 0F1two.
    #[arg(long)]
    b: Option<f64>,
    /// Matrix dimension (defaults to the spectrum length).
    #[arg(long)]
    m: Option<usize>,
    /// Argument for mvgamma.
    #[arg(long)]
    a: Option<f64>,
    /// Partition for zonal, e.g. `2,1`.
    #[arg(long)]
    kappa: Option<String>,
    /// Eigenvalue spectrum, e.g. `1.5,0.5`.
    #[arg(long, allow_hyphen_values = true)]
    x: Option<String>,
    /// Second spectrum for J2 and 0F1two.
    #[arg(long, allow_hyphen_values = true)]
    y: Option<String>,
    #[command(flatten)]
    series: SeriesArgs,
}

#[derive(Args)]
struct TestArgs {
    /// First sample: matrix CSV, or a return CSV with --pipeline.
    #[arg(long)]
    x_file: PathBuf,
    /// Second sample, same format as --x-file.
    #[arg(long)]
    y_file: PathBuf,
    /// Treat inputs as return CSVs and build block covariances first.
    #[arg(long)]
    pipeline: bool,
    /// Returns per covariance block (pipeline mode).
    #[arg(long, default_value_t = 24)]
    block: usize,
    /// Covariance normalization: sum, sample or ml (pipeline mode).
    #[arg(long, default_value = "sum")]
    normalization: String,
    #[arg(long, default_value_t = 1.0)]
    nu: f64,
    /// Bootstrap replications.
    #[arg(long, default_value_t = 1000)]
    boot: usize,
    /// RNG seed; 0 derives one from entropy (echoed in the output).
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write the result JSON here.
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    series: SeriesArgs,
}

#[derive(Args)]
struct PowerArgs {
    /// TOML scenario configuration.
    #[arg(long)]
    config: PathBuf,
    /// Write the lossless CSV table here.
    #[arg(long)]
    out_csv: Option<PathBuf>,
    /// Write the markdown table here.
    #[arg(long)]
    out_md: Option<PathBuf>,
}

#[derive(Args)]
struct DataArgs {
    /// Close-price CSV (repeat for per-asset files joined on timestamp).
    #[arg(long, required = true)]
    input: Vec<PathBuf>,
    /// Timestamp column name.
    #[arg(long, default_value = "time")]
    time_col: String,
    /// Close column names, comma separated; with multiple inputs, one per
    /// file in order.
    #[arg(long)]
    close_cols: String,
    /// Returns per covariance block.
    #[arg(long, default_value_t = 24)]
    block: usize,
    /// Covariance normalization: sum, sample or ml.
    #[arg(long, default_value = "sum")]
    normalization: String,
    /// First `k` blocks form group A, the rest group B.
    #[arg(long, conflicts_with = "split_date")]
    split_index: Option<usize>,
    /// Blocks starting at or after this timestamp form group B.
    #[arg(long)]
    split_date: Option<String>,
    #[arg(long, default_value_t = 1.0)]
    nu: f64,
    #[arg(long, default_value_t = 1000)]
    boot: usize,
    /// RNG seed; 0 derives one from entropy (echoed in the output).
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write the result JSON here.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write per-block traces and eigenvalues here (plot-ready CSV).
    #[arg(long)]
    blocks_csv: Option<PathBuf>,
    /// Write the block covariance matrices here in matrix-CSV format,
    /// ready for `spdtest test --x-file/--y-file`.
    #[arg(long)]
    matrices_out: Option<PathBuf>,
    #[command(flatten)]
    series: SeriesArgs,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // clap prints help/version on stdout with a success status
            if e.use_stderr() {
                eprint!("{e}");
                return ExitCode::from(EXIT_USAGE);
            }
            print!("{e}");
            return ExitCode::SUCCESS;
        }
    };
    if cli.parallel > 0 {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(cli.parallel)
            .build_global()
        {
            eprintln!("error: worker pool: {e}");
            return ExitCode::from(EXIT_USAGE);
        }
    }
    let outcome = match cli.command {
        Command::Specfun(args) => cmd_specfun(args),
        Command::Test(args) => cmd_test(args),
        Command::Power(args) => cmd_power(args),
        Command::Data(args) => cmd_data(args),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            let code = match e {
                Error::Inconsistency(_) => EXIT_INCONSISTENT,
                _ => EXIT_USAGE,
            };
            ExitCode::from(code)
        }
    }
}

fn parse_spectrum(text: Option<&str>, what: &str) -> Result<Vec<f64>, Error> {
    let text =
        text.ok_or_else(|| Error::Parse(format!("missing --{what} spectrum argument")))?;
    text.split(',')
        .map(|v| {
            v.trim()
                .parse::<f64>()
                .map_err(|_| Error::Parse(format!("invalid --{what} entry {v:?}")))
        })
        .collect()
}

fn check_dimension(m: Option<usize>, spectrum: &[f64]) -> Result<(), Error> {
    if let Some(m) = m {
        if m != spectrum.len() {
            return Err(Error::DimensionMismatch(format!(
                "--m {m} but the spectrum has {} entries",
                spectrum.len()
            )));
        }
    }
    Ok(())
}

fn bessel_order(nu: f64, m: usize) -> Result<f64, Error> {
    let floor = (m as f64 - 2.0) / 2.0;
    if nu <= floor {
        return Err(Error::InvalidParameter(format!(
            "order nu = {nu} must exceed (m-2)/2 = {floor} in dimension {m}"
        )));
    }
    Ok(nu + (m as f64 + 1.0) / 2.0)
}

fn print_series_value(v: &SeriesValue) -> ExitCode {
    println!("{:.10}", v.value);
    println!(
        "converged={} degree={} last_layer_ratio={:.3e}",
        v.converged, v.achieved_degree, v.last_layer_ratio
    );
    if v.converged {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_NON_CONVERGED)
    }
}

fn cmd_specfun(args: SpecfunArgs) -> Result<ExitCode, Error> {
    let ctl = args.series.control();
    match args.function {
        Function::Mvgamma => {
            let m = args
                .m
                .ok_or_else(|| Error::Parse("mvgamma needs --m".into()))?;
            let a = args
                .a
                .ok_or_else(|| Error::Parse("mvgamma needs --a".into()))?;
            println!("{:.10}", mv_gamma_ln(m, a)?.exp());
            println!("exact");
            Ok(ExitCode::SUCCESS)
        }
        Function::Zonal => {
            let kappa_text = args
                .kappa
                .ok_or_else(|| Error::Parse("zonal needs --kappa".into()))?;
            let parts: Vec<usize> = kappa_text
                .split(',')
                .map(|v| {
                    v.trim()
                        .parse::<usize>()
                        .map_err(|_| Error::Parse(format!("invalid --kappa entry {v:?}")))
                })
                .collect::<Result<_, _>>()?;
            let kappa = Partition::new(parts)?;
            let x = parse_spectrum(args.x.as_deref(), "x")?;
            println!("{:.10}", zonal(&kappa, &x));
            println!("exact");
            Ok(ExitCode::SUCCESS)
        }
        Function::J => {
            let x = parse_spectrum(args.x.as_deref(), "x")?;
            check_dimension(args.m, &x)?;
            let b = bessel_order(args.nu, x.len())?;
            let negated: Vec<f64> = x.iter().map(|v| -v).collect();
            Ok(print_series_value(&hyp0f1_single(b, &negated, &ctl)?))
        }
        Function::J2 => {
            let x = parse_spectrum(args.x.as_deref(), "x")?;
            let y = parse_spectrum(args.y.as_deref(), "y")?;
            check_dimension(args.m, &x)?;
            let b = bessel_order(args.nu, x.len())?;
            let negated: Vec<f64> = x.iter().map(|v| -v).collect();
            Ok(print_series_value(&hyp0f1_double(b, &negated, &y, &ctl)?))
        }
        Function::Hyp0f1 => {
            let b = args.b.ok_or_else(|| Error::Parse("0F1 needs --b".into()))?;
            let x = parse_spectrum(args.x.as_deref(), "x")?;
            check_dimension(args.m, &x)?;
            Ok(print_series_value(&hyp0f1_single(b, &x, &ctl)?))
        }
        Function::Hyp0f1Two => {
            let b = args
                .b
                .ok_or_else(|| Error::Parse("0F1two needs --b".into()))?;
            let x = parse_spectrum(args.x.as_deref(), "x")?;
            let y = parse_spectrum(args.y.as_deref(), "y")?;
            check_dimension(args.m, &x)?;
            Ok(print_series_value(&hyp0f1_double(b, &x, &y, &ctl)?))
        }
    }
}

fn effective_seed(seed: u64) -> u64 {
    if seed == 0 {
        rand::random()
    } else {
        seed
    }
}

/// Plain numeric CSV of return vectors: a header row, then one return
/// vector per line.
fn read_returns_csv(path: &PathBuf) -> Result<Vec<Vec<f64>>, Error> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate();
    lines
        .next()
        .ok_or_else(|| Error::EmptyInput(format!("{}", path.display())))?;
    let mut out = Vec::new();
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let row: Vec<f64> = line
            .split(',')
            .map(|v| {
                v.trim().parse::<f64>().map_err(|_| {
                    Error::Parse(format!("{}:{}: invalid return {v:?}", path.display(), i + 1))
                })
            })
            .collect::<Result<_, _>>()?;
        out.push(row);
    }
    if out.is_empty() {
        return Err(Error::EmptyInput(format!("{}", path.display())));
    }
    Ok(out)
}

fn result_summary(result: &TwoSampleResult) {
    println!(
        "I = {:.6e}  scaled = {:.6e}  p-value = {:.6}  (B = {}, seed = {})",
        result.statistic.i_value,
        result.statistic.scaled,
        result.p_value,
        result.replications,
        result.seed
    );
}

fn convergence_exit(result: &TwoSampleResult) -> ExitCode {
    if result.statistic.series.all_converged() {
        ExitCode::SUCCESS
    } else {
        eprintln!(
            "warning: {} of {} kernel evaluations did not converge at max degree",
            result.statistic.series.non_converged, result.statistic.series.evaluations
        );
        ExitCode::from(EXIT_NON_CONVERGED)
    }
}

fn cmd_test(args: TestArgs) -> Result<ExitCode, Error> {
    let ctl = args.series.control();
    let seed = effective_seed(args.seed);
    let normalization: Normalization = args.normalization.parse()?;
    let (xs, ys) = if args.pipeline {
        let to_sample = |path: &PathBuf| -> Result<SampleSet, Error> {
            let returns = read_returns_csv(path)?;
            let set = block_covariances(&returns, args.block, normalization)?;
            SampleSet::new(set.blocks.into_iter().map(|b| b.covariance).collect())
        };
        (to_sample(&args.x_file)?, to_sample(&args.y_file)?)
    } else {
        (
            SampleSet::new(matrixio::read_matrices(&args.x_file)?)?,
            SampleSet::new(matrixio::read_matrices(&args.y_file)?)?,
        )
    };
    let result = pooled_bootstrap_pvalue(&xs, &ys, args.nu, args.boot, seed, &ctl)?;
    result_summary(&result);
    if let Some(out) = &args.out {
        let payload = json!({
            "tool": "spdtest",
            "version": env!("CARGO_PKG_VERSION"),
            "command": "test",
            "effective": {
                "x_file": args.x_file,
                "y_file": args.y_file,
                "pipeline": args.pipeline,
                "block": args.block,
                "normalization": normalization.to_string(),
                "nu": args.nu,
                "boot": args.boot,
                "seed": seed,
                "max_degree": ctl.max_degree,
                "rel_tol": ctl.rel_tol,
            },
            "result": result,
        });
        std::fs::write(out, serde_json::to_string_pretty(&payload).expect("json"))?;
    }
    Ok(convergence_exit(&result))
}

fn cmd_power(args: PowerArgs) -> Result<ExitCode, Error> {
    let text = std::fs::read_to_string(&args.config)?;
    let scenarios = parse_scenarios(&text)?;
    let rows = run_power_table(&scenarios, 0)?;
    let csv = emit_table(&rows, TableFormat::Csv);
    let md = emit_table(&rows, TableFormat::Markdown);
    if let Some(path) = &args.out_csv {
        std::fs::write(path, &csv)?;
    }
    if let Some(path) = &args.out_md {
        std::fs::write(path, &md)?;
    }
    print!("{md}");
    if rows.iter().any(|r| r.error.is_some()) {
        for row in rows.iter().filter(|r| r.error.is_some()) {
            eprintln!(
                "scenario ({}, {}) failed: {}",
                row.scenario.row,
                row.scenario.col,
                row.error.as_deref().unwrap_or("")
            );
        }
        return Ok(ExitCode::from(EXIT_USAGE));
    }
    Ok(ExitCode::SUCCESS)
}

fn split_blocks(
    blocks: Vec<ReturnBlock>,
    block_len: usize,
    timestamps: &[i64],
    split_index: Option<usize>,
    split_date: Option<&str>,
) -> Result<(Vec<ReturnBlock>, Vec<ReturnBlock>), Error> {
    let k = match (split_index, split_date) {
        (Some(k), None) => k,
        (None, Some(text)) => {
            let cut = spdtest::marketdata::parse_timestamp_text(text).ok_or_else(|| {
                Error::Parse(format!("invalid --split-date {text:?}"))
            })?;
            // Block i spans returns [i L, (i+1) L); its first return looks at
            // prices at timestamps[i L] -> timestamps[i L + 1].
            blocks
                .iter()
                .enumerate()
                .find(|(i, _)| timestamps[i * block_len + 1] >= cut)
                .map(|(i, _)| i)
                .unwrap_or(blocks.len())
        }
        (None, None) => {
            return Err(Error::Parse(
                "one of --split-index or --split-date is required".into(),
            ))
        }
        (Some(_), Some(_)) => unreachable!("clap conflicts_with"),
    };
    if k == 0 || k >= blocks.len() {
        return Err(Error::InvalidParameter(format!(
            "split at block {k} leaves an empty group (have {} blocks)",
            blocks.len()
        )));
    }
    let mut blocks = blocks;
    let tail = blocks.split_off(k);
    Ok((blocks, tail))
}

fn cmd_data(args: DataArgs) -> Result<ExitCode, Error> {
    let ctl = args.series.control();
    let seed = effective_seed(args.seed);
    let normalization: Normalization = args.normalization.parse()?;
    let close_cols: Vec<String> = args
        .close_cols
        .split(',')
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty())
        .collect();
    if close_cols.is_empty() {
        return Err(Error::Parse("--close-cols names no columns".into()));
    }

    let mut dropped_rows = 0usize;
    let series: PriceSeries = if args.input.len() == 1 {
        let loaded = load_close_series(
            &args.input[0],
            &ColumnSchema {
                time_col: args.time_col.clone(),
                close_cols: close_cols.clone(),
            },
        )?;
        dropped_rows = loaded.dropped_rows;
        loaded.series
    } else {
        if close_cols.len() != args.input.len() {
            return Err(Error::Parse(format!(
                "{} input files but {} close columns; per-asset files need one each",
                args.input.len(),
                close_cols.len()
            )));
        }
        let mut merged: Option<PriceSeries> = None;
        for (path, col) in args.input.iter().zip(&close_cols) {
            let loaded = load_close_series(
                path,
                &ColumnSchema {
                    time_col: args.time_col.clone(),
                    close_cols: vec![col.clone()],
                },
            )?;
            dropped_rows += loaded.dropped_rows;
            merged = Some(match merged {
                None => loaded.series,
                Some(prev) => {
                    let (joined, dropped) = PriceSeries::merge(&prev, &loaded.series)?;
                    dropped_rows += dropped;
                    joined
                }
            });
        }
        merged.expect("at least one input")
    };

    let returns = log_returns(&series)?;
    let set = block_covariances(&returns, args.block, normalization)?;
    let timestamps = series.timestamps().to_vec();
    let n_blocks = set.blocks.len();
    let (group_a, group_b) = split_blocks(
        set.blocks,
        args.block,
        &timestamps,
        args.split_index,
        args.split_date.as_deref(),
    )?;
    eprintln!(
        "{} blocks ({} + {}), {} trailing returns dropped, {} rows dropped at load",
        n_blocks,
        group_a.len(),
        group_b.len(),
        set.dropped_returns,
        dropped_rows
    );
    let result = change_test(&group_a, &group_b, args.nu, args.boot, seed, &ctl)?;
    result_summary(&result);

    if let Some(path) = &args.blocks_csv {
        let mut csv = String::from("label,group,start_timestamp,trace,degenerate");
        let dim = close_cols.len();
        for i in 1..=dim {
            csv.push_str(&format!(",eig{i}"));
        }
        csv.push('\n');
        for (group, blocks) in [("A", &group_a), ("B", &group_b)] {
            for (i, summary) in summarize_blocks(blocks).iter().enumerate() {
                let block_index = if group == "A" { i } else { group_a.len() + i };
                let start = timestamps[block_index * args.block + 1];
                csv.push_str(&format!(
                    "{},{},{},{:.9e},{}",
                    summary.label, group, start, summary.trace, summary.degenerate
                ));
                for eig in &summary.eigenvalues {
                    csv.push_str(&format!(",{eig:.9e}"));
                }
                csv.push('\n');
            }
        }
        std::fs::write(path, csv)?;
    }

    if let Some(path) = &args.matrices_out {
        let all: Vec<_> = group_a
            .iter()
            .chain(&group_b)
            .map(|b| b.covariance.clone())
            .collect();
        matrixio::write_matrices(path, &all)?;
    }

    if let Some(out) = &args.out {
        let payload = json!({
            "tool": "spdtest",
            "version": env!("CARGO_PKG_VERSION"),
            "command": "data",
            "effective": {
                "input": args.input,
                "time_col": args.time_col,
                "close_cols": close_cols,
                "block": args.block,
                "normalization": normalization.to_string(),
                "split_index": args.split_index,
                "split_date": args.split_date,
                "nu": args.nu,
                "boot": args.boot,
                "seed": seed,
                "max_degree": ctl.max_degree,
                "rel_tol": ctl.rel_tol,
            },
            "blocks": {
                "total": n_blocks,
                "group_a": group_a.len(),
                "group_b": group_b.len(),
                "dropped_returns": set.dropped_returns,
                "dropped_rows": dropped_rows,
                "degenerate": group_a.iter().chain(&group_b).filter(|b| b.is_degenerate()).count(),
            },
            "result": result,
        });
        std::fs::write(out, serde_json::to_string_pretty(&payload).expect("json"))?;
    }
    Ok(convergence_exit(&result))
}
