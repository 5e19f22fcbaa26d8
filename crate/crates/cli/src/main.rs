//! `wincast` — windowed log-domain forecasting of cumulative case
//! series in the JHU CSV layout.
//!
//! Subcommands: `dump-series`, `tune`, `forecast`, `backtest`,
//! `report`. A TOML config file supplies defaults; flags win over the
//! file. Identical config + seed reproduces identical output bytes.

mod config;
mod output;

use std::collections::BTreeMap;
use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde_json::json;

use wincast_core::backtest::{kde, run_backtest, summarize, BacktestConfig, Method, TuneMode};
use wincast_core::ingest::{load_country, parse_jhu_csv, CountrySeries, RawTable};
use wincast_core::models::{forecast_with_limit, HyperParams, ModelKind};
use wincast_core::rng::mix_seed;
use wincast_core::series::log_transform;
use wincast_core::tuning::tune;
use wincast_core::Error as CoreError;

use config::{config_hash, resolve, Overrides, RunConfig};
use output::{slug, OutputContext};

const FORECAST_TUNE_TAG: u64 = 0xC1;

#[derive(Parser)]
#[command(name = "wincast", version, about = "Windowed forecasting of cumulative case counts")]
struct Cli {
    /// TOML config file; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args, Clone, Default)]
struct CommonArgs {
    /// JHU-layout CSV file (falls back to $WINCAST_DATA_DIR, then ./data).
    #[arg(long)]
    data: Option<PathBuf>,
    /// Country; repeat or comma-separate for several.
    #[arg(long = "country", value_delimiter = ',')]
    countries: Vec<String>,
    /// Horizon in days; repeat or comma-separate for several.
    #[arg(long = "tau", value_delimiter = ',')]
    taus: Vec<usize>,
    /// poly | poly-tv | elm | elm-tv (repeatable).
    #[arg(long = "method", value_delimiter = ',')]
    methods: Vec<String>,
    /// Tuning cadence for bare `poly`/`elm` methods: fixed | daily.
    #[arg(long)]
    mode: Option<String>,
    /// Evaluation span in days.
    #[arg(long)]
    days: Option<usize>,
    /// Monte-Carlo weight draws per ELM prediction.
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Cap on how many trailing days feed ELM training.
    #[arg(long)]
    max_train_days: Option<usize>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Write each country's trimmed series as date,count CSV.
    DumpSeries {
        #[command(flatten)]
        common: CommonArgs,
        /// Print to stdout instead (single country only).
        #[arg(long)]
        stdout: bool,
    },
    /// Cross-validate one (country, tau, method) and dump the scores.
    Tune {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Tune on the full history and forecast past the last data day.
    Forecast {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Rolling backtest over the trailing days.
    Backtest {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Rebuild summary tables from existing record files.
    Report {
        /// Directory holding records_*.csv (defaults to the out dir).
        #[arg(long)]
        records: Option<PathBuf>,
        #[command(flatten)]
        common: CommonArgs,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(err) => {
            let payload = json!({
                "error": err.to_string(),
                "chain": err.chain().skip(1).map(|c| c.to_string()).collect::<Vec<_>>(),
            });
            eprintln!("{payload}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.cmd {
        Cmd::DumpSeries { common, stdout } => {
            let cfg = resolve_with(&cli.config, &common)?;
            cmd_dump_series(&cfg, stdout)
        }
        Cmd::Tune { common } => {
            let cfg = resolve_with(&cli.config, &common)?;
            cmd_tune(&cfg)
        }
        Cmd::Forecast { common } => {
            let cfg = resolve_with(&cli.config, &common)?;
            cmd_forecast(&cfg)
        }
        Cmd::Backtest { common } => {
            let cfg = resolve_with(&cli.config, &common)?;
            cmd_backtest(&cfg)
        }
        Cmd::Report { records, common } => {
            let cfg = resolve_with(&cli.config, &common)?;
            cmd_report(&cfg, records.as_deref())
        }
    }
}

fn resolve_with(config_path: &Option<PathBuf>, common: &CommonArgs) -> Result<RunConfig> {
    let over = Overrides {
        data: common.data.clone(),
        countries: common.countries.clone(),
        taus: common.taus.clone(),
        methods: common.methods.clone(),
        mode: common.mode.clone(),
        days: common.days,
        trials: common.trials,
        seed: common.seed,
        out: common.out.clone(),
        max_train_days: common.max_train_days,
    };
    resolve(config_path.as_deref(), &over)
}

/// Bare `poly`/`elm` take the configured mode; `-tv` names pin daily.
fn resolve_method(name: &str, default_mode: &str) -> Result<Method> {
    let method: Method = name
        .parse()
        .map_err(|e: CoreError| anyhow!("{e}"))?;
    if !name.ends_with("-tv") && default_mode == "daily" {
        return Ok(Method::new(method.kind, TuneMode::Daily));
    }
    Ok(method)
}

fn load_table(cfg: &RunConfig) -> Result<RawTable> {
    let file = File::open(&cfg.data)
        .with_context(|| format!("opening data file {}", cfg.data.display()))?;
    Ok(parse_jhu_csv(file)?)
}

fn load_series(cfg: &RunConfig, table: &RawTable, country: &str) -> Result<CountrySeries> {
    match load_country(table, country, &cfg.aliases) {
        Ok(s) => Ok(s),
        Err(CoreError::UnknownCountry(name)) => {
            let known: Vec<String> = cfg
                .aliases
                .known()
                .map(|(from, to)| format!("{from} -> {to}"))
                .collect();
            bail!(
                "unknown country {name:?}; aliases: {}; countries come from the CSV's Country/Region column",
                known.join(", ")
            )
        }
        Err(e) => Err(e.into()),
    }
}

fn out_context(cfg: &RunConfig) -> OutputContext {
    OutputContext {
        dir: cfg.out.clone(),
        config_hash: config_hash(cfg),
        base_seed: cfg.seed,
    }
}

fn cmd_dump_series(cfg: &RunConfig, to_stdout: bool) -> Result<ExitCode> {
    let table = load_table(cfg)?;
    if to_stdout && cfg.countries.len() != 1 {
        bail!("--stdout needs exactly one --country");
    }
    let ctx = out_context(cfg);
    for country in &cfg.countries {
        let series = load_series(cfg, &table, country)?;
        warn_anomalies(&series);
        if to_stdout {
            let mut stdout = std::io::stdout().lock();
            writeln!(stdout, "{}", ctx.header_line())?;
            write_series(&mut stdout, &series)?;
        } else {
            let name = format!("series_{}.csv", slug(country));
            let mut w = ctx.create(&name)?;
            write_series(&mut w, &series)?;
            println!("wrote {}", ctx.dir.join(name).display());
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn write_series<W: Write>(w: &mut W, series: &CountrySeries) -> Result<()> {
    writeln!(w, "date,count")?;
    for (i, &c) in series.counts().iter().enumerate() {
        writeln!(w, "{},{c}", series.date_at(i).format("%Y-%m-%d"))?;
    }
    Ok(())
}

fn warn_anomalies(series: &CountrySeries) {
    for a in series.anomalies() {
        eprintln!("warning: {}: {a}", series.country());
    }
}

fn cmd_tune(cfg: &RunConfig) -> Result<ExitCode> {
    if cfg.countries.len() != 1 || cfg.taus.len() != 1 || cfg.methods.len() != 1 {
        bail!("tune needs exactly one --country, one --tau and one --method");
    }
    let table = load_table(cfg)?;
    let series = load_series(cfg, &table, &cfg.countries[0])?;
    warn_anomalies(&series);
    let tau = cfg.taus[0];
    let method = resolve_method(&cfg.methods[0], &cfg.mode)?;
    let ls = log_transform(&series);
    let seed = mix_seed(cfg.seed, &[FORECAST_TUNE_TAG, tau as u64]);
    let result = tune(&ls, ls.len() - 1, method.kind, tau, &cfg.grid.to_grid(), seed)?;
    let payload = json!({
        "config_hash": format!("{:016x}", config_hash(cfg)),
        "base_seed": cfg.seed,
        "country": cfg.countries[0],
        "tau": tau,
        "method": method.label(),
        "result": result,
    });
    println!("{}", serde_json::to_string_pretty(&payload)?);
    Ok(ExitCode::SUCCESS)
}

fn cmd_forecast(cfg: &RunConfig) -> Result<ExitCode> {
    let table = load_table(cfg)?;
    let ctx = out_context(cfg);
    let grid = cfg.grid.to_grid();

    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for country in &cfg.countries {
        let series = load_series(cfg, &table, country)?;
        warn_anomalies(&series);
        let ls = log_transform(&series);
        let last_index = series.len() - 1;
        for &tau in &cfg.taus {
            for method_name in &cfg.methods {
                let method = resolve_method(method_name, &cfg.mode)?;
                let seed = mix_seed(cfg.seed, &[FORECAST_TUNE_TAG, tau as u64]);
                let outcome = tune(&ls, last_index, method.kind, tau, &grid, seed)
                    .and_then(|t| {
                        point_forecast(&series, &t.best, tau, cfg).map(|p| (t.best, p))
                    });
                match outcome {
                    Ok((hp, point)) => rows.push(ForecastRow {
                        country: country.clone(),
                        method,
                        tau,
                        last_date: series.date_at(last_index),
                        target_date: series.date_at(last_index + tau),
                        y_last: series.counts()[last_index],
                        y_pred: point,
                        hp,
                    }),
                    Err(e) => failures.push(format!("{country} tau={tau} {method}: {e}")),
                }
            }
        }
    }

    let mut w = ctx.create("forecasts.csv")?;
    writeln!(
        w,
        "country,method,tau,last_date,target_date,y_last,y_pred,w,h,lambda"
    )?;
    for r in &rows {
        let (wc, hc, lc) = match r.hp {
            HyperParams::Poly { w } => (w.to_string(), String::new(), String::new()),
            HyperParams::Elm { w, h, lambda } => {
                (w.to_string(), h.to_string(), lambda.to_string())
            }
        };
        writeln!(
            w,
            "{},{},{},{},{},{},{},{wc},{hc},{lc}",
            output::csv_field(&r.country),
            r.method,
            r.tau,
            r.last_date.format("%Y-%m-%d"),
            r.target_date.format("%Y-%m-%d"),
            r.y_last,
            r.y_pred
        )?;
    }
    drop(w);
    println!("wrote {}", ctx.dir.join("forecasts.csv").display());

    finish(failures)
}

struct ForecastRow {
    country: String,
    method: Method,
    tau: usize,
    last_date: chrono::NaiveDate,
    target_date: chrono::NaiveDate,
    y_last: u64,
    y_pred: f64,
    hp: HyperParams,
}

/// Count-domain point forecast; mean over Monte-Carlo trials for ELM.
fn point_forecast(
    series: &CountrySeries,
    hp: &HyperParams,
    tau: usize,
    cfg: &RunConfig,
) -> wincast_core::Result<f64> {
    match hp.kind() {
        ModelKind::Poly => {
            Ok(forecast_with_limit(series, hp, tau, 0, cfg.max_train_days)?.point)
        }
        ModelKind::Elm => {
            let mut total = 0.0;
            for i in 0..cfg.trials as u64 {
                total +=
                    forecast_with_limit(series, hp, tau, cfg.seed + i, cfg.max_train_days)?.point;
            }
            Ok(total / cfg.trials as f64)
        }
    }
}

fn cmd_backtest(cfg: &RunConfig) -> Result<ExitCode> {
    let table = load_table(cfg)?;
    let ctx = out_context(cfg);
    let grid = cfg.grid.to_grid();

    let mut failures = Vec::new();
    let mut summary_rows = Vec::new();
    // (tau, method) -> pooled errors across countries.
    let mut pooled: BTreeMap<(usize, &'static str), Vec<f64>> = BTreeMap::new();
    // method -> country -> tau -> last10 mean, for the printed table.
    let mut table_cells: BTreeMap<&'static str, BTreeMap<String, BTreeMap<usize, f64>>> =
        BTreeMap::new();

    for country in &cfg.countries {
        let series = load_series(cfg, &table, country)?;
        warn_anomalies(&series);
        for &tau in &cfg.taus {
            for method_name in &cfg.methods {
                let method = resolve_method(method_name, &cfg.mode)?;
                let bt = BacktestConfig {
                    tau,
                    grid: grid.clone(),
                    mode: method.mode,
                    days: cfg.days,
                    trials: cfg.trials,
                    base_seed: cfg.seed,
                    max_training_days: cfg.max_train_days,
                };
                let label = format!("{}_{}_{}", slug(country), tau, method.label());
                match run_backtest(&series, method.kind, &bt) {
                    Ok(run) => {
                        for s in &run.skipped {
                            eprintln!(
                                "warning: {country} tau={tau} {method}: skipped {}: {}",
                                s.date, s.reason
                            );
                        }
                        if run.records.is_empty() {
                            failures.push(format!(
                                "{country} tau={tau} {method}: no day had enough history"
                            ));
                            continue;
                        }
                        output::write_records(&ctx, &format!("records_{label}.csv"), &run.records)?;
                        output::write_json(&ctx, &format!("records_{label}.json"), &run.records)?;
                        let summary = summarize(&run.records)?;
                        table_cells
                            .entry(method.label())
                            .or_default()
                            .entry(country.clone())
                            .or_default()
                            .insert(tau, summary.last10_mean_pct);
                        let errors: Vec<f64> =
                            run.records.iter().map(|r| r.error_pct).collect();
                        pooled
                            .entry((tau, method.label()))
                            .or_default()
                            .extend(&errors);
                        if errors.len() >= 2 {
                            let curve = kde(&errors, None)?;
                            output::write_kde(&ctx, &format!("kde_{label}.csv"), &curve)?;
                        }
                        summary_rows.push(output::SummaryRow {
                            country: country.clone(),
                            tau,
                            method: method.label().to_string(),
                            records: run.records.len(),
                            summary,
                        });
                    }
                    Err(e) => failures.push(format!("{country} tau={tau} {method}: {e}")),
                }
            }
        }
    }

    output::write_summaries(&ctx, "summary.csv", &summary_rows)?;
    output::write_json(&ctx, "summary.json", &summary_rows)?;
    for ((tau, method), errors) in &pooled {
        if errors.len() >= 2 {
            let curve = kde(errors, None)?;
            output::write_kde(&ctx, &format!("kde_pooled_{tau}_{method}.csv"), &curve)?;
        }
    }

    for (method, cells) in &table_cells {
        print_last10_table(method, &cfg.countries, &cfg.taus, cells);
    }
    println!("wrote {}", ctx.dir.join("summary.csv").display());

    finish(failures)
}

fn print_last10_table(
    method: &str,
    countries: &[String],
    taus: &[usize],
    cells: &BTreeMap<String, BTreeMap<usize, f64>>,
) {
    println!("\nmean error % over the last 10 days — {method}");
    print!("{:>18}", "tau \\ country");
    for c in countries {
        print!(" {:>10}", truncate(c, 10));
    }
    println!();
    for &tau in taus {
        print!("{:>18}", format!("{tau} day(s)"));
        for c in countries {
            match cells.get(c).and_then(|m| m.get(&tau)) {
                Some(v) => print!(" {v:>10.2}"),
                None => print!(" {:>10}", "-"),
            }
        }
        println!();
    }
}

fn truncate(s: &str, n: usize) -> &str {
    &s[..s.len().min(n)]
}

fn cmd_report(cfg: &RunConfig, records_dir: Option<&Path>) -> Result<ExitCode> {
    let dir = records_dir.unwrap_or(&cfg.out);
    let mut by_key: BTreeMap<(String, usize, String), Vec<(String, f64)>> = BTreeMap::new();
    let mut found = 0;
    for entry in std::fs::read_dir(dir).with_context(|| format!("reading {}", dir.display()))? {
        let path = entry?.path();
        let name = path.file_name().and_then(|s| s.to_str()).unwrap_or("");
        if !name.starts_with("records_") || !name.ends_with(".csv") {
            continue;
        }
        found += 1;
        for (country, tau, method, date, err) in output::read_record_errors(&path)? {
            by_key
                .entry((country, tau, method))
                .or_default()
                .push((date, err));
        }
    }
    if found == 0 {
        bail!("no records_*.csv files in {}", dir.display());
    }

    let ctx = out_context(cfg);
    let mut rows = Vec::new();
    for ((country, tau, method), mut day_errors) in by_key {
        day_errors.sort_by(|a, b| a.0.cmp(&b.0));
        let n = day_errors.len();
        let errors: Vec<f64> = day_errors.iter().map(|(_, e)| *e).collect();
        let mean = errors.iter().sum::<f64>() / n as f64;
        let var = errors.iter().map(|e| (e - mean) * (e - mean)).sum::<f64>() / n as f64;
        let k = n.min(10);
        let last10 = errors[n - k..].iter().sum::<f64>() / k as f64;
        rows.push((country, tau, method, mean, var.sqrt(), last10, n));
    }

    let mut w = ctx.create("report_summary.csv")?;
    writeln!(
        w,
        "country,tau,method,mean_pct,std_pct,last10_mean_pct,records"
    )?;
    println!(
        "{:<16} {:>4} {:>8} {:>10} {:>10} {:>12} {:>8}",
        "country", "tau", "method", "mean%", "std%", "last10%", "records"
    );
    for (country, tau, method, mean, std, last10, n) in &rows {
        writeln!(
            w,
            "{},{tau},{method},{mean},{std},{last10},{n}",
            output::csv_field(country)
        )?;
        println!("{country:<16} {tau:>4} {method:>8} {mean:>10.3} {std:>10.3} {last10:>12.3} {n:>8}");
    }
    println!("wrote {}", ctx.dir.join("report_summary.csv").display());
    Ok(ExitCode::SUCCESS)
}

fn finish(failures: Vec<String>) -> Result<ExitCode> {
    if failures.is_empty() {
        return Ok(ExitCode::SUCCESS);
    }
    let payload = json!({ "error": "some requested runs failed", "failures": failures });
    eprintln!("{payload}");
    Ok(ExitCode::FAILURE)
}
