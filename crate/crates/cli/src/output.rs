//! File emission. Every file starts with a comment line carrying the
//! config hash and base seed, so any output can be traced back to the
//! exact run that produced it. A single writer owns each file; workers
//! hand results back before anything is written.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use serde_json::json;

use wincast_core::backtest::{BacktestRecord, ErrorSummary, KdeCurve};
use wincast_core::models::HyperParams;

pub struct OutputContext {
    pub dir: PathBuf,
    pub config_hash: u64,
    pub base_seed: u64,
}

impl OutputContext {
    pub fn header_line(&self) -> String {
        format!(
            "# wincast config_hash={:016x} base_seed={}",
            self.config_hash, self.base_seed
        )
    }

    pub fn create(&self, name: &str) -> Result<BufWriter<File>> {
        std::fs::create_dir_all(&self.dir)
            .with_context(|| format!("creating {}", self.dir.display()))?;
        let path = self.dir.join(name);
        let file =
            File::create(&path).with_context(|| format!("creating {}", path.display()))?;
        let mut w = BufWriter::new(file);
        writeln!(w, "{}", self.header_line())?;
        Ok(w)
    }
}

/// JSON sibling of the CSV outputs; provenance fields are embedded in
/// the document since JSON has no comment lines.
pub fn write_json<T: Serialize>(ctx: &OutputContext, name: &str, payload: &T) -> Result<()> {
    std::fs::create_dir_all(&ctx.dir)
        .with_context(|| format!("creating {}", ctx.dir.display()))?;
    let wrapped = json!({
        "config_hash": format!("{:016x}", ctx.config_hash),
        "base_seed": ctx.base_seed,
        "data": payload,
    });
    let path = ctx.dir.join(name);
    let mut text = serde_json::to_string_pretty(&wrapped)?;
    text.push('\n');
    std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

/// One summary row, as written to summary.csv / summary.json.
#[derive(Serialize)]
pub struct SummaryRow {
    pub country: String,
    pub tau: usize,
    pub method: String,
    #[serde(flatten)]
    pub summary: ErrorSummary,
    pub records: usize,
}

/// `Korea, South` → `korea-south`.
pub fn slug(name: &str) -> String {
    let mut out = String::new();
    for c in name.chars() {
        if c.is_ascii_alphanumeric() {
            out.push(c.to_ascii_lowercase());
        } else if (c == ' ' || c == ',' || c == '-') && !out.ends_with('-') {
            out.push('-');
        }
    }
    out.trim_matches('-').to_string()
}

fn hp_cells(hp: &HyperParams) -> (String, String, String) {
    match *hp {
        HyperParams::Poly { w } => (w.to_string(), String::new(), String::new()),
        HyperParams::Elm { w, h, lambda } => (w.to_string(), h.to_string(), lambda.to_string()),
    }
}

pub const RECORD_HEADER: &str = "country,date,tau,method,y_true,y_pred,error_pct,w,h,lambda";

pub fn write_records(ctx: &OutputContext, name: &str, records: &[BacktestRecord]) -> Result<()> {
    let mut w = ctx.create(name)?;
    writeln!(w, "{RECORD_HEADER}")?;
    for r in records {
        let (wc, hc, lc) = hp_cells(&r.hp);
        let country = csv_field(&r.country);
        writeln!(
            w,
            "{country},{},{},{},{},{},{},{wc},{hc},{lc}",
            r.date.format("%Y-%m-%d"),
            r.tau,
            r.method,
            r.y_true,
            r.y_pred,
            r.error_pct
        )?;
    }
    Ok(())
}

pub fn write_summaries(ctx: &OutputContext, name: &str, rows: &[SummaryRow]) -> Result<()> {
    let mut w = ctx.create(name)?;
    writeln!(
        w,
        "country,tau,method,mean_pct,std_pct,last10_mean_pct,last10_n,records"
    )?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{}",
            csv_field(&r.country),
            r.tau,
            r.method,
            r.summary.mean_pct,
            r.summary.std_pct,
            r.summary.last10_mean_pct,
            r.summary.last10_n,
            r.records
        )?;
    }
    Ok(())
}

pub fn write_kde(ctx: &OutputContext, name: &str, curve: &KdeCurve) -> Result<()> {
    let mut w = ctx.create(name)?;
    writeln!(w, "# bandwidth={}", curve.bandwidth)?;
    writeln!(w, "error_pct,density")?;
    for (x, d) in curve.grid.iter().zip(&curve.density) {
        writeln!(w, "{x},{d}")?;
    }
    Ok(())
}

pub fn csv_field(s: &str) -> String {
    if s.contains(',') || s.contains('"') {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// (country, tau, method, date, error_pct) rows of a records file.
pub type RecordErrorRow = (String, usize, String, String, f64);

/// Read back an `error_pct` column written by [`write_records`].
pub fn read_record_errors(path: &Path) -> Result<Vec<RecordErrorRow>> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_path(path)
        .with_context(|| format!("opening {}", path.display()))?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        out.push((
            rec[0].to_string(),
            rec[2].parse().context("tau column")?,
            rec[3].to_string(),
            rec[1].to_string(),
            rec[6].parse().context("error_pct column")?,
        ));
    }
    Ok(out)
}
