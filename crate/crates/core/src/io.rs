//! CSV and JSON input/output and result tables.

use std::io::{Read, Write};
use std::path::Path;

use num_complex::Complex64;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::chirpsep::{ChirpEstimate, SsoDiagram};
use crate::error::{config, Error, Result};
use crate::experiments::{ResultRow, TrialRecord};
use crate::multirec::RegisteredPoint;
use crate::synth::SampleSeries;
use crate::unirec::Peak;

/// Scientific notation with three significant digits, e.g. `6.53e-05`.
pub fn sci(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let s = format!("{x:.2e}");
    let (mant, exp) = s.split_once('e').expect("exponent present");
    let e: i32 = exp.parse().expect("integer exponent");
    let sign = if e < 0 { '-' } else { '+' };
    format!("{mant}e{sign}{:02}", e.abs())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    f.write_all(text.as_bytes())?;
    Ok(())
}

fn into_string(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Rendered result table.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    /// Full-precision CSV, one row per [`ResultRow`].
    pub csv: String,
    /// Aligned text with 3-significant-digit floats.
    pub text: String,
}

pub const RESULT_COLUMNS: [&str; 9] =
    ["scenario", "method", "snr_db", "size", "total", "recovered", "runtime_s", "rmse", "rmse_std"];

pub fn emit_table(rows: &[ResultRow]) -> Result<Table> {
    if rows.is_empty() {
        return config("no result rows to emit");
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    let csv = into_string(w)?;

    let cells: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.scenario.to_string(),
                r.method.to_string(),
                format!("{}", r.snr_db),
                format!("{}", r.size),
                r.total.to_string(),
                format!("{:.2}", r.recovered),
                sci(r.runtime_s),
                sci(r.rmse),
                sci(r.rmse_std),
            ]
        })
        .collect();
    let mut widths: Vec<usize> = RESULT_COLUMNS.iter().map(|c| c.len()).collect();
    for row in &cells {
        for (w, c) in widths.iter_mut().zip(row) {
            *w = (*w).max(c.len());
        }
    }
    let line = |items: &[String]| {
        let parts: Vec<String> = items.iter().zip(&widths).map(|(c, w)| format!("{c:>w$}")).collect();
        parts.join("  ").trim_end().to_string()
    };
    let header: Vec<String> = RESULT_COLUMNS.iter().map(|c| c.to_string()).collect();
    let mut text = line(&header);
    text.push('\n');
    for row in &cells {
        text.push_str(&line(row));
        text.push('\n');
    }
    Ok(Table { csv, text })
}

pub fn trials_csv(trials: &[TrialRecord]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for t in trials {
        w.serialize(t)?;
    }
    into_string(w)
}

#[derive(Debug, Deserialize, Serialize)]
struct IqRow {
    t: f64,
    re: f64,
    im: f64,
}

/// Parses `t,re,im` rows into a uniformly sampled series. The rate comes
/// from the mean time step; steps must agree to 1e-6 relative.
pub fn read_iq_csv(reader: impl Read) -> Result<SampleSeries> {
    let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let mut t = Vec::new();
    let mut v = Vec::new();
    for row in r.deserialize::<IqRow>() {
        let row = row.map_err(|e| Error::Config(format!("malformed IQ csv: {e}")))?;
        t.push(row.t);
        v.push(Complex64::new(row.re, row.im));
    }
    if t.len() < 2 {
        return config("IQ csv needs at least two samples");
    }
    let dt = (t[t.len() - 1] - t[0]) / (t.len() - 1) as f64;
    if !(dt > 0.0) {
        return config("IQ csv times must increase");
    }
    for (k, pair) in t.windows(2).enumerate() {
        if ((pair[1] - pair[0]) - dt).abs() > 1e-6 * dt {
            return config(format!("IQ csv is not uniformly sampled near row {}", k + 1));
        }
    }
    SampleSeries::time(1.0 / dt, v)
}

pub fn write_iq_csv(series: &SampleSeries) -> Result<String> {
    let Some(rate) = series.rate() else {
        return config("IQ output needs a time series");
    };
    let mut w = csv::Writer::from_writer(Vec::new());
    for (k, z) in series.values().iter().enumerate() {
        w.serialize(IqRow { t: k as f64 / rate, re: z.re, im: z.im })?;
    }
    into_string(w)
}

#[derive(Debug, Deserialize, Serialize)]
struct SampleRow {
    index: i64,
    re: f64,
    im: f64,
}

/// Moment samples as `index,re,im` with `index` running over `|l| < n`.
pub fn write_samples_csv(series: &SampleSeries) -> Result<String> {
    let Some(n) = series.n() else {
        return config("sample output needs a moment series");
    };
    let mut w = csv::Writer::from_writer(Vec::new());
    for (i, z) in series.values().iter().enumerate() {
        w.serialize(SampleRow { index: i as i64 - (n as i64 - 1), re: z.re, im: z.im })?;
    }
    into_string(w)
}

/// Reads `index,re,im` rows covering `-(n-1)..=n-1` exactly once, in any order.
pub fn read_samples_csv(reader: impl Read) -> Result<SampleSeries> {
    let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let mut rows = Vec::new();
    for row in r.deserialize::<SampleRow>() {
        rows.push(row.map_err(|e| Error::Config(format!("malformed sample csv: {e}")))?);
    }
    if rows.len() % 2 == 0 {
        return config(format!("sample csv needs 2n - 1 rows, got {}", rows.len()));
    }
    let n = (rows.len() + 1) / 2;
    let mut values = vec![None; rows.len()];
    for row in rows {
        let i = row.index + n as i64 - 1;
        if i < 0 || i as usize >= values.len() || values[i as usize].is_some() {
            return config(format!("sample index {} is out of range or repeated for n = {n}", row.index));
        }
        values[i as usize] = Some(Complex64::new(row.re, row.im));
    }
    SampleSeries::moments(n, values.into_iter().map(|v| v.expect("all indices filled")).collect())
}

pub fn peaks_csv(peaks: &[Peak]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["k", "lambda_hat", "amp_hat", "phase_hat"])?;
    for (k, p) in peaks.iter().enumerate() {
        w.write_record([k.to_string(), p.lambda.to_string(), p.amplitude.to_string(), p.phase.to_string()])?;
    }
    into_string(w)
}

pub fn diagram_csv(diagram: &SsoDiagram) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["t_k", "lambda", "weight", "snippet"])?;
    for p in &diagram.points {
        w.write_record([p.t.to_string(), p.lambda.to_string(), p.weight.to_string(), p.snippet.to_string()])?;
    }
    into_string(w)
}

pub fn components_csv(estimates: &[ChirpEstimate]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["p", "omega", "B", "d", "gamma", "rmse", "status"])?;
    for (p, e) in estimates.iter().enumerate() {
        w.write_record([
            p.to_string(),
            e.omega.to_string(),
            e.bandwidth.to_string(),
            e.duration.to_string(),
            e.gamma.to_string(),
            e.rmse.to_string(),
            e.status.name().to_string(),
        ])?;
    }
    into_string(w)
}

pub fn points_csv(points: &[RegisteredPoint]) -> Result<String> {
    let q = points.first().map_or(0, |p| p.w_hat.len());
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["k".to_string()];
    header.extend((1..=q).map(|d| format!("w{d}")));
    header.extend(["amp_re".to_string(), "amp_im".to_string()]);
    w.write_record(&header)?;
    for (k, p) in points.iter().enumerate() {
        let mut rec = vec![k.to_string()];
        rec.extend(p.w_hat.iter().map(|v| v.to_string()));
        rec.extend([p.amplitude.re.to_string(), p.amplitude.im.to_string()]);
        w.write_record(&rec)?;
    }
    into_string(w)
}

/// Summary row of a multivariate recovery run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NdReport {
    pub snr_db: f64,
    pub samples: usize,
    pub total: usize,
    pub reconstructed: f64,
    pub accuracy_radius: f64,
    pub rmse: f64,
    pub std: f64,
}

pub fn report_csv(rows: &[NdReport]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    into_string(w)
}

/// Writes `text` to `dir/name`.
pub fn save(dir: &Path, name: &str, text: &str) -> Result<()> {
    write_file(&dir.join(name), text)
}
