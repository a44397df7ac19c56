use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const CSV_HEADER: &str = "iter,robot_id,err,mean_err,updates_cum,neighbors";

/// Per-iteration metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub iteration: u64,
    /// Euclidean error per robot.
    pub errors: Vec<f64>,
    pub mean_error: f64,
    /// Updates performed so far, per robot.
    pub update_counts: Vec<usize>,
    /// Neighbours seen in the iteration that produced this record.
    pub neighbor_counts: Vec<usize>,
}

/// Formats like C's `%.9g`.
pub fn format_g9(v: f64) -> String {
    const PRECISION: i32 = 9;
    if v.is_nan() {
        return "nan".into();
    }
    if v.is_infinite() {
        return if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if v == 0.0 {
        return if v.is_sign_negative() {
            "-0".into()
        } else {
            "0".into()
        };
    }
    let sci = format!("{:.*e}", (PRECISION - 1) as usize, v);
    let (mantissa, exp) = sci
        .split_once('e')
        .expect("scientific format has an exponent");
    let exp: i32 = exp.parse().expect("exponent is an integer");
    if !(-4..PRECISION).contains(&exp) {
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{}e{sign}{:02}", trim_zeros(mantissa), exp.abs())
    } else {
        let decimals = (PRECISION - 1 - exp) as usize;
        trim_zeros(&format!("{v:.decimals$}")).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// Writes the CSV rows for `records`, ordered by iteration then robot.
pub fn write_csv(records: &[MetricsRecord], out: &mut impl Write) -> std::io::Result<()> {
    let mut buf = String::new();
    writeln!(buf, "{CSV_HEADER}").expect("writing to a String");
    for rec in records {
        let mean = format_g9(rec.mean_error);
        for (i, err) in rec.errors.iter().enumerate() {
            writeln!(
                buf,
                "{},{},{},{},{},{}",
                rec.iteration,
                i,
                format_g9(*err),
                mean,
                rec.update_counts.get(i).copied().unwrap_or(0),
                rec.neighbor_counts.get(i).copied().unwrap_or(0),
            )
            .expect("writing to a String");
        }
        if buf.len() > 1 << 20 {
            out.write_all(buf.as_bytes())?;
            buf.clear();
        }
    }
    out.write_all(buf.as_bytes())
}

pub fn emit_csv(records: &[MetricsRecord], path: &Path) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    write_csv(records, &mut w)
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}
