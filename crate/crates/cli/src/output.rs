//! CSV serialisation of result rows.

use std::io::Write;

use crate::jobs::ResultRow;

pub const COLUMNS: [&str; 10] = [
    "job", "model", "order", "tenor", "value", "reference", "ref_kind", "ref_se", "abs_error",
    "wall_ms",
];

/// Shortest round-trip scientific notation, so equal values print equal bytes.
fn num(v: f64) -> String {
    format!("{v:e}")
}

fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

pub fn write_csv<W: Write>(rows: &[ResultRow], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(COLUMNS)?;
    for r in rows {
        w.write_record([
            r.job.clone(),
            r.model.clone(),
            r.order.to_string(),
            r.tenor.to_string(),
            num(r.value),
            opt(r.reference),
            r.ref_kind.map(|k| k.as_str().to_string()).unwrap_or_default(),
            opt(r.ref_se),
            opt(r.abs_error),
            r.wall_ms.map(|ms| format!("{ms:.3}")).unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
