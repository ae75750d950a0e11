//! Writes `report.json`, `margins.csv` and `timings.json`.

use std::fs;
use std::io::Write;
use std::path::Path;

use anyhow::{Context, Result};
use genfun::{ConditionReport, Witness};

use crate::runner::RunOutcome;

/// `{:.16e}`: seventeen significant digits, enough to round-trip an `f64`.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// `key=[a;b] key2=c`, vectors first, keys sorted.
pub fn witness_field(w: Option<&Witness>) -> String {
    let Some(w) = w else { return String::new() };
    let vectors = w.vectors.iter().map(|(k, v)| {
        format!(
            "{k}=[{}]",
            v.iter().map(|x| fmt_f64(*x)).collect::<Vec<_>>().join(";")
        )
    });
    let scalars = w
        .scalars
        .iter()
        .map(|(k, v)| format!("{k}={}", fmt_f64(*v)));
    vectors.chain(scalars).collect::<Vec<_>>().join(" ")
}

pub fn write_margins(path: &Path, checks: &[ConditionReport]) -> Result<()> {
    let mut w =
        csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    w.write_record([
        "check_id",
        "verdict",
        "margin",
        "vacuous",
        "samples_used",
        "witness",
    ])?;
    for c in checks {
        w.write_record([
            c.condition_id.as_str(),
            c.verdict.as_str(),
            &fmt_f64(c.margin),
            if c.vacuous { "true" } else { "false" },
            &c.samples_used.to_string(),
            &witness_field(c.witness.as_ref()),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<()> {
    let mut f = fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
    serde_json::to_writer_pretty(&mut f, value)?;
    f.write_all(b"\n")?;
    Ok(())
}

/// Writes the three output files into `dir`, creating it if needed.
pub fn emit_report(dir: &Path, outcome: &RunOutcome) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    write_json(&dir.join("report.json"), &outcome.report)?;
    write_margins(&dir.join("margins.csv"), &outcome.report.checks)?;
    write_json(&dir.join("timings.json"), &outcome.timings)?;
    Ok(())
}
