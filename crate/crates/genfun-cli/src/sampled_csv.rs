//! CSV form of sampled functions.
//!
//! ```text
//! # n=2
//! # lo=-1,-1
//! # hi=1,1
//! # counts=65,65
//! # spacing=0.03125,0.03125
//! x1,x2,value
//! ...
//! ```
//!
//! One row per active node; nodes without a row are outside the domain.

use std::io::{BufRead, BufReader, Read, Write};

use anyhow::{anyhow, bail, Context, Result};
use genfun::gconvex::{Grid, SampledFunction};
use genfun::Vector;

use crate::emit::fmt_f64;

fn join(v: impl IntoIterator<Item = f64>) -> String {
    v.into_iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

pub fn write_sampled(mut out: impl Write, u: &SampledFunction) -> Result<()> {
    let g = &u.grid;
    let n = g.dim();
    writeln!(out, "# n={n}")?;
    writeln!(out, "# lo={}", join(g.lo.iter().copied()))?;
    writeln!(out, "# hi={}", join(g.hi.iter().copied()))?;
    writeln!(
        out,
        "# counts={}",
        g.counts
            .iter()
            .map(|c| c.to_string())
            .collect::<Vec<_>>()
            .join(",")
    )?;
    writeln!(out, "# spacing={}", join((0..n).map(|k| g.spacing(k))))?;
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<String> = (1..=n).map(|k| format!("x{k}")).collect();
    header.push("value".into());
    w.write_record(&header)?;
    for i in u.active_indices() {
        let mut row: Vec<String> = g.node(i).iter().map(|x| fmt_f64(*x)).collect();
        row.push(fmt_f64(u.values[i]));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

fn parse_list<T: std::str::FromStr>(s: &str) -> Result<Vec<T>> {
    s.split(',')
        .map(|t| {
            t.trim()
                .parse::<T>()
                .map_err(|_| anyhow!("bad header value `{t}`"))
        })
        .collect()
}

pub fn read_sampled(input: impl Read) -> Result<SampledFunction> {
    let mut reader = BufReader::new(input);
    let mut header = std::collections::BTreeMap::new();
    let mut body = String::new();
    let mut line = String::new();
    while reader.read_line(&mut line)? > 0 {
        if let Some(rest) = line.trim().strip_prefix('#') {
            if let Some((k, v)) = rest.split_once('=') {
                header.insert(k.trim().to_string(), v.trim().to_string());
            }
        } else {
            body.push_str(&line);
        }
        line.clear();
    }
    let get = |k: &str| {
        header
            .get(k)
            .ok_or_else(|| anyhow!("missing `# {k}=` header line"))
    };
    let n: usize = get("n")?.parse().context("header n")?;
    let lo: Vec<f64> = parse_list(get("lo")?)?;
    let hi: Vec<f64> = parse_list(get("hi")?)?;
    let counts: Vec<usize> = parse_list(get("counts")?)?;
    if lo.len() != n || hi.len() != n || counts.len() != n {
        bail!("header lists disagree with n = {n}");
    }
    let grid = Grid::new(Vector::from_vec(lo), Vector::from_vec(hi), counts)?;
    let mut values = vec![f64::NAN; grid.len()];
    let mut active = vec![false; grid.len()];
    let mut rows = csv::Reader::from_reader(body.as_bytes());
    for (r, rec) in rows.records().enumerate() {
        let rec = rec?;
        if rec.len() != n + 1 {
            bail!("row {} has {} fields, expected {}", r + 1, rec.len(), n + 1);
        }
        let nums: Vec<f64> = rec
            .iter()
            .map(|t| t.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .with_context(|| format!("row {}", r + 1))?;
        let x = Vector::from_vec(nums[..n].to_vec());
        let i = grid.nearest(&x);
        if (grid.node(i) - &x).amax() > 1e-9 * (1.0 + x.amax()) {
            bail!("row {} is not on the grid", r + 1);
        }
        values[i] = nums[n];
        active[i] = true;
    }
    Ok(SampledFunction::new(grid, values, active)?)
}
