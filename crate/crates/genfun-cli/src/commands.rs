//! The `dualize`, `transform` and `list` subcommands.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use genfun::gconvex::{g_transform, Grid};
use genfun::implicit::eval_gstar;
use genfun::{eval_jet, Registry};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::ScenarioConfig;
use crate::emit::fmt_f64;
use crate::runner::{GRID_INSET, POINTS_PER_SAMPLE};
use crate::sampled_csv::{read_sampled, write_sampled};

fn build(
    cfg: &ScenarioConfig,
    registry: &Registry,
) -> Result<(genfun::SharedGf, genfun::Tolerances)> {
    let tol = cfg.validate(registry)?;
    let gf = registry.build(&cfg.generating_function.id, &cfg.params())?;
    Ok((gf, tol))
}

/// Samples `samples · 50` fiber points, inverts `u = g(x, y, z)` and writes
/// `g*` with its first derivatives and the residual `|g(x, y, g*) − u|`.
pub fn dualize(cfg: &ScenarioConfig, registry: &Registry) -> Result<PathBuf> {
    let (gf, tol) = build(cfg, registry)?;
    let n = gf.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    fs::create_dir_all(&cfg.output_dir)
        .with_context(|| format!("creating {}", cfg.output_dir.display()))?;
    let path = cfg.output_dir.join("dual_samples.csv");
    let mut w = csv::Writer::from_path(&path)?;
    let mut header: Vec<String> = Vec::new();
    header.extend((1..=n).map(|k| format!("x{k}")));
    header.extend((1..=n).map(|k| format!("y{k}")));
    header.extend(["u".into(), "gstar".into()]);
    header.extend((1..=n).map(|k| format!("gstar_x{k}")));
    header.extend((1..=n).map(|k| format!("gstar_y{k}")));
    header.extend(["gstar_u".into(), "residual".into()]);
    w.write_record(&header)?;
    let gamma = gf.gamma();
    for _ in 0..cfg.samples * POINTS_PER_SAMPLE {
        let Some(fp) = gamma.sample_within(&gamma.x_box, &gamma.y_box, 0.05, &mut rng) else {
            continue;
        };
        let (x, y) = (fp.x.as_slice(), fp.y.as_slice());
        let u = gf.eval(x, y, fp.z);
        let Ok(z) = eval_gstar(gf.as_ref(), x, y, u, &tol) else {
            continue;
        };
        let Ok(j) = eval_jet(gf.as_ref(), x, y, z, &tol) else {
            continue;
        };
        let residual = (gf.eval(x, y, z) - u).abs();
        let mut row: Vec<String> = Vec::with_capacity(header.len());
        row.extend(x.iter().chain(y).map(|v| fmt_f64(*v)));
        row.push(fmt_f64(u));
        row.push(fmt_f64(z));
        row.extend(j.gx.iter().map(|v| fmt_f64(-v / j.gz)));
        row.extend(j.gy.iter().map(|v| fmt_f64(-v / j.gz)));
        row.push(fmt_f64(1.0 / j.gz));
        row.push(fmt_f64(residual));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(path)
}

/// Reads a sampled `u` and writes its g-transform on the scenario's `y`-grid.
pub fn transform(cfg: &ScenarioConfig, registry: &Registry, input: &Path) -> Result<PathBuf> {
    let (gf, tol) = build(cfg, registry)?;
    let file = fs::File::open(input).with_context(|| format!("opening {}", input.display()))?;
    let u = read_sampled(file).with_context(|| format!("reading {}", input.display()))?;
    anyhow::ensure!(
        u.grid.dim() == gf.dim(),
        "{} is {}-dimensional, expected {}",
        input.display(),
        u.grid.dim(),
        gf.dim()
    );
    let y_grid = Grid::on_box(&gf.gamma().y_box.shrunk(GRID_INSET), cfg.grids.y_grid)?;
    let v = g_transform(gf.as_ref(), &u, &y_grid, &tol)?;
    fs::create_dir_all(&cfg.output_dir)
        .with_context(|| format!("creating {}", cfg.output_dir.display()))?;
    let path = cfg.output_dir.join("transform.csv");
    write_sampled(fs::File::create(&path)?, &v)?;
    Ok(path)
}

/// Human-readable catalog listing.
pub fn list(registry: &Registry) -> String {
    let mut out = String::new();
    for e in registry.entries() {
        out.push_str(&format!("{}\n  {}\n", e.id, e.description));
        let params: Vec<String> = e
            .default_params
            .iter()
            .map(|(k, v)| format!("{k}={v}"))
            .collect();
        if !params.is_empty() {
            out.push_str(&format!("  params: {}\n", params.join(", ")));
        }
        for (check, p) in &e.known_properties {
            out.push_str(&format!(
                "  {check}: {:?} ({:?})\n",
                p.verdict, p.provenance
            ));
        }
    }
    out
}
