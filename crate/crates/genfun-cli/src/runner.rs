//! Runs the checks of a scenario in declaration order.

use std::collections::BTreeMap;
use std::time::Instant;

use genfun::conditions::{
    check_a1_sampled, check_a1star_sampled, check_a2, check_a3s, check_a3w, sample_segments,
    SegmentConfig, SegmentSampling,
};
use genfun::duality::check_duality_invariance;
use genfun::gconvex::{
    check_corollary31, check_theorem31_with, check_theorem32, g_envelope, section_affine,
    seeded_affines, GAffine, GConvexConfig, Grid, SampledFunction,
};
use genfun::genfun::validate_gamma;
use genfun::geometry::{
    a3w_chain, dual_segment, fundamental_form_monotonicity, sign_agreement, ChainConfig,
};
use genfun::{ConditionReport, Registry, SharedGf, Tolerances, Verdict};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::{ConfigError, ScenarioConfig};

/// Directions per segment in the MTW scans.
const XI_COUNT: usize = 16;
/// Pointwise checks draw this many points per configured sample.
const SECTION_ATTEMPTS: usize = 4 * SECTIONS;
pub const POINTS_PER_SAMPLE: usize = 50;
/// Seeded sections per section-convexity run.
const SECTIONS: usize = 10;
/// Share of the domain covered by each seeded section.
const SECTION_FRACTION: f64 = 0.3;
/// Relative inset of sampling grids from the open boxes.
pub const GRID_INSET: f64 = 1e-6;

#[derive(Debug, Clone, Serialize)]
pub struct GfEcho {
    pub id: String,
    pub name: String,
    pub dim: usize,
    pub params: BTreeMap<String, f64>,
}

/// Everything `report.json` holds. Timings are kept apart so that the report
/// is byte-stable.
#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub tool_version: String,
    pub config: ScenarioConfig,
    pub generating_function: GfEcho,
    pub tolerances: Tolerances,
    pub checks: Vec<ConditionReport>,
    pub overall: Verdict,
    pub exit_code: i32,
}

#[derive(Debug, Clone, Serialize)]
pub struct Timing {
    pub check_id: String,
    pub seconds: f64,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub report: RunReport,
    pub timings: Vec<Timing>,
}

/// Exit code of a set of verdicts: any failure gives 1, otherwise any
/// inconclusive check gives 2, otherwise 0.
pub fn exit_code(checks: &[ConditionReport]) -> i32 {
    if checks.iter().any(|c| c.verdict == Verdict::Fails) {
        1
    } else if checks.iter().any(|c| c.verdict == Verdict::Inconclusive) {
        2
    } else {
        0
    }
}

fn overall(code: i32) -> Verdict {
    match code {
        0 => Verdict::Holds,
        1 => Verdict::Fails,
        _ => Verdict::Inconclusive,
    }
}

/// State shared by the checks of one scenario, built on first use.
struct Scenario<'a> {
    cfg: &'a ScenarioConfig,
    gf: SharedGf,
    tol: Tolerances,
    segments: Option<Vec<SegmentConfig>>,
    fixture: Option<genfun::Result<(SampledFunction, Grid)>>,
}

impl Scenario<'_> {
    fn sampling(&self) -> SegmentSampling {
        SegmentSampling {
            count: self.cfg.samples,
            seed: self.cfg.seed,
            theta_m: self.cfg.grids.theta_m,
            ..Default::default()
        }
    }

    fn segments(&mut self) -> &[SegmentConfig] {
        if self.segments.is_none() {
            self.segments = Some(sample_segments(
                self.gf.as_ref(),
                &self.sampling(),
                &self.tol,
            ));
        }
        self.segments.as_deref().unwrap()
    }

    fn x_grid(&self) -> genfun::Result<Grid> {
        Grid::on_box(
            &self.gf.gamma().x_box.shrunk(GRID_INSET),
            self.cfg.grids.x_grid,
        )
    }

    fn y_grid(&self) -> genfun::Result<Grid> {
        Grid::on_box(
            &self.gf.gamma().y_box.shrunk(GRID_INSET),
            self.cfg.grids.y_grid,
        )
    }

    /// Max of five seeded g-affine functions on the disk inscribed in
    /// 90% of the `x`-box, with the `y`-grid of its transforms.
    fn fixture(&mut self) -> genfun::Result<(SampledFunction, Grid)> {
        if self.fixture.is_none() {
            let build = || -> genfun::Result<(SampledFunction, Grid)> {
                let (xg, yg) = (self.x_grid()?, self.y_grid()?);
                let affines = seeded_affines(self.gf.as_ref(), &xg, &yg, 5, self.cfg.seed);
                let xb = &self.gf.gamma().x_box;
                let (c, r) = (xb.center(), 0.45 * (&xb.hi - &xb.lo).min());
                let u = SampledFunction::max_of_affines(self.gf.as_ref(), xg, &affines)?
                    .masked(|x| (x - &c).norm() <= r);
                Ok((u, yg))
            };
            self.fixture = Some(build());
        }
        self.fixture.clone().unwrap()
    }

    fn run(&mut self, id: &str) -> genfun::Result<ConditionReport> {
        let seed = self.cfg.seed;
        let points = self.cfg.samples * POINTS_PER_SAMPLE;
        let gf = self.gf.clone();
        let tol = self.tol.clone();
        let g = gf.as_ref();
        let gamma = g.gamma();
        Ok(match id {
            "gamma" => validate_gamma(g, points, seed, &tol),
            "A1" => check_a1_sampled(g, &gamma.x_box.center(), points, seed, &tol),
            "A1*" => {
                let (xc, yc) = (gamma.x_box.center(), gamma.y_box.center());
                let (lo, hi) = gamma.inner_interval(xc.as_slice(), yc.as_slice());
                check_a1star_sampled(g, &yc, 0.5 * (lo + hi), points, seed, &tol)
            }
            "A2" => check_a2(g, points, seed, &tol),
            "A3w" => {
                let segs = self.segments().to_vec();
                check_a3w(g, &segs, XI_COUNT, seed, &tol)
            }
            "A3s" => {
                let segs = self.segments().to_vec();
                check_a3s(g, &segs, XI_COUNT, seed, &tol)
            }
            "duality:A3w" | "duality:A3s" => check_duality_invariance(
                gf.clone(),
                &id["duality:".len()..],
                &self.sampling(),
                XI_COUNT,
                &tol,
            )?,
            "thm2.1" => {
                let segs = self.segments().to_vec();
                a3w_chain(g, &segs, &self.chain_config(), seed, &tol)
            }
            "thm2.2" => {
                let segs = self.segments().to_vec();
                sign_agreement(g, &segs, &self.chain_config(), seed, &tol)
            }
            "ff" => {
                let segs = self.segments().to_vec();
                let reports: Vec<ConditionReport> = segs
                    .iter()
                    .map(|s| {
                        dual_segment(g, s, &tol)
                            .and_then(|ds| {
                                fundamental_form_monotonicity(g, &ds, XI_COUNT, seed, &tol)
                            })
                            .unwrap_or_else(|e| error_report("ff", seed, &e.to_string()))
                    })
                    .collect();
                combine("ff", seed, reports)
            }
            "thm3.1" => self.theorem31()?,
            "cor3.1" => self.corollary31()?,
            "thm3.2" => {
                let (u, yg) = self.fixture()?;
                check_theorem32(
                    g,
                    &u,
                    &yg,
                    &GConvexConfig {
                        seed,
                        ..Default::default()
                    },
                    &tol,
                )?
            }
            other => unreachable!("check `{other}` passed validation"),
        })
    }

    fn chain_config(&self) -> ChainConfig {
        ChainConfig {
            radius: self.cfg.grids.radius,
            ..Default::default()
        }
    }

    /// Sections through supporting pairs `(x0, y0)` of the envelope, lifted
    /// to cover about `SECTION_FRACTION` of the domain. Draws whose
    /// hypotheses cannot be verified are skipped and counted.
    fn theorem31(&mut self) -> genfun::Result<ConditionReport> {
        let (u, yg) = self.fixture()?;
        let g = self.gf.as_ref();
        let seed = self.cfg.seed;
        let env = g_envelope(g, &u, &yg, &self.tol)?;
        let pairs: Vec<(usize, usize)> = env
            .transform
            .argmax
            .iter()
            .enumerate()
            .filter_map(|(j, i)| i.map(|i| (i, j)))
            .collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut reports = Vec::with_capacity(SECTIONS);
        let mut skipped = 0;
        let mut last_error = None;
        for k in 0..SECTION_ATTEMPTS {
            if reports.len() == SECTIONS || pairs.is_empty() {
                break;
            }
            let (x0, j) = pairs[rng.random_range(0..pairs.len())];
            let y0 = yg.node(j);
            let cfg = GConvexConfig {
                seed: seed.wrapping_add(k as u64),
                ..Default::default()
            };
            match section_affine(g, &u, x0, &y0, SECTION_FRACTION, &self.tol)
                .and_then(|ga| check_theorem31_with(g, &u, &env, &ga, &cfg, &self.tol))
            {
                Ok(r) => reports.push(r),
                Err(e) => {
                    skipped += 1;
                    last_error = Some(e.to_string());
                }
            }
        }
        let accepted = reports.len();
        let mut out = combine("thm3.1", seed, reports).detail("skipped", skipped as f64);
        if accepted < SECTIONS / 2 {
            out.verdict = Verdict::Inconclusive;
            out = out.note(format!(
                "only {accepted} of {SECTIONS} sections had verifiable hypotheses; last error: {}",
                last_error.unwrap_or_default()
            ));
        }
        Ok(out)
    }

    /// `max(g_a, g_b)` with both pieces through the same value at the centre
    /// node and parameters a quarter of the `y`-box off its centre.
    fn corollary31(&mut self) -> genfun::Result<ConditionReport> {
        let g = self.gf.as_ref();
        let (xg, yg) = (self.x_grid()?, self.y_grid()?);
        let x0 = xg.nearest(&((&xg.lo + &xg.hi) * 0.5));
        let xv = xg.node(x0);
        let yc = (&yg.lo + &yg.hi) * 0.5;
        let quarter = (&yg.hi - &yg.lo) * 0.25;
        let (ya, yb) = (
            yg.node(yg.nearest(&(&yc - &quarter))),
            yg.node(yg.nearest(&(&yc + &quarter))),
        );
        let (lo, hi) = g.gamma().inner_interval(xv.as_slice(), ya.as_slice());
        let za = 0.5 * (lo + hi);
        let u0 = g.eval(xv.as_slice(), ya.as_slice(), za);
        let zb = genfun::implicit::eval_gstar(g, xv.as_slice(), yb.as_slice(), u0, &self.tol)?;
        let u = SampledFunction::max_of_affines(
            g,
            xg,
            &[GAffine { y: ya, z: za }, GAffine { y: yb, z: zb }],
        )?;
        check_corollary31(g, &u, x0, &yg, &self.tol)
    }
}

fn error_report(id: &str, seed: u64, msg: &str) -> ConditionReport {
    ConditionReport::new(id, Verdict::Inconclusive, f64::NAN, seed).note(format!("error: {msg}"))
}

/// Folds per-configuration reports: the smallest margin with its witness;
/// fails if any fails, else inconclusive if any is.
fn combine(id: &str, seed: u64, reports: Vec<ConditionReport>) -> ConditionReport {
    let verdict = match exit_code(&reports) {
        0 => Verdict::Holds,
        1 => Verdict::Fails,
        _ => Verdict::Inconclusive,
    };
    let worst = reports
        .iter()
        .filter(|r| !r.margin.is_nan())
        .min_by(|a, b| a.margin.total_cmp(&b.margin));
    let margin = worst.map_or(f64::NAN, |r| r.margin);
    let mut out = ConditionReport::new(id, verdict, margin, seed)
        .with_samples(reports.iter().map(|r| r.samples_used).sum())
        .detail("configurations", reports.len() as f64)
        .detail(
            "failing",
            reports
                .iter()
                .filter(|r| r.verdict == Verdict::Fails)
                .count() as f64,
        )
        .detail(
            "inconclusive",
            reports
                .iter()
                .filter(|r| r.verdict == Verdict::Inconclusive)
                .count() as f64,
        );
    if let Some(w) = worst {
        out.witness = w.witness.clone();
        for (k, v) in &w.details {
            out = out.detail(&format!("worst.{k}"), *v);
        }
    }
    let mut notes: Vec<String> = reports
        .iter()
        .flat_map(|r| r.notes.iter().cloned())
        .collect();
    notes.dedup();
    out.notes = notes;
    out
}

/// Validates `cfg` against `registry` and runs every check in order. Only
/// configuration problems are errors; failing or erroring checks are
/// reported.
pub fn run_scenario(cfg: &ScenarioConfig, registry: &Registry) -> Result<RunOutcome, ConfigError> {
    let tol = cfg.validate(registry)?;
    let gf = registry
        .build(&cfg.generating_function.id, &cfg.params())
        .map_err(|e| ConfigError::Invalid(e.to_string()))?;
    let echo = GfEcho {
        id: cfg.generating_function.id.clone(),
        name: gf.name().to_string(),
        dim: gf.dim(),
        params: gf.params(),
    };
    let mut scenario = Scenario {
        cfg,
        gf,
        tol: tol.clone(),
        segments: None,
        fixture: None,
    };
    let mut checks = Vec::with_capacity(cfg.checks.len());
    let mut timings = Vec::with_capacity(cfg.checks.len());
    for id in &cfg.checks {
        let start = Instant::now();
        let mut report = scenario
            .run(id)
            .unwrap_or_else(|e| error_report(id, cfg.seed, &e.to_string()));
        report.condition_id = id.clone();
        checks.push(report);
        timings.push(Timing {
            check_id: id.clone(),
            seconds: start.elapsed().as_secs_f64(),
        });
    }
    let code = exit_code(&checks);
    Ok(RunOutcome {
        report: RunReport {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            config: cfg.clone(),
            generating_function: echo,
            tolerances: tol,
            checks,
            overall: overall(code),
            exit_code: code,
        },
        timings,
    })
}
