//! Command implementations; each delegates to `avrel-core`.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use avrel_core::dataset::summarize;
use avrel_core::estimation::{fit_parametric, select_spline, FitResult};
use avrel_core::frailty::heterogeneity_lrt;
use avrel_core::inference::{
    bootstrap_with, calibrate_scb, day_grid, default_window, expected_events_curve, pointwise_band, Band,
    BootstrapEnsemble, BootstrapOptions,
};
use avrel_core::simulation::{run_scenario, synthetic_pool, ScenarioSpec};
use avrel_core::{BcifModel, Fleet, ParametricFamily};
use serde::Serialize;

use crate::error::{CliError, CliResult, Context};
use crate::format::sig6;
use crate::io::{self, Table};
use crate::{
    BootstrapArgs, Cli, Command, ExpectedArgs, ExportArgs, FamilyArg, FitArgs, FrailtyArgs, Freeze, IngestArgs,
    Knots, ScbArgs, SimulateArgs,
};

pub fn dispatch(cli: &Cli, out: &mut dyn Write) -> CliResult<()> {
    let dir = cli.out.as_path();
    match &cli.command {
        Command::Ingest(a) => cmd_ingest(a, dir, out),
        Command::Export(a) => cmd_export(a, dir, out),
        Command::Fit(a) => cmd_fit(a, dir, out),
        Command::Bootstrap(a) => cmd_bootstrap(a, cli.seed, dir, out),
        Command::Scb(a) => cmd_scb(a, cli.seed, dir, out),
        Command::Frailty(a) => cmd_frailty(a, dir, out),
        Command::Simulate(a) => cmd_simulate(a, cli.seed, dir, out),
        Command::Expected(a) => cmd_expected(a, dir, out),
    }
}

macro_rules! say {
    ($out:expr, $($arg:tt)*) => {
        writeln!($out, $($arg)*).map_err(|source| CliError::Io { path: PathBuf::from("<stdout>"), source })
    };
}

fn family_name(f: ParametricFamily) -> &'static str {
    f.name()
}

fn spline_fit(fleet: &Fleet, knots: Knots) -> CliResult<FitResult> {
    select_spline(fleet, &knots.candidates()).context("spline fit")
}

fn parametric_fits(fleet: &Fleet) -> CliResult<Vec<FitResult>> {
    ParametricFamily::ALL
        .iter()
        .map(|&f| fit_parametric(fleet, f, None).context("parametric fit"))
        .collect()
}

/// The lowest-AIC parametric family (ties keep the earlier family).
fn best_parametric(fleet: &Fleet) -> CliResult<ParametricFamily> {
    let fits = parametric_fits(fleet)?;
    let best = fits
        .iter()
        .min_by(|a, b| a.aic.total_cmp(&b.aic))
        .expect("three families");
    Ok(match &best.model {
        BcifModel::Parametric(m) => m.family(),
        BcifModel::Spline(_) => unreachable!(),
    })
}

fn resolve_parametric(fleet: &Fleet, family: FamilyArg) -> CliResult<ParametricFamily> {
    match family {
        FamilyArg::Auto => best_parametric(fleet),
        FamilyArg::Spline => Err(CliError::Invalid(
            "this command needs a parametric family (musa-okumoto, gompertz, weibull or auto)".into(),
        )),
        f => Ok(f.parametric().expect("parametric family")),
    }
}

fn cmd_ingest(a: &IngestArgs, dir: &Path, out: &mut dyn Write) -> CliResult<()> {
    let (fleet, violations) = io::ingest(&a.months, &a.events, &a.exposure)?;
    if !violations.is_empty() {
        return Err(io::validation_error(&violations));
    }
    let summary = summarize(&fleet);
    io::write_json(&dir.join("fleet.json"), &fleet)?;
    io::write_json(&dir.join("summary.json"), &summary)?;
    say!(out, "{summary}")
}

fn cmd_export(a: &ExportArgs, dir: &Path, out: &mut dyn Write) -> CliResult<()> {
    let fleet = io::read_fleet(&a.fleet)?;
    io::export(&fleet, dir)?;
    say!(out, "wrote months.csv, events.csv, exposure.csv for {} units", fleet.n_units())
}

fn cmd_fit(a: &FitArgs, dir: &Path, out: &mut dyn Write) -> CliResult<()> {
    let fleet = io::read_fleet(&a.fleet)?;
    let fits = match a.family {
        FamilyArg::Auto => {
            let mut v = parametric_fits(&fleet)?;
            v.push(spline_fit(&fleet, a.knots)?);
            v
        }
        FamilyArg::Spline => vec![spline_fit(&fleet, a.knots)?],
        f => vec![fit_parametric(&fleet, f.parametric().expect("parametric"), None).context("parametric fit")?],
    };
    let mut table = Table::new(&["model", "df", "loglik", "aic", "converged"]);
    say!(out, "{:<14} {:>4} {:>14} {:>14}", "model", "df", "loglik", "AIC")?;
    for fit in &fits {
        let name = fit.model.kind();
        io::write_json(&dir.join(format!("fit_{name}.json")), fit)?;
        let label = match fit.n_interior_knots() {
            Some(k) => format!("{name} (b={k})"),
            None => name.to_string(),
        };
        table.row(&[
            name.to_string(),
            fit.df.to_string(),
            sig6(fit.loglik),
            sig6(fit.aic),
            fit.converged.to_string(),
        ]);
        say!(out, "{:<14} {:>4} {:>14} {:>14}", label, fit.df, sig6(fit.loglik), sig6(fit.aic))?;
    }
    table.write(&dir.join("aic.csv"))?;
    if fits.len() > 1 {
        let best = fits.iter().min_by(|x, y| x.aic.total_cmp(&y.aic)).expect("non-empty");
        let best_par = fits
            .iter()
            .filter(|f| matches!(f.model, BcifModel::Parametric(_)))
            .min_by(|x, y| x.aic.total_cmp(&y.aic))
            .expect("parametric fits present");
        say!(out, "best parametric: {}", best_par.model.kind())?;
        say!(out, "best overall:    {}", best.model.kind())?;
    }
    Ok(())
}

fn bootstrap_options(fleet: &Fleet, replicates: usize, knots: Knots, freeze: Option<Freeze>) -> CliResult<BootstrapOptions> {
    let freeze_b = match freeze {
        None => None,
        Some(Freeze::Fixed(b)) => Some(b),
        Some(Freeze::PointEstimate) => spline_fit(fleet, knots)?.n_interior_knots(),
    };
    Ok(BootstrapOptions {
        candidate_b: knots.candidates(),
        freeze_b,
        ..BootstrapOptions::new(replicates)
    })
}

#[derive(Serialize)]
struct BootstrapSummary {
    replicates: usize,
    seed: u64,
    candidate_b: Vec<usize>,
    freeze_b: Option<usize>,
    selected_b_counts: BTreeMap<usize, usize>,
}

fn selected_counts(ens: &BootstrapEnsemble) -> BTreeMap<usize, usize> {
    let mut counts = BTreeMap::new();
    for &b in &ens.selected_b {
        *counts.entry(b).or_insert(0) += 1;
    }
    counts
}

fn cmd_bootstrap(a: &BootstrapArgs, seed: u64, dir: &Path, out: &mut dyn Write) -> CliResult<()> {
    let fleet = io::read_fleet(&a.fleet)?;
    let opts = bootstrap_options(&fleet, a.replicates, a.knots, a.freeze_b)?;
    let ens = bootstrap_with(&fleet, &opts, seed).context("bootstrap")?;
    let summary = BootstrapSummary {
        replicates: ens.len(),
        seed,
        candidate_b: opts.candidate_b.clone(),
        freeze_b: opts.freeze_b,
        selected_b_counts: selected_counts(&ens),
    };
    io::write_json(&dir.join("ensemble.json"), &ens)?;
    io::write_json(&dir.join("bootstrap_summary.json"), &summary)?;
    say!(out, "{} replicates; selected knot counts:", ens.len())?;
    for (b, n) in &summary.selected_b_counts {
        say!(out, "  b={b}: {n}")?;
    }
    Ok(())
}

#[derive(Serialize)]
struct Adequacy {
    family: ParametricFamily,
    accepted: bool,
}

#[derive(Serialize)]
struct BandReport<'a> {
    replicates: usize,
    seed: u64,
    window: (f64, f64),
    pointwise: BandMeta,
    simultaneous: BandMeta,
    coverage: f64,
    evaluated: &'a [(f64, f64)],
    adequacy: Option<Adequacy>,
}

#[derive(Serialize)]
struct BandMeta {
    nominal_alpha: f64,
    achieved_alpha: f64,
    order_stats: (usize, usize),
}

impl From<&Band> for BandMeta {
    fn from(b: &Band) -> Self {
        BandMeta {
            nominal_alpha: b.nominal_alpha,
            achieved_alpha: b.achieved_alpha,
            order_stats: b.order_stats,
        }
    }
}

fn cmd_scb(a: &ScbArgs, seed: u64, dir: &Path, out: &mut dyn Write) -> CliResult<()> {
    let fleet = io::read_fleet(&a.fleet)?;
    let ens: BootstrapEnsemble = match &a.ensemble {
        Some(p) => io::read_json(p)?,
        None => bootstrap_with(&fleet, &bootstrap_options(&fleet, a.replicates, a.knots, a.freeze_b)?, seed)
            .context("bootstrap")?,
    };
    let (lo_default, hi_default) = default_window(&fleet).context("band window")?;
    let window = (a.tl.unwrap_or(lo_default), a.tu.unwrap_or(hi_default));
    let pci = pointwise_band(&ens, a.alpha_p.unwrap_or(a.alpha)).context("pointwise band")?;
    let scb = calibrate_scb(&ens, a.alpha, window.0, window.1).context("simultaneous band")?;
    let point = spline_fit(&fleet, a.knots)?;
    let expected = expected_events_curve(&fleet, &point.model, &ens.grid).context("expected events")?;

    let adequacy = match a.family {
        Some(f) => {
            let family = resolve_parametric(&fleet, f)?;
            let fit = fit_parametric(&fleet, family, None).context("parametric fit")?;
            Some(Adequacy {
                family,
                accepted: scb.contains_model(&fit.model).context("adequacy check")?,
            })
        }
        None => None,
    };

    let mut table = Table::new(&[
        "t",
        "estimate",
        "pci_lo",
        "pci_hi",
        "scb_lo",
        "scb_hi",
        "expected_events",
        "observed_events",
    ]);
    let mut k = 0;
    for (j, &t) in ens.grid.iter().enumerate() {
        let (scb_lo, scb_hi) = if k < scb.grid.len() && scb.grid[k] == t {
            k += 1;
            (sig6(scb.lower[k - 1]), sig6(scb.upper[k - 1]))
        } else {
            (String::new(), String::new())
        };
        table.row(&[
            sig6(t),
            sig6(point.model.bcif(t).context("point estimate")?),
            sig6(pci.lower[j]),
            sig6(pci.upper[j]),
            scb_lo,
            scb_hi,
            sig6(expected.expected[j]),
            expected.observed[j].to_string(),
        ]);
    }
    table.write(&dir.join("band.csv"))?;
    let report = BandReport {
        replicates: ens.len(),
        seed,
        window,
        pointwise: (&pci).into(),
        simultaneous: (&scb).into(),
        coverage: scb.calibration.as_ref().map_or(f64::NAN, |c| c.coverage),
        evaluated: scb.calibration.as_ref().map_or(&[], |c| c.evaluated.as_slice()),
        adequacy,
    };
    io::write_json(&dir.join("band.json"), &report)?;

    say!(out, "replicates:          {}", ens.len())?;
    say!(out, "window:              [{}, {}]", sig6(window.0), sig6(window.1))?;
    say!(
        out,
        "pointwise alpha_p:   {} (order statistics {}, {})",
        sig6(pci.achieved_alpha),
        pci.order_stats.0,
        pci.order_stats.1
    )?;
    say!(
        out,
        "calibrated alpha_c:  {} (order statistics {}, {})",
        sig6(scb.achieved_alpha),
        scb.order_stats.0,
        scb.order_stats.1
    )?;
    say!(out, "bootstrap coverage:  {}", sig6(report.coverage))?;
    if let Some(ad) = &report.adequacy {
        let verdict = if ad.accepted { "inside" } else { "outside" };
        say!(out, "{} BCIF lies {verdict} the simultaneous band", family_name(ad.family))?;
    }
    Ok(())
}

fn cmd_frailty(a: &FrailtyArgs, dir: &Path, out: &mut dyn Write) -> CliResult<()> {
    let fleet = io::read_fleet(&a.fleet)?;
    let family = resolve_parametric(&fleet, a.family)?;
    let fit = heterogeneity_lrt(&fleet, family, a.boundary_mix).context("frailty")?;
    io::write_json(&dir.join("frailty.json"), &fit)?;
    say!(out, "family:          {}", family_name(family))?;
    say!(out, "phi:             {}", sig6(fit.phi))?;
    say!(out, "marginal loglik: {}", sig6(fit.marginal_loglik))?;
    say!(out, "null loglik:     {}", sig6(fit.null_loglik))?;
    say!(out, "LRT statistic:   {}", sig6(fit.lrt_statistic))?;
    say!(out, "p-value:         {}", sig6(fit.p_value))?;
    let verdict = if fit.rejects(a.alpha) { "rejected" } else { "not rejected" };
    say!(out, "homogeneity {verdict} at alpha = {}", sig6(a.alpha))?;
    for w in &fit.warnings {
        say!(out, "warning: {w}")?;
    }
    Ok(())
}

#[derive(Serialize)]
struct ScenarioSummary {
    scenario: u8,
    n: usize,
    repeats: usize,
    replicates: usize,
    seed: u64,
    cp: f64,
    acceptance_prob: f64,
    n_excluded: usize,
    rel_rmse_median: f64,
}

fn cmd_simulate(a: &SimulateArgs, seed: u64, dir: &Path, out: &mut dyn Write) -> CliResult<()> {
    let family = match a.family.parametric() {
        Some(f) => f,
        None => {
            return Err(CliError::Invalid(
                "simulate checks one parametric family; pick musa-okumoto, gompertz or weibull".into(),
            ))
        }
    };
    let pool = match &a.pool {
        Some(p) => io::read_fleet(p)?,
        None => synthetic_pool(),
    };
    let t_range = match (a.tl, a.tu) {
        (Some(lo), Some(hi)) => Some((lo, hi)),
        (None, None) => None,
        _ => return Err(CliError::Invalid("give both --tl and --tu, or neither".into())),
    };
    let mut records = Table::new(&["scenario", "n", "repeat", "covered", "accepted", "selected_b"]);
    let mut curves = Table::new(&["scenario", "n", "t", "rel_rmse"]);
    let mut summaries = Vec::new();
    say!(
        out,
        "{:>8} {:>6} {:>8} {:>10} {:>10} {:>12}",
        "scenario",
        "n",
        "repeats",
        "CP",
        "accept",
        "RelRMSE med"
    )?;
    for &n in &a.n {
        let mut spec = ScenarioSpec::canonical(a.scenario as usize, n, a.repeats, a.replicates, seed)
            .context("scenario")?;
        spec.family = family;
        spec.exposure_pool = pool.clone();
        spec.candidate_b = a.knots.candidates();
        spec.alpha = a.alpha;
        spec.t_range = t_range;
        let m = run_scenario(&spec).context("simulation")?;
        for r in &m.records {
            let (covered, accepted, b) = match r.error {
                Some(_) => ("NA".to_string(), "NA".to_string(), "NA".to_string()),
                None => (r.covered.to_string(), r.accepted.to_string(), r.selected_b.to_string()),
            };
            records.row(&[a.scenario.to_string(), n.to_string(), r.repeat.to_string(), covered, accepted, b]);
        }
        for (&t, &v) in m.rel_rmse.grid.iter().zip(&m.rel_rmse.values) {
            curves.row(&[a.scenario.to_string(), n.to_string(), sig6(t), sig6(v)]);
        }
        let s = ScenarioSummary {
            scenario: a.scenario,
            n,
            repeats: a.repeats,
            replicates: a.replicates,
            seed,
            cp: m.cp,
            acceptance_prob: m.acceptance_prob,
            n_excluded: m.n_excluded,
            rel_rmse_median: m.rel_rmse.median(),
        };
        say!(
            out,
            "{:>8} {:>6} {:>8} {:>10} {:>10} {:>12}",
            a.scenario,
            n,
            a.repeats - m.n_excluded,
            sig6(s.cp),
            sig6(s.acceptance_prob),
            sig6(s.rel_rmse_median)
        )?;
        for r in m.records.iter().filter(|r| r.error.is_some()) {
            say!(out, "  repeat {} excluded: {}", r.repeat, r.error.as_deref().unwrap_or(""))?;
        }
        summaries.push(s);
    }
    records.write(&dir.join("scenario_records.csv"))?;
    curves.write(&dir.join("rel_rmse.csv"))?;
    io::write_json(&dir.join("scenario_metrics.json"), &summaries)
}

fn cmd_expected(a: &ExpectedArgs, dir: &Path, out: &mut dyn Write) -> CliResult<()> {
    let fleet = io::read_fleet(&a.fleet)?;
    let fit: FitResult = match (&a.fit, a.family) {
        (Some(p), _) => io::read_json(p)?,
        (None, FamilyArg::Spline) => spline_fit(&fleet, a.knots)?,
        (None, f) => {
            let family = resolve_parametric(&fleet, f)?;
            fit_parametric(&fleet, family, None).context("parametric fit")?
        }
    };
    let grid = day_grid(fleet.tau());
    let curve = expected_events_curve(&fleet, &fit.model, &grid).context("expected events")?;
    let mut table = Table::new(&["t", "expected_events", "observed_events"]);
    for ((t, e), o) in curve.grid.iter().zip(&curve.expected).zip(&curve.observed) {
        table.row(&[sig6(*t), sig6(*e), o.to_string()]);
    }
    table.write(&dir.join("expected.csv"))?;
    say!(out, "model:           {}", fit.model.kind())?;
    say!(
        out,
        "expected at tau: {}",
        sig6(*curve.expected.last().expect("non-empty grid"))
    )?;
    say!(out, "observed:        {}", fleet.n_events())
}
