use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use qnewton::kinetic_series::{
    determine_coefficients, master_residual, Family, JetSampler, KineticCoefficients, SeriesScale, DEFAULT_TRUNCATION,
    MAX_LEVEL,
};
use qnewton::mechanics::{appendix1_demo, Polynomial};
use qnewton::numerics::IntegratorSettings;
use qnewton::reduced_action::{qshje_residual, QuantumStateParams};
use qnewton::schrodinger::{PairSource, PhysParams, PotentialModel};
use qnewton::trajectory::{integrate_legacy_law, run_scenario, write_csv, Law, ScenarioConfig, TrajectorySample};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{ConfigDocument, OutputFormat};
use crate::failure::{Failure, Phase};
use crate::Ctx;

type Outcome = Result<bool, Failure>;

/// Analytic pairs are exact up to rounding; Numerov pairs carry grid error.
const QSHJE_TOL_ANALYTIC: f64 = 1e-10;
const QSHJE_TOL_NUMEROV: f64 = 1e-6;
const MASTER_TOL: f64 = 1e-10;
const CONSERVATION_TOL: f64 = 1e-8;
const DETERMINATION_TOL: f64 = 1e-9;

fn open_sink(path: Option<&Path>) -> Result<Box<dyn Write>, Failure> {
    Ok(match path {
        None => Box::new(BufWriter::new(std::io::stdout().lock())),
        Some(p) if p.as_os_str() == "-" => Box::new(BufWriter::new(std::io::stdout().lock())),
        Some(p) => {
            Box::new(BufWriter::new(File::create(p).with_context(|| format!("creating {}", p.display())).in_config()?))
        }
    })
}

fn writes_stdout(path: Option<&Path>) -> bool {
    path.is_none_or(|p| p.as_os_str() == "-")
}

#[derive(Serialize)]
struct TrajectoryDocument<'a> {
    summary: &'a qnewton::trajectory::TrajectorySummary,
    samples: &'a [TrajectorySample],
}

pub fn trajectory(
    ctx: &Ctx,
    config: &Path,
    law: Option<Law>,
    t1: Option<f64>,
    samples: Option<usize>,
    output: Option<PathBuf>,
) -> Outcome {
    let mut doc = ConfigDocument::from_path(config).in_config()?;
    if let Some(l) = law {
        doc.run.law = l;
    }
    if let Some(t) = t1 {
        doc.run.t1 = t;
    }
    if let Some(n) = samples {
        doc.run.samples = n;
    }
    let mut s = doc.scenario(ctx.tol_scale).in_config()?;
    if output.is_some() {
        s.output = output;
    }
    let run = run_scenario(&s).in_numerics()?;
    let sink = s.output.as_deref();
    let mut w = open_sink(sink)?;
    match doc.format() {
        OutputFormat::Csv => write_csv(&mut w, &run.samples).in_config()?,
        OutputFormat::Json => {
            let d = TrajectoryDocument { summary: &run.summary, samples: &run.samples };
            serde_json::to_writer_pretty(&mut w, &d).in_config()?;
            writeln!(w).in_config()?;
        }
    }
    w.flush().in_config()?;
    if !ctx.quiet {
        // keep stdout clean when it carries the data
        let line = summary_line(&s, &run.samples, &run.summary);
        if writes_stdout(sink) {
            eprintln!("{line}");
        } else {
            println!("{line}");
            println!("wrote {} samples to {}", run.samples.len(), sink.unwrap().display());
        }
    }
    Ok(true)
}

fn summary_line(
    s: &ScenarioConfig,
    samples: &[TrajectorySample],
    sum: &qnewton::trajectory::TrajectorySummary,
) -> String {
    let inv = Invariants::measure(s, samples, sum.reference_energy);
    let mut line = format!(
        "law={} samples={} x=[{:.6}, {:.6}] min|xdot|={:.3e} energy_drift={:.3e} bohm_gap={:.3e}",
        sum.law, sum.samples, sum.x_range.0, sum.x_range.1, sum.min_speed, inv.energy, inv.bohm
    );
    if let Some(m) = inv.momentum {
        line += &format!(" momentum_drift={m:.3e}");
    }
    if let Some(f) = sum.free_speed_factor {
        line += &format!(" speed_factor={f:.12}");
    }
    if let Some(st) = &sum.stall {
        line += &format!(" stalled={}", st.stalled);
    }
    line
}

/// Relative maxima of the conserved quantities along a run.
struct Invariants {
    energy: f64,
    bohm: f64,
    /// Free particle only.
    momentum: Option<f64>,
}

impl Invariants {
    fn measure(s: &ScenarioConfig, samples: &[TrajectorySample], energy: f64) -> Self {
        let p0 = samples[0].p;
        let mut inv = Invariants { energy: 0.0, bohm: 0.0, momentum: None };
        let free = matches!(s.potential, PotentialModel::Free);
        let mut mom = 0.0f64;
        for smp in samples {
            inv.energy = inv.energy.max((smp.h - energy).abs() / energy.abs());
            let mv = s.params.mu * smp.xdot;
            inv.bohm = inv.bohm.max((mv - smp.s0p).abs() / mv.abs());
            mom = mom.max((smp.p - p0).abs() / p0.abs());
        }
        if free {
            inv.momentum = Some(mom);
        }
        inv
    }

    fn within(&self, tol: f64) -> bool {
        self.energy <= tol && self.bohm <= tol && self.momentum.is_none_or(|m| m <= tol)
    }
}

fn random_states(rng: &mut ChaCha8Rng, n: usize) -> Vec<(f64, f64)> {
    (0..n).map(|_| (rng.gen_range(0.4..2.5), rng.gen_range(-1.0..1.0))).collect()
}

fn builtin_scenario(
    potential: PotentialModel,
    energy: f64,
    a: f64,
    b: f64,
    law: Law,
    tol_scale: f64,
) -> ScenarioConfig {
    let domain = match potential {
        PotentialModel::Free => (-40.0, 40.0),
        _ => (-6.0, 6.0),
    };
    let d = IntegratorSettings::default();
    ScenarioConfig {
        potential,
        params: PhysParams { hbar: 1.0, mu: 1.0, energy },
        q: QuantumStateParams { a, b, kappa: 0.0 },
        domain,
        anchor: 0.0,
        grid_step: 1e-3,
        x_start: 0.0,
        t_span: (0.0, 10.0),
        law,
        integrator: IntegratorSettings::with_tolerances(d.rel_tol * tol_scale, d.abs_tol * tol_scale),
        newton_init: None,
        samples: 201,
        output: None,
    }
}

pub fn verify_qshje(ctx: &Ctx, config: Option<&Path>, points: usize) -> Outcome {
    if points < 2 {
        return Err(Failure::config("--points must be at least 2"));
    }
    let mut cases = Vec::new();
    match config {
        Some(p) => {
            let s = ConfigDocument::from_path(p).and_then(|d| d.scenario(ctx.tol_scale)).in_config()?;
            let lo = s.domain.0;
            let hi = s.domain.1;
            cases.push((s, (lo, hi)));
        }
        None => {
            let mut rng = ChaCha8Rng::seed_from_u64(ctx.seed);
            for (a, b) in random_states(&mut rng, 5) {
                let s = builtin_scenario(PotentialModel::Free, 0.5, a, b, Law::Velocity, 1.0);
                cases.push((s, (-10.0, 10.0)));
            }
            let harmonic = PotentialModel::Harmonic { stiffness: 1.0 };
            for (a, b) in std::iter::once((1.5, -0.2)).chain(random_states(&mut rng, 4)) {
                let mut s = builtin_scenario(harmonic.clone(), 0.8, a, b, Law::Velocity, 1.0);
                s.domain = (-3.0, 3.0);
                cases.push((s, (-3.0, 3.0)));
            }
        }
    }
    let mut ok = true;
    for (s, (lo, hi)) in &cases {
        let pair = s.build_pair().in_numerics()?;
        // stay inside a truncated Numerov domain
        let (lo, hi) = pair.truncated().map_or((*lo, *hi), |(a, b)| (lo.max(a), hi.min(b)));
        let tol = match pair.source() {
            PairSource::Analytic => QSHJE_TOL_ANALYTIC,
            PairSource::Numerov { .. } => QSHJE_TOL_NUMEROV,
        } * ctx.tol_scale;
        let mut worst = 0.0f64;
        for i in 0..points {
            let x = lo + (hi - lo) * i as f64 / (points - 1) as f64;
            worst = worst.max(qshje_residual(&pair, &s.q, x).in_numerics()?.abs());
        }
        let pass = worst <= tol;
        ok &= pass;
        ctx.say(format!(
            "qshje {} a={:.6} b={:.6} E={} on [{lo}, {hi}]: max residual {worst:.3e} (tol {tol:.1e}) {}",
            s.potential.name(),
            s.q.a,
            s.q.b,
            s.params.energy,
            if pass { "PASS" } else { "FAIL" }
        ));
    }
    println!("verify qshje: {}", if ok { "PASS" } else { "FAIL" });
    Ok(ok)
}

/// `alpha20=0.7` or `beta_2_0=-0.3`.
fn parse_perturbation(spec: &str) -> Result<(Family, u32, u32, f64), Failure> {
    let bad = || Failure::config(format!("bad --perturb '{spec}', expected e.g. alpha20=0.7"));
    let (name, value) = spec.split_once('=').ok_or_else(bad)?;
    let value: f64 = value.trim().parse().map_err(|_| bad())?;
    let name = name.trim();
    let (fam, rest) = if let Some(r) = name.strip_prefix("alpha") {
        (Family::Alpha, r)
    } else if let Some(r) = name.strip_prefix("beta") {
        (Family::Beta, r)
    } else {
        return Err(bad());
    };
    let rest = rest.trim_start_matches('_');
    let (n, k) = match rest.split_once('_') {
        Some((n, k)) => (n, k),
        None if rest.len() == 2 => rest.split_at(1),
        None => return Err(bad()),
    };
    Ok((fam, n.parse().map_err(|_| bad())?, k.parse().map_err(|_| bad())?, value))
}

pub fn verify_master(
    ctx: &Ctx,
    samples: usize,
    coefficients: Option<&Path>,
    perturb: &[String],
    hbar: f64,
    mu: f64,
) -> Outcome {
    if samples == 0 {
        return Err(Failure::config("--samples must be positive"));
    }
    let mut c = match coefficients {
        Some(p) => KineticCoefficients::from_json_path(p).in_config()?,
        None => KineticCoefficients::canonical(),
    };
    for spec in perturb {
        let (fam, n, k, v) = parse_perturbation(spec)?;
        c.set_coefficient(fam, n, k, v).in_config()?;
        ctx.say(format!("set {fam}{n}{k} = {v}"));
    }
    let scale = SeriesScale::new(hbar, mu).in_config()?;
    let mut sampler = JetSampler::new(ctx.seed);
    let mut worst = (0.0f64, 0usize);
    for i in 0..samples {
        let r = master_residual(&c, &sampler.sample(), scale).in_numerics()?.relative();
        if r > worst.0 || i == 0 {
            worst = (r, i);
        }
    }
    let tol = MASTER_TOL * ctx.tol_scale;
    let ok = worst.0 <= tol;
    ctx.say(format!(
        "master relation at {samples} jets (seed {}): max term-scaled residual {:.3e} at jet {} (tol {tol:.1e})",
        ctx.seed, worst.0, worst.1
    ));
    println!("verify master: {}", if ok { "PASS" } else { "FAIL" });
    Ok(ok)
}

pub fn verify_conservation(ctx: &Ctx, config: Option<&Path>, states: usize) -> Outcome {
    let mut cases = Vec::new();
    match config {
        Some(p) => cases.push(ConfigDocument::from_path(p).and_then(|d| d.scenario(ctx.tol_scale)).in_config()?),
        None => {
            let mut rng = ChaCha8Rng::seed_from_u64(ctx.seed);
            for (a, b) in random_states(&mut rng, states) {
                cases.push(builtin_scenario(PotentialModel::Free, 0.5, a, b, Law::Velocity, ctx.tol_scale));
            }
            for (a, b) in random_states(&mut rng, 2) {
                let h = PotentialModel::Harmonic { stiffness: 1.0 };
                cases.push(builtin_scenario(h, 0.8, a, b, Law::Velocity, ctx.tol_scale));
            }
        }
    }
    let tol = CONSERVATION_TOL * ctx.tol_scale;
    let mut ok = true;
    for base in cases {
        for law in [Law::Velocity, Law::Newton] {
            let mut s = base.clone();
            s.law = law;
            let run = run_scenario(&s).in_numerics()?;
            let inv = Invariants::measure(&s, &run.samples, run.summary.reference_energy);
            let pass = inv.within(tol) && run.summary.no_node_ok;
            ok &= pass;
            ctx.say(format!(
                "{} {law} a={:.6} b={:.6}: energy {:.3e} bohm {:.3e} momentum {} (tol {tol:.1e}) {}",
                s.potential.name(),
                s.q.a,
                s.q.b,
                inv.energy,
                inv.bohm,
                inv.momentum.map_or("-".to_string(), |m| format!("{m:.3e}")),
                if pass { "PASS" } else { "FAIL" }
            ));
        }
    }
    println!("verify conservation: {}", if ok { "PASS" } else { "FAIL" });
    Ok(ok)
}

pub fn coefficients(ctx: &Ctx, levels: u32, output: Option<&Path>) -> Outcome {
    if levels > MAX_LEVEL {
        return Err(Failure::config(format!("--levels must be <= {MAX_LEVEL}")));
    }
    let r = determine_coefficients(levels, DEFAULT_TRUNCATION, &mut JetSampler::new(ctx.seed)).in_numerics()?;
    if let Some(l0) = &r.level0 {
        ctx.say(format!("level 0: alpha00 roots {:?}, selected {} ({})", l0.roots, l0.selected, l0.rule));
    }
    let tol = DETERMINATION_TOL * ctx.tol_scale;
    let mut ok = true;
    for l in &r.levels {
        ok &= l.check_residual <= tol;
        ctx.say(format!(
            "level {}: {} unknowns, {} jets, rank {}, check residual {:.3e}",
            l.level, l.unknowns, l.samples, l.rank, l.check_residual
        ));
    }
    println!("nonzero coefficients through level {levels}:");
    for e in r.coefficients.entries() {
        if e.alpha != 0.0 {
            println!("  alpha{}{} = {}", e.n, e.k, e.alpha);
        }
        if e.beta != 0.0 {
            println!("  beta{}{} = {}", e.n, e.k, e.beta);
        }
    }
    if let Some(p) = output {
        std::fs::write(p, r.coefficients.to_json()).with_context(|| format!("writing {}", p.display())).in_config()?;
    }
    if !ok {
        println!("coefficients: FAIL (check residual above {tol:.1e})");
    }
    Ok(ok)
}

fn parse_potential(spec: &str) -> Result<PotentialModel, Failure> {
    let bad = || Failure::config(format!("bad --potential '{spec}', expected free, linear:<g> or harmonic:<k>"));
    let (kind, arg) = spec.split_once(':').map_or((spec, None), |(k, a)| (k, Some(a)));
    let value = || -> Result<f64, Failure> { arg.ok_or_else(bad)?.parse().map_err(|_| bad()) };
    match kind {
        "free" if arg.is_none() => Ok(PotentialModel::Free),
        "linear" => Ok(PotentialModel::Linear { slope: value()? }),
        "harmonic" => Ok(PotentialModel::Harmonic { stiffness: value()? }),
        _ => Err(bad()),
    }
}

fn opt(v: Option<f64>) -> String {
    v.map_or("-".to_string(), |x| format!("{x:.3e}"))
}

pub fn demo_appendix1(ctx: &Ctx, power: i32, f: Vec<f64>, potential: &str, lambda: f64) -> Outcome {
    if power == 0 {
        return Err(Failure::config("--power must be nonzero"));
    }
    let pot = parse_potential(potential)?;
    let r = appendix1_demo(power, &Polynomial(f), &pot, lambda).in_numerics()?;
    println!(
        "L = {}f(x) xdot^{power} - V(x), V = {potential}",
        if r.lambda.is_some() { "(lambda/2) xdot^2 + " } else { "" }
    );
    ctx.say(format!("naive inconsistency: {}", r.naive_inconsistent));
    ctx.say(format!("max |dV/dx| on probe grid: {:.3e}", r.max_force));
    ctx.say(format!(
        "along {} samples: Euler-Lagrange {}, xdot = dH/dP {}, dP/dt = -dH/dx {}",
        r.samples,
        opt(r.el_residual),
        opt(r.velocity_residual),
        opt(r.momentum_residual)
    ));
    for n in &r.notes {
        ctx.say(format!("note: {n}"));
    }
    Ok(true)
}

pub fn demo_legacy_stall(ctx: &Ctx, config: Option<&Path>) -> Outcome {
    let legacy = match config {
        Some(p) => {
            let mut s = ConfigDocument::from_path(p).and_then(|d| d.scenario(ctx.tol_scale)).in_config()?;
            s.law = Law::Legacy;
            s
        }
        None => {
            let mut s =
                builtin_scenario(PotentialModel::Linear { slope: 1.0 }, 1.0, 1.0, 0.0, Law::Legacy, ctx.tol_scale);
            s.domain = (-4.0, 4.0);
            s.t_span = (0.0, 60.0);
            s
        }
    };
    let (_, report) = integrate_legacy_law(&legacy).in_numerics()?;
    println!("legacy law stalled: {}", report.stalled);
    ctx.say(format!("turning point: {}", report.x_turn.map_or("none".into(), |x| format!("{x}"))));
    ctx.say(format!(
        "stall at t = {}, x = {}",
        report.t_stall.map_or("-".into(), |t| format!("{t:.6}")),
        report.x_stall.map_or("-".into(), |x| format!("{x:.12}"))
    ));
    ctx.say(format!("min |xdot|/|xdot0| = {:.3e}", report.min_speed_ratio));
    ctx.say(format!("gap ratios toward the turning point: {:?}", report.gap_ratios));
    if let Some(n) = &report.integration_note {
        ctx.say(format!("integration: {n}"));
    }

    // the velocity law from the same start, over a span long enough to cross
    let mut v = legacy.clone();
    v.law = Law::Velocity;
    v.t_span = (legacy.t_span.0, legacy.t_span.0 + 8.0);
    match run_scenario(&v) {
        Ok(run) => {
            let last = run.samples.last().map(|s| s.x).unwrap_or(f64::NAN);
            let crossed = report
                .x_turn
                .map(|xt| (last - xt) * (last - v.x_start) > 0.0 && (last - v.x_start).abs() > (xt - v.x_start).abs());
            println!(
                "velocity law: x({}) = {last:.6}, min |xdot| = {:.4e}, crossed turning point: {}",
                v.t_span.1,
                run.summary.min_speed,
                crossed.map_or("-".into(), |c| c.to_string())
            );
        }
        Err(e) => println!("velocity law: {e}"),
    }
    Ok(true)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum CellStatus {
    Pass,
    Fail,
    ConfigError,
    NumericalError,
}

impl CellStatus {
    fn name(self) -> &'static str {
        match self {
            CellStatus::Pass => "pass",
            CellStatus::Fail => "fail",
            CellStatus::ConfigError => "config-error",
            CellStatus::NumericalError => "numerical-error",
        }
    }
}

const SWEEP_HEADER: &str = "a,b,energy,law,status,energy_drift,bohm_gap,momentum_drift,min_speed,x_min,x_max,note";

fn sci(v: f64) -> String {
    format!("{v:.16e}")
}

fn sweep_cell(doc: &ConfigDocument, tol_scale: f64, a: f64, b: f64, e: f64) -> (CellStatus, String) {
    let mut d = doc.clone();
    d.quantum.a = a;
    d.quantum.b = b;
    d.physics.energy = e;
    let prefix = format!("{},{},{},{}", sci(a), sci(b), sci(e), d.run.law);
    let s = match d.scenario(tol_scale) {
        Ok(s) => s,
        Err(err) => return (CellStatus::ConfigError, format!("{prefix},config-error,,,,,,,{}", clean(&err))),
    };
    match run_scenario(&s) {
        Ok(run) => {
            let inv = Invariants::measure(&s, &run.samples, run.summary.reference_energy);
            let quantum = s.law != Law::Legacy;
            let pass = !quantum || (inv.within(CONSERVATION_TOL * tol_scale) && run.summary.no_node_ok);
            let status = if pass { CellStatus::Pass } else { CellStatus::Fail };
            let note = run.summary.stall.as_ref().map_or(String::new(), |st| format!("stalled={}", st.stalled));
            let row = format!(
                "{prefix},{},{},{},{},{},{},{},{note}",
                status.name(),
                sci(inv.energy),
                sci(inv.bohm),
                inv.momentum.map_or(String::new(), sci),
                sci(run.summary.min_speed),
                sci(run.summary.x_range.0),
                sci(run.summary.x_range.1),
            );
            (status, row)
        }
        Err(err) => (CellStatus::NumericalError, format!("{prefix},numerical-error,,,,,,,{}", clean(&anyhow!(err)))),
    }
}

fn clean(e: &anyhow::Error) -> String {
    format!("{e:#}").replace([',', '\n', '\r'], ";")
}

pub fn sweep(ctx: &Ctx, config: &Path, a: &[f64], b: &[f64], energy: &[f64], output: Option<&Path>) -> Outcome {
    let doc = ConfigDocument::from_path(config).in_config()?;
    doc.scenario(ctx.tol_scale).in_config()?;
    let cells: Vec<(f64, f64, f64)> =
        a.iter().flat_map(|&x| b.iter().flat_map(move |&y| energy.iter().map(move |&e| (x, y, e)))).collect();
    // rows come back in grid order whatever the scheduling
    let rows: Vec<(CellStatus, String)> =
        cells.par_iter().map(|&(x, y, e)| sweep_cell(&doc, ctx.tol_scale, x, y, e)).collect();
    let mut w = open_sink(output)?;
    writeln!(w, "{SWEEP_HEADER}").in_config()?;
    for (_, row) in &rows {
        writeln!(w, "{row}").in_config()?;
    }
    w.flush().in_config()?;
    let count = |st| rows.iter().filter(|(s, _)| *s == st).count();
    let (pass, fail, cfg, num) = (
        count(CellStatus::Pass),
        count(CellStatus::Fail),
        count(CellStatus::ConfigError),
        count(CellStatus::NumericalError),
    );
    let line =
        format!("sweep: {} cells, {pass} pass, {fail} fail, {cfg} config errors, {num} numerical errors", rows.len());
    if !ctx.quiet {
        if writes_stdout(output) {
            eprintln!("{line}");
        } else {
            println!("{line}");
        }
    }
    if num > 0 {
        return Err(Failure::Numerical(anyhow!("{num} sweep cell(s) failed numerically")));
    }
    if cfg > 0 {
        return Err(Failure::config(format!("{cfg} sweep cell(s) had invalid parameters")));
    }
    Ok(fail == 0)
}
