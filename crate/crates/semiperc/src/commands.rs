//! The five experiments. Each validates its configuration, computes, writes
//! its output file and returns the rows it wrote.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use semiperc_core::replica::{
    free_energy, learning_curve_exponent, spinodal_scan_with, trace_branch, LearningCurveFit, RootScan,
    SpinodalReport, SweepDirection, SweepGrid, TerminationKind,
};
use semiperc_core::{Dataset, LearningSetup};

use crate::config::{Command, Config};
use crate::csvout::{fmt_f64, fmt_opt, Meta, Table};
use crate::dataio;
use crate::ensemble::{fine_tune_protocol, EnsembleRow};
use crate::error::{HarnessError, Result};

/// Everything a command needs besides its own section.
pub struct Context<'a> {
    pub config: &'a Config,
    pub command: Command,
    pub out: PathBuf,
    pub meta: Meta,
}

impl<'a> Context<'a> {
    pub fn new(config: &'a Config, command: Command) -> Result<Self> {
        config.validate(command)?;
        let out = config.out.clone().unwrap_or_else(|| default_out(command));
        let meta = Meta { command: command.as_str().into(), config_hash: config.hash(command)?, seed: config.seed };
        Ok(Self { config, command, out, meta })
    }

    fn pool(&self) -> Result<rayon::ThreadPool> {
        rayon::ThreadPoolBuilder::new()
            .num_threads(self.config.workers)
            .build()
            .map_err(|e| HarnessError::Compute(format!("thread pool: {e}")))
    }
}

pub fn default_out(command: Command) -> PathBuf {
    match command {
        Command::Datagen => PathBuf::from("dataset.bin"),
        c => PathBuf::from(format!("{}.csv", c.as_str())),
    }
}

/// What a command produced.
#[derive(Debug, Clone, PartialEq)]
pub enum Outcome {
    PhaseDiagram(Vec<PhaseRow>),
    AmpEnsemble(Vec<EnsembleRow>),
    Spinodal(Vec<SpinodalRow>),
    LearningCurve(LearningCurveFit),
    Datagen(dataio::Header),
}

pub fn run(config: &Config, command: Command) -> Result<Outcome> {
    let ctx = Context::new(config, command)?;
    match command {
        Command::PhaseDiagram => cmd_phase_diagram(&ctx).map(Outcome::PhaseDiagram),
        Command::AmpEnsemble => cmd_amp_ensemble(&ctx).map(Outcome::AmpEnsemble),
        Command::Spinodal => cmd_spinodal(&ctx).map(Outcome::Spinodal),
        Command::LearningCurve => cmd_learning_curve(&ctx).map(Outcome::LearningCurve),
        Command::Datagen => cmd_datagen(&ctx).map(Outcome::Datagen),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowKind {
    Ascending,
    Descending,
    /// Every root of the single equation at one `beta`.
    Roots,
}

impl RowKind {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Ascending => "ascending",
            Self::Descending => "descending",
            Self::Roots => "roots",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Ok,
    /// An `alpha = 0` point, where `q = 0` solves the equation at every `beta`.
    Unsupervised,
    Failed,
}

impl Status {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Ok => "ok",
            Self::Unsupervised => "unsupervised",
            Self::Failed => "failed",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseRow {
    pub h: f64,
    pub g: f64,
    pub alpha: f64,
    pub beta: f64,
    /// Segment index along a sweep, or root index ascending in `q`.
    pub branch: usize,
    pub q: Option<f64>,
    pub m: Option<f64>,
    pub epsilon: Option<f64>,
    pub free_energy: Option<f64>,
    pub stable: Option<bool>,
    pub kind: RowKind,
    pub status: Status,
}

pub const PHASE_HEADER: [&str; 12] =
    ["h", "g", "alpha", "beta", "branch", "q", "m", "epsilon", "free_energy", "stable", "sweep_direction", "status"];

fn beta_max_for(ctx: &Context, setup: &LearningSetup, scan: Option<&RootScan>) -> Result<f64> {
    let p = &ctx.config.phase_diagram;
    if let Some(b) = p.beta_max {
        return Ok(b);
    }
    let Some(scan) = scan else { return Ok(p.beta_fallback) };
    let sp = &ctx.config.spinodal;
    let rep = spinodal_scan_with(setup, (p.beta_min, sp.beta_max.max(p.beta_min * 2.0)), scan, &sp.scan_config(&ctx.config.numerics))?;
    Ok(match rep.beta_sp_upper.or(rep.beta_sp_lower) {
        Some(edge) => (p.beta_span * edge).max(p.beta_min * 2.0),
        None => p.beta_fallback,
    })
}

fn phase_rows_for(ctx: &Context, h: f64, scan: Option<&RootScan>) -> Result<Vec<PhaseRow>> {
    let p = &ctx.config.phase_diagram;
    let integ = ctx.config.numerics.integrator();
    let solver = ctx.config.numerics.solver();
    let g = p.g.unwrap_or(h);
    let mut rows = Vec::new();
    for &alpha in &p.alpha {
        let setup = LearningSetup::new(g, h, alpha, 0.0)?;
        let scan = scan.filter(|_| setup.bayes_optimal());
        let beta_max = beta_max_for(ctx, &setup, scan)?;
        let betas = SweepGrid::Geometric.points((p.beta_min, beta_max), p.beta_points)?;
        let ok = if alpha == 0.0 { Status::Unsupervised } else { Status::Ok };
        for (dir, kind) in [(SweepDirection::Ascending, RowKind::Ascending), (SweepDirection::Descending, RowKind::Descending)] {
            let branch = trace_branch(&setup, &betas, dir, &integ, &solver, scan)?;
            let mut part: Vec<PhaseRow> = branch
                .points
                .iter()
                .map(|pt| PhaseRow {
                    h,
                    g,
                    alpha,
                    beta: pt.beta,
                    branch: pt.segment,
                    q: Some(pt.q),
                    m: Some(pt.m),
                    epsilon: Some(pt.epsilon),
                    free_energy: Some(pt.free_energy),
                    stable: scan.map(|_| pt.stable),
                    kind,
                    status: ok,
                })
                .collect();
            part.extend(branch.terminations.iter().filter(|t| t.kind == TerminationKind::Failed).map(|t| PhaseRow {
                h,
                g,
                alpha,
                beta: t.beta,
                branch: 0,
                q: None,
                m: None,
                epsilon: None,
                free_energy: None,
                stable: None,
                kind,
                status: Status::Failed,
            }));
            part.sort_by(|a, b| a.beta.total_cmp(&b.beta));
            rows.extend(part);
        }
        if let (Some(scan), true) = (scan, p.roots) {
            for &beta in &betas {
                let s = setup.with_beta(beta);
                let roots = scan.roots(&s, &integ)?;
                let fs: Vec<f64> = roots.iter().map(|r| free_energy(r, &s, &integ)).collect::<Result<_, _>>()?;
                let best = fs.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).map(|(i, _)| i);
                rows.extend(roots.iter().zip(&fs).enumerate().map(|(i, (r, &f))| PhaseRow {
                    h,
                    g,
                    alpha,
                    beta,
                    branch: i,
                    q: Some(r.q),
                    m: Some(r.m),
                    epsilon: Some(r.epsilon),
                    free_energy: Some(f),
                    stable: Some(Some(i) == best),
                    kind: RowKind::Roots,
                    status: ok,
                }));
            }
        }
    }
    Ok(rows)
}

pub fn cmd_phase_diagram(ctx: &Context) -> Result<Vec<PhaseRow>> {
    let p = &ctx.config.phase_diagram;
    let numerics = &ctx.config.numerics;
    let integ = numerics.integrator();
    let per_h: Vec<Result<Vec<PhaseRow>>> = ctx.pool()?.install(|| {
        p.h.par_iter()
            .map(|&h| {
                let bayes_any = p.g.map_or(true, |g| g == h);
                let scan = if bayes_any { Some(RootScan::new(h, &integ, numerics.root_grid)?) } else { None };
                phase_rows_for(ctx, h, scan.as_ref())
            })
            .collect()
    });
    let rows: Vec<PhaseRow> = per_h.into_iter().collect::<Result<Vec<_>>>()?.into_iter().flatten().collect();
    let mut t = Table::create(&ctx.out, &ctx.meta, &PHASE_HEADER)?;
    for r in &rows {
        t.row([
            fmt_f64(r.h),
            fmt_f64(r.g),
            fmt_f64(r.alpha),
            fmt_f64(r.beta),
            r.branch.to_string(),
            fmt_opt(r.q),
            fmt_opt(r.m),
            fmt_opt(r.epsilon),
            fmt_opt(r.free_energy),
            r.stable.map(|s| s.to_string()).unwrap_or_default(),
            r.kind.as_str().to_string(),
            r.status.as_str().to_string(),
        ])?;
    }
    t.finish()?;
    Ok(rows)
}

pub const ENSEMBLE_HEADER: [&str; 6] =
    ["beta", "alpha", "mean_epsilon", "stderr_epsilon", "diverged_count", "n_samples"];
pub const TRAJECTORY_HEADER: [&str; 6] = ["alpha", "iteration", "q_emp", "rel_change", "kappa", "b"];

pub fn cmd_amp_ensemble(ctx: &Context) -> Result<Vec<EnsembleRow>> {
    let a = &ctx.config.amp_ensemble;
    let schedule = a.schedule();
    let protocol = a.protocol();
    let pool = ctx.pool()?;
    let mut rows = Vec::new();
    let mut trajectory = Vec::new();
    for (i, &beta) in a.beta.iter().enumerate() {
        let trace = i == 0 && a.trajectory.is_some();
        let out = pool.install(|| {
            fine_tune_protocol(a.n, a.g, a.h, beta, &schedule, a.n_samples, &protocol, ctx.config.seed, trace)
        })?;
        rows.extend(out.rows);
        if trace {
            trajectory = out.trajectory;
        }
    }
    let mut t = Table::create(&ctx.out, &ctx.meta, &ENSEMBLE_HEADER)?;
    for r in &rows {
        t.row([
            fmt_f64(r.beta),
            fmt_f64(r.alpha),
            fmt_f64(r.mean_epsilon),
            fmt_f64(r.stderr_epsilon),
            r.diverged_count.to_string(),
            r.n_samples.to_string(),
        ])?;
    }
    t.finish()?;
    if let Some(path) = &a.trajectory {
        write_trajectory(path, &ctx.meta, &trajectory)?;
    }
    Ok(rows)
}

fn write_trajectory(path: &Path, meta: &Meta, rows: &[(f64, semiperc_core::amp::TrajectoryRow)]) -> Result<()> {
    let mut t = Table::create(path, meta, &TRAJECTORY_HEADER)?;
    for (k, (alpha, r)) in rows.iter().enumerate() {
        t.row([
            fmt_f64(*alpha),
            (k + 1).to_string(),
            fmt_f64(r.q_emp),
            fmt_f64(r.rel_change),
            fmt_f64(r.kappa),
            fmt_f64(r.b_scalar),
        ])?;
    }
    t.finish()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpinodalRow {
    pub h: f64,
    pub alpha: f64,
    pub report: SpinodalReport,
}

pub const SPINODAL_HEADER: [&str; 6] =
    ["h", "alpha", "beta_sp_lower", "beta_sp_upper", "n_solutions_inside", "n_solutions_above"];

pub fn cmd_spinodal(ctx: &Context) -> Result<Vec<SpinodalRow>> {
    let s = &ctx.config.spinodal;
    let numerics = &ctx.config.numerics;
    let integ = numerics.integrator();
    let scan_cfg = s.scan_config(numerics);
    let per_h: Vec<Result<Vec<SpinodalRow>>> = ctx.pool()?.install(|| {
        s.h.par_iter()
            .map(|&h| {
                let scan = RootScan::new(h, &integ, numerics.root_grid)?;
                s.alpha
                    .iter()
                    .map(|&alpha| {
                        let setup = LearningSetup::bayes(h, alpha, 0.0)?;
                        let report = spinodal_scan_with(&setup, (s.beta_min, s.beta_max), &scan, &scan_cfg)?;
                        Ok(SpinodalRow { h, alpha, report })
                    })
                    .collect()
            })
            .collect()
    });
    let rows: Vec<SpinodalRow> = per_h.into_iter().collect::<Result<Vec<_>>>()?.into_iter().flatten().collect();
    let mut t = Table::create(&ctx.out, &ctx.meta, &SPINODAL_HEADER)?;
    for r in &rows {
        t.row([
            fmt_f64(r.h),
            fmt_f64(r.alpha),
            fmt_opt(r.report.beta_sp_lower),
            fmt_opt(r.report.beta_sp_upper),
            r.report.n_solutions_inside.to_string(),
            r.report.n_solutions_above.map(|n| n.to_string()).unwrap_or_default(),
        ])?;
    }
    t.finish()?;
    Ok(rows)
}

pub const LEARNING_CURVE_HEADER: [&str; 4] = ["beta", "q", "epsilon", "one_minus_q"];

pub fn cmd_learning_curve(ctx: &Context) -> Result<LearningCurveFit> {
    let l = &ctx.config.learning_curve;
    let integ = ctx.config.numerics.integrator();
    let scan = RootScan::new(l.h, &integ, ctx.config.numerics.root_grid)?;
    let setup = LearningSetup::bayes(l.h, l.alpha, 0.0)?;
    let betas = SweepGrid::Geometric.points((l.beta_min, l.beta_max), l.points)?;
    let fit = learning_curve_exponent(&setup, &betas, &integ, &scan)?;
    let mut t = Table::create(&ctx.out, &ctx.meta, &LEARNING_CURVE_HEADER)?;
    for &(beta, q, eps) in &fit.points {
        t.row([fmt_f64(beta), fmt_f64(q), fmt_f64(eps), fmt_f64(1.0 - q)])?;
    }
    t.finish()?;
    Ok(fit)
}

pub fn cmd_datagen(ctx: &Context) -> Result<dataio::Header> {
    let d = &ctx.config.datagen;
    let (l, u) = d.counts();
    let data = Dataset::generate(d.n, d.g, l, u, ctx.config.seed)?;
    dataio::write(&ctx.out, &data)?;
    Ok(dataio::Header::of(&data))
}
