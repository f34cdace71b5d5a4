use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use semiperc::{run, Command, Config, HarnessError, Outcome};

/// Replica theory and message passing for semi-supervised perceptron
/// learning with margins.
#[derive(Parser, Debug)]
#[command(version, about)]
struct Cli {
    /// TOML configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (0 uses every core).
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Output file.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Override any setting, e.g. `--set amp_ensemble.n_samples=10`.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    sets: Vec<String>,
    #[command(subcommand)]
    command: Sub,
}

#[derive(Subcommand, Debug)]
enum Sub {
    /// Branch traces and roots of the order-parameter equations over beta.
    PhaseDiagram(PhaseArgs),
    /// Ensemble of message-passing runs under the pretrain/fine-tune protocol.
    AmpEnsemble(AmpArgs),
    /// Edges of the multi-solution window over an (h, alpha) grid.
    Spinodal(SpinodalArgs),
    /// Log-log slope of the error on the low-error branch.
    LearningCurve(CurveArgs),
    /// Writes a synthetic dataset file.
    Datagen(DatagenArgs),
}

#[derive(Args, Debug)]
struct PhaseArgs {
    #[arg(long, value_delimiter = ',')]
    h: Vec<f64>,
    #[arg(long, value_delimiter = ',')]
    alpha: Vec<f64>,
    #[arg(long)]
    g: Option<f64>,
    #[arg(long)]
    beta_min: Option<f64>,
    #[arg(long)]
    beta_max: Option<f64>,
    #[arg(long)]
    beta_points: Option<usize>,
}

#[derive(Args, Debug)]
struct AmpArgs {
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    g: Option<f64>,
    #[arg(long)]
    h: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    beta: Vec<f64>,
    #[arg(long)]
    alpha_max: Option<f64>,
    #[arg(long)]
    alpha_step: Option<f64>,
    #[arg(long)]
    n_samples: Option<usize>,
    /// Sweeps per fine-tuning stage.
    #[arg(long)]
    max_iter: Option<usize>,
    #[arg(long)]
    pretrain_max_iter: Option<usize>,
    /// `verbatim` or `consistent`.
    #[arg(long)]
    equations: Option<String>,
    /// `synchronous` or `sequential`.
    #[arg(long)]
    order: Option<String>,
    #[arg(long)]
    label_in_field: Option<bool>,
    #[arg(long)]
    damping: Option<f64>,
    /// Also write the iteration log of the first sample.
    #[arg(long)]
    trajectory: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SpinodalArgs {
    #[arg(long, value_delimiter = ',')]
    h: Vec<f64>,
    #[arg(long, value_delimiter = ',')]
    alpha: Vec<f64>,
    #[arg(long)]
    beta_min: Option<f64>,
    #[arg(long)]
    beta_max: Option<f64>,
}

#[derive(Args, Debug)]
struct CurveArgs {
    #[arg(long)]
    h: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    beta_min: Option<f64>,
    #[arg(long)]
    beta_max: Option<f64>,
    #[arg(long)]
    points: Option<usize>,
}

#[derive(Args, Debug)]
struct DatagenArgs {
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    g: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
}

/// Collects typed flags as `section.key=value` overrides.
struct Sets<'a> {
    section: &'a str,
    out: Vec<String>,
}

impl Sets<'_> {
    fn one<T: ToString>(&mut self, key: &str, v: &Option<T>) -> &mut Self {
        if let Some(v) = v {
            self.out.push(format!("{}.{key}={}", self.section, v.to_string()));
        }
        self
    }

    fn text(&mut self, key: &str, v: &Option<String>) -> &mut Self {
        if let Some(v) = v {
            self.out.push(format!("{}.{key}=\"{v}\"", self.section));
        }
        self
    }

    fn path(&mut self, key: &str, v: &Option<PathBuf>) -> &mut Self {
        let s = v.as_ref().map(|p| p.display().to_string());
        self.text(key, &s)
    }

    fn list(&mut self, key: &str, v: &[f64]) -> &mut Self {
        if !v.is_empty() {
            let items: Vec<String> = v.iter().map(|x| format!("{x:?}")).collect();
            self.out.push(format!("{}.{key}=[{}]", self.section, items.join(",")));
        }
        self
    }
}

fn float(v: &Option<f64>) -> Option<String> {
    v.map(|x| format!("{x:?}"))
}

fn overrides(sub: &Sub) -> (Command, Vec<String>) {
    let (command, section) = match sub {
        Sub::PhaseDiagram(_) => (Command::PhaseDiagram, "phase_diagram"),
        Sub::AmpEnsemble(_) => (Command::AmpEnsemble, "amp_ensemble"),
        Sub::Spinodal(_) => (Command::Spinodal, "spinodal"),
        Sub::LearningCurve(_) => (Command::LearningCurve, "learning_curve"),
        Sub::Datagen(_) => (Command::Datagen, "datagen"),
    };
    let mut s = Sets { section, out: Vec::new() };
    match sub {
        Sub::PhaseDiagram(a) => {
            s.list("h", &a.h).list("alpha", &a.alpha).one("g", &float(&a.g)).one("beta_min", &float(&a.beta_min));
            s.one("beta_max", &float(&a.beta_max)).one("beta_points", &a.beta_points);
        }
        Sub::AmpEnsemble(a) => {
            s.one("n", &a.n).one("g", &float(&a.g)).one("h", &float(&a.h)).list("beta", &a.beta);
            s.one("alpha_max", &float(&a.alpha_max)).one("alpha_step", &float(&a.alpha_step));
            s.one("n_samples", &a.n_samples).one("max_iter", &a.max_iter).one("pretrain_max_iter", &a.pretrain_max_iter);
            s.text("equations", &a.equations).text("order", &a.order).one("label_in_field", &a.label_in_field);
            s.one("damping", &float(&a.damping)).path("trajectory", &a.trajectory);
        }
        Sub::Spinodal(a) => {
            s.list("h", &a.h).list("alpha", &a.alpha);
            s.one("beta_min", &float(&a.beta_min)).one("beta_max", &float(&a.beta_max));
        }
        Sub::LearningCurve(a) => {
            s.one("h", &float(&a.h)).one("alpha", &float(&a.alpha)).one("points", &a.points);
            s.one("beta_min", &float(&a.beta_min)).one("beta_max", &float(&a.beta_max));
        }
        Sub::Datagen(a) => {
            s.one("n", &a.n).one("g", &float(&a.g)).one("alpha", &float(&a.alpha)).one("beta", &float(&a.beta));
        }
    }
    (command, s.out)
}

fn execute(cli: Cli) -> Result<(), HarnessError> {
    let (command, flag_sets) = overrides(&cli.command);
    let mut sets = cli.sets.clone();
    sets.extend(flag_sets);
    let mut config = Config::load(cli.config.as_deref(), &sets)?;
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(w) = cli.workers {
        config.workers = w;
    }
    if cli.out.is_some() {
        config.out = cli.out.clone();
    }
    let start = Instant::now();
    let outcome = run(&config, command)?;
    let out = config.out.clone().unwrap_or_else(|| semiperc::commands::default_out(command));
    match &outcome {
        Outcome::PhaseDiagram(rows) => println!("{} rows", rows.len()),
        Outcome::AmpEnsemble(rows) => println!("{} rows", rows.len()),
        Outcome::Spinodal(rows) => {
            for r in rows {
                println!(
                    "h={} alpha={} lower={:?} upper={:?}",
                    r.h, r.alpha, r.report.beta_sp_lower, r.report.beta_sp_upper
                );
            }
        }
        Outcome::LearningCurve(fit) => println!(
            "slope(ln eps vs ln beta)={} slope(ln(1-q) vs ln beta)={} rms={}",
            fit.slope, fit.slope_one_minus_q, fit.rms_residual
        ),
        Outcome::Datagen(h) => println!("N={} L={} U={} g={} seed={}", h.n, h.l, h.u, h.g, h.seed),
    }
    eprintln!("{} -> {} in {:.2?}", command.as_str(), out.display(), start.elapsed());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
