//! Command-line front end.
//!
//! Exit codes: 0 success, 1 usage/config/other error, 2 schema or row error,
//! 3 design error, 4 numeric failure, 5 unstable estimate.

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::dataio::{apply_shift_log, load_trials, validate_design, Schema, TrialTable};
use crate::error::Result;
use crate::evidence::{compare_from_draws, EvidenceConfig};
use crate::gibbs::{diagnose, gibbs_fit, McmcConfig, PosteriorDraws};
use crate::kv::{parse_real, KvFile};
use crate::model::PriorConfig;
use crate::pipeline::{AnalysisScale, PipelineConfig};
use crate::simulate::{generate, recovery_study, write_recovery_csv, RecoveryConfig, SimSpec};
use crate::summary::{back_transform, summarize_effects};

#[derive(Debug, Parser)]
#[command(name = "indiff", version, about = "Individual differences in response-time effects")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit the unconstrained model; write draws, diagnostics and effect summaries.
    Fit(FitArgs),
    /// Fit and compare M_u, M_+, M_1 and M_0.
    Compare(CompareArgs),
    /// Write the shift-log transformed table.
    Transform(TransformArgs),
    /// Generate a synthetic table from a simulation spec file.
    Simulate(SimulateArgs),
    /// Model-recovery study over one or more simulation specs.
    Recover(RecoverArgs),
    /// Rebuild effect summaries from saved draws.
    Report(ReportArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ScaleArg {
    Normal,
    ShiftedLognormal,
}

#[derive(Debug, Clone, Args)]
pub struct DataArgs {
    /// Delimited trial table (comma, tab or semicolon).
    #[arg(long)]
    pub input: PathBuf,
    /// Label of the baseline condition; effects are other minus baseline.
    #[arg(long)]
    pub baseline: String,
    #[arg(long, default_value = "subject")]
    pub subject_col: String,
    #[arg(long, default_value = "condition")]
    pub condition_col: String,
    #[arg(long, default_value = "rt")]
    pub rt_col: String,
    /// Drop trials with rt below this value (ms).
    #[arg(long)]
    pub min_rt: Option<f64>,
    /// Drop trials with rt above this value (ms).
    #[arg(long)]
    pub max_rt: Option<f64>,
}

impl DataArgs {
    fn load(&self) -> Result<TrialTable> {
        let schema = Schema {
            subject: self.subject_col.clone(),
            condition: self.condition_col.clone(),
            rt: self.rt_col.clone(),
            baseline: self.baseline.clone(),
            min_rt: self.min_rt,
            max_rt: self.max_rt,
        };
        load_trials(&self.input, &schema)
    }
}

fn real(s: &str) -> std::result::Result<f64, String> {
    parse_real(s).ok_or_else(|| format!("`{s}` is not a number or fraction"))
}

#[derive(Debug, Clone, Args)]
pub struct PriorArgs {
    /// Key-value prior file; flags below override it.
    #[arg(long)]
    pub prior_config: Option<PathBuf>,
    #[arg(long, value_parser = real)]
    pub r_alpha: Option<f64>,
    #[arg(long, value_parser = real)]
    pub r_nu: Option<f64>,
    #[arg(long, value_parser = real)]
    pub r_delta: Option<f64>,
}

impl PriorArgs {
    fn resolve(&self) -> Result<PriorConfig> {
        let mut p = match &self.prior_config {
            Some(path) => PriorConfig::read(path)?,
            None => PriorConfig::default(),
        };
        p.r_alpha = self.r_alpha.unwrap_or(p.r_alpha);
        p.r_nu = self.r_nu.unwrap_or(p.r_nu);
        p.r_delta = self.r_delta.unwrap_or(p.r_delta);
        p.validate()?;
        Ok(p)
    }
}

#[derive(Debug, Clone, Args)]
pub struct McmcArgs {
    #[arg(long, default_value_t = 4)]
    pub chains: usize,
    #[arg(long, default_value_t = 5000)]
    pub iters: usize,
    #[arg(long, default_value_t = 1000)]
    pub burnin: usize,
    #[arg(long, default_value_t = 1)]
    pub thin: usize,
    /// Sampler seed; evidence computations use `seed + 1`.
    #[arg(long, default_value_t = 20210)]
    pub seed: u64,
}

impl McmcArgs {
    fn config(&self) -> McmcConfig {
        McmcConfig { n_chains: self.chains, n_iterations: self.iters, burn_in: self.burnin, thin: self.thin, seed: self.seed }
    }
}

#[derive(Debug, Clone, Args)]
pub struct ScaleArgs {
    #[arg(long, value_enum, default_value_t = ScaleArg::Normal)]
    pub scale: ScaleArg,
    /// Shift (ms) subtracted before the log transform.
    #[arg(long, default_value_t = 200.0)]
    pub shift: f64,
}

impl ScaleArgs {
    fn analysis(&self) -> AnalysisScale {
        match self.scale {
            ScaleArg::Normal => AnalysisScale::Normal,
            ScaleArg::ShiftedLognormal => AnalysisScale::ShiftedLognormal { shift_ms: self.shift },
        }
    }

    fn apply(&self, raw: &TrialTable) -> Result<TrialTable> {
        match self.analysis() {
            AnalysisScale::Normal => Ok(raw.clone()),
            AnalysisScale::ShiftedLognormal { shift_ms } => apply_shift_log(raw, shift_ms),
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct EvidenceArgs {
    /// Monte-Carlo draws per marginal likelihood.
    #[arg(long, default_value_t = 100_000)]
    pub mc_draws: usize,
    /// Prior simulations for the positive-effects Bayes factor.
    #[arg(long, default_value_t = 1_000_000)]
    pub prior_draws: usize,
    /// Prior odds of M_+ against M_u.
    #[arg(long, default_value_t = 1.0)]
    pub prior_odds: f64,
}

#[derive(Debug, Clone, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub outdir: PathBuf,
    #[command(flatten)]
    pub scale: ScaleArgs,
    #[command(flatten)]
    pub prior: PriorArgs,
    #[command(flatten)]
    pub mcmc: McmcArgs,
    /// Credible-interval level.
    #[arg(long, default_value_t = 0.95)]
    pub level: f64,
}

#[derive(Debug, Clone, Args)]
pub struct CompareArgs {
    #[command(flatten)]
    pub fit: FitArgs,
    #[command(flatten)]
    pub evidence: EvidenceArgs,
}

#[derive(Debug, Clone, Args)]
pub struct TransformArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub outdir: PathBuf,
    #[arg(long, default_value_t = 200.0)]
    pub shift: f64,
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    /// Key-value simulation spec.
    #[arg(long)]
    pub spec: PathBuf,
    #[arg(long)]
    pub outdir: PathBuf,
    /// Overrides the spec's seed.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Args)]
pub struct RecoverArgs {
    /// Simulation spec files; repeat for several generators.
    #[arg(long, required = true)]
    pub spec: Vec<PathBuf>,
    #[arg(long, default_value_t = 100)]
    pub reps: usize,
    #[arg(long)]
    pub outdir: PathBuf,
    /// Shift for the shift-log pipeline.
    #[arg(long, default_value_t = 200.0)]
    pub shift: f64,
    /// Run only the raw-normal pipeline.
    #[arg(long)]
    pub normal_only: bool,
    #[command(flatten)]
    pub prior: PriorArgs,
    #[command(flatten)]
    pub mcmc: McmcArgs,
    #[command(flatten)]
    pub evidence: EvidenceArgs,
}

#[derive(Debug, Clone, Args)]
pub struct ReportArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Draws file written by `fit` or `compare`.
    #[arg(long)]
    pub draws: PathBuf,
    #[arg(long)]
    pub outdir: PathBuf,
    #[command(flatten)]
    pub scale: ScaleArgs,
    #[arg(long, default_value_t = 0.95)]
    pub level: f64,
}

fn outdir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path)?;
    Ok(())
}

fn provenance(command: &str, extra: &[(&str, String)]) -> KvFile {
    let mut kv = KvFile::new();
    kv.set("command", command);
    kv.set("version", env!("CARGO_PKG_VERSION"));
    let now = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    kv.set("timestamp_unix", now);
    for (k, v) in extra {
        kv.set(k, v);
    }
    kv
}

fn fit_provenance(a: &FitArgs, p: &PriorConfig, m: &McmcConfig) -> Vec<(&'static str, String)> {
    let mut v = vec![
        ("input", a.data.input.display().to_string()),
        ("baseline", a.data.baseline.clone()),
        ("scale", a.scale.analysis().to_string()),
        ("shift_ms", a.scale.shift.to_string()),
        ("level", a.level.to_string()),
        ("chains", m.n_chains.to_string()),
        ("iterations", m.n_iterations.to_string()),
        ("burn_in", m.burn_in.to_string()),
        ("thin", m.thin.to_string()),
        ("mcmc_seed", m.seed.to_string()),
    ];
    for (k, val) in [("r_alpha", p.r_alpha), ("r_nu", p.r_nu), ("r_delta", p.r_delta)] {
        v.push((k, val.to_string()));
    }
    v
}

/// Fits and writes the fit artifacts; returns the fitted table and draws.
fn fit_and_write(a: &FitArgs, p: &PriorConfig, m: &McmcConfig) -> Result<(TrialTable, PosteriorDraws)> {
    outdir(&a.outdir)?;
    let raw = a.data.load()?;
    let t = a.scale.apply(&raw)?;
    validate_design(&t)?;
    let draws = gibbs_fit(&t, p, m)?;
    draws.write_csv(a.outdir.join("draws.csv"))?;
    let diag = diagnose(&draws)?;
    diag.write_csv(a.outdir.join("diagnostics.csv"))?;
    if diag.max_rhat() > 1.05 {
        eprintln!("warning: max R-hat {:.3} exceeds 1.05; consider more iterations", diag.max_rhat());
    }
    write_effects(&draws, &t, a.level, a.scale.analysis(), &a.outdir)?;
    Ok((t, draws))
}

fn write_effects(draws: &PosteriorDraws, t: &TrialTable, level: f64, scale: AnalysisScale, dir: &Path) -> Result<()> {
    let s = summarize_effects(draws, t, level)?;
    s.write_csv(dir.join("effects.csv"))?;
    s.scalars().write(dir.join("effects.kv"))?;
    if let AnalysisScale::ShiftedLognormal { .. } = scale {
        back_transform(s.nu_mean, t)?.to_kv().write(dir.join("back_transform.kv"))?;
    }
    Ok(())
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Fit(a) => {
            let (p, m) = (a.prior.resolve()?, a.mcmc.config());
            fit_and_write(&a, &p, &m)?;
            provenance("fit", &fit_provenance(&a, &p, &m)).write(a.outdir.join("provenance.kv"))?;
        }
        Command::Compare(a) => {
            let (p, m) = (a.fit.prior.resolve()?, a.fit.mcmc.config());
            let ev = EvidenceConfig {
                n_mc: a.evidence.mc_draws,
                n_prior_draws: a.evidence.prior_draws,
                seed: m.seed.wrapping_add(1),
                prior_odds: a.evidence.prior_odds,
            };
            let (t, draws) = fit_and_write(&a.fit, &p, &m)?;
            let report = compare_from_draws(&t, &draws, &p, &ev)?;
            std::fs::write(a.fit.outdir.join("bf_report.txt"), report.to_text())?;
            report.to_kv().write(a.fit.outdir.join("bf_report.kv"))?;
            let mut extra = fit_provenance(&a.fit, &p, &m);
            extra.push(("evidence_seed", ev.seed.to_string()));
            extra.push(("mc_draws", ev.n_mc.to_string()));
            extra.push(("prior_draws", ev.n_prior_draws.to_string()));
            extra.push(("prior_odds", ev.prior_odds.to_string()));
            provenance("compare", &extra).write(a.fit.outdir.join("provenance.kv"))?;
            print!("{}", report.to_text());
        }
        Command::Transform(a) => {
            outdir(&a.outdir)?;
            let t = apply_shift_log(&a.data.load()?, a.shift)?;
            t.write_csv(a.outdir.join("trials_shiftlog.csv"))?;
        }
        Command::Simulate(a) => {
            outdir(&a.outdir)?;
            let mut spec = SimSpec::read(&a.spec)?;
            if let Some(seed) = a.seed {
                spec.seed = seed;
            }
            let sim = generate(&spec)?;
            sim.table.write_csv(a.outdir.join("trials.csv"))?;
            let mut w = csv::Writer::from_path(a.outdir.join("truth.csv"))?;
            w.write_record(["subject", "alpha", "delta"])?;
            for (i, s) in sim.table.subjects.iter().enumerate() {
                w.write_record([s.as_str(), &sim.alpha[i].to_string(), &sim.delta[i].to_string()])?;
            }
            w.flush()?;
            spec.to_kv().write(a.outdir.join("spec.kv"))?;
        }
        Command::Recover(a) => {
            outdir(&a.outdir)?;
            let specs = a.spec.iter().map(SimSpec::read).collect::<Result<Vec<_>>>()?;
            let m = a.mcmc.config();
            let mut pipelines = vec![AnalysisScale::Normal];
            if !a.normal_only {
                pipelines.push(AnalysisScale::ShiftedLognormal { shift_ms: a.shift });
            }
            let cfg = RecoveryConfig {
                specs,
                repetitions: a.reps,
                pipelines,
                pipeline: PipelineConfig {
                    prior: a.prior.resolve()?,
                    mcmc: m,
                    evidence: EvidenceConfig {
                        n_mc: a.evidence.mc_draws,
                        n_prior_draws: a.evidence.prior_draws,
                        seed: 0,
                        prior_odds: a.evidence.prior_odds,
                    },
                    level: 0.95,
                },
            };
            let rows = recovery_study(&cfg)?;
            write_recovery_csv(&rows, a.outdir.join("recovery.csv"))?;
            for (si, spec) in cfg.specs.iter().enumerate() {
                for pl in &cfg.pipelines {
                    let mine: Vec<_> = rows.iter().filter(|r| r.spec == si && r.pipeline == *pl).collect();
                    let hit = mine.iter().filter(|r| r.selected == spec.true_model).count();
                    println!("spec {si} ({}), {pl} pipeline: recovered {hit}/{}", spec.true_model, mine.len());
                }
            }
        }
        Command::Report(a) => {
            outdir(&a.outdir)?;
            let t = a.scale.apply(&a.data.load()?)?;
            let draws = PosteriorDraws::read_csv(&a.draws)?;
            write_effects(&draws, &t, a.level, a.scale.analysis(), &a.outdir)?;
        }
    }
    Ok(())
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
