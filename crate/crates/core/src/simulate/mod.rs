//! Synthetic trial tables, brute-force oracles and model-recovery studies.

pub mod oracle;

use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::dataio::TrialTable;
use crate::error::{Error, Result};
use crate::gibbs::{sample_truncated_normal, McmcConfig};
use crate::kv::KvFile;
use crate::model::{ModelKind, PriorConfig};
use crate::pipeline::{run_pipeline, AnalysisScale, PipelineConfig};
use crate::rng::{child_seed, stream, Purpose};

pub use oracle::{grid_oracle_logml, posterior_moments_oracle, GridSpec, Moments, PosteriorMoments};

/// Scale on which the linear model generates values.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SimScale {
    RawNormal,
    /// The linear model generates `ln(rt - shift_ms)`.
    ShiftedLognormal { shift_ms: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimSpec {
    pub true_model: ModelKind,
    pub n_subjects: usize,
    pub trials_per_cell: usize,
    /// Grand mean on the model scale (ms, or log-ms for the shifted lognormal).
    pub mu: f64,
    /// Trial-level SD on the model scale.
    pub sigma: f64,
    pub nu: f64,
    pub eta: f64,
    /// SD of the subject intercepts; `None` means 100 ms raw, 0.25 on the log scale.
    pub intercept_sd: Option<f64>,
    pub scale: SimScale,
    pub seed: u64,
}

impl SimSpec {
    pub fn intercept_sd(&self) -> f64 {
        self.intercept_sd.unwrap_or(match self.scale {
            SimScale::RawNormal => 100.0,
            SimScale::ShiftedLognormal { .. } => 0.25,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Domain(m));
        if self.n_subjects == 0 || self.trials_per_cell == 0 {
            return bad("need at least one subject and one trial per cell".into());
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return bad(format!("sigma must be positive, got {}", self.sigma));
        }
        if !(self.intercept_sd() >= 0.0 && self.intercept_sd().is_finite()) {
            return bad(format!("intercept SD must be nonnegative, got {}", self.intercept_sd()));
        }
        if !(self.eta >= 0.0 && self.eta.is_finite()) || !self.mu.is_finite() || !self.nu.is_finite() {
            return bad("mu, nu and eta must be finite with eta >= 0".into());
        }
        if let SimScale::ShiftedLognormal { shift_ms } = self.scale {
            if !(shift_ms > 0.0 && shift_ms.is_finite()) {
                return bad(format!("shift must be positive, got {shift_ms}"));
            }
        }
        match self.true_model {
            ModelKind::CommonEffect | ModelKind::Null if self.eta != 0.0 => {
                bad(format!("{} requires eta = 0", self.true_model))
            }
            ModelKind::Null if self.nu != 0.0 => bad("M_0 requires nu = 0".into()),
            ModelKind::PositiveEffects if self.eta == 0.0 && self.nu <= 0.0 => {
                bad("M_+ with eta = 0 requires nu > 0".into())
            }
            _ => Ok(()),
        }
    }

    pub fn to_kv(&self) -> KvFile {
        let mut kv = KvFile::new();
        kv.set("true_model", self.true_model);
        kv.set("n_subjects", self.n_subjects);
        kv.set("trials_per_cell", self.trials_per_cell);
        kv.set("mu", self.mu);
        kv.set("sigma", self.sigma);
        kv.set("nu", self.nu);
        kv.set("eta", self.eta);
        kv.set("intercept_sd", self.intercept_sd());
        match self.scale {
            SimScale::RawNormal => kv.set("scale", "normal"),
            SimScale::ShiftedLognormal { shift_ms } => {
                kv.set("scale", "shifted-lognormal");
                kv.set("shift_ms", shift_ms);
            }
        }
        kv.set("seed", self.seed);
        kv
    }

    pub fn from_kv(kv: &KvFile) -> Result<Self> {
        const KEYS: [&str; 11] = [
            "true_model", "n_subjects", "trials_per_cell", "mu", "sigma", "nu", "eta", "intercept_sd", "scale",
            "shift_ms", "seed",
        ];
        if let Some(k) = kv.keys().find(|k| !KEYS.contains(k)) {
            return Err(Error::Config(format!("unknown simulation key `{k}`")));
        }
        let need = |k: &str| kv.get(k).ok_or_else(|| Error::Config(format!("missing simulation key `{k}`")));
        let real = |k: &str| kv.get_real(k)?.ok_or_else(|| Error::Config(format!("missing simulation key `{k}`")));
        let count = |k: &str| kv.get_parsed::<usize>(k)?.ok_or_else(|| Error::Config(format!("missing simulation key `{k}`")));
        let true_model = ModelKind::from_label(need("true_model")?)
            .ok_or_else(|| Error::Config(format!("unknown model `{}`", kv.get("true_model").unwrap())))?;
        let scale = match kv.get("scale").unwrap_or("normal") {
            "normal" => SimScale::RawNormal,
            "shifted-lognormal" => SimScale::ShiftedLognormal { shift_ms: kv.get_real("shift_ms")?.unwrap_or(200.0) },
            other => return Err(Error::Config(format!("unknown scale `{other}`"))),
        };
        let s = SimSpec {
            true_model,
            n_subjects: count("n_subjects")?,
            trials_per_cell: count("trials_per_cell")?,
            mu: real("mu")?,
            sigma: real("sigma")?,
            nu: kv.get_real("nu")?.unwrap_or(0.0),
            eta: kv.get_real("eta")?.unwrap_or(0.0),
            intercept_sd: kv.get_real("intercept_sd")?,
            scale,
            seed: kv.get_parsed::<u64>("seed")?.unwrap_or(1),
        };
        s.validate()?;
        Ok(s)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_kv(&KvFile::read(path)?)
    }
}

/// A generated table with the model-scale quantities behind it.
#[derive(Debug, Clone, PartialEq)]
pub struct Simulated {
    pub table: TrialTable,
    pub alpha: Vec<f64>,
    pub delta: Vec<f64>,
    /// Linear-model realizations in table row order (log scale for the
    /// shifted lognormal).
    pub latent: Vec<f64>,
}

/// Generates a table from `s`. Subjects are labelled `s1..sN`; rows run
/// subject by subject, condition 0 before condition 1.
pub fn generate(s: &SimSpec) -> Result<Simulated> {
    s.validate()?;
    let mut rng = stream(s.seed, Purpose::Simulation, 0);
    let normal = |rng: &mut crate::rng::StreamRng| rng.sample::<f64, _>(StandardNormal);
    let isd = s.intercept_sd();
    let mut alpha = Vec::with_capacity(s.n_subjects);
    let mut delta = Vec::with_capacity(s.n_subjects);
    for _ in 0..s.n_subjects {
        alpha.push(isd * normal(&mut rng));
        delta.push(match s.true_model {
            ModelKind::Unconstrained => s.nu + s.eta * normal(&mut rng),
            ModelKind::PositiveEffects if s.eta == 0.0 => s.nu,
            ModelKind::PositiveEffects => sample_truncated_normal(s.nu, s.eta, 0.0, &mut rng),
            ModelKind::CommonEffect => s.nu,
            ModelKind::Null => 0.0,
        });
    }
    let mut triples = Vec::with_capacity(2 * s.n_subjects * s.trials_per_cell);
    let mut latent = Vec::with_capacity(triples.capacity());
    for i in 0..s.n_subjects {
        let label = format!("s{}", i + 1);
        for x in 0..2u8 {
            for _ in 0..s.trials_per_cell {
                let v = s.mu + alpha[i] + f64::from(x) * delta[i] + s.sigma * normal(&mut rng);
                latent.push(v);
                let rt = match s.scale {
                    SimScale::RawNormal => v,
                    SimScale::ShiftedLognormal { shift_ms } => v.exp() + shift_ms,
                };
                triples.push((label.clone(), x, rt));
            }
        }
    }
    let table = TrialTable::from_triples(triples, ["baseline", "effect"])?;
    Ok(Simulated { table, alpha, delta, latent })
}

/// Settings shared by every replicate of a recovery study.
#[derive(Debug, Clone, PartialEq)]
pub struct RecoveryConfig {
    pub specs: Vec<SimSpec>,
    pub repetitions: usize,
    pub pipelines: Vec<AnalysisScale>,
    pub pipeline: PipelineConfig,
}

impl RecoveryConfig {
    /// Both pipelines, with the given fitting settings.
    pub fn both_pipelines(specs: Vec<SimSpec>, repetitions: usize, shift_ms: f64, prior: PriorConfig, mcmc: McmcConfig) -> Self {
        let pipeline = PipelineConfig { prior, mcmc, ..PipelineConfig::default() };
        RecoveryConfig {
            specs,
            repetitions,
            pipelines: vec![AnalysisScale::Normal, AnalysisScale::ShiftedLognormal { shift_ms }],
            pipeline,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecoveryRow {
    pub spec: usize,
    pub replicate: usize,
    pub seed: u64,
    pub true_model: ModelKind,
    pub pipeline: AnalysisScale,
    pub selected: ModelKind,
    pub bf_plus_u: f64,
    pub log10_bf_u1: f64,
    pub log10_bf_u0: f64,
    pub nu_mean: f64,
    pub variance_ratio: f64,
}

/// For every spec and replicate: generate with a replicate seed, then run
/// each pipeline on the same table. Rows are ordered by spec, replicate and
/// pipeline.
pub fn recovery_study(cfg: &RecoveryConfig) -> Result<Vec<RecoveryRow>> {
    for s in &cfg.specs {
        s.validate()?;
    }
    let jobs: Vec<(usize, usize)> =
        (0..cfg.specs.len()).flat_map(|s| (0..cfg.repetitions).map(move |r| (s, r))).collect();
    let per: Vec<Vec<RecoveryRow>> = jobs
        .par_iter()
        .map(|&(si, rep)| {
            let spec = SimSpec { seed: child_seed(cfg.specs[si].seed, rep as u64), ..cfg.specs[si].clone() };
            let sim = generate(&spec)?;
            let mut pc = cfg.pipeline.clone();
            pc.mcmc.seed = child_seed(spec.seed, 1);
            pc.evidence.seed = child_seed(spec.seed, 2);
            cfg.pipelines
                .iter()
                .map(|&scale| {
                    let out = run_pipeline(&sim.table, scale, &pc)?;
                    Ok(RecoveryRow {
                        spec: si,
                        replicate: rep,
                        seed: spec.seed,
                        true_model: spec.true_model,
                        pipeline: scale,
                        selected: out.report.winner,
                        bf_plus_u: out.report.bf_plus_u,
                        log10_bf_u1: out.report.log10_bf_u1(),
                        log10_bf_u0: out.report.log10_bf_u0(),
                        nu_mean: out.effects.nu_mean,
                        variance_ratio: out.effects.shrinkage.variance_ratio,
                    })
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    Ok(per.into_iter().flatten().collect())
}

pub fn write_recovery_csv(rows: &[RecoveryRow], path: impl AsRef<Path>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "spec", "replicate", "seed", "true_model", "pipeline", "selected", "bf_plus_u", "log10_bf_u1",
        "log10_bf_u0", "nu_mean", "variance_ratio",
    ])?;
    for r in rows {
        w.write_record([
            r.spec.to_string(),
            r.replicate.to_string(),
            r.seed.to_string(),
            r.true_model.to_string(),
            r.pipeline.to_string(),
            r.selected.to_string(),
            r.bf_plus_u.to_string(),
            r.log10_bf_u1.to_string(),
            r.log10_bf_u0.to_string(),
            r.nu_mean.to_string(),
            r.variance_ratio.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
