//! End-to-end analysis of one trial table on a chosen scale.

use crate::dataio::{apply_shift_log, validate_design, DesignSummary, TrialTable};
use crate::error::{Error, Result};
use crate::evidence::{compare_from_draws, BfReport, EvidenceConfig};
use crate::gibbs::{diagnose, gibbs_fit, Diagnostics, McmcConfig, PosteriorDraws};
use crate::model::PriorConfig;
use crate::summary::{back_transform, summarize_effects, BackTransform, EffectSummary};

/// Scale the model is fitted on.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AnalysisScale {
    /// Raw milliseconds.
    Normal,
    /// `ln(rt - shift_ms)`.
    ShiftedLognormal { shift_ms: f64 },
}

impl std::fmt::Display for AnalysisScale {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            AnalysisScale::Normal => write!(f, "normal"),
            AnalysisScale::ShiftedLognormal { .. } => write!(f, "shifted-lognormal"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub prior: PriorConfig,
    pub mcmc: McmcConfig,
    pub evidence: EvidenceConfig,
    /// Credible-interval level.
    pub level: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            prior: PriorConfig::default(),
            mcmc: McmcConfig::default(),
            evidence: EvidenceConfig::default(),
            level: 0.95,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    /// The table the model was fitted to.
    pub table: TrialTable,
    pub design: DesignSummary,
    pub draws: PosteriorDraws,
    pub diagnostics: Diagnostics,
    pub effects: EffectSummary,
    pub report: BfReport,
    /// Present only for the shifted-lognormal analysis.
    pub back_transform: Option<BackTransform>,
}

/// Validates, optionally transforms, fits the unconstrained model, summarizes
/// effects and compares the four models. Both scales run the same steps apart
/// from the transform and the back-transform.
pub fn run_pipeline(raw: &TrialTable, scale: AnalysisScale, cfg: &PipelineConfig) -> Result<PipelineOutput> {
    cfg.prior.validate()?;
    cfg.mcmc.validate()?;
    if raw.scale.is_log() {
        return Err(Error::Scale(format!("pipeline expects raw_ms input, table is {}", raw.scale)));
    }
    let table = match scale {
        AnalysisScale::Normal => raw.clone(),
        AnalysisScale::ShiftedLognormal { shift_ms } => apply_shift_log(raw, shift_ms)?,
    };
    let design = validate_design(&table)?;
    let draws = gibbs_fit(&table, &cfg.prior, &cfg.mcmc)?;
    let diagnostics = diagnose(&draws)?;
    let effects = summarize_effects(&draws, &table, cfg.level)?;
    let report = compare_from_draws(&table, &draws, &cfg.prior, &cfg.evidence)?;
    let back_transform = match scale {
        AnalysisScale::Normal => None,
        AnalysisScale::ShiftedLognormal { .. } => Some(back_transform(effects.nu_mean, &table)?),
    };
    Ok(PipelineOutput { table, design, draws, diagnostics, effects, report, back_transform })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelKind;
    use crate::simulate::{generate, SimScale, SimSpec};

    fn small() -> PipelineConfig {
        PipelineConfig {
            mcmc: McmcConfig { n_chains: 2, n_iterations: 700, burn_in: 200, thin: 1, seed: 3 },
            evidence: EvidenceConfig { n_mc: 10_000, n_prior_draws: 100_000, ..EvidenceConfig::default() },
            ..PipelineConfig::default()
        }
    }

    fn data() -> TrialTable {
        generate(&SimSpec {
            true_model: ModelKind::PositiveEffects,
            n_subjects: 8,
            trials_per_cell: 20,
            mu: 6.2,
            sigma: 0.3,
            nu: 0.15,
            eta: 0.05,
            intercept_sd: None,
            scale: SimScale::ShiftedLognormal { shift_ms: 200.0 },
            seed: 11,
        })
        .unwrap()
        .table
    }

    #[test]
    fn raw_path_has_no_back_transform() {
        let out = run_pipeline(&data(), AnalysisScale::Normal, &small()).unwrap();
        assert!(out.back_transform.is_none());
        assert!(!out.table.scale.is_log());
        let out = run_pipeline(&data(), AnalysisScale::ShiftedLognormal { shift_ms: 200.0 }, &small()).unwrap();
        let b = out.back_transform.unwrap();
        assert_eq!(b.multiplicative_factor, out.effects.nu_mean.exp());
        assert!(out.table.scale.is_log());
    }

    #[test]
    fn rejects_transformed_input() {
        let t = apply_shift_log(&data(), 200.0).unwrap();
        assert!(matches!(run_pipeline(&t, AnalysisScale::Normal, &small()), Err(Error::Scale(_))));
    }
}
