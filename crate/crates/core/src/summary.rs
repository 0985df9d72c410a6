//! Effect estimates, credible intervals, shrinkage and back-transforms.

use std::path::Path;

use crate::dataio::{observed_effects_by_subject, Scale, TrialTable};
use crate::error::{Error, Result};
use crate::gibbs::{quantile_sorted, PosteriorDraws};
use crate::kv::KvFile;

#[derive(Debug, Clone, PartialEq)]
pub struct SubjectEffect {
    pub subject: String,
    pub observed_effect: f64,
    pub posterior_mean_delta: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    /// Set when the posterior mean falls outside the central interval.
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Shrinkage {
    pub observed_range: (f64, f64),
    pub estimated_range: (f64, f64),
    /// `var(posterior means) / var(observed effects)`.
    pub variance_ratio: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EffectSummary {
    /// Sorted ascending by observed effect.
    pub subjects: Vec<SubjectEffect>,
    pub nu_mean: f64,
    pub nu_ci: (f64, f64),
    pub level: f64,
    pub scale: Scale,
    pub shrinkage: Shrinkage,
}

fn sample_var(x: &[f64]) -> f64 {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n - 1.0)
}

fn range(x: &[f64]) -> (f64, f64) {
    x.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(*v), hi.max(*v)))
}

/// Posterior mean and equal-tailed interval.
fn mean_and_interval(mut x: Vec<f64>, level: f64) -> (f64, f64, f64) {
    let mean = x.iter().sum::<f64>() / x.len() as f64;
    x.sort_by(f64::total_cmp);
    let tail = 0.5 * (1.0 - level);
    (mean, quantile_sorted(&x, tail), quantile_sorted(&x, 1.0 - tail))
}

pub fn summarize_effects(draws: &PosteriorDraws, t: &TrialTable, level: f64) -> Result<EffectSummary> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::Domain(format!("credible level must be in (0, 1), got {level}")));
    }
    if draws.is_empty() {
        return Err(Error::Domain("no posterior draws".into()));
    }
    if draws.subjects != t.subjects {
        return Err(Error::Domain("draws and table list different subjects".into()));
    }
    let observed = observed_effects_by_subject(t)?;
    let mut subjects: Vec<SubjectEffect> = (0..t.n_subjects())
        .map(|i| {
            let (mean, lo, hi) = mean_and_interval(draws.pooled(|d| d.delta[i]), level);
            SubjectEffect {
                subject: t.subjects[i].clone(),
                observed_effect: observed[i],
                posterior_mean_delta: mean,
                ci_low: lo,
                ci_high: hi,
                flagged: !(lo <= mean && mean <= hi),
            }
        })
        .collect();
    subjects.sort_by(|a, b| a.observed_effect.total_cmp(&b.observed_effect));

    let (nu_mean, nu_lo, nu_hi) = mean_and_interval(draws.pooled(|d| d.nu), level);
    let means: Vec<f64> = subjects.iter().map(|s| s.posterior_mean_delta).collect();
    let obs: Vec<f64> = subjects.iter().map(|s| s.observed_effect).collect();
    let variance_ratio = if obs.len() > 1 { sample_var(&means) / sample_var(&obs) } else { f64::NAN };
    Ok(EffectSummary {
        subjects,
        nu_mean,
        nu_ci: (nu_lo, nu_hi),
        level,
        scale: t.scale,
        shrinkage: Shrinkage { observed_range: range(&obs), estimated_range: range(&means), variance_ratio },
    })
}

impl EffectSummary {
    /// One row per subject: `subject, observed, mean, lo, hi`.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["subject", "observed", "mean", "lo", "hi"])?;
        for s in &self.subjects {
            w.write_record([
                s.subject.as_str(),
                &s.observed_effect.to_string(),
                &s.posterior_mean_delta.to_string(),
                &s.ci_low.to_string(),
                &s.ci_high.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn scalars(&self) -> KvFile {
        let mut kv = KvFile::new();
        kv.set("scale", self.scale);
        kv.set("level", self.level);
        kv.set("n_subjects", self.subjects.len());
        kv.set("nu_mean", self.nu_mean);
        kv.set("nu_ci_low", self.nu_ci.0);
        kv.set("nu_ci_high", self.nu_ci.1);
        kv.set("observed_min", self.shrinkage.observed_range.0);
        kv.set("observed_max", self.shrinkage.observed_range.1);
        kv.set("estimated_min", self.shrinkage.estimated_range.0);
        kv.set("estimated_max", self.shrinkage.estimated_range.1);
        kv.set("variance_ratio", self.shrinkage.variance_ratio);
        kv.set("flagged_subjects", self.subjects.iter().filter(|s| s.flagged).count());
        kv
    }
}

/// Multiplicative reading of a log-scale common effect.
#[derive(Debug, Clone, PartialEq)]
pub struct BackTransform {
    /// `exp(nu_mean)`.
    pub multiplicative_factor: f64,
    pub percent_increase: f64,
    /// `(factor - 1) * baseline_ms`; an approximation, not an exact ms effect.
    pub approx_ms: f64,
    /// Mean shifted baseline RT, `mean(rt_ms - shift)` over condition-0 trials.
    pub baseline_ms: f64,
}

impl BackTransform {
    pub fn to_kv(&self) -> KvFile {
        let mut kv = KvFile::new();
        kv.set("multiplicative_factor", self.multiplicative_factor);
        kv.set("percent_increase", self.percent_increase);
        kv.set("approx_ms", self.approx_ms);
        kv.set("baseline_ms", self.baseline_ms);
        kv
    }
}

pub fn back_transform(nu_mean: f64, t: &TrialTable) -> Result<BackTransform> {
    if !t.scale.is_log() {
        return Err(Error::Scale(format!("back-transform needs shift-log data, table is {}", t.scale)));
    }
    let base: Vec<f64> = t.rows.iter().filter(|r| r.condition == 0).map(|r| r.rt.exp()).collect();
    if base.is_empty() {
        return Err(Error::Design("no baseline-condition trials".into()));
    }
    let baseline_ms = base.iter().sum::<f64>() / base.len() as f64;
    let factor = nu_mean.exp();
    Ok(BackTransform {
        multiplicative_factor: factor,
        percent_increase: 100.0 * (factor - 1.0),
        approx_ms: (factor - 1.0) * baseline_ms,
        baseline_ms,
    })
}

/// Posterior probability of the first model from its Bayes factor and prior odds.
pub fn posterior_model_prob(bf: f64, prior_odds: f64) -> Result<f64> {
    if !(bf > 0.0 && bf.is_finite()) || !(prior_odds > 0.0 && prior_odds.is_finite()) {
        return Err(Error::Domain(format!("Bayes factor and prior odds must be positive, got {bf} and {prior_odds}")));
    }
    let post_odds = bf * prior_odds;
    Ok(post_odds / (1.0 + post_odds))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::apply_shift_log;
    use crate::gibbs::Draw;

    fn round2(x: f64) -> f64 {
        (x * 100.0).round() / 100.0
    }

    #[test]
    fn posterior_probabilities() {
        assert_eq!(round2(posterior_model_prob(7.19, 1.0).unwrap()), 0.88);
        assert_eq!(round2(posterior_model_prob(4.17, 1.0).unwrap()), 0.81);
        assert_eq!(posterior_model_prob(1.0, 1.0).unwrap(), 0.5);
        assert!(posterior_model_prob(0.0, 1.0).is_err());
        assert!(posterior_model_prob(2.0, -1.0).is_err());
    }

    fn log_table() -> TrialTable {
        let t = TrialTable::from_triples(
            [("a", 0, 700.0), ("a", 1, 800.0), ("b", 0, 500.0), ("b", 1, 560.0)],
            ["c", "i"],
        )
        .unwrap();
        apply_shift_log(&t, 200.0).unwrap()
    }

    #[test]
    fn back_transform_values() {
        let t = log_table();
        let b = back_transform(0.15, &t).unwrap();
        assert_eq!(round2(b.multiplicative_factor), 1.16);
        assert_eq!(b.percent_increase.round(), 16.0);
        assert!((b.baseline_ms - 400.0).abs() < 1e-9);
        assert!((b.percent_increase - 100.0 * (b.multiplicative_factor - 1.0)).abs() < 1e-12);

        let b = back_transform(0.08, &t).unwrap();
        assert!(b.multiplicative_factor >= 1.08 && b.multiplicative_factor <= 1.09);

        let b = back_transform(0.0, &t).unwrap();
        assert_eq!((b.multiplicative_factor, b.percent_increase, b.approx_ms), (1.0, 0.0, 0.0));
    }

    #[test]
    fn back_transform_needs_log_scale() {
        let t = TrialTable::from_triples([("a", 0, 700.0), ("a", 1, 800.0)], ["c", "i"]).unwrap();
        assert!(matches!(back_transform(0.1, &t), Err(Error::Scale(_))));
    }

    fn constant_draws(t: &TrialTable, c: f64) -> PosteriorDraws {
        let n = t.n_subjects();
        PosteriorDraws {
            subjects: t.subjects.clone(),
            draws: (0..50)
                .map(|k| Draw {
                    chain: k % 2,
                    index: k / 2,
                    mu: 0.0,
                    nu: c,
                    sigma2: 1.0,
                    g_alpha: 1.0,
                    g_nu: 1.0,
                    g_delta: 1.0,
                    eta2: 1.0,
                    alpha: vec![0.0; n],
                    theta: vec![0.0; n],
                    delta: vec![c; n],
                })
                .collect(),
        }
    }

    #[test]
    fn degenerate_draws() {
        let t = TrialTable::from_triples(
            [("a", 0, 400.0), ("a", 1, 500.0), ("b", 0, 450.0), ("b", 1, 470.0), ("c", 0, 300.0), ("c", 1, 290.0)],
            ["x", "y"],
        )
        .unwrap();
        let s = summarize_effects(&constant_draws(&t, 7.5), &t, 0.95).unwrap();
        for e in &s.subjects {
            assert_eq!((e.posterior_mean_delta, e.ci_low, e.ci_high), (7.5, 7.5, 7.5));
            assert!(!e.flagged);
        }
        assert_eq!(s.shrinkage.variance_ratio, 0.0);
        let order: Vec<_> = s.subjects.iter().map(|e| e.subject.as_str()).collect();
        assert_eq!(order, vec!["c", "b", "a"]);
        assert_eq!(s.shrinkage.observed_range, (-10.0, 100.0));
        assert!(summarize_effects(&constant_draws(&t, 1.0), &t, 1.0).is_err());
        assert!(summarize_effects(&constant_draws(&t, 1.0), &t, 0.0).is_err());
    }
}
