//! Marginal likelihoods, Bayes factors and the model tournament.
//!
//! For fixed g the coefficients, the flat intercept and `sigma2` (Jeffreys
//! prior) integrate out in closed form:
//!
//! ```text
//! log m(y | g) = -(n-1)/2 log(2 pi) - 1/2 log|Z'Z + D| - 1/2 sum_k p_k log g_k
//!                + log Gamma((n-1)/2) - (n-1)/2 log(S/2)
//! S = y'y - y'Z (Z'Z + D)^{-1} Z'y
//! ```
//!
//! with `p_k` the size of g-group `k`. The remaining integral over g is a
//! plain Monte-Carlo average over prior draws. The positive-effects model is
//! handled by the encompassing-prior ratio of posterior to prior
//! probabilities that every `delta_i > 0`.

use rayon::prelude::*;
use statrs::function::gamma::ln_gamma;

use crate::dataio::{Scale, TrialTable};
use crate::error::{Error, Result};
use crate::gibbs::{gibbs_fit, McmcConfig, PosteriorDraws};
use crate::kv::KvFile;
use crate::model::{build_design, sample_g, BlockLabel, DesignMatrix, ModelKind, PriorConfig};
use crate::normal_eq::BlockSystem;
use crate::rng::{stream, Purpose};
use crate::summary::posterior_model_prob;

const SHARD: usize = 4096;
const PRIOR_SHARD: usize = 65_536;
const Z95: f64 = 1.959_963_984_540_054;

/// Which of the nested designs `d` is.
pub fn design_kind(d: &DesignMatrix) -> ModelKind {
    if d.block(BlockLabel::EffectDev).is_some() {
        ModelKind::Unconstrained
    } else if d.block(BlockLabel::CommonEffect).is_some() {
        ModelKind::CommonEffect
    } else {
        ModelKind::Null
    }
}

/// Exact log marginal likelihood given one g per g-group (in `d.g_groups()` order).
pub fn log_marginal_given_g(d: &DesignMatrix, g: &[f64]) -> Result<f64> {
    log_marginal_given_g_sys(&BlockSystem::from_design(d)?, g)
}

pub(crate) fn log_marginal_given_g_sys(sys: &BlockSystem, g: &[f64]) -> Result<f64> {
    let f = sys.factor(g)?;
    let s = f.residual_quadratic();
    if !(s > 0.0) {
        return Err(Error::Numeric("residual quadratic form is zero; data fit exactly".into()));
    }
    let a = 0.5 * (sys.n_obs as f64 - 1.0);
    let log_g: f64 = sys.group_sizes().iter().zip(g).map(|(k, gk)| *k as f64 * gk.ln()).sum();
    Ok(-a * (2.0 * std::f64::consts::PI).ln() - 0.5 * f.log_det() - 0.5 * log_g + ln_gamma(a) - a * (0.5 * s).ln())
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogMarginal {
    pub model: ModelKind,
    pub logml: f64,
    /// Delta-method standard error of `logml`.
    pub mc_se: f64,
    pub n_mc: usize,
}

/// Streaming log-sum-exp of `w` and `w^2`.
#[derive(Debug, Clone, Copy)]
struct LseAcc {
    max: f64,
    s1: f64,
    s2: f64,
    n: usize,
}

impl LseAcc {
    fn new() -> Self {
        LseAcc { max: f64::NEG_INFINITY, s1: 0.0, s2: 0.0, n: 0 }
    }

    fn push(&mut self, l: f64) {
        self.n += 1;
        if l == f64::NEG_INFINITY {
            return;
        }
        if l > self.max {
            let r = (self.max - l).exp();
            self.s1 = self.s1 * r + 1.0;
            self.s2 = self.s2 * r * r + 1.0;
            self.max = l;
        } else {
            let e = (l - self.max).exp();
            self.s1 += e;
            self.s2 += e * e;
        }
    }

    fn merge(mut self, o: LseAcc) -> LseAcc {
        if o.max == f64::NEG_INFINITY {
            self.n += o.n;
            return self;
        }
        if o.max > self.max {
            return o.merge(self);
        }
        let r = (o.max - self.max).exp();
        self.s1 += o.s1 * r;
        self.s2 += o.s2 * r * r;
        self.n += o.n;
        self
    }
}

/// Monte-Carlo log marginal likelihood, averaging over g drawn from the priors.
pub fn log_marginal(d: &DesignMatrix, p: &PriorConfig, n_mc: usize, seed: u64) -> Result<LogMarginal> {
    if n_mc < 10_000 {
        return Err(Error::Domain(format!("n_mc must be at least 10^4, got {n_mc}")));
    }
    p.validate()?;
    let sys = BlockSystem::from_design(d)?;
    let kind = design_kind(d);
    let purpose = match kind {
        ModelKind::Null => Purpose::MarginalNull,
        ModelKind::CommonEffect => Purpose::MarginalCommon,
        _ => Purpose::MarginalUnconstrained,
    };
    let scales: Vec<f64> = sys.g_groups().iter().map(|&grp| p.scale(grp)).collect();
    let n_shards = n_mc.div_ceil(SHARD);
    let shards: Vec<LseAcc> = (0..n_shards)
        .into_par_iter()
        .map(|s| {
            let mut rng = stream(seed, purpose, s as u64);
            let mut acc = LseAcc::new();
            let mut g = vec![0.0; scales.len()];
            for _ in 0..SHARD.min(n_mc - s * SHARD) {
                for (gk, r) in g.iter_mut().zip(&scales) {
                    *gk = sample_g(*r, &mut rng);
                }
                let l = log_marginal_given_g_sys(&sys, &g)?;
                if l.is_nan() {
                    return Err(Error::Numeric(format!("log marginal is NaN at g = {g:?}")));
                }
                acc.push(l);
            }
            Ok(acc)
        })
        .collect::<Result<_>>()?;
    let acc = shards.into_iter().fold(LseAcc::new(), LseAcc::merge);
    if acc.max == f64::NEG_INFINITY || !acc.max.is_finite() {
        return Err(Error::Numeric("every Monte-Carlo integrand was zero or infinite".into()));
    }
    let n = acc.n as f64;
    let mean = acc.s1 / n;
    let var = ((acc.s2 / n - mean * mean) * n / (n - 1.0)).max(0.0);
    Ok(LogMarginal { model: kind, logml: acc.max + mean.ln(), mc_se: (var / n).sqrt() / mean, n_mc: acc.n })
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncompassingBf {
    pub bf_plus_u: f64,
    pub posterior_fraction: f64,
    pub prior_fraction: f64,
    /// Approximate 95% Monte-Carlo interval for `bf_plus_u`.
    pub interval: (f64, f64),
    pub n_posterior: usize,
    pub n_prior: usize,
}

/// Proportion of prior simulations `g_nu, g_delta -> nu -> delta_1..N` with every `delta_i > 0`.
///
/// The event is scale free, so simulation runs with `sigma = 1`.
pub fn prior_positive_fraction(p: &PriorConfig, n_subjects: usize, n_draws: usize, seed: u64) -> (usize, usize) {
    use rand::Rng;
    use rand_distr::StandardNormal;
    let n_shards = n_draws.div_ceil(PRIOR_SHARD);
    let hits: usize = (0..n_shards)
        .into_par_iter()
        .map(|s| {
            let mut rng = stream(seed, Purpose::PriorFraction, s as u64);
            let mut hits = 0usize;
            for _ in 0..PRIOR_SHARD.min(n_draws - s * PRIOR_SHARD) {
                let g_nu = sample_g(p.r_nu, &mut rng);
                let g_delta = sample_g(p.r_delta, &mut rng);
                let nu = g_nu.sqrt() * rng.sample::<f64, _>(StandardNormal);
                let sd = g_delta.sqrt();
                if (0..n_subjects).all(|_| nu + sd * rng.sample::<f64, _>(StandardNormal) > 0.0) {
                    hits += 1;
                }
            }
            hits
        })
        .sum();
    (hits, n_draws)
}

/// Bayes factor of the positive-effects model against the unconstrained model.
pub fn encompassing_bf(
    draws: &PosteriorDraws,
    p: &PriorConfig,
    n_subjects: usize,
    n_prior_draws: usize,
    seed: u64,
) -> Result<EncompassingBf> {
    if n_prior_draws < 100_000 {
        return Err(Error::Domain(format!("need at least 10^5 prior draws, got {n_prior_draws}")));
    }
    if draws.is_empty() {
        return Err(Error::Domain("no posterior draws".into()));
    }
    if draws.n_subjects() != n_subjects {
        return Err(Error::Domain(format!(
            "draws have {} subjects, expected {n_subjects}",
            draws.n_subjects()
        )));
    }
    let n_post = draws.len();
    let post_hits = draws.draws.iter().filter(|d| d.delta.iter().all(|v| *v > 0.0)).count();
    let (prior_hits, n_prior) = prior_positive_fraction(p, n_subjects, n_prior_draws, seed);
    if prior_hits == 0 {
        return Err(Error::Unstable(format!(
            "no prior draw out of {n_prior} had all {n_subjects} effects positive; increase the prior draw count"
        )));
    }
    let post = post_hits as f64 / n_post as f64;
    let prior = prior_hits as f64 / n_prior as f64;
    let bf = post / prior;
    let prior_var = (1.0 - prior) / (n_prior as f64 * prior);
    let interval = if post_hits == 0 {
        (0.0, 3.0 / n_post as f64 / prior)
    } else {
        let se = ((1.0 - post) / (n_post as f64 * post) + prior_var).sqrt();
        (bf * (-Z95 * se).exp(), bf * (Z95 * se).exp())
    };
    Ok(EncompassingBf { bf_plus_u: bf, posterior_fraction: post, prior_fraction: prior, interval, n_posterior: n_post, n_prior })
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvidenceConfig {
    pub n_mc: usize,
    pub n_prior_draws: usize,
    pub seed: u64,
    /// Prior odds of the positive-effects model against the unconstrained one.
    pub prior_odds: f64,
}

impl Default for EvidenceConfig {
    fn default() -> Self {
        EvidenceConfig { n_mc: 100_000, n_prior_draws: 1_000_000, seed: 20211, prior_odds: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BfReport {
    pub scale: Scale,
    pub n_subjects: usize,
    pub n_trials: usize,
    pub unconstrained: LogMarginal,
    pub common: LogMarginal,
    pub null: LogMarginal,
    pub encompassing: EncompassingBf,
    pub bf_plus_u: f64,
    pub posterior_fraction: f64,
    pub prior_fraction: f64,
    pub posterior_prob_plus: f64,
    pub prior_odds: f64,
    /// Natural-log Bayes factors.
    pub log_bf_u1: f64,
    pub log_bf_u0: f64,
    pub winner: ModelKind,
}

const LN10: f64 = std::f64::consts::LN_10;

impl BfReport {
    pub fn log10_bf_u1(&self) -> f64 {
        self.log_bf_u1 / LN10
    }

    pub fn log10_bf_u0(&self) -> f64 {
        self.log_bf_u0 / LN10
    }

    pub fn bf_u1(&self) -> f64 {
        self.log_bf_u1.exp()
    }

    pub fn bf_u0(&self) -> f64 {
        self.log_bf_u0.exp()
    }

    /// Log marginal likelihood of any of the four models; `M_+` is
    /// `log m(M_u) + log bf_plus_u`.
    pub fn logml(&self, m: ModelKind) -> f64 {
        match m {
            ModelKind::Unconstrained => self.unconstrained.logml,
            ModelKind::PositiveEffects => self.unconstrained.logml + self.bf_plus_u.ln(),
            ModelKind::CommonEffect => self.common.logml,
            ModelKind::Null => self.null.logml,
        }
    }

    /// `log BF(a, b) = log m(a) - log m(b)`.
    pub fn log_bf(&self, a: ModelKind, b: ModelKind) -> f64 {
        self.logml(a) - self.logml(b)
    }

    pub fn to_kv(&self) -> KvFile {
        let mut kv = KvFile::new();
        kv.set("scale", self.scale);
        kv.set("n_subjects", self.n_subjects);
        kv.set("n_trials", self.n_trials);
        for lm in [&self.unconstrained, &self.common, &self.null] {
            let key = match lm.model {
                ModelKind::Unconstrained => "u",
                ModelKind::CommonEffect => "1",
                _ => "0",
            };
            kv.set(&format!("logml_{key}"), lm.logml);
            kv.set(&format!("logml_{key}_mc_se"), lm.mc_se);
            kv.set(&format!("logml_{key}_n_mc"), lm.n_mc);
        }
        kv.set("bf_plus_u", self.bf_plus_u);
        kv.set("bf_plus_u_lo95", self.encompassing.interval.0);
        kv.set("bf_plus_u_hi95", self.encompassing.interval.1);
        kv.set("log_bf_plus_u", self.bf_plus_u.ln());
        kv.set("log10_bf_plus_u", self.bf_plus_u.log10());
        kv.set("posterior_fraction", self.posterior_fraction);
        kv.set("prior_fraction", self.prior_fraction);
        kv.set("n_posterior_draws", self.encompassing.n_posterior);
        kv.set("n_prior_draws", self.encompassing.n_prior);
        kv.set("prior_odds", self.prior_odds);
        kv.set("posterior_prob_plus", self.posterior_prob_plus);
        kv.set("log_bf_u1", self.log_bf_u1);
        kv.set("log10_bf_u1", self.log10_bf_u1());
        kv.set("log_bf_u0", self.log_bf_u0);
        kv.set("log10_bf_u0", self.log10_bf_u0());
        kv.set("winner", self.winner);
        kv
    }

    /// Human-readable report.
    pub fn to_text(&self) -> String {
        let first = if self.bf_plus_u > 1.0 { ModelKind::PositiveEffects } else { ModelKind::Unconstrained };
        let mut s = String::new();
        s.push_str(&format!(
            "Model comparison ({} subjects, {} trials, scale {})\n\n",
            self.n_subjects, self.n_trials, self.scale
        ));
        s.push_str(&format!(
            "M_+ vs M_u: BF = {:.2} (95% MC interval {:.2} to {:.2})\n",
            self.bf_plus_u, self.encompassing.interval.0, self.encompassing.interval.1
        ));
        s.push_str(&format!(
            "  posterior fraction all delta > 0: {:.5}\n  prior fraction all delta > 0:     {:.5}\n",
            self.posterior_fraction, self.prior_fraction
        ));
        s.push_str(&format!(
            "  p(M_+ | data) = {:.2} at prior odds {}\n",
            self.posterior_prob_plus, self.prior_odds
        ));
        s.push_str(&format!(
            "M_u vs M_1: log BF = {:.3}  (log10 {:.3})\n",
            self.log_bf_u1,
            self.log10_bf_u1()
        ));
        s.push_str(&format!(
            "M_u vs M_0: log BF = {:.3}  (log10 {:.3})\n\n",
            self.log_bf_u0,
            self.log10_bf_u0()
        ));
        s.push_str("Log marginal likelihoods (MC standard error):\n");
        for lm in [&self.unconstrained, &self.common, &self.null] {
            s.push_str(&format!("  {}: {:.4} ({:.4}, {} draws)\n", lm.model, lm.logml, lm.mc_se, lm.n_mc));
        }
        s.push_str(&format!(
            "\nTournament: {first} wins M_+ vs M_u; {} vs M_1: log BF {:.3}; vs M_0: log BF {:.3}\nWinner: {}\n",
            first,
            self.log_bf(first, ModelKind::CommonEffect),
            self.log_bf(first, ModelKind::Null),
            self.winner
        ));
        s
    }
}

/// Fits the unconstrained model and assembles the full comparison.
pub fn compare_models(t: &TrialTable, p: &PriorConfig, m: &McmcConfig, ev: &EvidenceConfig) -> Result<BfReport> {
    let draws = gibbs_fit(t, p, m)?;
    compare_from_draws(t, &draws, p, ev)
}

/// Comparison given unconstrained-model draws already fitted to `t`.
pub fn compare_from_draws(t: &TrialTable, draws: &PosteriorDraws, p: &PriorConfig, ev: &EvidenceConfig) -> Result<BfReport> {
    let enc = encompassing_bf(draws, p, t.n_subjects(), ev.n_prior_draws, ev.seed)?;
    let lm = |kind| log_marginal(&build_design(t, kind), p, ev.n_mc, ev.seed);
    let unconstrained = lm(ModelKind::Unconstrained)?;
    let common = lm(ModelKind::CommonEffect)?;
    let null = lm(ModelKind::Null)?;

    let posterior_prob_plus = if enc.bf_plus_u > 0.0 {
        posterior_model_prob(enc.bf_plus_u, ev.prior_odds)?
    } else {
        0.0
    };
    let mut report = BfReport {
        scale: t.scale,
        n_subjects: t.n_subjects(),
        n_trials: t.len(),
        log_bf_u1: unconstrained.logml - common.logml,
        log_bf_u0: unconstrained.logml - null.logml,
        unconstrained,
        common,
        null,
        bf_plus_u: enc.bf_plus_u,
        posterior_fraction: enc.posterior_fraction,
        prior_fraction: enc.prior_fraction,
        encompassing: enc,
        posterior_prob_plus,
        prior_odds: ev.prior_odds,
        winner: ModelKind::Unconstrained,
    };
    report.winner = tournament_winner(&report);
    Ok(report)
}

/// `M_+` vs `M_u` by `bf_plus_u > 1`; that winner then faces `M_1` and `M_0`
/// on marginal likelihood.
pub fn tournament_winner(r: &BfReport) -> ModelKind {
    let first = if r.bf_plus_u > 1.0 { ModelKind::PositiveEffects } else { ModelKind::Unconstrained };
    let mut best = first;
    for m in [ModelKind::CommonEffect, ModelKind::Null] {
        if r.logml(m) > r.logml(best) {
            best = m;
        }
    }
    best
}
