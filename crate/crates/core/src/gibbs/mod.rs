//! Gibbs sampler for the unconstrained model.
//!
//! One sweep:
//! 1. `(mu, alpha, nu, theta)` jointly from `N(A^{-1} Z'y, sigma2 A^{-1})`,
//!    `A = Z'Z + diag(0, 1/g_alpha, 1/g_nu, 1/g_delta)`;
//! 2. `sigma2 ~ InvGamma((n + 2N + 1)/2, (SSR + alpha'alpha/g_alpha + nu^2/g_nu + theta'theta/g_delta)/2)`;
//! 3. `g_k ~ InvGamma((k + 1)/2, (b_k'b_k / sigma2 + r_k^2)/2)` for each
//!    group of `k` coefficients `b_k`.

mod diagnostics;
mod truncnorm;

use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use rayon::prelude::*;

pub use diagnostics::{diagnose, ess_bulk, split_rhat, Diagnostics, ParamDiagnostics};
pub(crate) use diagnostics::quantile_sorted;
pub use truncnorm::sample_truncated_normal;

use crate::dataio::{validate_design, TrialTable};
use crate::error::{Error, Result};
use crate::model::{build_design, GGroup, ModelKind, PriorConfig};
use crate::normal_eq::{BlockSystem, Coefs};
use crate::rng::{stream, Purpose};

#[derive(Debug, Clone, PartialEq)]
pub struct McmcConfig {
    pub n_chains: usize,
    pub n_iterations: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub seed: u64,
}

impl Default for McmcConfig {
    fn default() -> Self {
        McmcConfig { n_chains: 4, n_iterations: 5000, burn_in: 1000, thin: 1, seed: 20210 }
    }
}

impl McmcConfig {
    pub fn retained_per_chain(&self) -> usize {
        self.n_iterations.saturating_sub(self.burn_in) / self.thin.max(1)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_chains < 2 {
            return Err(Error::Domain(format!("need at least 2 chains, got {}", self.n_chains)));
        }
        if self.thin < 1 {
            return Err(Error::Domain("thin must be at least 1".into()));
        }
        if self.burn_in >= self.n_iterations {
            return Err(Error::Domain("burn-in must be smaller than the iteration count".into()));
        }
        if self.retained_per_chain() < 100 {
            return Err(Error::Domain(format!(
                "only {} retained draws per chain; need at least 100",
                self.retained_per_chain()
            )));
        }
        Ok(())
    }
}

/// One retained draw.
#[derive(Debug, Clone, PartialEq)]
pub struct Draw {
    pub chain: usize,
    pub index: usize,
    pub mu: f64,
    pub nu: f64,
    pub sigma2: f64,
    pub g_alpha: f64,
    pub g_nu: f64,
    pub g_delta: f64,
    /// `g_delta * sigma2`.
    pub eta2: f64,
    pub alpha: Vec<f64>,
    pub theta: Vec<f64>,
    /// `nu + theta`.
    pub delta: Vec<f64>,
}

/// Retained draws ordered by `(chain, index)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorDraws {
    pub subjects: Vec<String>,
    pub draws: Vec<Draw>,
}

const SCALARS: [&str; 7] = ["mu", "nu", "sigma2", "g_alpha", "g_nu", "g_delta", "eta2"];

impl PosteriorDraws {
    pub fn n_subjects(&self) -> usize {
        self.subjects.len()
    }

    pub fn n_chains(&self) -> usize {
        self.draws.iter().map(|d| d.chain + 1).max().unwrap_or(0)
    }

    pub fn len(&self) -> usize {
        self.draws.len()
    }

    pub fn is_empty(&self) -> bool {
        self.draws.is_empty()
    }

    fn scalar(d: &Draw, name: &str) -> Option<f64> {
        Some(match name {
            "mu" => d.mu,
            "nu" => d.nu,
            "sigma2" => d.sigma2,
            "g_alpha" => d.g_alpha,
            "g_nu" => d.g_nu,
            "g_delta" => d.g_delta,
            "eta2" => d.eta2,
            _ => return None,
        })
    }

    /// Per-chain sequences of `f(draw)`.
    pub fn chains_of(&self, f: impl Fn(&Draw) -> f64) -> Vec<Vec<f64>> {
        let mut out = vec![Vec::new(); self.n_chains()];
        for d in &self.draws {
            out[d.chain].push(f(d));
        }
        out
    }

    pub fn scalar_chains(&self, name: &str) -> Option<Vec<Vec<f64>>> {
        Self::scalar(self.draws.first()?, name)?;
        Some(self.chains_of(|d| Self::scalar(d, name).unwrap()))
    }

    /// All draws of a scalar, pooled over chains.
    pub fn pooled(&self, f: impl Fn(&Draw) -> f64) -> Vec<f64> {
        self.draws.iter().map(f).collect()
    }

    /// Keeps every `k`-th draw of each chain.
    pub fn thinned(&self, k: usize) -> PosteriorDraws {
        PosteriorDraws {
            subjects: self.subjects.clone(),
            draws: self.draws.iter().filter(|d| d.index % k == 0).cloned().collect(),
        }
    }

    /// Column order: `chain, draw, mu, nu, sigma2, g_alpha, g_nu, g_delta,
    /// eta2`, then `alpha[s]`, `theta[s]`, `delta[s]` for each subject `s`.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header: Vec<String> = vec!["chain".into(), "draw".into()];
        header.extend(SCALARS.iter().map(|s| s.to_string()));
        for v in ["alpha", "theta", "delta"] {
            header.extend(self.subjects.iter().map(|s| format!("{v}[{s}]")));
        }
        w.write_record(&header)?;
        for d in &self.draws {
            let mut rec: Vec<String> = vec![d.chain.to_string(), d.index.to_string()];
            rec.extend(SCALARS.iter().map(|s| Self::scalar(d, s).unwrap().to_string()));
            for v in [&d.alpha, &d.theta, &d.delta] {
                rec.extend(v.iter().map(|x| x.to_string()));
            }
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let mut r = csv::Reader::from_path(path)?;
        let header = r.headers()?.clone();
        let ncol = header.len();
        if ncol < 9 || (ncol - 9) % 3 != 0 {
            return Err(Error::Schema("draws file has an unexpected column count".into()));
        }
        for (i, s) in SCALARS.iter().enumerate() {
            if &header[i + 2] != *s {
                return Err(Error::Schema(format!("draws column {} should be `{s}`", i + 3)));
            }
        }
        let ns = (ncol - 9) / 3;
        let subjects: Vec<String> = (0..ns)
            .map(|i| {
                let h = &header[9 + i];
                h.strip_prefix("alpha[")
                    .and_then(|s| s.strip_suffix(']'))
                    .map(str::to_string)
                    .ok_or_else(|| Error::Schema(format!("bad draws column `{h}`")))
            })
            .collect::<Result<_>>()?;
        let mut draws = Vec::new();
        for (row, rec) in r.records().enumerate() {
            let rec = rec?;
            let num = |c: usize| -> Result<f64> {
                rec[c].parse::<f64>().map_err(|_| Error::Schema(format!("draws row {}: bad value `{}`", row + 1, &rec[c])))
            };
            let int = |c: usize| -> Result<usize> {
                rec[c].parse::<usize>().map_err(|_| Error::Schema(format!("draws row {}: bad index `{}`", row + 1, &rec[c])))
            };
            let vec_at = |start: usize| -> Result<Vec<f64>> { (start..start + ns).map(num).collect() };
            draws.push(Draw {
                chain: int(0)?,
                index: int(1)?,
                mu: num(2)?,
                nu: num(3)?,
                sigma2: num(4)?,
                g_alpha: num(5)?,
                g_nu: num(6)?,
                g_delta: num(7)?,
                eta2: num(8)?,
                alpha: vec_at(9)?,
                theta: vec_at(9 + ns)?,
                delta: vec_at(9 + 2 * ns)?,
            });
        }
        Ok(PosteriorDraws { subjects, draws })
    }
}

/// Test hooks for [`gibbs_fit_with`].
#[derive(Debug, Clone, Default)]
pub struct SamplerHooks {
    /// Holds `(g_alpha, g_nu, g_delta)` fixed instead of sampling them.
    pub freeze_g: Option<[f64; 3]>,
}

/// Posterior draws of the unconstrained model.
pub fn gibbs_fit(t: &TrialTable, p: &PriorConfig, m: &McmcConfig) -> Result<PosteriorDraws> {
    gibbs_fit_with(t, p, m, &SamplerHooks::default())
}

pub fn gibbs_fit_with(t: &TrialTable, p: &PriorConfig, m: &McmcConfig, hooks: &SamplerHooks) -> Result<PosteriorDraws> {
    validate_design(t)?;
    p.validate()?;
    m.validate()?;
    let design = build_design(t, ModelKind::Unconstrained);
    let sys = BlockSystem::from_design(&design)?;
    debug_assert_eq!(sys.g_groups(), &[GGroup::Alpha, GGroup::Nu, GGroup::Delta]);

    let chains: Vec<Vec<Draw>> = (0..m.n_chains)
        .into_par_iter()
        .map(|c| run_chain(&sys, p, m, hooks, c))
        .collect::<Result<_>>()?;
    Ok(PosteriorDraws { subjects: t.subjects.clone(), draws: chains.into_iter().flatten().collect() })
}

fn inv_gamma<R: Rng + ?Sized>(shape: f64, scale: f64, rng: &mut R) -> f64 {
    let g = Gamma::new(shape, 1.0).expect("positive shape");
    scale / g.sample(rng)
}

fn run_chain(sys: &BlockSystem, p: &PriorConfig, m: &McmcConfig, hooks: &SamplerHooks, chain: usize) -> Result<Vec<Draw>> {
    let mut rng = stream(m.seed, Purpose::Chain, chain as u64);
    let n = sys.n_obs as f64;
    let ns = sys.n_groups;
    let sizes = sys.group_sizes();
    let r2 = [p.r_alpha.powi(2), p.r_nu.powi(2), p.r_delta.powi(2)];
    let n_pen: f64 = sizes.iter().sum::<usize>() as f64;

    let mut g = hooks.freeze_g.unwrap_or(r2);
    let mut sigma2 = sys.ss_total() / (n - 1.0);
    if !(sigma2 > 0.0) {
        return Err(Error::Numeric("response has zero variance".into()));
    }
    let dim = sys.n_globals + ns * sys.n_locals;
    let mut z = vec![0.0; dim];
    let mut out = Vec::with_capacity(m.retained_per_chain());

    for it in 0..m.n_iterations {
        let f = sys.factor(&g)?;
        for v in z.iter_mut() {
            *v = rng.sample(StandardNormal);
        }
        let b: Coefs = f.draw(sigma2.sqrt(), &z);

        let ssr = sys.residual_ss(&b);
        let gss = sys.group_sums_of_squares(&b);
        let pen: f64 = gss.iter().zip(&g).map(|(s, gk)| s / gk).sum();
        sigma2 = inv_gamma(0.5 * (n + n_pen), 0.5 * (ssr + pen), &mut rng);
        if !(sigma2.is_finite() && sigma2 > 0.0) {
            return Err(Error::Numeric(format!("chain {chain}, iteration {it}: sigma2 = {sigma2}")));
        }
        if hooks.freeze_g.is_none() {
            for k in 0..3 {
                g[k] = inv_gamma(0.5 * (sizes[k] as f64 + 1.0), 0.5 * (gss[k] / sigma2 + r2[k]), &mut rng);
                if !(g[k].is_finite() && g[k] > 0.0) {
                    return Err(Error::Numeric(format!("chain {chain}, iteration {it}: g[{k}] = {}", g[k])));
                }
            }
        }

        if it >= m.burn_in && (it - m.burn_in) % m.thin == 0 {
            let nu = b.global[1];
            let theta: Vec<f64> = b.local.iter().map(|v| v[1]).collect();
            out.push(Draw {
                chain,
                index: out.len(),
                mu: b.global[0] + sys.y_mean,
                nu,
                sigma2,
                g_alpha: g[0],
                g_nu: g[1],
                g_delta: g[2],
                eta2: g[2] * sigma2,
                alpha: b.local.iter().map(|v| v[0]).collect(),
                delta: theta.iter().map(|t| nu + t).collect(),
                theta,
            });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_table() -> TrialTable {
        let mut rows = Vec::new();
        for (s, base, eff) in [("a", 500.0, 40.0), ("b", 450.0, 70.0), ("c", 560.0, 10.0)] {
            for k in 0..6 {
                let wobble = ((k * 37 % 11) as f64 - 5.0) * 12.0;
                rows.push((s, 0u8, base + wobble));
                rows.push((s, 1u8, base + eff - wobble * 0.7));
            }
        }
        TrialTable::from_triples(rows, ["c0", "c1"]).unwrap()
    }

    fn cfg(seed: u64) -> McmcConfig {
        McmcConfig { n_chains: 2, n_iterations: 600, burn_in: 100, thin: 1, seed }
    }

    #[test]
    fn config_validation() {
        assert!(McmcConfig::default().validate().is_ok());
        assert!(McmcConfig { n_chains: 1, ..Default::default() }.validate().is_err());
        assert!(McmcConfig { burn_in: 5000, ..Default::default() }.validate().is_err());
        assert!(McmcConfig { n_iterations: 1050, ..Default::default() }.validate().is_err());
        assert_eq!(McmcConfig { thin: 3, ..Default::default() }.retained_per_chain(), 1333);
    }

    #[test]
    fn draws_respect_invariants() {
        let d = gibbs_fit(&small_table(), &PriorConfig::default(), &cfg(3)).unwrap();
        assert_eq!(d.len(), 1000);
        assert_eq!(d.n_chains(), 2);
        for dr in &d.draws {
            assert!(dr.sigma2 > 0.0 && dr.g_alpha > 0.0 && dr.g_nu > 0.0 && dr.g_delta > 0.0);
            assert_eq!(dr.eta2, dr.g_delta * dr.sigma2);
            for i in 0..3 {
                assert_eq!(dr.delta[i], dr.nu + dr.theta[i]);
            }
        }
    }

    #[test]
    fn seed_determinism() {
        let a = gibbs_fit(&small_table(), &PriorConfig::default(), &cfg(5)).unwrap();
        let b = gibbs_fit(&small_table(), &PriorConfig::default(), &cfg(5)).unwrap();
        let c = gibbs_fit(&small_table(), &PriorConfig::default(), &cfg(6)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let d = gibbs_fit(&small_table(), &PriorConfig::default(), &cfg(8)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("draws.csv");
        d.write_csv(&path).unwrap();
        assert_eq!(PosteriorDraws::read_csv(&path).unwrap(), d);
    }

    #[test]
    fn diagnostics_cover_all_parameters() {
        let d = gibbs_fit(&small_table(), &PriorConfig::default(), &cfg(9)).unwrap();
        let diag = diagnose(&d).unwrap();
        assert_eq!(diag.params.len(), 6 + 3);
        assert!(diag.get("delta[b]").is_some());
        let one = PosteriorDraws { subjects: d.subjects.clone(), draws: d.draws.iter().filter(|x| x.chain == 0).cloned().collect() };
        assert!(matches!(diagnose(&one), Err(Error::Diagnostics(_))));
    }

    #[test]
    fn invalid_design_is_rejected() {
        let t = TrialTable::from_triples([("a", 0, 400.0), ("a", 1, 450.0), ("b", 0, 420.0)], ["x", "y"]).unwrap();
        assert!(matches!(gibbs_fit(&t, &PriorConfig::default(), &cfg(1)), Err(Error::EmptyCell { .. })));
    }
}
