//! Rank-normalized split R-hat and bulk effective sample size
//! (Vehtari, Gelman, Simpson, Carpenter & Bürkner, 2021).

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use statrs::distribution::{ContinuousCDF, Normal};

use super::PosteriorDraws;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ParamDiagnostics {
    pub name: String,
    pub rhat: f64,
    pub ess: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Diagnostics {
    pub params: Vec<ParamDiagnostics>,
}

impl Diagnostics {
    pub fn max_rhat(&self) -> f64 {
        self.params.iter().map(|p| p.rhat).fold(f64::NAN, f64::max)
    }

    pub fn min_ess(&self) -> f64 {
        self.params.iter().map(|p| p.ess).fold(f64::NAN, f64::min)
    }

    pub fn get(&self, name: &str) -> Option<&ParamDiagnostics> {
        self.params.iter().find(|p| p.name == name)
    }

    pub fn write_csv(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["parameter", "rhat", "ess"])?;
        for p in &self.params {
            w.write_record([p.name.as_str(), &p.rhat.to_string(), &p.ess.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Split R-hat and bulk ESS for `mu`, `nu`, `sigma2`, the three g's and every `delta_i`.
pub fn diagnose(d: &PosteriorDraws) -> Result<Diagnostics> {
    if d.n_chains() < 2 {
        return Err(Error::Diagnostics(format!("need at least 2 chains, got {}", d.n_chains())));
    }
    let mut params = Vec::new();
    let mut push = |name: String, chains: Vec<Vec<f64>>| -> Result<()> {
        params.push(ParamDiagnostics { name, rhat: split_rhat(&chains)?, ess: ess_bulk(&chains)? });
        Ok(())
    };
    for name in ["mu", "nu", "sigma2", "g_alpha", "g_nu", "g_delta"] {
        push(name.to_string(), d.scalar_chains(name).expect("known scalar"))?;
    }
    for (i, s) in d.subjects.iter().enumerate() {
        push(format!("delta[{s}]"), d.chains_of(|dr| dr.delta[i]))?;
    }
    Ok(Diagnostics { params })
}

fn check(chains: &[Vec<f64>]) -> Result<usize> {
    if chains.len() < 2 {
        return Err(Error::Diagnostics(format!("need at least 2 chains, got {}", chains.len())));
    }
    let n = chains[0].len();
    if n < 4 || chains.iter().any(|c| c.len() != n) {
        return Err(Error::Diagnostics("chains must have equal length of at least 4".into()));
    }
    Ok(n)
}

fn split(chains: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let half = chains[0].len() / 2;
    let n = chains[0].len();
    chains
        .iter()
        .flat_map(|c| [c[..half].to_vec(), c[n - half..].to_vec()])
        .collect()
}

/// Pooled ranks (ties averaged) mapped through the normal quantile function.
fn rank_normalize(chains: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = chains[0].len();
    let mut all: Vec<(f64, usize)> = chains.iter().flatten().copied().zip(0..).collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0));
    let s = all.len();
    let mut ranks = vec![0.0; s];
    let mut i = 0;
    while i < s {
        let mut j = i;
        while j + 1 < s && all[j + 1].0 == all[i].0 {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for item in &all[i..=j] {
            ranks[item.1] = r;
        }
        i = j + 1;
    }
    let std = Normal::new(0.0, 1.0).unwrap();
    let z: Vec<f64> = ranks.iter().map(|r| std.inverse_cdf((r - 0.375) / (s as f64 + 0.25))).collect();
    z.chunks(n).map(|c| c.to_vec()).collect()
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

fn var(x: &[f64]) -> f64 {
    let m = mean(x);
    x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (x.len() as f64 - 1.0)
}

fn rhat_basic(chains: &[Vec<f64>]) -> f64 {
    let n = chains[0].len() as f64;
    let means: Vec<f64> = chains.iter().map(|c| mean(c)).collect();
    let w = mean(&chains.iter().map(|c| var(c)).collect::<Vec<_>>());
    let b_over_n = var(&means);
    let var_plus = (n - 1.0) / n * w + b_over_n;
    (var_plus / w).sqrt()
}

/// Max of bulk and tail (folded) rank-normalized split R-hat, floored at 1.
/// Constant input gives NaN.
pub fn split_rhat(chains: &[Vec<f64>]) -> Result<f64> {
    check(chains)?;
    let sp = split(chains);
    let bulk = rhat_basic(&rank_normalize(&sp));
    let mut pooled: Vec<f64> = sp.iter().flatten().copied().collect();
    pooled.sort_by(f64::total_cmp);
    let med = quantile_sorted(&pooled, 0.5);
    let folded: Vec<Vec<f64>> = sp.iter().map(|c| c.iter().map(|v| (v - med).abs()).collect()).collect();
    let tail = rhat_basic(&rank_normalize(&folded));
    let r = bulk.max(tail);
    Ok(if r.is_nan() { r } else { r.max(1.0) })
}

pub(crate) fn quantile_sorted(x: &[f64], p: f64) -> f64 {
    let h = (x.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    x[lo] + (h - lo as f64) * (x[hi] - x[lo])
}

/// Biased autocovariance (divided by n) for all lags, via zero-padded FFT.
fn autocovariance(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    let m = mean(x);
    let size = (2 * n).next_power_of_two();
    let mut buf: Vec<Complex<f64>> = x.iter().map(|v| Complex::new(v - m, 0.0)).collect();
    buf.resize(size, Complex::new(0.0, 0.0));
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(size).process(&mut buf);
    for c in buf.iter_mut() {
        *c = Complex::new(c.norm_sqr(), 0.0);
    }
    planner.plan_fft_inverse(size).process(&mut buf);
    buf[..n].iter().map(|c| c.re / size as f64 / n as f64).collect()
}

/// Bulk effective sample size on rank-normalized split chains, with
/// Geyer's initial monotone sequence truncation.
pub fn ess_bulk(chains: &[Vec<f64>]) -> Result<f64> {
    check(chains)?;
    let sp = rank_normalize(&split(chains));
    Ok(ess_basic(&sp))
}

fn ess_basic(chains: &[Vec<f64>]) -> f64 {
    let m = chains.len();
    let n = chains[0].len();
    let acov: Vec<Vec<f64>> = chains.iter().map(|c| autocovariance(c)).collect();
    let nf = n as f64;
    let w = acov.iter().map(|a| a[0] * nf / (nf - 1.0)).sum::<f64>() / m as f64;
    let means: Vec<f64> = chains.iter().map(|c| mean(c)).collect();
    let var_plus = w * (nf - 1.0) / nf + if m > 1 { var(&means) } else { 0.0 };
    if !(var_plus > 0.0) {
        return f64::NAN;
    }
    let rho = |t: usize| 1.0 - (w - acov.iter().map(|a| a[t]).sum::<f64>() / m as f64) / var_plus;

    let mut pairs: Vec<f64> = Vec::new();
    let mut t = 0;
    while t + 1 < n {
        let p = rho(t) + rho(t + 1);
        if p < 0.0 {
            break;
        }
        pairs.push(p);
        t += 2;
    }
    for k in 1..pairs.len() {
        if pairs[k] > pairs[k - 1] {
            pairs[k] = pairs[k - 1];
        }
    }
    let tau = (-1.0 + 2.0 * pairs.iter().sum::<f64>()).max(1.0 / (m * n) as f64);
    let s = (m * n) as f64;
    (s / tau).min(s * s.log10())
}
