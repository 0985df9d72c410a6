//! Brute-force reference computations for toy designs.
//!
//! Everything here works on the explicit dense design matrix with a dense
//! Cholesky factor, and integrates over g on a tensor-product trapezoid grid
//! in `log g`. None of it shares code with the block-sparse solver, the
//! Monte-Carlo marginal likelihood or the Gibbs sampler it is used to check.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::model::{ln_prior_density_g, BlockLabel, DesignMatrix, GGroup, PriorConfig};

/// Trapezoid grid over `u = ln g`, spanning `[ln r^2 - below, ln r^2 + above]`
/// for each g-group.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    pub below: f64,
    pub above: f64,
    pub step: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec { below: 8.0, above: 24.0, step: 0.25 }
    }
}

impl GridSpec {
    pub fn refined(&self) -> Self {
        GridSpec { step: self.step / 2.0, ..self.clone() }
    }

    fn nodes(&self, r: f64) -> Vec<(f64, f64)> {
        let c = 2.0 * r.ln();
        let m = ((self.below + self.above) / self.step).round() as usize;
        (0..=m)
            .map(|k| {
                let w = if k == 0 || k == m { 0.5 } else { 1.0 };
                (c - self.below + k as f64 * self.step, w * self.step)
            })
            .collect()
    }
}

struct Dense {
    ztz: DMatrix<f64>,
    zty: DVector<f64>,
    yty: f64,
    y_mean: f64,
    n: f64,
    /// g-group index of each column, or `None`.
    pen: Vec<Option<usize>>,
    groups: Vec<GGroup>,
}

impl Dense {
    fn new(d: &DesignMatrix) -> Result<Self> {
        if d.n_cols() > 10 {
            return Err(Error::Scale(format!("oracle handles at most 10 design columns, got {}", d.n_cols())));
        }
        let z = d.columns();
        let y_mean = d.response.mean();
        let y = d.response.add_scalar(-y_mean);
        let groups = d.g_groups();
        let pen = d
            .column_groups()
            .iter()
            .map(|g| g.map(|g| groups.iter().position(|x| *x == g).unwrap()))
            .collect();
        Ok(Dense { ztz: z.transpose() * &z, zty: z.transpose() * &y, yty: y.dot(&y), y_mean, n: d.n_rows as f64, pen, groups })
    }

    fn penalized(&self, g: &[f64]) -> DMatrix<f64> {
        let mut a = self.ztz.clone();
        for (j, p) in self.pen.iter().enumerate() {
            if let Some(k) = p {
                a[(j, j)] += 1.0 / g[*k];
            }
        }
        a
    }

    /// `(log m(y|g), A, A^{-1} Z'y, S)`.
    fn conditional(&self, g: &[f64]) -> Option<(f64, nalgebra::Cholesky<f64, nalgebra::Dyn>, DVector<f64>, f64)> {
        let ch = self.penalized(g).cholesky()?;
        let mean = ch.solve(&self.zty);
        let s = self.yty - self.zty.dot(&mean);
        let log_det = 2.0 * ch.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
        let log_g: f64 = self.pen.iter().flatten().map(|k| g[*k].ln()).sum();
        let a = 0.5 * (self.n - 1.0);
        let lm = -a * (2.0 * std::f64::consts::PI).ln() - 0.5 * log_det - 0.5 * log_g + ln_gamma(a) - a * (0.5 * s).ln();
        Some((lm, ch, mean, s))
    }
}

/// Tensor grid of `(g vector, log weight)` including prior density and the
/// `dg = g du` Jacobian.
fn grid(groups: &[GGroup], p: &PriorConfig, spec: &GridSpec) -> Result<Vec<(Vec<f64>, f64)>> {
    let axes: Vec<Vec<(f64, f64, f64)>> = groups
        .iter()
        .map(|&grp| {
            let r = p.scale(grp);
            spec.nodes(r)
                .into_iter()
                .map(|(u, w)| {
                    let g = u.exp();
                    Ok((g, u, ln_prior_density_g(g, r)? + u + w.ln()))
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    let mut out: Vec<(Vec<f64>, f64)> = vec![(Vec::new(), 0.0)];
    for axis in &axes {
        out = out
            .iter()
            .flat_map(|(g, lw)| {
                axis.iter().map(move |(gk, _, lwk)| {
                    let mut g2 = g.clone();
                    g2.push(*gk);
                    (g2, lw + lwk)
                })
            })
            .collect();
    }
    Ok(out)
}

fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Log marginal likelihood by quadrature over g with the coefficients and
/// `sigma2` integrated in closed form.
pub fn grid_oracle_logml(d: &DesignMatrix, p: &PriorConfig, spec: &GridSpec) -> Result<f64> {
    let dense = Dense::new(d)?;
    let pts = grid(&dense.groups, p, spec)?;
    let terms: Vec<f64> = pts
        .par_iter()
        .map(|(g, lw)| {
            dense
                .conditional(g)
                .map(|(lm, ..)| lm + lw)
                .ok_or_else(|| Error::Numeric(format!("dense system singular at g = {g:?}")))
        })
        .collect::<Result<_>>()?;
    Ok(log_sum_exp(&terms))
}

/// Posterior mean and standard deviation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Moments {
    pub mean: f64,
    pub sd: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorMoments {
    pub mu: Moments,
    pub nu: Moments,
    pub sigma2: Moments,
}

/// Posterior moments of `mu`, `nu` and `sigma2` under the unconstrained
/// design `d`, mixing the exact g-conditional normal / inverse-gamma
/// moments over the g grid.
pub fn posterior_moments_oracle(d: &DesignMatrix, p: &PriorConfig, spec: &GridSpec) -> Result<PosteriorMoments> {
    let dense = Dense::new(d)?;
    if dense.n < 6.0 {
        return Err(Error::Domain("need at least 6 observations for a finite sigma2 variance".into()));
    }
    let col_of = |label: BlockLabel| -> Result<usize> {
        let mut at = 0;
        for b in &d.blocks {
            if b.label == label {
                return Ok(at);
            }
            at += b.columns.ncols();
        }
        Err(Error::Design(format!("design has no {label:?} block")))
    };
    let (jmu, jnu) = (col_of(BlockLabel::Intercept)?, col_of(BlockLabel::CommonEffect)?);
    let pts = grid(&dense.groups, p, spec)?;
    let a = 0.5 * (dense.n - 1.0);
    let dim = d.n_cols();

    // (log weight, [E mu, E mu^2, E nu, E nu^2, E s2, E s2^2]) per grid point.
    let per: Vec<(f64, [f64; 6])> = pts
        .par_iter()
        .map(|(g, lw)| {
            let (lm, ch, mean, s) = dense.conditional(g).ok_or_else(|| Error::Numeric("singular".into()))?;
            let b = 0.5 * s;
            let es2 = b / (a - 1.0);
            let es4 = b * b / ((a - 1.0) * (a - 2.0));
            let mut moments = [0.0; 6];
            for (k, j) in [jmu, jnu].into_iter().enumerate() {
                let mut e = DVector::zeros(dim);
                e[j] = 1.0;
                let var = es2 * ch.solve(&e)[j];
                let m = mean[j] + if j == jmu { dense.y_mean } else { 0.0 };
                moments[2 * k] = m;
                moments[2 * k + 1] = var + m * m;
            }
            moments[4] = es2;
            moments[5] = es4;
            Ok((lm + lw, moments))
        })
        .collect::<Result<_>>()?;
    let lmax = per.iter().map(|x| x.0).fold(f64::NEG_INFINITY, f64::max);
    let mut tot = 0.0;
    let mut acc = [0.0; 6];
    for (lw, m) in &per {
        let w = (lw - lmax).exp();
        tot += w;
        for k in 0..6 {
            acc[k] += w * m[k];
        }
    }
    let mom = |k: usize| {
        let mean = acc[k] / tot;
        Moments { mean, sd: (acc[k + 1] / tot - mean * mean).max(0.0).sqrt() }
    };
    Ok(PosteriorMoments { mu: mom(0), nu: mom(2), sigma2: mom(4) })
}
