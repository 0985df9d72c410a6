//! Model specifications, prior configuration and design matrices.
//!
//! All four models share the trial-level linear model
//!
//! ```text
//! y = mu + alpha_i + x * delta_i + noise,   noise ~ Normal(0, sigma2)
//! ```
//!
//! with `delta_i = nu + theta_i`. Coefficient blocks carry g-priors:
//! `alpha_i ~ N(0, g_alpha sigma2)`, `nu ~ N(0, g_nu sigma2)`,
//! `theta_i ~ N(0, g_delta sigma2)`, and each `g ~ Inverse-chi2(1, r^2)`,
//! i.e. the law of `r^2 / chi2_1`. `mu` is flat and `sigma2` has the
//! Jeffreys prior `1/sigma2`.
//!
//! The prior on `alpha_i` (scale `r_alpha`, default 1) is a modelling choice
//! that the original analysis leaves unstated; it is configurable.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use statrs::function::erf::erfc;

use crate::dataio::TrialTable;
use crate::error::{Error, Result};
use crate::kv::KvFile;

#[derive(Debug, Clone, PartialEq)]
pub struct PriorConfig {
    pub r_alpha: f64,
    pub r_nu: f64,
    pub r_delta: f64,
    /// Expected trial-level SD in ms. Not used in any computation; it is the
    /// calibration behind the default `r_nu` (50/300) and `r_delta` (30/300).
    pub sigma_guess_ms: f64,
    pub shift_ms: f64,
}

impl Default for PriorConfig {
    fn default() -> Self {
        PriorConfig { r_alpha: 1.0, r_nu: 1.0 / 6.0, r_delta: 1.0 / 10.0, sigma_guess_ms: 300.0, shift_ms: 200.0 }
    }
}

impl PriorConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("r_alpha", self.r_alpha),
            ("r_nu", self.r_nu),
            ("r_delta", self.r_delta),
            ("sigma_guess_ms", self.sigma_guess_ms),
            ("shift_ms", self.shift_ms),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Domain(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }

    /// Scale `r` for a g-group.
    pub fn scale(&self, group: GGroup) -> f64 {
        match group {
            GGroup::Alpha => self.r_alpha,
            GGroup::Nu => self.r_nu,
            GGroup::Delta => self.r_delta,
        }
    }

    pub fn to_kv(&self) -> KvFile {
        let mut kv = KvFile::new();
        kv.set("r_alpha", self.r_alpha);
        kv.set("r_nu", self.r_nu);
        kv.set("r_delta", self.r_delta);
        kv.set("sigma_guess_ms", self.sigma_guess_ms);
        kv.set("shift_ms", self.shift_ms);
        kv
    }

    /// Missing keys take their defaults; unknown keys are rejected.
    pub fn from_kv(kv: &KvFile) -> Result<Self> {
        const KEYS: [&str; 5] = ["r_alpha", "r_nu", "r_delta", "sigma_guess_ms", "shift_ms"];
        if let Some(k) = kv.keys().find(|k| !KEYS.contains(k)) {
            return Err(Error::Config(format!("unknown prior key `{k}`")));
        }
        let d = PriorConfig::default();
        let p = PriorConfig {
            r_alpha: kv.get_real("r_alpha")?.unwrap_or(d.r_alpha),
            r_nu: kv.get_real("r_nu")?.unwrap_or(d.r_nu),
            r_delta: kv.get_real("r_delta")?.unwrap_or(d.r_delta),
            sigma_guess_ms: kv.get_real("sigma_guess_ms")?.unwrap_or(d.sigma_guess_ms),
            shift_ms: kv.get_real("shift_ms")?.unwrap_or(d.shift_ms),
        };
        p.validate()?;
        Ok(p)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_kv(&KvFile::read(path)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ModelKind {
    Unconstrained,
    /// Same parameterization as `Unconstrained`, restricted to the event that
    /// every `delta_i > 0`. Never sampled directly.
    PositiveEffects,
    CommonEffect,
    Null,
}

impl ModelKind {
    pub const ALL: [ModelKind; 4] =
        [ModelKind::Unconstrained, ModelKind::PositiveEffects, ModelKind::CommonEffect, ModelKind::Null];

    pub fn label(&self) -> &'static str {
        match self {
            ModelKind::Unconstrained => "M_u",
            ModelKind::PositiveEffects => "M_+",
            ModelKind::CommonEffect => "M_1",
            ModelKind::Null => "M_0",
        }
    }

    pub fn from_label(s: &str) -> Option<Self> {
        match s.trim() {
            "M_u" | "unconstrained" => Some(ModelKind::Unconstrained),
            "M_+" | "positive" | "positive-effects" => Some(ModelKind::PositiveEffects),
            "M_1" | "common" | "common-effect" => Some(ModelKind::CommonEffect),
            "M_0" | "null" => Some(ModelKind::Null),
            _ => None,
        }
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

/// Coefficient groups sharing one `g`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum GGroup {
    Alpha,
    Nu,
    Delta,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlockLabel {
    Intercept,
    SubjectDev,
    CommonEffect,
    EffectDev,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ColumnBlock {
    pub label: BlockLabel,
    pub columns: DMatrix<f64>,
    pub g_group: Option<GGroup>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    pub n_rows: usize,
    pub n_subjects: usize,
    pub blocks: Vec<ColumnBlock>,
    pub response: DVector<f64>,
}

impl DesignMatrix {
    pub fn n_cols(&self) -> usize {
        self.blocks.iter().map(|b| b.columns.ncols()).sum()
    }

    /// All blocks side by side.
    pub fn columns(&self) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.n_rows, self.n_cols());
        let mut at = 0;
        for b in &self.blocks {
            out.columns_mut(at, b.columns.ncols()).copy_from(&b.columns);
            at += b.columns.ncols();
        }
        out
    }

    /// g-groups present, in block order. A g vector for this design follows this order.
    pub fn g_groups(&self) -> Vec<GGroup> {
        self.blocks.iter().filter_map(|b| b.g_group).collect()
    }

    /// The g-group of every column (`None` for the intercept).
    pub fn column_groups(&self) -> Vec<Option<GGroup>> {
        self.blocks
            .iter()
            .flat_map(|b| std::iter::repeat_n(b.g_group, b.columns.ncols()))
            .collect()
    }

    pub fn block(&self, label: BlockLabel) -> Option<&ColumnBlock> {
        self.blocks.iter().find(|b| b.label == label)
    }
}

/// Builds the design for `kind`. `PositiveEffects` uses the unconstrained design.
pub fn build_design(t: &TrialTable, kind: ModelKind) -> DesignMatrix {
    let n = t.len();
    let ns = t.n_subjects();
    let x = |r: usize| f64::from(t.rows[r].condition);

    let mut blocks = vec![
        ColumnBlock { label: BlockLabel::Intercept, columns: DMatrix::from_element(n, 1, 1.0), g_group: None },
        ColumnBlock {
            label: BlockLabel::SubjectDev,
            columns: DMatrix::from_fn(n, ns, |r, i| f64::from(t.rows[r].subject == i)),
            g_group: Some(GGroup::Alpha),
        },
    ];
    if kind != ModelKind::Null {
        blocks.push(ColumnBlock {
            label: BlockLabel::CommonEffect,
            columns: DMatrix::from_fn(n, 1, |r, _| x(r)),
            g_group: Some(GGroup::Nu),
        });
    }
    if matches!(kind, ModelKind::Unconstrained | ModelKind::PositiveEffects) {
        blocks.push(ColumnBlock {
            label: BlockLabel::EffectDev,
            columns: DMatrix::from_fn(n, ns, |r, i| x(r) * f64::from(t.rows[r].subject == i)),
            g_group: Some(GGroup::Delta),
        });
    }
    DesignMatrix {
        n_rows: n,
        n_subjects: ns,
        blocks,
        response: DVector::from_iterator(n, t.rows.iter().map(|r| r.rt)),
    }
}

fn check_positive(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("{name} must be positive, got {v}")))
    }
}

/// Density of the scaled Inverse-chi2(1, r^2) law at `g`:
/// `r / sqrt(2 pi) * g^(-3/2) * exp(-r^2 / (2 g))`.
pub fn prior_density_g(g: f64, r: f64) -> Result<f64> {
    Ok(ln_prior_density_g(g, r)?.exp())
}

pub fn ln_prior_density_g(g: f64, r: f64) -> Result<f64> {
    check_positive("g", g)?;
    check_positive("r", r)?;
    Ok(r.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln() - 1.5 * g.ln() - r * r / (2.0 * g))
}

/// CDF of the scaled Inverse-chi2(1, r^2) law: `P(G <= g) = erfc(r / sqrt(2 g))`.
pub fn prior_cdf_g(g: f64, r: f64) -> f64 {
    if g <= 0.0 {
        return 0.0;
    }
    erfc(r / (2.0 * g).sqrt())
}

/// Draws `r^2 / z^2` with `z ~ N(0, 1)`.
pub fn sample_g<R: Rng + ?Sized>(r: f64, rng: &mut R) -> f64 {
    loop {
        let z: f64 = rng.sample(StandardNormal);
        let g = r * r / (z * z);
        if g.is_finite() && g > 0.0 {
            return g;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table() -> TrialTable {
        TrialTable::from_triples(
            [("s1", 0, 400.0), ("s1", 1, 450.0), ("s2", 0, 420.0), ("s2", 1, 500.0)],
            ["a", "b"],
        )
        .unwrap()
    }

    #[test]
    fn null_design_shape() {
        let d = build_design(&table(), ModelKind::Null);
        assert_eq!((d.n_rows, d.n_cols()), (4, 3));
        assert_eq!(d.g_groups(), vec![GGroup::Alpha]);
        assert_eq!(d.columns().row(2).iter().copied().collect::<Vec<_>>(), vec![1.0, 0.0, 1.0]);
    }

    #[test]
    fn unconstrained_design_rows() {
        let d = build_design(&table(), ModelKind::Unconstrained);
        assert_eq!((d.n_rows, d.n_cols()), (4, 6));
        let z = d.columns();
        assert_eq!(z.row(1).iter().copied().collect::<Vec<_>>(), vec![1.0, 1.0, 0.0, 1.0, 1.0, 0.0]);
        assert_eq!(z.row(0).iter().copied().collect::<Vec<_>>(), vec![1.0, 1.0, 0.0, 0.0, 0.0, 0.0]);
        assert_eq!(d.g_groups(), vec![GGroup::Alpha, GGroup::Nu, GGroup::Delta]);
        assert_eq!(d.response.as_slice(), &[400.0, 450.0, 420.0, 500.0]);
        assert_eq!(build_design(&table(), ModelKind::PositiveEffects), d);
    }

    #[test]
    fn common_effect_column_is_row_sum_of_effect_devs() {
        let d = build_design(&table(), ModelKind::Unconstrained);
        let ce = &d.block(BlockLabel::CommonEffect).unwrap().columns;
        let ed = &d.block(BlockLabel::EffectDev).unwrap().columns;
        for r in 0..d.n_rows {
            assert_eq!(ce[(r, 0)], ed.row(r).sum());
        }
    }

    #[test]
    fn prior_config_kv_round_trip_and_validation() {
        let p = PriorConfig::default();
        assert_eq!(PriorConfig::from_kv(&p.to_kv()).unwrap(), p);
        let kv = KvFile::parse("r_nu = 1/6\nr_delta = 0.1").unwrap();
        assert_eq!(PriorConfig::from_kv(&kv).unwrap(), p);
        assert!(PriorConfig::from_kv(&KvFile::parse("r_nu = -1").unwrap()).is_err());
        assert!(PriorConfig::from_kv(&KvFile::parse("r_mu = 1").unwrap()).is_err());
    }

    #[test]
    fn density_domain_errors() {
        assert!(prior_density_g(0.0, 1.0).is_err());
        assert!(prior_density_g(1.0, -1.0).is_err());
    }

    #[test]
    fn cdf_limits() {
        assert_eq!(prior_cdf_g(0.0, 0.5), 0.0);
        assert!(prior_cdf_g(1e12, 0.5) > 0.999_99);
        // Median of chi2_1 is 0.454936..., so P(G <= r^2 / 0.454936) = 0.5.
        assert!((prior_cdf_g(0.25 / 0.454_936_423_119_572_8, 0.5) - 0.5).abs() < 1e-9);
    }
}
