use indiff::dataio::TrialTable;
use indiff::evidence::{compare_models, encompassing_bf, log_marginal, log_marginal_given_g, EvidenceConfig};
use indiff::gibbs::{gibbs_fit, McmcConfig};
use indiff::model::{build_design, ModelKind, PriorConfig};
use indiff::simulate::{generate, grid_oracle_logml, GridSpec, SimScale, SimSpec};
use nalgebra::{DMatrix, DVector};

fn sim(kind: ModelKind, n: usize, t: usize, sigma: f64, nu: f64, eta: f64, seed: u64) -> TrialTable {
    generate(&SimSpec {
        true_model: kind,
        n_subjects: n,
        trials_per_cell: t,
        mu: 700.0,
        sigma,
        nu,
        eta,
        intercept_sd: None,
        scale: SimScale::RawNormal,
        seed,
    })
    .unwrap()
    .table
}

/// `log p(y | g)` by integrating the Gaussian likelihood `N(y; mu 1, sigma^2 V)`,
/// `V = I + Z G Z'`, numerically over `mu` and `ln sigma^2` on a trapezoid grid.
fn covariance_quadrature(t: &TrialTable, g: [f64; 3]) -> f64 {
    let n = t.len();
    let ns = t.n_subjects();
    let mut v = DMatrix::<f64>::identity(n, n);
    for (a, ra) in t.rows.iter().enumerate() {
        for (b, rb) in t.rows.iter().enumerate() {
            let (xa, xb) = (f64::from(ra.condition), f64::from(rb.condition));
            let same = f64::from(ra.subject == rb.subject);
            v[(a, b)] += g[0] * same + g[1] * xa * xb + g[2] * xa * xb * same;
        }
    }
    assert!(ns > 0);
    let chol = v.clone().cholesky().unwrap();
    let log_det_v: f64 = 2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
    let y = DVector::from_iterator(n, t.rows.iter().map(|r| r.rt));
    let one = DVector::from_element(n, 1.0);
    let vy = chol.solve(&y);
    let v1 = chol.solve(&one);
    let (yy, y1, c) = (y.dot(&vy), one.dot(&vy), one.dot(&v1));

    let mu_hat = y1 / c;
    let q_min = yy - y1 * y1 / c;
    let s2_hat = q_min / n as f64;
    let nf = n as f64;
    let ln2pi = (2.0 * std::f64::consts::PI).ln();
    let log_f = |mu: f64, ls2: f64| {
        let q = yy - 2.0 * mu * y1 + mu * mu * c;
        -0.5 * nf * (ln2pi + ls2) - 0.5 * log_det_v - 0.5 * q / ls2.exp()
    };
    // The 1/sigma^2 Jeffreys factor cancels the Jacobian of ln sigma^2.
    let (m_pts, s_pts) = (1601, 1601);
    let mu_half = 14.0 * (s2_hat / c).sqrt();
    let (ls_lo, ls_hi) = (s2_hat.ln() - 3.0, s2_hat.ln() + 3.0);
    let (hm, hs) = (2.0 * mu_half / (m_pts - 1) as f64, (ls_hi - ls_lo) / (s_pts - 1) as f64);
    let peak = log_f(mu_hat, s2_hat.ln());
    let mut total = 0.0;
    for i in 0..m_pts {
        let mu = mu_hat - mu_half + i as f64 * hm;
        let wi = if i == 0 || i == m_pts - 1 { 0.5 } else { 1.0 };
        for j in 0..s_pts {
            let wj = if j == 0 || j == s_pts - 1 { 0.5 } else { 1.0 };
            total += wi * wj * (log_f(mu, ls_lo + j as f64 * hs) - peak).exp();
        }
    }
    peak + (total * hm * hs).ln()
}

#[test]
fn given_g_matches_covariance_quadrature() {
    let t = sim(ModelKind::PositiveEffects, 3, 4, 80.0, 50.0, 20.0, 41);
    let g = [1.0, 1.0, 1.0];
    let ours = log_marginal_given_g(&build_design(&t, ModelKind::Unconstrained), &g).unwrap();
    let oracle = covariance_quadrature(&t, g);
    assert!((ours - oracle).abs() < 0.01, "{ours} vs {oracle}");
    let g = [0.7, 0.05, 0.2];
    let ours = log_marginal_given_g(&build_design(&t, ModelKind::Unconstrained), &g).unwrap();
    assert!((ours - covariance_quadrature(&t, g)).abs() < 0.01);
}

#[test]
fn log_bf_u0_matches_grid() {
    let t = sim(ModelKind::PositiveEffects, 3, 4, 80.0, 50.0, 20.0, 42);
    let p = PriorConfig::default();
    let spec = GridSpec::default();
    let grid = |k| grid_oracle_logml(&build_design(&t, k), &p, &spec).unwrap();
    let mc = |k| log_marginal(&build_design(&t, k), &p, 200_000, 5).unwrap().logml;
    let oracle = grid(ModelKind::Unconstrained) - grid(ModelKind::Null);
    let ours = mc(ModelKind::Unconstrained) - mc(ModelKind::Null);
    assert!((ours - oracle).abs() < 0.05, "{ours} vs {oracle}");
}

#[test]
fn large_null_dataset_favors_null() {
    let t = sim(ModelKind::Null, 3, 200, 100.0, 0.0, 0.0, 43);
    let p = PriorConfig::default();
    let spec = GridSpec::default();
    let grid = |k| grid_oracle_logml(&build_design(&t, k), &p, &spec).unwrap();
    assert!(grid(ModelKind::Null) > grid(ModelKind::Unconstrained));
    let mc = |k| log_marginal(&build_design(&t, k), &p, 20_000, 5).unwrap().logml;
    assert!(mc(ModelKind::Null) > mc(ModelKind::Unconstrained));
}

fn quick_mcmc(seed: u64) -> McmcConfig {
    McmcConfig { n_chains: 2, n_iterations: 2500, burn_in: 500, thin: 1, seed }
}

fn quick_evidence() -> EvidenceConfig {
    EvidenceConfig { n_mc: 20_000, n_prior_draws: 200_000, ..EvidenceConfig::default() }
}

#[test]
fn log_bf_is_antisymmetric() {
    let t = sim(ModelKind::PositiveEffects, 6, 20, 100.0, 40.0, 15.0, 44);
    let r = compare_models(&t, &PriorConfig::default(), &quick_mcmc(1), &quick_evidence()).unwrap();
    for a in ModelKind::ALL {
        assert_eq!(r.log_bf(a, a), 0.0);
        for b in ModelKind::ALL {
            assert_eq!(r.log_bf(a, b), -r.log_bf(b, a), "{a} {b}");
        }
    }
    assert_eq!(r.log_bf(ModelKind::Unconstrained, ModelKind::CommonEffect), r.log_bf_u1);
    assert_eq!(r.log_bf(ModelKind::Unconstrained, ModelKind::Null), r.log_bf_u0);
}

#[test]
fn null_data_select_null() {
    let t = sim(ModelKind::Null, 10, 30, 150.0, 0.0, 0.0, 45);
    let r = compare_models(&t, &PriorConfig::default(), &quick_mcmc(2), &quick_evidence()).unwrap();
    assert_eq!(r.winner, ModelKind::Null, "{}", r.to_text());
}

#[test]
fn encompassing_bf_is_thinning_invariant() {
    let t = sim(ModelKind::PositiveEffects, 5, 20, 200.0, 30.0, 10.0, 46);
    let p = PriorConfig::default();
    let m = McmcConfig { n_chains: 4, n_iterations: 6000, burn_in: 1000, thin: 1, seed: 3 };
    let draws = gibbs_fit(&t, &p, &m).unwrap();
    let full = encompassing_bf(&draws, &p, 5, 200_000, 9).unwrap();
    let thin = encompassing_bf(&draws.thinned(5), &p, 5, 200_000, 9).unwrap();
    assert_eq!(thin.n_posterior * 5, full.n_posterior);
    assert!(full.posterior_fraction > 0.05 && full.posterior_fraction < 0.95, "{}", full.posterior_fraction);
    let se = |f: f64, n: usize| (f * (1.0 - f) / n as f64).sqrt();
    let combined = se(full.posterior_fraction, full.n_posterior).hypot(se(thin.posterior_fraction, thin.n_posterior));
    assert!((full.posterior_fraction - thin.posterior_fraction).abs() < 3.0 * combined);
    assert_eq!(full.prior_fraction, thin.prior_fraction);
}
