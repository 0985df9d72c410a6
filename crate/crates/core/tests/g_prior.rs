use indiff::model::{prior_cdf_g, prior_density_g, sample_g};
use indiff::rng::{stream, Purpose};
use statrs::distribution::{ChiSquared, Continuous};

/// Composite Simpson on `u = ln g`.
fn integral_log_space(f: impl Fn(f64) -> f64, lo: f64, hi: f64, n: usize) -> f64 {
    let (a, b) = (lo.ln(), hi.ln());
    let h = (b - a) / n as f64;
    let w = |k: usize| if k == 0 || k == n { 1.0 } else if k % 2 == 1 { 4.0 } else { 2.0 };
    (0..=n).map(|k| {
        let u = a + k as f64 * h;
        w(k) * f(u.exp()) * u.exp()
    }).sum::<f64>() * h / 3.0
}

#[test]
fn density_integrates_to_one() {
    let r = 1.0 / 6.0;
    let total = integral_log_space(|g| prior_density_g(g, r).unwrap(), 1e-12, 1e6, 20_000);
    // Mass above 10^6 is about sqrt(2/pi) * r / 1000 = 1.3e-4.
    let tail = statrs::function::erf::erf(r / (2.0e6f64).sqrt());
    assert!((total - (1.0 - tail)).abs() < 1e-8, "{total}");
    let total = integral_log_space(|g| prior_density_g(g, r).unwrap(), 1e-12, 1e16, 40_000);
    assert!((total - 1.0).abs() < 1e-4, "{total}");
}

#[test]
fn density_matches_change_of_variables() {
    let chi = ChiSquared::new(1.0).unwrap();
    for r in [0.1, 1.0 / 6.0, 1.0, 3.0] {
        for g in [r * r, 0.01, 0.5, 2.0, 40.0] {
            let x = r * r / g;
            let via_chi = chi.pdf(x) * r * r / (g * g);
            let ours = prior_density_g(g, r).unwrap();
            assert!((ours - via_chi).abs() <= 1e-12 * via_chi.max(1e-300), "r={r} g={g}: {ours} vs {via_chi}");
        }
    }
}

fn draws(r: f64, n: usize, seed: u64) -> Vec<f64> {
    let mut rng = stream(seed, Purpose::Simulation, 0);
    let mut v: Vec<f64> = (0..n).map(|_| sample_g(r, &mut rng)).collect();
    v.sort_by(f64::total_cmp);
    v
}

#[test]
fn sample_median_and_ks() {
    let r = 0.1;
    let v = draws(r, 1_000_000, 12);
    assert!(v[0] > 0.0);
    let median = 0.5 * (v[499_999] + v[500_000]);
    let want = r * r / 0.454_936_4;
    assert!((median / want - 1.0).abs() < 0.02, "{median} vs {want}");
    let n = v.len() as f64;
    let ks = v
        .iter()
        .enumerate()
        .map(|(i, g)| {
            let f = prior_cdf_g(*g, r);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max);
    assert!(ks < 0.005, "{ks}");
}

#[test]
fn cdf_is_the_integral_of_the_density() {
    let r = 1.0 / 6.0;
    for g in [0.001, r * r, 0.3, 5.0] {
        let num = integral_log_space(|x| prior_density_g(x, r).unwrap(), 1e-14, g, 20_000);
        assert!((num - prior_cdf_g(g, r)).abs() < 1e-8, "{g}");
    }
}
