use rand::Rng;
use rand_distr::{Exp1, StandardNormal};

/// Draws from `Normal(mean, sd^2)` conditioned on `X > lower`.
///
/// Below-the-mean bounds use plain rejection (acceptance >= 1/2). Bounds in
/// the upper tail use Robert's translated-exponential proposal with the
/// optimal rate, whose acceptance stays above 0.76 however far out the
/// bound sits.
pub fn sample_truncated_normal<R: Rng + ?Sized>(mean: f64, sd: f64, lower: f64, rng: &mut R) -> f64 {
    assert!(sd > 0.0 && sd.is_finite(), "sd must be positive, got {sd}");
    let a = (lower - mean) / sd;
    mean + sd * standard_tail(a, rng)
}

fn standard_tail<R: Rng + ?Sized>(a: f64, rng: &mut R) -> f64 {
    if a == f64::NEG_INFINITY {
        return rng.sample(StandardNormal);
    }
    if a <= 0.0 {
        loop {
            let z: f64 = rng.sample(StandardNormal);
            if z > a {
                return z;
            }
        }
    }
    let rate = 0.5 * (a + (a * a + 4.0).sqrt());
    loop {
        let e: f64 = rng.sample(Exp1);
        let z = a + e / rate;
        let u: f64 = rng.random();
        let d = z - rate;
        if u <= (-0.5 * d * d).exp() {
            return z;
        }
    }
}
