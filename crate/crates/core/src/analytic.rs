//! Closed-form reference prices.

use crate::normal::{cdf, pdf};

fn d1(s: f64, k: f64, t: f64, r: f64, sigma: f64) -> f64 {
    ((s / k).ln() + (r + 0.5 * sigma * sigma) * t) / (sigma * t.sqrt())
}

/// Black-Scholes price of a European call.
pub fn black_scholes_call(s: f64, k: f64, t: f64, r: f64, sigma: f64) -> f64 {
    let d1 = d1(s, k, t, r, sigma);
    let d2 = d1 - sigma * t.sqrt();
    s * cdf(d1) - k * (-r * t).exp() * cdf(d2)
}

pub fn black_scholes_delta(s: f64, k: f64, t: f64, r: f64, sigma: f64) -> f64 {
    cdf(d1(s, k, t, r, sigma))
}

pub fn black_scholes_vega(s: f64, k: f64, t: f64, r: f64, sigma: f64) -> f64 {
    s * pdf(d1(s, k, t, r, sigma)) * t.sqrt()
}

/// Discounted price of the cash-or-nothing digital paying 1 if `S_T > k`.
pub fn black_scholes_digital(s: f64, k: f64, t: f64, r: f64, sigma: f64) -> f64 {
    (-r * t).exp() * cdf(d1(s, k, t, r, sigma) - sigma * t.sqrt())
}

/// Call price under Merton's jump diffusion with lognormal jumps
/// `log Y ~ N(jump_mu, jump_sigma^2)` and rate `lambda`, summing `terms` Poisson terms.
///
/// Returns the price and an upper bound on the truncated tail.
#[allow(clippy::too_many_arguments)]
pub fn merton_call(
    s: f64,
    k: f64,
    t: f64,
    r: f64,
    sigma: f64,
    lambda: f64,
    jump_mu: f64,
    jump_sigma: f64,
    terms: usize,
) -> (f64, f64) {
    let kappa = (jump_mu + 0.5 * jump_sigma * jump_sigma).exp() - 1.0;
    let lt = lambda * (1.0 + kappa) * t;
    let mut weight = (-lt).exp();
    let mut price = 0.0;
    let mut mass = 0.0;
    for n in 0..terms {
        if n > 0 {
            weight *= lt / n as f64;
        }
        let nf = n as f64;
        let sig_n = (sigma * sigma + nf * jump_sigma * jump_sigma / t).sqrt();
        let r_n = r - lambda * kappa + nf * (1.0 + kappa).ln() / t;
        price += weight * black_scholes_call(s, k, t, r_n, sig_n);
        mass += weight;
    }
    // Every Black-Scholes call is bounded by the spot, so the neglected Poisson mass
    // bounds the tail.
    let tail = (1.0 - mass).max(0.0) * s;
    (price, tail)
}
