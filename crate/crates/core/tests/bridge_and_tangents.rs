//! Brownian-bridge constructions and pathwise tangents against independent references.

use mlmc_core::greeks::tangent_path;
use mlmc_core::payoffs::{bridge_minimum, crossing_probability};
use mlmc_core::schemes::Scheme;
use mlmc_core::{ModelSpec, ParamSelector, StreamKey};

#[test]
fn bridge_minimum_matches_exact_law() {
    let (a, b, g, h) = (1.0, 1.1, 0.3, 0.25);
    let n = 20_000;
    let mut stream = StreamKey::new(11, 7, 0, 0).stream();
    let mut mins: Vec<f64> = (0..n).map(|_| bridge_minimum(a, b, g, h, stream.open01())).collect();
    mins.sort_by(f64::total_cmp);
    let cdf = |m: f64| (-2.0 * (a - m) * (b - m) / (g * g * h)).exp();
    let d = mins
        .iter()
        .enumerate()
        .map(|(i, &m)| {
            let f = cdf(m);
            (f - i as f64 / n as f64).abs().max((f - (i + 1) as f64 / n as f64).abs())
        })
        .fold(0.0, f64::max);
    // 1% critical value of the Kolmogorov-Smirnov statistic
    assert!(d < 1.63 / (n as f64).sqrt(), "KS distance {d}");
}

#[test]
fn bridge_minimum_matches_fine_sampled_bridge_mean() {
    // The minimum of a bridge sampled on 1024 points sits above the continuous
    // minimum by about 0.5826 g sqrt(h / 1024).
    let (a, b, g, h) = (1.0, 0.9, 0.2, 0.5);
    let (n, k) = (4000, 1024);
    let mut stream = StreamKey::new(12, 7, 0, 0).stream();
    let (mut exact, mut sampled, mut sq) = (0.0, 0.0, 0.0);
    for _ in 0..n {
        exact += bridge_minimum(a, b, g, h, stream.open01());
        let dt = h / k as f64;
        let z: Vec<f64> = (0..k).map(|_| stream.normal() * dt.sqrt()).collect();
        let total: f64 = z.iter().sum();
        let (mut x, mut m) = (a, a);
        for zi in &z {
            x += g * (zi - total / k as f64) + (b - a) / k as f64;
            m = m.min(x);
        }
        sampled += m;
        sq += m * m;
    }
    let (exact, sampled) = (exact / n as f64, sampled / n as f64);
    let se = ((sq / n as f64 - sampled * sampled) / n as f64).sqrt() * 2f64.sqrt();
    let shift = 0.5826 * g * (h / k as f64).sqrt();
    assert!((sampled - shift - exact).abs() < 4.0 * se, "{exact} vs {sampled} - {shift}");
}

#[test]
fn crossing_probability_matches_sampled_bridge() {
    let (a, b, barrier, g, h) = (1.0, 1.05, 0.9, 0.3, 0.25);
    let (p, _) = crossing_probability(a, b, barrier, g, h);
    let (n, k) = (20_000, 512);
    let mut stream = StreamKey::new(13, 7, 0, 0).stream();
    let mut hits = 0;
    for _ in 0..n {
        let dt = h / k as f64;
        let z: Vec<f64> = (0..k).map(|_| stream.normal() * dt.sqrt()).collect();
        let total: f64 = z.iter().sum();
        let mut x = a;
        let mut hit = false;
        for zi in &z {
            x += g * (zi - total / k as f64) + (b - a) / k as f64;
            hit |= x < barrier;
        }
        hits += usize::from(hit);
    }
    let q = hits as f64 / n as f64;
    let se = (p * (1.0 - p) / n as f64).sqrt();
    // discrete monitoring misses some crossings, so q sits slightly below p
    assert!(q <= p + 3.0 * se && q > p - 0.05, "exact {p} sampled {q}");
}

fn fd_check(param: ParamSelector, bump: impl Fn(f64) -> ModelSpec, theta: f64) {
    let h = 1e-5;
    let (up, down, base) = (bump(theta + h), bump(theta - h), bump(theta));
    let dt: f64 = 1.0 / 32.0;
    for scheme in [Scheme::Milstein, Scheme::Euler] {
        for path in 0..1000u64 {
            let mut s = StreamKey::new(17, 7, 5, path).stream();
            let dw: Vec<f64> = (0..32).map(|_| s.normal() * dt.sqrt()).collect();
            let t = tangent_path(&base, scheme, dt, &dw, param).unwrap();
            let xu = tangent_path(&up, scheme, dt, &dw, param).unwrap().values;
            let xd = tangent_path(&down, scheme, dt, &dw, param).unwrap().values;
            for n in [8, 16, 32] {
                let fd = (xu[n] - xd[n]) / (2.0 * h);
                let err = (t.tangents[n] - fd).abs() / t.tangents[n].abs().max(1e-3);
                assert!(err <= 1e-4, "{param:?} {scheme:?} path {path} step {n}: {} vs {fd}", t.tangents[n]);
            }
        }
    }
}

#[test]
fn tangents_match_finite_differences() {
    fd_check(ParamSelector::InitialState(0), |x| ModelSpec::gbm(0.05, 0.2, x).unwrap(), 1.0);
    fd_check(ParamSelector::Volatility, |s| ModelSpec::gbm(0.05, s, 1.0).unwrap(), 0.2);
    fd_check(ParamSelector::Drift, |a| ModelSpec::gbm(a, 0.2, 1.0).unwrap(), 0.05);
}
