//! Acceptance suite. Prints one PASS/FAIL line per criterion and a summary; with
//! `MLMC_ACCEPTANCE_STRICT` set it exits nonzero if any criterion fails. Rate fits use
//! levels 2-7 with 2e5 samples per level unless a criterion says otherwise.

use std::time::Instant;

use mlmc_cli::{execute, Command, ExperimentConfig};
use mlmc_core::analytic::{black_scholes_call, black_scholes_delta, merton_call};
use mlmc_core::driver::sample_level;
use mlmc_core::greeks::tangent_path;
use mlmc_core::schemes::{antithetic_triple, Scheme};
use mlmc_core::sde::sample_increments;
use mlmc_core::{
    fit_rates_between, rate_study, run_mlmc, run_standard_mc, BarrierKind, GreekMethod, GreekSampler, LevelGrid,
    LevelSampler, MlmcConfig, ModelSpec, ParamSelector, PayoffFamily, PayoffSpec, PricingSampler, Quantity, RateFit,
    SchemeMode, StandardMcConfig, StreamKey,
};

const RATE_SAMPLES: u64 = 200_000;
const R: f64 = 0.05;
const SIGMA: f64 = 0.2;

fn discount() -> f64 {
    (-R).exp()
}

fn gbm() -> ModelSpec {
    ModelSpec::gbm(R, SIGMA, 1.0).unwrap()
}

fn pricing(family: PayoffFamily, mode: SchemeMode) -> PricingSampler {
    let spec = PayoffSpec::new(family, mode).with_strike(1.0).with_barrier(0.85).with_discount(discount());
    PricingSampler::new(gbm(), spec, 1.0).unwrap()
}

fn rates_n(s: &dyn LevelSampler, n: u64, seed: u64) -> RateFit {
    let stats = rate_study(s, 7, n, seed).unwrap();
    fit_rates_between(&stats, 2, 7).unwrap()
}

fn rates(s: &dyn LevelSampler, seed: u64) -> RateFit {
    rates_n(s, RATE_SAMPLES, seed)
}

fn within(x: f64, lo: f64, hi: f64) -> bool {
    (lo..=hi).contains(&x)
}

type Outcome = (bool, String);

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let s = pricing(PayoffFamily::European, SchemeMode::MilsteinSmoothed);
    let exact = black_scholes_call(1.0, 1.0, 1.0, R, SIGMA);
    let mut ok = (exact - 0.10450584).abs() < 1e-8;
    let mut detail = String::new();
    for (i, eps) in [0.02, 0.01, 0.005].into_iter().enumerate() {
        let r = run_mlmc(&s, &MlmcConfig::new(eps, 100 + i as u64)).unwrap();
        let err = (r.estimate - exact).abs();
        ok &= err < 3.0 * eps && r.converged;
        detail += &format!("eps {eps}: {:.6} (err {:.2e}); ", r.estimate, err);
    }
    let beta = rates(&s, 1).beta;
    ok &= within(beta, 1.7, 2.3);
    let secs = start.elapsed().as_secs_f64();
    ok &= secs < 60.0;
    (ok, format!("{detail}beta {beta:.3}; {secs:.1}s"))
}

fn criterion_2() -> Outcome {
    // the Euler weak-error constant is small, so the mean corrections at levels 5-7
    // need 2e6 samples to rise clear of the noise
    let f = rates_n(&pricing(PayoffFamily::European, SchemeMode::Euler), 2_000_000, 2);
    (
        within(f.beta, 0.8, 1.2) && within(f.alpha, 0.8, 1.2),
        format!("alpha {:.3}, beta {:.3} (N = 2e6)", f.alpha, f.beta),
    )
}

fn criterion_3() -> Outcome {
    use PayoffFamily::*;
    let cases: [(&str, PayoffFamily, SchemeMode, f64, f64); 5] = [
        ("euler digital", Digital, SchemeMode::Euler, 0.35, 0.75),
        ("milstein digital", Digital, SchemeMode::MilsteinSmoothed, 1.2, 1.8),
        ("milstein barrier", Barrier(BarrierKind::DownOut), SchemeMode::MilsteinSmoothed, 1.2, 1.8),
        ("milstein lookback", Lookback, SchemeMode::MilsteinSmoothed, 1.7, 2.3),
        ("milstein asian", Asian, SchemeMode::MilsteinSmoothed, 1.7, 2.3),
    ];
    let mut ok = true;
    let mut detail = Vec::new();
    for (i, (name, family, mode, lo, hi)) in cases.into_iter().enumerate() {
        let beta = rates(&pricing(family, mode), 30 + i as u64).beta;
        ok &= within(beta, lo, hi);
        detail.push(format!("{name} beta {beta:.3}"));
    }
    (ok, detail.join(", "))
}

fn criterion_4() -> Outcome {
    let model = ModelSpec::clark_cameron([1.0, 1.0]);
    // (a) the antithetic average reproduces the coarse second component
    let mut worst: f64 = 0.0;
    for level in 1..=6u32 {
        let grid = LevelGrid::new(level, 1.0);
        for i in 0..200 {
            let inc = sample_increments(&mut StreamKey::new(40, 9, level, i).stream(), &grid, &model);
            let p = antithetic_triple(&model, &grid, &inc).unwrap();
            let (f, a, c) = (&p.fine, p.antithetic.as_ref().unwrap(), p.coarse.as_ref().unwrap());
            for n in 0..c.len() {
                let avg = 0.5 * (f.component(2 * n, 1) + a.component(2 * n, 1));
                worst = worst.max((avg - c.component(n, 1)).abs() / (1.0 + c.component(n, 1).abs()));
            }
        }
    }
    let a_ok = worst <= 1e-13;
    // (b) fourth moment of the fine-antithetic gap; dt is the coarse step
    let mut b_ok = true;
    let mut b_detail = Vec::new();
    for (level, dt) in [(3u32, 0.25), (4, 0.125)] {
        let grid = LevelGrid::new(level, 1.0);
        let n = 400_000u64;
        let (mut s4, mut s8) = (0.0, 0.0);
        for i in 0..n {
            let inc = sample_increments(&mut StreamKey::new(41, 9, level, i).stream(), &grid, &model);
            let p = antithetic_triple(&model, &grid, &inc).unwrap();
            let d = p.fine.last()[1] - p.antithetic.as_ref().unwrap().last()[1];
            s4 += d.powi(4);
            s8 += d.powi(8);
        }
        let m4 = s4 / n as f64;
        let se = ((s8 / n as f64 - m4 * m4) / n as f64).sqrt();
        let exact = 0.75 * (1.0 + dt) * dt * dt;
        b_ok &= (m4 - exact).abs() < 3.0 * se;
        b_detail.push(format!("dt {dt}: {m4:.5e} vs {exact:.5e} (se {se:.1e})"));
    }
    // (c) variance decay of the antithetic call on the second component
    let spec = PayoffSpec::call(1.0, SchemeMode::Antithetic).with_component(1);
    let beta = rates(&PricingSampler::new(model, spec, 1.0).unwrap(), 4).beta;
    let c_ok = within(beta, 1.3, 1.7);
    (a_ok && b_ok && c_ok, format!("(a) max rel gap {worst:.1e}; (b) {}; (c) beta {beta:.3}", b_detail.join(", ")))
}

fn criterion_5() -> Outcome {
    let s = pricing(PayoffFamily::European, SchemeMode::MilsteinSmoothed);
    let eps = [0.02, 0.01, 0.005];
    let mut mlmc = Vec::new();
    let mut standard = Vec::new();
    for (i, &e) in eps.iter().enumerate() {
        let r = run_mlmc(&s, &MlmcConfig::new(e, 50 + i as u64)).unwrap();
        mlmc.push(e * e * r.total_cost);
        let m = run_standard_mc(&s, &StandardMcConfig::new(e, 60 + i as u64)).unwrap();
        standard.push(e * e * m.cost);
    }
    let spread = mlmc.iter().cloned().fold(f64::MIN, f64::max) / mlmc.iter().cloned().fold(f64::MAX, f64::min);
    let x: Vec<f64> = eps.iter().map(|e| e.log2()).collect();
    let y: Vec<f64> = standard.iter().map(|c| c.log2()).collect();
    let slope = mlmc_core::fit_rates_raw(&x, &y).0;
    // Diagnostic only: with 100 warm-up samples on levels 0..=2 the cost at eps = 0.02 is
    // mostly warm-up. Shown with 20 to separate that from the asymptotic regime.
    let small: Vec<f64> = eps
        .iter()
        .enumerate()
        .map(|(i, &e)| {
            let cfg = MlmcConfig { initial_samples: 20, ..MlmcConfig::new(e, 50 + i as u64) };
            e * e * run_mlmc(&s, &cfg).unwrap().total_cost
        })
        .collect();
    let fmt = |v: &[f64]| v.iter().map(|c| format!("{c:.3}")).collect::<Vec<_>>();
    (
        spread < 3.0 && within(slope, -1.3, -0.7),
        format!(
            "MLMC eps^2 C {:?} (spread {spread:.2}x); standard eps^2 C {:?} (slope {slope:.3}); info: MLMC with 20 warm-up samples {:?}",
            fmt(&mlmc),
            fmt(&standard),
            fmt(&small)
        ),
    )
}

fn greek(method: GreekMethod, q: Quantity) -> GreekSampler {
    let spec = PayoffSpec::call(1.0, SchemeMode::MilsteinSmoothed).with_discount(discount());
    GreekSampler::new(gbm(), spec, 1.0, method, q).unwrap()
}

fn criterion_6() -> Outcome {
    let exact = black_scholes_delta(1.0, 1.0, 1.0, R, SIGMA);
    let mut ok = (exact - 0.63683).abs() < 1e-5;
    let mut detail = Vec::new();
    for (name, m) in [("smoothed", GreekMethod::Smoothed), ("vibrato", GreekMethod::Vibrato(10))] {
        let r = run_mlmc(&greek(m, Quantity::DELTA), &MlmcConfig::new(0.01, 70)).unwrap();
        let z = (r.estimate - exact).abs() / r.std_error;
        ok &= z < 3.0;
        detail.push(format!("{name} delta {:.5} ({z:.2} se)", r.estimate));
    }
    for (name, q, target) in
        [("value", Quantity::Value, 2.0), ("delta", Quantity::DELTA, 1.5), ("vega", Quantity::VEGA, 2.0)]
    {
        let beta = rates(&greek(GreekMethod::Vibrato(10), q), 71).beta;
        ok &= (beta - target).abs() <= 0.4;
        detail.push(format!("vibrato {name} beta {beta:.3}"));
    }
    let b10 = rates(&greek(GreekMethod::SplitPathwise(10), Quantity::DELTA), 72).beta;
    let b500 = rates(&greek(GreekMethod::SplitPathwise(500), Quantity::DELTA), 72).beta;
    ok &= b500 > b10;
    detail.push(format!("split delta beta s=10 {b10:.3}, s=500 {b500:.3}"));
    (ok, detail.join(", "))
}

fn criterion_7() -> Outcome {
    let h = 1e-5;
    let dt: f64 = 1.0 / 64.0;
    let mut worst: f64 = 0.0;
    type Bump = fn(f64) -> ModelSpec;
    let params: [(ParamSelector, Bump, f64); 3] = [
        (ParamSelector::InitialState(0), |x| ModelSpec::gbm(R, SIGMA, x).unwrap(), 1.0),
        (ParamSelector::Volatility, |s| ModelSpec::gbm(R, s, 1.0).unwrap(), SIGMA),
        (ParamSelector::Drift, |a| ModelSpec::gbm(a, SIGMA, 1.0).unwrap(), R),
    ];
    for (param, bump, theta) in params {
        for path in 0..1000u64 {
            let mut s = StreamKey::new(80, 9, 6, path).stream();
            let dw: Vec<f64> = (0..64).map(|_| s.normal() * dt.sqrt()).collect();
            let t = tangent_path(&bump(theta), Scheme::Milstein, dt, &dw, param).unwrap();
            let up = tangent_path(&bump(theta + h), Scheme::Milstein, dt, &dw, param).unwrap().values;
            let down = tangent_path(&bump(theta - h), Scheme::Milstein, dt, &dw, param).unwrap().values;
            let fd = (up[64] - down[64]) / (2.0 * h);
            worst = worst.max((t.tangents[64] - fd).abs() / t.tangents[64].abs().max(1e-3));
        }
    }
    (worst <= 1e-4, format!("max relative error {worst:.2e} over 3 x 1000 paths"))
}

fn criterion_8() -> Outcome {
    let (lambda, mu, sig) = (1.0, -0.1, 0.2);
    let merton = ModelSpec::merton(R, SIGMA, 1.0, lambda, mu, sig).unwrap();
    let spec = PayoffSpec::call(1.0, SchemeMode::MilsteinSmoothed).with_discount(discount());
    let s = PricingSampler::new(merton, spec, 1.0).unwrap();
    let (exact, tail) = merton_call(1.0, 1.0, 1.0, R, SIGMA, lambda, mu, sig, 80);
    let mut ok = tail < 1e-12;
    let mut detail = Vec::new();
    for (i, eps) in [0.01, 0.005].into_iter().enumerate() {
        let r = run_mlmc(&s, &MlmcConfig::new(eps, 90 + i as u64)).unwrap();
        ok &= (r.estimate - exact).abs() < 3.0 * eps;
        detail.push(format!("eps {eps}: {:.6} vs {exact:.6}", r.estimate));
    }
    let thinned = ModelSpec::merton_state_dependent(R, SIGMA, 1.0, 5.0, 0.0, 0.3).unwrap();
    let sampler = |mc| {
        PricingSampler::new(thinned.clone(), PayoffSpec::call(1.0, SchemeMode::MilsteinSmoothed), 1.0)
            .unwrap()
            .with_measure_change(mc)
    };
    // Plain thinning variance comes from rare acceptance mismatches, so its fitted slope
    // needs more samples than the other rate studies to be stable.
    let plain = rates_n(&sampler(false), 2 * RATE_SAMPLES, 8).beta;
    let changed = rates_n(&sampler(true), 2 * RATE_SAMPLES, 8).beta;
    ok &= changed - plain >= 0.5;
    detail.push(format!("thinning beta {plain:.3} -> {changed:.3} with the change of measure"));
    (ok, detail.join(", "))
}

fn criterion_9() -> Outcome {
    use PayoffFamily::*;
    let n = 1_000_000;
    let z = |s: &dyn LevelSampler| {
        let fine = sample_level(s, 3, 91, 9, 0, n).unwrap();
        let coarse = sample_level(s, 4, 92, 9, 0, n).unwrap();
        let se = (fine.var_fine().unwrap() / n as f64 + coarse.var_coarse().unwrap() / n as f64).sqrt();
        (fine.mean_fine() - coarse.mean_coarse()).abs() / se
    };
    let families = [European, Asian, Lookback, Barrier(BarrierKind::DownOut), Digital];
    let mut ok = true;
    let mut detail = Vec::new();
    for f in families {
        let v = z(&pricing(f, SchemeMode::MilsteinSmoothed));
        ok &= v < 3.0;
        detail.push(format!("{f:?} {v:.2}"));
    }
    let cc = ModelSpec::clark_cameron([1.0, 1.0]);
    let anti = PricingSampler::new(cc, PayoffSpec::call(1.0, SchemeMode::Antithetic).with_component(1), 1.0).unwrap();
    let v = z(&anti);
    ok &= v < 3.0;
    detail.push(format!("antithetic {v:.2}"));
    let merton = ModelSpec::merton(R, SIGMA, 1.0, 1.0, -0.1, 0.2).unwrap();
    for f in families {
        let spec = PayoffSpec::new(f, SchemeMode::MilsteinSmoothed).with_strike(1.0).with_barrier(0.85);
        let v = z(&PricingSampler::new(merton.clone(), spec, 1.0).unwrap());
        ok &= v < 3.0;
        detail.push(format!("jump {f:?} {v:.2}"));
    }
    (ok, format!("|z| at level 3: {}", detail.join(", ")))
}

fn criterion_10() -> Outcome {
    let cfg = ExperimentConfig::from_toml(
        r#"
        [model]
        name = "gbm"
        params = { alpha = 0.05, beta = 0.2 }
        [payoff]
        family = "lookback"
        discount = 0.951229424500714
        [scheme]
        mode = "milstein"
        [run]
        eps = [0.01, 0.005]
        seed = 10
        "#,
    )
    .unwrap();
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    execute(Command::Compare, &cfg, a.path(), Some(1)).unwrap();
    execute(Command::Compare, &cfg, b.path(), Some(8)).unwrap();
    let mut ok = true;
    for f in ["levels.csv", "summary.csv", "compare.csv"] {
        ok &= std::fs::read(a.path().join(f)).unwrap() == std::fs::read(b.path().join(f)).unwrap();
    }
    (ok, "levels.csv, summary.csv and compare.csv at 1 and 8 threads".into())
}

fn main() {
    let criteria: [(u32, fn() -> Outcome); 10] = [
        (1, criterion_1),
        (2, criterion_2),
        (3, criterion_3),
        (4, criterion_4),
        (5, criterion_5),
        (6, criterion_6),
        (7, criterion_7),
        (8, criterion_8),
        (9, criterion_9),
        (10, criterion_10),
    ];
    let only: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    let mut ran = 0;
    for (id, run) in criteria {
        if !only.is_empty() && !only.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let (pass, detail) = run();
        failed += usize::from(!pass);
        ran += 1;
        println!(
            "criterion {id:>2}: {} [{:.1}s] {detail}",
            if pass { "PASS" } else { "FAIL" },
            start.elapsed().as_secs_f64()
        );
    }
    println!("acceptance: {} of {ran} criteria passed", ran - failed);
    // Failures are reported above. Set MLMC_ACCEPTANCE_STRICT to turn them into a
    // non-zero exit status.
    if failed > 0 && std::env::var_os("MLMC_ACCEPTANCE_STRICT").is_some() {
        std::process::exit(1);
    }
}
