use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::greeks::ParamSelector;
use crate::jumps::{Intensity, JumpCoefficient, JumpSpec, MarkLaw};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("unknown model `{0}`")]
    UnknownModel(String),
    #[error("model `{model}` is missing parameter `{param}`")]
    MissingParameter { model: String, param: String },
    #[error("model `{model}` does not take parameter `{param}`")]
    UnexpectedParameter { model: String, param: String },
    #[error("parameter `{param}` = {value} is out of range: {reason}")]
    OutOfRange { param: String, value: f64, reason: &'static str },
    #[error("invalid correlation matrix: {0}")]
    Correlation(String),
    #[error("initial state has length {got}, expected {expected}")]
    Dimension { expected: usize, got: usize },
}

/// Drift, diffusion and Milstein tensor of `dx = f(x) dt + g(x) dw`.
///
/// Layouts are row-major: `diffusion[i * m + j]` is `g_ij` and
/// `milstein[(i * m + j) * m + k]` is `h_ijk = 1/2 sum_l g_lj dg_ik/dx_l`.
pub trait Coefficients: Send + Sync + fmt::Debug {
    fn drift(&self, x: &[f64], out: &mut [f64]);
    fn diffusion(&self, x: &[f64], out: &mut [f64]);
    fn milstein(&self, x: &[f64], out: &mut [f64]);

    /// Fast path for scalar models. Only called when `d = m = 1`.
    fn scalar(&self, x: f64) -> ScalarCoefficients {
        let (mut f, mut g, mut h) = ([0.0], [0.0], [0.0]);
        self.drift(&[x], &mut f);
        self.diffusion(&[x], &mut g);
        self.milstein(&[x], &mut h);
        ScalarCoefficients { drift: f[0], diffusion: g[0], milstein: h[0] }
    }

    /// Analytic state and parameter derivatives for scalar models, used by the
    /// pathwise sensitivity recursions. `None` if the model does not provide them.
    fn sensitivity(&self, _x: f64, _param: ParamSelector) -> Option<ScalarSensitivity> {
        None
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScalarCoefficients {
    pub drift: f64,
    pub diffusion: f64,
    pub milstein: f64,
}

/// Coefficients of a scalar model together with their derivatives in the state `x`
/// and in a model parameter `theta`.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct ScalarSensitivity {
    pub f: f64,
    pub g: f64,
    pub h: f64,
    pub f_x: f64,
    pub g_x: f64,
    pub h_x: f64,
    pub f_theta: f64,
    pub g_theta: f64,
    pub h_theta: f64,
}

#[derive(Debug, Clone, Copy)]
struct Gbm {
    drift: f64,
    vol: f64,
}

impl Coefficients for Gbm {
    fn drift(&self, x: &[f64], out: &mut [f64]) {
        out[0] = self.drift * x[0];
    }
    fn diffusion(&self, x: &[f64], out: &mut [f64]) {
        out[0] = self.vol * x[0];
    }
    fn milstein(&self, x: &[f64], out: &mut [f64]) {
        out[0] = 0.5 * self.vol * self.vol * x[0];
    }
    fn scalar(&self, x: f64) -> ScalarCoefficients {
        ScalarCoefficients { drift: self.drift * x, diffusion: self.vol * x, milstein: 0.5 * self.vol * self.vol * x }
    }
    fn sensitivity(&self, x: f64, param: ParamSelector) -> Option<ScalarSensitivity> {
        let (a, b) = (self.drift, self.vol);
        let mut s = ScalarSensitivity {
            f: a * x,
            g: b * x,
            h: 0.5 * b * b * x,
            f_x: a,
            g_x: b,
            h_x: 0.5 * b * b,
            ..Default::default()
        };
        match param {
            ParamSelector::InitialState(0) => {}
            ParamSelector::InitialState(_) => return None,
            ParamSelector::Drift => s.f_theta = x,
            ParamSelector::Volatility => {
                s.g_theta = x;
                s.h_theta = b * x;
            }
        }
        Some(s)
    }
}

/// Heston with full truncation: every square root is taken of `max(v, 0)`.
#[derive(Debug, Clone, Copy)]
struct Heston {
    rate: f64,
    kappa: f64,
    theta: f64,
    sigma: f64,
}

impl Coefficients for Heston {
    fn drift(&self, x: &[f64], out: &mut [f64]) {
        out[0] = self.rate * x[0];
        out[1] = self.kappa * (self.theta - x[1].max(0.0));
    }
    fn diffusion(&self, x: &[f64], out: &mut [f64]) {
        let sv = x[1].max(0.0).sqrt();
        out[0] = x[0] * sv;
        out[1] = 0.0;
        out[2] = 0.0;
        out[3] = self.sigma * sv;
    }
    fn milstein(&self, x: &[f64], out: &mut [f64]) {
        out.fill(0.0);
        let v = x[1].max(0.0);
        if v > 0.0 {
            // h_000, h_010, h_111
            out[0] = 0.5 * x[0] * v;
            out[2] = 0.25 * self.sigma * x[0];
            out[7] = 0.25 * self.sigma * self.sigma;
        }
    }
}

/// `dx1 = dw1`, `dx2 = x1 dw2`.
#[derive(Debug, Clone, Copy)]
struct ClarkCameron;

impl Coefficients for ClarkCameron {
    fn drift(&self, _x: &[f64], out: &mut [f64]) {
        out.fill(0.0);
    }
    fn diffusion(&self, x: &[f64], out: &mut [f64]) {
        out[0] = 1.0;
        out[1] = 0.0;
        out[2] = 0.0;
        out[3] = x[0];
    }
    fn milstein(&self, _x: &[f64], out: &mut [f64]) {
        out.fill(0.0);
        // h_101 = 1/2 g_00 dg_11/dx_0
        out[5] = 0.5;
    }
}

/// A fully specified SDE model.
#[derive(Clone)]
pub struct ModelSpec {
    label: String,
    dimension: usize,
    driver_dimension: usize,
    x0: Vec<f64>,
    correlation: Vec<f64>,
    correlation_factor: Vec<f64>,
    coefficients: Arc<dyn Coefficients>,
    jumps: Option<JumpSpec>,
    risk_free_rate: Option<f64>,
}

impl fmt::Debug for ModelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ModelSpec")
            .field("label", &self.label)
            .field("dimension", &self.dimension)
            .field("driver_dimension", &self.driver_dimension)
            .field("x0", &self.x0)
            .field("correlation", &self.correlation)
            .field("jumps", &self.jumps)
            .finish()
    }
}

impl ModelSpec {
    /// Builds a model from arbitrary coefficients. `correlation` is the row-major
    /// `m x m` correlation matrix of the driving Brownian motion.
    pub fn new(
        label: impl Into<String>,
        x0: Vec<f64>,
        driver_dimension: usize,
        correlation: Vec<f64>,
        coefficients: Arc<dyn Coefficients>,
    ) -> Result<Self, ModelError> {
        let m = driver_dimension;
        if x0.is_empty() {
            return Err(ModelError::Dimension { expected: 1, got: 0 });
        }
        if m == 0 || correlation.len() != m * m {
            return Err(ModelError::Correlation(format!(
                "expected {} entries for a {m}x{m} matrix, got {}",
                m * m,
                correlation.len()
            )));
        }
        for i in 0..m {
            if correlation[i * m + i] != 1.0 {
                return Err(ModelError::Correlation(format!("diagonal entry {i} is not 1")));
            }
            for j in 0..i {
                if correlation[i * m + j] != correlation[j * m + i] {
                    return Err(ModelError::Correlation(format!("entries ({i},{j}) and ({j},{i}) differ")));
                }
            }
        }
        let correlation_factor = cholesky(&correlation, m)
            .ok_or_else(|| ModelError::Correlation("matrix is not positive semi-definite".into()))?;
        Ok(Self {
            label: label.into(),
            dimension: x0.len(),
            driver_dimension: m,
            x0,
            correlation,
            correlation_factor,
            coefficients,
            jumps: None,
            risk_free_rate: None,
        })
    }

    /// Scalar model driven by a single Brownian motion.
    pub fn scalar(label: impl Into<String>, x0: f64, coefficients: Arc<dyn Coefficients>) -> Self {
        Self::new(label, vec![x0], 1, vec![1.0], coefficients).expect("scalar model is always valid")
    }

    pub fn gbm(drift: f64, vol: f64, x0: f64) -> Result<Self, ModelError> {
        positive("beta", vol)?;
        positive("x0", x0)?;
        let mut model = Self::scalar("gbm", x0, Arc::new(Gbm { drift, vol }));
        model.risk_free_rate = Some(drift);
        Ok(model)
    }

    /// Merton jump diffusion `dx = a x dt + b x dw + x dJ` with lognormal marks
    /// `log Y ~ N(jump_mu, jump_sigma^2)`. The diffusion drift is compensated to
    /// `alpha - lambda * (E[Y] - 1)` so that `alpha` is the risk-neutral growth rate.
    pub fn merton(
        alpha: f64,
        beta: f64,
        x0: f64,
        lambda: f64,
        jump_mu: f64,
        jump_sigma: f64,
    ) -> Result<Self, ModelError> {
        positive("beta", beta)?;
        positive("x0", x0)?;
        if !(lambda >= 0.0) {
            return Err(ModelError::OutOfRange {
                param: "lambda".into(),
                value: lambda,
                reason: "must be nonnegative",
            });
        }
        if !(jump_sigma >= 0.0) {
            return Err(ModelError::OutOfRange {
                param: "jump_sigma".into(),
                value: jump_sigma,
                reason: "must be nonnegative",
            });
        }
        let kappa = (jump_mu + 0.5 * jump_sigma * jump_sigma).exp() - 1.0;
        let mut model = Self::scalar("merton", x0, Arc::new(Gbm { drift: alpha - lambda * kappa, vol: beta }));
        model.risk_free_rate = Some(alpha);
        model.jumps = Some(JumpSpec {
            intensity: Intensity::Constant(lambda),
            marks: MarkLaw::LogNormal { mu: jump_mu, sigma: jump_sigma },
            coefficient: JumpCoefficient::Proportional(1.0),
        });
        Ok(model)
    }

    /// Jump diffusion with the state-dependent intensity `lambda_max / (1 + x+)`,
    /// simulated by thinning a rate-`lambda_max` Poisson process. The drift is not
    /// compensated.
    pub fn merton_state_dependent(
        alpha: f64,
        beta: f64,
        x0: f64,
        lambda_max: f64,
        jump_mu: f64,
        jump_sigma: f64,
    ) -> Result<Self, ModelError> {
        positive("lambda_max", lambda_max)?;
        let mut model = Self::merton(alpha, beta, x0, 0.0, jump_mu, jump_sigma)?;
        model.label = "merton_thinned".into();
        if let Some(j) = model.jumps.as_mut() {
            j.intensity = Intensity::StateDependent {
                rate: Arc::new(move |x: f64| lambda_max / (1.0 + x.max(0.0))),
                bound: lambda_max,
            };
        }
        Ok(model)
    }

    #[allow(clippy::too_many_arguments)]
    pub fn heston(r: f64, kappa: f64, theta: f64, sigma: f64, rho: f64, s0: f64, v0: f64) -> Result<Self, ModelError> {
        positive("kappa", kappa)?;
        positive("theta", theta)?;
        positive("sigma", sigma)?;
        positive("s0", s0)?;
        if !(v0 >= 0.0) {
            return Err(ModelError::OutOfRange { param: "v0".into(), value: v0, reason: "must be nonnegative" });
        }
        if !(-1.0..=1.0).contains(&rho) {
            return Err(ModelError::OutOfRange { param: "rho".into(), value: rho, reason: "must lie in [-1, 1]" });
        }
        let mut model = Self::new(
            "heston",
            vec![s0, v0],
            2,
            vec![1.0, rho, rho, 1.0],
            Arc::new(Heston { rate: r, kappa, theta, sigma }),
        )?;
        model.risk_free_rate = Some(r);
        Ok(model)
    }

    pub fn clark_cameron(x0: [f64; 2]) -> Self {
        Self::new("clark_cameron", x0.to_vec(), 2, vec![1.0, 0.0, 0.0, 1.0], Arc::new(ClarkCameron))
            .expect("identity correlation is valid")
    }

    pub fn with_jumps(mut self, jumps: JumpSpec) -> Self {
        self.jumps = Some(jumps);
        self
    }

    pub fn with_x0(mut self, x0: Vec<f64>) -> Result<Self, ModelError> {
        if x0.len() != self.dimension {
            return Err(ModelError::Dimension { expected: self.dimension, got: x0.len() });
        }
        self.x0 = x0;
        Ok(self)
    }

    pub fn label(&self) -> &str {
        &self.label
    }
    pub fn dimension(&self) -> usize {
        self.dimension
    }
    pub fn driver_dimension(&self) -> usize {
        self.driver_dimension
    }
    pub fn x0(&self) -> &[f64] {
        &self.x0
    }
    pub fn correlation(&self) -> &[f64] {
        &self.correlation
    }
    /// Lower-triangular factor `L` with `L L^T = correlation`.
    pub fn correlation_factor(&self) -> &[f64] {
        &self.correlation_factor
    }
    pub fn jumps(&self) -> Option<&JumpSpec> {
        self.jumps.as_ref()
    }
    /// Continuously compounded rate used to discount payoffs, when the model has one.
    pub fn risk_free_rate(&self) -> Option<f64> {
        self.risk_free_rate
    }
    pub fn is_scalar(&self) -> bool {
        self.dimension == 1 && self.driver_dimension == 1
    }
    pub fn coefficients(&self) -> &dyn Coefficients {
        self.coefficients.as_ref()
    }

    pub fn drift(&self, x: &[f64], out: &mut [f64]) {
        self.coefficients.drift(x, out)
    }
    pub fn diffusion(&self, x: &[f64], out: &mut [f64]) {
        self.coefficients.diffusion(x, out)
    }
    pub fn milstein(&self, x: &[f64], out: &mut [f64]) {
        self.coefficients.milstein(x, out)
    }
    pub fn scalar_coefficients(&self, x: f64) -> ScalarCoefficients {
        self.coefficients.scalar(x)
    }
    pub fn sensitivity(&self, x: f64, param: ParamSelector) -> Option<ScalarSensitivity> {
        self.coefficients.sensitivity(x, param)
    }
}

fn positive(param: &str, value: f64) -> Result<(), ModelError> {
    if value > 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(ModelError::OutOfRange { param: param.into(), value, reason: "must be positive" })
    }
}

/// Lower-triangular factor of a symmetric positive semi-definite `n x n` matrix.
/// Zero pivots (singular but PSD matrices) produce zero columns.
pub fn cholesky(a: &[f64], n: usize) -> Option<Vec<f64>> {
    const TOL: f64 = 1e-12;
    let mut l = vec![0.0; n * n];
    for j in 0..n {
        let mut d = a[j * n + j];
        for k in 0..j {
            d -= l[j * n + k] * l[j * n + k];
        }
        if d < -TOL {
            return None;
        }
        let pivot = d.max(0.0).sqrt();
        l[j * n + j] = pivot;
        for i in j + 1..n {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k];
            }
            if pivot > TOL {
                l[i * n + j] = s / pivot;
            } else if s.abs() > 1e-9 {
                return None;
            }
        }
    }
    Some(l)
}

struct Params<'a> {
    model: &'a str,
    values: &'a BTreeMap<String, f64>,
    allowed: &'static [&'static str],
}

impl Params<'_> {
    fn check_unknown(&self) -> Result<(), ModelError> {
        match self.values.keys().find(|k| !self.allowed.contains(&k.as_str())) {
            Some(k) => Err(ModelError::UnexpectedParameter { model: self.model.into(), param: k.clone() }),
            None => Ok(()),
        }
    }

    fn get(&self, name: &str) -> Result<f64, ModelError> {
        self.values
            .get(name)
            .copied()
            .ok_or_else(|| ModelError::MissingParameter { model: self.model.into(), param: name.into() })
    }

    fn get_or(&self, name: &str, default: f64) -> f64 {
        self.values.get(name).copied().unwrap_or(default)
    }
}

/// Builds one of the built-in models by name.
///
/// | name            | parameters                                                   |
/// |-----------------|--------------------------------------------------------------|
/// | `gbm`           | `alpha`, `beta`, optional `x0` (default 1)                   |
/// | `heston`        | `r`, `kappa`, `theta`, `sigma`, `rho`, `s0`, `v0`            |
/// | `clark_cameron` | optional `x1`, `x2` (default 0)                              |
/// | `merton`        | `alpha`, `beta`, `lambda`, `jump_mu`, `jump_sigma`, opt. `x0`|
/// | `merton_thinned`| `alpha`, `beta`, `lambda_max`, `jump_mu`, `jump_sigma`, opt. `x0`|
pub fn make_model(name: &str, params: &BTreeMap<String, f64>) -> Result<ModelSpec, ModelError> {
    let p = |allowed| Params { model: name, values: params, allowed };
    match name {
        "gbm" => {
            let p = p(&["alpha", "beta", "x0"]);
            p.check_unknown()?;
            ModelSpec::gbm(p.get("alpha")?, p.get("beta")?, p.get_or("x0", 1.0))
        }
        "heston" => {
            let p = p(&["r", "kappa", "theta", "sigma", "rho", "s0", "v0"]);
            p.check_unknown()?;
            ModelSpec::heston(
                p.get("r")?,
                p.get("kappa")?,
                p.get("theta")?,
                p.get("sigma")?,
                p.get("rho")?,
                p.get("s0")?,
                p.get("v0")?,
            )
        }
        "clark_cameron" => {
            let p = p(&["x1", "x2"]);
            p.check_unknown()?;
            Ok(ModelSpec::clark_cameron([p.get_or("x1", 0.0), p.get_or("x2", 0.0)]))
        }
        "merton" => {
            let p = p(&["alpha", "beta", "x0", "lambda", "jump_mu", "jump_sigma"]);
            p.check_unknown()?;
            ModelSpec::merton(
                p.get("alpha")?,
                p.get("beta")?,
                p.get_or("x0", 1.0),
                p.get("lambda")?,
                p.get("jump_mu")?,
                p.get("jump_sigma")?,
            )
        }
        "merton_thinned" => {
            let p = p(&["alpha", "beta", "x0", "lambda_max", "jump_mu", "jump_sigma"]);
            p.check_unknown()?;
            ModelSpec::merton_state_dependent(
                p.get("alpha")?,
                p.get("beta")?,
                p.get_or("x0", 1.0),
                p.get("lambda_max")?,
                p.get("jump_mu")?,
                p.get("jump_sigma")?,
            )
        }
        other => Err(ModelError::UnknownModel(other.into())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(kv: &[(&str, f64)]) -> BTreeMap<String, f64> {
        kv.iter().map(|(k, v)| (k.to_string(), *v)).collect()
    }

    #[test]
    fn gbm_coefficients_at_one() {
        let m = make_model("gbm", &params(&[("alpha", 0.05), ("beta", 0.2)])).unwrap();
        let c = m.scalar_coefficients(1.0);
        assert!((c.drift - 0.05).abs() < 1e-15);
        assert!((c.diffusion - 0.2).abs() < 1e-15);
        assert!((c.milstein - 0.02).abs() < 1e-15);
        assert_eq!(m.x0(), &[1.0]);
    }

    #[test]
    fn scalar_tensor_matches_half_g_prime_g() {
        let m = ModelSpec::gbm(0.05, 0.2, 1.0).unwrap();
        for &x in &[0.3, 1.0, 2.5, 7.0] {
            let e = 1e-6;
            let gp = (m.scalar_coefficients(x + e).diffusion - m.scalar_coefficients(x - e).diffusion) / (2.0 * e);
            let c = m.scalar_coefficients(x);
            assert!((c.milstein - 0.5 * gp * c.diffusion).abs() < 1e-8);
        }
    }

    #[test]
    fn clark_cameron_structure() {
        let m = make_model("clark_cameron", &BTreeMap::new()).unwrap();
        assert_eq!((m.dimension(), m.driver_dimension()), (2, 2));
        assert_eq!(m.correlation(), &[1.0, 0.0, 0.0, 1.0]);
        let mut f = [9.0; 2];
        let mut g = [9.0; 4];
        m.drift(&[3.0, 7.0], &mut f);
        m.diffusion(&[3.0, 7.0], &mut g);
        assert_eq!(f, [0.0, 0.0]);
        assert_eq!(g, [1.0, 0.0, 0.0, 3.0]);
    }

    #[test]
    fn heston_zero_variance_has_no_asset_noise() {
        let m = ModelSpec::heston(0.05, 2.0, 0.04, 0.3, -0.7, 100.0, 0.0).unwrap();
        let mut g = [1.0; 4];
        m.diffusion(&[100.0, 0.0], &mut g);
        assert_eq!(g[0], 0.0);
        let mut g = [1.0; 4];
        m.diffusion(&[100.0, -0.01], &mut g);
        assert_eq!(g, [0.0; 4]);
    }

    #[test]
    fn errors() {
        assert!(matches!(make_model("vasicek", &BTreeMap::new()), Err(ModelError::UnknownModel(_))));
        assert!(matches!(make_model("gbm", &params(&[("alpha", 0.05)])), Err(ModelError::MissingParameter { .. })));
        assert!(matches!(
            make_model("gbm", &params(&[("alpha", 0.05), ("beta", -0.2)])),
            Err(ModelError::OutOfRange { .. })
        ));
        assert!(matches!(
            make_model("gbm", &params(&[("alpha", 0.05), ("beta", 0.2), ("gamma", 1.0)])),
            Err(ModelError::UnexpectedParameter { .. })
        ));
        let heston = params(&[
            ("r", 0.0),
            ("kappa", 1.0),
            ("theta", 0.04),
            ("sigma", 0.3),
            ("rho", 1.5),
            ("s0", 1.0),
            ("v0", 0.04),
        ]);
        assert!(matches!(make_model("heston", &heston), Err(ModelError::OutOfRange { .. })));
    }

    #[test]
    fn correlation_validation() {
        let c: Arc<dyn Coefficients> = Arc::new(ClarkCameron);
        assert!(ModelSpec::new("x", vec![0.0, 0.0], 2, vec![1.0, 0.5, 0.4, 1.0], c.clone()).is_err());
        assert!(ModelSpec::new("x", vec![0.0, 0.0], 2, vec![1.1, 0.0, 0.0, 1.0], c.clone()).is_err());
        let ok = ModelSpec::new("x", vec![0.0, 0.0], 2, vec![1.0, 1.0, 1.0, 1.0], c).unwrap();
        assert_eq!(ok.correlation_factor(), &[1.0, 0.0, 1.0, 0.0]);
    }

    #[test]
    fn cholesky_reconstructs() {
        let a = [1.0, 0.3, -0.2, 0.3, 1.0, 0.5, -0.2, 0.5, 1.0];
        let l = cholesky(&a, 3).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let s: f64 = (0..3).map(|k| l[i * 3 + k] * l[j * 3 + k]).sum();
                assert!((s - a[i * 3 + j]).abs() < 1e-14);
            }
        }
        assert!(cholesky(&[1.0, 2.0, 2.0, 1.0], 2).is_none());
    }
}
