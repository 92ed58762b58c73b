//! Algorithm parameters: the theory-mode formulas and the desk-scale
//! practical defaults.

use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{invalid, Error, Result};

/// A positive quantity stored as its base-10 logarithm.
///
/// Theory-mode thresholds routinely fall far below `f64::MIN_POSITIVE`; the
/// logarithm keeps them comparable. Serializes as a JSON number when the
/// value is a normal `f64`, otherwise as a string such as `"3.2e-4512"`.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd)]
pub struct Magnitude {
    log10: f64,
}

impl Magnitude {
    pub fn new(value: f64) -> Result<Self> {
        if !(value > 0.0) || !value.is_finite() {
            return invalid(format!("magnitude must be positive and finite, got {value}"));
        }
        Ok(Self { log10: value.log10() })
    }

    pub fn from_log10(log10: f64) -> Self {
        Self { log10 }
    }

    pub fn log10(self) -> f64 {
        self.log10
    }

    /// The value as `f64`; may underflow to 0 or overflow to infinity.
    /// Values within rounding of an integer come back as that integer, so
    /// counts survive the trip through the logarithm.
    pub fn value(self) -> f64 {
        let v = 10f64.powf(self.log10);
        let r = v.round();
        if (1.0..9e15).contains(&r) && (v - r).abs() <= 1e-12 * r {
            r
        } else {
            v
        }
    }

    /// Whether [`Magnitude::value`] is a normal float.
    pub fn is_representable(self) -> bool {
        self.value().is_normal()
    }

    pub fn pow(self, e: f64) -> Self {
        Self { log10: self.log10 * e }
    }

    pub fn scale(self, c: f64) -> Self {
        Self { log10: self.log10 + c.log10() }
    }
}

// Products and quotients are sums and differences of logarithms.
#[allow(clippy::suspicious_arithmetic_impl)]
impl std::ops::Mul for Magnitude {
    type Output = Self;

    fn mul(self, o: Self) -> Self {
        Self { log10: self.log10 + o.log10 }
    }
}

#[allow(clippy::suspicious_arithmetic_impl)]
impl std::ops::Div for Magnitude {
    type Output = Self;

    fn div(self, o: Self) -> Self {
        Self { log10: self.log10 - o.log10 }
    }
}

impl fmt::Display for Magnitude {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_representable() {
            write!(f, "{:e}", self.value())
        } else {
            let exp = self.log10.floor();
            let mantissa = 10f64.powf(self.log10 - exp);
            write!(f, "{mantissa:.15}e{exp}")
        }
    }
}

impl Serialize for Magnitude {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        if self.is_representable() {
            s.serialize_f64(self.value())
        } else {
            s.serialize_str(&self.to_string())
        }
    }
}

impl<'de> Deserialize<'de> for Magnitude {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Num(f64),
            Text(String),
        }
        match Repr::deserialize(d)? {
            Repr::Num(v) => Magnitude::new(v).map_err(serde::de::Error::custom),
            Repr::Text(t) => parse_magnitude(&t).map_err(serde::de::Error::custom),
        }
    }
}

fn parse_magnitude(text: &str) -> Result<Magnitude> {
    let t = text.trim();
    let (mant, exp) = match t.split_once(['e', 'E']) {
        Some((m, e)) => (m, e),
        None => (t, "0"),
    };
    let m: f64 = mant.parse().map_err(|_| Error::InvalidArgument(format!("bad magnitude {text:?}")))?;
    let e: f64 = exp.parse().map_err(|_| Error::InvalidArgument(format!("bad magnitude {text:?}")))?;
    if !(m > 0.0) {
        return invalid(format!("magnitude must be positive, got {text:?}"));
    }
    Ok(Magnitude::from_log10(m.log10() + e))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamMode {
    Theory,
    Practical,
}

/// How the spectral thresholds `η′`, `ν` and the cluster scale `Δ` are set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Thresholds {
    /// Closed-form values.
    Fixed { eta: Magnitude, eta_prime: Magnitude, nu: Magnitude, delta: Magnitude },
    /// Per order, `η′_ℓ = max(multiplier · measured error_ℓ, floor)` unless
    /// `η′` is overridden; `ν` defaults to the smallest `η′_ℓ` and `Δ` to `ν`.
    Measured {
        multiplier: f64,
        floor: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        eta_prime: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        nu: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        delta: Option<f64>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamSet {
    pub mode: ParamMode,
    pub k: usize,
    pub d: usize,
    #[serde(rename = "R")]
    pub norm_bound: f64,
    pub epsilon: f64,
    #[serde(rename = "C", default, skip_serializing_if = "Option::is_none")]
    pub c: Option<f64>,
    pub tau: f64,
    pub xi: f64,
    pub thresholds: Thresholds,
    #[serde(rename = "N")]
    pub n_samples: Magnitude,
    #[serde(rename = "N_val")]
    pub n_val: Magnitude,
    pub orders: Vec<usize>,
    #[serde(default)]
    pub warnings: Vec<String>,
}

/// Thresholds after the measured moment error is known.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResolvedThresholds {
    pub eta: f64,
    /// Largest per-order threshold.
    pub eta_prime: f64,
    /// `(ℓ, η′_ℓ)` for every order.
    pub per_order: Vec<(usize, f64)>,
    pub nu: f64,
    pub delta: f64,
    pub tau: f64,
    pub xi: f64,
}

/// Sample counts above which theory mode declines to estimate.
pub const THEORY_SAMPLE_LIMIT: f64 = 1e9;
/// Practical sample counts below this raise a warning.
pub const LOW_SAMPLE_WARNING: f64 = 1e5;

fn check_common(k: usize, d: usize, norm_bound: f64, epsilon: f64) -> Result<()> {
    if k == 0 || d == 0 {
        return invalid("k and d must be at least 1");
    }
    if !(norm_bound >= 1.0 && norm_bound.is_finite()) {
        return invalid("R must be finite and >= 1");
    }
    if !(epsilon > 0.0 && epsilon <= 1.0) {
        return invalid("epsilon must lie in (0, 1]");
    }
    Ok(())
}

/// `{2, 4, …, 2k² + 2}`.
pub fn default_orders(k: usize) -> Vec<usize> {
    (1..=k * k + 1).map(|i| 2 * i).collect()
}

/// Parameters from the closed-form schedule, with `Δ^{O(k²)}` and the
/// sample-count exponent instantiated as `2k² + 2`.
pub fn theory_params(k: usize, d: usize, norm_bound: f64, epsilon: f64, c: f64) -> Result<ParamSet> {
    check_common(k, d, norm_bound, epsilon)?;
    if !(c > 0.0 && c < 1.0) {
        return invalid("C must lie in (0, 1)");
    }
    let kf = k as f64;
    let df = d as f64;
    let r = norm_bound;
    let big = 2.0 * kf * kf + 2.0;
    let m = |v: f64| Magnitude::new(v);
    let tau = c * epsilon / kf;
    let xi = c * epsilon / (kf * r);
    let delta = m(c * c)? * m(xi)?.pow(2.0) * m(tau)? * m(epsilon)? / m(2.0 * kf.powi(4) * df.powf(1.5) * r)?;
    let eta_prime = m(c * c)? * m(xi)?.pow(2.0) * m(tau)? * delta.pow(big) / m(df * r)?;
    let eta = eta_prime.pow(2.0);
    let n_samples = m(kf * df)?.pow(big) * m(r * r)? / eta.pow(2.0);
    let ratio = kf * r / epsilon;
    let n_val = Magnitude::new((ratio.powi(4) * ratio.ln().max(1.0)).ceil())?;
    let mut warnings = Vec::new();
    if n_samples.log10() > THEORY_SAMPLE_LIMIT.log10() {
        warnings.push(format!("theory sample count N = {n_samples} exceeds {THEORY_SAMPLE_LIMIT:e}"));
    }
    let set = ParamSet {
        mode: ParamMode::Theory,
        k,
        d,
        norm_bound,
        epsilon,
        c: Some(c),
        tau,
        xi,
        thresholds: Thresholds::Fixed { eta, eta_prime, nu: eta_prime, delta },
        n_samples,
        n_val,
        orders: default_orders(k),
        warnings,
    };
    set.check_orderings()?;
    Ok(set)
}

/// Optional replacements for practical defaults.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamOverrides {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub xi: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta_prime: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nu: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[serde(rename = "N", default, skip_serializing_if = "Option::is_none")]
    pub n_samples: Option<usize>,
    #[serde(rename = "N_val", default, skip_serializing_if = "Option::is_none")]
    pub n_val: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub orders: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub multiplier: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub floor: Option<f64>,
}

pub const DEFAULT_PRACTICAL_N: usize = 1_000_000;
pub const DEFAULT_PRACTICAL_N_VAL: usize = 100_000;
pub const DEFAULT_MULTIPLIER: f64 = 10.0;
pub const DEFAULT_FLOOR: f64 = 1e-3;

/// Desk-scale parameters. Thresholds are resolved later from the measured
/// moment error; see [`ParamSet::resolve`].
pub fn practical_params(
    k: usize,
    d: usize,
    norm_bound: f64,
    epsilon: f64,
    overrides: &ParamOverrides,
) -> Result<ParamSet> {
    check_common(k, d, norm_bound, epsilon)?;
    let kf = k as f64;
    let positive = |name: &str, v: Option<f64>| -> Result<()> {
        match v {
            Some(x) if !(x > 0.0 && x.is_finite()) => invalid(format!("{name} must be positive, got {x}")),
            _ => Ok(()),
        }
    };
    for (name, v) in [
        ("tau", overrides.tau),
        ("xi", overrides.xi),
        ("eta_prime", overrides.eta_prime),
        ("nu", overrides.nu),
        ("delta", overrides.delta),
        ("multiplier", overrides.multiplier),
        ("floor", overrides.floor),
    ] {
        positive(name, v)?;
    }
    let tau = overrides.tau.unwrap_or(epsilon / (4.0 * kf));
    let xi = overrides.xi.unwrap_or(epsilon / (4.0 * kf * norm_bound));
    if xi >= 2.0 {
        return invalid("xi must be below 2");
    }
    let n = overrides.n_samples.unwrap_or(DEFAULT_PRACTICAL_N);
    let n_val = overrides.n_val.unwrap_or(DEFAULT_PRACTICAL_N_VAL);
    if n == 0 || n_val == 0 {
        return invalid("sample counts must be positive");
    }
    let orders = overrides.orders.clone().unwrap_or_else(|| default_orders(k));
    if orders.is_empty() {
        return invalid("at least one moment order is required");
    }
    for &l in &orders {
        crate::hermite::HermiteOrder::even(l)?;
    }
    let mut warnings = Vec::new();
    if (n as f64) < LOW_SAMPLE_WARNING {
        warnings.push(format!("low sample count N = {n}"));
    }
    let set = ParamSet {
        mode: ParamMode::Practical,
        k,
        d,
        norm_bound,
        epsilon,
        c: None,
        tau,
        xi,
        thresholds: Thresholds::Measured {
            multiplier: overrides.multiplier.unwrap_or(DEFAULT_MULTIPLIER),
            floor: overrides.floor.unwrap_or(DEFAULT_FLOOR),
            eta_prime: overrides.eta_prime,
            nu: overrides.nu,
            delta: overrides.delta,
        },
        n_samples: Magnitude::new(n as f64)?,
        n_val: Magnitude::new(n_val as f64)?,
        orders,
        warnings,
    };
    set.check_orderings()?;
    Ok(set)
}

impl ParamSet {
    /// `N` as a count, if representable.
    pub fn n_samples_count(&self) -> Option<usize> {
        count(self.n_samples)
    }

    pub fn n_val_count(&self) -> Option<usize> {
        count(self.n_val)
    }

    /// Whether theory-mode sample counts are too large to run.
    pub fn refuses_estimation(&self) -> bool {
        self.mode == ParamMode::Theory && self.n_samples.log10() > THEORY_SAMPLE_LIMIT.log10()
    }

    /// Orderings that can be checked before the moment error is known.
    pub fn check_orderings(&self) -> Result<()> {
        if !(self.tau <= self.epsilon && self.epsilon <= 1.0) {
            return Err(Error::Infeasible(format!(
                "need tau <= epsilon <= 1, got tau={}, epsilon={}",
                self.tau, self.epsilon
            )));
        }
        match &self.thresholds {
            Thresholds::Fixed { eta, eta_prime, nu, delta } => {
                if !(eta <= eta_prime && nu <= delta && delta.log10() <= self.xi.log10() + 1e-12) {
                    return Err(Error::Infeasible("need eta <= eta' and nu <= delta <= xi".into()));
                }
            }
            Thresholds::Measured { eta_prime, nu, delta, .. } => {
                let nu = nu.or(*eta_prime);
                if let (Some(nu), Some(delta)) = (nu, delta) {
                    if nu > *delta {
                        return Err(Error::Infeasible(format!("need nu <= delta, got nu={nu}, delta={delta}")));
                    }
                }
            }
        }
        Ok(())
    }

    /// Concrete thresholds given the measured Frobenius error of each order's
    /// estimate (0 for exact moments). Orders missing from `measured` count
    /// as error 0.
    pub fn resolve(&self, measured: &[(usize, f64)]) -> Result<ResolvedThresholds> {
        let err_of = |l: usize| measured.iter().find(|(o, _)| *o == l).map_or(0.0, |(_, e)| *e);
        let resolved = match &self.thresholds {
            Thresholds::Fixed { eta, eta_prime, nu, delta } => ResolvedThresholds {
                eta: eta.value(),
                eta_prime: eta_prime.value(),
                per_order: self.orders.iter().map(|&l| (l, eta_prime.value())).collect(),
                nu: nu.value(),
                delta: delta.value(),
                tau: self.tau,
                xi: self.xi,
            },
            Thresholds::Measured { multiplier, floor, eta_prime, nu, delta } => {
                if let Some((l, e)) = measured.iter().find(|(_, e)| !(*e >= 0.0 && e.is_finite())) {
                    return invalid(format!("measured error at order {l} must be finite and >= 0, got {e}"));
                }
                let per_order: Vec<(usize, f64)> = self
                    .orders
                    .iter()
                    .map(|&l| (l, eta_prime.unwrap_or((multiplier * err_of(l)).max(*floor))))
                    .collect();
                let max = per_order.iter().map(|p| p.1).fold(0.0, f64::max);
                let min = per_order.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
                let nu = nu.unwrap_or(min);
                let delta = delta.unwrap_or(nu);
                ResolvedThresholds {
                    eta: max / multiplier.max(1.0),
                    eta_prime: max,
                    per_order,
                    nu,
                    delta,
                    tau: self.tau,
                    xi: self.xi,
                }
            }
        };
        let r = &resolved;
        if !(r.eta <= r.eta_prime && r.nu <= r.delta && r.tau <= self.epsilon) {
            return Err(Error::Infeasible(format!(
                "resolved thresholds violate eta <= eta', nu <= delta, tau <= epsilon: {r:?}"
            )));
        }
        if r.per_order.iter().any(|p| !(p.1 > 0.0)) || !(r.nu > 0.0) {
            return Err(Error::Infeasible("thresholds underflow in double precision".into()));
        }
        Ok(resolved)
    }
}

impl ResolvedThresholds {
    /// `η′_ℓ`, or the largest threshold for an order not listed.
    pub fn eta_prime_for(&self, order: usize) -> f64 {
        self.per_order.iter().find(|p| p.0 == order).map_or(self.eta_prime, |p| p.1)
    }
}

fn count(m: Magnitude) -> Option<usize> {
    let v = m.value().round();
    if v.is_finite() && v >= 1.0 && v <= usize::MAX as f64 {
        Some(v as usize)
    } else {
        None
    }
}
