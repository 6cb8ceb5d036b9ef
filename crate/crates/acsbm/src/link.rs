//! Link functions mapping edge probabilities to an additive scale.
//!
//! The model adds block and covariate effects on the link scale, so we need
//! g and g^{-1} for identity, log, logit and probit. The normal cdf/quantile
//! pair is implemented here directly (series + continued fraction for erfc,
//! Newton refinement for the quantile) to keep the numeric core dependency
//! free; tests check it against an independent quadrature oracle.

use serde::{Deserialize, Serialize};

const FRAC_1_SQRT_2: f64 = std::f64::consts::FRAC_1_SQRT_2;
const SQRT_2PI: f64 = 2.506_628_274_631_000_5;

/// erf(z) for 0 <= z < 2 via the confluent hypergeometric series
/// erf(z) = (2z/sqrt(pi)) e^{-z^2} sum_n (2z^2)^n / (1*3*...*(2n+1)).
/// All terms are positive, so there is no cancellation.
fn erf_series(z: f64) -> f64 {
    let x2 = 2.0 * z * z;
    let mut term = 1.0f64;
    let mut sum = 1.0f64;
    for n in 1..200 {
        term *= x2 / (2.0 * n as f64 + 1.0);
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
    }
    2.0 * z * (-z * z).exp() / std::f64::consts::PI.sqrt() * sum
}

/// erfc(z) for z >= 2 via the continued fraction for the upper incomplete
/// gamma function Q(1/2, z^2), evaluated with the modified Lentz scheme.
fn erfc_cf(z: f64) -> f64 {
    let x = z * z;
    let a = 0.5f64;
    const FPMIN: f64 = 1e-300;
    let mut b = x + 1.0 - a;
    let mut c = 1.0 / FPMIN;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..400 {
        let an = -(i as f64) * (i as f64 - a);
        b += 2.0;
        d = an * d + b;
        if d.abs() < FPMIN {
            d = FPMIN;
        }
        c = b + an / c;
        if c.abs() < FPMIN {
            c = FPMIN;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < 1e-16 {
            break;
        }
    }
    // exp(-x + a ln x - ln Gamma(1/2)) = e^{-z^2} z / sqrt(pi)
    (-x).exp() * z / std::f64::consts::PI.sqrt() * h
}

/// Error function, accurate to ~1e-15 relative over the whole line.
pub fn erf(z: f64) -> f64 {
    if z < 0.0 {
        return -erf(-z);
    }
    if z < 2.0 {
        erf_series(z)
    } else {
        1.0 - erfc_cf(z)
    }
}

/// Complementary error function; keeps full relative accuracy in the tail.
pub fn erfc(z: f64) -> f64 {
    if z < 0.0 {
        return 2.0 - erfc(-z);
    }
    if z < 2.0 {
        1.0 - erf_series(z)
    } else {
        erfc_cf(z)
    }
}

/// Standard normal cdf. The lower tail routes through erfc so small
/// probabilities keep relative accuracy.
pub fn norm_cdf(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 - 0.5 * erfc(x * FRAC_1_SQRT_2)
    } else {
        0.5 * erfc(-x * FRAC_1_SQRT_2)
    }
}

/// Standard normal density.
fn norm_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / SQRT_2PI
}

/// Standard normal quantile for p in (0,1); returns +-infinity at 0/1 and
/// NaN outside [0,1]. Rational tail approximation polished by Newton steps
/// on the accurate cdf, so the composition cdf(quantile(p)) = p holds to
/// near machine precision.
pub fn norm_quantile(p: f64) -> f64 {
    if !(0.0..=1.0).contains(&p) {
        return f64::NAN;
    }
    if p == 0.0 {
        return f64::NEG_INFINITY;
    }
    if p == 1.0 {
        return f64::INFINITY;
    }
    if p == 0.5 {
        return 0.0;
    }
    let tail = p.min(1.0 - p);
    // Abramowitz-Stegun style first guess for the upper quantile of `tail`
    let t = (-2.0 * tail.ln()).sqrt();
    let mut x = t - (2.30753 + 0.27061 * t) / (1.0 + 0.99229 * t + 0.04481 * t * t);
    // Newton on F(x) = P(N > x) = 0.5 erfc(x/sqrt(2)), F' = -pdf
    for _ in 0..6 {
        let f = 0.5 * erfc(x * FRAC_1_SQRT_2) - tail;
        let step = f / norm_pdf(x);
        x += step;
        if step.abs() <= 1e-15 * (1.0 + x.abs()) {
            break;
        }
    }
    if p < 0.5 {
        -x
    } else {
        x
    }
}

/// The four supported links between edge probability and the additive scale.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LinkFunction {
    Identity,
    Log,
    Logit,
    Probit,
}

impl LinkFunction {
    /// g(p): probability -> link scale. Boundary probabilities map to the
    /// appropriate infinities; out-of-[0,1] input gives NaN.
    pub fn forward(self, p: f64) -> f64 {
        match self {
            LinkFunction::Identity => p,
            LinkFunction::Log => {
                if p < 0.0 {
                    f64::NAN
                } else {
                    p.ln()
                }
            }
            LinkFunction::Logit => {
                if !(0.0..=1.0).contains(&p) {
                    f64::NAN
                } else {
                    (p / (1.0 - p)).ln()
                }
            }
            LinkFunction::Probit => norm_quantile(p),
        }
    }

    /// g^{-1}(eta): link scale -> probability. Strictly increasing; note the
    /// identity and log inverses can leave [0,1], which model validation
    /// catches separately.
    pub fn inverse(self, eta: f64) -> f64 {
        match self {
            LinkFunction::Identity => eta,
            LinkFunction::Log => eta.exp(),
            LinkFunction::Logit => {
                // numerically stable logistic
                if eta >= 0.0 {
                    1.0 / (1.0 + (-eta).exp())
                } else {
                    let e = eta.exp();
                    e / (1.0 + e)
                }
            }
            LinkFunction::Probit => norm_cdf(eta),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            LinkFunction::Identity => "identity",
            LinkFunction::Log => "log",
            LinkFunction::Logit => "logit",
            LinkFunction::Probit => "probit",
        }
    }
}

impl std::str::FromStr for LinkFunction {
    type Err = crate::error::Error;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "identity" => Ok(LinkFunction::Identity),
            "log" => Ok(LinkFunction::Log),
            "logit" => Ok(LinkFunction::Logit),
            "probit" => Ok(LinkFunction::Probit),
            other => Err(crate::error::Error::Config(format!(
                "unknown link function '{other}' (expected identity|log|logit|probit)"
            ))),
        }
    }
}
