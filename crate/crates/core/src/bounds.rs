//! Concentration envelopes and the intermediate estimates behind them.
//!
//! Exponents are kept in log space; bounds are `exp(-exponent)` clamped to
//! `(0, 1]`.

use std::fmt;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::fmt_float;

fn positive(name: &'static str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::param(
            name,
            format!("must be positive and finite, got {v}"),
        ))
    }
}

fn nonnegative(name: &'static str, v: f64) -> Result<()> {
    if v >= 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::param(
            name,
            format!("must be nonnegative and finite, got {v}"),
        ))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EnvelopeKind {
    Entropic,
    Beckner {
        p: f64,
    },
    /// `exp(-alpha(r))` with `1/alpha = 1/(g r^2) + 1/(e r)`.
    Covariance,
    /// Chernoff bound of `lambda r - q lambda^2 - k lambda^4`.
    SuperExponential {
        quadratic: f64,
        quartic: f64,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    Gaussian,
    Exponential,
    SuperExponential,
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Regime::Gaussian => "gaussian",
            Regime::Exponential => "exponential",
            Regime::SuperExponential => "super_exponential",
        })
    }
}

/// Tail envelope `r -> P(f - mu(f) > r)` with a Gaussian window `[0, r_max]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConcentrationEnvelope {
    #[serde(flatten)]
    pub kind: EnvelopeKind,
    /// End of the Gaussian window; for the covariance and super-exponential
    /// envelopes, the crossover of the two terms.
    pub r_max: Option<f64>,
    /// `g` in the Gaussian exponent `g r^2`.
    pub gaussian_coeff: f64,
    /// `e` in the exponential exponent `e r`; for the super-exponential
    /// envelope, the coefficient of `r^{4/3}`.
    pub exponential_coeff: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvelopePoint {
    pub r: f64,
    pub exponent: f64,
    pub bound: f64,
    pub regime: Regime,
}

impl ConcentrationEnvelope {
    pub fn exponent(&self, r: f64) -> f64 {
        self.eval(r).0
    }

    pub fn regime(&self, r: f64) -> Regime {
        self.eval(r).1
    }

    pub fn bound(&self, r: f64) -> f64 {
        (-self.exponent(r)).exp().clamp(f64::MIN_POSITIVE, 1.0)
    }

    fn eval(&self, r: f64) -> (f64, Regime) {
        let r = r.max(0.0);
        let (g, e) = (self.gaussian_coeff, self.exponential_coeff);
        let in_window = self.r_max.is_none_or(|m| r <= m);
        match self.kind {
            EnvelopeKind::Entropic | EnvelopeKind::Beckner { .. } => {
                if in_window {
                    (g * r * r, Regime::Gaussian)
                } else {
                    (e * r, Regime::Exponential)
                }
            }
            EnvelopeKind::Covariance => {
                let alpha = if r == 0.0 {
                    0.0
                } else {
                    1.0 / (1.0 / (g * r * r) + 1.0 / (e * r))
                };
                let regime = if in_window {
                    Regime::Gaussian
                } else {
                    Regime::Exponential
                };
                (alpha, regime)
            }
            EnvelopeKind::SuperExponential { quadratic, quartic } => {
                let regime = if in_window {
                    Regime::Gaussian
                } else {
                    Regime::SuperExponential
                };
                (chernoff_quartic(r, quadratic, quartic).exponent, regime)
            }
        }
    }

    pub fn evaluate(&self, grid: &[f64]) -> Vec<EnvelopePoint> {
        grid.iter()
            .map(|&r| {
                let (exponent, regime) = self.eval(r);
                EnvelopePoint {
                    r,
                    exponent,
                    bound: (-exponent).exp().clamp(f64::MIN_POSITIVE, 1.0),
                    regime,
                }
            })
            .collect()
    }
}

/// Writes `r, exponent, bound, regime` rows.
pub fn write_envelope_csv<W: Write>(points: &[EnvelopePoint], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["r", "exponent", "bound", "regime"])?;
    for p in points {
        w.write_record([
            fmt_float(p.r),
            fmt_float(p.exponent),
            fmt_float(p.bound),
            p.regime.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Envelope from an entropic constant `rho0` and `f` in `L_V(a, b)`:
/// `exp(-3 rho0 r^2 / (16 b))` up to `r_max = 8b / (3 rho0 sqrt(a))`,
/// `exp(-r / (2 sqrt(a)))` beyond.
pub fn entropic_envelope(rho0: f64, a: f64, b: f64) -> Result<ConcentrationEnvelope> {
    positive("rho0", rho0)?;
    positive("a", a)?;
    positive("b", b)?;
    Ok(ConcentrationEnvelope {
        kind: EnvelopeKind::Entropic,
        r_max: Some(8.0 * b / (3.0 * rho0 * a.sqrt())),
        gaussian_coeff: 3.0 * rho0 / (16.0 * b),
        exponential_coeff: 1.0 / (2.0 * a.sqrt()),
    })
}

/// Largest `alpha_p` the Beckner-type envelope accepts: `2b(p-1)/(3pa)`.
pub fn beckner_restriction(p: f64, a: f64, b: f64) -> f64 {
    2.0 * b * (p - 1.0) / (3.0 * p * a)
}

/// Smallest `b` for which `alpha_p` meets the restriction.
pub fn beckner_required_b(alpha_p: f64, p: f64, a: f64) -> f64 {
    3.0 * p * a * alpha_p / (2.0 * (p - 1.0))
}

/// Envelope from a Beckner-type constant `alpha_p`:
/// `exp(-9 alpha_p r^2 / (32 b))` up to `r_max = sqrt(32bp / (27(p-1) alpha_p))`,
/// `exp(-r sqrt(3 p alpha_p / (32 b (p-1))))` beyond. Requires
/// `alpha_p <= 2b(p-1)/(3pa)`.
pub fn beckner_envelope(alpha_p: f64, p: f64, a: f64, b: f64) -> Result<ConcentrationEnvelope> {
    positive("alpha_p", alpha_p)?;
    positive("a", a)?;
    positive("b", b)?;
    if !(p > 1.0 && p <= 2.0) {
        return Err(Error::param("p", format!("must lie in (1, 2], got {p}")));
    }
    let limit = beckner_restriction(p, a, b);
    // b = beckner_required_b(alpha_p) must pass despite rounding
    if alpha_p > limit * (1.0 + 1e-12) {
        return Err(Error::RestrictionViolated {
            alpha: alpha_p,
            limit,
        });
    }
    Ok(ConcentrationEnvelope {
        kind: EnvelopeKind::Beckner { p },
        r_max: Some((32.0 * b * p / (27.0 * (p - 1.0) * alpha_p)).sqrt()),
        gaussian_coeff: 9.0 * alpha_p / (32.0 * b),
        exponential_coeff: (3.0 * p * alpha_p / (32.0 * b * (p - 1.0))).sqrt(),
    })
}

/// `alpha(r) = rho0 r^2 / (4b + 2 rho0 sqrt(a) r)`, the exponent of the
/// semigroup-covariance route.
pub fn covariance_alpha(rho0: f64, a: f64, b: f64, r: f64) -> Result<f64> {
    positive("rho0", rho0)?;
    positive("a", a)?;
    positive("b", b)?;
    nonnegative("r", r)?;
    Ok(rho0 * r * r / (4.0 * b + 2.0 * rho0 * a.sqrt() * r))
}

pub fn covariance_envelope(rho0: f64, a: f64, b: f64) -> Result<ConcentrationEnvelope> {
    positive("rho0", rho0)?;
    positive("a", a)?;
    positive("b", b)?;
    Ok(ConcentrationEnvelope {
        kind: EnvelopeKind::Covariance,
        r_max: Some(2.0 * b / (rho0 * a.sqrt())),
        gaussian_coeff: rho0 / (4.0 * b),
        exponential_coeff: 1.0 / (2.0 * a.sqrt()),
    })
}

/// `I(mu_lambda | mu) <= lambda^2 b / (4 - lambda^2 a)` for
/// `0 < lambda < 2 / sqrt(a)`.
pub fn fisher_bound(lambda: f64, a: f64, b: f64) -> Result<f64> {
    positive("a", a)?;
    nonnegative("b", b)?;
    if !(lambda > 0.0 && lambda < 2.0 / a.sqrt()) {
        return Err(Error::param(
            "lambda",
            format!(
                "must lie in (0, 2/sqrt(a)) = (0, {}), got {lambda}",
                2.0 / a.sqrt()
            ),
        ));
    }
    Ok(lambda * lambda * b / (4.0 - lambda * lambda * a))
}

/// `log mu(e^{lambda f}) <= lambda mu(f) + 4 b lambda^2 / (3 rho0)` for
/// `0 < lambda < 1 / sqrt(a)`.
pub fn log_laplace_bound(lambda: f64, mean: f64, rho0: f64, b: f64, a: f64) -> Result<f64> {
    positive("rho0", rho0)?;
    positive("a", a)?;
    nonnegative("b", b)?;
    if !(lambda > 0.0 && lambda < 1.0 / a.sqrt()) {
        return Err(Error::param(
            "lambda",
            format!(
                "must lie in (0, 1/sqrt(a)) = (0, {}), got {lambda}",
                1.0 / a.sqrt()
            ),
        ));
    }
    Ok(lambda * mean + 4.0 * b * lambda * lambda / (3.0 * rho0))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChernoffOptimum {
    pub lambda: f64,
    pub exponent: f64,
}

/// `sup { lambda r - 4 b lambda^2 / (3 rho0) : 0 < lambda <= 1/sqrt(a) }`,
/// the Chernoff exponent of the log-Laplace estimate.
pub fn log_laplace_chernoff(rho0: f64, a: f64, b: f64, r: f64) -> Result<ChernoffOptimum> {
    positive("rho0", rho0)?;
    positive("a", a)?;
    positive("b", b)?;
    nonnegative("r", r)?;
    let q = 4.0 * b / (3.0 * rho0);
    let lambda = (r / (2.0 * q)).min(1.0 / a.sqrt());
    Ok(ChernoffOptimum {
        lambda,
        exponent: lambda * r - q * lambda * lambda,
    })
}

const GOLDEN: f64 = 0.618_033_988_749_894_8;
const LAMBDA_TOL: f64 = 1e-10;

/// Maximizes the strictly concave `lambda r - q lambda^2 - k lambda^4` over
/// `lambda >= 0`: golden-section search on a bracket from the two one-term
/// optima, then Newton on the derivative.
fn chernoff_quartic(r: f64, q: f64, k: f64) -> ChernoffOptimum {
    let h = |l: f64| l * r - q * l * l - k * l.powi(4);
    if r <= 0.0 {
        return ChernoffOptimum {
            lambda: 0.0,
            exponent: 0.0,
        };
    }
    let mut hi = f64::INFINITY;
    if q > 0.0 {
        hi = hi.min(r / (2.0 * q));
    }
    if k > 0.0 {
        hi = hi.min((r / (4.0 * k)).cbrt());
    }
    let (mut lo, mut up) = (0.0, hi);
    let mut x1 = up - GOLDEN * (up - lo);
    let mut x2 = lo + GOLDEN * (up - lo);
    let (mut h1, mut h2) = (h(x1), h(x2));
    while up - lo > 1e-6 * hi {
        if h1 < h2 {
            lo = x1;
            x1 = x2;
            h1 = h2;
            x2 = lo + GOLDEN * (up - lo);
            h2 = h(x2);
        } else {
            up = x2;
            x2 = x1;
            h2 = h1;
            x1 = up - GOLDEN * (up - lo);
            h1 = h(x1);
        }
    }
    let mut lambda = 0.5 * (lo + up);
    for _ in 0..100 {
        let d1 = r - 2.0 * q * lambda - 4.0 * k * lambda.powi(3);
        let d2 = -2.0 * q - 12.0 * k * lambda * lambda;
        let step = d1 / d2;
        lambda = (lambda - step).clamp(0.0, hi);
        if step.abs() <= LAMBDA_TOL {
            break;
        }
    }
    ChernoffOptimum {
        lambda,
        exponent: h(lambda).max(0.0),
    }
}

fn super_exp_terms(rho0: f64, a: f64, b: f64) -> Result<(f64, f64)> {
    positive("rho0", rho0)?;
    nonnegative("a", a)?;
    positive("b", b)?;
    Ok((2.0 * b.sqrt() / rho0, a / (3.0 * rho0)))
}

/// `sup_{lambda > 0} [lambda r - (2/rho0)(a lambda^4 / 6 + lambda^2 sqrt(b))]`.
pub fn super_exp_exponent(rho0: f64, a: f64, b: f64, r: f64) -> Result<ChernoffOptimum> {
    let (q, k) = super_exp_terms(rho0, a, b)?;
    nonnegative("r", r)?;
    Ok(chernoff_quartic(r, q, k))
}

/// `exp(-super_exp_exponent)`.
pub fn super_exp_tail(rho0: f64, a: f64, b: f64, r: f64) -> Result<f64> {
    Ok((-super_exp_exponent(rho0, a, b, r)?.exponent).exp())
}

/// Envelope of [`super_exp_tail`]; needs `a > 0`. The window ends where the
/// two terms of the log-Laplace bound balance at the optimal `lambda`.
pub fn super_exponential_envelope(rho0: f64, a: f64, b: f64) -> Result<ConcentrationEnvelope> {
    positive("a", a)?;
    let (q, k) = super_exp_terms(rho0, a, b)?;
    Ok(ConcentrationEnvelope {
        kind: EnvelopeKind::SuperExponential {
            quadratic: q,
            quartic: k,
        },
        r_max: Some(6.0 * q * (q / k).sqrt()),
        gaussian_coeff: 1.0 / (4.0 * q),
        exponential_coeff: 0.75 * (4.0 * k).powf(-1.0 / 3.0),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn ou_entropic_envelope() {
        for d in [1.0, 3.0, 20.0] {
            let env = entropic_envelope(2.0, 16.0, 8.0 * d).unwrap();
            assert_eq!(env.r_max, Some(8.0 * d / 3.0));
            assert_eq!(env.gaussian_coeff, 3.0 / (64.0 * d));
            assert_eq!(env.exponential_coeff, 0.125);
            assert_eq!(env.bound(0.0), 1.0);
            assert_eq!(env.regime(d), Regime::Gaussian);
            assert_eq!(env.exponent(10.0 * d), 1.25 * d);
        }
        let env = entropic_envelope(2.0, 16.0, 24.0).unwrap();
        assert_relative_eq!(
            env.bound(1.0),
            0.984_496_437_005_408_5,
            max_relative = 1e-15
        );
    }

    #[test]
    fn entropic_branches_meet() {
        let env = entropic_envelope(2.0, 16.0, 8.0).unwrap();
        let m = env.r_max.unwrap();
        assert_relative_eq!(
            env.gaussian_coeff * m * m,
            env.exponential_coeff * m,
            max_relative = 1e-15
        );
    }

    #[test]
    fn rejects_nonpositive() {
        assert!(entropic_envelope(0.0, 1.0, 1.0).is_err());
        assert!(entropic_envelope(1.0, -1.0, 1.0).is_err());
        assert!(beckner_envelope(0.1, 1.0, 1.0, 1.0).is_err());
        assert!(covariance_alpha(1.0, 1.0, 1.0, -1.0).is_err());
    }

    #[test]
    fn beckner_example() {
        let env = beckner_envelope(0.25, 2.0, 1.0, 3.0).unwrap();
        assert_relative_eq!(env.r_max.unwrap(), 16.0 / 3.0, max_relative = 1e-15);
        let m = env.r_max.unwrap();
        assert_relative_eq!(env.gaussian_coeff * m * m, 2.0 / 3.0, max_relative = 1e-14);
        assert_relative_eq!(env.exponential_coeff * m, 2.0 / 3.0, max_relative = 1e-14);
        assert_eq!(env.bound(0.0), 1.0);
    }

    #[test]
    fn beckner_restriction_is_an_error() {
        // limit 2b(p-1)/(3pa) = 1/3 for (p, a, b) = (2, 1, 1)
        match beckner_envelope(0.5, 2.0, 1.0, 1.0) {
            Err(Error::RestrictionViolated { alpha, limit }) => {
                assert_eq!(alpha, 0.5);
                assert_relative_eq!(limit, 1.0 / 3.0);
            }
            other => panic!("{other:?}"),
        }
        let b = beckner_required_b(0.5, 2.0, 1.0);
        assert!(beckner_envelope(0.5, 2.0, 1.0, b).is_ok());
    }

    #[test]
    fn covariance_alpha_limits() {
        assert_relative_eq!(covariance_alpha(2.0, 16.0, 8.0, 1.0).unwrap(), 1.0 / 24.0);
        assert_eq!(covariance_alpha(2.0, 16.0, 8.0, 0.0).unwrap(), 0.0);
        let big = 1e9;
        assert_relative_eq!(
            covariance_alpha(2.0, 16.0, 8.0, big).unwrap() / big,
            0.125,
            max_relative = 1e-6
        );
        let (rho0, b, r) = (2.0, 8.0, 1e-7);
        let ratio = covariance_alpha(rho0, 16.0, b, r).unwrap() * 16.0 * b / (3.0 * rho0 * r * r);
        assert_relative_eq!(ratio, 4.0 / 3.0, max_relative = 1e-6);
        let env = covariance_envelope(2.0, 16.0, 8.0).unwrap();
        for r in [0.5, 1.0, 7.0, 100.0] {
            assert_relative_eq!(
                env.exponent(r),
                covariance_alpha(2.0, 16.0, 8.0, r).unwrap(),
                max_relative = 1e-14
            );
        }
    }

    #[test]
    fn fisher_and_log_laplace() {
        assert_relative_eq!(fisher_bound(1.0, 1.0, 1.0).unwrap(), 1.0 / 3.0);
        assert!(fisher_bound(1e-8, 1.0, 1.0).unwrap() < 1e-15);
        assert!(fisher_bound(2.0, 1.0, 1.0).is_err());
        assert!(fisher_bound(0.0, 1.0, 1.0).is_err());
        assert!(fisher_bound(1.999_999, 1.0, 1.0).unwrap() > 1e5);
        assert_eq!(log_laplace_bound(1.0, 0.0, 4.0, 3.0, 0.5).unwrap(), 1.0);
        assert!(log_laplace_bound(1.5, 0.0, 4.0, 3.0, 0.5).is_err());
    }

    #[test]
    fn chernoff_of_log_laplace_gives_the_envelope() {
        let (rho0, a, b) = (2.0, 16.0, 24.0);
        let env = entropic_envelope(rho0, a, b).unwrap();
        let m = env.r_max.unwrap();
        for k in 1..200 {
            let r = k as f64 * 0.1;
            let c = log_laplace_chernoff(rho0, a, b, r).unwrap().exponent;
            if r <= m {
                assert_relative_eq!(c, env.exponent(r), max_relative = 1e-13);
            } else {
                assert!(c >= env.exponent(r));
            }
        }
        let at = log_laplace_chernoff(rho0, a, b, m).unwrap().exponent;
        assert_relative_eq!(at, m / (2.0 * a.sqrt()), max_relative = 1e-13);
    }

    #[test]
    fn super_exp_quadratic_reduction() {
        for (rho0, b, r) in [(2.0, 24.0, 3.0), (0.5, 1.0, 40.0), (1.0, 9.0, 0.01)] {
            let e = super_exp_exponent(rho0, 0.0, b, r).unwrap().exponent;
            assert_relative_eq!(e, rho0 * r * r / (8.0 * b.sqrt()), max_relative = 1e-12);
        }
        assert_eq!(super_exp_tail(2.0, 16.0, 24.0, 0.0).unwrap(), 1.0);
    }

    #[test]
    fn super_exp_optimum_is_stationary() {
        let (rho0, a, b) = (2.0, 16.0, 24.0f64);
        let (q, k) = (2.0 * b.sqrt() / rho0, a / (3.0 * rho0));
        for r in [0.1, 5.0, 1e3, 1e4] {
            let opt = super_exp_exponent(rho0, a, b, r).unwrap();
            let d1 = r - 2.0 * q * opt.lambda - 4.0 * k * opt.lambda.powi(3);
            assert!(d1.abs() < 1e-8 * r, "r = {r}: derivative {d1}");
        }
    }

    #[test]
    fn super_exponential_envelope_regimes() {
        let env = super_exponential_envelope(2.0, 16.0, 24.0).unwrap();
        let m = env.r_max.unwrap();
        assert_eq!(env.regime(0.5 * m), Regime::Gaussian);
        assert_eq!(env.regime(2.0 * m), Regime::SuperExponential);
        let e = env.exponent(1e6);
        assert_relative_eq!(e / 1e8, env.exponential_coeff, max_relative = 0.05);
        assert!(super_exponential_envelope(2.0, 0.0, 24.0).is_err());
    }

    #[test]
    fn envelopes_are_nonincreasing() {
        let envs = [
            entropic_envelope(2.0, 16.0, 24.0).unwrap(),
            beckner_envelope(0.1, 1.5, 2.0, 3.0).unwrap(),
            covariance_envelope(1.0, 4.0, 2.0).unwrap(),
            super_exponential_envelope(1.0, 4.0, 2.0).unwrap(),
        ];
        for env in envs {
            let grid: Vec<f64> = (0..2000).map(|k| k as f64 * 0.05).collect();
            let pts = env.evaluate(&grid);
            assert_eq!(pts[0].bound, 1.0);
            assert!(pts.windows(2).all(|w| w[1].bound <= w[0].bound), "{env:?}");
            assert!(pts.iter().all(|p| p.bound > 0.0));
        }
    }

    #[test]
    fn csv_layout() {
        let env = entropic_envelope(2.0, 16.0, 24.0).unwrap();
        let mut buf = Vec::new();
        write_envelope_csv(&env.evaluate(&[0.0, 10.0]), &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "r,exponent,bound,regime");
        assert!(lines[1].ends_with(",gaussian"));
        assert!(lines[2].ends_with(",exponential"));
    }
}
