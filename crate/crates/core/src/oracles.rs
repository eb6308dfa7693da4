//! Ground truth the envelopes are checked against.

use std::io::Write;

use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma_ur;

use crate::bounds::{ConcentrationEnvelope, Regime};
use crate::chain::{BirthDeathChain, Observable, TruncatedMeasure};
use crate::error::{Error, Result};
use crate::grid::fmt_float;
use crate::lyapunov::{neg_drift_ratio, Model, State, TestFunction};
use crate::sim::TailEstimate;

/// Which edge of the truth interval must stay below the bound.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dominance {
    /// `truth_hi <= bound`: exact values widened by the truncated mass.
    Conservative,
    /// `truth_lo <= bound`: the lower confidence edge of an estimate.
    LowerEdge,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TailPoint {
    pub r: f64,
    pub truth_lo: f64,
    pub truth_hi: f64,
    pub bound: f64,
    pub regime: Regime,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TailCurve {
    pub dominance: Dominance,
    points: Vec<TailPoint>,
}

impl TailCurve {
    pub fn new(points: Vec<TailPoint>, dominance: Dominance) -> Result<Self> {
        if points.windows(2).any(|w| !(w[1].r > w[0].r)) {
            return Err(Error::param("grid", "r must be strictly increasing"));
        }
        Ok(Self { dominance, points })
    }

    pub fn points(&self) -> &[TailPoint] {
        &self.points
    }

    pub fn holds_at(&self, p: &TailPoint) -> bool {
        match self.dominance {
            Dominance::Conservative => p.truth_hi <= p.bound,
            Dominance::LowerEdge => p.truth_lo <= p.bound,
        }
    }

    pub fn first_violation(&self) -> Option<&TailPoint> {
        self.points.iter().find(|p| !self.holds_at(p))
    }

    /// Writes `r, truth_lo, truth_hi, bound, regime` rows.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["r", "truth_lo", "truth_hi", "bound", "regime"])?;
        for p in &self.points {
            w.write_record([
                fmt_float(p.r),
                fmt_float(p.truth_lo),
                fmt_float(p.truth_hi),
                fmt_float(p.bound),
                p.regime.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// `mu({x <= N : f(x) - mu(f) > r})` and the mass that may lie beyond `N`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExactTail {
    pub value: f64,
    pub widening: f64,
}

impl ExactTail {
    pub fn upper(&self) -> f64 {
        (self.value + self.widening).min(1.0)
    }
}

fn tabulate(mu: &TruncatedMeasure, f: &Observable) -> Result<Vec<f64>> {
    if let Observable::Table(values) = f {
        if values.len() > mu.n() + 1 {
            return Err(Error::TruncationTooSmall {
                required: values.len() - 1,
            });
        }
    }
    mu.values(f)
}

/// Exact deviation probability on the truncation, strict inequality.
pub fn exact_tail_discrete(mu: &TruncatedMeasure, f: &Observable, r: f64) -> Result<ExactTail> {
    if !(r >= 0.0) {
        return Err(Error::param("r", format!("must be nonnegative, got {r}")));
    }
    let widening = mu
        .tail_mass_bound()
        .ok_or(Error::UnknownTail { n: mu.n() })?;
    let values = tabulate(mu, f)?;
    let mean = mu.mean_of(&values);
    let value = values
        .iter()
        .zip(mu.weights())
        .filter(|(v, _)| **v - mean > r)
        .map(|(_, w)| w)
        .sum();
    Ok(ExactTail { value, widening })
}

/// Exact tails against an envelope on a grid of deviation levels.
pub fn exact_tail_curve(
    mu: &TruncatedMeasure,
    f: &Observable,
    envelope: &ConcentrationEnvelope,
    grid: &[f64],
) -> Result<TailCurve> {
    let values = tabulate(mu, f)?;
    let mean = mu.mean_of(&values);
    let widening = mu
        .tail_mass_bound()
        .ok_or(Error::UnknownTail { n: mu.n() })?;
    let points = grid
        .iter()
        .map(|&r| {
            let value: f64 = values
                .iter()
                .zip(mu.weights())
                .filter(|(v, _)| **v - mean > r)
                .map(|(_, w)| w)
                .sum();
            TailPoint {
                r,
                truth_lo: value,
                truth_hi: (value + widening).min(1.0),
                bound: envelope.bound(r),
                regime: envelope.regime(r),
            }
        })
        .collect();
    TailCurve::new(points, Dominance::Conservative)
}

/// `P(chi^2_d > d + r)` as the regularized upper incomplete gamma function
/// `Q(d/2, (d+r)/2)`.
pub fn chi_square_tail(d: u32, r: f64) -> Result<f64> {
    if d == 0 {
        return Err(Error::param("d", "degrees of freedom must be positive"));
    }
    let t = d as f64 + r;
    if t <= 0.0 {
        return Ok(1.0);
    }
    Ok(gamma_ur(0.5 * d as f64, 0.5 * t))
}

pub fn chi_square_tail_curve(
    d: u32,
    envelope: &ConcentrationEnvelope,
    grid: &[f64],
) -> Result<TailCurve> {
    let points = grid
        .iter()
        .map(|&r| {
            let truth = chi_square_tail(d, r)?;
            Ok(TailPoint {
                r,
                truth_lo: truth,
                truth_hi: truth,
                bound: envelope.bound(r),
                regime: envelope.regime(r),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    TailCurve::new(points, Dominance::Conservative)
}

/// Empirical tails, judged by their lower confidence edge.
pub fn estimated_tail_curve(
    estimates: &[(f64, TailEstimate)],
    envelope: &ConcentrationEnvelope,
) -> Result<TailCurve> {
    let points = estimates
        .iter()
        .map(|(r, t)| TailPoint {
            r: *r,
            truth_lo: t.lo,
            truth_hi: t.hi,
            bound: envelope.bound(*r),
            regime: envelope.regime(*r),
        })
        .collect();
    TailCurve::new(points, Dominance::LowerEdge)
}

/// The tilted density `f_lambda = e^{lambda f} / Z_lambda` on the
/// truncation, as `log(f_lambda(x) mu(x))`.
fn tilted_log_mass(
    chain: &BirthDeathChain,
    mu: &TruncatedMeasure,
    values: &[f64],
    lambda: f64,
) -> Result<Vec<f64>> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::param(
            "lambda",
            format!("must be nonnegative, got {lambda}"),
        ));
    }
    let n = mu.n();
    match mu.tail_ratio() {
        None if mu.tail_mass_bound() != Some(0.0) => return Err(Error::UnknownTail { n }),
        Some(rho) if rho > 0.0 => {
            // e^{lambda f} mu must still decay geometrically past N
            let window = crate::chain::tail_window(n);
            let start = *window.start();
            for x in start..n {
                let step = chain.birth(x)? / chain.death(x + 1)?;
                if step * (lambda * (values[x + 1] - values[x])).exp() >= 1.0 {
                    return Err(Error::DivergentPartition { lambda });
                }
            }
        }
        _ => {}
    }
    let logs: Vec<f64> = values
        .iter()
        .zip(mu.log_weights())
        .map(|(v, lw)| lambda * v + lw)
        .collect();
    let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let log_z = max + logs.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
    Ok(logs.into_iter().map(|l| l - log_z).collect())
}

/// `I(mu_lambda | mu) = E(sqrt f_lambda, sqrt f_lambda)` on the reflected
/// truncation carried by `mu`.
pub fn exact_dv_information(
    chain: &BirthDeathChain,
    mu: &TruncatedMeasure,
    f: &Observable,
    lambda: f64,
) -> Result<f64> {
    let values = tabulate(mu, f)?;
    let log_mass = tilted_log_mass(chain, mu, &values, lambda)?;
    let mut acc = 0.0;
    for x in 0..mu.n() {
        // birth(x) f_lambda(x) mu(x) (sqrt(f_lambda(x+1)/f_lambda(x)) - 1)^2
        let jump = (0.5 * lambda * (values[x + 1] - values[x])).exp_m1();
        acc += chain.birth(x)? * log_mass[x].exp() * jump * jump;
    }
    Ok(acc)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VariationalCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub ok: bool,
}

/// Compares `int -LV/V d mu_lambda` with `I(mu_lambda | mu)`; both sides
/// use the reflected truncation.
pub fn fisher_variational_check(
    chain: &BirthDeathChain,
    mu: &TruncatedMeasure,
    f: &Observable,
    lambda: f64,
    v: &TestFunction,
) -> Result<VariationalCheck> {
    let values = tabulate(mu, f)?;
    let log_mass = tilted_log_mass(chain, mu, &values, lambda)?;
    let model = Model::BirthDeath {
        chain: chain.truncate(mu.n())?,
    };
    let mut lhs = 0.0;
    for (x, lm) in log_mass.iter().enumerate() {
        lhs += neg_drift_ratio(&model, v, State::Int(x))? * lm.exp();
    }
    let rhs = exact_dv_information(chain, mu, f, lambda)?;
    Ok(VariationalCheck {
        lhs,
        rhs,
        ok: lhs <= rhs + 1e-10,
    })
}
