//! Poincaré, entropic and Beckner-type constants of birth-death chains.

use serde::{Deserialize, Serialize};

use crate::chain::{stationary_measure, BirthDeathChain, Potential};
use crate::error::{Error, Result};
use crate::tridiag;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Eigensolve,
    MicloBracket,
    DaipraCriterion,
    UltraLogConcave,
    Dobrushin,
    /// Known in closed form (Gaussian reference measures).
    ClosedForm,
    UserSupplied,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Constant {
    pub value: f64,
    pub provenance: Provenance,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl Constant {
    pub fn new(value: f64, provenance: Provenance) -> Self {
        Self {
            value,
            provenance,
            note: None,
        }
    }

    pub fn with_note(mut self, note: impl Into<String>) -> Self {
        self.note = Some(note.into());
        self
    }
}

/// Spectral gap value or bracket; an exact value has `lo == hi`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GapBracket {
    pub lo: f64,
    pub hi: f64,
    pub provenance: Provenance,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BecknerConstant {
    pub p: f64,
    pub value: f64,
    pub provenance: Provenance,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct InequalityConstants {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spectral_gap: Option<GapBracket>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub entropic_lower: Option<Constant>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub beckner_lower: Vec<BecknerConstant>,
}

impl InequalityConstants {
    /// `alpha_p`: an explicit entry, or the spectral gap lower value when `p = 2`.
    pub fn beckner(&self, p: f64) -> Option<f64> {
        self.beckner_lower
            .iter()
            .find(|c| c.p == p)
            .map(|c| c.value)
            .or_else(|| {
                if p == 2.0 {
                    self.spectral_gap.as_ref().map(|g| g.lo)
                } else {
                    None
                }
            })
    }

    /// Consistency between the recorded constants. The entropic inequality
    /// linearizes to a Poincaré inequality with constant `rho0 / 2`, so a
    /// valid entropic constant never exceeds twice the gap.
    pub fn check(&self) -> Result<()> {
        let finite_nonneg = |v: f64| v.is_finite() && v >= 0.0;
        if let Some(g) = &self.spectral_gap {
            if !(finite_nonneg(g.lo) && g.lo <= g.hi) {
                return Err(Error::param(
                    "spectral_gap",
                    format!("bad bracket [{}, {}]", g.lo, g.hi),
                ));
            }
            if g.provenance == Provenance::MicloBracket && g.hi > 4.0 * g.lo * (1.0 + 1e-12) {
                return Err(Error::param(
                    "spectral_gap",
                    "Miclo bracket wider than a factor 4",
                ));
            }
        }
        if let Some(rho) = &self.entropic_lower {
            if !finite_nonneg(rho.value) {
                return Err(Error::param(
                    "entropic_lower",
                    "must be finite and nonnegative",
                ));
            }
            if let Some(g) = &self.spectral_gap {
                if rho.value > 2.0 * g.hi * (1.0 + 1e-12) {
                    return Err(Error::param(
                        "entropic_lower",
                        format!("{} exceeds twice the spectral gap {}", rho.value, g.hi),
                    ));
                }
            }
        }
        for c in &self.beckner_lower {
            if !(c.p > 1.0 && c.p <= 2.0 && finite_nonneg(c.value)) {
                return Err(Error::param(
                    "beckner_lower",
                    format!("bad entry p = {}", c.p),
                ));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectralGap {
    pub value: f64,
    /// Truncation the eigenvalue belongs to.
    pub truncation: usize,
}

/// Smallest nonzero eigenvalue of `-L` on the reflected truncation `{0..n}`.
///
/// Symmetrized by `diag(sqrt(mu))`, `-L` factors as `C^T C` with `C`
/// bidiagonal, rows `(-sqrt(birth(x)), sqrt(death(x+1)))`. The gap is the
/// square of the smallest singular value of `C`, found by Sturm bisection on
/// the zero-diagonal Golub-Kahan tridiagonal, which keeps full relative
/// accuracy even when rates grow polynomially.
pub fn spectral_gap_exact(chain: &BirthDeathChain, n: usize) -> Result<SpectralGap> {
    if n < 1 {
        return Err(Error::param(
            "N",
            "a spectral gap needs at least two states",
        ));
    }
    let mut off = Vec::with_capacity(2 * n);
    for x in 0..n {
        let (lam, nu) = (chain.birth(x)?, chain.death(x + 1)?);
        if lam <= 0.0 {
            return Err(Error::Hypothesis {
                hypothesis: "birth(x) > 0 below the truncation".into(),
                state: x,
            });
        }
        if nu <= 0.0 {
            return Err(Error::Hypothesis {
                hypothesis: "death(x) > 0 for x >= 1".into(),
                state: x + 1,
            });
        }
        off.push(lam.sqrt());
        off.push(nu.sqrt());
    }
    let diag = vec![0.0; 2 * n + 1];
    let (_, hi) = tridiag::gershgorin(&diag, &off);
    let sigma = tridiag::kth_eigenvalue(&diag, &off, n + 1, (0.0, hi), 1e-14);
    Ok(SpectralGap {
        value: sigma * sigma,
        truncation: n,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MicloBound {
    pub delta: f64,
    /// `1 / (4 delta)`.
    pub gap_lower: f64,
    /// `1 / delta`.
    pub gap_upper: f64,
    pub argmax: usize,
    /// False when the supremum sits at the truncation edge, i.e. it may
    /// only be approached in the limit.
    pub attained: bool,
    /// The chain has finitely many states. The bracket is the estimate for
    /// the infinite chain and need not contain this chain's gap.
    pub finite_chain: bool,
    pub truncation: usize,
}

fn log_add(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

/// `delta = sup_{1<=x<=N} (sum_{k<x} 1/(birth(k) mu(k))) (sum_{l>=x} mu(l))`,
/// with the second factor completed past `N` by the tail-mass bound.
/// Evaluated in log space; the product is invariant under rescaling `mu`.
pub fn miclo_delta(chain: &BirthDeathChain, n: usize) -> Result<MicloBound> {
    let mu = stationary_measure(chain, n)?;
    let tail = mu.tail_mass_bound().ok_or(Error::UnknownTail { n })?;
    let lw = mu.log_weights();
    let log_tail = match mu.tail_ratio() {
        Some(rho) if rho > 0.0 && tail.is_finite() => lw[n] + rho.ln() - (-rho).ln_1p(),
        _ => f64::NEG_INFINITY,
    };
    let mut log_b = vec![f64::NEG_INFINITY; n + 2];
    log_b[n + 1] = log_tail;
    for x in (0..=n).rev() {
        log_b[x] = log_add(log_b[x + 1], lw[x]);
    }
    let mut log_a = f64::NEG_INFINITY;
    let mut best = (f64::NEG_INFINITY, 0usize);
    for x in 1..=n {
        log_a = log_add(log_a, -chain.birth(x - 1)?.ln() - lw[x - 1]);
        let value = log_a + log_b[x];
        if value >= best.0 {
            best = (value, x);
        }
    }
    let delta = best.0.exp();
    Ok(MicloBound {
        delta,
        gap_lower: 0.25 / delta,
        gap_upper: 1.0 / delta,
        argmax: best.1,
        attained: best.1 < n,
        finite_chain: chain.closes_at(n),
        truncation: n,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EntropicBound {
    pub alpha: f64,
    pub applicable: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
}

/// `alpha = inf_x (birth(x) - birth(x+1) + death(x+1) - death(x))` over
/// `0 <= x < N`, valid when births are non-increasing and deaths
/// non-decreasing; otherwise `alpha = 0` with the reason recorded.
pub fn entropic_lower_bound(chain: &BirthDeathChain, n: usize) -> Result<EntropicBound> {
    if n < 1 {
        return Err(Error::param("N", "must be at least 1"));
    }
    let mut alpha = f64::INFINITY;
    for x in 0..n {
        let (l0, l1) = (chain.birth(x)?, chain.birth(x + 1)?);
        let (n0, n1) = (chain.death(x)?, chain.death(x + 1)?);
        let reason = if l1 > l0 {
            Some(format!("birth rate increases at state {x}"))
        } else if n1 < n0 {
            Some(format!("death rate decreases at state {x}"))
        } else {
            None
        };
        if let Some(reason) = reason {
            return Ok(EntropicBound {
                alpha: 0.0,
                applicable: false,
                reason: Some(reason),
            });
        }
        alpha = alpha.min(l0 - l1 + n1 - n0);
    }
    Ok(EntropicBound {
        alpha: alpha.max(0.0),
        applicable: true,
        reason: None,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UlcCheck {
    pub ulc: bool,
    pub lc: bool,
    /// `e^{U(1) - U(0)}` under ultra-log-concavity, else 0.
    pub rho0_lower: f64,
    /// `sup_x sum_{k < x <= l} e^{U(k) - U(l)}` over the truncation, when
    /// only log-concavity holds.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub miclo_sup: Option<f64>,
}

/// Slack allowed in the pointwise Laplacian comparisons.
const LAPLACIAN_TOL: f64 = 1e-12;

/// Checks `Delta U(x) >= ln(1 + 1/x)` (ultra-log-concave) and
/// `Delta U(x) >= 0` (log-concave) for `1 <= x <= N`.
pub fn ultra_log_concave_check(u: &Potential, n: usize) -> Result<UlcCheck> {
    if n < 1 {
        return Err(Error::param("N", "must be at least 1"));
    }
    let mut ulc = true;
    let mut lc = true;
    for x in 1..=n {
        let lap = u.laplacian(x)?;
        if !lap.is_finite() {
            return Err(Error::domain(x, "potential Laplacian"));
        }
        let tol = LAPLACIAN_TOL * lap.abs().max(1.0);
        ulc &= lap >= (1.0 / x as f64).ln_1p() - tol;
        lc &= lap >= -tol;
    }
    let rho0_lower = if ulc { u.increment(1)?.exp() } else { 0.0 };
    let miclo_sup = if lc && !ulc {
        let values = (0..=n).map(|x| u.value(x)).collect::<Result<Vec<_>>>()?;
        let mut suffix = vec![f64::NEG_INFINITY; n + 2];
        for x in (0..=n).rev() {
            suffix[x] = log_add(suffix[x + 1], -values[x]);
        }
        let mut prefix = f64::NEG_INFINITY;
        let mut best = f64::NEG_INFINITY;
        for x in 1..=n {
            prefix = log_add(prefix, values[x - 1]);
            best = best.max(prefix + suffix[x]);
        }
        Some(best.exp())
    } else {
        None
    };
    Ok(UlcCheck {
        ulc,
        lc,
        rho0_lower,
        miclo_sup,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn two_state() -> BirthDeathChain {
        BirthDeathChain::tabulated(vec![1.0, 0.0], vec![0.0, 1.0]).unwrap()
    }

    #[test]
    fn gap_of_two_state_chain() {
        let gap = spectral_gap_exact(&two_state(), 1).unwrap();
        assert_relative_eq!(gap.value, 2.0, max_relative = 1e-14);
    }

    #[test]
    fn gap_of_mm_infinity_is_one() {
        let chain = BirthDeathChain::mm_infinity(1.0).unwrap();
        for n in [100, 200] {
            assert_relative_eq!(
                spectral_gap_exact(&chain, n).unwrap().value,
                1.0,
                epsilon = 1e-10
            );
        }
    }

    #[test]
    fn gap_needs_two_states() {
        assert!(spectral_gap_exact(&two_state(), 0).is_err());
    }

    #[test]
    fn miclo_geometric_limit() {
        let chain = BirthDeathChain::geometric_n(0.25, 0).unwrap();
        let m = miclo_delta(&chain, 400).unwrap();
        assert_relative_eq!(m.delta, 16.0 / 9.0, max_relative = 1e-12);
        assert_relative_eq!(m.gap_lower, 9.0 / 64.0, max_relative = 1e-12);
        assert_relative_eq!(m.gap_upper, 9.0 / 16.0, max_relative = 1e-12);
        assert!(!m.attained);
        assert!(!m.finite_chain);
    }

    #[test]
    fn miclo_two_state_flags_finite_chain() {
        let m = miclo_delta(&two_state(), 1).unwrap();
        assert_relative_eq!(m.delta, 1.0, max_relative = 1e-15);
        assert_eq!((m.gap_lower, m.gap_upper), (0.25, 1.0));
        assert!(m.finite_chain);
    }

    #[test]
    fn miclo_refuses_unknown_tail() {
        let chain = BirthDeathChain::tabulated(vec![0.5; 20], {
            let mut d = vec![1.0; 20];
            d[0] = 0.0;
            d
        })
        .unwrap();
        assert!(matches!(
            miclo_delta(&chain, 19),
            Err(Error::UnknownTail { n: 19 })
        ));
    }

    #[test]
    fn daipra_examples() {
        let mm = BirthDeathChain::mm_infinity(1.0).unwrap();
        let e = entropic_lower_bound(&mm, 100).unwrap();
        assert!(e.applicable);
        assert_eq!(e.alpha, 1.0);
        let g = BirthDeathChain::geometric_n(0.5, 0).unwrap();
        assert_eq!(entropic_lower_bound(&g, 100).unwrap().alpha, 0.0);
        let g1 = BirthDeathChain::geometric_n(0.5, 1).unwrap();
        let e1 = entropic_lower_bound(&g1, 100).unwrap();
        assert!(!e1.applicable);
        assert_eq!(e1.alpha, 0.0);
    }

    #[test]
    fn ulc_potential_chain_meets_its_first_death_rate() {
        for rate in [0.5, 2.0, 7.0] {
            let u = Potential::Poisson { rate };
            let chain = BirthDeathChain::from_potential(u.clone()).unwrap();
            let e = entropic_lower_bound(&chain, 200).unwrap();
            let nu1 = chain.death(1).unwrap();
            assert!(e.applicable);
            assert!(e.alpha >= nu1 * (1.0 - 1e-12));
            let check = ultra_log_concave_check(&u, 200).unwrap();
            assert!(check.ulc && check.lc);
            assert_relative_eq!(check.rho0_lower, 1.0 / rate, max_relative = 1e-14);
        }
    }

    #[test]
    fn ulc_classification() {
        let geo = ultra_log_concave_check(&Potential::geometric(0.4), 50).unwrap();
        assert!(geo.lc && !geo.ulc);
        assert_eq!(geo.rho0_lower, 0.0);
        // geometric sums over k < x <= l <= 50
        let p: f64 = 0.4;
        let expected = (1..=50)
            .map(|x| (1.0 - p.powi(x)) * (1.0 - p.powi(51 - x)) * p / (1.0 - p).powi(2))
            .fold(0.0, f64::max);
        assert_relative_eq!(geo.miclo_sup.unwrap(), expected, max_relative = 1e-12);
        let concave = ultra_log_concave_check(&Potential::Quadratic { coeff: -1.0 }, 50).unwrap();
        assert!(!concave.lc && !concave.ulc);
    }

    #[test]
    fn constants_consistency() {
        let mut c = InequalityConstants {
            spectral_gap: Some(GapBracket {
                lo: 1.0,
                hi: 1.0,
                provenance: Provenance::UserSupplied,
            }),
            entropic_lower: Some(Constant::new(2.0, Provenance::UserSupplied)),
            beckner_lower: vec![],
        };
        c.check().unwrap();
        assert_eq!(c.beckner(2.0), Some(1.0));
        assert_eq!(c.beckner(1.5), None);
        c.entropic_lower = Some(Constant::new(2.5, Provenance::UserSupplied));
        assert!(c.check().is_err());
    }
}
