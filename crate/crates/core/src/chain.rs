//! Reversible birth-death dynamics on the nonnegative integers.
//!
//! A chain jumps `x -> x+1` at rate `birth(x)` and `x -> x-1` at rate
//! `death(x)`, with `death(0) = 0`. Every operator here works on a finite
//! truncation `{0..N}` with a *reflecting* cut: the birth rate at `N` is
//! treated as zero, so the truncated chain is itself a reversible
//! birth-death chain whose stationary law is the renormalized restriction
//! of the infinite one. All identities (stationarity, integration by parts,
//! detailed balance) are then exact at finite `N`.

use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};

/// Potential `U` of a measure `e^{-U}/Z` on the nonnegative integers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Potential {
    /// `U(x) = ln x! - x ln rate`, the Poisson law.
    Poisson { rate: f64 },
    /// `U(x) = slope * x`; `slope = -ln p` gives the geometric law.
    Linear { slope: f64 },
    /// `U(x) = coeff * x^2`.
    Quadratic { coeff: f64 },
    /// Values `U(0), U(1), ...`.
    Table(Vec<f64>),
}

impl Potential {
    pub fn geometric(p: f64) -> Self {
        Potential::Linear { slope: -p.ln() }
    }

    pub fn value(&self, x: usize) -> Result<f64> {
        match self {
            Potential::Poisson { rate } => {
                let log_fact: f64 = (1..=x).map(|k| (k as f64).ln()).sum();
                Ok(log_fact - x as f64 * rate.ln())
            }
            Potential::Linear { slope } => Ok(slope * x as f64),
            Potential::Quadratic { coeff } => Ok(coeff * (x as f64).powi(2)),
            Potential::Table(values) => values
                .get(x)
                .copied()
                .ok_or_else(|| Error::domain(x, "tabulated potential")),
        }
    }

    /// `U(x) - U(x-1)` for `x >= 1`, evaluated in closed form where possible.
    pub fn increment(&self, x: usize) -> Result<f64> {
        if x == 0 {
            return Err(Error::domain(0, "potential increment"));
        }
        match self {
            Potential::Poisson { rate } => Ok((x as f64).ln() - rate.ln()),
            Potential::Linear { slope } => Ok(*slope),
            Potential::Quadratic { coeff } => Ok(coeff * (2 * x - 1) as f64),
            Potential::Table(_) => Ok(self.value(x)? - self.value(x - 1)?),
        }
    }

    /// Discrete Laplacian `U(x+1) - 2U(x) + U(x-1)` for `x >= 1`.
    pub fn laplacian(&self, x: usize) -> Result<f64> {
        Ok(self.increment(x + 1)? - self.increment(x)?)
    }

    fn validate(&self) -> Result<()> {
        match self {
            Potential::Poisson { rate } if !(*rate > 0.0 && rate.is_finite()) => Err(Error::param(
                "rate",
                "Poisson potential needs a positive rate",
            )),
            Potential::Table(values) if values.iter().any(|v| !v.is_finite()) => {
                Err(Error::param("potential", "table entries must be finite"))
            }
            Potential::Table(values) if values.len() < 2 => Err(Error::param(
                "potential",
                "table needs at least two entries",
            )),
            _ => Ok(()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum RateFamily {
    /// `birth(x) = p (x+1)^n`, `death(x) = x^n`; stationary law geometric(p) for every `n`.
    GeometricN { p: f64, n: u32 },
    /// `birth(x) = rate`, `death(x) = x`; stationary law Poisson(rate).
    MmInfinity { rate: f64 },
    /// `birth(x) = 1`, `death(x) = e^{U(x) - U(x-1)}`; stationary law `e^{-U}/Z`.
    Potential { potential: Potential },
    /// Explicit rates on `0..len`. A zero final birth rate closes the chain.
    Tabulated { birth: Vec<f64>, death: Vec<f64> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ChainSpec", into = "ChainSpec")]
pub struct BirthDeathChain {
    pub family: RateFamily,
    pub truncation_hint: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct ChainSpec {
    #[serde(flatten)]
    family: RateFamily,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    truncation_hint: Option<usize>,
}

impl TryFrom<ChainSpec> for BirthDeathChain {
    type Error = Error;

    fn try_from(spec: ChainSpec) -> Result<Self> {
        let chain = Self::new(spec.family)?;
        Ok(match spec.truncation_hint {
            Some(n) => chain.with_truncation(n),
            None => chain,
        })
    }
}

impl From<BirthDeathChain> for ChainSpec {
    fn from(chain: BirthDeathChain) -> Self {
        Self {
            family: chain.family,
            truncation_hint: Some(chain.truncation_hint),
        }
    }
}

impl BirthDeathChain {
    pub fn new(family: RateFamily) -> Result<Self> {
        let truncation_hint = match &family {
            RateFamily::GeometricN { p, n } => {
                if !(*p > 0.0 && *p < 1.0) {
                    return Err(Error::param("p", format!("must lie in (0,1), got {p}")));
                }
                if *n > 16 {
                    return Err(Error::param(
                        "n",
                        "rate exponent above 16 overflows products",
                    ));
                }
                // enough states for p^N to fall below 1e-40
                let decay = (40.0 * std::f64::consts::LN_10 / -p.ln()).ceil() as usize;
                decay.clamp(200, 20_000)
            }
            RateFamily::MmInfinity { rate } => {
                if !(*rate > 0.0 && rate.is_finite()) {
                    return Err(Error::param(
                        "rate",
                        format!("must be positive, got {rate}"),
                    ));
                }
                ((rate + 12.0 * rate.sqrt()) as usize + 100).max(100)
            }
            RateFamily::Potential { potential } => {
                potential.validate()?;
                match potential {
                    Potential::Table(values) => values.len() - 2,
                    _ => 200,
                }
            }
            RateFamily::Tabulated { birth, death } => {
                if birth.is_empty() || birth.len() != death.len() {
                    return Err(Error::param(
                        "rates",
                        "birth and death tables must be non-empty and of equal length",
                    ));
                }
                if birth
                    .iter()
                    .chain(death)
                    .any(|r| !r.is_finite() || *r < 0.0)
                {
                    return Err(Error::param(
                        "rates",
                        "rates must be finite and nonnegative",
                    ));
                }
                if death[0] != 0.0 {
                    return Err(Error::param("death", "death rate at 0 must vanish"));
                }
                if let Some(x) = death.iter().skip(1).position(|d| *d <= 0.0) {
                    return Err(Error::Hypothesis {
                        hypothesis: "death(x) > 0 for x >= 1".into(),
                        state: x + 1,
                    });
                }
                birth.len() - 1
            }
        };
        Ok(Self {
            family,
            truncation_hint,
        })
    }

    pub fn geometric_n(p: f64, n: u32) -> Result<Self> {
        Self::new(RateFamily::GeometricN { p, n })
    }

    pub fn mm_infinity(rate: f64) -> Result<Self> {
        Self::new(RateFamily::MmInfinity { rate })
    }

    pub fn from_potential(potential: Potential) -> Result<Self> {
        Self::new(RateFamily::Potential { potential })
    }

    pub fn tabulated(birth: Vec<f64>, death: Vec<f64>) -> Result<Self> {
        Self::new(RateFamily::Tabulated { birth, death })
    }

    /// Reads a rate table with header `x,birth,death` and rows for `x = 0, 1, ...`.
    pub fn from_csv_reader<R: Read>(reader: R) -> Result<Self> {
        #[derive(Deserialize)]
        struct Row {
            x: usize,
            birth: f64,
            death: f64,
        }
        let mut birth = Vec::new();
        let mut death = Vec::new();
        for (i, row) in csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(reader)
            .deserialize::<Row>()
            .enumerate()
        {
            let row = row?;
            if row.x != i {
                return Err(Error::param("x", format!("row {i} has state {}", row.x)));
            }
            birth.push(row.birth);
            death.push(row.death);
        }
        Self::tabulated(birth, death)
    }

    pub fn from_csv_path(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_csv_reader(std::fs::File::open(path)?)
    }

    pub fn with_truncation(mut self, n: usize) -> Self {
        self.truncation_hint = n;
        self
    }

    pub fn birth(&self, x: usize) -> Result<f64> {
        let xf = x as f64;
        match &self.family {
            RateFamily::GeometricN { p, n } => Ok(p * (xf + 1.0).powi(*n as i32)),
            RateFamily::MmInfinity { rate } => Ok(*rate),
            RateFamily::Potential { .. } => Ok(1.0),
            RateFamily::Tabulated { birth, .. } => birth
                .get(x)
                .copied()
                .ok_or_else(|| Error::domain(x, "tabulated birth rate")),
        }
    }

    pub fn death(&self, x: usize) -> Result<f64> {
        if x == 0 {
            return Ok(0.0);
        }
        let xf = x as f64;
        match &self.family {
            RateFamily::GeometricN { n, .. } => Ok(xf.powi(*n as i32)),
            RateFamily::MmInfinity { .. } => Ok(xf),
            RateFamily::Potential { potential } => Ok(potential.increment(x)?.exp()),
            RateFamily::Tabulated { death, .. } => death
                .get(x)
                .copied()
                .ok_or_else(|| Error::domain(x, "tabulated death rate")),
        }
    }

    /// `ln(birth(x-1) / death(x))` computed without forming the ratio when
    /// the family has a closed form.
    fn log_step_ratio(&self, x: usize) -> Result<f64> {
        match &self.family {
            RateFamily::GeometricN { p, .. } => Ok(p.ln()),
            RateFamily::Potential { potential } => Ok(-potential.increment(x)?),
            _ => Ok(self.birth(x - 1)?.ln() - self.death(x)?.ln()),
        }
    }

    /// True when the chain has finitely many states ending at `n`.
    pub fn closes_at(&self, n: usize) -> bool {
        matches!(&self.family, RateFamily::Tabulated { birth, .. }
            if birth.len() == n + 1 && birth[n] == 0.0)
    }

    /// The reflected truncation to `{0..n}` as an explicit rate table.
    pub fn truncate(&self, n: usize) -> Result<Self> {
        let mut birth = (0..=n).map(|x| self.birth(x)).collect::<Result<Vec<_>>>()?;
        birth[n] = 0.0;
        let death = (0..=n).map(|x| self.death(x)).collect::<Result<Vec<_>>>()?;
        Self::tabulated(birth, death)
    }

    /// Birth rate of the reflected truncation at `n`.
    pub(crate) fn reflected_birth(&self, x: usize, n: usize) -> Result<f64> {
        if x >= n {
            Ok(0.0)
        } else {
            self.birth(x)
        }
    }
}

/// Observables, tagged by the state space they act on.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Observable {
    Identity,
    Power {
        q: f64,
    },
    Log1p,
    /// `1{x >= threshold}`.
    Indicator {
        threshold: f64,
    },
    /// Values on `0..len`; undefined elsewhere.
    Table(Vec<f64>),
    /// `|x|^beta` on `R^d`.
    RadialPower {
        beta: f64,
    },
    /// `<A x, x>` on `R^d`, `A` given by rows.
    QuadraticForm {
        matrix: Vec<Vec<f64>>,
    },
    /// Total number of particles of a configuration.
    ParticleCount,
}

impl Observable {
    pub fn eval_state(&self, x: usize) -> Result<f64> {
        let xf = x as f64;
        match self {
            Observable::Identity => Ok(xf),
            Observable::Power { q } => Ok(xf.powf(*q)),
            Observable::Log1p => Ok(xf.ln_1p()),
            Observable::Indicator { threshold } => Ok(if xf >= *threshold { 1.0 } else { 0.0 }),
            Observable::Table(values) => values
                .get(x)
                .copied()
                .ok_or_else(|| Error::domain(x, "tabulated observable")),
            _ => Err(Error::domain(x, "observable on the integers")),
        }
    }

    pub fn eval_point(&self, point: &[f64]) -> Result<f64> {
        match self {
            Observable::RadialPower { beta } => {
                Ok(point.iter().map(|v| v * v).sum::<f64>().sqrt().powf(*beta))
            }
            Observable::QuadraticForm { matrix } => {
                if matrix.len() != point.len() {
                    return Err(Error::domain(
                        format!("{point:?}"),
                        "quadratic form of mismatched dimension",
                    ));
                }
                Ok(matrix
                    .iter()
                    .zip(point)
                    .map(|(row, xi)| xi * row.iter().zip(point).map(|(a, xj)| a * xj).sum::<f64>())
                    .sum())
            }
            _ => Err(Error::domain(format!("{point:?}"), "observable on R^d")),
        }
    }

    pub fn eval_config(&self, eta: &[u32]) -> Result<f64> {
        match self {
            Observable::ParticleCount => Ok(eta.iter().map(|&k| k as f64).sum()),
            _ => Err(Error::domain(
                format!("{eta:?}"),
                "observable on configurations",
            )),
        }
    }

    /// Whether `f` is bounded above on the integers.
    pub fn bounded_above(&self) -> bool {
        match self {
            Observable::Indicator { .. } | Observable::Table(_) => true,
            Observable::Power { q } => *q <= 0.0,
            _ => false,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhiEntropyKind {
    /// `phi(u) = u^2`: the variance.
    Square,
    /// `phi(u) = u ln u`: the entropy.
    XLogX,
    /// `phi(u) = u^p`, `p` in `(1,2]`.
    Power { p: f64 },
}

impl PhiEntropyKind {
    pub fn power(p: f64) -> Result<Self> {
        if p > 1.0 && p <= 2.0 {
            Ok(PhiEntropyKind::Power { p })
        } else {
            Err(Error::param(
                "p",
                format!("Beckner exponent must lie in (1,2], got {p}"),
            ))
        }
    }
}

/// Stationary weights on `{0..N}` plus a bound on the mass the infinite
/// chain puts beyond `N`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TruncatedMeasure {
    weights: Vec<f64>,
    /// Normalized log-weights; finite even where `weights` underflows.
    log_weights: Vec<f64>,
    /// `None` when no geometric domination was detected.
    tail_mass_bound: Option<f64>,
    /// Domination ratio used for the tail bound.
    tail_ratio: Option<f64>,
}

impl TruncatedMeasure {
    /// Normalizes `weights`; the tail bound is taken as given.
    pub fn from_weights(weights: Vec<f64>, tail_mass_bound: Option<f64>) -> Result<Self> {
        if weights.is_empty() || weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::param("weights", "must be finite and nonnegative"));
        }
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return Err(Error::param("weights", "total mass is zero"));
        }
        let weights: Vec<f64> = weights.into_iter().map(|w| w / total).collect();
        Ok(Self {
            log_weights: weights.iter().map(|w| w.ln()).collect(),
            weights,
            tail_mass_bound,
            tail_ratio: None,
        })
    }

    pub fn n(&self) -> usize {
        self.weights.len() - 1
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn log_weights(&self) -> &[f64] {
        &self.log_weights
    }

    pub fn tail_mass_bound(&self) -> Option<f64> {
        self.tail_mass_bound
    }

    pub fn tail_ratio(&self) -> Option<f64> {
        self.tail_ratio
    }

    pub fn values(&self, f: &Observable) -> Result<Vec<f64>> {
        (0..=self.n()).map(|x| f.eval_state(x)).collect()
    }

    pub fn mean(&self, f: &Observable) -> Result<f64> {
        Ok(self
            .values(f)?
            .iter()
            .zip(&self.weights)
            .map(|(v, w)| v * w)
            .sum())
    }

    pub fn mean_of(&self, values: &[f64]) -> f64 {
        values.iter().zip(&self.weights).map(|(v, w)| v * w).sum()
    }
}

/// Window (last 20% of `0..=n`) over which domination ratios are inspected.
pub(crate) fn tail_window(n: usize) -> std::ops::RangeInclusive<usize> {
    (n - n / 5)..=n
}

/// Stationary law of the reflected truncation to `{0..n}`.
///
/// Weights are accumulated as log-products of `birth(y-1)/death(y)` and
/// normalized in one pass. The tail bound assumes the ratio
/// `birth(x)/death(x+1)` stays below its maximum `rho < 1` over the last
/// 20% of the range, giving `mu(N) rho / (1 - rho)`.
pub fn stationary_measure(chain: &BirthDeathChain, n: usize) -> Result<TruncatedMeasure> {
    if n == 0 {
        return Err(Error::param("N", "truncation must be at least 1"));
    }
    let mut logw = Vec::with_capacity(n + 1);
    logw.push(0.0);
    for y in 1..=n {
        let (lam, nu) = (chain.birth(y - 1)?, chain.death(y)?);
        if lam <= 0.0 {
            return Err(Error::Hypothesis {
                hypothesis: "birth(x) > 0 below the truncation".into(),
                state: y - 1,
            });
        }
        if nu <= 0.0 {
            return Err(Error::Hypothesis {
                hypothesis: "death(x) > 0 for x >= 1".into(),
                state: y,
            });
        }
        logw.push(logw[y - 1] + chain.log_step_ratio(y)?);
    }
    let max = logw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let log_total = max + logw.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
    logw.iter_mut().for_each(|l| *l -= log_total);
    let weights: Vec<f64> = logw.iter().map(|l| l.exp()).collect();

    let (tail_mass_bound, tail_ratio) = if chain.closes_at(n) {
        (Some(0.0), Some(0.0))
    } else {
        let ratios: Option<Vec<f64>> = tail_window(n)
            .map(|x| Some(chain.birth(x).ok()? / chain.death(x + 1).ok()?))
            .collect();
        match ratios {
            None => (None, None),
            Some(ratios) => {
                let rho = ratios.iter().copied().fold(0.0, f64::max);
                let rho_min = ratios.iter().copied().fold(f64::INFINITY, f64::min);
                if rho_min >= 1.0 {
                    return Err(Error::NotPositiveRecurrent { n });
                }
                if rho < 1.0 {
                    (Some(weights[n] * rho / (1.0 - rho)), Some(rho))
                } else {
                    (None, None)
                }
            }
        }
    };
    Ok(TruncatedMeasure {
        weights,
        log_weights: logw,
        tail_mass_bound,
        tail_ratio,
    })
}

/// `Lf(x) = birth(x)(f(x+1)-f(x)) + death(x)(f(x-1)-f(x))`.
///
/// Neighbours with a zero rate are never evaluated, so the reflected
/// truncation of a chain can be applied to observables defined on `0..=N`.
pub fn generator_apply(chain: &BirthDeathChain, f: &Observable, x: usize) -> Result<f64> {
    let fx = f.eval_state(x)?;
    let (lam, nu) = (chain.birth(x)?, chain.death(x)?);
    let mut out = 0.0;
    if lam > 0.0 {
        out += lam * (f.eval_state(x + 1)? - fx);
    }
    if nu > 0.0 {
        out += nu * (f.eval_state(x - 1)? - fx);
    }
    Ok(out)
}

/// `Gamma(f,f)(x) = 1/2 { birth(x)(f(x+1)-f(x))^2 + death(x)(f(x-1)-f(x))^2 }`.
pub fn carre_du_champ(chain: &BirthDeathChain, f: &Observable, x: usize) -> Result<f64> {
    let fx = f.eval_state(x)?;
    let (lam, nu) = (chain.birth(x)?, chain.death(x)?);
    let mut out = 0.0;
    if lam > 0.0 {
        out += lam * (f.eval_state(x + 1)? - fx).powi(2);
    }
    if nu > 0.0 {
        out += nu * (f.eval_state(x - 1)? - fx).powi(2);
    }
    Ok(0.5 * out)
}

fn check_support(f: &Observable, n: usize) -> Result<()> {
    match f {
        Observable::Table(values) if values.len() > n + 1 => Err(Error::TruncationTooSmall {
            required: values.len() - 1,
        }),
        _ => Ok(()),
    }
}

/// Birth-edge sum `sum_x birth(x)(f(x+1)-f(x))(g(x+1)-g(x)) mu(x)` on the
/// reflected truncation carried by `mu`.
pub fn dirichlet_form(
    chain: &BirthDeathChain,
    f: &Observable,
    g: &Observable,
    mu: &TruncatedMeasure,
) -> Result<f64> {
    let n = mu.n();
    check_support(f, n)?;
    check_support(g, n)?;
    let fv = mu.values(f)?;
    let gv = mu.values(g)?;
    let mut acc = 0.0;
    for x in 0..n {
        acc += chain.birth(x)? * (fv[x + 1] - fv[x]) * (gv[x + 1] - gv[x]) * mu.weights[x];
    }
    Ok(acc)
}

/// `mu(phi(f)) - phi(mu(f))`, clamped at zero.
pub fn phi_entropy(mu: &TruncatedMeasure, f: &Observable, kind: PhiEntropyKind) -> Result<f64> {
    let values = mu.values(f)?;
    phi_entropy_of(mu, &values, kind)
}

/// [`phi_entropy`] for a function given by its values on `0..=N`.
pub fn phi_entropy_of(mu: &TruncatedMeasure, values: &[f64], kind: PhiEntropyKind) -> Result<f64> {
    if values.len() != mu.weights.len() {
        return Err(Error::param("values", "length must equal N + 1"));
    }
    let mean = mu.mean_of(values);
    let ent = match kind {
        PhiEntropyKind::Square => values
            .iter()
            .zip(&mu.weights)
            .map(|(v, w)| w * (v - mean).powi(2))
            .sum(),
        PhiEntropyKind::XLogX | PhiEntropyKind::Power { .. } => {
            if let Some(x) = values.iter().position(|v| !(*v >= 0.0)) {
                return Err(Error::domain(x, "nonnegative phi-entropy argument"));
            }
            let phi = |u: f64| match kind {
                PhiEntropyKind::Power { p } => u.powf(p),
                _ if u == 0.0 => 0.0,
                _ => u * u.ln(),
            };
            let integral: f64 = values
                .iter()
                .zip(&mu.weights)
                .map(|(v, w)| w * phi(*v))
                .sum();
            integral - phi(mean)
        }
    };
    Ok(ent.max(0.0))
}

/// Poisson mass below which the uniformization series is cut.
const UNIFORMIZATION_TAIL: f64 = 1e-12;

/// `P_t h0` on the reflected truncation `{0..N}`, `N = h0.len() - 1`, by
/// uniformization: with `q = max_x (birth + death)`,
/// `P_t = sum_k e^{-qt} (qt)^k / k! K^k` where `K = I + L/q` is stochastic.
pub fn semigroup_evolve(chain: &BirthDeathChain, h0: &[f64], t: f64) -> Result<Vec<f64>> {
    if !(t >= 0.0 && t.is_finite()) {
        return Err(Error::param(
            "t",
            format!("time must be nonnegative, got {t}"),
        ));
    }
    if h0.len() < 2 {
        return Err(Error::param("h0", "needs at least two states"));
    }
    if let Some(x) = h0.iter().position(|v| !(v.is_finite() && *v >= 0.0)) {
        return Err(Error::domain(x, "nonnegative initial density"));
    }
    let n = h0.len() - 1;
    let birth = (0..=n)
        .map(|x| chain.reflected_birth(x, n))
        .collect::<Result<Vec<_>>>()?;
    let death = (0..=n)
        .map(|x| chain.death(x))
        .collect::<Result<Vec<_>>>()?;
    let q = birth
        .iter()
        .zip(&death)
        .map(|(b, d)| b + d)
        .fold(0.0, f64::max);
    if t == 0.0 || q == 0.0 {
        return Ok(h0.to_vec());
    }
    let qt = q * t;
    let mut term = h0.to_vec();
    let mut next = vec![0.0; n + 1];
    let mut out = vec![0.0; n + 1];
    let mut k = 0usize;
    loop {
        let kf = k as f64;
        let w = (kf * qt.ln() - qt - ln_gamma(kf + 1.0)).exp();
        if w > 0.0 {
            out.iter_mut().zip(&term).for_each(|(o, v)| *o += w * v);
        }
        // past the mode the remaining Poisson mass is at most w (k+2)/(k+2-qt)
        if kf + 1.0 >= qt && w * (kf + 2.0) / (kf + 2.0 - qt) < UNIFORMIZATION_TAIL {
            break;
        }
        for x in 0..=n {
            let mut lv = 0.0;
            if x < n {
                lv += birth[x] * (term[x + 1] - term[x]);
            }
            if x > 0 {
                lv += death[x] * (term[x - 1] - term[x]);
            }
            next[x] = term[x] + lv / q;
        }
        std::mem::swap(&mut term, &mut next);
        k += 1;
    }
    Ok(out)
}
