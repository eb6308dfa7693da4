//! Membership of observables in the Lyapunov class `L_V(a, b)`:
//! `Gamma(f,f) <= -a LV/V + b` for a positive test function `V`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::chain::{carre_du_champ, tail_window, BirthDeathChain, Observable, RateFamily};
use crate::constants::spectral_gap_exact;
use crate::error::{Error, Result};
use crate::sim::glauber::{GlauberSystem, ENUMERATION_LIMIT};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TestFunction {
    /// `V(x) = kappa^x` on the integers.
    ExpScaledState {
        kappa: f64,
    },
    /// `V = e^{c U}` for the diffusion potential `U`.
    ExpPotential {
        c: f64,
    },
    /// `V(x) = |x|^k`.
    Power {
        k: f64,
    },
    /// `V(eta) = kappa^{sum_x eta_x}`.
    ExpTotalParticles {
        kappa: f64,
    },
    /// `V(x) = e^{c <A x, x>}`.
    ExpQuadraticForm {
        c: f64,
        matrix: Vec<Vec<f64>>,
    },
    Constant,
}

impl TestFunction {
    pub fn validate(&self) -> Result<()> {
        match self {
            TestFunction::ExpScaledState { kappa } | TestFunction::ExpTotalParticles { kappa } => {
                if !(*kappa > 1.0 && kappa.is_finite()) {
                    return Err(Error::param("kappa", format!("must exceed 1, got {kappa}")));
                }
            }
            TestFunction::ExpPotential { c } => {
                if !(*c > 0.0 && *c < 1.0) {
                    return Err(Error::param("c", format!("must lie in (0,1), got {c}")));
                }
            }
            TestFunction::Power { k } => {
                if !(*k > 0.0 && k.is_finite()) {
                    return Err(Error::param("k", format!("must be positive, got {k}")));
                }
            }
            TestFunction::ExpQuadraticForm { c, matrix } => {
                if !(*c > 0.0 && c.is_finite()) {
                    return Err(Error::param("c", format!("must be positive, got {c}")));
                }
                symmetric_matrix(matrix, "matrix")?;
            }
            TestFunction::Constant => {}
        }
        Ok(())
    }
}

fn symmetric_matrix(rows: &[Vec<f64>], name: &'static str) -> Result<DMatrix<f64>> {
    let d = rows.len();
    if d == 0 || rows.iter().any(|r| r.len() != d) {
        return Err(Error::param(name, "must be a non-empty square matrix"));
    }
    let m = DMatrix::from_fn(d, d, |i, j| rows[i][j]);
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::param(name, "entries must be finite"));
    }
    let scale = m.amax().max(1.0);
    if (&m - m.transpose()).amax() > 1e-12 * scale {
        return Err(Error::param(name, "must be symmetric"));
    }
    Ok(m)
}

fn largest_eigenvalue(m: &DMatrix<f64>) -> f64 {
    m.clone().symmetric_eigenvalues().max()
}

fn smallest_eigenvalue(m: &DMatrix<f64>) -> f64 {
    m.clone().symmetric_eigenvalues().min()
}

/// Reversible diffusions `L = Delta - <grad U, grad>` on `R^d`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum DiffusionModel {
    /// `U = |x|^2 / 2`.
    Ou { d: usize },
    /// Ornstein-Uhlenbeck dynamics observed through `<A x, x>`.
    QuadraticForm { matrix: Vec<Vec<f64>> },
    /// `U = |x|^beta`.
    RadialBoltzmann { beta: f64, d: usize },
}

impl DiffusionModel {
    pub fn validate(&self) -> Result<()> {
        match self {
            DiffusionModel::Ou { d } if *d == 0 => Err(Error::param("d", "must be at least 1")),
            DiffusionModel::QuadraticForm { matrix } => {
                let a = symmetric_matrix(matrix, "matrix")?;
                if smallest_eigenvalue(&a) <= 0.0 {
                    return Err(Error::param("matrix", "must be positive definite"));
                }
                Ok(())
            }
            DiffusionModel::RadialBoltzmann { beta, d } => {
                if *d == 0 {
                    return Err(Error::param("d", "must be at least 1"));
                }
                if !(*beta >= 1.0 && beta.is_finite()) {
                    return Err(Error::param(
                        "beta",
                        format!("must be at least 1, got {beta}"),
                    ));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            DiffusionModel::Ou { d } | DiffusionModel::RadialBoltzmann { d, .. } => *d,
            DiffusionModel::QuadraticForm { matrix } => matrix.len(),
        }
    }

    fn is_gaussian(&self) -> bool {
        !matches!(self, DiffusionModel::RadialBoltzmann { .. })
    }

    /// `(U'(r), U'(r)/r, U''(r))` of the radial profile.
    fn radial_derivatives(&self, r: f64) -> (f64, f64, f64) {
        match self {
            DiffusionModel::RadialBoltzmann { beta, .. } => {
                let b = *beta;
                (
                    b * r.powf(b - 1.0),
                    b * r.powf(b - 2.0),
                    b * (b - 1.0) * r.powf(b - 2.0),
                )
            }
            _ => (r, 1.0, 1.0),
        }
    }

    /// `Delta U` at radius `r`.
    pub fn laplacian_u(&self, r: f64) -> f64 {
        let (_, u1r, u2) = self.radial_derivatives(r);
        u2 + (self.dim() as f64 - 1.0) * u1r
    }

    /// `|grad U|^2` at radius `r`.
    pub fn grad_u_sq(&self, r: f64) -> f64 {
        self.radial_derivatives(r).0.powi(2)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum Model {
    BirthDeath { chain: BirthDeathChain },
    Diffusion { diffusion: DiffusionModel },
    Glauber { system: GlauberSystem },
}

#[derive(Clone, Copy, Debug)]
pub enum State<'a> {
    Int(usize),
    Point(&'a [f64]),
    Config(&'a [u32]),
}

/// Owned state, serialized as a number or an array.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum StatePoint {
    Int(usize),
    Point(Vec<f64>),
    Config(Vec<u32>),
}

impl std::fmt::Display for StatePoint {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            StatePoint::Int(x) => write!(f, "{x}"),
            StatePoint::Point(p) => write!(f, "{p:?}"),
            StatePoint::Config(c) => write!(f, "{c:?}"),
        }
    }
}

fn wrong_family(v: &TestFunction, model: &str) -> Error {
    Error::param("V", format!("{v:?} is not a test function for {model}"))
}

/// Checks that `V` is integrable against the model's invariant law. For
/// `kappa^x` the sufficient rule is `kappa birth(x) / death(x+1) < 1`
/// throughout the last 20% of `0..=n`.
pub fn check_integrability(model: &Model, v: &TestFunction, n: usize) -> Result<()> {
    v.validate()?;
    match (model, v) {
        (_, TestFunction::Constant) => Ok(()),
        (Model::BirthDeath { chain }, TestFunction::ExpScaledState { kappa }) => {
            if chain.closes_at(chain.truncation_hint) {
                return Ok(());
            }
            let n = n.max(1);
            for x in tail_window(n) {
                let ratio = kappa * chain.birth(x)? / chain.death(x + 1)?;
                if ratio >= 1.0 {
                    return Err(Error::Hypothesis {
                        hypothesis: format!("kappa birth(x)/death(x+1) < 1 (got {ratio})"),
                        state: x,
                    });
                }
            }
            Ok(())
        }
        (
            Model::Diffusion { diffusion },
            TestFunction::ExpPotential { .. } | TestFunction::Power { .. },
        ) => diffusion.validate(),
        (Model::Diffusion { diffusion }, TestFunction::ExpQuadraticForm { c, matrix }) => {
            diffusion.validate()?;
            let a = symmetric_matrix(matrix, "matrix")?;
            if a.nrows() != diffusion.dim() {
                return Err(Error::param("matrix", "dimension differs from the model"));
            }
            let top = c * largest_eigenvalue(&a);
            let ok = match diffusion {
                DiffusionModel::RadialBoltzmann { beta, .. } if *beta > 2.0 => true,
                DiffusionModel::RadialBoltzmann { beta, .. } if *beta == 2.0 => top < 1.0,
                DiffusionModel::RadialBoltzmann { .. } => top <= 0.0,
                _ => top < 0.5,
            };
            if ok {
                Ok(())
            } else {
                Err(Error::param(
                    "V",
                    "e^{c<Ax,x>} is not integrable against the invariant law",
                ))
            }
        }
        (Model::Glauber { .. }, TestFunction::ExpTotalParticles { .. }) => Ok(()),
        (Model::BirthDeath { .. }, _) => Err(wrong_family(v, "birth-death chains")),
        (Model::Diffusion { .. }, _) => Err(wrong_family(v, "diffusions")),
        (Model::Glauber { .. }, _) => Err(wrong_family(v, "Glauber dynamics")),
    }
}

fn neg_drift_unchecked(model: &Model, v: &TestFunction, state: State) -> Result<f64> {
    match (model, v, state) {
        (_, TestFunction::Constant, _) => Ok(0.0),
        (Model::BirthDeath { chain }, TestFunction::ExpScaledState { kappa }, State::Int(x)) => {
            Ok((kappa - 1.0) * (chain.death(x)? / kappa - chain.birth(x)?))
        }
        (Model::Diffusion { diffusion }, _, State::Point(x)) => {
            if x.len() != diffusion.dim() {
                return Err(Error::domain(
                    format!("{x:?}"),
                    "point of mismatched dimension",
                ));
            }
            let r = x.iter().map(|v| v * v).sum::<f64>().sqrt();
            let (u1, u1r, _) = diffusion.radial_derivatives(r);
            let d = diffusion.dim() as f64;
            let value = match v {
                TestFunction::ExpPotential { c } => {
                    -c * diffusion.laplacian_u(r) + c * (1.0 - c) * u1 * u1
                }
                TestFunction::Power { k } => {
                    if r == 0.0 {
                        return Err(Error::domain("0", "LV/V for V = |x|^k"));
                    }
                    -k * (d + k - 2.0) / (r * r) + k * u1r
                }
                TestFunction::ExpQuadraticForm { c, matrix } => {
                    let a = symmetric_matrix(matrix, "matrix")?;
                    let xv = DVector::from_column_slice(x);
                    let ax = &a * &xv;
                    -(2.0 * c * a.trace() + 4.0 * c * c * ax.norm_squared()
                        - 2.0 * c * u1r * ax.dot(&xv))
                }
                _ => return Err(wrong_family(v, "diffusions")),
            };
            if value.is_finite() {
                Ok(value)
            } else {
                Err(Error::domain(
                    format!("{x:?}"),
                    "LV/V (potential not smooth here)",
                ))
            }
        }
        (
            Model::Glauber { system },
            TestFunction::ExpTotalParticles { kappa },
            State::Config(eta),
        ) => {
            if eta.len() != system.n_sites() {
                return Err(Error::domain(
                    format!("{eta:?}"),
                    "configuration on the box",
                ));
            }
            let sum: f64 = (0..system.n_sites())
                .map(|i| eta[i] as f64 - kappa * system.birth_rate(eta, i))
                .sum();
            Ok((kappa - 1.0) / kappa * sum)
        }
        (Model::BirthDeath { .. }, TestFunction::ExpScaledState { .. }, _)
        | (Model::Glauber { .. }, TestFunction::ExpTotalParticles { .. }, _) => {
            Err(Error::param("state", "state type does not match the model"))
        }
        (Model::BirthDeath { .. }, _, _) => Err(wrong_family(v, "birth-death chains")),
        (Model::Diffusion { .. }, _, _) => Err(wrong_family(v, "diffusions")),
        (Model::Glauber { .. }, _, _) => Err(wrong_family(v, "Glauber dynamics")),
    }
}

/// `-LV/V` at `state` from the family's closed form.
pub fn neg_drift_ratio(model: &Model, v: &TestFunction, state: State) -> Result<f64> {
    let n = match model {
        Model::BirthDeath { chain } => chain.truncation_hint,
        _ => 0,
    };
    check_integrability(model, v, n)?;
    neg_drift_unchecked(model, v, state)
}

/// `Gamma(f,f)` at `state` for any of the three dynamics.
pub fn carre_du_champ_at(model: &Model, f: &Observable, state: State) -> Result<f64> {
    match (model, state) {
        (Model::BirthDeath { chain }, State::Int(x)) => carre_du_champ(chain, f, x),
        (Model::Diffusion { .. }, State::Point(x)) => {
            let r2: f64 = x.iter().map(|v| v * v).sum();
            let value = match f {
                Observable::RadialPower { beta } => {
                    if r2 == 0.0 {
                        match beta.partial_cmp(&1.0) {
                            Some(std::cmp::Ordering::Greater) => 0.0,
                            Some(std::cmp::Ordering::Equal) => 1.0,
                            _ => f64::INFINITY,
                        }
                    } else {
                        beta * beta * r2.powf(beta - 1.0)
                    }
                }
                Observable::QuadraticForm { matrix } => {
                    let b = symmetric_matrix(matrix, "observable")?;
                    if b.nrows() != x.len() {
                        return Err(Error::domain(
                            format!("{x:?}"),
                            "quadratic form of mismatched dimension",
                        ));
                    }
                    4.0 * (&b * DVector::from_column_slice(x)).norm_squared()
                }
                _ => {
                    return Err(Error::domain(
                        format!("{x:?}"),
                        "carre du champ of this observable on R^d",
                    ))
                }
            };
            if value.is_finite() {
                Ok(value)
            } else {
                Err(Error::domain(
                    format!("{x:?}"),
                    "carre du champ (observable not smooth here)",
                ))
            }
        }
        (Model::Glauber { system }, State::Config(eta)) => {
            let f0 = f.eval_config(eta)?;
            let mut acc = 0.0;
            let mut probe = eta.to_vec();
            for i in 0..system.n_sites() {
                probe[i] += 1;
                acc += system.birth_rate(eta, i) * (f.eval_config(&probe)? - f0).powi(2);
                probe[i] -= 1;
                if eta[i] > 0 {
                    probe[i] -= 1;
                    acc += eta[i] as f64 * (f.eval_config(&probe)? - f0).powi(2);
                    probe[i] += 1;
                }
            }
            Ok(0.5 * acc)
        }
        _ => Err(Error::param("state", "state type does not match the model")),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TailWitness {
    /// Residual nonincreasing over the last 20% of the range and the drift
    /// grows at least as fast as the carré du champ.
    MonotoneResidual,
    /// Residual bounded on the whole space by an explicit computation.
    ClosedForm,
    /// Valid on the verified range only.
    None,
}

/// Lower bound imposed on `b`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Floor {
    None,
    /// `b >= 3 a lambda_1`, needed when the p = 2 Beckner-type envelope is used.
    Poincare {
        lambda1: f64,
    },
}

impl Floor {
    fn value(&self, a: f64) -> f64 {
        match self {
            Floor::None => 0.0,
            Floor::Poincare { lambda1 } => 3.0 * a * lambda1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LyapunovCertificate {
    pub a: f64,
    pub b: f64,
    pub v: TestFunction,
    /// Largest state or radius checked; `None` when the closed form covers
    /// the whole space.
    pub verified_up_to: Option<f64>,
    pub tail_witness: TailWitness,
    /// `sup (Gamma(f,f) + a LV/V)` and where it is attained.
    pub residual_sup: f64,
    pub argmax: StatePoint,
    pub floor: f64,
}

impl LyapunovCertificate {
    pub fn range_limited(&self) -> bool {
        self.tail_witness == TailWitness::None
    }
}

/// Residual sup with ties resolved to the last index.
fn sup_last(values: impl IntoIterator<Item = f64>) -> (f64, usize) {
    let mut best = (f64::NEG_INFINITY, 0);
    for (i, v) in values.into_iter().enumerate() {
        if v >= best.0 {
            best = (v, i);
        }
    }
    best
}

/// Local growth exponent of a positive sequence between two positions.
fn growth_exponent(v0: f64, v1: f64, s0: f64, s1: f64) -> f64 {
    if v0 <= 0.0 {
        return f64::INFINITY;
    }
    (v1 / v0).ln() / (s1 / s0).ln()
}

enum TailVerdict {
    Monotone,
    Inconclusive,
    Diverging(usize),
}

/// Examines the last 20% of a grid of residuals `gamma - drift`.
fn tail_verdict(pos: &[f64], gamma: &[f64], drift: &[f64]) -> TailVerdict {
    let n = pos.len() - 1;
    let window: Vec<usize> = tail_window(n).filter(|&i| pos[i] > 0.0).collect();
    if window.len() < 3 {
        return TailVerdict::Inconclusive;
    }
    let residual = |i: usize| gamma[i] - drift[i];
    let tol = |i: usize| 1e-12 * gamma[i].abs().max(drift[i].abs()).max(1.0);
    let rising = window
        .windows(2)
        .find(|w| residual(w[1]) > residual(w[0]) + tol(w[1]));
    let (s, e) = (window[0], *window.last().expect("non-empty"));
    let favors_drift = if gamma[e] <= 0.0 {
        drift[e] >= 0.0
    } else {
        drift[e] > 0.0
            && growth_exponent(drift[s], drift[e], pos[s], pos[e])
                >= growth_exponent(gamma[s], gamma[e], pos[s], pos[e]) - 0.05
    };
    match rising {
        None if favors_drift => TailVerdict::Monotone,
        Some(w) if residual(e) > residual(s) + tol(e) => TailVerdict::Diverging(w[1]),
        _ => TailVerdict::Inconclusive,
    }
}

/// Radial grid points used for diffusion certificates.
const RADIAL_GRID: usize = 4000;

/// Smallest `b` with `Gamma(f,f) + a LV/V <= b` on the model's checked range
/// (`0..=n` for chains, radius `n` for diffusions, `{0..n}^Lambda` for
/// Glauber), raised to `floor`.
pub fn certify(
    model: &Model,
    f: &Observable,
    v: &TestFunction,
    a: f64,
    n: usize,
    floor: Floor,
) -> Result<LyapunovCertificate> {
    if !(a > 0.0 && a.is_finite()) {
        return Err(Error::param("a", format!("must be positive, got {a}")));
    }
    check_integrability(model, v, n)?;
    let floor_value = floor.value(a);
    let finish = |sup: f64, argmax: StatePoint, witness: TailWitness, range: Option<f64>| {
        Ok(LyapunovCertificate {
            a,
            b: sup.max(floor_value),
            v: v.clone(),
            verified_up_to: range,
            tail_witness: witness,
            residual_sup: sup,
            argmax,
            floor: floor_value,
        })
    };
    match model {
        Model::BirthDeath { chain } => {
            if n < 1 {
                return Err(Error::param("N", "must be at least 1"));
            }
            let mut gamma = Vec::with_capacity(n + 1);
            let mut drift = Vec::with_capacity(n + 1);
            for x in 0..=n {
                gamma.push(carre_du_champ(chain, f, x)?);
                drift.push(a * neg_drift_unchecked(model, v, State::Int(x))?);
            }
            let pos: Vec<f64> = (0..=n).map(|x| x as f64).collect();
            grid_certificate(&pos, &gamma, &drift, StatePoint::Int, n as f64, finish)
        }
        Model::Diffusion { diffusion } => {
            if let Some(cert) = quadratic_closed_form(diffusion, f, v, a)? {
                let (sup, m_top) = cert;
                if m_top > 0.0 {
                    return Err(Error::CertificationFailed {
                        state: "|x| -> infinity along the top eigenvector".into(),
                        residual: f64::INFINITY,
                    });
                }
                return finish(
                    sup,
                    StatePoint::Point(vec![0.0; diffusion.dim()]),
                    TailWitness::ClosedForm,
                    None,
                );
            }
            if !(radial_observable(f) && radial_test_function(v)) {
                return Err(Error::param(
                    "observable",
                    "supported diffusion certificates: quadratic forms under Ornstein-Uhlenbeck, or radial f and V",
                ));
            }
            if n < 1 {
                return Err(Error::param("N", "radius must be at least 1"));
            }
            let d = diffusion.dim();
            let start = usize::from(matches!(v, TestFunction::Power { .. }));
            let mut pos = Vec::with_capacity(RADIAL_GRID + 1);
            let mut gamma = Vec::with_capacity(RADIAL_GRID + 1);
            let mut drift = Vec::with_capacity(RADIAL_GRID + 1);
            let mut point = vec![0.0; d];
            for i in start..=RADIAL_GRID {
                let r = n as f64 * i as f64 / RADIAL_GRID as f64;
                point[0] = r;
                pos.push(r);
                gamma.push(carre_du_champ_at(model, f, State::Point(&point))?);
                drift.push(a * neg_drift_unchecked(model, v, State::Point(&point))?);
            }
            let to_point = |i: usize| {
                let mut p = vec![0.0; d];
                p[0] = pos[i];
                StatePoint::Point(p)
            };
            grid_certificate(&pos, &gamma, &drift, to_point, n as f64, finish)
        }
        Model::Glauber { system } => {
            let sites = system.n_sites();
            let size = (n as u128 + 1)
                .checked_pow(sites as u32)
                .unwrap_or(u128::MAX);
            if size > ENUMERATION_LIMIT {
                return Err(Error::StateSpaceTooLarge { size });
            }
            let base = n + 1;
            let config = |mut idx: usize| {
                let mut eta = vec![0u32; sites];
                for slot in eta.iter_mut().rev() {
                    *slot = (idx % base) as u32;
                    idx /= base;
                }
                eta
            };
            let mut residuals = Vec::with_capacity(size as usize);
            for idx in 0..size as usize {
                let eta = config(idx);
                let g = carre_du_champ_at(model, f, State::Config(&eta))?;
                let dr = neg_drift_unchecked(model, v, State::Config(&eta))?;
                residuals.push(g - a * dr);
            }
            let closed = match (f, v) {
                (Observable::ParticleCount, TestFunction::ExpTotalParticles { kappa }) => {
                    0.5 - a * (kappa - 1.0) / kappa <= 0.0
                }
                _ => false,
            };
            if closed {
                // residual = sum_x c+ (1/2 + a(kappa-1)) + eta_x (1/2 - a(kappa-1)/kappa),
                // maximal at the empty configuration where c+ = lambda
                return finish(
                    residuals[0],
                    StatePoint::Config(vec![0; sites]),
                    TailWitness::ClosedForm,
                    None,
                );
            }
            let (sup, idx) = sup_last(residuals.iter().copied());
            finish(
                sup,
                StatePoint::Config(config(idx)),
                TailWitness::None,
                Some(n as f64),
            )
        }
    }
}

fn grid_certificate<F>(
    pos: &[f64],
    gamma: &[f64],
    drift: &[f64],
    to_state: impl Fn(usize) -> StatePoint,
    range: f64,
    finish: F,
) -> Result<LyapunovCertificate>
where
    F: Fn(f64, StatePoint, TailWitness, Option<f64>) -> Result<LyapunovCertificate>,
{
    let (sup, idx) = sup_last(gamma.iter().zip(drift).map(|(g, d)| g - d));
    match tail_verdict(pos, gamma, drift) {
        TailVerdict::Monotone => finish(
            sup,
            to_state(idx),
            TailWitness::MonotoneResidual,
            Some(range),
        ),
        TailVerdict::Inconclusive => finish(sup, to_state(idx), TailWitness::None, Some(range)),
        TailVerdict::Diverging(i) => Err(Error::CertificationFailed {
            state: to_state(i).to_string(),
            residual: gamma[i] - drift[i],
        }),
    }
}

fn radial_observable(f: &Observable) -> bool {
    match f {
        Observable::RadialPower { .. } => true,
        Observable::QuadraticForm { matrix } => is_scalar_matrix(matrix),
        _ => false,
    }
}

fn radial_test_function(v: &TestFunction) -> bool {
    match v {
        TestFunction::ExpPotential { .. } | TestFunction::Power { .. } | TestFunction::Constant => {
            true
        }
        TestFunction::ExpQuadraticForm { matrix, .. } => is_scalar_matrix(matrix),
        _ => false,
    }
}

fn is_scalar_matrix(m: &[Vec<f64>]) -> bool {
    m.iter().enumerate().all(|(i, row)| {
        row.iter()
            .enumerate()
            .all(|(j, v)| if i == j { *v == m[0][0] } else { *v == 0.0 })
    })
}

/// For Gaussian dynamics, `f = <B x, x>` and `V = e^{c <A x, x>}` the
/// residual is `x^T M x + 2 a c tr(A)` with `M = 4B^2 + a(4c^2 A^2 - 2cA)`.
/// Returns the constant and the top eigenvalue of `M`.
fn quadratic_closed_form(
    diffusion: &DiffusionModel,
    f: &Observable,
    v: &TestFunction,
    a: f64,
) -> Result<Option<(f64, f64)>> {
    let Observable::QuadraticForm { matrix: b_rows } = f else {
        return Ok(None);
    };
    if !diffusion.is_gaussian() {
        return Ok(None);
    }
    let d = diffusion.dim();
    let (c, a_mat) = match v {
        TestFunction::ExpPotential { c } => (0.5 * c, DMatrix::identity(d, d)),
        TestFunction::ExpQuadraticForm { c, matrix } => (*c, symmetric_matrix(matrix, "matrix")?),
        TestFunction::Constant => (0.0, DMatrix::zeros(d, d)),
        _ => return Ok(None),
    };
    let b = symmetric_matrix(b_rows, "observable")?;
    if b.nrows() != d || a_mat.nrows() != d {
        return Err(Error::param("matrix", "dimension differs from the model"));
    }
    let m = &b * &b * 4.0 + (&a_mat * &a_mat * (4.0 * c * c) - &a_mat * (2.0 * c)) * a;
    let scale = m.amax().max(1.0);
    let top = largest_eigenvalue(&m);
    let top = if top <= 1e-12 * scale { 0.0 } else { top };
    Ok(Some((2.0 * a * c * a_mat.trace(), top)))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Recipe {
    pub a: f64,
    pub b: f64,
    pub v: TestFunction,
    /// Radius beyond which the drift dominates (radial diffusions).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub radius: Option<f64>,
    /// Spectral gap used for the `3 a lambda_1` floor, when one was applied.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda1: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "case", rename_all = "snake_case")]
pub enum BirthDeathCase {
    /// Bounded birth rate.
    BoundedBirth { kappa: f64 },
    /// `birth(x) <= c death(x)` for `x >= x0`.
    ComparableRates { c: f64, x0: usize },
    /// The geometric family; `x0` defaults to the first state past which
    /// `birth <= c death` holds.
    GeometricN {
        p: f64,
        n: u32,
        #[serde(default)]
        x0: Option<usize>,
    },
}

fn check_comparable(chain: &BirthDeathChain, c: f64, x0: usize, upto: usize) -> Result<()> {
    for x in x0..=upto {
        if chain.birth(x)? > c * chain.death(x)? {
            return Err(Error::Hypothesis {
                hypothesis: format!("birth(x) <= {c} death(x) for x >= {x0}"),
                state: x,
            });
        }
    }
    Ok(())
}

fn sup_abs_gap(chain: &BirthDeathChain, c: f64, x0: usize) -> Result<f64> {
    (0..=x0).try_fold(0.0f64, |m, x| {
        Ok(m.max((chain.birth(x)? - c * chain.death(x)?).abs()))
    })
}

/// Parameters `(a, b, V)` placing 1-Lipschitz observables in `L_V(a, b)`.
///
/// Case (ii) and the geometric family use
/// `a = kappa (1+c) / (2 (1 - c kappa)(kappa - 1))`, which is what makes
/// `(birth + death)/2 + a LV/V` collapse to
/// `(1+kappa)(birth - c death) / (2(1 - c kappa))`.
pub fn recipe_birth_death(chain: &BirthDeathChain, case: &BirthDeathCase) -> Result<Recipe> {
    let upto = chain.truncation_hint;
    let model = Model::BirthDeath {
        chain: chain.clone(),
    };
    match case {
        BirthDeathCase::BoundedBirth { kappa } => {
            let v = TestFunction::ExpScaledState { kappa: *kappa };
            check_integrability(&model, &v, upto)?;
            let sup_birth =
                (0..=upto).try_fold(0.0f64, |m, x| Ok::<_, Error>(m.max(chain.birth(x)?)))?;
            Ok(Recipe {
                a: kappa / (2.0 * (kappa - 1.0)),
                b: (1.0 + kappa) * sup_birth / 2.0,
                v,
                radius: None,
                lambda1: None,
            })
        }
        BirthDeathCase::ComparableRates { c, x0 } => {
            if !(*c > 0.0 && *c < 1.0) {
                return Err(Error::param("c", format!("must lie in (0,1), got {c}")));
            }
            check_comparable(chain, *c, *x0, upto)?;
            let kappa = 1.0 / c.sqrt();
            let v = TestFunction::ExpScaledState { kappa };
            check_integrability(&model, &v, upto)?;
            Ok(Recipe {
                a: (1.0 + c) / (2.0 * (1.0 - c.sqrt()).powi(2)),
                b: (1.0 + kappa) / (2.0 * (1.0 - c * kappa)) * sup_abs_gap(chain, *c, *x0)?,
                v,
                radius: None,
                lambda1: None,
            })
        }
        BirthDeathCase::GeometricN { p, n, x0 } => {
            if !matches!(chain.family, RateFamily::GeometricN { p: q, n: m } if q == *p && m == *n)
            {
                return Err(Error::param(
                    "chain",
                    "geometric recipe needs the matching geometric chain",
                ));
            }
            let c = (1.0 + p).powi(2) / 4.0;
            let x0 = match x0 {
                Some(x0) => *x0,
                None => (1..=upto)
                    .rev()
                    .find(|&x| chain.birth(x).ok() > Some(c * chain.death(x).unwrap_or(0.0)))
                    .map_or(1, |x| x + 1),
            };
            check_comparable(chain, c, x0, upto)?;
            let kappa = 2.0 / (1.0 + p);
            let v = TestFunction::ExpScaledState { kappa };
            check_integrability(&model, &v, upto)?;
            let a = (4.0 + (1.0 + p).powi(2)) / (2.0 * (1.0 - p).powi(2));
            let lambda1 = spectral_gap_exact(chain, upto)?.value;
            let edge = (3.0 + p) / (4.0 * (1.0 - p).powi(2)) * 4.0 * sup_abs_gap(chain, c, x0)?;
            Ok(Recipe {
                a,
                b: edge.max(3.0 * a * lambda1),
                v,
                radius: None,
                lambda1: Some(lambda1),
            })
        }
    }
}

/// Cited parameters for the diffusion families. `lambda1`, when given,
/// imposes the `3 a lambda_1` floor on the radial recipe.
pub fn recipe_diffusion(model: &DiffusionModel, lambda1: Option<f64>) -> Result<Recipe> {
    model.validate()?;
    match model {
        DiffusionModel::Ou { d } => Ok(Recipe {
            a: 16.0,
            b: 8.0 * *d as f64,
            v: TestFunction::ExpPotential { c: 0.5 },
            radius: None,
            lambda1: None,
        }),
        DiffusionModel::QuadraticForm { matrix } => {
            let a_mat = symmetric_matrix(matrix, "matrix")?;
            let norm = largest_eigenvalue(&a_mat);
            Ok(Recipe {
                a: 16.0 * norm * norm,
                b: 8.0 * a_mat.trace() * norm,
                v: TestFunction::ExpQuadraticForm {
                    c: 0.25 / norm,
                    matrix: matrix.clone(),
                },
                radius: None,
                lambda1: None,
            })
        }
        DiffusionModel::RadialBoltzmann { beta, d } => {
            let (beta, d) = (*beta, *d as f64);
            if d + beta - 2.0 <= 0.0 {
                return Err(Error::Hypothesis {
                    hypothesis: "d + beta - 2 > 0".into(),
                    state: 0,
                });
            }
            if beta < 2.0 {
                return Err(Error::param(
                    "beta",
                    "the residual 4 Delta U - |grad U|^2 is unbounded at the origin for beta < 2",
                ));
            }
            let radius = (4.0 * (d + beta - 2.0) / beta).powf(1.0 / beta);
            // residual 4 beta (d+beta-2) r^{beta-2} - beta^2 r^{2beta-2}
            let coef = 4.0 * beta * (d + beta - 2.0);
            let residual =
                |r: f64| coef * r.powf(beta - 2.0) - beta * beta * r.powf(2.0 * beta - 2.0);
            let peak = if beta == 2.0 {
                residual(0.0)
            } else {
                let r_star =
                    (coef * (beta - 2.0) / (beta * beta * (2.0 * beta - 2.0))).powf(1.0 / beta);
                residual(r_star)
            };
            let floor = lambda1.map_or(0.0, |l| 3.0 * 8.0 * l);
            Ok(Recipe {
                a: 8.0,
                b: peak.max(floor),
                v: TestFunction::ExpPotential { c: 0.5 },
                radius: Some(radius),
                lambda1,
            })
        }
    }
}

/// `a = kappa / (2(kappa-1))`, `b = (1+kappa)/2 sum_x lambda(x)`, `V = kappa^{sum eta}`.
pub fn recipe_glauber(system: &GlauberSystem, kappa: f64) -> Result<Recipe> {
    if !(kappa > 1.0 && kappa.is_finite()) {
        return Err(Error::param("kappa", format!("must exceed 1, got {kappa}")));
    }
    Ok(Recipe {
        a: kappa / (2.0 * (kappa - 1.0)),
        b: (1.0 + kappa) / 2.0 * system.intensity_sum(),
        v: TestFunction::ExpTotalParticles { kappa },
        radius: None,
        lambda1: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::glauber::PairPotential;
    use approx::assert_relative_eq;

    fn bd(chain: BirthDeathChain) -> Model {
        Model::BirthDeath { chain }
    }

    fn identity(d: usize) -> Vec<Vec<f64>> {
        (0..d)
            .map(|i| (0..d).map(|j| f64::from(u8::from(i == j))).collect())
            .collect()
    }

    #[test]
    fn birth_death_drift_examples() {
        let chain = BirthDeathChain::geometric_n(0.25, 0).unwrap();
        let v = TestFunction::ExpScaledState { kappa: 2.0 };
        let m = bd(chain);
        assert_eq!(neg_drift_ratio(&m, &v, State::Int(1)).unwrap(), 0.25);
        assert_eq!(neg_drift_ratio(&m, &v, State::Int(0)).unwrap(), -0.25);
    }

    #[test]
    fn integrability_rule_rejects_heavy_test_function() {
        let m = bd(BirthDeathChain::geometric_n(0.5, 1).unwrap());
        let v = TestFunction::ExpScaledState { kappa: 2.5 };
        assert!(matches!(
            neg_drift_ratio(&m, &v, State::Int(3)),
            Err(Error::Hypothesis { .. })
        ));
    }

    #[test]
    fn ou_drift_closed_form() {
        let m = Model::Diffusion {
            diffusion: DiffusionModel::Ou { d: 3 },
        };
        let v = TestFunction::ExpPotential { c: 0.5 };
        let x = [1.0, -2.0, 0.5];
        let r2 = 5.25;
        assert_relative_eq!(
            neg_drift_ratio(&m, &v, State::Point(&x)).unwrap(),
            -1.5 + r2 / 4.0,
            max_relative = 1e-15
        );
        let power = TestFunction::Power { k: 2.0 };
        assert_relative_eq!(
            neg_drift_ratio(&m, &power, State::Point(&x)).unwrap(),
            -2.0 * 3.0 / r2 + 2.0,
            max_relative = 1e-15
        );
    }

    #[test]
    fn glauber_drift_closed_form() {
        let system = GlauberSystem::new(
            vec![vec![0], vec![1]],
            vec![1.0, 0.5],
            PairPotential::nearest_neighbor(1, 1.0).unwrap(),
            0.5,
            10,
        )
        .unwrap();
        let eta = [2u32, 1];
        let kappa = 2.0;
        let expected = (kappa - 1.0) / kappa
            * ((2.0 - kappa * 1.0 * (-0.5f64).exp()) + (1.0 - kappa * 0.5 * (-1.0f64).exp()));
        let m = Model::Glauber { system };
        let got = neg_drift_ratio(
            &m,
            &TestFunction::ExpTotalParticles { kappa },
            State::Config(&eta),
        )
        .unwrap();
        assert_relative_eq!(got, expected, max_relative = 1e-15);
    }

    #[test]
    fn ou_quadratic_certificate_is_exact() {
        let m = Model::Diffusion {
            diffusion: DiffusionModel::Ou { d: 3 },
        };
        let f = Observable::QuadraticForm {
            matrix: identity(3),
        };
        let cert = certify(
            &m,
            &f,
            &TestFunction::ExpPotential { c: 0.5 },
            16.0,
            10,
            Floor::None,
        )
        .unwrap();
        assert_eq!(cert.b, 24.0);
        assert_eq!(cert.tail_witness, TailWitness::ClosedForm);
        assert_eq!(cert.verified_up_to, None);
        // the residual is the same constant along a radial grid
        for r in [0.0, 0.7, 3.0, 40.0] {
            let x = [r, 0.0, 0.0];
            let g = carre_du_champ_at(&m, &f, State::Point(&x)).unwrap();
            let d = neg_drift_ratio(&m, &cert.v, State::Point(&x)).unwrap();
            assert_relative_eq!(g - 16.0 * d, 24.0, max_relative = 1e-12);
        }
    }

    #[test]
    fn constant_observable_gets_floor() {
        let chain = BirthDeathChain::geometric_n(0.5, 0).unwrap();
        let m = bd(chain);
        let f = Observable::Table(vec![1.0; 502]);
        let v = TestFunction::Constant;
        let cert = certify(&m, &f, &v, 2.0, 500, Floor::Poincare { lambda1: 0.1 }).unwrap();
        assert_eq!(cert.residual_sup, 0.0);
        assert_relative_eq!(cert.b, 0.6, max_relative = 1e-15);
    }

    #[test]
    fn geometric_recipe_certifies() {
        for (p, n) in [(0.3, 0), (0.5, 1), (0.5, 2), (0.7, 2)] {
            let chain = BirthDeathChain::geometric_n(p, n).unwrap();
            let recipe =
                recipe_birth_death(&chain, &BirthDeathCase::GeometricN { p, n, x0: None }).unwrap();
            let cert = certify(
                &bd(chain),
                &Observable::Identity,
                &recipe.v,
                recipe.a,
                2000,
                Floor::None,
            )
            .unwrap();
            assert_eq!(
                cert.tail_witness,
                TailWitness::MonotoneResidual,
                "p={p} n={n}"
            );
            assert!(
                cert.b <= recipe.b * (1.0 + 1e-12),
                "p={p} n={n}: {} > {}",
                cert.b,
                recipe.b
            );
        }
    }

    #[test]
    fn geometric_recipe_value() {
        let chain = BirthDeathChain::geometric_n(0.5, 2).unwrap();
        let r = recipe_birth_death(
            &chain,
            &BirthDeathCase::GeometricN {
                p: 0.5,
                n: 2,
                x0: None,
            },
        )
        .unwrap();
        assert_eq!(r.a, 12.5);
        assert_eq!(r.v, TestFunction::ExpScaledState { kappa: 2.0 / 1.5 });
        assert!(r.b >= 3.0 * r.a * r.lambda1.unwrap());
    }

    #[test]
    fn case_i_recipe() {
        let chain = BirthDeathChain::mm_infinity(0.5).unwrap();
        let r = recipe_birth_death(&chain, &BirthDeathCase::BoundedBirth { kappa: 2.0 }).unwrap();
        assert_eq!((r.a, r.b), (1.0, 0.75));
        let cert = certify(
            &bd(chain),
            &Observable::Identity,
            &r.v,
            r.a,
            400,
            Floor::None,
        )
        .unwrap();
        assert!(cert.b <= r.b);
        assert_ne!(cert.tail_witness, TailWitness::None);
    }

    #[test]
    fn case_ii_recipe() {
        // birth = 0.2 (x+1), death = x: birth <= 0.25 death from x = 4 on
        let birth: Vec<f64> = (0..3000).map(|x| 0.2 * (x as f64 + 1.0)).collect();
        let death: Vec<f64> = (0..3000).map(|x| x as f64).collect();
        let chain = BirthDeathChain::tabulated(birth, death)
            .unwrap()
            .with_truncation(2000);
        let r = recipe_birth_death(&chain, &BirthDeathCase::ComparableRates { c: 0.25, x0: 4 })
            .unwrap();
        assert_eq!(r.a, 2.5);
        let cert = certify(
            &bd(chain.clone()),
            &Observable::Identity,
            &r.v,
            r.a,
            2000,
            Floor::None,
        )
        .unwrap();
        assert!(cert.b <= r.b * (1.0 + 1e-12));
        assert_eq!(cert.tail_witness, TailWitness::MonotoneResidual);
        assert!(matches!(
            recipe_birth_death(&chain, &BirthDeathCase::ComparableRates { c: 0.25, x0: 2 }),
            Err(Error::Hypothesis { state: 2, .. })
        ));
    }

    #[test]
    fn diffusion_recipes() {
        let ou = recipe_diffusion(&DiffusionModel::Ou { d: 3 }, None).unwrap();
        assert_eq!((ou.a, ou.b), (16.0, 24.0));
        let q = recipe_diffusion(
            &DiffusionModel::QuadraticForm {
                matrix: identity(4),
            },
            None,
        )
        .unwrap();
        assert_eq!((q.a, q.b), (16.0, 32.0));
        let radial =
            recipe_diffusion(&DiffusionModel::RadialBoltzmann { beta: 4.0, d: 3 }, None).unwrap();
        assert_relative_eq!(
            radial.radius.unwrap(),
            5f64.powf(0.25),
            max_relative = 1e-15
        );
        assert!(
            recipe_diffusion(&DiffusionModel::RadialBoltzmann { beta: 1.5, d: 3 }, None).is_err()
        );
    }

    #[test]
    fn quadratic_form_recipe_certifies() {
        let matrix = vec![
            vec![2.0, 0.5, 0.0],
            vec![0.5, 1.0, 0.0],
            vec![0.0, 0.0, 0.3],
        ];
        let model = DiffusionModel::QuadraticForm {
            matrix: matrix.clone(),
        };
        let r = recipe_diffusion(&model, None).unwrap();
        let cert = certify(
            &Model::Diffusion { diffusion: model },
            &Observable::QuadraticForm { matrix },
            &r.v,
            r.a,
            10,
            Floor::None,
        )
        .unwrap();
        assert_eq!(cert.tail_witness, TailWitness::ClosedForm);
        assert_relative_eq!(cert.b, r.b, max_relative = 1e-12);
    }

    #[test]
    fn radial_recipe_certifies() {
        for (beta, d) in [(2.0, 1), (3.0, 2), (4.0, 3)] {
            let model = DiffusionModel::RadialBoltzmann { beta, d };
            let r = recipe_diffusion(&model, None).unwrap();
            let cert = certify(
                &Model::Diffusion { diffusion: model },
                &Observable::RadialPower { beta },
                &r.v,
                r.a,
                6,
                Floor::None,
            )
            .unwrap();
            assert_eq!(cert.tail_witness, TailWitness::MonotoneResidual);
            assert!(
                cert.b <= r.b * (1.0 + 1e-12),
                "beta={beta}: {} > {}",
                cert.b,
                r.b
            );
        }
    }

    #[test]
    fn glauber_recipe_values_and_certificate() {
        let system = GlauberSystem::new(
            vec![vec![0], vec![1], vec![2]],
            vec![0.5, 0.5, 0.5],
            PairPotential::nearest_neighbor(1, 1.0).unwrap(),
            0.3,
            6,
        )
        .unwrap();
        let r = recipe_glauber(&system, 2.0).unwrap();
        assert_eq!((r.a, r.b), (1.0, 2.25));
        let r3 = recipe_glauber(&system, 3.0).unwrap();
        assert_eq!(r3.a, 0.75);
        assert!(recipe_glauber(&system, 1.0).is_err());
        let cert = certify(
            &Model::Glauber { system },
            &Observable::ParticleCount,
            &r.v,
            r.a,
            6,
            Floor::None,
        )
        .unwrap();
        assert_eq!(cert.tail_witness, TailWitness::ClosedForm);
        assert_relative_eq!(cert.b, r.b, max_relative = 1e-15);
    }

    #[test]
    fn wild_observable_fails() {
        let chain = BirthDeathChain::geometric_n(0.5, 0).unwrap();
        let v = TestFunction::ExpScaledState { kappa: 1.5 };
        let err = certify(
            &bd(chain),
            &Observable::Power { q: 2.0 },
            &v,
            1.0,
            400,
            Floor::None,
        )
        .unwrap_err();
        assert!(matches!(err, Error::CertificationFailed { .. }));
    }

    #[test]
    fn certificate_serializes_argmax() {
        let chain = BirthDeathChain::geometric_n(0.5, 0).unwrap();
        let v = TestFunction::ExpScaledState { kappa: 1.5 };
        let cert = certify(&bd(chain), &Observable::Identity, &v, 4.0, 100, Floor::None).unwrap();
        let json = serde_json::to_value(&cert).unwrap();
        assert!(json["argmax"].is_u64());
        assert!(json["residual_sup"].is_f64());
    }
}
