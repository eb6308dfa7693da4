//! Scenario files: one JSON document describing a model, an observable,
//! how to obtain `(a, b, V)` and the inequality constant, the envelope, the
//! ground truth and the deviation grid.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::bounds::{
    beckner_envelope, covariance_envelope, entropic_envelope, super_exponential_envelope,
    write_envelope_csv, ConcentrationEnvelope,
};
use crate::chain::{stationary_measure, Observable, RateFamily};
use crate::constants::{
    entropic_lower_bound, spectral_gap_exact, ultra_log_concave_check, BecknerConstant, Constant,
    GapBracket, InequalityConstants, Provenance,
};
use crate::error::{Error, Result};
use crate::grid::RGrid;
use crate::lyapunov::{
    certify, recipe_birth_death, recipe_diffusion, recipe_glauber, BirthDeathCase, DiffusionModel,
    Floor, LyapunovCertificate, Model, Recipe, TestFunction,
};
use crate::oracles::{
    chi_square_tail_curve, estimated_tail_curve, exact_tail_curve, Dominance, TailCurve, TailPoint,
};
use crate::sim::{
    dobrushin_epsilon, empirical_tail, glauber_enumerate_gibbs, sample_ou, simulate_birth_death,
    simulate_glauber, SampleKind, SimOptions,
};

pub const SCHEMA_VERSION: u32 = 1;

/// Where `(a, b, V)` come from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum LyapunovSpec {
    /// The model's recipe. Chains need a `case` unless they are geometric;
    /// Glauber systems take `kappa` (default 2).
    Recipe {
        #[serde(default)]
        case: Option<BirthDeathCase>,
        #[serde(default)]
        kappa: Option<f64>,
    },
    Supplied {
        a: f64,
        b: f64,
        v: TestFunction,
    },
}

impl Default for LyapunovSpec {
    fn default() -> Self {
        LyapunovSpec::Recipe {
            case: None,
            kappa: None,
        }
    }
}

/// Where the inequality constant of the envelope comes from.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum ConstantSpec {
    #[default]
    Computed,
    Supplied {
        value: f64,
        provenance: Provenance,
        #[serde(default)]
        note: Option<String>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EnvelopeSpec {
    /// Needs an entropic constant `rho0`.
    Entropic,
    /// Needs `alpha_p`; the spectral gap when `p = 2`.
    Beckner { p: f64 },
    /// Needs `rho0`.
    Covariance,
    /// Needs `rho0`; `a` and `b` are the log-Laplace coefficients, not the
    /// Lyapunov pair.
    SuperExponential { a: f64, b: f64 },
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TruthSpec {
    #[default]
    None,
    /// Exact tails: stationary law of a chain, enumerated Gibbs law, or the
    /// chi-square law of `|x|^2` under the Ornstein-Uhlenbeck process.
    Exact,
    /// Monte Carlo tails judged by their lower 99% confidence edge.
    Simulated {
        #[serde(default)]
        horizon: Option<f64>,
        #[serde(default)]
        samples: Option<usize>,
        #[serde(default)]
        options: SimOptions,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub schema_version: u32,
    pub name: String,
    #[serde(flatten)]
    pub model: Model,
    pub observable: Observable,
    #[serde(default)]
    pub lyapunov: LyapunovSpec,
    #[serde(default)]
    pub constant: ConstantSpec,
    pub envelope: EnvelopeSpec,
    pub grid: RGrid,
    #[serde(default)]
    pub truth: TruthSpec,
    /// States `0..=N` for chains, radius for diffusions, per-site cutoff for
    /// Glauber systems.
    #[serde(default)]
    pub truncation: Option<usize>,
    #[serde(default)]
    pub seed: u64,
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self> {
        let scenario: Scenario = serde_json::from_str(text)?;
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Scenario(format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        if self.name.is_empty()
            || !self
                .name
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
        {
            return Err(Error::Scenario(
                "name must be a non-empty [A-Za-z0-9_-] string".into(),
            ));
        }
        RGrid::new(self.grid.r0, self.grid.r1, self.grid.steps)?;
        if let ConstantSpec::Supplied { value, .. } = &self.constant {
            if !(*value > 0.0 && value.is_finite()) {
                return Err(Error::Scenario("supplied constant must be positive".into()));
            }
        }
        if let Model::Diffusion { diffusion } = &self.model {
            diffusion.validate()?;
        }
        Ok(())
    }

    pub fn truncation(&self) -> usize {
        self.truncation.unwrap_or(match &self.model {
            Model::BirthDeath { chain } => chain.truncation_hint,
            Model::Diffusion { .. } => 10,
            Model::Glauber { system } => system.cutoff() as usize,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Certify,
    Envelope,
    Tails,
    Scenario,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Pass,
    CertificationFailed,
    DominanceFailed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub name: String,
    pub stage: Stage,
    pub status: Status,
    pub seed: u64,
    pub truncation: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub recipe: Option<Recipe>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub certificate: Option<LyapunovCertificate>,
    /// `(a, b)` the envelope is built from.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lyapunov_pair: Option<(f64, f64)>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub constants: Option<InequalityConstants>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub envelope: Option<ConcentrationEnvelope>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dominance: Option<Dominance>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub first_violation: Option<TailPoint>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
    pub artifacts: Vec<String>,
}

impl Report {
    fn new(s: &Scenario, stage: Stage) -> Self {
        Self {
            name: s.name.clone(),
            stage,
            status: Status::Pass,
            seed: s.seed,
            truncation: s.truncation(),
            recipe: None,
            certificate: None,
            lyapunov_pair: None,
            constants: None,
            envelope: None,
            dominance: None,
            first_violation: None,
            failure: None,
            artifacts: Vec::new(),
        }
    }
}

/// Everything computed for a scenario, before anything is written.
pub struct Evaluation {
    pub report: Report,
    pub envelope_grid: Vec<f64>,
    pub tails: Option<TailCurve>,
}

fn recipe_for(s: &Scenario) -> Result<Recipe> {
    match (&s.model, &s.lyapunov) {
        (_, LyapunovSpec::Supplied { a, b, v }) => Ok(Recipe {
            a: *a,
            b: *b,
            v: v.clone(),
            radius: None,
            lambda1: None,
        }),
        (Model::BirthDeath { chain }, LyapunovSpec::Recipe { case, .. }) => {
            let case = match (case, &chain.family) {
                (Some(case), _) => case.clone(),
                (None, RateFamily::GeometricN { p, n }) => BirthDeathCase::GeometricN {
                    p: *p,
                    n: *n,
                    x0: None,
                },
                (None, _) => {
                    return Err(Error::Scenario("birth-death recipe needs a `case`".into()));
                }
            };
            let chain = chain.clone().with_truncation(s.truncation());
            recipe_birth_death(&chain, &case)
        }
        (Model::Diffusion { diffusion }, LyapunovSpec::Recipe { .. }) => {
            recipe_diffusion(diffusion, None)
        }
        (Model::Glauber { system }, LyapunovSpec::Recipe { kappa, .. }) => {
            recipe_glauber(system, kappa.unwrap_or(2.0))
        }
    }
}

fn needs_poincare_floor(s: &Scenario) -> bool {
    matches!(s.envelope, EnvelopeSpec::Beckner { p } if p == 2.0)
}

fn is_gaussian(d: &DiffusionModel) -> bool {
    matches!(
        d,
        DiffusionModel::Ou { .. } | DiffusionModel::QuadraticForm { .. }
    )
}

/// Constants available for the model, plus the one the envelope uses.
fn constants_for(s: &Scenario) -> Result<(InequalityConstants, f64)> {
    let n = s.truncation();
    let mut k = InequalityConstants::default();
    match &s.model {
        Model::BirthDeath { chain } => {
            let gap = spectral_gap_exact(chain, n)?.value;
            k.spectral_gap = Some(GapBracket {
                lo: gap,
                hi: gap,
                provenance: Provenance::Eigensolve,
            });
            let daipra = entropic_lower_bound(chain, n)?;
            if daipra.applicable && daipra.alpha > 0.0 {
                k.entropic_lower = Some(Constant::new(daipra.alpha, Provenance::DaipraCriterion));
            } else if let RateFamily::Potential { potential } = &chain.family {
                let ulc = ultra_log_concave_check(potential, n)?;
                if ulc.ulc && ulc.rho0_lower > 0.0 {
                    k.entropic_lower =
                        Some(Constant::new(ulc.rho0_lower, Provenance::UltraLogConcave));
                }
            }
        }
        Model::Diffusion { diffusion } if is_gaussian(diffusion) => {
            k.spectral_gap = Some(GapBracket {
                lo: 1.0,
                hi: 1.0,
                provenance: Provenance::ClosedForm,
            });
            k.entropic_lower =
                Some(Constant::new(2.0, Provenance::ClosedForm).with_note("standard Gaussian"));
        }
        Model::Diffusion { .. } => {}
        Model::Glauber { system } => {
            let dob = dobrushin_epsilon(system.potential(), system.beta(), system.intensity_sup())?;
            if let Some(rho0) = dob.rho0_lower {
                k.entropic_lower = Some(
                    Constant::new(rho0, Provenance::Dobrushin)
                        .with_note(format!("epsilon = {}", dob.epsilon)),
                );
                k.beckner_lower.push(BecknerConstant {
                    p: 2.0,
                    value: 0.5 * rho0,
                    provenance: Provenance::Dobrushin,
                });
            }
        }
    }
    if let ConstantSpec::Supplied {
        value,
        provenance,
        note,
    } = &s.constant
    {
        match s.envelope {
            EnvelopeSpec::Beckner { p } => {
                k.beckner_lower.retain(|c| c.p != p);
                k.beckner_lower.push(BecknerConstant {
                    p,
                    value: *value,
                    provenance: *provenance,
                });
            }
            _ => {
                let mut c = Constant::new(*value, *provenance);
                c.note = note.clone();
                k.entropic_lower = Some(c);
            }
        }
    }
    k.check()?;
    let used = match s.envelope {
        EnvelopeSpec::Beckner { p } => k.beckner(p),
        _ => k.entropic_lower.as_ref().map(|c| c.value),
    };
    let used = used.ok_or_else(|| {
        Error::Scenario(format!(
            "no constant available for the {:?} envelope; supply one with a provenance",
            s.envelope
        ))
    })?;
    Ok((k, used))
}

fn envelope_for(s: &Scenario, constant: f64, a: f64, b: f64) -> Result<ConcentrationEnvelope> {
    match s.envelope {
        EnvelopeSpec::Entropic => entropic_envelope(constant, a, b),
        EnvelopeSpec::Beckner { p } => beckner_envelope(constant, p, a, b),
        EnvelopeSpec::Covariance => covariance_envelope(constant, a, b),
        EnvelopeSpec::SuperExponential { a, b } => super_exponential_envelope(constant, a, b),
    }
}

fn identity_form(matrix: &[Vec<f64>], d: usize) -> bool {
    matrix.len() == d
        && matrix.iter().enumerate().all(|(i, row)| {
            row.len() == d
                && row
                    .iter()
                    .enumerate()
                    .all(|(j, v)| *v == f64::from(u8::from(i == j)))
        })
}

fn exact_curve(s: &Scenario, env: &ConcentrationEnvelope, grid: &[f64]) -> Result<TailCurve> {
    let n = s.truncation();
    match &s.model {
        Model::BirthDeath { chain } => {
            let mu = stationary_measure(chain, n)?;
            exact_tail_curve(&mu, &s.observable, env, grid)
        }
        Model::Diffusion {
            diffusion: DiffusionModel::Ou { d },
        } => match &s.observable {
            Observable::QuadraticForm { matrix } if identity_form(matrix, *d) => {
                chi_square_tail_curve(*d as u32, env, grid)
            }
            _ => Err(Error::Scenario(
                "exact diffusion tails need f = |x|^2 under OU".into(),
            )),
        },
        Model::Diffusion { .. } => Err(Error::Scenario(
            "exact diffusion tails need f = |x|^2 under OU".into(),
        )),
        Model::Glauber { system } => {
            let table = glauber_enumerate_gibbs(system)?;
            let values = table
                .iter()
                .map(|(eta, p)| Ok((s.observable.eval_config(&eta)?, p)))
                .collect::<Result<Vec<_>>>()?;
            let mean: f64 = values.iter().map(|(v, p)| v * p).sum();
            let points = grid
                .iter()
                .map(|&r| {
                    let value: f64 = values
                        .iter()
                        .filter(|(v, _)| v - mean > r)
                        .map(|(_, p)| p)
                        .sum();
                    TailPoint {
                        r,
                        truth_lo: value,
                        truth_hi: (value + table.deficit).min(1.0),
                        bound: env.bound(r),
                        regime: env.regime(r),
                    }
                })
                .collect();
            TailCurve::new(points, Dominance::Conservative)
        }
    }
}

fn simulated_curve(
    s: &Scenario,
    env: &ConcentrationEnvelope,
    grid: &[f64],
    horizon: Option<f64>,
    samples: Option<usize>,
    opts: &SimOptions,
) -> Result<TailCurve> {
    let need_horizon =
        || horizon.ok_or_else(|| Error::Scenario("simulated truth needs a `horizon`".into()));
    let (values, mean, kind) = match &s.model {
        Model::BirthDeath { chain } => {
            let run = simulate_birth_death(chain, 0, need_horizon()?, s.seed, opts)?;
            let values = run
                .samples
                .iter()
                .map(|x| s.observable.eval_state(*x))
                .collect::<Result<Vec<_>>>()?;
            let mu = stationary_measure(chain, s.truncation())?;
            (values, mu.mean(&s.observable)?, SampleKind::Path)
        }
        Model::Diffusion { diffusion } if is_gaussian(diffusion) => {
            let samples =
                samples.ok_or_else(|| Error::Scenario("OU sampling needs `samples`".into()))?;
            let draws = sample_ou(diffusion.dim(), samples, s.seed)?;
            let values = draws.values(&s.observable)?;
            let mean = match &s.observable {
                Observable::QuadraticForm { matrix } => {
                    (0..matrix.len()).map(|i| matrix[i][i]).sum()
                }
                _ => values.iter().sum::<f64>() / values.len() as f64,
            };
            (values, mean, SampleKind::Iid)
        }
        Model::Diffusion { .. } => {
            return Err(Error::Scenario(
                "only Gaussian diffusions can be sampled".into(),
            ));
        }
        Model::Glauber { system } => {
            let eta0 = vec![0; system.n_sites()];
            let run = simulate_glauber(system, &eta0, need_horizon()?, s.seed, opts)?;
            let values = run
                .samples
                .iter()
                .map(|eta| s.observable.eval_config(eta))
                .collect::<Result<Vec<_>>>()?;
            let mean = match glauber_enumerate_gibbs(system) {
                Ok(table) => {
                    let mut acc = 0.0;
                    for (eta, p) in table.iter() {
                        acc += s.observable.eval_config(&eta)? * p;
                    }
                    acc
                }
                Err(Error::StateSpaceTooLarge { .. }) => {
                    values.iter().sum::<f64>() / values.len() as f64
                }
                Err(e) => return Err(e),
            };
            (values, mean, SampleKind::Path)
        }
    };
    let estimates = grid
        .iter()
        .map(|&r| Ok((r, empirical_tail(&values, mean + r, kind)?)))
        .collect::<Result<Vec<_>>>()?;
    estimated_tail_curve(&estimates, env)
}

fn certification_failure(e: &Error) -> bool {
    matches!(
        e,
        Error::CertificationFailed { .. } | Error::Hypothesis { .. }
    )
}

/// Runs the pipeline up to `stage` without touching the filesystem.
pub fn evaluate(s: &Scenario, stage: Stage) -> Result<Evaluation> {
    let mut report = Report::new(s, stage);
    let grid = s.grid.points();
    let out = |report: Report, tails| {
        Ok(Evaluation {
            report,
            envelope_grid: grid.clone(),
            tails,
        })
    };

    let recipe = match recipe_for(s) {
        Ok(r) => r,
        Err(e) if certification_failure(&e) => {
            report.status = Status::CertificationFailed;
            report.failure = Some(e.to_string());
            return out(report, None);
        }
        Err(e) => return Err(e),
    };
    let floor = if needs_poincare_floor(s) {
        match (&s.model, &s.constant) {
            (Model::BirthDeath { chain }, ConstantSpec::Computed) => Floor::Poincare {
                lambda1: spectral_gap_exact(chain, s.truncation())?.value,
            },
            (_, ConstantSpec::Supplied { value, .. }) => Floor::Poincare { lambda1: *value },
            _ => Floor::None,
        }
    } else {
        Floor::None
    };
    let (a, b) = (recipe.a, recipe.b);
    report.recipe = Some(recipe.clone());
    report.lyapunov_pair = Some((a, b));
    match certify(&s.model, &s.observable, &recipe.v, a, s.truncation(), floor) {
        Ok(cert) => {
            if cert.b > b * (1.0 + 1e-9) + 1e-12 {
                report.status = Status::CertificationFailed;
                report.failure = Some(format!(
                    "residual sup {} at state {} exceeds b = {b}",
                    cert.residual_sup, cert.argmax
                ));
            }
            report.certificate = Some(cert);
        }
        Err(e) if certification_failure(&e) => {
            report.status = Status::CertificationFailed;
            report.failure = Some(e.to_string());
        }
        Err(e) => return Err(e),
    }
    if stage == Stage::Certify || report.status != Status::Pass {
        return out(report, None);
    }

    let (constants, value) = constants_for(s)?;
    report.constants = Some(constants);
    let env = envelope_for(s, value, a, b)?;
    report.envelope = Some(env);
    if stage == Stage::Envelope {
        return out(report, None);
    }

    let curve = match &s.truth {
        TruthSpec::None if stage == Stage::Tails => {
            return Err(Error::Scenario("`tails` needs a `truth` section".into()));
        }
        TruthSpec::None => None,
        TruthSpec::Exact => Some(exact_curve(s, &env, &grid)?),
        TruthSpec::Simulated {
            horizon,
            samples,
            options,
        } => Some(simulated_curve(
            s, &env, &grid, *horizon, *samples, options,
        )?),
    };
    if let Some(curve) = &curve {
        report.dominance = Some(curve.dominance);
        if let Some(p) = curve.first_violation() {
            report.status = Status::DominanceFailed;
            report.first_violation = Some(*p);
        }
    }
    out(report, curve)
}

/// Runs the pipeline and writes its artifacts to `out_dir/<name>/`.
pub fn run_scenario(s: &Scenario, stage: Stage, out_dir: &Path) -> Result<Report> {
    let Evaluation {
        mut report,
        envelope_grid,
        tails,
    } = evaluate(s, stage)?;
    let dir = out_dir.join(&s.name);
    fs::create_dir_all(&dir)?;
    let mut written: Vec<PathBuf> = Vec::new();
    if report.recipe.is_some() {
        let path = dir.join("certificate.json");
        let body = serde_json::json!({
            "recipe": report.recipe,
            "certificate": report.certificate,
            "status": report.status,
            "failure": report.failure,
        });
        fs::write(&path, serde_json::to_string_pretty(&body)? + "\n")?;
        written.push(path);
    }
    if let Some(k) = &report.constants {
        let path = dir.join("constants.json");
        fs::write(&path, serde_json::to_string_pretty(k)? + "\n")?;
        written.push(path);
    }
    if let Some(env) = &report.envelope {
        if stage != Stage::Tails {
            let path = dir.join("envelope.csv");
            write_envelope_csv(&env.evaluate(&envelope_grid), fs::File::create(&path)?)?;
            written.push(path);
        }
    }
    if let Some(curve) = &tails {
        let path = dir.join("tails.csv");
        curve.write_csv(fs::File::create(&path)?)?;
        written.push(path);
    }
    report.artifacts = written
        .iter()
        .filter_map(|p| p.file_name().map(|n| n.to_string_lossy().into_owned()))
        .collect();
    report.artifacts.push("report.json".into());
    fs::write(
        dir.join("report.json"),
        serde_json::to_string_pretty(&report)? + "\n",
    )?;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    const OU: &str = r#"{
        "schema_version": 1,
        "name": "ou",
        "model": "diffusion",
        "diffusion": {"family": "ou", "d": 3},
        "observable": {"quadratic_form": {"matrix": [[1,0,0],[0,1,0],[0,0,1]]}},
        "envelope": {"kind": "entropic"},
        "grid": {"r0": 0, "r1": 12, "steps": 50},
        "truth": {"kind": "exact"}
    }"#;

    #[test]
    fn ou_pipeline_reproduces_constants() {
        let s = Scenario::from_json(OU).unwrap();
        let ev = evaluate(&s, Stage::Scenario).unwrap();
        assert_eq!(ev.report.status, Status::Pass);
        assert_eq!(ev.report.lyapunov_pair, Some((16.0, 24.0)));
        let env = ev.report.envelope.unwrap();
        assert_eq!(env.r_max, Some(8.0));
        assert_eq!(env.gaussian_coeff, 3.0 / 192.0);
        assert_eq!(env.exponential_coeff, 0.125);
        assert_eq!(ev.tails.unwrap().points().len(), 50);
    }

    #[test]
    fn rejects_bad_documents() {
        assert!(matches!(Scenario::from_json("{"), Err(Error::Json(_))));
        let v2 = OU.replace("\"schema_version\": 1", "\"schema_version\": 2");
        assert!(matches!(Scenario::from_json(&v2), Err(Error::Scenario(_))));
        let bad_family = OU.replace("\"ou\", \"d\"", "\"heat\", \"d\"");
        assert!(Scenario::from_json(&bad_family).is_err());
    }

    #[test]
    fn missing_constant_is_reported() {
        let text = OU
            .replace(
                r#"{"family": "ou", "d": 3}"#,
                r#"{"family": "radial_boltzmann", "beta": 2.0, "d": 3}"#,
            )
            .replace(
                r#"{"quadratic_form": {"matrix": [[1,0,0],[0,1,0],[0,0,1]]}}"#,
                r#"{"radial_power": {"beta": 2.0}}"#,
            )
            .replace(
                r#""truth": {"kind": "exact"}"#,
                r#""truth": {"kind": "none"}"#,
            );
        let s = Scenario::from_json(&text).unwrap();
        let r = evaluate(&s, Stage::Envelope);
        assert!(
            matches!(r, Err(Error::Scenario(_))),
            "{:?}",
            r.map(|e| e.report)
        );
        assert_eq!(
            evaluate(&s, Stage::Certify).unwrap().report.status,
            Status::Pass
        );
    }

    #[test]
    fn failing_certificate_stops_the_pipeline() {
        let text = r#"{
            "schema_version": 1,
            "name": "bad",
            "model": "birth_death",
            "chain": {"family": "geometric_n", "p": 0.5, "n": 2},
            "observable": "identity",
            "lyapunov": {"source": "supplied", "a": 1.0, "b": 0.1,
                         "v": {"kind": "exp_scaled_state", "kappa": 1.2}},
            "envelope": {"kind": "beckner", "p": 2.0},
            "grid": {"r0": 0, "r1": 10, "steps": 20},
            "truth": {"kind": "exact"}
        }"#;
        let s = Scenario::from_json(text).unwrap();
        let ev = evaluate(&s, Stage::Scenario).unwrap();
        assert_eq!(ev.report.status, Status::CertificationFailed);
        assert!(ev.report.failure.is_some());
        assert!(ev.tails.is_none());
    }
}
