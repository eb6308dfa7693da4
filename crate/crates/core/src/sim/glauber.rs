//! Birth-death dynamics of unbounded particle counts on a finite box
//! `Lambda` of `Z^d`, reversible for a Gibbs measure with Poisson reference.
//!
//! A particle is created at `x` at rate `lambda(x) e^{-beta sum_y phi(x-y) eta_y}`
//! and each particle at `x` dies at rate 1.

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma_lr;

use super::{replica_rng, EpochRecorder, SimOptions, SimulationRun};
use crate::error::{Error, Result};

/// Largest enumerable configuration space.
pub const ENUMERATION_LIMIT: u128 = 10_000_000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairTerm {
    pub offset: Vec<i64>,
    pub value: f64,
}

/// Even, nonnegative, finite-range pair potential vanishing at the origin,
/// listed by its nonzero offsets.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<PairTerm>", into = "Vec<PairTerm>")]
pub struct PairPotential {
    terms: Vec<PairTerm>,
}

impl TryFrom<Vec<PairTerm>> for PairPotential {
    type Error = Error;

    fn try_from(terms: Vec<PairTerm>) -> Result<Self> {
        Self::new(terms)
    }
}

impl From<PairPotential> for Vec<PairTerm> {
    fn from(p: PairPotential) -> Self {
        p.terms
    }
}

impl PairPotential {
    pub fn new(terms: Vec<PairTerm>) -> Result<Self> {
        let dim = terms.first().map_or(1, |t| t.offset.len());
        for t in &terms {
            if t.offset.len() != dim || dim == 0 {
                return Err(Error::param(
                    "potential",
                    "offsets must share one positive dimension",
                ));
            }
            if t.offset.iter().all(|&c| c == 0) {
                return Err(Error::param(
                    "potential",
                    "phi(0) must vanish; drop the origin",
                ));
            }
            if !(t.value >= 0.0 && t.value.is_finite()) {
                return Err(Error::param(
                    "potential",
                    "values must be finite and nonnegative",
                ));
            }
            let neg: Vec<i64> = t.offset.iter().map(|c| -c).collect();
            if terms.iter().filter(|s| s.offset == t.offset).count() > 1 {
                return Err(Error::param(
                    "potential",
                    format!("offset {:?} listed twice", t.offset),
                ));
            }
            match terms.iter().find(|s| s.offset == neg) {
                Some(s) if s.value == t.value => {}
                _ => {
                    return Err(Error::param(
                        "potential",
                        format!("phi must be even; offset {:?} lacks its mirror", t.offset),
                    ))
                }
            }
        }
        Ok(Self { terms })
    }

    /// `phi(+-e_i) = value` on `Z^dim`.
    pub fn nearest_neighbor(dim: usize, value: f64) -> Result<Self> {
        let mut terms = Vec::with_capacity(2 * dim);
        for i in 0..dim {
            for sign in [-1, 1] {
                let mut offset = vec![0; dim];
                offset[i] = sign;
                terms.push(PairTerm { offset, value });
            }
        }
        Self::new(terms)
    }

    pub fn terms(&self) -> &[PairTerm] {
        &self.terms
    }

    pub fn value(&self, diff: &[i64]) -> f64 {
        self.terms
            .iter()
            .find(|t| t.offset == diff)
            .map_or(0.0, |t| t.value)
    }

    /// Largest sup-norm of an offset in the support.
    pub fn range(&self) -> i64 {
        self.terms
            .iter()
            .flat_map(|t| t.offset.iter().map(|c| c.abs()))
            .max()
            .unwrap_or(0)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct GlauberSpec {
    sites: Vec<Vec<i64>>,
    intensity: Vec<f64>,
    potential: PairPotential,
    beta: f64,
    #[serde(default = "default_cutoff")]
    cutoff: u32,
}

fn default_cutoff() -> u32 {
    15
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GlauberSpec", into = "GlauberSpec")]
pub struct GlauberSystem {
    spec: GlauberSpec,
    /// `(j, phi(x_i - x_j))` for every interacting pair.
    neighbors: Vec<Vec<(usize, f64)>>,
}

impl TryFrom<GlauberSpec> for GlauberSystem {
    type Error = Error;

    fn try_from(spec: GlauberSpec) -> Result<Self> {
        Self::new(
            spec.sites,
            spec.intensity,
            spec.potential,
            spec.beta,
            spec.cutoff,
        )
    }
}

impl From<GlauberSystem> for GlauberSpec {
    fn from(s: GlauberSystem) -> Self {
        s.spec
    }
}

impl GlauberSystem {
    pub fn new(
        sites: Vec<Vec<i64>>,
        intensity: Vec<f64>,
        potential: PairPotential,
        beta: f64,
        cutoff: u32,
    ) -> Result<Self> {
        if sites.is_empty() || sites.len() != intensity.len() {
            return Err(Error::param(
                "sites",
                "need one intensity per site and at least one site",
            ));
        }
        let dim = sites[0].len();
        if sites.iter().any(|s| s.len() != dim) {
            return Err(Error::param("sites", "all sites must share one dimension"));
        }
        if let Some(t) = potential.terms().first() {
            if t.offset.len() != dim {
                return Err(Error::param(
                    "potential",
                    "dimension differs from the lattice",
                ));
            }
        }
        for (i, s) in sites.iter().enumerate() {
            if sites[..i].contains(s) {
                return Err(Error::param("sites", format!("site {s:?} listed twice")));
            }
        }
        if intensity.iter().any(|l| !(*l > 0.0 && l.is_finite())) {
            return Err(Error::param("intensity", "must be positive and finite"));
        }
        if !(beta >= 0.0 && beta.is_finite()) {
            return Err(Error::param("beta", "must be finite and nonnegative"));
        }
        let neighbors = sites
            .iter()
            .map(|x| {
                sites
                    .iter()
                    .enumerate()
                    .filter_map(|(j, y)| {
                        let diff: Vec<i64> = x.iter().zip(y).map(|(a, b)| a - b).collect();
                        let phi = potential.value(&diff);
                        (phi > 0.0).then_some((j, phi))
                    })
                    .collect()
            })
            .collect();
        Ok(Self {
            spec: GlauberSpec {
                sites,
                intensity,
                potential,
                beta,
                cutoff,
            },
            neighbors,
        })
    }

    pub fn sites(&self) -> &[Vec<i64>] {
        &self.spec.sites
    }

    pub fn n_sites(&self) -> usize {
        self.spec.sites.len()
    }

    pub fn intensity(&self) -> &[f64] {
        &self.spec.intensity
    }

    pub fn potential(&self) -> &PairPotential {
        &self.spec.potential
    }

    pub fn beta(&self) -> f64 {
        self.spec.beta
    }

    pub fn cutoff(&self) -> u32 {
        self.spec.cutoff
    }

    pub fn with_cutoff(mut self, cutoff: u32) -> Self {
        self.spec.cutoff = cutoff;
        self
    }

    pub fn intensity_sup(&self) -> f64 {
        self.spec.intensity.iter().copied().fold(0.0, f64::max)
    }

    pub fn intensity_sum(&self) -> f64 {
        self.spec.intensity.iter().sum()
    }

    fn check_config(&self, eta: &[u32]) -> Result<()> {
        if eta.len() == self.n_sites() {
            Ok(())
        } else {
            Err(Error::domain(
                format!("{eta:?}"),
                "configuration on the box",
            ))
        }
    }

    /// `sum_y phi(x_i - y) eta_y`, the energy cost of adding a particle at `x_i`.
    pub fn interaction(&self, eta: &[u32], i: usize) -> f64 {
        self.neighbors[i]
            .iter()
            .map(|&(j, phi)| phi * eta[j] as f64)
            .sum()
    }

    /// `c+(eta, x_i)`.
    pub fn birth_rate(&self, eta: &[u32], i: usize) -> f64 {
        self.spec.intensity[i] * (-self.spec.beta * self.interaction(eta, i)).exp()
    }

    /// `c-(eta, x_i)`.
    pub fn death_rate(&self, eta: &[u32], i: usize) -> f64 {
        eta[i] as f64
    }
}

/// `H(eta) = 1/2 sum_{x,y} phi(x-y) eta_x eta_y`.
pub fn glauber_hamiltonian(system: &GlauberSystem, eta: &[u32]) -> Result<f64> {
    system.check_config(eta)?;
    Ok(0.5
        * (0..system.n_sites())
            .map(|i| eta[i] as f64 * system.interaction(eta, i))
            .sum::<f64>())
}

/// Gibbs law restricted to `{0..K}^Lambda`, indexed lexicographically with
/// the first site most significant.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GibbsTable {
    pub cutoff: u32,
    pub n_sites: usize,
    pub probs: Vec<f64>,
    /// `1 - prod_x P(Poisson(lambda(x)) <= K)`: mass the non-interacting
    /// reference puts outside the box.
    pub deficit: f64,
}

impl GibbsTable {
    pub fn config(&self, mut index: usize) -> Vec<u32> {
        let base = self.cutoff as usize + 1;
        let mut eta = vec![0; self.n_sites];
        for slot in eta.iter_mut().rev() {
            *slot = (index % base) as u32;
            index /= base;
        }
        eta
    }

    pub fn index(&self, eta: &[u32]) -> Option<usize> {
        let base = self.cutoff as usize + 1;
        eta.iter().try_fold(0usize, |acc, &k| {
            (k <= self.cutoff && eta.len() == self.n_sites).then(|| acc * base + k as usize)
        })
    }

    pub fn iter(&self) -> impl Iterator<Item = (Vec<u32>, f64)> + '_ {
        self.probs
            .iter()
            .enumerate()
            .map(|(i, p)| (self.config(i), *p))
    }

    pub fn mean(&self, f: impl Fn(&[u32]) -> f64) -> f64 {
        self.iter().map(|(eta, p)| p * f(&eta)).sum()
    }

    /// `max |c+(eta,x) mu(eta) - c-(eta+delta_x,x) mu(eta+delta_x)|` over
    /// all pairs inside the box.
    pub fn detailed_balance_residual(&self, system: &GlauberSystem) -> f64 {
        let mut worst = 0.0f64;
        for (idx, p) in self.probs.iter().enumerate() {
            let eta = self.config(idx);
            for i in 0..self.n_sites {
                if eta[i] == self.cutoff {
                    continue;
                }
                let mut up = eta.clone();
                up[i] += 1;
                let q = self.probs[self.index(&up).expect("inside the box")];
                let flux_up = system.birth_rate(&eta, i) * p;
                let flux_down = system.death_rate(&up, i) * q;
                worst = worst.max((flux_up - flux_down).abs());
            }
        }
        worst
    }

    /// Total variation distance to a law given by `(configuration, mass)`
    /// pairs; mass outside the box counts in full.
    pub fn tv_distance<'a>(&self, other: impl IntoIterator<Item = (&'a Vec<u32>, f64)>) -> f64 {
        let mut seen = vec![0.0; self.probs.len()];
        let mut outside = 0.0;
        for (eta, w) in other {
            match self.index(eta) {
                Some(i) => seen[i] += w,
                None => outside += w,
            }
        }
        0.5 * (seen
            .iter()
            .zip(&self.probs)
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>()
            + outside)
    }
}

/// Exact Gibbs weights `e^{-beta H(eta)} prod_x e^{-lambda} lambda^eta_x / eta_x!`
/// on `{0..K}^Lambda`, normalized on the box.
pub fn glauber_enumerate_gibbs(system: &GlauberSystem) -> Result<GibbsTable> {
    let k = system.cutoff();
    let n = system.n_sites();
    let size = (k as u128 + 1).checked_pow(n as u32).unwrap_or(u128::MAX);
    if size > ENUMERATION_LIMIT {
        return Err(Error::StateSpaceTooLarge { size });
    }
    let log_fact: Vec<f64> = std::iter::once(0.0)
        .chain((1..=k).scan(0.0, |acc, j| {
            *acc += (j as f64).ln();
            Some(*acc)
        }))
        .collect();
    let log_lambda: Vec<f64> = system.intensity().iter().map(|l| l.ln()).collect();
    let mut table = GibbsTable {
        cutoff: k,
        n_sites: n,
        probs: Vec::with_capacity(size as usize),
        deficit: 0.0,
    };
    for idx in 0..size as usize {
        let eta = table.config(idx);
        let reference: f64 = eta
            .iter()
            .enumerate()
            .map(|(i, &m)| m as f64 * log_lambda[i] - log_fact[m as usize])
            .sum();
        table
            .probs
            .push(reference - system.beta() * glauber_hamiltonian(system, &eta)?);
    }
    let max = table
        .probs
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    table.probs.iter_mut().for_each(|l| *l = (*l - max).exp());
    let total: f64 = table.probs.iter().sum();
    table.probs.iter_mut().for_each(|p| *p /= total);
    let log_inside: f64 = system
        .intensity()
        .iter()
        .map(|&l| (-gamma_lr(k as f64 + 1.0, l)).ln_1p())
        .sum();
    table.deficit = -log_inside.exp_m1();
    Ok(table)
}

/// Binary indexed tree over event rates.
struct Fenwick {
    tree: Vec<f64>,
    values: Vec<f64>,
}

impl Fenwick {
    fn new(values: Vec<f64>) -> Self {
        let mut f = Self {
            tree: vec![0.0; values.len() + 1],
            values,
        };
        f.rebuild();
        f
    }

    fn rebuild(&mut self) {
        self.tree.iter_mut().for_each(|t| *t = 0.0);
        for i in 0..self.values.len() {
            let mut j = i + 1;
            while j < self.tree.len() {
                self.tree[j] += self.values[i];
                j += j & j.wrapping_neg();
            }
        }
    }

    fn set(&mut self, i: usize, value: f64) {
        let delta = value - self.values[i];
        self.values[i] = value;
        let mut j = i + 1;
        while j < self.tree.len() {
            self.tree[j] += delta;
            j += j & j.wrapping_neg();
        }
    }

    fn total(&self) -> f64 {
        let mut j = self.values.len();
        let mut s = 0.0;
        while j > 0 {
            s += self.tree[j];
            j -= j & j.wrapping_neg();
        }
        s
    }

    /// Smallest index whose cumulative rate exceeds `target`.
    fn find(&self, mut target: f64) -> usize {
        let n = self.values.len();
        let mut pos = 0;
        let mut step = n.next_power_of_two();
        while step > 0 {
            if pos + step <= n && self.tree[pos + step] <= target {
                pos += step;
                target -= self.tree[pos];
            }
            step >>= 1;
        }
        // rounding can land on a zero-rate slot or past the end
        let pos = pos.min(n - 1);
        if self.values[pos] > 0.0 {
            return pos;
        }
        (0..pos)
            .rev()
            .chain(pos + 1..n)
            .find(|&i| self.values[i] > 0.0)
            .unwrap_or(pos)
    }
}

/// Events between exact rebuilds of the rate tree and interaction sums.
const REBUILD_EVERY: u64 = 4096;

/// Event-driven simulation over `2|Lambda|` clocks: slot `2i` creates a
/// particle at site `i`, slot `2i+1` removes one.
pub fn simulate_glauber(
    system: &GlauberSystem,
    eta0: &[u32],
    horizon: f64,
    seed: u64,
    opts: &SimOptions,
) -> Result<SimulationRun<Vec<u32>>> {
    system.check_config(eta0)?;
    opts.validate(horizon)?;
    let n = system.n_sites();
    let beta = system.beta();
    let lambda = system.intensity();
    let mut rng = replica_rng(seed, 0);
    let mut eta = eta0.to_vec();
    let mut field: Vec<f64> = (0..n).map(|i| system.interaction(&eta, i)).collect();
    let rates_of = |eta: &[u32], field: &[f64]| -> Vec<f64> {
        (0..n)
            .flat_map(|i| [lambda[i] * (-beta * field[i]).exp(), eta[i] as f64])
            .collect()
    };
    let mut rates = Fenwick::new(rates_of(&eta, &field));
    let mut recorder = EpochRecorder::new(opts.burn_in, opts.sample_interval, horizon);
    let mut occupation: BTreeMap<Vec<u32>, f64> = BTreeMap::new();
    let mut hold = |eta: &Vec<u32>, t0: f64, t1: f64| {
        let (s, e) = (t0.max(opts.burn_in), t1.min(horizon));
        if e > s {
            match occupation.get_mut(eta) {
                Some(w) => *w += e - s,
                None => {
                    occupation.insert(eta.clone(), e - s);
                }
            }
        }
    };
    let (mut t, mut events) = (0.0f64, 0u64);
    let mut stopped_early = false;
    loop {
        let total = rates.total();
        let t_next = t + rng.sample::<f64, _>(Exp1) / total;
        if t_next > horizon {
            hold(&eta, t, horizon);
            recorder.finish(&eta, horizon);
            break;
        }
        hold(&eta, t, t_next);
        recorder.hold(&eta, t_next);
        let slot = rates.find(rng.random::<f64>() * total);
        let site = slot / 2;
        let up = slot.is_multiple_of(2);
        if up {
            eta[site] += 1;
        } else {
            eta[site] -= 1;
        }
        let sign = if up { 1.0 } else { -1.0 };
        rates.set(2 * site + 1, eta[site] as f64);
        for &(j, phi) in &system.neighbors[site] {
            field[j] += sign * phi;
            rates.set(2 * j, lambda[j] * (-beta * field[j]).exp());
        }
        t = t_next;
        events += 1;
        if events % REBUILD_EVERY == 0 {
            field = (0..n).map(|i| system.interaction(&eta, i)).collect();
            rates = Fenwick::new(rates_of(&eta, &field));
        }
        if events > opts.event_cap {
            return Err(Error::EventCapExceeded { events, time: t });
        }
        if opts.event_budget.is_some_and(|b| events >= b) {
            recorder.finish(&eta, t);
            stopped_early = true;
            break;
        }
    }
    Ok(SimulationRun {
        seed,
        event_count: events,
        horizon: if stopped_early { t } else { horizon },
        samples: recorder.samples,
        occupation: occupation.into_iter().collect(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dobrushin {
    pub epsilon: f64,
    /// `1 - sup(lambda) epsilon`, present only when it is positive.
    pub rho0_lower: Option<f64>,
}

/// `epsilon(beta) = sum_x (1 - e^{-beta phi(x)})` and the entropic constant
/// it yields when `sup(lambda) epsilon < 1`.
pub fn dobrushin_epsilon(
    potential: &PairPotential,
    beta: f64,
    intensity_sup: f64,
) -> Result<Dobrushin> {
    if !(beta >= 0.0 && beta.is_finite()) {
        return Err(Error::param("beta", "must be finite and nonnegative"));
    }
    if !(intensity_sup >= 0.0 && intensity_sup.is_finite()) {
        return Err(Error::param(
            "intensity_sup",
            "must be finite and nonnegative",
        ));
    }
    let epsilon = potential
        .terms()
        .iter()
        .fold(0.0, |acc, t| acc + (1.0 - (-beta * t.value).exp()));
    let product = intensity_sup * epsilon;
    Ok(Dobrushin {
        epsilon,
        rho0_lower: (product < 1.0).then_some(1.0 - product),
    })
}
