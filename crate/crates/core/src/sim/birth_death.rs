use rand::Rng;
use rand_distr::Exp1;

use super::{replica_rng, EpochRecorder, SimOptions, SimulationRun};
use crate::chain::BirthDeathChain;
use crate::error::{Error, Result};

/// Event-driven path of a birth-death chain on `[0, horizon]`.
///
/// Holding times are exponential with rate `birth + death`; the jump goes
/// up with probability `birth / (birth + death)`.
pub fn simulate_birth_death(
    chain: &BirthDeathChain,
    x0: usize,
    horizon: f64,
    seed: u64,
    opts: &SimOptions,
) -> Result<SimulationRun<usize>> {
    opts.validate(horizon)?;
    let mut rng = replica_rng(seed, 0);
    let mut recorder = EpochRecorder::new(opts.burn_in, opts.sample_interval, horizon);
    let mut occupation: Vec<f64> = Vec::new();
    let hold = |x: usize, t0: f64, t1: f64, occupation: &mut Vec<f64>| {
        let (s, e) = (t0.max(opts.burn_in), t1.min(horizon));
        if e > s {
            if occupation.len() <= x {
                occupation.resize(x + 1, 0.0);
            }
            occupation[x] += e - s;
        }
    };
    let (mut t, mut x, mut events) = (0.0f64, x0, 0u64);
    loop {
        let (lam, nu) = (chain.birth(x)?, chain.death(x)?);
        let total = lam + nu;
        let t_next = if total > 0.0 {
            t + rng.sample::<f64, _>(Exp1) / total
        } else {
            f64::INFINITY
        };
        if t_next > horizon {
            hold(x, t, horizon, &mut occupation);
            recorder.finish(&x, horizon);
            break;
        }
        hold(x, t, t_next, &mut occupation);
        recorder.hold(&x, t_next);
        x = if rng.random::<f64>() * total < lam {
            x + 1
        } else {
            x - 1
        };
        t = t_next;
        events += 1;
        if events > opts.event_cap {
            return Err(Error::EventCapExceeded { events, time: t });
        }
        if opts.event_budget.is_some_and(|budget| events >= budget) {
            recorder.finish(&x, t);
            break;
        }
    }
    Ok(SimulationRun {
        seed,
        event_count: events,
        horizon: if opts.event_budget.is_some_and(|b| events >= b) {
            t
        } else {
            horizon
        },
        samples: recorder.samples,
        occupation: occupation
            .into_iter()
            .enumerate()
            .filter(|(_, w)| *w > 0.0)
            .collect(),
    })
}
