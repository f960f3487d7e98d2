//! Adaptive random-walk Metropolis-within-Gibbs.
//!
//! Coordinates live on unconstrained scales chosen by the model. Each
//! coordinate carries its own Gaussian step size, tuned during burn-in toward
//! a 0.35 acceptance rate and frozen afterwards. Coordinates are grouped into
//! blocks that each own a random stream, so a block whose full conditional
//! does not involve another block's data evolves identically with or without
//! that data.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::draws::PosteriorDraws;
use super::McmcConfig;
use crate::error::{Error, Result};
use crate::rng::split;

const TARGET_ACCEPTANCE: f64 = 0.35;
const ADAPT_BATCH: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Support {
    /// The whole real line.
    Real,
    /// The open unit interval; proposals are reflected at 0 and 1.
    Unit,
}

pub trait Target {
    /// Number of random-walk coordinates. The state may carry further
    /// entries that only [`gibbs_step`](Self::gibbs_step) touches.
    fn dim(&self) -> usize;

    /// Log full conditional of coordinate `i`, up to an additive constant.
    fn ln_conditional(&self, state: &[f64], i: usize) -> f64;

    fn support(&self, _i: usize) -> Support {
        Support::Real
    }

    fn initial_step(&self, _i: usize) -> f64 {
        0.5
    }

    /// Number of random streams; coordinate `i` draws from `block_of(i)`.
    fn blocks(&self) -> usize {
        1
    }

    fn block_of(&self, _i: usize) -> usize {
        0
    }

    /// Starting state; each block seeds its own coordinates from its stream.
    fn initial(&self, rngs: &mut [ChaCha8Rng]) -> Vec<f64>;

    /// Exact Gibbs updates run once per sweep after the random-walk moves.
    fn gibbs_step(&self, _state: &mut [f64], _rngs: &mut [ChaCha8Rng]) {}

    fn names(&self) -> Vec<String>;

    /// Maps the internal state onto the reported parameter vector.
    fn output(&self, state: &[f64], out: &mut Vec<f64>);
}

fn reflect_unit(mut v: f64) -> f64 {
    // fold into (0,1); the mirror map keeps the proposal symmetric
    loop {
        if v < 0.0 {
            v = -v;
        } else if v > 1.0 {
            v = 2.0 - v;
        } else {
            return v;
        }
    }
}

struct Chain {
    rngs: Vec<ChaCha8Rng>,
    state: Vec<f64>,
    log_step: Vec<f64>,
    batch_accepts: Vec<u32>,
    kept_accepts: Vec<u64>,
}

pub fn run<T: Target>(target: &T, cfg: &McmcConfig, seed: u64) -> Result<PosteriorDraws> {
    cfg.validate()?;
    let dim = target.dim();
    let names = target.names();
    let n_out = names.len();
    let total_kept = cfg.chains * cfg.kept_per_chain;
    let mut columns: Vec<Vec<f64>> = (0..n_out).map(|_| Vec::with_capacity(total_kept)).collect();
    let mut acceptance = vec![0.0; dim];
    let mut out = Vec::with_capacity(n_out);

    for chain_idx in 0..cfg.chains {
        let chain_seed = split(seed, chain_idx as u64);
        let mut rngs: Vec<ChaCha8Rng> = (0..target.blocks())
            .map(|b| ChaCha8Rng::seed_from_u64(split(chain_seed, b as u64)))
            .collect();
        let state = target.initial(&mut rngs);
        if state.len() < dim {
            return Err(Error::Precondition(format!(
                "initial state has {} coordinates, expected at least {dim}",
                state.len()
            )));
        }
        let mut chain = Chain {
            rngs,
            state,
            log_step: (0..dim).map(|i| target.initial_step(i).ln()).collect(),
            batch_accepts: vec![0; dim],
            kept_accepts: vec![0; dim],
        };

        let iterations = cfg.burn_in + cfg.kept_per_chain * cfg.thin;
        let mut batch_index = 0usize;
        for it in 0..iterations {
            let burning = it < cfg.burn_in;
            sweep(target, &mut chain, burning);

            if burning && (it + 1) % ADAPT_BATCH == 0 {
                batch_index += 1;
                let delta = (1.0 / (batch_index as f64).sqrt()).min(0.1);
                for i in 0..dim {
                    let rate = chain.batch_accepts[i] as f64 / ADAPT_BATCH as f64;
                    if rate > TARGET_ACCEPTANCE {
                        chain.log_step[i] += delta;
                    } else {
                        chain.log_step[i] -= delta;
                    }
                    chain.batch_accepts[i] = 0;
                }
            }
            if burning {
                continue;
            }
            if (it - cfg.burn_in + 1).is_multiple_of(cfg.thin) {
                out.clear();
                target.output(&chain.state, &mut out);
                for (col, v) in columns.iter_mut().zip(&out) {
                    col.push(*v);
                }
            }
        }
        let post = (iterations - cfg.burn_in) as f64;
        for (acc, k) in acceptance.iter_mut().zip(&chain.kept_accepts) {
            *acc += *k as f64 / post / cfg.chains as f64;
        }
    }

    Ok(PosteriorDraws::new(
        names,
        columns,
        cfg.chains,
        cfg.kept_per_chain,
        acceptance,
    ))
}

fn sweep<T: Target>(target: &T, chain: &mut Chain, burning: bool) {
    for i in 0..target.dim() {
        let rng = &mut chain.rngs[target.block_of(i)];
        let current = chain.state[i];
        let step = chain.log_step[i].exp();
        let z: f64 = rng.sample(StandardNormal);
        let proposal = match target.support(i) {
            Support::Real => current + step * z,
            Support::Unit => reflect_unit(current + step * z),
        };
        let u: f64 = rng.random();
        let lp_current = target.ln_conditional(&chain.state, i);
        chain.state[i] = proposal;
        let lp_proposal = target.ln_conditional(&chain.state, i);
        let accept = lp_proposal.is_finite() && u.ln() < lp_proposal - lp_current;
        if accept {
            if burning {
                chain.batch_accepts[i] += 1;
            } else {
                chain.kept_accepts[i] += 1;
            }
        } else {
            chain.state[i] = current;
        }
    }
    target.gibbs_step(&mut chain.state, &mut chain.rngs);
}
