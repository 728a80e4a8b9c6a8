//! Metropolis–Hastings walks on a fiber using Markov basis moves.
//!
//! The proposal draws a (move, sign) pair uniformly, which is symmetric, so
//! the acceptance ratio is `min(1, pi(y')/pi(y))`: identically 1 for the
//! uniform target, and a factorial ratio over the at most four changed cells
//! for the hypergeometric target. Proposals that would drive a cell negative
//! count as rejections (the chain stays put), which keeps the kernel
//! reversible. Chains are driven entirely by [`SplitMix64`], so a seed pins
//! the full trace.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::fiber::{fiber_weights, Fiber, WeightKind};
use crate::moves::MoveSet;
use crate::rng::SplitMix64;
use crate::tensor::Table;
use crate::{Error, Result};

/// Configuration of a single chain.
#[derive(Debug, Clone, Serialize)]
pub struct ChainConfig {
    pub start: Table,
    pub target: WeightKind,
    pub steps: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub seed: u64,
    /// Keep full tables for every retained sample; visit counts and the
    /// corner trace are recorded either way.
    pub keep_samples: bool,
}

impl ChainConfig {
    pub fn new(start: Table, target: WeightKind, steps: usize, seed: u64) -> Self {
        ChainConfig {
            start,
            target,
            steps,
            burn_in: 0,
            thin: 1,
            seed,
            keep_samples: false,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.steps <= self.burn_in {
            return Err(Error::InvalidConfig("steps must exceed burn_in"));
        }
        if self.thin == 0 {
            return Err(Error::InvalidConfig("thin stride must be at least 1"));
        }
        Ok(())
    }
}

/// Chain output: retained samples (optional), acceptance rate, corner trace,
/// and visit counts keyed by flat table data in lexicographic order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChainStats {
    pub target: WeightKind,
    pub steps: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub seed: u64,
    pub kept: usize,
    pub accepted: u64,
    pub acceptance_rate: f64,
    /// Value of the `(0,0,..)` cell at every retained sample.
    pub corner_trace: Vec<i64>,
    pub visit_counts: Vec<(Vec<i64>, u64)>,
    pub samples: Vec<Table>,
}

#[inline]
fn step_in_place(
    data: &mut [i64],
    moves: &MoveSet,
    target: WeightKind,
    rng: &mut SplitMix64,
) -> bool {
    let mv = moves.draw(rng);
    let sign = rng.sign();
    let mut log_ratio = 0.0;
    for &(flat, s) in mv.cells() {
        let delta = sign * i64::from(s);
        let y = data[flat];
        if y + delta < 0 {
            return false;
        }
        if target == WeightKind::Hypergeometric {
            // pi ∝ 1/prod(y!); each cell moves by exactly +-1
            log_ratio += if delta == 1 {
                -((y + 1) as f64).ln()
            } else {
                (y as f64).ln()
            };
        }
    }
    let accept = match target {
        WeightKind::Uniform => true,
        WeightKind::Hypergeometric => log_ratio >= 0.0 || rng.next_f64().ln() < log_ratio,
    };
    if accept {
        for &(flat, s) in mv.cells() {
            data[flat] += sign * i64::from(s);
        }
    }
    accept
}

/// One Metropolis–Hastings step from `state`; returns the next state and
/// whether the proposal was accepted.
pub fn mh_step(
    state: &Table,
    moves: &MoveSet,
    target: WeightKind,
    rng: &mut SplitMix64,
) -> Result<(Table, bool)> {
    if moves.dims() != state.dims() {
        return Err(Error::MoveShapeMismatch);
    }
    let mut data = state.data().to_vec();
    let accepted = step_in_place(&mut data, moves, target, rng);
    Ok((
        Table::from_parts_unchecked(state.dims().to_vec(), data),
        accepted,
    ))
}

/// Runs a chain; deterministic given the seed. Every retained sample carries
/// the start table's margins (spot-asserted every 1000 steps).
pub fn run_chain(config: &ChainConfig, moves: &MoveSet) -> Result<ChainStats> {
    config.validate()?;
    if moves.dims() != config.start.dims() {
        return Err(Error::MoveShapeMismatch);
    }
    let dims = config.start.dims().to_vec();
    let start_margins = config.start.all_margins();
    let mut rng = SplitMix64::new(config.seed);
    let mut data = config.start.data().to_vec();
    let mut accepted = 0u64;
    let mut kept = 0usize;
    let mut corner_trace = Vec::new();
    let mut samples = Vec::new();
    let mut counts: BTreeMap<Vec<i64>, u64> = BTreeMap::new();

    for step in 1..=config.steps {
        if step_in_place(&mut data, moves, config.target, &mut rng) {
            accepted += 1;
        }
        if step.is_multiple_of(1000) {
            let t = Table::from_parts_unchecked(dims.clone(), data.clone());
            assert_eq!(
                t.all_margins(),
                start_margins,
                "margin conservation violated at step {step}"
            );
        }
        if step > config.burn_in && (step - config.burn_in).is_multiple_of(config.thin) {
            kept += 1;
            corner_trace.push(data[0]);
            *counts.entry(data.clone()).or_insert(0) += 1;
            if config.keep_samples {
                samples.push(Table::from_parts_unchecked(dims.clone(), data.clone()));
            }
        }
    }

    Ok(ChainStats {
        target: config.target,
        steps: config.steps,
        burn_in: config.burn_in,
        thin: config.thin,
        seed: config.seed,
        kept,
        accepted,
        acceptance_rate: accepted as f64 / config.steps as f64,
        corner_trace,
        visit_counts: counts.into_iter().collect(),
        samples,
    })
}

/// Empirical distribution of a chain over an enumerated fiber, aligned with
/// the fiber's canonical table order.
pub fn empirical_distribution(stats: &ChainStats, fiber: &Fiber) -> Result<Vec<f64>> {
    let mut freq = vec![0.0; fiber.len()];
    for (data, count) in &stats.visit_counts {
        let table = Table::new(fiber.spec().dims(), data.clone())?;
        let idx = fiber.index_of(&table).ok_or(Error::TableOutsideFiber)?;
        freq[idx] = *count as f64 / stats.kept as f64;
    }
    Ok(freq)
}

/// Total variation distance `(1/2) sum |p - q|` between aligned vectors.
pub fn tv_distance(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::LengthMismatch {
            left: p.len(),
            right: q.len(),
        });
    }
    Ok(0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>())
}

/// Exact total variation between the uniform and hypergeometric laws on an
/// enumerated fiber — the desk-scale contrast between the two sampling
/// schemes.
pub fn divergence_uniform_vs_hypergeometric(fiber: &Fiber) -> Result<f64> {
    let uniform = fiber_weights(fiber, WeightKind::Uniform)?;
    let hyper = fiber_weights(fiber, WeightKind::Hypergeometric)?;
    tv_distance(&uniform.weights, &hyper.weights)
}

/// Full transition matrix of the chain kernel on an enumerated fiber,
/// for detailed-balance and exactness checks on small fibers.
pub fn transition_matrix(
    fiber: &Fiber,
    moves: &MoveSet,
    target: WeightKind,
) -> Result<Vec<Vec<f64>>> {
    let weights = fiber_weights(fiber, target)?.weights;
    let move_list = moves.moves()?;
    let proposals = (move_list.len() * 2) as f64;
    let mut matrix = vec![vec![0.0; fiber.len()]; fiber.len()];
    for (i, table) in fiber.tables().iter().enumerate() {
        for mv in move_list {
            for sign in [1i8, -1] {
                match crate::moves::apply_move(table, mv, sign) {
                    Ok(next) => {
                        let j = fiber
                            .index_of(&next)
                            .expect("moves preserve margins");
                        let alpha = (weights[j] / weights[i]).min(1.0);
                        matrix[i][j] += alpha / proposals;
                        matrix[i][i] += (1.0 - alpha) / proposals;
                    }
                    Err(_) => {
                        matrix[i][i] += 1.0 / proposals;
                    }
                }
            }
        }
    }
    Ok(matrix)
}
