//! Exact fiber enumeration and conditional distributions on a fiber.
//!
//! This is the desk-scale ground truth for the samplers: the fiber of a
//! margin spec is materialized by cell-by-cell backtracking, and the two
//! conditional laws of interest — uniform (geometric cells) and
//! hypergeometric (Poisson or multinomial cells) — are computed exactly over
//! it. Brute-force conditional oracles for both sampling schemes are provided
//! so the closed-form weights can be checked against direct normalization.

use serde::{Deserialize, Serialize};

use crate::moves::{apply_move, MoveSet};
use crate::tensor::{multi_index, MarginSpec, RealTable, Table};
use crate::{Error, Result};

/// Default cap on enumerated fiber size; callers wanting more should sample.
pub const DEFAULT_FIBER_BUDGET: usize = 5_000_000;

/// An enumerated fiber: every table with the spec's margins, in lexicographic
/// order of the flat data.
#[derive(Debug, Clone)]
pub struct Fiber {
    spec: MarginSpec,
    tables: Vec<Table>,
}

impl Fiber {
    pub fn spec(&self) -> &MarginSpec {
        &self.spec
    }

    pub fn tables(&self) -> &[Table] {
        &self.tables
    }

    pub fn len(&self) -> usize {
        self.tables.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tables.is_empty()
    }

    /// Position of a table in the canonical order.
    pub fn index_of(&self, table: &Table) -> Option<usize> {
        if table.dims() != self.spec.dims().as_slice() {
            return None;
        }
        self.tables
            .binary_search_by(|t| t.data().cmp(table.data()))
            .ok()
    }
}

/// Which conditional law a weight vector represents.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WeightKind {
    Uniform,
    Hypergeometric,
}

/// A probability vector aligned with a fiber's table order.
#[derive(Debug, Clone, Serialize)]
pub struct FiberDistribution {
    pub kind: WeightKind,
    pub weights: Vec<f64>,
}

/// Enumerates the fiber of `spec` by backtracking in row-major cell order.
///
/// Each cell value is bracketed by `[max(0, slice remainder - capacity of the
/// slice's later cells), min(remaining axis budgets)]`, where the capacity of
/// a later cell is bounded by the smaller of its other-axis remainders.
/// Returns `BudgetExceeded` once more than `budget` tables are found.
pub fn enumerate_fiber(spec: &MarginSpec, budget: usize) -> Result<Fiber> {
    spec.validate()?;
    let dims = spec.dims();
    let cells: usize = dims.iter().product();
    let indices: Vec<Vec<usize>> = (0..cells).map(|f| multi_index(&dims, f)).collect();
    // successors[axis][flat] = cells after `flat` in the same axis slice
    let successors: Vec<Vec<Vec<usize>>> = (0..dims.len())
        .map(|axis| {
            (0..cells)
                .map(|flat| {
                    (flat + 1..cells)
                        .filter(|&g| indices[g][axis] == indices[flat][axis])
                        .collect()
                })
                .collect()
        })
        .collect();

    let mut state = Enumerator {
        dims: &dims,
        indices: &indices,
        successors: &successors,
        rem: spec.axis_sums().to_vec(),
        data: vec![0i64; cells],
        out: Vec::new(),
        budget,
    };
    state.fill(0)?;
    debug_assert!(state.out.windows(2).all(|w| w[0].data() <= w[1].data()));
    Ok(Fiber {
        spec: spec.clone(),
        tables: state.out,
    })
}

struct Enumerator<'a> {
    dims: &'a [usize],
    indices: &'a [Vec<usize>],
    successors: &'a [Vec<Vec<usize>>],
    rem: Vec<Vec<i64>>,
    data: Vec<i64>,
    out: Vec<Table>,
    budget: usize,
}

impl Enumerator<'_> {
    fn fill(&mut self, flat: usize) -> Result<()> {
        if flat == self.data.len() {
            debug_assert!(self.rem.iter().all(|r| r.iter().all(|&v| v == 0)));
            if self.out.len() >= self.budget {
                return Err(Error::BudgetExceeded {
                    budget: self.budget,
                });
            }
            self.out.push(Table::from_parts_unchecked(
                self.dims.to_vec(),
                self.data.clone(),
            ));
            return Ok(());
        }
        let idx = &self.indices[flat];
        let rank = self.dims.len();
        let mut hi = i64::MAX;
        let mut lo = 0i64;
        for (a, &i) in idx.iter().enumerate() {
            let slice_rem = self.rem[a][i];
            hi = hi.min(slice_rem);
            let mut capacity = 0i64;
            for &g in &self.successors[a][flat] {
                let other = (0..rank)
                    .filter(|&b| b != a)
                    .map(|b| self.rem[b][self.indices[g][b]])
                    .min()
                    .unwrap();
                capacity += other;
                if capacity >= slice_rem {
                    break;
                }
            }
            lo = lo.max(slice_rem - capacity);
        }
        for v in lo..=hi {
            for (rem_a, &i) in self.rem.iter_mut().zip(idx) {
                rem_a[i] -= v;
            }
            self.data[flat] = v;
            let r = self.fill(flat + 1);
            for (rem_a, &i) in self.rem.iter_mut().zip(idx) {
                rem_a[i] += v;
            }
            self.data[flat] = 0;
            r?;
        }
        Ok(())
    }
}

/// log k! accumulated as a table up to `max`.
pub(crate) fn ln_factorial_table(max: i64) -> Vec<f64> {
    let mut lf = Vec::with_capacity(max as usize + 1);
    lf.push(0.0);
    for k in 1..=max {
        lf.push(lf[k as usize - 1] + (k as f64).ln());
    }
    lf
}

fn normalize_log_weights(kind: WeightKind, log_w: Vec<f64>) -> FiberDistribution {
    let max = log_w.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut weights: Vec<f64> = log_w.iter().map(|lw| (lw - max).exp()).collect();
    let total: f64 = weights.iter().sum();
    for w in &mut weights {
        *w /= total;
    }
    FiberDistribution { kind, weights }
}

/// The exact conditional law on an enumerated fiber.
///
/// Uniform puts `1/|F|` on every table; hypergeometric weights each table
/// proportionally to `1 / prod(y_cell!)`, computed in log space.
pub fn fiber_weights(fiber: &Fiber, kind: WeightKind) -> Result<FiberDistribution> {
    if fiber.is_empty() {
        return Err(Error::EmptyFiber);
    }
    match kind {
        WeightKind::Uniform => {
            let w = 1.0 / fiber.len() as f64;
            Ok(FiberDistribution {
                kind,
                weights: vec![w; fiber.len()],
            })
        }
        WeightKind::Hypergeometric => {
            let lf = ln_factorial_table(fiber.spec().total());
            let log_w = fiber
                .tables()
                .iter()
                .map(|t| -t.data().iter().map(|&y| lf[y as usize]).sum::<f64>())
                .collect();
            Ok(normalize_log_weights(kind, log_w))
        }
    }
}

/// Conditional law of i.i.d. Poisson(rate) cells given the margins, computed
/// by direct normalization of the joint mass over the fiber. Independent of
/// the rate, and equal to the hypergeometric weights.
pub fn conditional_poisson_oracle(fiber: &Fiber, rate: f64) -> Result<Vec<f64>> {
    if fiber.is_empty() {
        return Err(Error::EmptyFiber);
    }
    if !rate.is_finite() || rate <= 0.0 {
        return Err(Error::InvalidParameter("Poisson rate must be positive"));
    }
    let lf = ln_factorial_table(fiber.spec().total());
    let ln_rate = rate.ln();
    let log_w: Vec<f64> = fiber
        .tables()
        .iter()
        .map(|t| {
            t.data()
                .iter()
                .map(|&y| -rate + y as f64 * ln_rate - lf[y as usize])
                .sum()
        })
        .collect();
    Ok(normalize_log_weights(WeightKind::Hypergeometric, log_w).weights)
}

/// Conditional law of independent geometric cells with tilting field `theta`
/// (cell mass `exp(-k theta) (1 - exp(-theta))`), given the margins. Computed
/// by direct normalization; uniform whenever `theta` decomposes additively
/// across axes.
pub fn conditional_geometric_oracle(fiber: &Fiber, theta: &RealTable) -> Result<Vec<f64>> {
    if fiber.is_empty() {
        return Err(Error::EmptyFiber);
    }
    if theta.dims() != fiber.spec().dims().as_slice() {
        return Err(Error::MoveShapeMismatch);
    }
    if let Some(&bad) = theta.data().iter().find(|&&t| t <= 0.0) {
        return Err(Error::NonPositiveTheta(bad));
    }
    let ln_norm: f64 = theta
        .data()
        .iter()
        .map(|&t| (-(-t).exp_m1()).ln()) // ln(1 - e^{-theta})
        .sum();
    let log_w: Vec<f64> = fiber
        .tables()
        .iter()
        .map(|t| {
            ln_norm
                - t.data()
                    .iter()
                    .zip(theta.data())
                    .map(|(&y, &th)| y as f64 * th)
                    .sum::<f64>()
        })
        .collect();
    Ok(normalize_log_weights(WeightKind::Uniform, log_w).weights)
}

/// Result of a fiber-graph connectivity check.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Connectivity {
    pub connected: bool,
    pub components: usize,
}

/// Builds the graph whose vertices are the fiber's tables and whose edges are
/// feasible applications of `moves` (either sign), and counts components.
pub fn connectivity_check(fiber: &Fiber, moves: &MoveSet) -> Result<Connectivity> {
    if fiber.is_empty() {
        return Err(Error::EmptyFiber);
    }
    let moves = moves.moves()?;
    let mut component = vec![usize::MAX; fiber.len()];
    let mut components = 0;
    for start in 0..fiber.len() {
        if component[start] != usize::MAX {
            continue;
        }
        let mut stack = vec![start];
        component[start] = components;
        while let Some(cur) = stack.pop() {
            for mv in moves {
                for sign in [1i8, -1] {
                    if let Ok(next) = apply_move(&fiber.tables()[cur], mv, sign) {
                        let j = fiber
                            .index_of(&next)
                            .expect("moves preserve margins, so the image is in the fiber");
                        if component[j] == usize::MAX {
                            component[j] = components;
                            stack.push(j);
                        }
                    }
                }
            }
        }
        components += 1;
    }
    Ok(Connectivity {
        connected: components == 1,
        components,
    })
}
