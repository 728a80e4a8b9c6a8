//! Markov basis moves for the plane-sum independence model.
//!
//! Every move has exactly two +1 cells and two -1 cells and zero plane sums
//! along every axis, so adding a move to a table never changes the margins.
//!
//! For 2-way tables the basis is the classical set of 2x2 swaps: one move per
//! unordered pair of rows and pair of columns. For 3-way tables,
//! [`plane_moves_3way`] generates the family whose +1 cells `(i1,j1,k1)` and
//! `(i2,j2,k2)` differ in every coordinate, with -1 at one of the three index
//! pairs that balance all three plane sums:
//!
//! ```text
//!   {(i1,j1,k2), (i2,j2,k1)}   {(i1,j2,k1), (i2,j1,k2)}   {(i1,j2,k2), (i2,j1,k1)}
//! ```
//!
//! Enumerating over `i1 < i2` and ordered `j1 != j2`, `k1 != k2` produces each
//! move exactly once (swapping the two +1 cells is absorbed by the `i1 < i2`
//! normalization), for a total of `(3/2) n1 n2 n3 (n1-1)(n2-1)(n3-1)` moves.
//! This family is closed under negation; the 2-way set is not, and the
//! sampler's uniform sign flip restores +- symmetry either way.
//!
//! The distinct-index family alone does not connect every fiber: both of its
//! signed cell pairs differ in all three coordinates, so a table whose
//! support contains no such pair (the 2x2x2 parity tables, for instance) has
//! no feasible move at all. The full degree-2 basis — equivalently the 2x2
//! minors of the three flattenings — also contains, for each pair of axes,
//! the swaps acting inside one slice of the remaining axis:
//!
//! ```text
//!   +1 (i,j1,k1)  +1 (i,j2,k2)  -1 (i,j1,k2)  -1 (i,j2,k1)     (and cyclically)
//! ```
//!
//! [`markov_basis_3way`] generates the union; samplers and connectivity
//! checks should use it (see [`MoveSet::for_dims`]).

use std::fmt::Write as _;

use crate::rng::SplitMix64;
use crate::tensor::{flat_index, multi_index, Table};
use crate::{Error, Result};

/// Move sets above this many nonzero entries (4 per move) are generated on
/// demand instead of being stored.
pub const DEFAULT_MOVE_ENTRY_BUDGET: usize = 10_000_000;

/// A sparse signed table with two +1 and two -1 cells and zero plane sums.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Move {
    dims: [usize; 3],
    rank: usize,
    /// (flat row-major index, sign), sorted by flat index.
    cells: [(usize, i8); 4],
}

impl Move {
    fn new(dims: &[usize], mut cells: [(usize, i8); 4]) -> Self {
        cells.sort_unstable();
        let mut d = [1usize; 3];
        d[..dims.len()].copy_from_slice(dims);
        Move {
            dims: d,
            rank: dims.len(),
            cells,
        }
    }

    pub fn dims(&self) -> Vec<usize> {
        self.dims[..self.rank].to_vec()
    }

    pub fn dims_match(&self, dims: &[usize]) -> bool {
        self.rank == dims.len() && &self.dims[..self.rank] == dims
    }

    /// Nonzero cells as (flat index, sign) pairs.
    pub fn cells(&self) -> &[(usize, i8); 4] {
        &self.cells
    }

    /// Nonzero cells as (multi-index, sign) pairs.
    pub fn entries(&self) -> Vec<(Vec<usize>, i8)> {
        let dims = self.dims();
        self.cells
            .iter()
            .map(|&(flat, s)| (multi_index(&dims, flat), s))
            .collect()
    }

    pub fn negated(&self) -> Move {
        let mut cells = self.cells;
        for c in &mut cells {
            c.1 = -c.1;
        }
        Move::new(&self.dims(), cells)
    }

    /// True when every plane sum of the move is zero.
    pub fn has_zero_margins(&self) -> bool {
        let dims = self.dims();
        for axis in 0..self.rank {
            let mut sums = vec![0i64; dims[axis]];
            for (idx, s) in self.entries() {
                sums[idx[axis]] += i64::from(s);
            }
            if sums.iter().any(|&v| v != 0) {
                return false;
            }
        }
        true
    }

    /// Sparse text form, e.g. `(0,1,1):+1;(0,2,2):+1;(0,1,2):-1;(0,2,1):-1`.
    /// Indices are 0-based.
    pub fn sparse_text(&self) -> String {
        let mut out = String::new();
        for (pos, (idx, s)) in self.entries().into_iter().enumerate() {
            if pos > 0 {
                out.push(';');
            }
            out.push('(');
            for (a, i) in idx.iter().enumerate() {
                if a > 0 {
                    out.push(',');
                }
                let _ = write!(out, "{i}");
            }
            let _ = write!(out, "):{}", if s > 0 { "+1" } else { "-1" });
        }
        out
    }
}

/// Number of 2-way basis moves: one per pair of rows and pair of columns.
pub fn move_count_2way(rows: usize, cols: usize) -> u64 {
    let r = rows as u128;
    let c = cols as u128;
    (r * (r - 1) / 2 * (c * (c - 1) / 2)) as u64
}

/// Number of distinct-index 3-way moves: `(3/2) n1 n2 n3 (n1-1)(n2-1)(n3-1)`.
pub fn move_count_3way(n1: usize, n2: usize, n3: usize) -> u64 {
    let (a, b, c) = (n1 as u128, n2 as u128, n3 as u128);
    (3 * a * (a - 1) * b * (b - 1) * c * (c - 1) / 2) as u64
}

fn pairs(n: usize) -> u64 {
    (n as u128 * (n as u128 - 1) / 2) as u64
}

/// Per-axis counts of the shared-index slice swaps.
fn slice_swap_counts(n1: usize, n2: usize, n3: usize) -> [u64; 3] {
    [
        n1 as u64 * pairs(n2) * pairs(n3),
        n2 as u64 * pairs(n1) * pairs(n3),
        n3 as u64 * pairs(n1) * pairs(n2),
    ]
}

/// Size of the full degree-2 basis: distinct-index moves plus slice swaps.
pub fn basis_count_3way(n1: usize, n2: usize, n3: usize) -> u64 {
    let s = slice_swap_counts(n1, n2, n3);
    move_count_3way(n1, n2, n3) + s[0] + s[1] + s[2]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum BasisKind {
    Basic2,
    Distinct3,
    Full3,
}

/// A move basis for one table shape, stored or generated on demand.
#[derive(Debug, Clone)]
pub struct MoveSet {
    dims: Vec<usize>,
    count: u64,
    kind: BasisKind,
    materialized: Option<Vec<Move>>,
}

impl MoveSet {
    /// The connecting basis for the given dims: the 2x2 swaps for 2-way
    /// tables, the full degree-2 basis for 3-way tables.
    pub fn for_dims(dims: &[usize]) -> Result<MoveSet> {
        match dims {
            [m, n] => basic_moves_2way(*m, *n),
            [a, b, c] => markov_basis_3way(*a, *b, *c),
            _ => Err(Error::UnsupportedRank(dims.len())),
        }
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    /// Number of moves in the set.
    pub fn len(&self) -> u64 {
        self.count
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    pub fn is_materialized(&self) -> bool {
        self.materialized.is_some()
    }

    /// The stored moves; errors for on-demand sets.
    pub fn moves(&self) -> Result<&[Move]> {
        self.materialized
            .as_deref()
            .ok_or(Error::NotMaterialized)
    }

    /// Draws a move uniformly at random.
    pub fn draw(&self, rng: &mut SplitMix64) -> Move {
        if let Some(moves) = &self.materialized {
            return moves[rng.below(moves.len() as u64) as usize];
        }
        match self.kind {
            BasisKind::Basic2 => {
                let (i1, i2) = draw_distinct_sorted(rng, self.dims[0]);
                let (j1, j2) = draw_distinct_sorted(rng, self.dims[1]);
                move_2way(&self.dims, i1, i2, j1, j2)
            }
            BasisKind::Distinct3 => self.draw_distinct3(rng),
            BasisKind::Full3 => {
                let swaps = slice_swap_counts(self.dims[0], self.dims[1], self.dims[2]);
                let distinct = move_count_3way(self.dims[0], self.dims[1], self.dims[2]);
                let mut r = rng.below(self.count);
                if r < distinct {
                    return self.draw_distinct3(rng);
                }
                r -= distinct;
                for (axis, &family) in swaps.iter().enumerate() {
                    if r < family {
                        return self.draw_slice_swap(rng, axis);
                    }
                    r -= family;
                }
                unreachable!("family ranges cover the count");
            }
        }
    }

    fn draw_distinct3(&self, rng: &mut SplitMix64) -> Move {
        let (i1, i2) = draw_distinct_sorted(rng, self.dims[0]);
        let (j1, j2) = draw_distinct(rng, self.dims[1]);
        let (k1, k2) = draw_distinct(rng, self.dims[2]);
        let pattern = rng.below(3) as usize;
        move_3way(&self.dims, i1, i2, j1, j2, k1, k2, pattern)
    }

    fn draw_slice_swap(&self, rng: &mut SplitMix64, axis: usize) -> Move {
        let fixed = rng.below(self.dims[axis] as u64) as usize;
        let (oa, ob) = match axis {
            0 => (1, 2),
            1 => (0, 2),
            _ => (0, 1),
        };
        let (a1, a2) = draw_distinct_sorted(rng, self.dims[oa]);
        let (b1, b2) = draw_distinct_sorted(rng, self.dims[ob]);
        slice_swap(&self.dims, axis, fixed, a1, a2, b1, b2)
    }
}

/// The 2x2 swap inside the `fixed` slice of `axis`, acting on the other two
/// axes at positions `(a1, b1), (a2, b2)`.
fn slice_swap(
    dims: &[usize],
    axis: usize,
    fixed: usize,
    a1: usize,
    a2: usize,
    b1: usize,
    b2: usize,
) -> Move {
    let cell = |a: usize, b: usize| -> usize {
        let mut idx = [0usize; 3];
        idx[axis] = fixed;
        let (oa, ob) = match axis {
            0 => (1, 2),
            1 => (0, 2),
            _ => (0, 1),
        };
        idx[oa] = a;
        idx[ob] = b;
        flat_index(dims, &idx)
    };
    Move::new(
        dims,
        [
            (cell(a1, b1), 1),
            (cell(a2, b2), 1),
            (cell(a1, b2), -1),
            (cell(a2, b1), -1),
        ],
    )
}

fn draw_distinct(rng: &mut SplitMix64, n: usize) -> (usize, usize) {
    let a = rng.below(n as u64) as usize;
    let mut b = rng.below(n as u64 - 1) as usize;
    if b >= a {
        b += 1;
    }
    (a, b)
}

fn draw_distinct_sorted(rng: &mut SplitMix64, n: usize) -> (usize, usize) {
    let (a, b) = draw_distinct(rng, n);
    (a.min(b), a.max(b))
}

fn move_2way(dims: &[usize], i1: usize, i2: usize, j1: usize, j2: usize) -> Move {
    Move::new(
        dims,
        [
            (flat_index(dims, &[i1, j1]), 1),
            (flat_index(dims, &[i2, j2]), 1),
            (flat_index(dims, &[i1, j2]), -1),
            (flat_index(dims, &[i2, j1]), -1),
        ],
    )
}

#[allow(clippy::too_many_arguments)]
fn move_3way(
    dims: &[usize],
    i1: usize,
    i2: usize,
    j1: usize,
    j2: usize,
    k1: usize,
    k2: usize,
    pattern: usize,
) -> Move {
    let minus = match pattern {
        0 => [[i1, j1, k2], [i2, j2, k1]],
        1 => [[i1, j2, k1], [i2, j1, k2]],
        _ => [[i1, j2, k2], [i2, j1, k1]],
    };
    Move::new(
        dims,
        [
            (flat_index(dims, &[i1, j1, k1]), 1),
            (flat_index(dims, &[i2, j2, k2]), 1),
            (flat_index(dims, &minus[0]), -1),
            (flat_index(dims, &minus[1]), -1),
        ],
    )
}

/// The 2-way basis: +1 on `(i1,j1),(i2,j2)`, -1 on `(i1,j2),(i2,j1)` for every
/// `i1 < i2`, `j1 < j2`.
pub fn basic_moves_2way(rows: usize, cols: usize) -> Result<MoveSet> {
    basic_moves_2way_budgeted(rows, cols, DEFAULT_MOVE_ENTRY_BUDGET)
}

pub fn basic_moves_2way_budgeted(rows: usize, cols: usize, entry_budget: usize) -> Result<MoveSet> {
    if rows < 2 || cols < 2 {
        return Err(Error::DegenerateAxis);
    }
    let dims = vec![rows, cols];
    let count = move_count_2way(rows, cols);
    if count.saturating_mul(4) > entry_budget as u64 {
        return Ok(MoveSet {
            dims,
            count,
            kind: BasisKind::Basic2,
            materialized: None,
        });
    }
    let mut moves = Vec::with_capacity(count as usize);
    for i1 in 0..rows {
        for i2 in i1 + 1..rows {
            for j1 in 0..cols {
                for j2 in j1 + 1..cols {
                    moves.push(move_2way(&dims, i1, i2, j1, j2));
                }
            }
        }
    }
    assert_eq!(moves.len() as u64, count);
    Ok(MoveSet {
        dims,
        count,
        kind: BasisKind::Basic2,
        materialized: Some(moves),
    })
}

/// The 3-way basis over all `i1 < i2`, ordered `j1 != j2`, `k1 != k2`, and the
/// three balancing -1 patterns.
pub fn plane_moves_3way(n1: usize, n2: usize, n3: usize) -> Result<MoveSet> {
    plane_moves_3way_budgeted(n1, n2, n3, DEFAULT_MOVE_ENTRY_BUDGET)
}

pub fn plane_moves_3way_budgeted(
    n1: usize,
    n2: usize,
    n3: usize,
    entry_budget: usize,
) -> Result<MoveSet> {
    if n1 < 2 || n2 < 2 || n3 < 2 {
        return Err(Error::DegenerateAxis);
    }
    let dims = vec![n1, n2, n3];
    let count = move_count_3way(n1, n2, n3);
    if count.saturating_mul(4) > entry_budget as u64 {
        return Ok(MoveSet {
            dims,
            count,
            kind: BasisKind::Distinct3,
            materialized: None,
        });
    }
    let moves = generate_distinct3(&dims);
    assert_eq!(
        moves.len() as u64,
        count,
        "count formula pins the dedup convention"
    );
    Ok(MoveSet {
        dims,
        count,
        kind: BasisKind::Distinct3,
        materialized: Some(moves),
    })
}

fn generate_distinct3(dims: &[usize]) -> Vec<Move> {
    let (n1, n2, n3) = (dims[0], dims[1], dims[2]);
    let mut moves = Vec::new();
    for i1 in 0..n1 {
        for i2 in i1 + 1..n1 {
            for j1 in 0..n2 {
                for j2 in 0..n2 {
                    if j2 == j1 {
                        continue;
                    }
                    for k1 in 0..n3 {
                        for k2 in 0..n3 {
                            if k2 == k1 {
                                continue;
                            }
                            for pattern in 0..3 {
                                moves.push(move_3way(dims, i1, i2, j1, j2, k1, k2, pattern));
                            }
                        }
                    }
                }
            }
        }
    }
    moves
}

/// The full degree-2 basis for 3-way plane sums: the distinct-index moves
/// plus the 2x2 swaps inside every slice of every axis. This set connects
/// every fiber of the model (the distinct-index family alone does not).
pub fn markov_basis_3way(n1: usize, n2: usize, n3: usize) -> Result<MoveSet> {
    markov_basis_3way_budgeted(n1, n2, n3, DEFAULT_MOVE_ENTRY_BUDGET)
}

pub fn markov_basis_3way_budgeted(
    n1: usize,
    n2: usize,
    n3: usize,
    entry_budget: usize,
) -> Result<MoveSet> {
    if n1 < 2 || n2 < 2 || n3 < 2 {
        return Err(Error::DegenerateAxis);
    }
    let dims = vec![n1, n2, n3];
    let count = basis_count_3way(n1, n2, n3);
    if count.saturating_mul(4) > entry_budget as u64 {
        return Ok(MoveSet {
            dims,
            count,
            kind: BasisKind::Full3,
            materialized: None,
        });
    }
    let mut moves = generate_distinct3(&dims);
    for axis in 0..3usize {
        let (oa, ob) = match axis {
            0 => (1, 2),
            1 => (0, 2),
            _ => (0, 1),
        };
        for fixed in 0..dims[axis] {
            for a1 in 0..dims[oa] {
                for a2 in a1 + 1..dims[oa] {
                    for b1 in 0..dims[ob] {
                        for b2 in b1 + 1..dims[ob] {
                            moves.push(slice_swap(&dims, axis, fixed, a1, a2, b1, b2));
                        }
                    }
                }
            }
        }
    }
    assert_eq!(moves.len() as u64, count);
    Ok(MoveSet {
        dims,
        count,
        kind: BasisKind::Full3,
        materialized: Some(moves),
    })
}

/// Number of basis moves whose +1 cell sits at the corner `(0,0,..)`, i.e.
/// the moves that can add mass to the corner entry. Equals
/// `3 (n1-1)(n2-1)(n3-1)`; the generated set is scanned when stored.
pub fn count_applicable_at_corner(n1: usize, n2: usize, n3: usize) -> Result<u64> {
    let formula = 3 * ((n1 - 1) as u128 * (n2 - 1) as u128 * (n3 - 1) as u128) as u64;
    let set = plane_moves_3way(n1, n2, n3)?;
    match set.moves() {
        Ok(moves) => {
            let scanned = moves
                .iter()
                .filter(|m| m.cells().iter().any(|&(flat, s)| flat == 0 && s > 0))
                .count() as u64;
            debug_assert_eq!(scanned, formula);
            Ok(scanned)
        }
        Err(_) => Ok(formula),
    }
}

/// `table + sign * move`, or `Infeasible` when a cell would go negative.
/// Infeasibility is a rejected proposal, not a fault.
pub fn apply_move(table: &Table, mv: &Move, sign: i8) -> Result<Table> {
    assert!(sign == 1 || sign == -1, "sign must be +1 or -1");
    if !mv.dims_match(table.dims()) {
        return Err(Error::MoveShapeMismatch);
    }
    let mut data = table.data().to_vec();
    for &(flat, s) in mv.cells() {
        let v = data[flat] + i64::from(sign) * i64::from(s);
        if v < 0 {
            return Err(Error::Infeasible);
        }
        data[flat] = v;
    }
    Ok(Table::new(table.dims().to_vec(), data).expect("dims unchanged, cells nonnegative"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn counts_2way() {
        assert_eq!(basic_moves_2way(2, 2).unwrap().len(), 1);
        assert_eq!(basic_moves_2way(3, 3).unwrap().len(), 9);
        // enumeration cross-check of the binomial formula
        let set = basic_moves_2way(4, 5).unwrap();
        assert_eq!(set.len(), 6 * 10);
        let distinct: HashSet<_> = set.moves().unwrap().iter().copied().collect();
        assert_eq!(distinct.len() as u64, set.len());
    }

    #[test]
    fn counts_3way_match_formula() {
        for n1 in 2..=4usize {
            for n2 in 2..=4usize {
                for n3 in 2..=4usize {
                    let set = plane_moves_3way(n1, n2, n3).unwrap();
                    let formula =
                        3 * n1 * n2 * n3 * (n1 - 1) * (n2 - 1) * (n3 - 1) / 2;
                    assert_eq!(set.len(), formula as u64, "dims {n1}x{n2}x{n3}");
                    let distinct: HashSet<_> =
                        set.moves().unwrap().iter().copied().collect();
                    assert_eq!(distinct.len() as u64, set.len(), "dims {n1}x{n2}x{n3}");
                }
            }
        }
        assert_eq!(plane_moves_3way(2, 2, 2).unwrap().len(), 12);
        assert_eq!(plane_moves_3way(3, 3, 3).unwrap().len(), 324);
    }

    #[test]
    fn all_moves_have_zero_margins() {
        for set in [
            basic_moves_2way(3, 4).unwrap(),
            plane_moves_3way(2, 2, 2).unwrap(),
            plane_moves_3way(3, 2, 4).unwrap(),
            markov_basis_3way(3, 3, 2).unwrap(),
        ] {
            for m in set.moves().unwrap() {
                assert!(m.has_zero_margins(), "{}", m.sparse_text());
            }
        }
    }

    #[test]
    fn full_basis_counts_and_content() {
        // distinct-index family plus one slice-swap family per axis
        let set = markov_basis_3way(2, 2, 2).unwrap();
        assert_eq!(set.len(), 12 + 3 * 2);
        let distinct: HashSet<_> = set.moves().unwrap().iter().copied().collect();
        assert_eq!(distinct.len() as u64, set.len());
        // the distinct-index family is a strict subset
        for m in plane_moves_3way(2, 2, 2).unwrap().moves().unwrap() {
            assert!(distinct.contains(m));
        }
        for (n1, n2, n3) in [(2, 3, 4), (3, 3, 3)] {
            let set = markov_basis_3way(n1, n2, n3).unwrap();
            assert_eq!(set.len(), basis_count_3way(n1, n2, n3));
            let uniq: HashSet<_> = set.moves().unwrap().iter().copied().collect();
            assert_eq!(uniq.len() as u64, set.len());
        }
    }

    #[test]
    fn full_basis_on_demand_draws_match() {
        let stored = markov_basis_3way(3, 2, 3).unwrap();
        let all: HashSet<_> = stored.moves().unwrap().iter().copied().collect();
        let lazy = markov_basis_3way_budgeted(3, 2, 3, 8).unwrap();
        assert!(!lazy.is_materialized());
        assert_eq!(lazy.len(), stored.len());
        let mut rng = SplitMix64::new(4);
        let mut seen = HashSet::new();
        for _ in 0..5000 {
            let m = lazy.draw(&mut rng);
            assert!(all.contains(&m));
            seen.insert(m);
        }
        assert_eq!(seen.len() as u64, stored.len());
    }

    #[test]
    fn three_way_set_is_closed_under_negation() {
        let set = plane_moves_3way(3, 3, 2).unwrap();
        let all: HashSet<_> = set.moves().unwrap().iter().copied().collect();
        for m in set.moves().unwrap() {
            assert!(all.contains(&m.negated()));
            assert_ne!(*m, m.negated());
        }
    }

    #[test]
    fn corner_applicable_counts() {
        assert_eq!(count_applicable_at_corner(2, 2, 2).unwrap(), 3);
        assert_eq!(count_applicable_at_corner(3, 3, 3).unwrap(), 24);
        for n in 2..=4usize {
            let c = count_applicable_at_corner(n, n, n).unwrap();
            assert_eq!(c, (3 * (n - 1) * (n - 1) * (n - 1)) as u64);
            // applicable / total = 2 / (n1 n2 n3), both sides exact
            let total = plane_moves_3way(n, n, n).unwrap().len();
            assert_eq!(c * (n * n * n) as u64, 2 * total);
        }
    }

    #[test]
    fn degenerate_dims_rejected() {
        assert!(matches!(basic_moves_2way(1, 5), Err(Error::DegenerateAxis)));
        assert!(matches!(
            plane_moves_3way(2, 1, 2),
            Err(Error::DegenerateAxis)
        ));
    }

    #[test]
    fn apply_on_all_ones_2x2() {
        let t = Table::new(vec![2, 2], vec![1, 1, 1, 1]).unwrap();
        let set = basic_moves_2way(2, 2).unwrap();
        let m = set.moves().unwrap()[0];
        let out = apply_move(&t, &m, 1).unwrap();
        assert_eq!(out.data(), &[2, 0, 0, 2]);
        assert_eq!(out.all_margins(), t.all_margins());
    }

    #[test]
    fn apply_to_zero_table_is_infeasible() {
        let t = Table::zeros(vec![2, 2, 2]).unwrap();
        let set = plane_moves_3way(2, 2, 2).unwrap();
        for m in set.moves().unwrap() {
            assert!(matches!(apply_move(&t, m, 1), Err(Error::Infeasible)));
        }
    }

    #[test]
    fn apply_round_trip() {
        let t = Table::new(vec![2, 2, 2], vec![3, 1, 0, 2, 1, 4, 2, 0]).unwrap();
        let set = plane_moves_3way(2, 2, 2).unwrap();
        for m in set.moves().unwrap() {
            if let Ok(fwd) = apply_move(&t, m, 1) {
                assert_eq!(fwd.all_margins(), t.all_margins());
                let back = apply_move(&fwd, m, -1).unwrap();
                assert_eq!(back, t);
            }
        }
    }

    #[test]
    fn shape_mismatch_rejected() {
        let t = Table::zeros(vec![3, 3]).unwrap();
        let set = basic_moves_2way(2, 2).unwrap();
        assert!(matches!(
            apply_move(&t, &set.moves().unwrap()[0], 1),
            Err(Error::MoveShapeMismatch)
        ));
    }

    #[test]
    fn on_demand_draws_lie_in_the_materialized_set() {
        let stored = plane_moves_3way(3, 3, 3).unwrap();
        let all: HashSet<_> = stored.moves().unwrap().iter().copied().collect();
        // tiny budget forces the on-demand representation
        let lazy = plane_moves_3way_budgeted(3, 3, 3, 8).unwrap();
        assert!(!lazy.is_materialized());
        assert_eq!(lazy.len(), stored.len());
        let mut rng = SplitMix64::new(99);
        let mut seen = HashSet::new();
        for _ in 0..4000 {
            let m = lazy.draw(&mut rng);
            assert!(all.contains(&m));
            seen.insert(m);
        }
        // 4000 draws over 324 moves should hit nearly everything
        assert!(seen.len() > 300);
    }

    #[test]
    fn sparse_text_is_stable() {
        let set = basic_moves_2way(2, 2).unwrap();
        assert_eq!(
            set.moves().unwrap()[0].sparse_text(),
            "(0,0):+1;(0,1):-1;(1,0):-1;(1,1):+1"
        );
    }
}
