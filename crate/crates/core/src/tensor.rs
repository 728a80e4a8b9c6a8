//! Dense 2-way and 3-way tensors and their plane-sum margins.
//!
//! Storage is flat row-major with an explicit `dims` header. Cell values are
//! signed 64-bit internally (moves need -1) with nonnegativity enforced at
//! construction. All values are immutable after construction and safe to
//! share across threads.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

fn check_dims(dims: &[usize]) -> Result<()> {
    if dims.len() < 2 || dims.len() > 3 {
        return Err(Error::UnsupportedRank(dims.len()));
    }
    if dims.contains(&0) {
        return Err(Error::EmptyAxis);
    }
    Ok(())
}

fn cell_count(dims: &[usize]) -> usize {
    dims.iter().product()
}

/// Row-major flat offset of a multi-index.
pub fn flat_index(dims: &[usize], idx: &[usize]) -> usize {
    debug_assert_eq!(dims.len(), idx.len());
    let mut flat = 0;
    for (d, i) in dims.iter().zip(idx) {
        debug_assert!(i < d);
        flat = flat * d + i;
    }
    flat
}

/// Multi-index of a row-major flat offset.
pub fn multi_index(dims: &[usize], mut flat: usize) -> Vec<usize> {
    let mut idx = vec![0; dims.len()];
    for a in (0..dims.len()).rev() {
        idx[a] = flat % dims[a];
        flat /= dims[a];
    }
    idx
}

/// A k-way nonnegative integer table (k = 2 or 3), the sample space element.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawTable")]
pub struct Table {
    dims: Vec<usize>,
    data: Vec<i64>,
}

#[derive(Deserialize)]
struct RawTable {
    dims: Vec<usize>,
    data: Vec<i64>,
}

impl TryFrom<RawTable> for Table {
    type Error = Error;
    fn try_from(raw: RawTable) -> Result<Self> {
        Table::new(raw.dims, raw.data)
    }
}

impl Table {
    pub fn new(dims: Vec<usize>, data: Vec<i64>) -> Result<Self> {
        check_dims(&dims)?;
        let expected = cell_count(&dims);
        if data.len() != expected {
            return Err(Error::ShapeMismatch {
                dims,
                expected,
                got: data.len(),
            });
        }
        if let Some(pos) = data.iter().position(|&v| v < 0) {
            return Err(Error::NegativeEntry(pos));
        }
        Ok(Table { dims, data })
    }

    pub fn zeros(dims: Vec<usize>) -> Result<Self> {
        check_dims(&dims)?;
        let n = cell_count(&dims);
        Ok(Table {
            dims,
            data: vec![0; n],
        })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn rank(&self) -> usize {
        self.dims.len()
    }

    pub fn data(&self) -> &[i64] {
        &self.data
    }

    pub fn get(&self, idx: &[usize]) -> i64 {
        self.data[flat_index(&self.dims, idx)]
    }

    /// Sum of all entries (the grand total N).
    pub fn grand_total(&self) -> i64 {
        self.data.iter().sum()
    }

    /// Sums over all cells whose `axis`-th index is fixed, one per index.
    pub fn plane_margins(&self, axis: usize) -> Result<Vec<i64>> {
        plane_margins_impl(&self.dims, &self.data, axis, |v| *v)
    }

    /// Margins along every axis, in axis order.
    pub fn all_margins(&self) -> Vec<Vec<i64>> {
        (0..self.rank())
            .map(|a| self.plane_margins(a).expect("axis in range"))
            .collect()
    }

    /// The margin spec this table satisfies.
    pub fn margin_spec(&self) -> MarginSpec {
        MarginSpec::new(self.all_margins()).expect("margins of a table are consistent")
    }

    pub(crate) fn from_parts_unchecked(dims: Vec<usize>, data: Vec<i64>) -> Self {
        Table { dims, data }
    }
}

/// A k-way nonnegative real table, e.g. the expected table Z = E[Y].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawRealTable")]
pub struct RealTable {
    dims: Vec<usize>,
    data: Vec<f64>,
}

#[derive(Deserialize)]
struct RawRealTable {
    dims: Vec<usize>,
    data: Vec<f64>,
}

impl TryFrom<RawRealTable> for RealTable {
    type Error = Error;
    fn try_from(raw: RawRealTable) -> Result<Self> {
        RealTable::new(raw.dims, raw.data)
    }
}

impl RealTable {
    pub fn new(dims: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        check_dims(&dims)?;
        let expected = cell_count(&dims);
        if data.len() != expected {
            return Err(Error::ShapeMismatch {
                dims,
                expected,
                got: data.len(),
            });
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::NotFiniteEntry(pos));
        }
        Ok(RealTable { dims, data })
    }

    /// Builds a table by evaluating `f` at every multi-index in row-major order.
    pub fn from_fn(dims: Vec<usize>, mut f: impl FnMut(&[usize]) -> f64) -> Result<Self> {
        check_dims(&dims)?;
        let n = cell_count(&dims);
        let mut data = Vec::with_capacity(n);
        for flat in 0..n {
            data.push(f(&multi_index(&dims, flat)));
        }
        RealTable::new(dims, data)
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn rank(&self) -> usize {
        self.dims.len()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, idx: &[usize]) -> f64 {
        self.data[flat_index(&self.dims, idx)]
    }

    pub fn grand_total(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn plane_margins(&self, axis: usize) -> Result<Vec<f64>> {
        plane_margins_impl(&self.dims, &self.data, axis, |v| *v)
    }

    pub fn all_margins(&self) -> Vec<Vec<f64>> {
        (0..self.rank())
            .map(|a| self.plane_margins(a).expect("axis in range"))
            .collect()
    }
}

fn plane_margins_impl<T, S>(dims: &[usize], data: &[T], axis: usize, value: S) -> Result<Vec<T>>
where
    T: Copy + std::ops::AddAssign + Default,
    S: Fn(&T) -> T,
{
    if axis >= dims.len() {
        return Err(Error::AxisOutOfRange {
            axis,
            rank: dims.len(),
        });
    }
    let mut stride = 1;
    for d in &dims[axis + 1..] {
        stride *= d;
    }
    let mut sums = vec![T::default(); dims[axis]];
    for (flat, v) in data.iter().enumerate() {
        sums[(flat / stride) % dims[axis]] += value(v);
    }
    Ok(sums)
}

/// The plane-sum vectors defining a fiber: one integer vector per axis, all
/// summing to a common grand total N.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawSpec")]
pub struct MarginSpec {
    axis_sums: Vec<Vec<i64>>,
}

#[derive(Deserialize)]
struct RawSpec {
    axis_sums: Vec<Vec<i64>>,
}

impl TryFrom<RawSpec> for MarginSpec {
    type Error = Error;
    fn try_from(raw: RawSpec) -> Result<Self> {
        MarginSpec::new(raw.axis_sums)
    }
}

/// Checks rank, nonnegativity, and that all axis totals agree; returns N.
pub fn validate_margin_spec(axis_sums: &[Vec<i64>]) -> Result<i64> {
    if axis_sums.len() < 2 || axis_sums.len() > 3 {
        return Err(Error::UnsupportedRank(axis_sums.len()));
    }
    if axis_sums.iter().any(|v| v.is_empty()) {
        return Err(Error::EmptyAxis);
    }
    for sums in axis_sums {
        if let Some(pos) = sums.iter().position(|&v| v < 0) {
            return Err(Error::NegativeEntry(pos));
        }
    }
    let totals: Vec<i64> = axis_sums.iter().map(|v| v.iter().sum()).collect();
    if totals.windows(2).any(|w| w[0] != w[1]) {
        return Err(Error::MismatchedTotals(totals));
    }
    Ok(totals[0])
}

impl MarginSpec {
    pub fn new(axis_sums: Vec<Vec<i64>>) -> Result<Self> {
        validate_margin_spec(&axis_sums)?;
        Ok(MarginSpec { axis_sums })
    }

    pub fn axis_sums(&self) -> &[Vec<i64>] {
        &self.axis_sums
    }

    pub fn rank(&self) -> usize {
        self.axis_sums.len()
    }

    pub fn dims(&self) -> Vec<usize> {
        self.axis_sums.iter().map(Vec::len).collect()
    }

    /// The common grand total N.
    pub fn total(&self) -> i64 {
        self.axis_sums[0].iter().sum()
    }

    /// Re-runs validation and returns N.
    pub fn validate(&self) -> Result<i64> {
        validate_margin_spec(&self.axis_sums)
    }

    /// Whether `table` has exactly these margins.
    pub fn is_satisfied_by(&self, table: &Table) -> bool {
        table.dims() == self.dims().as_slice() && table.all_margins() == self.axis_sums
    }

    /// A member of the fiber built by a greedy northwest-corner fill: cells
    /// are visited in row-major order and each receives the minimum of the
    /// remaining axis budgets. The sweep always closes all margins exactly.
    pub fn greedy_table(&self) -> Table {
        let dims = self.dims();
        let mut rem = self.axis_sums.clone();
        let n = cell_count(&dims);
        let mut data = vec![0i64; n];
        for (flat, cell) in data.iter_mut().enumerate() {
            let idx = multi_index(&dims, flat);
            let take = (0..dims.len()).map(|a| rem[a][idx[a]]).min().unwrap();
            if take > 0 {
                *cell = take;
                for a in 0..dims.len() {
                    rem[a][idx[a]] -= take;
                }
            }
        }
        debug_assert!(rem.iter().all(|v| v.iter().all(|&r| r == 0)));
        Table::from_parts_unchecked(dims, data)
    }
}
