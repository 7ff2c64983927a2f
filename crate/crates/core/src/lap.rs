//! Relaxed linear assignment between two segment sets: maximize the number
//! of matched pairs first, then the total payoff, and break remaining ties
//! toward the lexicographically smallest pair set. Forbidden pairs are
//! encoded as `f64::NEG_INFINITY` and never matched.

mod exact;

use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;
use core::fmt;

use exact::{Cost, Dyadic};

/// Dense payoff matrix; rows index one side, columns the other, and
/// `NEG_INFINITY` marks forbidden pairs. `NaN` and `+inf` are rejected.
#[derive(Clone, Debug, PartialEq)]
pub struct PayoffMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl PayoffMatrix {
    /// Wraps a row-major payoff buffer.
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, LapError> {
        if data.len() != rows * cols {
            return Err(LapError::DataLength {
                expected: rows * cols,
                got: data.len(),
            });
        }
        for (i, &p) in data.iter().enumerate() {
            if p.is_nan() || p == f64::INFINITY {
                return Err(LapError::BadEntry {
                    row: i / cols.max(1),
                    col: i % cols.max(1),
                });
            }
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds a matrix from row vectors; all rows must have equal length.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, LapError> {
        let cols = rows.first().map_or(0, Vec::len);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != cols {
                return Err(LapError::RaggedRow {
                    row: i,
                    expected: cols,
                    got: row.len(),
                });
            }
        }
        let mut data = Vec::with_capacity(rows.len() * cols);
        for row in rows {
            data.extend_from_slice(row);
        }
        Self::new(rows.len(), cols, data)
    }

    /// Number of rows.
    pub fn rows(&self) -> usize {
        self.rows
    }

    /// Number of columns.
    pub fn cols(&self) -> usize {
        self.cols
    }

    /// Payoff of pair `(row, col)`. Panics when out of range.
    pub fn get(&self, row: usize, col: usize) -> f64 {
        assert!(row < self.rows && col < self.cols, "index out of range");
        self.data[row * self.cols + col]
    }
}

/// Result of an assignment: matched `(row, col)` pairs in ascending row
/// order plus their summed payoff.
#[derive(Clone, Debug, PartialEq)]
pub struct Assignment {
    pairs: Vec<(usize, usize)>,
    total_payoff: f64,
}

impl Assignment {
    fn from_pairs(pairs: Vec<(usize, usize)>, m: &PayoffMatrix) -> Self {
        debug_assert!(pairs.windows(2).all(|w| w[0].0 < w[1].0));
        let total_payoff = pairs.iter().map(|&(r, c)| m.get(r, c)).sum();
        Self {
            pairs,
            total_payoff,
        }
    }

    /// Matched pairs, sorted by row (each row and column appears at most once).
    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    /// Sum of the matched pairs' payoffs (0 for the empty assignment).
    pub fn total_payoff(&self) -> f64 {
        self.total_payoff
    }

    /// Number of matched pairs.
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    /// True when nothing was matched.
    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

/// Solves the relaxed assignment problem exactly.
///
/// The returned assignment has maximum cardinality among assignments using
/// only finite-payoff pairs; among those it maximizes the total payoff
/// (compared in exact arithmetic, not floating point); any remaining tie is
/// broken toward the lexicographically smallest sorted pair list. This makes
/// the result unique and invariant under constant payoff shifts.
///
/// Successive shortest augmenting paths over exact costs; intended for the
/// per-frame matrices of tracking pipelines (tens of rows), not for huge
/// dense instances.
pub fn solve_relaxed_lap(m: &PayoffMatrix) -> Assignment {
    let (n_rows, n_cols) = (m.rows(), m.cols());
    let total = n_rows * n_cols;
    if total == 0 {
        return Assignment::from_pairs(Vec::new(), m);
    }

    let edge_cost = |r: usize, c: usize| -> Option<Cost> {
        let p = m.get(r, c);
        if p == f64::NEG_INFINITY {
            None
        } else {
            Some(Cost::edge(p, r * n_cols + c, total))
        }
    };

    // Node potentials keep reduced edge costs non-negative:
    //   reduced(r, c) = cost(r, c) + p_row[r] - p_col[c] >= 0.
    // Row potentials start at zero and, for unmatched rows, stay zero (they
    // are Dijkstra sources with distance 0, and rows never lose a match), so
    // seeding every source at distance 0 stays unbiased across rounds.
    let mut p_col: Vec<Cost> = (0..n_cols)
        .map(|c| {
            (0..n_rows)
                .filter_map(|r| edge_cost(r, c))
                .min()
                .unwrap_or_else(Cost::zero)
        })
        .collect();
    let mut p_row: Vec<Cost> = vec![Cost::zero(); n_rows];

    let mut row_match: Vec<Option<usize>> = vec![None; n_rows];
    let mut col_match: Vec<Option<usize>> = vec![None; n_cols];

    loop {
        // Shortest alternating path from any unmatched row to any unmatched
        // column, over reduced costs (Dijkstra with linear scans).
        let nodes = n_rows + n_cols;
        let mut dist: Vec<Option<Cost>> = vec![None; nodes];
        let mut done = vec![false; nodes];
        let mut parent_row_of_col: Vec<Option<usize>> = vec![None; n_cols];
        for r in 0..n_rows {
            if row_match[r].is_none() {
                dist[r] = Some(Cost::zero());
            }
        }
        loop {
            let mut current: Option<usize> = None;
            for x in 0..nodes {
                if done[x] || dist[x].is_none() {
                    continue;
                }
                if current.is_none_or(|b| dist[x] < dist[b]) {
                    current = Some(x);
                }
            }
            let Some(x) = current else { break };
            done[x] = true;
            if x < n_rows {
                let r = x;
                for c in 0..n_cols {
                    if row_match[r] == Some(c) {
                        continue;
                    }
                    let Some(e) = edge_cost(r, c) else { continue };
                    let reduced = &(&e + &p_row[r]) - &p_col[c];
                    let nd = dist[r].as_ref().unwrap() + &reduced;
                    let node = n_rows + c;
                    if dist[node].as_ref().is_none_or(|d| nd < *d) {
                        dist[node] = Some(nd);
                        parent_row_of_col[c] = Some(r);
                    }
                }
            } else {
                let c = x - n_rows;
                // Matched edges are tight, so traversing one back to its row
                // costs nothing.
                if let Some(r) = col_match[c] {
                    let nd = dist[x].clone();
                    if dist[r].is_none() || nd < dist[r] {
                        dist[r] = nd;
                    }
                }
            }
        }

        // Reduced distances to free columns are offset by -p_col[c], so the
        // true cost of the cheapest augmenting path ending at c is
        // dist[c] + p_col[c]; minimise that, not the raw distance.
        let mut target: Option<(usize, Cost)> = None;
        for c in 0..n_cols {
            if col_match[c].is_some() {
                continue;
            }
            let Some(d) = &dist[n_rows + c] else { continue };
            let true_cost = d + &p_col[c];
            if target.as_ref().is_none_or(|(_, b)| true_cost < *b) {
                target = Some((c, true_cost));
            }
        }
        let Some((c_star, _)) = target else { break };
        let bound = dist[n_rows + c_star].clone().unwrap();

        // Shift potentials by min(dist, bound) so path edges become tight and
        // feasibility is preserved.
        for r in 0..n_rows {
            let shift = match &dist[r] {
                Some(d) if *d < bound => d,
                _ => &bound,
            };
            p_row[r] = &p_row[r] + shift;
        }
        for c in 0..n_cols {
            let shift = match &dist[n_rows + c] {
                Some(d) if *d < bound => d,
                _ => &bound,
            };
            p_col[c] = &p_col[c] + shift;
        }

        // Flip matched/unmatched edges along the augmenting path.
        let mut c = c_star;
        loop {
            let r = parent_row_of_col[c].expect("reached column has a parent");
            let previous = row_match[r];
            row_match[r] = Some(c);
            col_match[c] = Some(r);
            match previous {
                Some(pc) => c = pc,
                None => break,
            }
        }
    }

    let pairs: Vec<(usize, usize)> = row_match
        .iter()
        .enumerate()
        .filter_map(|(r, m)| m.map(|c| (r, c)))
        .collect();
    Assignment::from_pairs(pairs, m)
}

/// Exhaustive reference solver with identical semantics to
/// [`solve_relaxed_lap`]; rejects matrices larger than 10x10.
pub fn brute_force_lap(m: &PayoffMatrix) -> Result<Assignment, LapError> {
    const LIMIT: usize = 10;
    if m.rows() > LIMIT || m.cols() > LIMIT {
        return Err(LapError::TooLarge {
            rows: m.rows(),
            cols: m.cols(),
            limit: LIMIT,
        });
    }

    struct Best {
        count: usize,
        payoff: Dyadic,
        pairs: Vec<(usize, usize)>,
    }

    fn recurse(
        m: &PayoffMatrix,
        row: usize,
        used: &mut [bool],
        pairs: &mut Vec<(usize, usize)>,
        sum: Dyadic,
        best: &mut Option<Best>,
    ) {
        if let Some(b) = best {
            // Even matching every remaining row cannot reach the best count.
            if pairs.len() + (m.rows() - row) < b.count {
                return;
            }
        }
        if row == m.rows() {
            let better = match best {
                None => true,
                Some(b) => match pairs.len().cmp(&b.count) {
                    Ordering::Greater => true,
                    Ordering::Less => false,
                    Ordering::Equal => match sum.cmp(&b.payoff) {
                        Ordering::Greater => true,
                        Ordering::Less => false,
                        Ordering::Equal => pairs.as_slice() < b.pairs.as_slice(),
                    },
                },
            };
            if better {
                *best = Some(Best {
                    count: pairs.len(),
                    payoff: sum,
                    pairs: pairs.clone(),
                });
            }
            return;
        }
        for c in 0..m.cols() {
            if used[c] {
                continue;
            }
            let p = m.get(row, c);
            if p == f64::NEG_INFINITY {
                continue;
            }
            used[c] = true;
            pairs.push((row, c));
            recurse(m, row + 1, used, pairs, &sum + &Dyadic::from_f64(p), best);
            pairs.pop();
            used[c] = false;
        }
        recurse(m, row + 1, used, pairs, sum, best);
    }

    let mut best = None;
    let mut used = vec![false; m.cols()];
    recurse(m, 0, &mut used, &mut Vec::new(), Dyadic::zero(), &mut best);
    let pairs = best.map(|b| b.pairs).unwrap_or_default();
    Ok(Assignment::from_pairs(pairs, m))
}

/// Errors from payoff-matrix construction or the reference solver.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum LapError {
    /// Buffer length does not match `rows * cols`.
    DataLength {
        /// Required length.
        expected: usize,
        /// Actual length.
        got: usize,
    },
    /// Row vectors have different lengths.
    RaggedRow {
        /// Offending row index.
        row: usize,
        /// Length of the first row.
        expected: usize,
        /// Length of the offending row.
        got: usize,
    },
    /// Entry is NaN or positive infinity.
    BadEntry {
        /// Row of the offending entry.
        row: usize,
        /// Column of the offending entry.
        col: usize,
    },
    /// Matrix exceeds the reference solver's size limit.
    TooLarge {
        /// Row count.
        rows: usize,
        /// Column count.
        cols: usize,
        /// Maximum dimension allowed.
        limit: usize,
    },
}

impl fmt::Display for LapError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LapError::DataLength { expected, got } => {
                write!(f, "payoff buffer has {got} entries, expected {expected}")
            }
            LapError::RaggedRow { row, expected, got } => {
                write!(f, "row {row} has {got} entries, expected {expected}")
            }
            LapError::BadEntry { row, col } => {
                write!(f, "payoff at ({row}, {col}) is NaN or +inf")
            }
            LapError::TooLarge { rows, cols, limit } => {
                write!(
                    f,
                    "{rows}x{cols} exceeds the {limit}x{limit} reference-solver limit"
                )
            }
        }
    }
}

impl core::error::Error for LapError {}
