//! Closed-interval max-stabbing and per-group interval merging.
//!
//! Every bound in the solver reduces to "find the point on the line covered
//! by the most closed intervals". The sweep sorts start and end coordinates
//! separately and walks them with starts ordered before ends at equal
//! coordinates, so intervals that merely touch are both counted.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

/// A closed interval `[lo, hi]` with `lo <= hi`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Self {
        debug_assert!(lo <= hi, "interval [{lo}, {hi}] is inverted");
        Self { lo, hi }
    }

    pub fn contains(&self, t: f64) -> bool {
        self.lo <= t && t <= self.hi
    }
}

/// Maximum stabbing number and a probe position achieving it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StabResult {
    pub count: usize,
    /// `None` only when `count == 0`.
    pub position: Option<f64>,
}

impl StabResult {
    pub const EMPTY: StabResult = StabResult {
        count: 0,
        position: None,
    };
}

/// Reusable scratch space for repeated stabbing queries.
///
/// The solver evaluates thousands of bounds over the same number of
/// intervals; keeping the two coordinate buffers around avoids reallocating
/// them for every branch.
#[derive(Debug, Default, Clone)]
pub struct StabBuffer {
    starts: Vec<f64>,
    ends: Vec<f64>,
}

impl StabBuffer {
    pub fn with_capacity(n: usize) -> Self {
        Self {
            starts: Vec::with_capacity(n),
            ends: Vec::with_capacity(n),
        }
    }

    pub fn clear(&mut self) {
        self.starts.clear();
        self.ends.clear();
    }

    #[inline]
    pub fn push(&mut self, iv: Interval) {
        self.starts.push(iv.lo);
        self.ends.push(iv.hi);
    }

    pub fn len(&self) -> usize {
        self.starts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.starts.is_empty()
    }

    /// Stabs everything pushed since the last [`clear`](Self::clear).
    ///
    /// Ties between maximal regions go to the lowest one; the probe is the
    /// midpoint of that region.
    pub fn stab(&mut self) -> StabResult {
        let n = self.starts.len();
        if n == 0 {
            return StabResult::EMPTY;
        }
        self.starts.sort_unstable_by(f64::total_cmp);
        self.ends.sort_unstable_by(f64::total_cmp);
        let (starts, ends) = (&self.starts, &self.ends);

        let mut count = 0usize;
        let mut best = 0usize;
        let mut region = (0.0, 0.0);
        let (mut i, mut j) = (0usize, 0usize);
        while i < n {
            if starts[i] <= ends[j] {
                count += 1;
                if count > best {
                    best = count;
                    // the region runs until the next event; a following start
                    // at or before the next end will immediately supersede it
                    let next_start = starts.get(i + 1).copied();
                    let hi = match next_start {
                        Some(s) if s <= ends[j] => s,
                        _ => ends[j],
                    };
                    region = (starts[i], hi);
                }
                i += 1;
            } else {
                count -= 1;
                j += 1;
            }
        }
        let (lo, hi) = region;
        let mid = (lo + 0.5 * (hi - lo)).clamp(lo, hi);
        StabResult {
            count: best,
            position: Some(mid),
        }
    }
}

/// Max-stabbing over closed intervals in `O(N log N)`.
pub fn stab(intervals: &[Interval]) -> StabResult {
    let mut buf = StabBuffer::with_capacity(intervals.len());
    for iv in intervals {
        buf.push(*iv);
    }
    buf.stab()
}

fn by_lo(a: &Interval, b: &Interval) -> Ordering {
    a.lo.total_cmp(&b.lo).then(a.hi.total_cmp(&b.hi))
}

/// Sorts `intervals` by lower end and appends their disjoint union to `out`.
///
/// Intervals whose running upper end reaches the next lower end (`>=`) are
/// fused, so touching intervals merge. The output of one call is sorted and
/// separated by strictly positive gaps.
pub fn merge_into(intervals: &mut [Interval], out: &mut Vec<Interval>) {
    if intervals.is_empty() {
        return;
    }
    // stable sort: linear on the already-sorted input the SPCR bound produces
    intervals.sort_by(by_lo);
    let mut cur = intervals[0];
    for next in &intervals[1..] {
        if cur.hi >= next.lo {
            cur.hi = cur.hi.max(next.hi);
        } else {
            out.push(cur);
            cur = *next;
        }
    }
    out.push(cur);
}

/// Disjoint, ascending union of the intervals of one source point.
pub fn merge_one_source(intervals: &[Interval]) -> Vec<Interval> {
    let mut work = intervals.to_vec();
    let mut out = Vec::with_capacity(work.len());
    merge_into(&mut work, &mut out);
    out
}

/// Max over `t` of the number of groups whose union contains `t`.
///
/// Each group is merged first so the probe can cross at most one interval
/// per group.
pub fn grouped_stab(groups: &[Vec<Interval>]) -> StabResult {
    let mut merged = Vec::new();
    let mut work = Vec::new();
    for g in groups {
        work.clear();
        work.extend_from_slice(g);
        merge_into(&mut work, &mut merged);
    }
    stab(&merged)
}
