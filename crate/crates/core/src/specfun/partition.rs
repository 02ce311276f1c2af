//! Integer partitions indexing the zonal-polynomial series.
//!
//! Partitions with more parts than the matrix dimension contribute zero to
//! the series, so every enumeration here is bounded by a maximum length.

use std::fmt;

/// A partition of a non-negative integer: positive, non-increasing parts.
///
/// The empty partition (weight 0) is valid and indexes the constant term of
/// every hypergeometric series.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Partition {
    parts: Vec<usize>,
}

impl Partition {
    /// Build from a list of parts. Fails on zero parts or increasing order.
    pub fn new(parts: Vec<usize>) -> crate::Result<Self> {
        for w in parts.windows(2) {
            if w[1] > w[0] {
                return Err(crate::Error::InvalidParameter(format!(
                    "partition parts must be non-increasing, got {parts:?}"
                )));
            }
        }
        if parts.iter().any(|&p| p == 0) {
            return Err(crate::Error::InvalidParameter(
                "partition parts must be positive".into(),
            ));
        }
        Ok(Self { parts })
    }

    /// The empty partition of 0.
    pub fn empty() -> Self {
        Self { parts: Vec::new() }
    }

    pub fn parts(&self) -> &[usize] {
        &self.parts
    }

    /// Sum of the parts.
    pub fn weight(&self) -> usize {
        self.parts.iter().sum()
    }

    /// Number of parts.
    pub fn len(&self) -> usize {
        self.parts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parts.is_empty()
    }

    /// i-th part, zero-padded beyond the last part.
    pub fn part(&self, i: usize) -> usize {
        self.parts.get(i).copied().unwrap_or(0)
    }

    /// Number of parts that are >= j+1, i.e. the j-th part of the conjugate
    /// partition (zero-based j).
    pub fn conjugate_part(&self, j: usize) -> usize {
        self.parts.iter().take_while(|&&p| p > j).count()
    }

    /// Dominance order test: every prefix sum of `self` is <= the matching
    /// prefix sum of `other` (both must have equal weight to be comparable).
    pub fn dominated_by(&self, other: &Partition) -> bool {
        let mut acc_self = 0usize;
        let mut acc_other = 0usize;
        let n = self.parts.len().max(other.parts.len());
        for i in 0..n {
            acc_self += self.part(i);
            acc_other += other.part(i);
            if acc_self > acc_other {
                return false;
            }
        }
        true
    }
}

impl fmt::Display for Partition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, p) in self.parts.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{p}")?;
        }
        write!(f, ")")
    }
}

/// All partitions of `k` with at most `max_length` parts, in reverse
/// lexicographic order: (k) first, the all-ones partition (when it fits)
/// last. `k = 0` yields exactly the empty partition.
pub fn partitions(k: usize, max_length: usize) -> Vec<Partition> {
    let mut out = Vec::new();
    let mut stack = Vec::new();
    descend(k, k, max_length, &mut stack, &mut out);
    out
}

fn descend(
    remaining: usize,
    max_part: usize,
    slots: usize,
    stack: &mut Vec<usize>,
    out: &mut Vec<Partition>,
) {
    if remaining == 0 {
        out.push(Partition {
            parts: stack.clone(),
        });
        return;
    }
    if slots == 0 {
        return;
    }
    // The remaining weight must fit in `slots` parts each <= next part.
    let hi = remaining.min(max_part);
    let lo = remaining.div_ceil(slots);
    for next in (lo..=hi).rev() {
        stack.push(next);
        descend(remaining - next, next, slots - 1, stack, out);
        stack.pop();
    }
}
