//! Sets of line indices: a bitmap when the index range is compact, a sorted
//! vector otherwise.

const DENSE_MIN_SPAN: u64 = 1 << 14;
const DENSE_MAX_SPAN: u64 = 1 << 28;

#[derive(Debug, Clone, PartialEq, Eq)]
enum Repr {
    Dense { origin: i64, words: Vec<u64> },
    Sparse(Vec<i64>),
}

/// Deduplicated set of line indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LineSet {
    repr: Repr,
    count: u64,
}

impl LineSet {
    pub fn len(&self) -> u64 {
        self.count
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    pub fn contains(&self, line: i64) -> bool {
        match &self.repr {
            Repr::Dense { origin, words } => {
                if line < *origin {
                    return false;
                }
                let i = (line - origin) as u64;
                words
                    .get((i >> 6) as usize)
                    .is_some_and(|w| w & (1u64 << (i & 63)) != 0)
            }
            Repr::Sparse(v) => v.binary_search(&line).is_ok(),
        }
    }

    /// Sorted line indices.
    pub fn to_vec(&self) -> Vec<i64> {
        match &self.repr {
            Repr::Sparse(v) => v.clone(),
            Repr::Dense { origin, words } => {
                let mut out = Vec::with_capacity(self.count as usize);
                for (wi, &w) in words.iter().enumerate() {
                    let mut w = w;
                    while w != 0 {
                        let bit = w.trailing_zeros() as i64;
                        out.push(origin + wi as i64 * 64 + bit);
                        w &= w - 1;
                    }
                }
                out
            }
        }
    }

    pub fn intersection_len(&self, other: &LineSet) -> u64 {
        match (&self.repr, &other.repr) {
            (Repr::Dense { origin: oa, words: wa }, Repr::Dense { origin: ob, words: wb }) => {
                // Both origins are multiples of 64, so words line up.
                let start = (*oa).max(*ob);
                let end_a = oa + wa.len() as i64 * 64;
                let end_b = ob + wb.len() as i64 * 64;
                let end = end_a.min(end_b);
                if start >= end {
                    return 0;
                }
                let ia = ((start - oa) / 64) as usize;
                let ib = ((start - ob) / 64) as usize;
                let n = ((end - start) / 64) as usize;
                wa[ia..ia + n]
                    .iter()
                    .zip(&wb[ib..ib + n])
                    .map(|(a, b)| (a & b).count_ones() as u64)
                    .sum()
            }
            (Repr::Sparse(v), _) => v.iter().filter(|&&l| other.contains(l)).count() as u64,
            (_, Repr::Sparse(v)) => v.iter().filter(|&&l| self.contains(l)).count() as u64,
        }
    }
}

pub(crate) struct Builder {
    repr: Repr,
    last: Option<i64>,
}

impl Builder {
    pub(crate) fn sparse() -> Self {
        Builder {
            repr: Repr::Sparse(Vec::new()),
            last: None,
        }
    }

    /// Builder for lines known to lie in `lo..=hi`, expecting about
    /// `inserts` insertions.
    pub(crate) fn for_range(lo: i64, hi: i64, inserts: u64) -> Self {
        let span = (hi as i128 - lo as i128 + 1) as u128;
        let budget = DENSE_MIN_SPAN.max(inserts.saturating_mul(16)).min(DENSE_MAX_SPAN);
        if span <= budget as u128 {
            let origin = lo - lo.rem_euclid(64);
            let words = ((hi as i128 - origin as i128) / 64 + 1) as usize;
            Builder {
                repr: Repr::Dense {
                    origin,
                    words: vec![0; words],
                },
                last: None,
            }
        } else {
            Builder::sparse()
        }
    }

    #[inline]
    pub(crate) fn insert(&mut self, line: i64) {
        if self.last == Some(line) {
            return;
        }
        self.last = Some(line);
        match &mut self.repr {
            Repr::Dense { origin, words } => {
                let i = (line - *origin) as u64;
                words[(i >> 6) as usize] |= 1u64 << (i & 63);
            }
            Repr::Sparse(v) => v.push(line),
        }
    }

    pub(crate) fn finish(self) -> LineSet {
        match self.repr {
            Repr::Dense { origin, words } => {
                let count = words.iter().map(|w| w.count_ones() as u64).sum();
                LineSet {
                    repr: Repr::Dense { origin, words },
                    count,
                }
            }
            Repr::Sparse(mut v) => {
                v.sort_unstable();
                v.dedup();
                LineSet {
                    count: v.len() as u64,
                    repr: Repr::Sparse(v),
                }
            }
        }
    }
}
