//! Derivative channels: the value plus every distinct mixed partial up to a
//! fixed order, indexed by sorted multi-indices over the differentiated inputs.

/// One product term of the activation pushforward for a channel:
/// `act^(order)(z) * prod(Z[block] for block in blocks)`.
#[derive(Clone, Debug)]
pub(crate) struct Term {
    pub order: usize,
    pub start: usize,
    pub len: usize,
}

/// Layout of derivative channels for `dims` differentiated inputs up to `order`.
///
/// Channel 0 is the value. Channels `1..=dims` are first derivatives, followed
/// by the upper-triangular second derivatives `(j, k)` with `j <= k`, followed
/// by sorted third-order triples.
#[derive(Clone, Debug)]
pub struct ChannelSet {
    dims: usize,
    order: usize,
    multi: Vec<Vec<usize>>,
    idx2: Vec<usize>,
    idx3: Vec<usize>,
    pub(crate) terms: Vec<Term>,
    pub(crate) term_ranges: Vec<(usize, usize)>,
    pub(crate) blocks: Vec<usize>,
}

pub(crate) const MAX_ORDER: usize = 3;

impl ChannelSet {
    pub fn new(dims: usize, order: usize) -> Self {
        assert!(order <= MAX_ORDER, "derivative order above {MAX_ORDER} is not supported");
        let mut multi: Vec<Vec<usize>> = vec![vec![]];
        let mut idx2 = vec![usize::MAX; dims * dims];
        let mut idx3 = vec![usize::MAX; dims * dims * dims];
        if order >= 1 {
            for j in 0..dims {
                multi.push(vec![j]);
            }
        }
        if order >= 2 {
            for j in 0..dims {
                for k in j..dims {
                    let c = multi.len();
                    multi.push(vec![j, k]);
                    idx2[j * dims + k] = c;
                    idx2[k * dims + j] = c;
                }
            }
        }
        if order >= 3 {
            for j in 0..dims {
                for k in j..dims {
                    for l in k..dims {
                        let c = multi.len();
                        multi.push(vec![j, k, l]);
                        for (a, b, d) in [(j, k, l), (j, l, k), (k, j, l), (k, l, j), (l, j, k), (l, k, j)] {
                            idx3[(a * dims + b) * dims + d] = c;
                        }
                    }
                }
            }
        }

        let mut set = Self {
            dims,
            order,
            multi,
            idx2,
            idx3,
            terms: Vec::new(),
            term_ranges: Vec::new(),
            blocks: Vec::new(),
        };
        set.build_terms();
        set
    }

    fn channel_of(&self, mi: &[usize]) -> usize {
        match mi.len() {
            1 => 1 + mi[0],
            2 => self.idx2[mi[0] * self.dims + mi[1]],
            3 => self.idx3[(mi[0] * self.dims + mi[1]) * self.dims + mi[2]],
            _ => unreachable!("empty or oversized block"),
        }
    }

    // Faa di Bruno: one term per set partition of the multi-index positions.
    fn build_terms(&mut self) {
        let multi = self.multi.clone();
        for mi in &multi {
            let begin = self.terms.len();
            if mi.is_empty() {
                self.terms.push(Term { order: 0, start: self.blocks.len(), len: 0 });
            } else {
                for partition in set_partitions(mi.len()) {
                    let start = self.blocks.len();
                    for block in &partition {
                        let mut sub: Vec<usize> = block.iter().map(|&p| mi[p]).collect();
                        sub.sort_unstable();
                        let ch = self.channel_of(&sub);
                        self.blocks.push(ch);
                    }
                    self.terms.push(Term { order: partition.len(), start, len: partition.len() });
                }
            }
            self.term_ranges.push((begin, self.terms.len()));
        }
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn len(&self) -> usize {
        self.multi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.multi.is_empty()
    }

    /// Channel index of `d/dx_j`.
    #[inline]
    pub fn first(&self, j: usize) -> usize {
        debug_assert!(self.order >= 1 && j < self.dims);
        1 + j
    }

    /// Channel index of `d2/dx_j dx_k` (either ordering).
    #[inline]
    pub fn second(&self, j: usize, k: usize) -> usize {
        debug_assert!(self.order >= 2);
        self.idx2[j * self.dims + k]
    }

    /// Channel index of `d3/dx_j dx_k dx_l` (any ordering).
    #[inline]
    pub fn third(&self, j: usize, k: usize, l: usize) -> usize {
        debug_assert!(self.order >= 3);
        self.idx3[(j * self.dims + k) * self.dims + l]
    }

    /// Sorted multi-index of a channel.
    pub fn multi_index(&self, channel: usize) -> &[usize] {
        &self.multi[channel]
    }
}

/// All set partitions of `{0, .., n-1}` for n <= 3.
fn set_partitions(n: usize) -> Vec<Vec<Vec<usize>>> {
    fn rec(i: usize, n: usize, current: &mut Vec<Vec<usize>>, out: &mut Vec<Vec<Vec<usize>>>) {
        if i == n {
            out.push(current.clone());
            return;
        }
        for b in 0..current.len() {
            current[b].push(i);
            rec(i + 1, n, current, out);
            current[b].pop();
        }
        current.push(vec![i]);
        rec(i + 1, n, current, out);
        current.pop();
    }
    let mut out = Vec::new();
    rec(0, n, &mut Vec::new(), &mut out);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partition_counts_are_bell_numbers() {
        assert_eq!(set_partitions(1).len(), 1);
        assert_eq!(set_partitions(2).len(), 2);
        assert_eq!(set_partitions(3).len(), 5);
    }

    #[test]
    fn channel_counts() {
        assert_eq!(ChannelSet::new(3, 0).len(), 1);
        assert_eq!(ChannelSet::new(3, 1).len(), 4);
        assert_eq!(ChannelSet::new(3, 2).len(), 10);
        assert_eq!(ChannelSet::new(2, 2).len(), 6);
        assert_eq!(ChannelSet::new(2, 3).len(), 10);
        assert_eq!(ChannelSet::new(3, 3).len(), 20);
    }

    #[test]
    fn second_and_third_lookups_are_symmetric() {
        let c = ChannelSet::new(3, 3);
        assert_eq!(c.second(0, 2), c.second(2, 0));
        assert_eq!(c.third(0, 1, 2), c.third(2, 0, 1));
        assert_eq!(c.multi_index(c.third(2, 2, 0)), &[0, 2, 2]);
    }
}
