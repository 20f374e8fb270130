//! Static kd-tree for nearest-neighbour lookups in point clouds.

#[derive(Clone, Debug)]
pub struct KdTree {
    dims: usize,
    points: Vec<[f64; 3]>,
    /// Implicit balanced tree: the median of every index range is its node.
    order: Vec<usize>,
}

fn dist2(a: &[f64; 3], b: &[f64; 3], dims: usize) -> f64 {
    (0..dims).map(|d| (a[d] - b[d]).powi(2)).sum()
}

impl KdTree {
    pub fn build(points: &[[f64; 3]], dims: usize) -> Self {
        let dims = dims.clamp(1, 3);
        let mut order: Vec<usize> = (0..points.len()).collect();
        fn split(order: &mut [usize], pts: &[[f64; 3]], dims: usize, depth: usize) {
            if order.len() <= 1 {
                return;
            }
            let axis = depth % dims;
            let mid = order.len() / 2;
            order.select_nth_unstable_by(mid, |&a, &b| pts[a][axis].total_cmp(&pts[b][axis]).then(a.cmp(&b)));
            let (lo, hi) = order.split_at_mut(mid);
            split(lo, pts, dims, depth + 1);
            split(&mut hi[1..], pts, dims, depth + 1);
        }
        split(&mut order, points, dims, 0);
        Self { dims, points: points.to_vec(), order }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Index of the nearest point and its Euclidean distance; ties go to the
    /// lower index.
    pub fn nearest(&self, q: &[f64; 3]) -> Option<(usize, f64)> {
        if self.points.is_empty() {
            return None;
        }
        let mut best = (usize::MAX, f64::INFINITY);
        self.search(0, self.order.len(), 0, q, &mut best);
        Some((best.0, best.1.sqrt()))
    }

    fn search(&self, lo: usize, hi: usize, depth: usize, q: &[f64; 3], best: &mut (usize, f64)) {
        if lo >= hi {
            return;
        }
        let mid = lo + (hi - lo) / 2;
        let idx = self.order[mid];
        let p = &self.points[idx];
        let d = dist2(p, q, self.dims);
        if d < best.1 || (d == best.1 && idx < best.0) {
            *best = (idx, d);
        }
        let axis = depth % self.dims;
        let delta = q[axis] - p[axis];
        let (near, far) = if delta < 0.0 { ((lo, mid), (mid + 1, hi)) } else { ((mid + 1, hi), (lo, mid)) };
        self.search(near.0, near.1, depth + 1, q, best);
        if delta * delta <= best.1 {
            self.search(far.0, far.1, depth + 1, q, best);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn brute(points: &[[f64; 3]], q: &[f64; 3], dims: usize) -> (usize, f64) {
        let mut best = (usize::MAX, f64::INFINITY);
        for (i, p) in points.iter().enumerate() {
            let d = dist2(p, q, dims);
            if d < best.1 {
                best = (i, d);
            }
        }
        (best.0, best.1.sqrt())
    }

    #[test]
    fn empty_tree() {
        assert!(KdTree::build(&[], 3).nearest(&[0.0; 3]).is_none());
    }

    #[test]
    fn exact_hit() {
        let pts = [[0.0, 0.0, 0.0], [1.0, 2.0, 3.0], [-1.0, 0.5, 0.0]];
        let t = KdTree::build(&pts, 3);
        for (i, p) in pts.iter().enumerate() {
            assert_eq!(t.nearest(p), Some((i, 0.0)));
        }
    }

    proptest! {
        #[test]
        fn matches_brute_force(
            pts in proptest::collection::vec(proptest::array::uniform3(-1.0f64..1.0), 1..200),
            qs in proptest::collection::vec(proptest::array::uniform3(-1.5f64..1.5), 1..20),
            dims in 2usize..=3,
        ) {
            let t = KdTree::build(&pts, dims);
            for q in &qs {
                let (i, d) = t.nearest(q).unwrap();
                let (_, bd) = brute(&pts, q, dims);
                prop_assert!((d - bd).abs() <= 1e-15, "{} vs {}", d, bd);
                prop_assert!((dist2(&pts[i], q, dims).sqrt() - bd).abs() <= 1e-15);
            }
        }
    }
}
