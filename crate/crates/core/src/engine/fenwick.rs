//! Binary-indexed tree over per-individual rates, for O(log N) weighted
//! selection and O(log N) incremental updates.

#[derive(Debug, Clone)]
pub struct Fenwick {
    tree: Vec<f64>, // 1-based
    n: usize,
}

impl Fenwick {
    pub fn new(n: usize) -> Self {
        Fenwick {
            tree: vec![0.0; n + 1],
            n,
        }
    }

    /// Add `delta` to slot `i`.
    #[inline]
    pub fn add(&mut self, i: usize, delta: f64) {
        let mut k = i + 1;
        while k <= self.n {
            self.tree[k] += delta;
            k += k & k.wrapping_neg();
        }
    }

    /// Sum of slots `0..=i`.
    pub fn prefix(&self, i: usize) -> f64 {
        let mut k = i + 1;
        let mut acc = 0.0;
        while k > 0 {
            acc += self.tree[k];
            k -= k & k.wrapping_neg();
        }
        acc
    }

    /// Sum of all slots.
    pub fn total(&self) -> f64 {
        self.prefix(self.n.saturating_sub(1))
    }

    /// Smallest index whose prefix sum exceeds `target` (weighted pick).
    /// `target` must lie in `[0, total())`; out-of-range targets clamp to
    /// the last slot.
    pub fn find(&self, mut target: f64) -> usize {
        let mut pos = 0usize;
        let mut step = self.n.next_power_of_two();
        while step > 0 {
            let next = pos + step;
            if next <= self.n && self.tree[next] <= target {
                target -= self.tree[next];
                pos = next;
            }
            step >>= 1;
        }
        pos.min(self.n - 1)
    }

    /// Rebuild exactly from a slice of values, discarding accumulated
    /// floating-point drift.
    pub fn rebuild_from(&mut self, values: &[f64]) {
        assert_eq!(values.len(), self.n);
        for v in self.tree.iter_mut() {
            *v = 0.0;
        }
        for (i, &v) in values.iter().enumerate() {
            // Direct O(n log n) build; rebuilds are infrequent.
            if v != 0.0 {
                self.add(i, v);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn prefix_and_total() {
        let mut f = Fenwick::new(5);
        for (i, v) in [1.0, 2.0, 3.0, 4.0, 5.0].iter().enumerate() {
            f.add(i, *v);
        }
        assert_eq!(f.prefix(0), 1.0);
        assert_eq!(f.prefix(2), 6.0);
        assert_eq!(f.total(), 15.0);
    }

    #[test]
    fn weighted_find() {
        let mut f = Fenwick::new(4);
        f.add(0, 0.0);
        f.add(1, 2.0);
        f.add(2, 0.0);
        f.add(3, 1.0);
        assert_eq!(f.find(0.0), 1);
        assert_eq!(f.find(1.9), 1);
        assert_eq!(f.find(2.0), 3);
        assert_eq!(f.find(2.9), 3);
        // Out-of-range target clamps.
        assert_eq!(f.find(100.0), 3);
    }

    #[test]
    fn rebuild_matches_incremental() {
        let mut inc = Fenwick::new(8);
        let values: Vec<f64> = (0..8).map(|i| (i as f64) * 0.37).collect();
        for (i, v) in values.iter().enumerate() {
            inc.add(i, *v);
        }
        let mut fresh = Fenwick::new(8);
        fresh.rebuild_from(&values);
        for i in 0..8 {
            assert!((inc.prefix(i) - fresh.prefix(i)).abs() < 1e-15);
        }
    }
}
