//! Binary indexed trees over slot occupancy and jump weights.

/// Occupancy counts over a fixed array of slots.
#[derive(Debug, Clone)]
pub(crate) struct CountTree {
    tree: Vec<u32>,
}

impl CountTree {
    /// Builds the tree in `O(len)` from a 0/1 occupancy vector.
    pub fn from_occupancy(occupied: &[bool]) -> Self {
        let n = occupied.len();
        let mut tree = vec![0u32; n + 1];
        for (i, &o) in occupied.iter().enumerate() {
            tree[i + 1] += o as u32;
            let parent = (i + 1) + lowbit(i + 1);
            if parent <= n {
                tree[parent] += tree[i + 1];
            }
        }
        CountTree { tree }
    }

    pub fn add(&mut self, slot: usize, delta: i32) {
        let mut i = slot + 1;
        while i < self.tree.len() {
            self.tree[i] = self.tree[i].wrapping_add_signed(delta);
            i += lowbit(i);
        }
    }

    /// Number of occupied slots in `[0, slot]`.
    pub fn prefix(&self, slot: usize) -> usize {
        let mut i = slot + 1;
        let mut sum = 0u32;
        while i > 0 {
            sum += self.tree[i];
            i -= lowbit(i);
        }
        sum as usize
    }

    /// Slot holding the `k`-th occupied entry (1-based `k`).
    pub fn select(&self, mut k: usize) -> usize {
        let n = self.tree.len() - 1;
        let mut pos = 0usize;
        let mut step = highest_power_of_two(n);
        while step > 0 {
            let next = pos + step;
            if next <= n && (self.tree[next] as usize) < k {
                pos = next;
                k -= self.tree[next] as usize;
            }
            step >>= 1;
        }
        pos
    }
}

/// Static weights with cumulative search.
#[derive(Debug, Clone)]
pub(crate) struct WeightTree {
    tree: Vec<f64>,
    total: f64,
}

impl WeightTree {
    pub fn new(weights: &[f64]) -> Self {
        let n = weights.len();
        let mut tree = vec![0.0; n + 1];
        for (i, &w) in weights.iter().enumerate() {
            tree[i + 1] += w;
            let parent = (i + 1) + lowbit(i + 1);
            if parent <= n {
                tree[parent] += tree[i + 1];
            }
        }
        let total = crate::mixture::compensated_sum(weights.iter().copied());
        WeightTree { tree, total }
    }

    pub fn total(&self) -> f64 {
        self.total
    }

    /// Smallest index whose cumulative weight exceeds `u`.
    pub fn find(&self, mut u: f64) -> usize {
        let n = self.tree.len() - 1;
        let mut pos = 0usize;
        let mut step = highest_power_of_two(n);
        while step > 0 {
            let next = pos + step;
            if next <= n && self.tree[next] <= u {
                pos = next;
                u -= self.tree[next];
            }
            step >>= 1;
        }
        pos
    }
}

fn lowbit(i: usize) -> usize {
    i & i.wrapping_neg()
}

fn highest_power_of_two(n: usize) -> usize {
    if n == 0 {
        0
    } else {
        1 << (usize::BITS - 1 - n.leading_zeros())
    }
}
