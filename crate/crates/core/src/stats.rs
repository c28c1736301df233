//! Aggregates shared by the batch runners and reports.

use serde::{Deserialize, Serialize};

/// Equal-width buckets over `[lo, hi]`; values outside are clamped into the
/// first or last bucket, and `hi` itself lands in the last one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
}

impl Histogram {
    pub fn uniform(lo: f64, hi: f64, buckets: usize) -> Self {
        let buckets = buckets.max(1);
        let width = (hi - lo) / buckets as f64;
        let edges = (0..=buckets).map(|i| lo + width * i as f64).collect();
        Histogram {
            edges,
            counts: vec![0; buckets],
        }
    }

    /// Unit-width buckets `[0,1), [1,2), ... [threads-1, threads]`.
    pub fn for_threads(threads: usize) -> Self {
        Self::uniform(0.0, threads.max(1) as f64, threads.max(1))
    }

    pub fn bucket_of(&self, x: f64) -> usize {
        let buckets = self.counts.len();
        let lo = self.edges[0];
        let hi = self.edges[buckets];
        if !(x > lo) {
            return 0;
        }
        if x >= hi {
            return buckets - 1;
        }
        let width = (hi - lo) / buckets as f64;
        (((x - lo) / width).floor() as usize).min(buckets - 1)
    }

    pub fn add(&mut self, x: f64) {
        let b = self.bucket_of(x);
        self.counts[b] += 1;
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }
}

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// `sum(serial) / sum(makespan)`.
pub fn overall_speedup(pairs: impl IntoIterator<Item = (u64, u64)>) -> f64 {
    let (s, m) = pairs
        .into_iter()
        .fold((0u128, 0u128), |(s, m), (a, b)| (s + a as u128, m + b as u128));
    if m == 0 {
        1.0
    } else {
        s as f64 / m as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn buckets_and_clamping() {
        let mut h = Histogram::for_threads(4);
        assert_eq!(h.edges, vec![0.0, 1.0, 2.0, 3.0, 4.0]);
        for x in [0.5, 1.0, 3.99, 4.0, 9.0, -1.0] {
            h.add(x);
        }
        assert_eq!(h.counts, vec![2, 1, 0, 3]);
        assert_eq!(h.total(), 6);
    }

    #[test]
    fn overall_is_ratio_of_sums() {
        assert!((overall_speedup([(100, 10), (100, 100)]) - 200.0 / 110.0).abs() < 1e-12);
        assert_eq!(overall_speedup(std::iter::empty()), 1.0);
        assert_eq!(mean(&[10.0, 1.0]), 5.5);
    }
}
