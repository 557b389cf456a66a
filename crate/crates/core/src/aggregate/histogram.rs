use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

pub const BIN_COUNT: usize = 64;
const LOW_EDGE: f64 = 32.0;
const HIGH_EDGE: f64 = 1_048_576.0;
/// Edges that must be exact so CDF values at these points carry no binning error.
pub const PINNED_EDGES: [u64; 2] = [300, 1500];

/// Bin edges: 65 log-spaced points from 32 B to 1 MiB, rounded to whole
/// octets, with the nearest points moved onto 300 and 1500.
pub fn edges() -> &'static [u64; BIN_COUNT + 1] {
    static EDGES: OnceLock<[u64; BIN_COUNT + 1]> = OnceLock::new();
    EDGES.get_or_init(|| {
        let ratio = (HIGH_EDGE / LOW_EDGE).ln() / BIN_COUNT as f64;
        let raw: Vec<f64> = (0..=BIN_COUNT)
            .map(|i| LOW_EDGE * (ratio * i as f64).exp())
            .collect();
        let mut out = [0u64; BIN_COUNT + 1];
        for (o, r) in out.iter_mut().zip(&raw) {
            *o = r.round() as u64;
        }
        for pin in PINNED_EDGES {
            let nearest = raw
                .iter()
                .enumerate()
                .min_by(|a, b| {
                    (a.1 - pin as f64)
                        .abs()
                        .total_cmp(&(b.1 - pin as f64).abs())
                })
                .map(|(i, _)| i)
                .expect("edges are non-empty");
            out[nearest] = pin;
        }
        out
    })
}

/// Fixed-bin histogram of flow sizes. Bin `i` covers `[edges[i], edges[i+1])`,
/// except that the first bin also takes everything below 32 B and the last
/// everything from its lower edge up.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ByteHistogram {
    counts: Vec<u64>,
}

impl Default for ByteHistogram {
    fn default() -> Self {
        ByteHistogram {
            counts: vec![0; BIN_COUNT],
        }
    }
}

impl ByteHistogram {
    pub fn bin_of(bytes: u64) -> usize {
        let e = edges();
        // number of edges <= bytes, minus the lower edge of bin 0
        let upto = e.partition_point(|&edge| edge <= bytes);
        upto.saturating_sub(1).min(BIN_COUNT - 1)
    }

    pub fn add(&mut self, bytes: u64) {
        self.counts[Self::bin_of(bytes)] += 1;
    }

    pub fn merge(&mut self, other: &ByteHistogram) {
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    /// Number of samples in bins lying wholly below `x`. Exact when `x` is a
    /// bin edge; otherwise an undercount by at most one bin.
    pub fn count_below(&self, x: u64) -> u64 {
        let e = edges();
        self.counts
            .iter()
            .enumerate()
            .take_while(|(i, _)| e[i + 1] <= x && *i + 1 < BIN_COUNT)
            .map(|(_, c)| c)
            .sum()
    }

    /// `(edge, fraction of samples below edge)` for each interior edge.
    pub fn cdf_points(&self) -> Vec<(u64, f64)> {
        let total = self.total();
        if total == 0 {
            return Vec::new();
        }
        let e = edges();
        let mut acc = 0;
        (0..BIN_COUNT - 1)
            .map(|i| {
                acc += self.counts[i];
                (e[i + 1], acc as f64 / total as f64)
            })
            .collect()
    }
}
