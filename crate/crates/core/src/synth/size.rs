use rand::Rng;
use rand_distr::{Distribution, LogNormal};
use statrs::distribution::{ContinuousCDF, Normal};

use super::config::{AcceptedModel, FailedModel, RejectedModel};
use super::SynthError;

fn std_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("unit normal is valid")
}

/// Log-normal scale `σ` such that a log-normal with the given median puts
/// `share` of its mass below `x`. Requires `x < median` and `share < 0.5`.
pub fn solve_lognormal_sigma(median: f64, x: f64, share: f64) -> Result<f64, SynthError> {
    if !(x > 0.0 && x < median && share > 0.0 && share < 0.5) {
        return Err(SynthError::InvalidConfig("accepted.share_below".into()));
    }
    let n = std_normal();
    let gap = (x / median).ln();
    // P(below x) = Φ(gap / σ) rises monotonically towards 0.5 as σ grows
    let (mut lo, mut hi) = (1e-9, 1e3);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if n.cdf(gap / mid) < share {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

impl AcceptedModel {
    pub fn packets_for(&self, message: u64) -> u64 {
        self.base_packets + message.div_ceil(self.mss)
    }

    pub fn flow_bytes(&self, message: u64) -> u64 {
        message + self.overhead_per_packet * self.packets_for(message)
    }

    fn flow_bytes_f(&self, message: f64) -> f64 {
        let packets = self.base_packets as f64 + (message / self.mss as f64).ceil();
        message + self.overhead_per_packet as f64 * packets
    }

    /// Largest message size whose flow stays under `total` octets. Flow size
    /// grows strictly with message size, so `flow < total ⇔ message < this`.
    pub fn message_below(&self, total: f64) -> f64 {
        let (mut lo, mut hi) = (0.0, total.max(0.0));
        for _ in 0..100 {
            let mid = 0.5 * (lo + hi);
            if self.flow_bytes_f(mid) < total {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        lo
    }

    /// `(μ, σ)` of the log-normal message size.
    pub fn solve(&self) -> Result<(f64, f64), SynthError> {
        let median = self.message_below(self.median_bytes);
        let below = self.message_below(self.below_bytes);
        if below <= 0.0 {
            return Err(SynthError::InvalidConfig("accepted.below_bytes".into()));
        }
        Ok((
            median.ln(),
            solve_lognormal_sigma(median, below, self.share_below)?,
        ))
    }

    /// Share of accepted flows expected under `x` octets.
    pub fn share_below(&self, x: f64) -> f64 {
        match self.solve() {
            Ok((mu, sigma)) => {
                let m = self.message_below(x);
                if m <= 0.0 {
                    0.0
                } else {
                    std_normal().cdf((m.ln() - mu) / sigma)
                }
            }
            Err(_) => f64::NAN,
        }
    }
}

/// Ready-to-draw size distributions for the three classes.
#[derive(Debug, Clone)]
pub struct SizeSampler {
    failed: FailedModel,
    rejected: RejectedModel,
    accepted: AcceptedModel,
    message: LogNormal<f64>,
}

impl SizeSampler {
    pub fn new(
        failed: &FailedModel,
        rejected: &RejectedModel,
        accepted: &AcceptedModel,
    ) -> Result<Self, SynthError> {
        let (mu, sigma) = accepted.solve()?;
        let message = LogNormal::new(mu, sigma)
            .map_err(|_| SynthError::InvalidConfig("accepted.share_below".into()))?;
        Ok(SizeSampler {
            failed: failed.clone(),
            rejected: rejected.clone(),
            accepted: accepted.clone(),
            message,
        })
    }

    /// `(packets, bytes)` of a failed connection attempt.
    pub fn failed<R: Rng>(&self, rng: &mut R) -> (u64, u64) {
        if rng.random_bool(self.failed.tail) {
            let packets = rng.random_range(5..=10u64);
            (packets, rng.random_range(300..100 * packets))
        } else {
            let packets = rng.random_range(1..=4u64);
            (packets, packets * rng.random_range(40..=74u64))
        }
    }

    /// `(packets, bytes)` of a rejected session.
    pub fn rejected<R: Rng>(&self, rng: &mut R) -> (u64, u64) {
        let u: f64 = rng.random();
        if u < self.rejected.low_tail {
            (rng.random_range(2..=4u64), rng.random_range(80..=240u64))
        } else if u < self.rejected.low_tail + self.rejected.high_tail {
            (
                rng.random_range(5..=10u64),
                rng.random_range(1500..=3000u64),
            )
        } else {
            let bytes = rng.random_range(300..=1499u64);
            // envelope exchanges are many small packets: keep bytes/packet under 100
            let packets = rng.random_range(5..=10u64).max(bytes / 100 + 1);
            (packets, bytes)
        }
    }

    /// `(packets, bytes)` of an accepted session.
    pub fn accepted<R: Rng>(&self, rng: &mut R) -> (u64, u64) {
        let message = (self.message.sample(rng).round() as u64).clamp(1, 50_000_000);
        (
            self.accepted.packets_for(message),
            self.accepted.flow_bytes(message),
        )
    }
}
