//! Fluid fair-share bandwidth on one link.
//!
//! While `n >= 1` transfers are active each drains at `capacity / n` bits per
//! second, so the link always runs at full capacity when busy. Shares are
//! recomputed whenever a transfer starts or finishes.

use crate::model::LinkSpec;

/// Remaining bits at or below this count as drained; absorbs rounding.
const DRAINED_BITS: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct ActiveTransfer<T> {
    pub tag: T,
    pub size_bits: f64,
    pub remaining_bits: f64,
}

#[derive(Debug, Clone)]
pub struct LinkState<T> {
    capacity_bps: f64,
    active: Vec<ActiveTransfer<T>>,
    last_update: f64,
    /// Bumped on every recompute; completion events carry the version they
    /// were scheduled under and are dropped if it has moved on.
    version: u64,
}

impl<T: Clone> LinkState<T> {
    pub fn new(capacity_bps: f64) -> Self {
        LinkState {
            capacity_bps,
            active: Vec::new(),
            last_update: 0.0,
            version: 0,
        }
    }

    pub fn from_spec(spec: &LinkSpec) -> Self {
        Self::new(spec.capacity_bps)
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn active(&self) -> &[ActiveTransfer<T>] {
        &self.active
    }

    pub fn is_idle(&self) -> bool {
        self.active.is_empty()
    }

    /// Per-transfer rate under the current share.
    pub fn share_bps(&self) -> f64 {
        if self.active.is_empty() {
            0.0
        } else {
            self.capacity_bps / self.active.len() as f64
        }
    }

    /// Drains every active transfer at the fair-share rate since the last
    /// update, then returns the time the earliest transfer completes under
    /// the current shares (`None` when idle). Bumps the version.
    pub fn recompute_shares(&mut self, now: f64) -> Option<f64> {
        debug_assert!(now >= self.last_update, "time went backwards");
        let dt = now - self.last_update;
        if !self.active.is_empty() && dt > 0.0 {
            let rate = self.share_bps();
            for t in &mut self.active {
                t.remaining_bits = if rate.is_infinite() {
                    0.0
                } else {
                    (t.remaining_bits - rate * dt).max(0.0)
                };
            }
        }
        self.last_update = now;
        self.version += 1;
        self.next_completion()
    }

    fn next_completion(&self) -> Option<f64> {
        let min = self
            .active
            .iter()
            .map(|t| t.remaining_bits)
            .min_by(f64::total_cmp)?;
        let rate = self.share_bps();
        if min <= DRAINED_BITS || rate.is_infinite() {
            return Some(self.last_update);
        }
        Some(self.last_update + min / rate)
    }

    /// Adds a transfer at `now` and returns the next completion time.
    pub fn start(&mut self, now: f64, tag: T, size_bits: f64) -> Option<f64> {
        self.recompute_shares(now);
        self.active.push(ActiveTransfer {
            tag,
            size_bits,
            remaining_bits: size_bits,
        });
        self.version += 1;
        self.next_completion()
    }

    /// Removes the transfers that have drained by `now`, in start order. At
    /// least one transfer (the one with the least remaining) is removed when
    /// any is active, so a completion event always makes progress.
    pub fn finish_drained(&mut self, now: f64) -> (Vec<T>, Option<f64>) {
        self.recompute_shares(now);
        if self.active.is_empty() {
            return (Vec::new(), None);
        }
        let min = self
            .active
            .iter()
            .map(|t| t.remaining_bits)
            .min_by(f64::total_cmp)
            .expect("non-empty");
        let cutoff = min.max(DRAINED_BITS);
        let mut done = Vec::new();
        self.active.retain(|t| {
            if t.remaining_bits <= cutoff {
                done.push(t.tag.clone());
                false
            } else {
                true
            }
        });
        self.version += 1;
        (done, self.next_completion())
    }
}
