use rand::{Rng, RngCore};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;

use crate::rng::{replica_stream, stream};

/// One clock ring: at `time`, site `site` rings with uniform mark `mark`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ring {
    pub time: f64,
    pub site: usize,
    pub mark: f64,
}

#[derive(Debug, Clone, Copy)]
struct Raw {
    time: f64,
    label: u64,
    mark: f64,
    rate: f64,
}

/// Superposed Poisson clocks: a single exponential clock of the total rate with a
/// uniform label picking the site (or slot) and a uniform mark per ring.
///
/// A draw that lands past a horizon is kept pending, so splitting a run at
/// intermediate horizons never changes the sequence.
#[derive(Debug, Clone)]
pub struct EventSource {
    rng: ChaCha8Rng,
    time: f64,
    pending: Option<Raw>,
    drawn: u64,
}

/// Uniform index in `0..m` from a 64-bit label.
#[inline]
fn scale(label: u64, m: usize) -> usize {
    ((label as u128 * m as u128) >> 64) as usize
}

impl EventSource {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        Self::from_rng(stream(seed, stream_id))
    }

    /// Source for replica `r` of a run keyed by `seed`.
    pub fn for_replica(seed: u64, replica: u64) -> Self {
        Self::from_rng(replica_stream(seed, replica))
    }

    pub fn from_rng(rng: ChaCha8Rng) -> Self {
        EventSource { rng, time: 0.0, pending: None, drawn: 0 }
    }

    /// Current time: the last consumed ring or the last horizon reached, whichever is later.
    pub fn time(&self) -> f64 {
        self.time
    }

    /// Number of consumed rings, including rejected thinning proposals.
    pub fn drawn(&self) -> u64 {
        self.drawn
    }

    fn raw_until(&mut self, rate: f64, horizon: f64) -> Option<Raw> {
        let ev = match self.pending.take() {
            Some(ev) => {
                debug_assert!(ev.rate == rate, "a source must keep one total rate");
                ev
            }
            None => {
                let dt: f64 = self.rng.sample::<f64, _>(Exp1) / rate;
                let label = self.rng.next_u64();
                let mark = self.rng.random::<f64>();
                Raw { time: self.time + dt, label, mark, rate }
            }
        };
        if ev.time > horizon {
            self.pending = Some(ev);
            self.time = self.time.max(horizon);
            return None;
        }
        self.time = ev.time;
        self.drawn += 1;
        Some(ev)
    }

    /// Next ring of `n` rate-1 site clocks, if it occurs by `horizon`.
    pub fn next_ring_until(&mut self, n: usize, horizon: f64) -> Option<Ring> {
        let ev = self.raw_until(n as f64, horizon)?;
        Some(Ring { time: ev.time, site: 1 + scale(ev.label, n), mark: ev.mark })
    }

    /// Next ring among sites `lo..=hi` only.
    pub fn next_ring_in(&mut self, lo: usize, hi: usize, horizon: f64) -> Option<Ring> {
        let m = hi - lo + 1;
        let ev = self.raw_until(m as f64, horizon)?;
        Some(Ring { time: ev.time, site: lo + scale(ev.label, m), mark: ev.mark })
    }

    /// Next proposal of `slots` rate-1 clocks: `(time, slot, mark)`.
    pub fn next_slot_until(&mut self, slots: usize, horizon: f64) -> Option<(f64, usize, f64)> {
        let ev = self.raw_until(slots as f64, horizon)?;
        Some((ev.time, scale(ev.label, slots), ev.mark))
    }
}
