//! Exact equilibrium `pi(xi) ∝ exp(-sum of V over occupied sites)` by log-space dynamic programming.

use rand::Rng;

use crate::environment::PotentialProfile;
use crate::error::{Error, Result};
use crate::state::Configuration;

#[inline]
pub(crate) fn logsumexp2(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// Prefix/suffix partition functions of `j` particles placed with weights `exp(log_w)`.
#[derive(Debug, Clone)]
struct Tables {
    n: usize,
    k: usize,
    /// `prefix[m * (k+1) + j]`: sites `1..=m`.
    prefix: Vec<f64>,
    /// `suffix[m * (k+1) + j]`: sites `m..=n`, with `m = n + 1` the empty suffix.
    suffix: Vec<f64>,
}

impl Tables {
    fn new(log_w: &[f64], k: usize) -> Self {
        let n = log_w.len();
        let w = k + 1;
        let mut prefix = vec![f64::NEG_INFINITY; (n + 1) * w];
        prefix[0] = 0.0;
        for m in 1..=n {
            prefix[m * w] = 0.0;
            for j in 1..=k.min(m) {
                prefix[m * w + j] = logsumexp2(
                    prefix[(m - 1) * w + j],
                    log_w[m - 1] + prefix[(m - 1) * w + j - 1],
                );
            }
        }
        let mut suffix = vec![f64::NEG_INFINITY; (n + 2) * w];
        suffix[(n + 1) * w] = 0.0;
        for m in (1..=n).rev() {
            suffix[m * w] = 0.0;
            for j in 1..=k.min(n + 1 - m) {
                suffix[m * w + j] = logsumexp2(
                    suffix[(m + 1) * w + j],
                    log_w[m - 1] + suffix[(m + 1) * w + j - 1],
                );
            }
        }
        Tables { n, k, prefix, suffix }
    }

    #[inline]
    fn pre(&self, m: usize, j: usize) -> f64 {
        self.prefix[m * (self.k + 1) + j]
    }

    #[inline]
    fn suf(&self, m: usize, j: usize) -> f64 {
        self.suffix[m * (self.k + 1) + j]
    }

    fn log_z(&self) -> f64 {
        self.pre(self.n, self.k)
    }
}

/// Equilibrium of `k` particles on a segment with site weights `exp(-V(x))`.
#[derive(Debug, Clone)]
pub struct EquilibriumTable {
    log_w: Vec<f64>,
    t: Tables,
}

impl EquilibriumTable {
    pub fn build(profile: &PotentialProfile, k: usize) -> Result<Self> {
        let n = profile.n();
        if k < 1 || k + 1 > n {
            return Err(Error::BadK { n, k });
        }
        Ok(Self::from_log_weights(profile.v_values().iter().map(|v| -v).collect(), k))
    }

    /// Table for arbitrary per-site log-weights and any `0 <= k <= n`.
    pub fn from_log_weights(log_w: Vec<f64>, k: usize) -> Self {
        assert!(k <= log_w.len());
        let t = Tables::new(&log_w, k);
        EquilibriumTable { log_w, t }
    }

    pub fn n(&self) -> usize {
        self.t.n
    }

    pub fn k(&self) -> usize {
        self.t.k
    }

    /// `log Z` over `j` particles on sites `1..=m`.
    pub fn log_z_prefix(&self, m: usize, j: usize) -> f64 {
        if j > self.t.k {
            return f64::NEG_INFINITY;
        }
        self.t.pre(m, j)
    }

    pub fn log_z(&self) -> f64 {
        self.t.log_z()
    }

    /// `-V(x)` for a 1-indexed site.
    pub fn log_weight(&self, x: usize) -> f64 {
        self.log_w[x - 1]
    }

    fn check(&self, xi: &Configuration) -> Result<()> {
        if xi.n() != self.n() || xi.k() != self.k() {
            return Err(Error::ShapeMismatch(format!(
                "configuration (n={}, k={}) vs table (n={}, k={})",
                xi.n(),
                xi.k(),
                self.n(),
                self.k()
            )));
        }
        Ok(())
    }

    pub fn log_prob(&self, xi: &Configuration) -> Result<f64> {
        self.check(xi)?;
        let s: f64 = xi.positions().iter().map(|&x| self.log_w[x - 1]).sum();
        Ok(s - self.log_z())
    }

    pub fn prob(&self, xi: &Configuration) -> Result<f64> {
        Ok(self.log_prob(xi)?.exp())
    }

    /// Exact draw, scanning sites from `n` down to 1.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Configuration {
        let mut j = self.k();
        let mut pos = Vec::with_capacity(j);
        for m in (1..=self.n()).rev() {
            if j == 0 {
                break;
            }
            if j == m {
                pos.extend((1..=m).rev());
                break;
            }
            let p = (self.log_w[m - 1] + self.t.pre(m - 1, j - 1) - self.t.pre(m, j)).exp();
            if rng.random::<f64>() < p {
                pos.push(m);
                j -= 1;
            }
        }
        pos.reverse();
        Configuration::from_positions(self.n(), pos).expect("sampler yields a valid configuration")
    }

    /// Occupation probability of every site (index `x - 1`).
    pub fn marginals(&self) -> Vec<f64> {
        let (n, k, lz) = (self.n(), self.k(), self.log_z());
        (1..=n)
            .map(|x| {
                let mut acc = f64::NEG_INFINITY;
                for j in 0..k {
                    acc = logsumexp2(acc, self.t.pre(x - 1, j) + self.t.suf(x + 1, k - 1 - j));
                }
                (acc + self.log_w[x - 1] - lz).exp()
            })
            .collect()
    }

    /// Law of the leftmost particle (index `x - 1`).
    pub fn leftmost_law(&self) -> Vec<f64> {
        let (k, lz) = (self.k(), self.log_z());
        (1..=self.n())
            .map(|x| (self.log_w[x - 1] + self.t.suf(x + 1, k - 1) - lz).exp())
            .collect()
    }

    /// Law of the rightmost empty site (index `y - 1`).
    pub fn rightmost_empty_law(&self) -> Vec<f64> {
        let (n, k, lz) = (self.n(), self.k(), self.log_z());
        let mut tail = 0.0;
        let mut out = vec![0.0; n];
        for y in (1..=n).rev() {
            let full = n - y;
            if full <= k && k - full < y {
                out[y - 1] = (self.t.pre(y - 1, k - full) + tail - lz).exp();
            }
            tail += self.log_w[y - 1];
        }
        out
    }

    /// Free window and forced-full block of the event `A_r`, plus free particle count.
    fn a_r_layout(&self, r: usize) -> (usize, usize, usize) {
        let (n, k) = (self.n() as i64, self.k() as i64);
        let r = r as i64;
        let lo = (n - k - r + 1).max(1);
        let full_from = (n - k + r + 1).min(n + 1);
        let forced = n + 1 - full_from;
        (lo as usize, full_from as usize, (k - forced) as usize)
    }

    fn forced_block(&self, full_from: usize) -> f64 {
        (full_from..=self.n()).map(|x| self.log_w[x - 1]).sum()
    }

    /// `pi(A_r)` by a window-restricted table.
    pub fn prob_a_r_dp(&self, r: usize) -> f64 {
        let (lo, full_from, free) = self.a_r_layout(r);
        let window = &self.log_w[lo - 1..full_from - 1];
        if free > window.len() {
            return 0.0;
        }
        let t = Tables::new(window, free);
        (t.log_z() + self.forced_block(full_from) - self.log_z()).exp()
    }

    /// `pi(A_r)` by summing over all fillings of the boundary window; window at most 20 sites.
    pub fn prob_a_r_direct(&self, r: usize) -> Option<f64> {
        let (lo, full_from, free) = self.a_r_layout(r);
        let window = &self.log_w[lo - 1..full_from - 1];
        if window.len() > 20 {
            return None;
        }
        if free > window.len() {
            return Some(0.0);
        }
        let terms: Vec<f64> = crate::state::enumerate(window.len(), free)
            .map(|p| p.iter().map(|&i| window[i - 1]).sum())
            .collect();
        Some((log_sum(&terms) + self.forced_block(full_from) - self.log_z()).exp())
    }

    /// `pi(A_r)`: direct summation on short windows, restricted table otherwise.
    pub fn prob_a_r(&self, r: usize) -> f64 {
        self.prob_a_r_direct(r).unwrap_or_else(|| self.prob_a_r_dp(r))
    }

    /// Exact mean and variance of `m(xi)`.
    pub fn mean_var_m(&self) -> (f64, f64) {
        let (n, k) = (self.n(), self.k());
        let w = k + 1;
        let mut mean = vec![0.0; w];
        let mut var = vec![0.0; w];
        for m in 1..=n {
            let mf = m as f64;
            for j in (1..=k.min(m)).rev() {
                let p = if j == m {
                    1.0
                } else {
                    (self.log_w[m - 1] + self.t.pre(m - 1, j - 1) - self.t.pre(m, j)).exp()
                };
                let (m0, v0) = (mean[j], var[j]);
                let (m1, v1) = (mean[j - 1] + mf, var[j - 1]);
                let d = m1 - m0;
                mean[j] = (1.0 - p) * m0 + p * m1;
                var[j] = (1.0 - p) * v0 + p * v1 + p * (1.0 - p) * d * d;
            }
        }
        (mean[k], var[k])
    }

    /// Exact law of `m(xi)`, indexed by the value of `m`.
    pub fn m_distribution(&self) -> Result<Vec<f64>> {
        let (n, k) = (self.n(), self.k());
        let m_max = k * (2 * n - k + 1) / 2;
        let work = n as u128 * (k as u128 + 1) * (m_max as u128 + 1);
        if work > 2_000_000_000 {
            return Err(Error::TooLarge { states: work, limit: 2_000_000_000 });
        }
        let width = m_max + 1;
        // mass[j][s]: j particles still to place, s accumulated
        let mut mass = vec![0.0; (k + 1) * width];
        mass[k * width] = 1.0;
        for site in (1..=n).rev() {
            for j in 1..=k.min(site) {
                let p = if j == site {
                    1.0
                } else {
                    (self.log_w[site - 1] + self.t.pre(site - 1, j - 1) - self.t.pre(site, j)).exp()
                };
                for s in 0..width - site {
                    let a = mass[j * width + s];
                    if a == 0.0 {
                        continue;
                    }
                    mass[j * width + s] = (1.0 - p) * a;
                    mass[(j - 1) * width + s + site] += p * a;
                }
            }
        }
        Ok(mass[..width].to_vec())
    }

    /// Median of `m` under equilibrium (smallest value with CDF at least 1/2).
    pub fn median_m(&self) -> Result<u64> {
        let dist = self.m_distribution()?;
        let mut acc = 0.0;
        for (s, p) in dist.iter().enumerate() {
            acc += p;
            if acc >= 0.5 {
                return Ok(s as u64);
            }
        }
        Ok((dist.len() - 1) as u64)
    }
}

/// Compensated `log sum exp` of a list of log-terms.
pub(crate) fn log_sum(terms: &[f64]) -> f64 {
    let m = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    let mut sum = 0.0f64;
    let mut c = 0.0f64;
    for t in terms {
        let x = (t - m).exp();
        let s = sum + x;
        c += if sum.abs() >= x.abs() { (sum - s) + x } else { (x - s) + sum };
        sum = s;
    }
    m + (sum + c).ln()
}

/// Equilibrium mass of the right-packed state of a window `[a, b]` holding `k` particles.
pub fn prob_max_window(profile: &PotentialProfile, window: (usize, usize), k: usize) -> Result<f64> {
    let (a, b) = window;
    if a < 1 || b > profile.n() || a > b {
        return Err(Error::EmptyRange(format!("window {a}..={b}")));
    }
    let len = b - a + 1;
    if k < 1 || k > len {
        return Err(Error::BadK { n: len, k });
    }
    let log_w: Vec<f64> = (a..=b).map(|x| -profile.v(x)).collect();
    let t = Tables::new(&log_w, k);
    let packed: f64 = log_w[len - k..].iter().sum();
    Ok((packed - t.log_z()).exp())
}

/// The window event: packed-right mass at least `2 / q_n`.
pub fn event_b(profile: &PotentialProfile, window: (usize, usize), k: usize, q_n: usize) -> Result<bool> {
    Ok(prob_max_window(profile, window, k)? >= 2.0 / q_n as f64)
}
