use faer::Mat;

use super::ExactChain;
use crate::error::{Error, Result};
use crate::linalg::{poisson_cutoff, poisson_weights};

/// Largest state space for dense transition matrices.
pub const DENSE_LIMIT: usize = 1_500;

/// Longest base step, in units of the inverse uniformization rate.
const BASE_MEAN: f64 = 0.5;

fn check_dense(chain: &ExactChain) -> Result<()> {
    if chain.len() > DENSE_LIMIT {
        return Err(Error::TooLarge { states: chain.len() as u128, limit: DENSE_LIMIT });
    }
    Ok(())
}

/// Dense `e^{hL}` for a short step `h`, by uniformization; every term is non-negative.
fn short_kernel(chain: &ExactChain, h: f64) -> Mat<f64> {
    let m = chain.len();
    let lam = chain.uniform_rate();
    let mean = lam * h;
    let w = poisson_weights(mean, poisson_cutoff(mean, 1e-17));
    let mut cur = Mat::<f64>::identity(m, m);
    let mut acc = Mat::<f64>::zeros(m, m);
    for i in 0..m {
        acc[(i, i)] = w[0];
    }
    let mut next = Mat::<f64>::zeros(m, m);
    for &wj in &w[1..] {
        // next = cur K, one column at a time
        for j in 0..m {
            let stay = 1.0 - chain.exit_rate(j) / lam;
            for r in 0..m {
                next[(r, j)] = cur[(r, j)] * stay;
            }
            for t in chain.transitions(j) {
                let f = t.back / lam;
                for r in 0..m {
                    next[(r, j)] += cur[(r, t.to)] * f;
                }
            }
        }
        std::mem::swap(&mut cur, &mut next);
        for j in 0..m {
            for r in 0..m {
                acc[(r, j)] += wj * cur[(r, j)];
            }
        }
    }
    acc
}

/// Dense `P_t` by repeated squaring of a short uniformized step.
pub(crate) fn semigroup(chain: &ExactChain, t: f64) -> Result<Mat<f64>> {
    check_dense(chain)?;
    if !(t >= 0.0) {
        return Err(Error::ShapeMismatch(format!("time must be non-negative, got {t}")));
    }
    let mean = chain.uniform_rate() * t;
    let s = if mean <= BASE_MEAN { 0 } else { (mean / BASE_MEAN).log2().ceil() as i32 };
    let mut p = short_kernel(chain, t / 2f64.powi(s));
    for _ in 0..s {
        p = &p * &p;
    }
    Ok(p)
}

/// `max_i TV(P(i, .), pi)`.
pub(crate) fn worst_tv(p: &Mat<f64>, pi: &[f64]) -> f64 {
    let m = pi.len();
    let mut row = vec![0.0; m];
    for j in 0..m {
        for i in 0..m {
            row[i] += (p[(i, j)] - pi[j]).abs();
        }
    }
    0.5 * row.into_iter().fold(0.0, f64::max)
}

/// Kernels `P_{delta 2^i}` with their distances to equilibrium, shared by mixing-time
/// searches at several thresholds.
pub struct MixingPowers {
    pi: Vec<f64>,
    delta: f64,
    powers: Vec<Mat<f64>>,
    dist: Vec<f64>,
}

/// Resolution below the reference time, as a power of two.
const REFINE_LEVELS: i32 = 22;
const MAX_POWERS: usize = 160;

impl MixingPowers {
    /// `reference` should be near the mixing time sought, e.g. the spectral lower bound.
    pub fn new(chain: &ExactChain, reference: f64) -> Result<Self> {
        check_dense(chain)?;
        if !(reference > 0.0 && reference.is_finite()) {
            return Err(Error::ShapeMismatch(format!("reference time must be positive, got {reference}")));
        }
        let mean = chain.uniform_rate() * reference;
        let s = REFINE_LEVELS.max((mean / BASE_MEAN).log2().ceil() as i32);
        let delta = reference / 2f64.powi(s);
        let base = short_kernel(chain, delta);
        let pi = chain.pi().to_vec();
        let mut me = MixingPowers { dist: vec![worst_tv(&base, &pi)], pi, delta, powers: vec![base] };
        for _ in 0..s {
            me.push_square();
        }
        Ok(me)
    }

    fn push_square(&mut self) {
        let last = self.powers.last().expect("at least the base kernel");
        let next = last * last;
        self.dist.push(worst_tv(&next, &self.pi));
        self.powers.push(next);
    }

    /// Smallest `t` (to relative `1e-6`) with `d(t) <= eps`.
    pub fn t_mix(&mut self, eps: f64) -> Result<f64> {
        let pi_min = self.pi.iter().copied().fold(f64::INFINITY, f64::min);
        if 1.0 - pi_min <= eps {
            return Ok(0.0);
        }
        while *self.dist.last().expect("non-empty") > eps {
            if self.powers.len() >= MAX_POWERS {
                return Err(Error::CapExceeded {
                    cap: self.delta * 2f64.powi(MAX_POWERS as i32 - 1),
                    reason: "distance to equilibrium did not reach eps".into(),
                });
            }
            self.push_square();
        }
        let top = self.dist.iter().position(|&d| d <= eps).expect("pushed until reached");
        let mut t = 0.0;
        let mut cur: Option<Mat<f64>> = None;
        let mut width = self.delta * 2f64.powi(top as i32);
        for i in (0..top).rev() {
            if width <= 1e-6 * (t + width) {
                break;
            }
            let step = self.delta * 2f64.powi(i as i32);
            let cand = match &cur {
                Some(c) => c * &self.powers[i],
                None => self.powers[i].clone(),
            };
            if worst_tv(&cand, &self.pi) > eps {
                cur = Some(cand);
                t += step;
            }
            width = step;
        }
        Ok(t + width)
    }
}
