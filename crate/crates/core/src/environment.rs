//! Quenched environments, the potential they induce, and traps.

use std::ops::RangeInclusive;

use rand::Rng;

use crate::error::{Error, Result};
use crate::law::{lambda_root, q_n, LawSpec};
use crate::rng::{stream, ENV_STREAM};

/// Right-jump probabilities `omega_x` on sites `1..=n`.
#[derive(Debug, Clone, PartialEq)]
pub struct Environment {
    omega: Vec<f64>,
    alpha: f64,
    law: Option<LawSpec>,
    seed: Option<u64>,
}

impl Environment {
    /// Explicit environment; `alpha` is the tightest ellipticity bound of the values.
    pub fn from_omega(omega: Vec<f64>) -> Result<Self> {
        if omega.len() < 2 {
            return Err(Error::InvalidEnvironment("need at least two sites".into()));
        }
        if let Some(w) = omega.iter().find(|w| !(**w > 0.0 && **w < 1.0)) {
            return Err(Error::InvalidEnvironment(format!("omega={w} outside (0,1)")));
        }
        let alpha = omega.iter().map(|w| w.min(1.0 - w)).fold(0.5, f64::min);
        Ok(Environment { omega, alpha, law: None, seed: None })
    }

    /// Explicit environment checked against a given ellipticity bound.
    pub fn with_alpha(omega: Vec<f64>, alpha: f64) -> Result<Self> {
        let mut env = Self::from_omega(omega)?;
        if !(alpha > 0.0 && alpha <= env.alpha) {
            return Err(Error::InvalidEnvironment(format!(
                "values leave the band [{alpha}, {}]",
                1.0 - alpha
            )));
        }
        env.alpha = alpha;
        Ok(env)
    }

    pub fn n(&self) -> usize {
        self.omega.len()
    }

    /// `omega_x` for a 1-indexed site.
    #[inline]
    pub fn omega(&self, x: usize) -> f64 {
        self.omega[x - 1]
    }

    pub fn omegas(&self) -> &[f64] {
        &self.omega
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn law(&self) -> Option<&LawSpec> {
        self.law.as_ref()
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    /// Restriction to sites `1..=m`.
    pub fn prefix(&self, m: usize) -> Result<Self> {
        if m < 2 || m > self.n() {
            return Err(Error::EmptyRange(format!("prefix {m} of length {}", self.n())));
        }
        Ok(Environment { omega: self.omega[..m].to_vec(), ..self.clone() })
    }

    /// Mirror image `omega'_y = 1 - omega_{n+1-y}`: the process read backwards in space.
    pub fn mirrored(&self) -> Self {
        Environment {
            omega: self.omega.iter().rev().map(|w| 1.0 - w).collect(),
            alpha: self.alpha,
            law: None,
            seed: None,
        }
    }
}

/// I.i.d. environment; site `x` consumes the `x`-th draw of a stream keyed by `seed`,
/// so every prefix is reproducible independently of `n`.
pub fn sample_env(law: &LawSpec, n: usize, seed: u64) -> Result<Environment> {
    if n < 2 {
        return Err(Error::InvalidEnvironment("need at least two sites".into()));
    }
    let mut rng = stream(seed, ENV_STREAM);
    let omega = (0..n).map(|_| law.quantile(rng.random::<f64>())).collect();
    Ok(Environment { omega, alpha: law.alpha(), law: Some(law.clone()), seed: Some(seed) })
}

/// Potential `V`, its i.i.d.-increment variant `V_bar`, and `rho`; index `x - 1` holds site `x`.
#[derive(Debug, Clone, PartialEq)]
pub struct PotentialProfile {
    v: Vec<f64>,
    v_bar: Vec<f64>,
    rho: Vec<f64>,
}

impl PotentialProfile {
    /// Profile with an explicit potential (rho and V_bar left at 1 and 0).
    pub fn from_v(v: Vec<f64>) -> Self {
        let n = v.len();
        PotentialProfile { v, v_bar: vec![0.0; n], rho: vec![1.0; n] }
    }

    pub fn n(&self) -> usize {
        self.v.len()
    }

    #[inline]
    pub fn v(&self, x: usize) -> f64 {
        self.v[x - 1]
    }

    pub fn v_bar(&self, x: usize) -> f64 {
        self.v_bar[x - 1]
    }

    pub fn rho(&self, x: usize) -> f64 {
        self.rho[x - 1]
    }

    pub fn v_values(&self) -> &[f64] {
        &self.v
    }

    pub fn v_bar_values(&self) -> &[f64] {
        &self.v_bar
    }

    pub fn rho_values(&self) -> &[f64] {
        &self.rho
    }
}

pub fn potential(env: &Environment) -> PotentialProfile {
    let w = env.omegas();
    let n = w.len();
    let rho: Vec<f64> = w.iter().map(|w| (1.0 - w) / w).collect();
    let mut v = vec![0.0; n];
    let mut v_bar = vec![0.0; n];
    for i in 1..n {
        v[i] = v[i - 1] + ((1.0 - w[i]) / w[i - 1]).ln();
        v_bar[i] = v_bar[i - 1] + rho[i].ln();
    }
    PotentialProfile { v, v_bar, rho }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Trap {
    pub x: usize,
    pub y: usize,
    pub depth: f64,
}

fn check_range(profile: &PotentialProfile, range: &RangeInclusive<usize>) -> Result<()> {
    if range.is_empty() || *range.start() < 1 || *range.end() > profile.n() {
        return Err(Error::EmptyRange(format!(
            "{}..={} on a profile of length {}",
            range.start(),
            range.end(),
            profile.n()
        )));
    }
    Ok(())
}

/// `a - b` as an unevaluated sum `hi + lo` with `hi = fl(a - b)`; comparing these pairs
/// lexicographically compares the exact differences.
#[inline]
pub(crate) fn exact_diff(a: f64, b: f64) -> (f64, f64) {
    let s = a - b;
    let bb = s - a;
    (s, (a - (s - bb)) + (-b - bb))
}

/// Pair `x <= y` in `range` maximizing `V(y) - V(x)`; ties go to the smallest `x`, then `y`.
/// Depths are compared exactly, so rounding never manufactures a tie.
pub fn deepest_trap(profile: &PotentialProfile, range: RangeInclusive<usize>) -> Result<Trap> {
    check_range(profile, &range)?;
    let (a, b) = (*range.start(), *range.end());
    let mut argmin = a;
    let (mut bx, mut by) = (a, a);
    let mut best = (0.0, 0.0);
    for y in a..=b {
        if profile.v(y) < profile.v(argmin) {
            argmin = y;
        }
        let d = exact_diff(profile.v(y), profile.v(argmin));
        if d > best {
            (bx, by, best) = (argmin, y, d);
        }
    }
    Ok(Trap { x: bx, y: by, depth: best.0 })
}

/// `max V(y) - V(x)` over pairs with `y - x >= q`.
pub fn constrained_max_gain(profile: &PotentialProfile, q: usize) -> Result<f64> {
    let n = profile.n();
    if q == 0 || q >= n {
        return Err(Error::EmptyRange(format!("q={q} with n={n}")));
    }
    let mut prefix_min = f64::INFINITY;
    let mut best = f64::NEG_INFINITY;
    for y in (q + 1)..=n {
        prefix_min = prefix_min.min(profile.v(y - q));
        best = best.max(profile.v(y) - prefix_min);
    }
    Ok(best)
}

/// Whether no stretch of length at least `q` climbs by more than `-3 ln n`.
pub fn check_event_a(env: &Environment, q: usize) -> Result<bool> {
    let gain = constrained_max_gain(&potential(env), q)?;
    Ok(gain <= -3.0 * (env.n() as f64).ln())
}

/// Sites of `[x2, y2]` at or below the midpoint level of the window ends.
pub fn half_fill_census(profile: &PotentialProfile, x2: usize, y2: usize) -> (Vec<usize>, usize) {
    let mid = 0.5 * (profile.v(y2) + profile.v(x2));
    let sites: Vec<usize> = (x2..=y2).filter(|&x| profile.v(x) <= mid).collect();
    let k = sites.len();
    (sites, k)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrapStatRow {
    pub seed: u64,
    pub trap: Trap,
    /// `depth - ln(n) / lambda`
    pub centered: f64,
    pub in_proposition_window: bool,
    pub in_wide_window: bool,
    pub length_within_qn: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrapStats {
    pub n: usize,
    pub lambda: f64,
    pub q_n: usize,
    /// Proposition window `[-(1+eps)/lambda lnln n, eps/lambda lnln n]`.
    pub window: (f64, f64),
    /// Symmetric window `+-(2/lambda) lnln n`.
    pub wide_window: (f64, f64),
    pub rows: Vec<TrapStatRow>,
    /// Quantiles 0.05, 0.5, 0.95 of the centered depth.
    pub quantiles: [f64; 3],
    pub frac_in_window: f64,
    pub frac_in_wide_window: f64,
    pub frac_length_within_qn: f64,
}

fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let i = h.floor() as usize;
    let j = (i + 1).min(sorted.len() - 1);
    sorted[i] + (sorted[j] - sorted[i]) * (h - i as f64)
}

/// Deepest trap over the whole segment for each seed, scored against the trap-depth windows.
pub fn trap_depth_window_stats(
    law: &LawSpec,
    n: usize,
    seeds: &[u64],
    eps: f64,
) -> Result<TrapStats> {
    if seeds.is_empty() {
        return Err(Error::EmptyRange("no seeds".into()));
    }
    let lambda = lambda_root(law)?;
    if !lambda.is_finite() {
        return Err(Error::NotTrapped);
    }
    let qn = q_n(law, n)?;
    let ln = (n as f64).ln();
    let lnln = ln.ln();
    let window = (-(1.0 + eps) / lambda * lnln, eps / lambda * lnln);
    let wide_window = (-2.0 / lambda * lnln, 2.0 / lambda * lnln);
    let inside = |w: (f64, f64), c: f64| c >= w.0.min(w.1) && c <= w.0.max(w.1);
    let mut rows = Vec::with_capacity(seeds.len());
    for &seed in seeds {
        let env = sample_env(law, n, seed)?;
        let trap = deepest_trap(&potential(&env), 1..=n)?;
        let centered = trap.depth - ln / lambda;
        rows.push(TrapStatRow {
            seed,
            trap,
            centered,
            in_proposition_window: inside(window, centered),
            in_wide_window: inside(wide_window, centered),
            length_within_qn: trap.y - trap.x <= qn,
        });
    }
    let mut c: Vec<f64> = rows.iter().map(|r| r.centered).collect();
    c.sort_by(f64::total_cmp);
    let frac = |f: &dyn Fn(&TrapStatRow) -> bool| {
        rows.iter().filter(|r| f(r)).count() as f64 / rows.len() as f64
    };
    Ok(TrapStats {
        n,
        lambda,
        q_n: qn,
        window,
        wide_window,
        quantiles: [quantile_sorted(&c, 0.05), quantile_sorted(&c, 0.5), quantile_sorted(&c, 0.95)],
        frac_in_window: frac(&|r| r.in_proposition_window),
        frac_in_wide_window: frac(&|r| r.in_wide_window),
        frac_length_within_qn: frac(&|r| r.length_within_qn),
        rows,
    })
}
