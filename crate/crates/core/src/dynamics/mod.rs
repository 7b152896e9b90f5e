//! Graphical construction of the exclusion process and its censored, displaced,
//! coupled and boundary-driven variants.

mod censoring;
mod flow;
mod source;

pub use censoring::{build_sweep_scheme, CensoringScheme, Displacement, DisplacementSchedule};
pub use flow::{
    flow_domination_run, flow_run, flow_run_logged, flow_stationary_exact, flow_stationary_law, FlowState,
    FLOW_WINDOW_LIMIT,
};
pub use source::{EventSource, Ring};

use crate::environment::Environment;
use crate::error::{Error, Result};
use crate::state::Configuration;

/// Applies the update rule of one ring; returns whether a particle moved.
///
/// Marks `<= omega_x` try a right step, larger marks a left step. `mask[e - 1]` set
/// means edge `{e, e+1}` is closed.
#[inline]
pub fn apply_ring(xi: &mut Configuration, omega: &[f64], ring: &Ring, mask: Option<&[bool]>) -> bool {
    let x = ring.site;
    let n = xi.n();
    let Some(i) = xi.rank_of(x) else { return false };
    if ring.mark <= omega[x - 1] {
        if x < n && !xi.occupied(x + 1) && !mask.is_some_and(|m| m[x - 1]) {
            xi.step_particle(i, x + 1);
            return true;
        }
    } else if x >= 2 && !xi.occupied(x - 1) && !mask.is_some_and(|m| m[x - 2]) {
        xi.step_particle(i, x - 1);
        return true;
    }
    false
}

fn check_env(env: &Environment, xi: &Configuration) -> Result<()> {
    if env.n() != xi.n() {
        return Err(Error::ShapeMismatch(format!("environment has {} sites, configuration {}", env.n(), xi.n())));
    }
    Ok(())
}

fn check_horizon(horizon: f64) -> Result<()> {
    if !(horizon >= 0.0) {
        return Err(Error::ShapeMismatch(format!("horizon must be non-negative, got {horizon}")));
    }
    Ok(())
}

/// Optional modifiers of the plain dynamics.
#[derive(Debug, Clone, Copy, Default)]
pub struct Modifiers<'a> {
    pub scheme: Option<&'a CensoringScheme>,
    pub displacements: Option<&'a DisplacementSchedule>,
}

/// Runs `xi` up to `horizon`, calling `on_ring(ring, moved, state)` after every ring.
pub fn evolve_with<F>(
    xi: &mut Configuration,
    env: &Environment,
    source: &mut EventSource,
    horizon: f64,
    mods: Modifiers<'_>,
    mut on_ring: F,
) -> Result<()>
where
    F: FnMut(&Ring, bool, &Configuration),
{
    check_env(env, xi)?;
    check_horizon(horizon)?;
    if let Some(s) = mods.scheme {
        if s.n() != xi.n() {
            return Err(Error::ShapeMismatch("censoring scheme built for another n".into()));
        }
    }
    let n = xi.n();
    let omega = env.omegas();
    let empty = DisplacementSchedule::empty();
    let disp = mods.displacements.unwrap_or(&empty).events();
    let mut next_disp = disp.partition_point(|(t, _)| *t <= source.time());
    loop {
        let next = disp.get(next_disp).filter(|(t, _)| *t <= horizon);
        // a ring sharing the displacement's timestamp stays pending until after it
        let limit = next.map_or(horizon, |(t, _)| t.next_down());
        while let Some(ring) = source.next_ring_until(n, limit) {
            let mask = mods.scheme.and_then(|s| s.mask_at(ring.time));
            let moved = apply_ring(xi, omega, &ring, mask);
            on_ring(&ring, moved, xi);
        }
        match next {
            Some(&(_, map)) => {
                *xi = map.apply(xi);
                next_disp += 1;
            }
            None => return Ok(()),
        }
    }
}

/// State at `horizon` of the (possibly censored and displaced) dynamics.
pub fn evolve(
    xi0: &Configuration,
    env: &Environment,
    source: &mut EventSource,
    horizon: f64,
    mods: Modifiers<'_>,
) -> Result<Configuration> {
    let mut xi = xi0.clone();
    evolve_with(&mut xi, env, source, horizon, mods, |_, _, _| {})?;
    Ok(xi)
}

/// States at the increasing times of `grid` (all `<= horizon` of the caller's choosing).
pub fn evolve_sampled(
    xi0: &Configuration,
    env: &Environment,
    source: &mut EventSource,
    grid: &[f64],
    mods: Modifiers<'_>,
) -> Result<Vec<Configuration>> {
    if grid.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::ShapeMismatch("sampling grid must be non-decreasing".into()));
    }
    let mut xi = xi0.clone();
    let mut out = Vec::with_capacity(grid.len());
    for &t in grid {
        evolve_with(&mut xi, env, source, t, mods, |_, _, _| {})?;
        out.push(xi.clone());
    }
    Ok(out)
}

/// Evolves every copy with the same ring stream; `on_ring(ring, copies)` sees the
/// states after each ring.
pub fn evolve_coupled<F>(
    xis: &mut [Configuration],
    env: &Environment,
    source: &mut EventSource,
    horizon: f64,
    scheme: Option<&CensoringScheme>,
    mut on_ring: F,
) -> Result<()>
where
    F: FnMut(&Ring, &[Configuration]),
{
    check_horizon(horizon)?;
    let Some(first) = xis.first() else { return Ok(()) };
    check_env(env, first)?;
    let (n, k) = (first.n(), first.k());
    if xis.iter().any(|x| x.n() != n || x.k() != k) {
        return Err(Error::ShapeMismatch("coupled copies must share (n, k)".into()));
    }
    let omega = env.omegas();
    while let Some(ring) = source.next_ring_until(n, horizon) {
        let mask = scheme.and_then(|s| s.mask_at(ring.time));
        for xi in xis.iter_mut() {
            apply_ring(xi, omega, &ring, mask);
        }
        on_ring(&ring, xis);
    }
    Ok(())
}

/// The pair `(sigma_min, sigma_max)` under the grand coupling, simulated by thinning:
/// only rings at sites occupied in at least one copy are generated.
#[derive(Debug, Clone)]
pub struct ExtremalPair {
    omega: Vec<f64>,
    lo: Configuration,
    hi: Configuration,
    /// sites where the two occupancies differ
    diff: usize,
    /// particles of the lower copy on the top `k` sites
    top: usize,
    accepted: u64,
}

impl ExtremalPair {
    pub fn new(env: &Environment, k: usize) -> Result<Self> {
        let (lo, hi) = Configuration::extremal(env.n(), k)?;
        let diff = 2 * lo.hamming(&hi)?;
        let top = k - lo.positions().partition_point(|&p| p <= env.n() - k);
        Ok(ExtremalPair { omega: env.omegas().to_vec(), lo, hi, diff, top, accepted: 0 })
    }

    pub fn lower(&self) -> &Configuration {
        &self.lo
    }

    pub fn upper(&self) -> &Configuration {
        &self.hi
    }

    pub fn coalesced(&self) -> bool {
        self.diff == 0
    }

    /// Lower copy sits on `n-k+1..=n`.
    pub fn lower_is_max(&self) -> bool {
        self.top == self.lo.k()
    }

    /// Accepted (effective) rings so far.
    pub fn rings(&self) -> u64 {
        self.accepted
    }

    fn mismatch(&self, x: usize) -> usize {
        usize::from(self.lo.occupied(x) != self.hi.occupied(x))
    }

    /// One proposal; `None` once past `horizon`.
    fn propose(&mut self, source: &mut EventSource, horizon: f64) -> Option<()> {
        let n = self.lo.n();
        let k = self.lo.k();
        let (time, slot, mark) = source.next_slot_until(2 * k, horizon)?;
        let x = if slot < k { self.lo.positions()[slot] } else { self.hi.positions()[slot - k] };
        if slot >= k && self.lo.occupied(x) {
            return Some(());
        }
        self.accepted += 1;
        let ring = Ring { time, site: x, mark };
        let lo_win = x.saturating_sub(1).max(1)..=(x + 1).min(n);
        let before: usize = lo_win.clone().map(|y| self.mismatch(y)).sum();
        let top_edge = n - k;
        let was_top = x > top_edge;
        if apply_ring(&mut self.lo, &self.omega, &ring, None) {
            let now = if ring.mark <= self.omega[x - 1] { x + 1 } else { x - 1 };
            self.top = self.top + usize::from(now > top_edge) - usize::from(was_top);
        }
        apply_ring(&mut self.hi, &self.omega, &ring, None);
        let after: usize = lo_win.map(|y| self.mismatch(y)).sum();
        self.diff = self.diff + after - before;
        Some(())
    }

    /// Runs until `stop` holds, returning that time, or `Timeout` at `cap`.
    fn run_until(&mut self, source: &mut EventSource, cap: f64, stop: fn(&Self) -> bool) -> Result<f64> {
        if !cap.is_finite() {
            return Err(Error::ShapeMismatch("cap must be finite".into()));
        }
        if stop(self) {
            return Ok(source.time());
        }
        while self.propose(source, cap).is_some() {
            if stop(self) {
                return Ok(source.time());
            }
        }
        Err(Error::Timeout { cap })
    }

    /// Runs both copies to `horizon` (no stopping).
    pub fn advance(&mut self, source: &mut EventSource, horizon: f64) {
        while self.propose(source, horizon).is_some() {}
    }
}

/// First time the extremal pair coalesces.
pub fn coupling_time(env: &Environment, k: usize, source: &mut EventSource, cap: f64) -> Result<f64> {
    ExtremalPair::new(env, k)?.run_until(source, cap, ExtremalPair::coalesced)
}

/// First time `sigma_min` reaches the maximal configuration.
pub fn hit_time_max(env: &Environment, k: usize, source: &mut EventSource, cap: f64) -> Result<f64> {
    hit_time_max_pair(env, k, source, cap).map(|(t, _)| t)
}

/// Like [`hit_time_max`] but also returns the pair at the hitting time.
pub fn hit_time_max_pair(
    env: &Environment,
    k: usize,
    source: &mut EventSource,
    cap: f64,
) -> Result<(f64, ExtremalPair)> {
    let mut pair = ExtremalPair::new(env, k)?;
    let t = pair.run_until(source, cap, ExtremalPair::lower_is_max)?;
    Ok((t, pair))
}
