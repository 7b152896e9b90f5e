use super::{apply_ring, EventSource, Ring};
use crate::environment::Environment;
use crate::error::{Error, Result};
use crate::linalg::stationary_from_moves;
use crate::state::Configuration;

/// Largest window handled by the exact stationary solve.
pub const FLOW_WINDOW_LIMIT: usize = 14;

/// Occupancy of the window `x2..=y2` plus the count of particles absorbed past `y2`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FlowState {
    pub x2: usize,
    pub y2: usize,
    pub occ: Vec<bool>,
    pub absorbed: u64,
}

impl FlowState {
    pub fn empty(x2: usize, y2: usize) -> Self {
        FlowState { x2, y2, occ: vec![false; y2 + 1 - x2], absorbed: 0 }
    }

    /// Window occupancy from the bits of `code` (bit `i` is site `x2 + i`).
    pub fn from_code(x2: usize, y2: usize, code: usize) -> Self {
        let occ = (0..=y2 - x2).map(|i| code >> i & 1 == 1).collect();
        FlowState { x2, y2, occ, absorbed: 0 }
    }

    pub fn occupied(&self, x: usize) -> bool {
        self.occ[x - self.x2]
    }

    /// Particles on `x..=y2`, plus the absorbed ones.
    pub fn tail_sum(&self, x: usize) -> u64 {
        let from = x.max(self.x2) - self.x2;
        self.absorbed + self.occ.iter().skip(from).filter(|&&b| b).count() as u64
    }

    /// Applies one ring; returns `Some(true)` on an ejection, `Some(false)` on another move.
    pub fn apply(&mut self, omega: &[f64], ring: &Ring) -> Option<bool> {
        let (x2, y2, x) = (self.x2, self.y2, ring.site);
        let right = ring.mark <= omega[x - 1];
        if x + 1 == x2 {
            if right && !self.occ[0] {
                self.occ[0] = true;
                return Some(false);
            }
            return None;
        }
        if x < x2 || x > y2 || !self.occupied(x) {
            return None;
        }
        let i = x - x2;
        if right {
            if x == y2 {
                self.occ[i] = false;
                self.absorbed += 1;
                return Some(true);
            }
            if !self.occ[i + 1] {
                self.occ.swap(i, i + 1);
                return Some(false);
            }
        } else if x > x2 && !self.occ[i - 1] {
            self.occ.swap(i, i - 1);
            return Some(false);
        }
        None
    }
}

fn check_window(env: &Environment, x2: usize, y2: usize) -> Result<()> {
    if !(2 <= x2 && x2 <= y2 && y2 < env.n()) {
        return Err(Error::EmptyRange(format!("window {x2}..={y2} must satisfy 2 <= x2 <= y2 <= n-1")));
    }
    Ok(())
}

/// Boundary-driven window chain run to `horizon`, using rings of sites `x2-1..=y2` only.
pub fn flow_run(
    env: &Environment,
    initial: &FlowState,
    source: &mut EventSource,
    horizon: f64,
) -> Result<FlowState> {
    flow_run_logged(env, initial, source, horizon, |_, _| {})
}

/// [`flow_run`] with a hook seeing each ring and whether it changed the state.
pub fn flow_run_logged<F>(
    env: &Environment,
    initial: &FlowState,
    source: &mut EventSource,
    horizon: f64,
    mut on_ring: F,
) -> Result<FlowState>
where
    F: FnMut(&Ring, bool),
{
    let (x2, y2) = (initial.x2, initial.y2);
    check_window(env, x2, y2)?;
    if initial.occ.len() != y2 + 1 - x2 {
        return Err(Error::ShapeMismatch("flow state does not match its window".into()));
    }
    let omega = env.omegas();
    let mut st = initial.clone();
    while let Some(ring) = source.next_ring_in(x2 - 1, y2, horizon) {
        let moved = st.apply(omega, &ring).is_some();
        on_ring(&ring, moved);
    }
    Ok(st)
}

/// Couples the window chain (started empty) with the full process from `sigma_min`
/// on one full-rate stream; returns, per grid time, whether every tail sum of the
/// full process over `x2..=y2+1` is dominated by the window chain's.
pub fn flow_domination_run(
    env: &Environment,
    x2: usize,
    y2: usize,
    k: usize,
    source: &mut EventSource,
    grid: &[f64],
) -> Result<Vec<bool>> {
    check_window(env, x2, y2)?;
    let n = env.n();
    let (mut xi, _) = Configuration::extremal(n, k)?;
    let mut st = FlowState::empty(x2, y2);
    let omega = env.omegas();
    let dominated = |xi: &Configuration, st: &FlowState| {
        (x2..=y2 + 1).all(|x| (xi.tail_count(x - 1) as u64) <= st.tail_sum(x))
    };
    let mut out = Vec::with_capacity(grid.len());
    let mut ok = dominated(&xi, &st);
    for &t in grid {
        while let Some(ring) = source.next_ring_until(n, t) {
            apply_ring(&mut xi, omega, &ring, None);
            st.apply(omega, &ring);
            ok &= dominated(&xi, &st);
        }
        out.push(ok);
    }
    Ok(out)
}

/// Exact stationary law of the window chain, indexed by occupancy code.
pub fn flow_stationary_law(env: &Environment, x2: usize, y2: usize) -> Result<Vec<f64>> {
    check_window(env, x2, y2)?;
    let len = y2 + 1 - x2;
    if len > FLOW_WINDOW_LIMIT {
        return Err(Error::WindowTooLarge { len, limit: FLOW_WINDOW_LIMIT });
    }
    let size = 1usize << len;
    let w = |x: usize| env.omega(x);
    // transitions (from, to, rate)
    let mut moves: Vec<(usize, usize, f64)> = Vec::new();
    for s in 0..size {
        if s & 1 == 0 {
            moves.push((s, s | 1, w(x2 - 1)));
        }
        if s >> (len - 1) & 1 == 1 {
            moves.push((s, s & !(1 << (len - 1)), w(y2)));
        }
        for i in 0..len - 1 {
            let (a, b) = (s >> i & 1, s >> (i + 1) & 1);
            if a == 1 && b == 0 {
                moves.push((s, s ^ (0b11 << i), w(x2 + i)));
            }
            if a == 0 && b == 1 {
                moves.push((s, s ^ (0b11 << i), 1.0 - w(x2 + i + 1)));
            }
        }
    }
    stationary_from_moves(size, &moves)
}

/// Stationary rate of absorption past `y2`.
pub fn flow_stationary_exact(env: &Environment, x2: usize, y2: usize) -> Result<f64> {
    let mu = flow_stationary_law(env, x2, y2)?;
    let top = y2 - x2;
    let occupied: f64 = mu.iter().enumerate().filter(|(s, _)| s >> top & 1 == 1).map(|(_, p)| p).sum();
    Ok(env.omega(y2) * occupied)
}
