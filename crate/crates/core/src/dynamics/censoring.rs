use crate::error::{Error, Result};
use crate::state::Configuration;

/// Piecewise-constant set of blocked edges; edge `e` is `{e, e+1}`.
///
/// Stage `i` covers `[breakpoints[i], breakpoints[i+1])`; nothing is blocked
/// before the first or after the last breakpoint.
#[derive(Debug, Clone, PartialEq)]
pub struct CensoringScheme {
    n: usize,
    breakpoints: Vec<f64>,
    blocked: Vec<Vec<bool>>,
}

impl CensoringScheme {
    pub fn new(n: usize, breakpoints: Vec<f64>, stages: Vec<Vec<usize>>) -> Result<Self> {
        if breakpoints.is_empty() && !stages.is_empty()
            || !breakpoints.is_empty() && stages.len() + 1 != breakpoints.len()
        {
            return Err(Error::ShapeMismatch(format!(
                "{} breakpoints for {} stages",
                breakpoints.len(),
                stages.len()
            )));
        }
        if breakpoints.windows(2).any(|w| !(w[0] < w[1])) || breakpoints.iter().any(|b| !b.is_finite())
        {
            return Err(Error::ShapeMismatch("breakpoints must increase strictly".into()));
        }
        let mut blocked = Vec::with_capacity(stages.len());
        for edges in stages {
            let mut mask = vec![false; n.saturating_sub(1)];
            for e in edges {
                if e < 1 || e + 1 > n {
                    return Err(Error::ShapeMismatch(format!("edge {{{e},{}}} outside 1..={n}", e + 1)));
                }
                mask[e - 1] = true;
            }
            blocked.push(mask);
        }
        Ok(CensoringScheme { n, breakpoints, blocked })
    }

    pub fn empty(n: usize) -> Self {
        CensoringScheme { n, breakpoints: Vec::new(), blocked: Vec::new() }
    }

    /// Every edge blocked on `[0, horizon)`.
    pub fn block_all(n: usize, horizon: f64) -> Self {
        CensoringScheme { n, breakpoints: vec![0.0, horizon], blocked: vec![vec![true; n - 1]] }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn stage_count(&self) -> usize {
        self.blocked.len()
    }

    /// Time after which nothing is blocked.
    pub fn end(&self) -> f64 {
        self.breakpoints.last().copied().unwrap_or(0.0)
    }

    /// Blocked edges of stage `i`, increasing.
    pub fn stage_edges(&self, i: usize) -> Vec<usize> {
        (1..self.n).filter(|&e| self.blocked[i][e - 1]).collect()
    }

    /// Stage active at time `t`, right-continuous.
    pub fn stage_at(&self, t: f64) -> Option<usize> {
        if self.blocked.is_empty() || t < self.breakpoints[0] || t >= self.end() {
            return None;
        }
        Some(self.breakpoints.partition_point(|&b| b <= t) - 1)
    }

    /// Edge mask active at `t` (index `e - 1`), `None` when nothing is blocked.
    #[inline]
    pub fn mask_at(&self, t: f64) -> Option<&[bool]> {
        self.stage_at(t).map(|i| self.blocked[i].as_slice())
    }

    pub fn is_blocked(&self, t: f64, e: usize) -> bool {
        self.mask_at(t).is_some_and(|m| m[e - 1])
    }
}

/// Instantaneous replacement of the configuration by a smaller one.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Displacement {
    /// Moves the leftmost `count` particles onto `1..=count`, keeping the others.
    PackLeftmost(usize),
}

impl Displacement {
    pub fn apply(&self, xi: &Configuration) -> Configuration {
        match *self {
            Displacement::PackLeftmost(count) => {
                let mut pos = xi.positions().to_vec();
                for (i, p) in pos.iter_mut().enumerate().take(count) {
                    *p = i + 1;
                }
                Configuration::from_positions(xi.n(), pos).expect("packing keeps positions increasing")
            }
        }
    }
}

/// Displacements at strictly increasing positive times.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DisplacementSchedule {
    events: Vec<(f64, Displacement)>,
}

impl DisplacementSchedule {
    pub fn new(events: Vec<(f64, Displacement)>) -> Result<Self> {
        if events.iter().any(|(t, _)| !(*t > 0.0 && t.is_finite()))
            || events.windows(2).any(|w| !(w[0].0 < w[1].0))
        {
            return Err(Error::ShapeMismatch("displacement times must be positive and increasing".into()));
        }
        Ok(DisplacementSchedule { events })
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn events(&self) -> &[(f64, Displacement)] {
        &self.events
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    /// Displacements with time in `(after, upto]`.
    pub fn between(&self, after: f64, upto: f64) -> impl Iterator<Item = &(f64, Displacement)> {
        self.events.iter().filter(move |(t, _)| *t > after && *t <= upto)
    }
}

/// Sweep scheme moving the `k` particles of the minimal state to the right end.
///
/// For `k <= q`, stage `i < ceil(n/2q) - 2` cuts the edges `{2iq, 2iq+1}` and
/// `{2(i+2)q, 2(i+2)q+1}`, and the final stage cuts `{n-4q, n-4q+1}`; each stage lasts `T`.
/// For `k > q`, each particle beyond the first `q` gets `r = ceil((n-k+q)/2q) - 1` stages
/// ending with the right block frozen, and the leftmost `k - j` particles are packed to
/// the left at `s_j = r j T`.
pub fn build_sweep_scheme(
    n: usize,
    k: usize,
    q: usize,
    stage: f64,
) -> Result<(CensoringScheme, DisplacementSchedule)> {
    if q == 0 || 4 * q >= n {
        return Err(Error::WindowTooWide { four_q: 4 * q, n });
    }
    if k < 1 || k + 1 > n {
        return Err(Error::BadK { n, k });
    }
    if !(stage > 0.0) {
        return Err(Error::ShapeMismatch("stage length must be positive".into()));
    }
    let valid = |e: i64| e >= 1 && e < n as i64;
    let keep = |edges: &[i64]| -> Vec<usize> {
        let mut v: Vec<usize> = edges.iter().copied().filter(|&e| valid(e)).map(|e| e as usize).collect();
        v.sort_unstable();
        v.dedup();
        v
    };
    let (n_i, q_i, k_i) = (n as i64, q as i64, k as i64);
    let mut stages: Vec<Vec<usize>> = Vec::new();
    let mut displacements = Vec::new();
    if k <= q {
        let count = n.div_ceil(2 * q) as i64 - 1;
        for i in 0..count - 1 {
            stages.push(keep(&[2 * i * q_i, 2 * (i + 2) * q_i]));
        }
        stages.push(keep(&[n_i - 4 * q_i]));
    } else {
        let r = (n - k + q).div_ceil(2 * q) as i64 - 1;
        for j in 0..=(k_i - q_i) {
            for i in 0..r - 1 {
                let a = k_i - q_i - j + 2 * q_i * i;
                stages.push(keep(&[a, a + 4 * q_i, n_i - j]));
            }
            if r >= 1 {
                stages.push(keep(&[n_i - 4 * q_i - j, n_i - j]));
            }
        }
        for j in 1..=(k - q) {
            let s = (r as f64) * (j as f64) * stage;
            if s > 0.0 {
                displacements.push((s, Displacement::PackLeftmost(k - j)));
            }
        }
    }
    let breakpoints = if stages.is_empty() {
        Vec::new()
    } else {
        (0..=stages.len()).map(|i| i as f64 * stage).collect()
    };
    Ok((CensoringScheme::new(n, breakpoints, stages)?, DisplacementSchedule::new(displacements)?))
}
