use super::ExactChain;
use crate::dynamics::{CensoringScheme, DisplacementSchedule};
use crate::error::{Error, Result};
use crate::state::Configuration;

/// Law at time `t` from `xi0` under censoring and optional displacements.
pub fn censored_transient(
    chain: &ExactChain,
    scheme: &CensoringScheme,
    displacements: Option<&DisplacementSchedule>,
    xi0: &Configuration,
    t: f64,
) -> Result<Vec<f64>> {
    Ok(censored_path(chain, scheme, displacements, xi0, &[t])?.pop().expect("one time"))
}

/// Laws at each time of a non-decreasing grid.
fn censored_path(
    chain: &ExactChain,
    scheme: &CensoringScheme,
    displacements: Option<&DisplacementSchedule>,
    xi0: &Configuration,
    grid: &[f64],
) -> Result<Vec<Vec<f64>>> {
    if scheme.n() != chain.n() {
        return Err(Error::ShapeMismatch("censoring scheme built for another n".into()));
    }
    if grid.windows(2).any(|w| w[0] > w[1]) || grid.first().is_some_and(|&t| t < 0.0) {
        return Err(Error::ShapeMismatch("time grid must be non-negative and non-decreasing".into()));
    }
    let mut v = vec![0.0; chain.len()];
    v[chain.index_of(xi0)?] = 1.0;
    let empty = DisplacementSchedule::empty();
    let disp = displacements.unwrap_or(&empty).events();
    // images of every state under each displacement
    let images: Vec<Vec<usize>> = disp
        .iter()
        .map(|(_, map)| (0..chain.len()).map(|i| chain.rank(map.apply(&chain.state(i)).positions())).collect())
        .collect();
    let mut now = 0.0;
    let mut next_disp = 0;
    let mut out = Vec::with_capacity(grid.len());
    for &target in grid {
        loop {
            // next time where something changes: a breakpoint, a displacement or the target
            let mut stop = target;
            if let Some(&b) = scheme.breakpoints().iter().find(|&&b| b > now) {
                stop = stop.min(b);
            }
            let disp_due = disp.get(next_disp).map(|(s, _)| *s).filter(|&s| s <= stop);
            if let Some(s) = disp_due {
                stop = s;
            }
            if stop > now {
                v = chain.propagate(&v, stop - now, scheme.mask_at(now));
                now = stop;
            }
            if disp_due.is_some() {
                let mut moved = vec![0.0; v.len()];
                for (i, &p) in v.iter().enumerate() {
                    moved[images[next_disp][i]] += p;
                }
                v = moved;
                next_disp += 1;
                continue;
            }
            if now >= target {
                break;
            }
        }
        out.push(v.clone());
    }
    Ok(out)
}

/// One grid time of the censoring check.
#[derive(Debug, Clone, PartialEq)]
pub struct CensorCheckRow {
    pub t: f64,
    /// `min_xi P_t(xi, xi_max)`
    pub plain_min: f64,
    /// `P_t(xi_min, xi_max)` for the plain dynamics
    pub plain_from_min: f64,
    /// censored, from `xi_min`
    pub censored: f64,
    /// censored and displaced, from `xi_min`
    pub displaced: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CensorCheckReport {
    pub rows: Vec<CensorCheckRow>,
    /// smallest of `plain_min - censored` and `censored - displaced`
    pub min_slack: f64,
    pub violations: usize,
}

/// Allowed numerical slack in the inequalities.
pub const CENSOR_TOL: f64 = 1e-10;

/// Checks `P_t(xi, xi_max) >= P^C_t(xi_min, xi_max) >= P~_t(xi_min, xi_max)` for every
/// start `xi` and every grid time.
pub fn censoring_inequality_check(
    chain: &ExactChain,
    scheme: &CensoringScheme,
    displacements: Option<&DisplacementSchedule>,
    grid: &[f64],
) -> Result<CensorCheckReport> {
    let (lo, hi) = Configuration::extremal(chain.n(), chain.k())?;
    let top = chain.index_of(&hi)?;
    let censored = censored_path(chain, scheme, None, &lo, grid)?;
    let displaced = censored_path(chain, scheme, displacements, &lo, grid)?;
    let mut rows = Vec::with_capacity(grid.len());
    let mut min_slack = f64::INFINITY;
    let mut violations = 0;
    for (g, &t) in grid.iter().enumerate() {
        let col = chain.transient_column(&hi, t)?;
        let plain_min = col.iter().copied().fold(f64::INFINITY, f64::min);
        let row = CensorCheckRow {
            t,
            plain_min,
            plain_from_min: col[0],
            censored: censored[g][top],
            displaced: displaced[g][top],
        };
        let slack = (row.plain_min - row.censored).min(row.censored - row.displaced);
        min_slack = min_slack.min(slack);
        if slack < -CENSOR_TOL {
            violations += 1;
        }
        rows.push(row);
    }
    Ok(CensorCheckReport { rows, min_slack, violations })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::build_sweep_scheme;
    use crate::environment::sample_env;
    use crate::law::LawSpec;

    fn chain(n: usize, k: usize, seed: u64) -> ExactChain {
        let e = sample_env(&LawSpec::two_point(0.25, 0.3).unwrap(), n, seed).unwrap();
        ExactChain::build(&e, k).unwrap()
    }

    fn grid() -> Vec<f64> {
        (1..=20).map(|i| i as f64 * 2.0).collect()
    }

    #[test]
    fn empty_scheme_coincides() {
        let c = chain(7, 2, 1);
        let r = censoring_inequality_check(&c, &CensoringScheme::empty(7), None, &grid()).unwrap();
        for row in &r.rows {
            assert!((row.plain_from_min - row.censored).abs() < 1e-11);
            assert!((row.censored - row.displaced).abs() < 1e-15);
        }
        assert_eq!(r.violations, 0);
    }

    #[test]
    fn block_all_freezes() {
        let c = chain(7, 2, 2);
        let s = CensoringScheme::block_all(7, 100.0);
        let r = censoring_inequality_check(&c, &s, None, &grid()).unwrap();
        assert!(r.rows.iter().all(|row| row.censored == 0.0));
        assert_eq!(r.violations, 0);
    }

    #[test]
    fn sweep_scheme_no_violations() {
        for k in 1..=3 {
            for seed in 0..3 {
                let c = chain(8, k, seed);
                let (s, d) = build_sweep_scheme(8, k, 1, 5.0).unwrap();
                let r = censoring_inequality_check(&c, &s, Some(&d), &grid()).unwrap();
                assert_eq!(r.violations, 0, "k={k} seed={seed} slack={}", r.min_slack);
            }
        }
    }

    #[test]
    fn censored_matches_simulation_free_reference() {
        // a scheme closing one edge until t = 3 equals the chain with that edge removed
        let c = chain(6, 2, 3);
        let s = CensoringScheme::new(6, vec![0.0, 3.0], vec![vec![3]]).unwrap();
        let (lo, _) = Configuration::extremal(6, 2).unwrap();
        let v = censored_transient(&c, &s, None, &lo, 5.0).unwrap();
        let mut mask = vec![false; 5];
        mask[2] = true;
        let mut start = vec![0.0; c.len()];
        start[0] = 1.0;
        let w = c.propagate(&c.propagate(&start, 3.0, Some(&mask)), 2.0, None);
        for (a, b) in v.iter().zip(&w) {
            assert!((a - b).abs() < 1e-14);
        }
        assert!((v.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}
