//! Monte Carlo mixing-time estimates, the three lower-bound witnesses, and the
//! scaling-exponent harness.

use rayon::prelude::*;

use crate::dynamics::{apply_ring, coupling_time, evolve, EventSource, FlowState, Modifiers};
use crate::environment::{deepest_trap, potential, sample_env, Environment, Trap};
use crate::equilibrium::EquilibriumTable;
use crate::error::{Error, Result};
use crate::law::{lambda_root, LawSpec};
use crate::state::Configuration;
use crate::stats::{fit_line, mean_se, wilson, LineFit};

/// Point estimate with a 0.95 interval.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimateReport {
    pub point: f64,
    pub ci: (f64, f64),
    pub replicas: usize,
    pub seed: u64,
    pub method: &'static str,
    /// replicas that hit the time cap
    pub timeouts: usize,
}

fn check_replicas(replicas: usize) -> Result<()> {
    if replicas == 0 {
        return Err(Error::ShapeMismatch("at least one replica is needed".into()));
    }
    Ok(())
}

/// Coupling times of the extremal pair, one per replica (`None` on timeout), in replica order.
pub fn coupling_times(env: &Environment, k: usize, replicas: usize, seed: u64, cap: f64) -> Result<Vec<Option<f64>>> {
    (0..replicas as u64)
        .into_par_iter()
        .map(|r| match coupling_time(env, k, &mut EventSource::for_replica(seed, r), cap) {
            Ok(t) => Ok(Some(t)),
            Err(Error::Timeout { .. }) => Ok(None),
            Err(e) => Err(e),
        })
        .collect()
}

/// `t` with `P(tau > t) <= eps` certified by the Wilson upper bound, from sorted samples.
///
/// The empirical tail is a step function, so the search runs over order statistics.
/// The interval runs from the first time the Wilson lower bound drops to `eps`.
pub fn coupling_quantile(taus: &[Option<f64>], eps: f64, cap: f64) -> Result<(f64, (f64, f64))> {
    let r = taus.len();
    let mut sorted: Vec<f64> = taus.iter().map(|t| t.unwrap_or(f64::INFINITY)).collect();
    sorted.sort_by(f64::total_cmp);
    let crossing = |use_hi: bool| -> Option<f64> {
        (1..=r).find_map(|j| {
            let (lo, hi) = wilson(r - j, r);
            let b = if use_hi { hi } else { lo };
            (b <= eps).then_some(sorted[j - 1])
        })
    };
    let point = crossing(true).filter(|t| t.is_finite()).ok_or_else(|| Error::CapExceeded {
        cap,
        reason: format!("Wilson bound cannot reach {eps} with {r} replicas under the cap"),
    })?;
    let lower = crossing(false).unwrap_or(point).min(point);
    Ok((point, (lower, point)))
}

/// Upper-bound-flavored mixing time: the grand-coupling time quantile.
pub fn estimate_tmix_coupling(
    env: &Environment,
    k: usize,
    eps: f64,
    replicas: usize,
    seed: u64,
    cap: f64,
) -> Result<EstimateReport> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::ShapeMismatch("eps must lie in (0, 1)".into()));
    }
    check_replicas(replicas)?;
    let taus = coupling_times(env, k, replicas, seed, cap)?;
    let timeouts = taus.iter().filter(|t| t.is_none()).count();
    let (point, ci) = coupling_quantile(&taus, eps, cap)?;
    Ok(EstimateReport { point, ci, replicas, seed, method: "coupling", timeouts })
}

/// Frequency of `{leftmost particle of sigma_min_t <= n/4}`.
#[derive(Debug, Clone, PartialEq)]
pub struct LeftmostWitness {
    pub frequency: f64,
    pub ci: (f64, f64),
    pub replicas: usize,
    /// deepest trap in `1..=n/4`
    pub trap: Trap,
    /// `exp(depth) / (2e) - 1`
    pub predicted_blocking_time: f64,
}

fn sigma_min_at(env: &Environment, k: usize, t: f64, seed: u64, r: u64) -> Result<Configuration> {
    let (lo, _) = Configuration::extremal(env.n(), k)?;
    evolve(&lo, env, &mut EventSource::for_replica(seed, r), t, Modifiers::default())
}

pub fn witness_leftmost(env: &Environment, k: usize, t: f64, replicas: usize, seed: u64) -> Result<LeftmostWitness> {
    check_replicas(replicas)?;
    let n = env.n();
    let quarter = n / 4;
    let trap = deepest_trap(&potential(env), 1..=quarter.max(1))?;
    let hits: Vec<bool> = (0..replicas as u64)
        .into_par_iter()
        .map(|r| sigma_min_at(env, k, t, seed, r).map(|xi| xi.positions()[0] <= quarter))
        .collect::<Result<_>>()?;
    let count = hits.iter().filter(|&&h| h).count();
    Ok(LeftmostWitness {
        frequency: count as f64 / replicas as f64,
        ci: wilson(count, replicas),
        replicas,
        trap,
        predicted_blocking_time: trap.depth.exp() / (2.0 * std::f64::consts::E) - 1.0,
    })
}

/// Mean number of particles past `y2` and the resulting distance lower bound.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowWitness {
    pub mean_j: f64,
    pub se_j: f64,
    /// `1 - 4 E[J] / k - 1/8`
    pub bound: f64,
    pub replicas: usize,
}

/// The slack constant of the flow bound.
pub const FLOW_EPS: f64 = 0.125;

pub fn witness_flow(
    env: &Environment,
    k: usize,
    y2: usize,
    t: f64,
    replicas: usize,
    seed: u64,
) -> Result<FlowWitness> {
    check_replicas(replicas)?;
    if y2 < 1 || y2 >= env.n() {
        return Err(Error::EmptyRange(format!("y2 = {y2} must lie in 1..n")));
    }
    let js: Vec<f64> = (0..replicas as u64)
        .into_par_iter()
        .map(|r| sigma_min_at(env, k, t, seed, r).map(|xi| xi.tail_count(y2) as f64))
        .collect::<Result<_>>()?;
    let (mean_j, se_j) = mean_se(&js);
    Ok(FlowWitness { mean_j, se_j, bound: 1.0 - 4.0 * mean_j / k as f64 - FLOW_EPS, replicas })
}

/// Per replica, `(J_t, absorbed_t)` for `sigma_min` and the window chain on `x2..=y2`
/// driven by the same rings; the window chain starts empty.
pub fn flow_coupled_counts(
    env: &Environment,
    k: usize,
    x2: usize,
    y2: usize,
    t: f64,
    replicas: usize,
    seed: u64,
) -> Result<Vec<(usize, u64)>> {
    check_replicas(replicas)?;
    if !(2 <= x2 && x2 <= y2 && y2 < env.n()) {
        return Err(Error::EmptyRange(format!("window {x2}..={y2}")));
    }
    let n = env.n();
    (0..replicas as u64)
        .into_par_iter()
        .map(|r| {
            let (mut xi, _) = Configuration::extremal(n, k)?;
            let mut st = FlowState::empty(x2, y2);
            let mut src = EventSource::for_replica(seed, r);
            while let Some(ring) = src.next_ring_until(n, t) {
                apply_ring(&mut xi, env.omegas(), &ring, None);
                st.apply(env.omegas(), &ring);
            }
            Ok((xi.tail_count(y2), st.absorbed))
        })
        .collect()
}

/// Frequency of `{m(sigma_min_t) >= median_pi m}` with the drift and Markov bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct MassWitness {
    pub frequency: f64,
    pub ci: (f64, f64),
    pub median: u64,
    pub mean_m: f64,
    pub se_m: f64,
    /// `k(k+1)/2 + k t`, a bound on `E[m(sigma_min_t)]`
    pub drift_bound: f64,
    /// `2t / (n - k)`, a bound on `P(m(sigma_min_t) >= k(n+1)/2)`
    pub markov_bound: f64,
    pub replicas: usize,
}

pub fn witness_mass(env: &Environment, k: usize, t: f64, replicas: usize, seed: u64) -> Result<MassWitness> {
    check_replicas(replicas)?;
    let n = env.n();
    let median = EquilibriumTable::build(&potential(env), k)?.median_m()?;
    let ms: Vec<u64> = (0..replicas as u64)
        .into_par_iter()
        .map(|r| sigma_min_at(env, k, t, seed, r).map(|xi| xi.observable_m()))
        .collect::<Result<_>>()?;
    let count = ms.iter().filter(|&&m| m >= median).count();
    let (mean_m, se_m) = mean_se(&ms.iter().map(|&m| m as f64).collect::<Vec<_>>());
    let kf = k as f64;
    Ok(MassWitness {
        frequency: count as f64 / replicas as f64,
        ci: wilson(count, replicas),
        median,
        mean_m,
        se_m,
        drift_bound: kf * (kf + 1.0) / 2.0 + kf * t,
        markov_bound: 2.0 * t / (n - k) as f64,
        replicas,
    })
}

/// One size of a scaling run.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalingRow {
    pub n: usize,
    pub k: usize,
    pub beta: f64,
    pub lambda: f64,
    /// `None` when the estimate could not close under the cap
    pub t_hat: Option<f64>,
    pub ci: Option<(f64, f64)>,
    pub timeouts: usize,
    pub predicted_exponent: f64,
}

impl ScalingRow {
    pub fn censored(&self) -> bool {
        self.t_hat.is_none()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalingReport {
    pub rows: Vec<ScalingRow>,
    /// fit of `log t_hat` against `log n` over uncensored rows
    pub fit: Option<LineFit>,
}

/// `max(1, 1/lambda, beta + 1/(2 lambda))`.
pub fn predicted_exponent(lambda: f64, beta: f64) -> f64 {
    1f64.max(1.0 / lambda).max(beta + 1.0 / (2.0 * lambda))
}

/// `ceil(n^beta)`, at least one.
pub fn particles_for(n: usize, beta: f64) -> usize {
    ((n as f64).powf(beta) - 1e-9).ceil().max(1.0) as usize
}

/// Parameters of a scaling run.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalingSpec {
    pub beta: f64,
    pub sizes: Vec<usize>,
    pub eps: f64,
    pub replicas: usize,
    pub seed: u64,
    /// time cap per replica; `None` uses [`default_cap`] for the pair's ring rate `2k`
    pub cap: Option<f64>,
}

/// Default time cap: about `1e9` expected rings per replica for clocks of total `rate`.
pub fn default_cap(rate: usize) -> f64 {
    1e9 / rate as f64
}

/// Coupling-time estimates, one environment per size: row `i` uses environment
/// seed `seed + i`.
pub fn scaling_run(law: &LawSpec, spec: &ScalingSpec) -> Result<ScalingReport> {
    let lambda = lambda_root(law)?;
    if spec.sizes.is_empty() {
        return Err(Error::EmptyRange("no sizes".into()));
    }
    let mut rows = Vec::with_capacity(spec.sizes.len());
    for (row, &n) in spec.sizes.iter().enumerate() {
        let k = particles_for(n, spec.beta);
        if 2 * k > n {
            return Err(Error::BadK { n, k });
        }
        let env = sample_env(law, n, spec.seed.wrapping_add(row as u64))?;
        let cap = spec.cap.unwrap_or_else(|| default_cap(2 * k));
        // each row owns a disjoint block of replica streams
        let base = spec.seed.wrapping_add((row as u64) << 40);
        let taus = coupling_times(&env, k, spec.replicas, base, cap)?;
        let timeouts = taus.iter().filter(|t| t.is_none()).count();
        let (t_hat, ci) = match coupling_quantile(&taus, spec.eps, cap) {
            Ok((p, ci)) => (Some(p), Some(ci)),
            Err(Error::CapExceeded { .. }) => (None, None),
            Err(e) => return Err(e),
        };
        rows.push(ScalingRow {
            n,
            k,
            beta: spec.beta,
            lambda,
            t_hat,
            ci,
            timeouts,
            predicted_exponent: predicted_exponent(lambda, spec.beta),
        });
    }
    let (xs, ys): (Vec<f64>, Vec<f64>) =
        rows.iter().filter_map(|r| r.t_hat.map(|t| ((r.n as f64).ln(), t.ln()))).unzip();
    Ok(ScalingReport { fit: fit_line(&xs, &ys), rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact::ExactChain;

    fn two_point(n: usize, seed: u64) -> Environment {
        sample_env(&LawSpec::two_point(0.25, 0.3).unwrap(), n, seed).unwrap()
    }

    #[test]
    fn quantile_rules() {
        let taus: Vec<Option<f64>> = (1..=100).map(|i| Some(i as f64)).collect();
        let (p, (lo, hi)) = coupling_quantile(&taus, 0.25, 1e9).unwrap();
        // Wilson bounds of (100 - j)/100 first reach 0.25 at j = 84 (upper) and 67 (lower)
        assert_eq!(p, 84.0);
        assert_eq!((lo, hi), (67.0, 84.0));
        let mut with_timeouts = taus.clone();
        with_timeouts[..40].iter_mut().for_each(|t| *t = None);
        assert!(matches!(coupling_quantile(&with_timeouts, 0.25, 1e9), Err(Error::CapExceeded { .. })));
    }

    #[test]
    fn two_site_estimate_near_exact() {
        let env = Environment::from_omega(vec![0.5, 0.5]).unwrap();
        let exact = ExactChain::build(&env, 1).unwrap().t_mix_exact(0.25).unwrap();
        let est = estimate_tmix_coupling(&env, 1, 0.25, 400, 7, 1e6).unwrap();
        assert!(est.point <= 3.0 * exact && est.point >= exact / 3.0, "{} vs {exact}", est.point);
        assert!(est.ci.0 <= est.point && est.point <= est.ci.1);
        assert_eq!(est.timeouts, 0);
    }

    #[test]
    fn ci_shrinks_with_replicas() {
        let env = two_point(10, 3);
        let w = |r| {
            let e = estimate_tmix_coupling(&env, 3, 0.25, r, 11, 1e7).unwrap();
            e.ci.1 - e.ci.0
        };
        let ratio = w(400) / w(1600);
        assert!(ratio > 1.3 && ratio < 3.0, "{ratio}");
    }

    #[test]
    fn reproducible_across_pool_widths() {
        let env = two_point(12, 1);
        let a = estimate_tmix_coupling(&env, 4, 0.25, 64, 5, 1e7).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
        let b = pool.install(|| estimate_tmix_coupling(&env, 4, 0.25, 64, 5, 1e7).unwrap());
        assert_eq!(a, b);
    }

    #[test]
    fn witnesses_at_time_zero() {
        let env = two_point(40, 2);
        let l = witness_leftmost(&env, 5, 0.0, 20, 1).unwrap();
        assert_eq!(l.frequency, 1.0);
        let f = witness_flow(&env, 5, 30, 0.0, 20, 1).unwrap();
        assert_eq!((f.mean_j, f.bound), (0.0, 0.875));
        let m = witness_mass(&env, 5, 0.0, 20, 1).unwrap();
        assert!(m.median > 15);
        assert_eq!(m.frequency, 0.0);
        assert_eq!(m.mean_m, 15.0);
    }

    #[test]
    fn mass_drift_bound() {
        let env = two_point(60, 4);
        for &t in &[5.0, 20.0, 80.0] {
            let m = witness_mass(&env, 8, t, 200, 3).unwrap();
            assert!(m.mean_m <= m.drift_bound + 3.0 * m.se_m);
        }
    }

    #[test]
    fn flow_counts_dominated() {
        let env = two_point(40, 5);
        for (j, a) in flow_coupled_counts(&env, 6, 12, 20, 300.0, 40, 9).unwrap() {
            assert!(j as u64 <= a);
        }
        let f = witness_flow(&env, 6, 20, 300.0, 40, 9).unwrap();
        assert!(f.mean_j <= 6.0);
    }

    #[test]
    fn exponent_and_particles() {
        let lam = (7.0f64 / 3.0).ln() / 3f64.ln();
        assert!((predicted_exponent(lam, 0.0) - 1.0 / lam).abs() < 1e-12);
        assert_eq!(predicted_exponent(f64::INFINITY, 0.5), 1.0);
        assert_eq!(particles_for(1024, 0.5), 32);
        assert_eq!(particles_for(128, 0.5), 12);
        assert_eq!(particles_for(100, 0.0), 1);
    }

    #[test]
    fn scaling_rows() {
        let law = LawSpec::two_point(0.25, 0.3).unwrap();
        let spec = ScalingSpec { beta: 0.0, sizes: vec![16, 32], eps: 0.25, replicas: 30, seed: 2, cap: None };
        let rep = scaling_run(&law, &spec).unwrap();
        assert_eq!(rep.rows.len(), 2);
        assert!(rep.rows.iter().all(|r| r.k == 1 && !r.censored()));
        assert!(rep.fit.is_some());
        let tight = ScalingSpec { cap: Some(1e-3), ..spec };
        let rep = scaling_run(&law, &tight).unwrap();
        assert!(rep.rows.iter().all(|r| r.censored() && r.timeouts == 30));
        assert!(rep.fit.is_none());
    }
}
