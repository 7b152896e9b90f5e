//! Full enumeration of the chain at small sizes: generator, spectrum, transients,
//! mixing times and the finite-size inequalities.

mod censor;
mod mixing;
mod paths;

pub use censor::{censored_transient, censoring_inequality_check, CensorCheckReport, CensorCheckRow};
pub use mixing::{MixingPowers, DENSE_LIMIT};
pub use paths::{canonical_path_bound, PathBound};

use faer::{Mat, Side};

use crate::environment::{potential, Environment, PotentialProfile};
use crate::equilibrium::EquilibriumTable;
use crate::error::{Error, Result};
use crate::linalg::{poisson_cutoff, poisson_weights, stationary_from_moves};
use crate::state::{enumerate, Configuration};

/// Largest state space the chain is built for.
pub const STATE_LIMIT: usize = 200_000;
/// Largest state space for dense eigensolves.
pub const EIGEN_LIMIT: usize = 5_000;
/// Tail mass dropped by Poisson truncations.
pub const POISSON_TOL: f64 = 1e-12;

/// One transition out of a state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transition {
    pub to: usize,
    pub rate: f64,
    /// rate of the reverse transition
    pub back: f64,
    /// the edge `{e, e+1}` crossed
    pub edge: usize,
}

/// Enumerated chain on `k`-particle configurations of `1..=n`, states in colex order.
#[derive(Debug, Clone)]
pub struct ExactChain {
    n: usize,
    k: usize,
    alpha: f64,
    omega: Vec<f64>,
    profile: PotentialProfile,
    states: Vec<Vec<usize>>,
    binom: Vec<Vec<usize>>,
    row_ptr: Vec<usize>,
    trans: Vec<Transition>,
    exit: Vec<f64>,
    pi: Vec<f64>,
    uniform_rate: f64,
}

/// `C(n, k)` saturating at `u128::MAX`.
pub fn state_count(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut c: u128 = 1;
    for i in 0..k {
        c = match c.checked_mul((n - i) as u128) {
            Some(v) => v / (i as u128 + 1),
            None => return u128::MAX,
        };
    }
    c
}

impl ExactChain {
    pub fn build(env: &Environment, k: usize) -> Result<Self> {
        let n = env.n();
        if k < 1 || k + 1 > n {
            return Err(Error::BadK { n, k });
        }
        let count = state_count(n, k);
        if count > STATE_LIMIT as u128 {
            return Err(Error::TooLarge { states: count, limit: STATE_LIMIT });
        }
        let profile = potential(env);
        let table = EquilibriumTable::build(&profile, k)?;
        let mut binom = vec![vec![0usize; k + 2]; n + 1];
        for m in 0..=n {
            binom[m][0] = 1;
            for j in 1..=k + 1 {
                binom[m][j] = if m == 0 { 0 } else { binom[m - 1][j - 1] + binom[m - 1][j] };
            }
        }
        let states: Vec<Vec<usize>> = enumerate(n, k).collect();
        let omega = env.omegas().to_vec();
        let mut chain = ExactChain {
            n,
            k,
            alpha: env.alpha(),
            omega,
            profile,
            states: Vec::new(),
            binom,
            row_ptr: vec![0],
            trans: Vec::new(),
            exit: Vec::with_capacity(states.len()),
            pi: Vec::with_capacity(states.len()),
            uniform_rate: 0.0,
        };
        let log_z = table.log_z();
        for pos in &states {
            let mut exit = 0.0;
            for (i, &x) in pos.iter().enumerate() {
                let right_free = x < n && pos.get(i + 1) != Some(&(x + 1));
                let left_free = x > 1 && (i == 0 || pos[i - 1] != x - 1);
                if right_free {
                    let (rate, back) = (chain.omega[x - 1], 1.0 - chain.omega[x]);
                    let to = chain.rank_after_step(pos, i, x + 1);
                    chain.trans.push(Transition { to, rate, back, edge: x });
                    exit += rate;
                }
                if left_free {
                    let (rate, back) = (1.0 - chain.omega[x - 1], chain.omega[x - 2]);
                    let to = chain.rank_after_step(pos, i, x - 1);
                    chain.trans.push(Transition { to, rate, back, edge: x - 1 });
                    exit += rate;
                }
            }
            chain.row_ptr.push(chain.trans.len());
            chain.exit.push(exit);
            chain.uniform_rate = chain.uniform_rate.max(exit);
            let lw: f64 = pos.iter().map(|&x| table.log_weight(x)).sum();
            chain.pi.push((lw - log_z).exp());
        }
        chain.states = states;
        Ok(chain)
    }

    /// Colex rank of a sorted position vector.
    pub fn rank(&self, pos: &[usize]) -> usize {
        pos.iter().enumerate().map(|(i, &p)| self.binom[p - 1][i + 1]).sum()
    }

    fn rank_after_step(&self, pos: &[usize], i: usize, to: usize) -> usize {
        let r = self.rank(pos);
        r + self.binom[to - 1][i + 1] - self.binom[pos[i] - 1][i + 1]
    }

    /// Rank change when particle `i` moves from `from` to `to`.
    pub(crate) fn rank_delta(&self, i: usize, from: usize, to: usize) -> isize {
        self.binom[to - 1][i + 1] as isize - self.binom[from - 1][i + 1] as isize
    }

    pub fn index_of(&self, xi: &Configuration) -> Result<usize> {
        if xi.n() != self.n || xi.k() != self.k {
            return Err(Error::ShapeMismatch(format!(
                "configuration (n={}, k={}) vs chain (n={}, k={})",
                xi.n(),
                xi.k(),
                self.n,
                self.k
            )));
        }
        Ok(self.rank(xi.positions()))
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn omega(&self) -> &[f64] {
        &self.omega
    }

    pub fn profile(&self) -> &PotentialProfile {
        &self.profile
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn positions(&self, i: usize) -> &[usize] {
        &self.states[i]
    }

    pub fn state(&self, i: usize) -> Configuration {
        Configuration::from_positions(self.n, self.states[i].clone()).expect("enumerated state")
    }

    pub fn transitions(&self, i: usize) -> &[Transition] {
        &self.trans[self.row_ptr[i]..self.row_ptr[i + 1]]
    }

    pub fn exit_rate(&self, i: usize) -> f64 {
        self.exit[i]
    }

    pub fn pi(&self) -> &[f64] {
        &self.pi
    }

    pub fn pi_min(&self) -> f64 {
        self.pi.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Uniformization rate: the largest exit rate.
    pub fn uniform_rate(&self) -> f64 {
        self.uniform_rate
    }

    /// Indices of the minimal and maximal configurations.
    pub fn extremal_indices(&self) -> (usize, usize) {
        (0, self.len() - 1)
    }

    /// Largest relative violation of `pi_i r_ij = pi_j r_ji`.
    pub fn detailed_balance_residual(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.len() {
            for t in self.transitions(i) {
                let (a, b) = (self.pi[i] * t.rate, self.pi[t.to] * t.back);
                worst = worst.max((a - b).abs() / a.max(b));
            }
        }
        worst
    }

    /// Stationary vector by a sparse null-space solve, independent of the product form.
    pub fn stationary_by_solve(&self) -> Result<Vec<f64>> {
        let mut moves = Vec::with_capacity(self.trans.len());
        for i in 0..self.len() {
            moves.extend(self.transitions(i).iter().map(|t| (i, t.to, t.rate)));
        }
        stationary_from_moves(self.len(), &moves)
    }

    /// `D^{1/2} (-L) D^{-1/2}`, a symmetric matrix with the spectrum of `-L`.
    pub fn symmetrized_generator(&self) -> Result<Mat<f64>> {
        let m = self.len();
        if m > EIGEN_LIMIT {
            return Err(Error::TooLarge { states: m as u128, limit: EIGEN_LIMIT });
        }
        let mut h = Mat::<f64>::zeros(m, m);
        for i in 0..m {
            h[(i, i)] = self.exit[i];
            for t in self.transitions(i) {
                h[(i, t.to)] = -(t.rate * t.back).sqrt();
            }
        }
        Ok(h)
    }

    /// Eigenvalues of `-L` in non-decreasing order.
    pub fn spectrum(&self) -> Result<Vec<f64>> {
        self.symmetrized_generator()?
            .self_adjoint_eigenvalues(Side::Lower)
            .map_err(|e| Error::Numerical(format!("eigensolve: {e:?}")))
    }

    /// Smallest non-zero eigenvalue of `-L`.
    pub fn spectral_gap(&self) -> Result<f64> {
        let s = self.spectrum()?;
        Ok(s[1])
    }

    fn poisson(&self, t: f64) -> Vec<f64> {
        let mean = self.uniform_rate * t;
        poisson_weights(mean, poisson_cutoff(mean, POISSON_TOL))
    }

    /// `v K` for the uniformized kernel `K = I + L / rate`, restricted to open edges.
    pub(crate) fn step_row(&self, v: &[f64], out: &mut [f64], blocked: Option<&[bool]>) {
        let lam = self.uniform_rate;
        for i in 0..self.len() {
            let mut stay = lam;
            for t in self.transitions(i) {
                if blocked.is_some_and(|m| m[t.edge - 1]) {
                    continue;
                }
                stay -= t.rate;
            }
            out[i] = v[i] * stay / lam;
        }
        for i in 0..self.len() {
            if v[i] == 0.0 {
                continue;
            }
            for t in self.transitions(i) {
                if blocked.is_some_and(|m| m[t.edge - 1]) {
                    continue;
                }
                out[t.to] += v[i] * t.rate / lam;
            }
        }
    }

    /// `K f` for a function on states.
    fn step_col(&self, f: &[f64], out: &mut [f64]) {
        let lam = self.uniform_rate;
        for i in 0..self.len() {
            let mut acc = f[i] * (lam - self.exit[i]);
            for t in self.transitions(i) {
                acc += t.rate * f[t.to];
            }
            out[i] = acc / lam;
        }
    }

    /// `v e^{tL}` by uniformization, optionally with edges closed.
    pub(crate) fn propagate(&self, v: &[f64], t: f64, blocked: Option<&[bool]>) -> Vec<f64> {
        if t <= 0.0 {
            return v.to_vec();
        }
        let w = self.poisson(t);
        let mut cur = v.to_vec();
        let mut next = vec![0.0; v.len()];
        let mut acc: Vec<f64> = cur.iter().map(|x| x * w[0]).collect();
        for &wj in &w[1..] {
            self.step_row(&cur, &mut next, blocked);
            std::mem::swap(&mut cur, &mut next);
            for (a, c) in acc.iter_mut().zip(&cur) {
                *a += wj * c;
            }
        }
        acc
    }

    /// Law at time `t` started from `xi0`.
    pub fn transient(&self, xi0: &Configuration, t: f64) -> Result<Vec<f64>> {
        let i = self.index_of(xi0)?;
        let mut v = vec![0.0; self.len()];
        v[i] = 1.0;
        Ok(self.transient_from(&v, t))
    }

    /// Law at time `t` from an initial distribution.
    pub fn transient_from(&self, v: &[f64], t: f64) -> Vec<f64> {
        self.propagate(v, t, None)
    }

    /// `P_t(., target)` over all start states.
    pub fn transient_column(&self, target: &Configuration, t: f64) -> Result<Vec<f64>> {
        let j = self.index_of(target)?;
        let mut f = vec![0.0; self.len()];
        f[j] = 1.0;
        if t <= 0.0 {
            return Ok(f);
        }
        let w = self.poisson(t);
        let mut next = vec![0.0; f.len()];
        let mut acc: Vec<f64> = f.iter().map(|x| x * w[0]).collect();
        for &wj in &w[1..] {
            self.step_col(&f, &mut next);
            std::mem::swap(&mut f, &mut next);
            for (a, c) in acc.iter_mut().zip(&f) {
                *a += wj * c;
            }
        }
        Ok(acc)
    }

    /// Worst-case total variation distance to equilibrium at time `t`.
    pub fn tv_to_pi(&self, t: f64) -> Result<f64> {
        let p = mixing::semigroup(self, t)?;
        Ok(mixing::worst_tv(&p, &self.pi))
    }

    /// `d(t)` from the eigendecomposition; accurate in the tail, used for decay rates.
    pub fn tv_to_pi_spectral(&self, times: &[f64]) -> Result<Vec<f64>> {
        let h = self.symmetrized_generator()?;
        let eig = h.self_adjoint_eigen(Side::Lower).map_err(|e| Error::Numerical(format!("eigensolve: {e:?}")))?;
        let (u, s) = (eig.U(), eig.S().column_vector());
        let m = self.len();
        let sq: Vec<f64> = self.pi.iter().map(|p| p.sqrt()).collect();
        let mut out = Vec::with_capacity(times.len());
        for &t in times {
            let decay: Vec<f64> = (0..m).map(|l| (-s[l] * t).exp()).collect();
            let mut worst: f64 = 0.0;
            for i in 0..m {
                let mut tv = 0.0;
                for j in 0..m {
                    let mut acc = 0.0;
                    // the stationary mode is exact: skip it and add pi_j back
                    for l in 1..m {
                        acc += decay[l] * u[(i, l)] * u[(j, l)];
                    }
                    tv += (acc * sq[j] / sq[i]).abs();
                }
                worst = worst.max(0.5 * tv);
            }
            out.push(worst);
        }
        Ok(out)
    }

    /// Exact `t_mix(eps)`, bracketed to relative `1e-6`.
    pub fn t_mix_exact(&self, eps: f64) -> Result<f64> {
        Ok(self.t_mix_many(&[eps])?[0])
    }

    /// `t_mix` for several thresholds sharing one set of kernel powers.
    pub fn t_mix_many(&self, eps: &[f64]) -> Result<Vec<f64>> {
        if eps.iter().any(|&e| !(e > 0.0 && e < 1.0)) {
            return Err(Error::ShapeMismatch("eps must lie in (0, 1)".into()));
        }
        let gap = self.spectral_gap()?;
        let emax = eps.iter().copied().fold(0.0, f64::max);
        let reference = (1.0 / (2.0 * emax)).ln().max(0.05) / gap;
        let mut powers = MixingPowers::new(self, reference)?;
        eps.iter().map(|&e| powers.t_mix(e)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environment::sample_env;
    use crate::law::LawSpec;
    use std::collections::VecDeque;

    fn env(w: &[f64]) -> Environment {
        Environment::from_omega(w.to_vec()).unwrap()
    }

    fn random(n: usize, seed: u64) -> Environment {
        sample_env(&LawSpec::two_point(0.25, 0.3).unwrap(), n, seed).unwrap()
    }

    #[test]
    fn two_state_chain() {
        let c = ExactChain::build(&env(&[0.3, 0.7]), 1).unwrap();
        assert_eq!(c.len(), 2);
        let t = c.transitions(0);
        assert_eq!((t.len(), t[0].to, t[0].edge, t[0].rate), (1, 1, 1, 0.3));
        assert!((t[0].back - 0.3).abs() < 1e-15);
        assert!((c.transitions(1)[0].rate - 0.3).abs() < 1e-15);
        assert!((c.spectral_gap().unwrap() - 0.6).abs() < 1e-12);
        let c = ExactChain::build(&env(&[0.4, 0.2]), 1).unwrap();
        assert!((c.transitions(1)[0].rate - 0.8).abs() < 1e-15);
        assert!((c.spectral_gap().unwrap() - 1.2).abs() < 1e-12);
    }

    #[test]
    fn homogeneous_path_gap() {
        let c = ExactChain::build(&env(&[0.5; 4]), 1).unwrap();
        let expect = 1.0 - (std::f64::consts::PI / 4.0).cos();
        assert!((c.spectral_gap().unwrap() - expect).abs() < 1e-12);
    }

    #[test]
    fn ranks_and_structure() {
        for seed in 0..6 {
            let n = 5 + seed as usize;
            let e = random(n, seed);
            for k in 1..n {
                let c = ExactChain::build(&e, k).unwrap();
                assert_eq!(c.len() as u128, state_count(n, k));
                for i in 0..c.len() {
                    assert_eq!(c.rank(c.positions(i)), i);
                    let row: f64 = c.transitions(i).iter().map(|t| t.rate).sum();
                    assert!((row - c.exit_rate(i)).abs() < 1e-12);
                    for t in c.transitions(i) {
                        let back = c.transitions(t.to).iter().find(|u| u.to == i).unwrap();
                        assert_eq!(back.rate, t.back);
                        assert_eq!(back.edge, t.edge);
                    }
                }
                assert!(c.detailed_balance_residual() < 1e-12);
                // single communicating class
                let mut seen = vec![false; c.len()];
                let mut q = VecDeque::from([0usize]);
                seen[0] = true;
                while let Some(i) = q.pop_front() {
                    for t in c.transitions(i) {
                        if !seen[t.to] {
                            seen[t.to] = true;
                            q.push_back(t.to);
                        }
                    }
                }
                assert!(seen.iter().all(|&s| s));
                let solved = c.stationary_by_solve().unwrap();
                for (a, b) in solved.iter().zip(c.pi()) {
                    assert!((a - b).abs() <= 1e-10 * b.max(1e-300) + 1e-14);
                }
            }
        }
        assert!(matches!(ExactChain::build(&random(40, 0), 10), Err(Error::TooLarge { .. })));
        assert!(matches!(ExactChain::build(&random(5, 0), 5), Err(Error::BadK { .. })));
    }

    #[test]
    fn gap_symmetries() {
        for seed in 0..10 {
            let e = random(9, seed);
            for k in 1..5 {
                // right jumps seen in a mirror are left jumps
                let g = ExactChain::build(&e, k).unwrap().spectral_gap().unwrap();
                let mirror = ExactChain::build(&e.mirrored(), k).unwrap().spectral_gap().unwrap();
                assert!((g - mirror).abs() < 1e-9, "{g} vs {mirror}");
            }
        }
    }

    #[test]
    fn transient_rows_and_stationarity() {
        let e = random(8, 4);
        let c = ExactChain::build(&e, 3).unwrap();
        let (lo, _) = Configuration::extremal(8, 3).unwrap();
        for &t in &[0.0, 0.3, 5.0, 60.0] {
            let p = c.transient(&lo, t).unwrap();
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(p.iter().all(|&x| x >= 0.0));
            let q = c.transient_from(c.pi(), t);
            for (a, b) in q.iter().zip(c.pi()) {
                assert!((a - b).abs() < 1e-12);
            }
        }
        // column and row routes agree
        let (lo, hi) = Configuration::extremal(8, 3).unwrap();
        let col = c.transient_column(&hi, 7.0).unwrap();
        let row = c.transient(&lo, 7.0).unwrap();
        assert!((col[0] - row[c.len() - 1]).abs() < 1e-13);
    }

    #[test]
    fn tv_start_and_monotone() {
        let e = random(7, 2);
        let c = ExactChain::build(&e, 2).unwrap();
        assert!((c.tv_to_pi(0.0).unwrap() - (1.0 - c.pi_min())).abs() < 1e-15);
        let mut last = f64::INFINITY;
        for i in 0..50 {
            let d = c.tv_to_pi(i as f64 * 2.0).unwrap();
            assert!(d <= last + 1e-12);
            last = d;
        }
    }

    #[test]
    fn tv_routes_agree_and_decay_rate() {
        let e = random(6, 11);
        let c = ExactChain::build(&e, 2).unwrap();
        let gap = c.spectral_gap().unwrap();
        let ts = [0.5, 3.0, 10.0];
        let spec = c.tv_to_pi_spectral(&ts).unwrap();
        for (t, s) in ts.iter().zip(&spec) {
            assert!((c.tv_to_pi(*t).unwrap() - s).abs() < 1e-9);
        }
        let t = 40.0 / gap;
        let d = c.tv_to_pi_spectral(&[t]).unwrap()[0];
        let rate = -d.ln() / t;
        assert!((rate - gap).abs() < 0.05 * gap, "{rate} vs {gap}");
    }

    #[test]
    fn t_mix_brackets() {
        let e = random(8, 6);
        let c = ExactChain::build(&e, 3).unwrap();
        let gap = c.spectral_gap().unwrap();
        let tm = c.t_mix_many(&[0.25, 0.1]).unwrap();
        for (&eps, &t) in [0.25, 0.1].iter().zip(&tm) {
            assert!(c.tv_to_pi(t).unwrap() <= eps);
            assert!(c.tv_to_pi(t * (1.0 - 2e-6)).unwrap() > eps);
            assert!(t >= (1.0 / (2.0 * eps)).ln() / gap - 1e-9);
            assert!(t <= (1.0 / (eps * c.pi_min())).ln() / gap + 1e-9);
        }
        assert!(tm[1] >= tm[0]);
        assert_eq!(c.t_mix_exact(0.25).unwrap(), tm[0]);
    }
}
