//! Small numerical helpers shared by the exact solvers.

use faer::linalg::solvers::Solve;
use faer::sparse::{SparseColMat, Triplet};
use faer::Mat;
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};

/// Stationary law of an irreducible chain given as `(from, to, rate)` moves.
///
/// Fixes the mass of state 0 to one, solves the remaining balance equations with a
/// sparse LU and normalizes.
pub(crate) fn stationary_from_moves(size: usize, moves: &[(usize, usize, f64)]) -> Result<Vec<f64>> {
    if size == 1 {
        return Ok(vec![1.0]);
    }
    let m = size - 1;
    let mut trips = Vec::with_capacity(2 * moves.len());
    let mut rhs = Mat::<f64>::zeros(m, 1);
    for &(from, to, rate) in moves {
        if from == to {
            continue;
        }
        if from != 0 {
            trips.push(Triplet::new(from - 1, from - 1, -rate));
        }
        if to != 0 {
            if from == 0 {
                rhs[(to - 1, 0)] -= rate;
            } else {
                trips.push(Triplet::new(to - 1, from - 1, rate));
            }
        }
    }
    let a = SparseColMat::<usize, f64>::try_new_from_triplets(m, m, &trips)
        .map_err(|e| Error::Numerical(format!("generator assembly: {e:?}")))?;
    let lu = a.sp_lu().map_err(|e| Error::Numerical(format!("generator LU: {e:?}")))?;
    let sol = lu.solve(&rhs);
    let mut mu = Vec::with_capacity(size);
    mu.push(1.0);
    mu.extend((0..m).map(|i| sol[(i, 0)]));
    let total: f64 = mu.iter().sum();
    if !(total.is_finite() && total > 0.0 && mu.iter().all(|&v| v > -1e-9 * total)) {
        return Err(Error::Numerical("stationary solve failed".into()));
    }
    Ok(mu.into_iter().map(|v| v.max(0.0) / total).collect())
}

/// Truncation index `J` with `P(Poisson(mean) > J) <= tol` by the Chernoff bound.
pub(crate) fn poisson_cutoff(mean: f64, tol: f64) -> usize {
    if mean <= 0.0 {
        return 0;
    }
    let log_tol = tol.ln();
    let mut j = mean.ceil() as usize;
    loop {
        let m = (j + 1) as f64;
        // P(N >= m) <= exp(-mean) (e mean / m)^m
        if -mean + m * (1.0 + mean.ln() - m.ln()) <= log_tol {
            return j;
        }
        j += 1 + j / 64;
    }
}

/// Poisson weights `P(N = j)` for `j = 0..=cutoff`.
pub(crate) fn poisson_weights(mean: f64, cutoff: usize) -> Vec<f64> {
    if mean <= 0.0 {
        return vec![1.0];
    }
    let lm = mean.ln();
    (0..=cutoff).map(|j| (-mean + j as f64 * lm - ln_gamma(j as f64 + 1.0)).exp()).collect()
}
