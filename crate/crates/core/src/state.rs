//! Particle configurations on `1..=n` and the order between them.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Occupancy bit board together with the increasing list of particle positions.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Configuration {
    n: usize,
    board: Vec<u64>,
    pos: Vec<usize>,
}

impl Configuration {
    pub fn from_positions(n: usize, positions: Vec<usize>) -> Result<Self> {
        if positions.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Parse("positions must be strictly increasing".into()));
        }
        if positions.first().is_some_and(|&p| p < 1) || positions.last().is_some_and(|&p| p > n) {
            return Err(Error::Parse(format!("positions must lie in 1..={n}")));
        }
        let mut board = vec![0u64; n.div_ceil(64)];
        for &p in &positions {
            board[(p - 1) >> 6] |= 1 << ((p - 1) & 63);
        }
        Ok(Configuration { n, board, pos: positions })
    }

    pub fn from_occupancy(occ: &[bool]) -> Self {
        let pos = (1..=occ.len()).filter(|&x| occ[x - 1]).collect();
        Self::from_positions(occ.len(), pos).expect("increasing by construction")
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn k(&self) -> usize {
        self.pos.len()
    }

    /// Positions `xi(1) < ... < xi(k)`.
    #[inline]
    pub fn positions(&self) -> &[usize] {
        &self.pos
    }

    #[inline]
    pub fn occupied(&self, x: usize) -> bool {
        (self.board[(x - 1) >> 6] >> ((x - 1) & 63)) & 1 == 1
    }

    pub fn occupancy(&self) -> Vec<bool> {
        (1..=self.n).map(|x| self.occupied(x)).collect()
    }

    /// Index of the particle sitting at `x`.
    #[inline]
    pub fn rank_of(&self, x: usize) -> Option<usize> {
        if self.occupied(x) {
            self.pos.binary_search(&x).ok()
        } else {
            None
        }
    }

    /// Moves particle `i` to the adjacent empty site `to`; the order of particles is unchanged.
    #[inline]
    pub(crate) fn step_particle(&mut self, i: usize, to: usize) {
        let from = self.pos[i];
        debug_assert!(from.abs_diff(to) == 1 && !self.occupied(to));
        self.board[(from - 1) >> 6] ^= 1 << ((from - 1) & 63);
        self.board[(to - 1) >> 6] |= 1 << ((to - 1) & 63);
        self.pos[i] = to;
    }

    /// Particles sit on `1..=k` (minimal) and on `n-k+1..=n` (maximal).
    pub fn extremal(n: usize, k: usize) -> Result<(Self, Self)> {
        if k < 1 || k + 1 > n {
            return Err(Error::BadK { n, k });
        }
        Ok((
            Self::from_positions(n, (1..=k).collect())?,
            Self::from_positions(n, (n - k + 1..=n).collect())?,
        ))
    }

    fn same_shape(&self, other: &Self) -> Result<()> {
        if self.n != other.n || self.k() != other.k() {
            return Err(Error::ShapeMismatch(format!(
                "(n={}, k={}) vs (n={}, k={})",
                self.n,
                self.k(),
                other.n,
                other.k()
            )));
        }
        Ok(())
    }

    /// Componentwise order of the position vectors.
    pub fn leq(&self, other: &Self) -> Result<bool> {
        self.same_shape(other)?;
        Ok(self.leq_unchecked(other))
    }

    #[inline]
    pub(crate) fn leq_unchecked(&self, other: &Self) -> bool {
        self.pos.iter().zip(&other.pos).all(|(a, b)| a <= b)
    }

    /// Exchanges the contents of sites `x` and `y`.
    pub fn swap(&self, x: usize, y: usize) -> Self {
        let mut occ = self.occupancy();
        occ.swap(x - 1, y - 1);
        Self::from_occupancy(&occ)
    }

    /// `m(xi) = sum of occupied sites`.
    pub fn observable_m(&self) -> u64 {
        self.pos.iter().map(|&p| p as u64).sum()
    }

    /// Number of particles strictly to the right of `y`.
    pub fn tail_count(&self, y: usize) -> usize {
        self.k() - self.pos.partition_point(|&p| p <= y)
    }

    /// Empty on `x <= n-k-r` and full on `x > n-k+r`.
    pub fn in_a_r(&self, r: usize) -> bool {
        let (n, k) = (self.n as i64, self.k() as i64);
        let r = r as i64;
        let empty_to = n - k - r;
        let full_from = n - k + r + 1;
        let left_ok = empty_to < 1 || self.pos[0] as i64 > empty_to;
        let need_full = (n - full_from + 1).max(0);
        let full_ok = need_full == 0
            || (need_full <= k && self.pos[(k - need_full) as usize] as i64 >= full_from);
        left_ok && full_ok
    }

    /// Half the size of the symmetric difference of the occupied sets.
    pub fn hamming(&self, other: &Self) -> Result<usize> {
        self.same_shape(other)?;
        let d: u32 = self.board.iter().zip(&other.board).map(|(a, b)| (a & !b).count_ones()).sum();
        Ok(d as usize)
    }

    /// Sites where `self` has a surplus particle, and sites where `other` has one, both increasing.
    pub fn discrepancy_pairs(&self, other: &Self) -> Result<(Vec<usize>, Vec<usize>)> {
        self.same_shape(other)?;
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for x in 1..=self.n {
            match (self.occupied(x), other.occupied(x)) {
                (true, false) => xs.push(x),
                (false, true) => ys.push(x),
                _ => {}
            }
        }
        Ok((xs, ys))
    }
}

impl fmt::Display for Configuration {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for x in 1..=self.n {
            f.write_str(if self.occupied(x) { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl FromStr for Configuration {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let occ = s
            .chars()
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                _ => Err(Error::Parse(format!("unexpected character {c:?} in configuration"))),
            })
            .collect::<Result<Vec<bool>>>()?;
        if occ.is_empty() {
            return Err(Error::Parse("empty configuration".into()));
        }
        Ok(Self::from_occupancy(&occ))
    }
}

/// All `k`-subsets of `1..=n` in colexicographic order, as position vectors.
pub fn enumerate(n: usize, k: usize) -> impl Iterator<Item = Vec<usize>> {
    let mut cur: Option<Vec<usize>> = if k <= n { Some((1..=k).collect()) } else { None };
    std::iter::from_fn(move || {
        let out = cur.clone()?;
        let c = cur.as_mut().unwrap();
        // advance: find the first position that can move up without colliding
        let mut i = 0;
        loop {
            if i == k {
                cur = None;
                break;
            }
            let limit = if i + 1 < k { c[i + 1] } else { n + 1 };
            if c[i] + 1 < limit {
                c[i] += 1;
                for (j, slot) in c.iter_mut().enumerate().take(i) {
                    *slot = j + 1;
                }
                break;
            }
            i += 1;
        }
        Some(out)
    })
}
