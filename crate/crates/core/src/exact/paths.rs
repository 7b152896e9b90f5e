use super::ExactChain;
use crate::environment::exact_diff;

/// Congestion of the canonical paths through the most likely configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct PathBound {
    /// `B`, so that the spectral gap is at least `1 / B`
    pub b: f64,
    /// longest concatenated path `xi -> xi* -> xi'`
    pub max_len: usize,
    /// most congested edge: state index with the particle on the left, and the edge
    pub worst_edge: (usize, usize),
    /// the `k` sites of lowest potential
    pub center: Vec<usize>,
}

/// Sites of the `k` smallest potential values (ties to the left).
pub(crate) fn center_sites(chain: &ExactChain) -> Vec<usize> {
    let v = chain.profile().v_values();
    let mut sites: Vec<usize> = (1..=chain.n()).collect();
    sites.sort_by(|&a, &b| {
        let (hi, lo) = exact_diff(v[a - 1], v[b - 1]);
        (hi, lo).partial_cmp(&(0.0, 0.0)).expect("finite potential").then(a.cmp(&b))
    });
    let mut c = sites[..chain.k()].to_vec();
    c.sort_unstable();
    c
}

/// Steps `(state index with the particle on the left, edge)` of the path from state
/// `start` to `center`: discrepancies are paired in increasing order and each pair
/// is resolved by relaying particles one site at a time.
pub(crate) fn path_to_center(chain: &ExactChain, start: usize, center: &[usize]) -> Vec<(usize, usize)> {
    let mut pos = chain.positions(start).to_vec();
    let mut rank = start as isize;
    let xs: Vec<usize> = pos.iter().copied().filter(|p| center.binary_search(p).is_err()).collect();
    let ys: Vec<usize> = center.iter().copied().filter(|p| pos.binary_search(p).is_err()).collect();
    let mut steps = Vec::new();
    for (&x, &y) in xs.iter().zip(&ys) {
        if x < y {
            // rightmost particle in [x, y) runs to y, the next one into its old site, ...
            let mut target = y;
            loop {
                let i = pos.partition_point(|&p| p < target) - 1;
                let from = pos[i];
                debug_assert!(from >= x);
                for z in from..target {
                    steps.push((rank as usize, z));
                    rank += chain.rank_delta(i, z, z + 1);
                    pos[i] = z + 1;
                }
                if from == x {
                    break;
                }
                target = from;
            }
        } else {
            let mut target = y;
            loop {
                let i = pos.partition_point(|&p| p <= target);
                let from = pos[i];
                debug_assert!(from <= x);
                for z in ((target + 1)..=from).rev() {
                    rank += chain.rank_delta(i, z, z - 1);
                    pos[i] = z - 1;
                    steps.push((rank as usize, z - 1));
                }
                if from == x {
                    break;
                }
                target = from;
            }
        }
    }
    debug_assert_eq!(pos, center);
    steps
}

/// Canonical-path congestion `B = max_e (1 / Q(e)) * (1/2) sum_{paths through e} pi pi |path|`,
/// each path counted once per traversal of `e`.
pub fn canonical_path_bound(chain: &ExactChain) -> PathBound {
    let center = center_sites(chain);
    let pi = chain.pi();
    let m = chain.len();
    // loads keyed by (left state, edge); the right move out of the left state
    let mut a0 = vec![0.0; m * chain.n()];
    let mut a1 = vec![0.0; m * chain.n()];
    let mut mean_len = 0.0;
    let mut longest = 0;
    let mut touched: Vec<usize> = Vec::new();
    for s in 0..m {
        let path = path_to_center(chain, s, &center);
        let len = path.len() as f64;
        longest = longest.max(path.len());
        mean_len += pi[s] * len;
        for (state, edge) in path {
            let key = state * chain.n() + edge;
            if a0[key] == 0.0 {
                touched.push(key);
            }
            a0[key] += pi[s];
            a1[key] += pi[s] * len;
        }
    }
    let mut best = (0.0, (0, 0));
    touched.sort_unstable();
    for key in touched {
        let (state, edge) = (key / chain.n(), key % chain.n());
        let q = pi[state] * chain.omega()[edge - 1];
        // sum over ordered pairs of pi(xi) pi(xi') (|g_xi| + |g_xi'|) (m_e(xi) + m_e(xi'))
        let load = 2.0 * (a1[key] + a0[key] * mean_len);
        let b = load / (2.0 * q);
        if b > best.0 {
            best = (b, (state, edge));
        }
    }
    PathBound { b: best.0, max_len: 2 * longest, worst_edge: best.1, center }
}
