//! Single-site law of the environment and its log-Laplace analytics.

use crate::error::{Error, Result};

/// Root and minimizer tolerance in `u`.
pub const U_TOL: f64 = 1e-10;
const LAMBDA_LO: f64 = 1e-9;
const LAMBDA_HI: f64 = 64.0;
const LAMBDA_HI_MAX: f64 = 65536.0;
const SIMPSON_PANELS: usize = 64;

#[derive(Debug, Clone, PartialEq)]
pub enum LawVariant {
    /// `omega = alpha` with probability `p`, `1 - alpha` otherwise.
    TwoPoint { p: f64 },
    FiniteDiscrete { values: Vec<f64>, weights: Vec<f64> },
    /// Piecewise-linear inverse CDF through `(u, value)` knots, `u` running from 0 to 1.
    QuantileTable { table: Vec<(f64, f64)> },
}

/// Law of one environment letter, uniformly elliptic with bound `alpha`.
#[derive(Debug, Clone, PartialEq)]
pub struct LawSpec {
    alpha: f64,
    variant: LawVariant,
}

fn rho(w: f64) -> f64 {
    (1.0 - w) / w
}

impl LawSpec {
    pub fn new(alpha: f64, variant: LawVariant) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 0.5) {
            return Err(Error::InvalidLaw(format!("alpha={alpha} must lie in (0, 1/2)")));
        }
        let in_band = |v: f64| v.is_finite() && v >= alpha && v <= 1.0 - alpha;
        match &variant {
            LawVariant::TwoPoint { p } => {
                if !(*p > 0.0 && *p < 1.0) {
                    return Err(Error::InvalidLaw(format!("p={p} must lie in (0, 1)")));
                }
            }
            LawVariant::FiniteDiscrete { values, weights } => {
                if values.is_empty() || values.len() != weights.len() {
                    return Err(Error::InvalidLaw(
                        "values and weights must be non-empty and of equal length".into(),
                    ));
                }
                if let Some(v) = values.iter().find(|v| !in_band(**v)) {
                    return Err(Error::InvalidLaw(format!("value {v} outside [alpha, 1-alpha]")));
                }
                if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
                    return Err(Error::InvalidLaw("weights must be non-negative".into()));
                }
                let s: f64 = weights.iter().sum();
                if (s - 1.0).abs() > 1e-12 {
                    return Err(Error::InvalidLaw(format!("weights sum to {s}, not 1")));
                }
            }
            LawVariant::QuantileTable { table } => {
                if table.len() < 2 {
                    return Err(Error::InvalidLaw("quantile table needs at least two knots".into()));
                }
                if table[0].0 != 0.0 || table[table.len() - 1].0 != 1.0 {
                    return Err(Error::InvalidLaw("quantile grid must start at 0 and end at 1".into()));
                }
                for w in table.windows(2) {
                    if !(w[1].0 > w[0].0) || w[1].1 < w[0].1 {
                        return Err(Error::InvalidLaw(
                            "quantile grid must be strictly increasing with non-decreasing values".into(),
                        ));
                    }
                }
                if let Some((_, v)) = table.iter().find(|(_, v)| !in_band(*v)) {
                    return Err(Error::InvalidLaw(format!("value {v} outside [alpha, 1-alpha]")));
                }
            }
        }
        Ok(LawSpec { alpha, variant })
    }

    pub fn two_point(alpha: f64, p: f64) -> Result<Self> {
        Self::new(alpha, LawVariant::TwoPoint { p })
    }

    pub fn finite_discrete(alpha: f64, values: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        Self::new(alpha, LawVariant::FiniteDiscrete { values, weights })
    }

    pub fn quantile_table(alpha: f64, table: Vec<(f64, f64)>) -> Result<Self> {
        Self::new(alpha, LawVariant::QuantileTable { table })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn variant(&self) -> &LawVariant {
        &self.variant
    }

    /// Support points and weights for the discrete variants.
    pub fn atoms(&self) -> Option<Vec<(f64, f64)>> {
        match &self.variant {
            LawVariant::TwoPoint { p } => Some(vec![(self.alpha, *p), (1.0 - self.alpha, 1.0 - p)]),
            LawVariant::FiniteDiscrete { values, weights } => {
                Some(values.iter().copied().zip(weights.iter().copied()).collect())
            }
            LawVariant::QuantileTable { .. } => None,
        }
    }

    /// Inverse CDF evaluated at `u` in [0, 1).
    pub fn quantile(&self, u: f64) -> f64 {
        match &self.variant {
            LawVariant::TwoPoint { p } => {
                if u < *p {
                    self.alpha
                } else {
                    1.0 - self.alpha
                }
            }
            LawVariant::FiniteDiscrete { values, weights } => {
                let mut acc = 0.0;
                for (v, w) in values.iter().zip(weights) {
                    acc += w;
                    if u < acc {
                        return *v;
                    }
                }
                // rounding left a sliver above the last cumulative weight
                let last = weights.iter().rposition(|w| *w > 0.0).unwrap_or(values.len() - 1);
                values[last]
            }
            LawVariant::QuantileTable { table } => {
                let i = table.partition_point(|(g, _)| *g <= u).clamp(1, table.len() - 1);
                let (u0, v0) = table[i - 1];
                let (u1, v1) = table[i];
                v0 + (v1 - v0) * (u - u0) / (u1 - u0)
            }
        }
    }

    /// Largest value of `rho` over the support.
    fn rho_max(&self) -> f64 {
        match &self.variant {
            LawVariant::QuantileTable { table } => rho(table[0].1),
            _ => self
                .atoms()
                .unwrap()
                .iter()
                .filter(|(_, w)| *w > 0.0)
                .map(|(v, _)| rho(*v))
                .fold(f64::NEG_INFINITY, f64::max),
        }
    }

    /// `\int_0^1 g(rho(Q(s))) ds` by composite Simpson on each knot segment.
    fn quantile_integral(table: &[(f64, f64)], g: impl Fn(f64) -> f64) -> f64 {
        let mut total = 0.0;
        for w in table.windows(2) {
            let ((s0, v0), (s1, v1)) = (w[0], w[1]);
            let h = (s1 - s0) / SIMPSON_PANELS as f64;
            let f = |i: usize| {
                let v = v0 + (v1 - v0) * (i as f64 / SIMPSON_PANELS as f64);
                g(rho(v))
            };
            let mut acc = f(0) + f(SIMPSON_PANELS);
            for i in 1..SIMPSON_PANELS {
                acc += if i % 2 == 1 { 4.0 } else { 2.0 } * f(i);
            }
            total += acc * h / 3.0;
        }
        total
    }

    /// `F(u) = log E[rho^u]`.
    pub fn log_mgf(&self, u: f64) -> f64 {
        if u == 0.0 {
            return 0.0;
        }
        match &self.variant {
            LawVariant::QuantileTable { table } => {
                Self::quantile_integral(table, |r| r.powf(u)).ln()
            }
            _ => {
                let terms: Vec<f64> = self
                    .atoms()
                    .unwrap()
                    .iter()
                    .filter(|(_, w)| *w > 0.0)
                    .map(|(v, w)| w.ln() + u * rho(*v).ln())
                    .collect();
                let m = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                m + terms.iter().map(|t| (t - m).exp()).sum::<f64>().ln()
            }
        }
    }

    /// `E[rho^u log rho] / E[rho^u]`, the derivative of `F`.
    pub fn log_mgf_derivative(&self, u: f64) -> f64 {
        match &self.variant {
            LawVariant::QuantileTable { .. } => {
                let h = 1e-6;
                (self.log_mgf(u + h) - self.log_mgf(u - h)) / (2.0 * h)
            }
            _ => {
                let atoms = self.atoms().unwrap();
                let f = self.log_mgf(u);
                atoms
                    .iter()
                    .filter(|(_, w)| *w > 0.0)
                    .map(|(v, w)| {
                        let lr = rho(*v).ln();
                        (w.ln() + u * lr - f).exp() * lr
                    })
                    .sum()
            }
        }
    }

    pub fn mean_log_rho(&self) -> f64 {
        match &self.variant {
            LawVariant::QuantileTable { table } => Self::quantile_integral(table, f64::ln),
            _ => self.atoms().unwrap().iter().map(|(v, w)| w * rho(*v).ln()).sum(),
        }
    }
}

/// Analytic summary of a law.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LawAnalytics {
    pub mean_log_rho: f64,
    pub lambda: f64,
    pub u0: f64,
    pub f_at_u0: f64,
    pub kappa: f64,
}

/// Positive root of `F`, or `+inf` when `rho <= 1` almost surely.
pub fn lambda_root(law: &LawSpec) -> Result<f64> {
    let m = law.mean_log_rho();
    if m >= 0.0 {
        return Err(Error::NotTransient(m));
    }
    if law.rho_max() <= 1.0 {
        return Ok(f64::INFINITY);
    }
    let f = |u: f64| law.log_mgf(u);
    let mut lo = LAMBDA_LO;
    let mut hi = LAMBDA_HI;
    while f(hi) < 0.0 {
        lo = hi;
        hi *= 2.0;
        if hi > LAMBDA_HI_MAX {
            return Err(Error::Numerical("lambda bracket exceeded 2^16".into()));
        }
    }
    while hi - lo > 1e-3 * U_TOL {
        let mid = 0.5 * (lo + hi);
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Minimizer `u0` of `F` on `(0, lambda)` and the minimum value.
pub fn f_minimizer(law: &LawSpec) -> Result<(f64, f64)> {
    let lambda = lambda_root(law)?;
    if !lambda.is_finite() {
        return Err(Error::NotTrapped);
    }
    let f = |u: f64| law.log_mgf(u);
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (0.0, lambda);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    // values alone cannot resolve a flat minimum, so stop early and polish on F'
    while b - a > 1e-6 {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
    }
    let (mut lo, mut hi) = ((a - 1e-6).max(0.0), (b + 1e-6).min(lambda));
    if law.log_mgf_derivative(lo) < 0.0 && law.log_mgf_derivative(hi) > 0.0 {
        while hi - lo > 1e-3 * U_TOL {
            let mid = 0.5 * (lo + hi);
            if law.log_mgf_derivative(mid) < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
    } else {
        (lo, hi) = (a, b);
    }
    let u0 = 0.5 * (lo + hi);
    Ok((u0, f(u0)))
}

/// Trap-length scale `ceil((3 u0 + 2) / |F(u0)| ln n)`.
pub fn q_n(law: &LawSpec, n: usize) -> Result<usize> {
    let (u0, fu0) = f_minimizer(law)?;
    Ok(((3.0 * u0 + 2.0) / fu0.abs() * (n as f64).ln()).ceil() as usize)
}

/// `F'(lambda)`.
pub fn kappa(law: &LawSpec) -> Result<f64> {
    let lambda = lambda_root(law)?;
    if !lambda.is_finite() {
        return Err(Error::NotTrapped);
    }
    Ok(law.log_mgf_derivative(lambda))
}

pub fn analytics(law: &LawSpec) -> Result<LawAnalytics> {
    let mean_log_rho = law.mean_log_rho();
    let lambda = lambda_root(law)?;
    if !lambda.is_finite() {
        return Ok(LawAnalytics {
            mean_log_rho,
            lambda,
            u0: f64::NAN,
            f_at_u0: f64::NAN,
            kappa: f64::NAN,
        });
    }
    let (u0, f_at_u0) = f_minimizer(law)?;
    Ok(LawAnalytics {
        mean_log_rho,
        lambda,
        u0,
        f_at_u0,
        kappa: kappa(law)?,
    })
}

/// Closed-form analytics of the two-point law (`p < 1/2`).
pub fn two_point_closed_form(alpha: f64, p: f64) -> Option<LawAnalytics> {
    if !(p > 0.0 && p < 0.5) {
        return None;
    }
    let lr = rho(alpha).ln();
    let lambda = ((1.0 - p) / p).ln() / lr;
    Some(LawAnalytics {
        mean_log_rho: (2.0 * p - 1.0) * lr,
        lambda,
        u0: lambda / 2.0,
        f_at_u0: (2.0 * (p * (1.0 - p)).sqrt()).ln(),
        kappa: (1.0 - 2.0 * p) * lr,
    })
}
