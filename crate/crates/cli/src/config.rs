//! Run configuration: strict JSON schema, validated before anything runs.

use std::fmt;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use sepmix_core::{sample_env, Environment, LawSpec};

/// A schema violation at a dotted field path.
#[derive(Debug, Clone, PartialEq)]
pub struct SchemaError {
    pub path: String,
    pub message: String,
}

impl fmt::Display for SchemaError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "schema error at {}: {}", self.path, self.message)
    }
}

fn schema(path: &str, message: impl Into<String>) -> SchemaError {
    SchemaError { path: path.into(), message: message.into() }
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum LawBlock {
    TwoPoint { alpha: f64, p: f64 },
    FiniteDiscrete { alpha: f64, values: Vec<f64>, weights: Vec<f64> },
    QuantileTable { alpha: f64, table: Vec<(f64, f64)> },
}

/// Either `n` sites drawn from the law, or an explicit `omega` array.
#[derive(Debug, Clone, PartialEq, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvBlock {
    pub n: Option<usize>,
    pub omega: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvParams {
    /// window length for the constrained gain; defaults to the law's trap-length scale
    pub q: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EquilibriumParams {
    /// largest `r` of the `A_r` curve; defaults to `min(k, n-k)`
    pub r_max: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CensorParams {
    #[serde(default = "one")]
    pub q: usize,
    #[serde(default = "five")]
    pub stage_length: f64,
    #[serde(default = "twenty")]
    pub grid_points: usize,
    /// last grid time; defaults to the end of the scheme plus two stages
    pub horizon: Option<f64>,
}

impl Default for CensorParams {
    fn default() -> Self {
        CensorParams { q: 1, stage_length: 5.0, grid_points: 20, horizon: None }
    }
}

fn one() -> usize {
    1
}
fn five() -> f64 {
    5.0
}
fn twenty() -> usize {
    20
}
fn quarter() -> Vec<f64> {
    vec![0.25]
}
fn ten() -> usize {
    10
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExactParams {
    #[serde(default = "quarter")]
    pub eps: Vec<f64>,
    #[serde(default)]
    pub censor: CensorParams,
}

impl Default for ExactParams {
    fn default() -> Self {
        ExactParams { eps: quarter(), censor: CensorParams::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateParams {
    #[serde(default = "ten")]
    pub replicas: usize,
    /// time cap per replica; defaults to `1e9 / n`
    pub cap: Option<f64>,
    /// write every ring instead of one row per replica
    #[serde(default)]
    pub events: bool,
}

impl Default for SimulateParams {
    fn default() -> Self {
        SimulateParams { replicas: 10, cap: None, events: false }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowParams {
    pub x2: usize,
    pub y2: usize,
    pub horizon: f64,
    #[serde(default = "ten")]
    pub replicas: usize,
    #[serde(default)]
    pub events: bool,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScalingParams {
    #[serde(default)]
    pub beta: f64,
    pub sizes: Vec<usize>,
    #[serde(default = "quarter_scalar")]
    pub eps: f64,
    #[serde(default = "hundred")]
    pub replicas: usize,
    pub cap: Option<f64>,
}

fn quarter_scalar() -> f64 {
    0.25
}
fn hundred() -> usize {
    100
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum Experiment {
    Env(EnvParams),
    Equilibrium(EquilibriumParams),
    Exact(ExactParams),
    Simulate(SimulateParams),
    Flow(FlowParams),
    Scaling(ScalingParams),
}

impl Experiment {
    pub fn kind(&self) -> &'static str {
        match self {
            Experiment::Env(_) => "env",
            Experiment::Equilibrium(_) => "equilibrium",
            Experiment::Exact(_) => "exact",
            Experiment::Simulate(_) => "simulate",
            Experiment::Flow(_) => "flow",
            Experiment::Scaling(_) => "scaling",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub law: Option<LawBlock>,
    #[serde(default)]
    pub environment: EnvBlock,
    pub k: Option<usize>,
    #[serde(default)]
    pub seed: u64,
    pub output: Option<PathBuf>,
    pub format: Option<Format>,
    pub experiment: Option<Experiment>,
}

fn unit_open(path: &str, v: f64) -> Result<(), SchemaError> {
    if v > 0.0 && v < 1.0 {
        Ok(())
    } else {
        Err(schema(path, format!("{v} must lie in (0, 1)")))
    }
}

fn check_alpha(v: f64) -> Result<(), SchemaError> {
    if v > 0.0 && v < 0.5 {
        Ok(())
    } else {
        Err(schema("law.alpha", format!("{v} must lie in (0, 1/2) for uniform ellipticity")))
    }
}

impl LawBlock {
    pub fn to_spec(&self) -> Result<LawSpec, SchemaError> {
        let spec = match self {
            LawBlock::TwoPoint { alpha, p } => {
                check_alpha(*alpha)?;
                unit_open("law.p", *p)?;
                LawSpec::two_point(*alpha, *p)
            }
            LawBlock::FiniteDiscrete { alpha, values, weights } => {
                check_alpha(*alpha)?;
                for (i, v) in values.iter().enumerate() {
                    if !(*v >= *alpha && *v <= 1.0 - alpha) {
                        return Err(schema(&format!("law.values[{i}]"), format!("{v} outside [alpha, 1-alpha]")));
                    }
                }
                if weights.len() != values.len() {
                    return Err(schema("law.weights", "must have one weight per value"));
                }
                LawSpec::finite_discrete(*alpha, values.clone(), weights.clone())
            }
            LawBlock::QuantileTable { alpha, table } => {
                check_alpha(*alpha)?;
                LawSpec::quantile_table(*alpha, table.clone())
            }
        };
        spec.map_err(|e| schema("law", e.to_string()))
    }
}

/// Parses and validates a configuration.
pub fn parse_config(text: &str) -> Result<RunConfig, SchemaError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let cfg: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        let path = if path.is_empty() || path == "." { "(root)".to_string() } else { path };
        schema(&path, format!("{inner}"))
    })?;
    if let Some(law) = &cfg.law {
        law.to_spec()?;
    }
    match (&cfg.environment.n, &cfg.environment.omega) {
        (Some(_), Some(_)) => return Err(schema("environment", "give either n or omega, not both")),
        (None, None) => {
            // a scaling run draws its own sizes
            if !matches!(cfg.experiment, Some(Experiment::Scaling(_))) {
                return Err(schema("environment", "needs n or omega"));
            }
            if cfg.law.is_none() {
                return Err(schema("law", "required for a scaling run"));
            }
        }
        (Some(n), None) => {
            if *n < 2 {
                return Err(schema("environment.n", "need at least two sites"));
            }
            if cfg.law.is_none() {
                return Err(schema("law", "required when the environment is sampled"));
            }
        }
        (None, Some(omega)) => {
            if omega.len() < 2 {
                return Err(schema("environment.omega", "need at least two sites"));
            }
            for (i, w) in omega.iter().enumerate() {
                unit_open(&format!("environment.omega[{i}]"), *w)?;
            }
        }
    }
    if let Some(k) = cfg.k {
        let n = cfg.n();
        if k == 0 || 2 * k > n {
            return Err(schema("k", format!("{k} must lie in 1..=n/2 = {}", n / 2)));
        }
    }
    if let Some(exp) = &cfg.experiment {
        validate_experiment(exp)?;
    }
    Ok(cfg)
}

fn validate_experiment(exp: &Experiment) -> Result<(), SchemaError> {
    match exp {
        Experiment::Exact(p) => {
            for (i, e) in p.eps.iter().enumerate() {
                unit_open(&format!("experiment.eps[{i}]"), *e)?;
            }
            if p.censor.grid_points == 0 {
                return Err(schema("experiment.censor.grid_points", "must be positive"));
            }
            if !(p.censor.stage_length > 0.0) {
                return Err(schema("experiment.censor.stage_length", "must be positive"));
            }
        }
        Experiment::Simulate(p) => {
            if p.replicas == 0 {
                return Err(schema("experiment.replicas", "must be positive"));
            }
            if let Some(c) = p.cap {
                if !(c > 0.0 && c.is_finite()) {
                    return Err(schema("experiment.cap", "must be positive and finite"));
                }
            }
        }
        Experiment::Flow(p) => {
            if p.replicas == 0 {
                return Err(schema("experiment.replicas", "must be positive"));
            }
            if !(p.horizon >= 0.0 && p.horizon.is_finite()) {
                return Err(schema("experiment.horizon", "must be non-negative and finite"));
            }
        }
        Experiment::Scaling(p) => {
            unit_open("experiment.eps", p.eps)?;
            if p.sizes.is_empty() {
                return Err(schema("experiment.sizes", "must be non-empty"));
            }
            if !(0.0..1.0).contains(&p.beta) {
                return Err(schema("experiment.beta", "must lie in [0, 1)"));
            }
            if p.replicas == 0 {
                return Err(schema("experiment.replicas", "must be positive"));
            }
        }
        Experiment::Env(_) | Experiment::Equilibrium(_) => {}
    }
    Ok(())
}

impl RunConfig {
    pub fn n(&self) -> usize {
        match (&self.environment.n, &self.environment.omega) {
            (Some(n), _) => *n,
            (None, Some(o)) => o.len(),
            (None, None) => 0,
        }
    }

    pub fn law_spec(&self) -> Option<LawSpec> {
        self.law.as_ref().map(|l| l.to_spec().expect("validated at parse time"))
    }

    /// The environment: explicit values, or `n` draws from the law keyed by `seed`.
    pub fn environment(&self, seed: u64) -> sepmix_core::Result<Environment> {
        match &self.environment.omega {
            Some(omega) => match self.law_spec() {
                Some(law) => Environment::with_alpha(omega.clone(), law.alpha()),
                None => Environment::from_omega(omega.clone()),
            },
            None => sample_env(&self.law_spec().expect("validated at parse time"), self.n(), seed),
        }
    }
}
