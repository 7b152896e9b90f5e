//! One function per `module verb`.

use rayon::prelude::*;
use serde_json::{json, Map, Value};
use sha2::{Digest, Sha256};

use sepmix_core::dynamics::{
    apply_ring, build_sweep_scheme, flow_run_logged, flow_stationary_exact, FLOW_WINDOW_LIMIT,
};
use sepmix_core::environment::{constrained_max_gain, deepest_trap};
use sepmix_core::estimators::{default_cap, scaling_run, ScalingSpec};
use sepmix_core::exact::{canonical_path_bound, censoring_inequality_check};
use sepmix_core::law::q_n;
use sepmix_core::{potential, Configuration, Environment, EquilibriumTable, EventSource, ExactChain, FlowState};

use crate::config::{Experiment, FlowParams, RunConfig, SimulateParams};
use crate::output::{Cell, Payload, Table};
use crate::CliError;

/// A finished command: its output and, if a checked property failed, which one.
pub struct Outcome {
    pub payload: Payload,
    pub violation: Option<String>,
}

impl Outcome {
    fn ok(payload: Payload) -> Self {
        Outcome { payload, violation: None }
    }
}

pub struct Ctx<'a> {
    pub cfg: &'a RunConfig,
    pub seed: u64,
}

impl Ctx<'_> {
    fn env(&self) -> Result<Environment, CliError> {
        Ok(self.cfg.environment(self.seed)?)
    }

    fn k(&self) -> Result<usize, CliError> {
        self.cfg.k.ok_or_else(|| CliError::Usage("this command needs `k` in the config".into()))
    }

    /// Hash of what determines the instance: law, sites, `k` and seed.
    fn instance_hash(&self) -> String {
        let key = json!({
            "law": self.cfg.law,
            "n": self.cfg.n(),
            "omega": self.cfg.environment.omega,
            "k": self.cfg.k,
            "seed": self.seed,
        });
        hex(&Sha256::digest(key.to_string().as_bytes()))
    }

    fn exact_chain(&self) -> Result<ExactChain, CliError> {
        Ok(ExactChain::build(&self.env()?, self.k()?)?)
    }

    fn report_head(&self, chain: &ExactChain) -> Map<String, Value> {
        let mut m = Map::new();
        m.insert("instance_hash".into(), json!(self.instance_hash()));
        m.insert("n".into(), json!(chain.n()));
        m.insert("k".into(), json!(chain.k()));
        m.insert("states".into(), json!(chain.len()));
        m
    }
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn wrong_kind(expected: &str, got: &Experiment) -> CliError {
    CliError::Usage(format!("experiment.kind is `{}` but this command expects `{expected}`", got.kind()))
}

pub fn env_dump(ctx: &Ctx) -> Result<Outcome, CliError> {
    let env = ctx.env()?;
    let prof = potential(&env);
    let mut t = Table::new(&["site", "omega", "v", "v_bar"]);
    for x in 1..=env.n() {
        t.push(vec![x.into(), env.omega(x).into(), prof.v(x).into(), prof.v_bar(x).into()]);
    }
    Ok(Outcome::ok(Payload::Table(t)))
}

pub fn env_traps(ctx: &Ctx) -> Result<Outcome, CliError> {
    let q = match &ctx.cfg.experiment {
        Some(Experiment::Env(p)) => p.q,
        None => None,
        Some(other) => return Err(wrong_kind("env", other)),
    };
    let env = ctx.env()?;
    let n = env.n();
    let prof = potential(&env);
    // the law's trap-length scale unless given; undefined without a trapping law
    let q = q.or_else(|| ctx.cfg.law_spec().and_then(|l| q_n(&l, n).ok()));
    let gain = q.and_then(|q| constrained_max_gain(&prof, q).ok());
    let mut t = Table::new(&["range", "x", "y", "depth", "constrained_gain_at_qN"]);
    let ranges = [("full", 1, n), ("left-quarter", 1, (n / 4).max(1)), ("middle", n.div_ceil(2), 3 * n / 4)];
    for (name, lo, hi) in ranges {
        if lo > hi {
            continue;
        }
        let trap = deepest_trap(&prof, lo..=hi)?;
        t.push(vec![name.into(), trap.x.into(), trap.y.into(), trap.depth.into(), gain.into()]);
    }
    Ok(Outcome::ok(Payload::Table(t)))
}

pub fn equilibrium_report(ctx: &Ctx) -> Result<Outcome, CliError> {
    let r_max = match &ctx.cfg.experiment {
        Some(Experiment::Equilibrium(p)) => p.r_max,
        None => None,
        Some(other) => return Err(wrong_kind("equilibrium", other)),
    };
    let env = ctx.env()?;
    let k = ctx.k()?;
    let n = env.n();
    let table = EquilibriumTable::build(&potential(&env), k)?;
    let (_, hi) = Configuration::extremal(n, k)?;
    let r_max = r_max.unwrap_or(k.min(n - k)).min(n - k);
    let curve: Vec<Value> = (0..=r_max).map(|r| json!({"r": r, "prob": table.prob_a_r(r)})).collect();
    let (mean_m, var_m) = table.mean_var_m();
    let mut m = Map::new();
    m.insert("instance_hash".into(), json!(ctx.instance_hash()));
    m.insert("n".into(), json!(n));
    m.insert("k".into(), json!(k));
    m.insert("Z_log".into(), json!(table.log_z()));
    m.insert("prob_max".into(), json!(table.prob(&hi)?));
    m.insert("prob_A_r".into(), Value::Array(curve));
    m.insert("mean_m".into(), json!(mean_m));
    m.insert("var_m".into(), json!(var_m));
    m.insert("leftmost_law".into(), json!(table.leftmost_law()));
    m.insert("marginals".into(), json!(table.marginals()));
    Ok(Outcome::ok(Payload::Report(m)))
}

/// Tolerance for detailed balance of the assembled generator.
const BALANCE_TOL: f64 = 1e-12;

pub fn exact_gap(ctx: &Ctx) -> Result<Outcome, CliError> {
    let chain = ctx.exact_chain()?;
    let gap = chain.spectral_gap()?;
    let residual = chain.detailed_balance_residual();
    let mut m = ctx.report_head(&chain);
    m.insert("gap".into(), json!(gap));
    m.insert("relaxation_time".into(), json!(1.0 / gap));
    m.insert("pi_min".into(), json!(chain.pi_min()));
    m.insert("uniform_rate".into(), json!(chain.uniform_rate()));
    m.insert("detailed_balance_residual".into(), json!(residual));
    let violation = (residual >= BALANCE_TOL).then(|| format!("detailed balance residual {residual:e}"));
    Ok(Outcome { payload: Payload::Report(m), violation })
}

fn exact_params(ctx: &Ctx) -> Result<crate::config::ExactParams, CliError> {
    match &ctx.cfg.experiment {
        Some(Experiment::Exact(p)) => Ok(p.clone()),
        None => Ok(Default::default()),
        Some(other) => Err(wrong_kind("exact", other)),
    }
}

/// Mixing times are resolved to this relative precision.
const MIX_RES: f64 = 1e-6;

pub fn exact_tmix(ctx: &Ctx) -> Result<Outcome, CliError> {
    let p = exact_params(ctx)?;
    let chain = ctx.exact_chain()?;
    let gap = chain.spectral_gap()?;
    let times = chain.t_mix_many(&p.eps)?;
    let mut rows = Vec::new();
    let mut bad = Vec::new();
    for (&e, &t) in p.eps.iter().zip(&times) {
        let lower = (1.0 / (2.0 * e)).ln() / gap;
        let upper = (1.0 / (e * chain.pi_min())).ln() / gap;
        if t < lower * (1.0 - MIX_RES) || t > upper * (1.0 + MIX_RES) {
            bad.push(format!("t_mix({e}) = {t} outside [{lower}, {upper}]"));
        }
        rows.push(json!({"eps": e, "t_mix": t, "lower": lower, "upper": upper}));
    }
    let mut m = ctx.report_head(&chain);
    m.insert("gap".into(), json!(gap));
    m.insert("pi_min".into(), json!(chain.pi_min()));
    m.insert("t_mix".into(), Value::Array(rows));
    let violation = (!bad.is_empty()).then(|| bad.join("; "));
    Ok(Outcome { payload: Payload::Report(m), violation })
}

pub fn exact_paths(ctx: &Ctx) -> Result<Outcome, CliError> {
    let chain = ctx.exact_chain()?;
    let gap = chain.spectral_gap()?;
    let pb = canonical_path_bound(&chain);
    let (n, alpha) = (chain.n() as f64, chain.alpha());
    let ceiling = n * n * chain.len() as f64 / alpha * ((1.0 - alpha) / alpha).powf(n / 2.0);
    let mut m = ctx.report_head(&chain);
    m.insert("b".into(), json!(pb.b));
    m.insert("inverse_b".into(), json!(1.0 / pb.b));
    m.insert("gap".into(), json!(gap));
    m.insert("b_ceiling".into(), json!(ceiling));
    m.insert("max_path_length".into(), json!(pb.max_len));
    m.insert("worst_edge".into(), json!({"state": chain.state(pb.worst_edge.0).to_string(), "edge": pb.worst_edge.1}));
    m.insert("center".into(), json!(pb.center));
    let mut bad = Vec::new();
    if 1.0 / pb.b > gap * (1.0 + 1e-12) {
        bad.push(format!("1/B = {} above the gap {gap}", 1.0 / pb.b));
    }
    if pb.b > ceiling {
        bad.push(format!("B = {} above {ceiling}", pb.b));
    }
    if pb.max_len > chain.n() * chain.n() {
        bad.push(format!("path length {} above n^2", pb.max_len));
    }
    let violation = (!bad.is_empty()).then(|| bad.join("; "));
    Ok(Outcome { payload: Payload::Report(m), violation })
}

pub fn exact_censor_check(ctx: &Ctx) -> Result<Outcome, CliError> {
    let p = exact_params(ctx)?.censor;
    let chain = ctx.exact_chain()?;
    let (scheme, disp) = build_sweep_scheme(chain.n(), chain.k(), p.q, p.stage_length)?;
    let horizon = p.horizon.unwrap_or(scheme.end() + 2.0 * p.stage_length);
    let grid: Vec<f64> = (1..=p.grid_points).map(|i| horizon * i as f64 / p.grid_points as f64).collect();
    let r = censoring_inequality_check(&chain, &scheme, Some(&disp), &grid)?;
    let mut t = Table::new(&["t", "plain_min", "plain_from_min", "censored", "displaced", "slack"]);
    for row in &r.rows {
        let slack = (row.plain_min - row.censored).min(row.censored - row.displaced);
        t.push(vec![
            row.t.into(),
            row.plain_min.into(),
            row.plain_from_min.into(),
            row.censored.into(),
            row.displaced.into(),
            slack.into(),
        ]);
    }
    let violation = (r.violations > 0)
        .then(|| format!("censoring inequality fails at {} grid times (min slack {:e})", r.violations, r.min_slack));
    Ok(Outcome { payload: Payload::Table(t), violation })
}

fn simulate_params(ctx: &Ctx) -> Result<SimulateParams, CliError> {
    match &ctx.cfg.experiment {
        Some(Experiment::Simulate(p)) => Ok(p.clone()),
        None => Ok(Default::default()),
        Some(other) => Err(wrong_kind("simulate", other)),
    }
}

const EVENT_COLUMNS: [&str; 6] = ["replica", "event_index", "time", "site", "mark_applied", "moved"];

/// One replica of a full-rate run: the stopping time (if before the cap), the ring
/// count, the event log when requested, and the first order violation.
struct Replica {
    time: Option<f64>,
    rings: u64,
    events: Vec<Vec<Cell>>,
    broken: Option<String>,
}

/// Runs `xi_min` and, when `coupled`, `xi_max` on one stream until they meet
/// (or until `xi_min` reaches `xi_max` when not coupled).
fn extremal_run(env: &Environment, k: usize, coupled: bool, cap: f64, seed: u64, r: u64, log: bool) -> Replica {
    let n = env.n();
    let (mut lo, hi) = Configuration::extremal(n, k).expect("k validated");
    let mut up = hi.clone();
    let mut src = EventSource::for_replica(seed, r);
    let mut out = Replica { time: None, rings: 0, events: Vec::new(), broken: None };
    while let Some(ring) = src.next_ring_until(n, cap) {
        let mut moved = apply_ring(&mut lo, env.omegas(), &ring, None);
        if coupled {
            moved |= apply_ring(&mut up, env.omegas(), &ring, None);
            if out.broken.is_none() && !lo.leq(&up).expect("same shape") {
                out.broken = Some(format!("replica {r}: order lost at t={}", ring.time));
            }
        }
        if log {
            out.events.push(vec![r.into(), out.rings.into(), ring.time.into(), ring.site.into(), ring.mark.into(), moved.into()]);
        }
        out.rings += 1;
        if lo == up {
            out.time = Some(ring.time);
            break;
        }
    }
    out
}

fn simulate_extremal(ctx: &Ctx, coupled: bool) -> Result<Outcome, CliError> {
    let p = simulate_params(ctx)?;
    let env = ctx.env()?;
    let k = ctx.k()?;
    let cap = p.cap.unwrap_or_else(|| default_cap(env.n()));
    let reps: Vec<Replica> = (0..p.replicas as u64)
        .into_par_iter()
        .map(|r| extremal_run(&env, k, coupled, cap, ctx.seed, r, p.events))
        .collect();
    let violation = reps.iter().find_map(|r| r.broken.clone());
    let t = if p.events {
        let mut t = Table::new(&EVENT_COLUMNS);
        t.rows = reps.into_iter().flat_map(|r| r.events).collect();
        t
    } else {
        let mut t = Table::new(&["replica", "time", "timed_out", "rings"]);
        for (i, r) in reps.iter().enumerate() {
            t.push(vec![i.into(), r.time.into(), r.time.is_none().into(), r.rings.into()]);
        }
        t
    };
    Ok(Outcome { payload: Payload::Table(t), violation })
}

pub fn simulate_couple(ctx: &Ctx) -> Result<Outcome, CliError> {
    simulate_extremal(ctx, true)
}

pub fn simulate_hit(ctx: &Ctx) -> Result<Outcome, CliError> {
    simulate_extremal(ctx, false)
}

pub fn simulate_flow(ctx: &Ctx) -> Result<Outcome, CliError> {
    let p: FlowParams = match &ctx.cfg.experiment {
        Some(Experiment::Flow(p)) => p.clone(),
        Some(other) => return Err(wrong_kind("flow", other)),
        None => return Err(CliError::Usage("`simulate flow` needs an experiment block of kind `flow`".into())),
    };
    let env = ctx.env()?;
    let exact = if p.y2 >= p.x2 && p.y2 + 1 - p.x2 <= FLOW_WINDOW_LIMIT {
        Some(flow_stationary_exact(&env, p.x2, p.y2)?)
    } else {
        None
    };
    let runs: Vec<(u64, Vec<Vec<Cell>>)> = (0..p.replicas as u64)
        .into_par_iter()
        .map(|r| {
            let mut events = Vec::new();
            let mut idx = 0u64;
            let mut src = EventSource::for_replica(ctx.seed, r);
            let end = flow_run_logged(&env, &FlowState::empty(p.x2, p.y2), &mut src, p.horizon, |ring, moved| {
                if p.events {
                    events.push(vec![r.into(), idx.into(), ring.time.into(), ring.site.into(), ring.mark.into(), moved.into()]);
                }
                idx += 1;
            })?;
            Ok((end.absorbed, events))
        })
        .collect::<sepmix_core::Result<_>>()?;
    let t = if p.events {
        let mut t = Table::new(&EVENT_COLUMNS);
        t.rows = runs.into_iter().flat_map(|(_, e)| e).collect();
        t
    } else {
        let mut t = Table::new(&["replica", "absorbed", "rate", "exact_flow"]);
        for (i, (a, _)) in runs.iter().enumerate() {
            let rate = if p.horizon > 0.0 { Some(*a as f64 / p.horizon) } else { None };
            t.push(vec![i.into(), (*a).into(), rate.into(), exact.into()]);
        }
        t
    };
    Ok(Outcome::ok(Payload::Table(t)))
}

pub fn scaling(ctx: &Ctx) -> Result<Outcome, CliError> {
    let p = match &ctx.cfg.experiment {
        Some(Experiment::Scaling(p)) => p.clone(),
        Some(other) => return Err(wrong_kind("scaling", other)),
        None => return Err(CliError::Usage("`scaling` needs an experiment block of kind `scaling`".into())),
    };
    let law = ctx.cfg.law_spec().ok_or_else(|| CliError::Usage("`scaling` needs a law".into()))?;
    let spec = ScalingSpec { beta: p.beta, sizes: p.sizes, eps: p.eps, replicas: p.replicas, seed: ctx.seed, cap: p.cap };
    let rep = scaling_run(&law, &spec)?;
    let mut t = Table::new(&["n", "k", "beta", "lambda", "t_hat", "ci_lo", "ci_hi", "timeouts", "predicted_exponent"]);
    for r in &rep.rows {
        t.push(vec![
            r.n.into(),
            r.k.into(),
            r.beta.into(),
            r.lambda.into(),
            r.t_hat.into(),
            r.ci.map(|c| c.0).into(),
            r.ci.map(|c| c.1).into(),
            r.timeouts.into(),
            r.predicted_exponent.into(),
        ]);
    }
    Ok(Outcome::ok(Payload::Table(t)))
}
