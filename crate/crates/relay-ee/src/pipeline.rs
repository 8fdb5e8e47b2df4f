//! End-to-end schemes, the exhaustive oracle, and Monte Carlo sweeps.
//!
//! The proposed scheme chains the three stages: relay-set selection per pair,
//! greedy subcarrier assignment at the current transmit-power estimate, and
//! the delta search. Because the assignment assumed an equal-power level that
//! the delta search then revises, stages 2 and 3 repeat until the transmit
//! power is self-consistent (almost always one repeat). The oracle replaces
//! both combinatorial stages with exhaustive enumeration; the baselines
//! degrade one stage each and keep the rest.

use crate::channel::{draw_channels, ChannelRealization, SystemConfig};
use crate::power::{build_profile, find_delta_star, PowerSolution};
use crate::subcarrier::{assign_subcarriers, equal_power_rate, Assignment};
use crate::virtual_link::{
    beta, bottleneck_cnr, decision_grid, NodePowerSplit, RelaySet, TxNode,
    VirtualLinkDecision,
};
use crate::{par, Error, Result};
use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Cap on step-2/3 repetitions.
pub const KAPPA_MAX: usize = 5;

/// Relative transmit-power agreement that stops the step-2/3 loop.
pub const PTRANS_REL_TOL: f64 = 1e-6;

/// Oracle guard: largest subset enumeration per pair.
pub const ORACLE_MAX_SUBSETS: u64 = 1024;

/// Oracle guard: largest partition enumeration.
pub const ORACLE_MAX_PARTITIONS: f64 = 1e6;

/// Salt mixed into the seed for the baseline's relay sampling stream.
const RANDR_SALT: u64 = 0x52616e6452656c61;

/// Grid resolution of the equal-power baseline's transmit-power search.
const BEAM_EPA_GRID: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scheme {
    Proposed,
    Oracle,
    RandROpa,
    BeamEpa,
}

impl Scheme {
    pub fn name(self) -> &'static str {
        match self {
            Scheme::Proposed => "proposed",
            Scheme::Oracle => "oracle",
            Scheme::RandROpa => "randr-opa",
            Scheme::BeamEpa => "beam-epa",
        }
    }
}

impl std::fmt::Display for Scheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "proposed" => Ok(Scheme::Proposed),
            "oracle" => Ok(Scheme::Oracle),
            "randr-opa" => Ok(Scheme::RandROpa),
            "beam-epa" => Ok(Scheme::BeamEpa),
            other => Err(Error::InvalidConfig(format!(
                "unknown scheme {other:?} (expected proposed, oracle, randr-opa, or beam-epa)"
            ))),
        }
    }
}

/// One complete allocation run.
#[derive(Debug, Clone)]
pub struct RunResult {
    pub scheme: Scheme,
    pub solution: PowerSolution,
    pub assignment: Assignment,
    /// Step-1 output, flat n-major.
    pub decisions: Vec<VirtualLinkDecision>,
    /// Step-2/3 executions (kappa).
    pub iterations: usize,
    /// False when the transmit power still moved at the kappa cap.
    pub converged: bool,
    pub seed: u64,
    pub config: SystemConfig,
}

fn check_inputs(config: &SystemConfig, ch: &ChannelRealization) -> Result<()> {
    config.validate()?;
    ch.validate()?;
    if ch.num_subcarriers != config.num_subcarriers
        || ch.num_users != config.num_users
        || ch.num_relays != config.num_relays
    {
        return Err(Error::InvalidConfig(
            "channel realization dimensions disagree with the config".into(),
        ));
    }
    Ok(())
}

/// The proposed three-step scheme.
pub fn optimize(config: &SystemConfig, ch: &ChannelRealization) -> Result<RunResult> {
    check_inputs(config, ch)?;
    optimize_with_decisions(config, ch, decision_grid(ch), Scheme::Proposed)
}

/// Steps 2 and 3 on a fixed step-1 decision grid, repeated until the
/// transmit power the assignment assumed agrees with the one the delta
/// search returns.
///
/// The assignment is a deterministic function of the assumed power, so a
/// repeated assignment would re-solve to the identical power: detecting the
/// repeat IS the convergence test, with the redundant solve skipped and
/// `iterations` counting actual solves. Revisiting any earlier assignment
/// proves the orbit periodic; the loop then stops on the best-EE iterate
/// seen, since no new candidate can ever appear.
fn optimize_with_decisions(
    config: &SystemConfig,
    ch: &ChannelRealization,
    decisions: Vec<VirtualLinkDecision>,
    scheme: Scheme,
) -> Result<RunResult> {
    let (n_total, k_total) = (config.num_subcarriers, config.num_users);
    let upsilon: Vec<f64> = decisions.iter().map(|d| d.upsilon).collect();
    let mut p_trans = (config.p_max_w - config.p_static_w) / config.eta;
    let mut visited: Vec<(Assignment, PowerSolution)> = Vec::new();
    let mut iterations = 0;
    let mut converged = false;
    let mut cycled = false;
    while iterations < KAPPA_MAX {
        let assignment =
            assign_subcarriers(&upsilon, n_total, k_total, p_trans, &config.alpha)?;
        if let Some(pos) = visited.iter().position(|(a, _)| a.theta == assignment.theta) {
            converged = true;
            cycled = pos + 1 < visited.len();
            break;
        }
        iterations += 1;
        let profile = build_profile(&assignment, &upsilon, &config.alpha, n_total)?;
        let solution = find_delta_star(&profile, config, &decisions, ch)?;
        let next = solution.p_trans;
        visited.push((assignment, solution));
        if (next - p_trans).abs() <= PTRANS_REL_TOL * p_trans {
            converged = true;
            break;
        }
        p_trans = next;
    }
    let (assignment, solution) = if cycled {
        visited
            .into_iter()
            .max_by(|x, y| x.1.ee.partial_cmp(&y.1.ee).unwrap())
            .unwrap()
    } else {
        visited.pop().unwrap()
    };
    Ok(RunResult {
        scheme,
        solution,
        assignment,
        decisions,
        iterations,
        converged,
        seed: config.seed,
        config: config.clone(),
    })
}

/// Max-beta relay set for one pair by enumerating all nonempty subsets; ties
/// go to fewer relays, matching the greedy's preference.
fn brute_force_decision(k: usize, n: usize, ch: &ChannelRealization) -> VirtualLinkDecision {
    let a = ch.bk(n, k);
    let l = ch.num_relays;
    let mut best: Option<(f64, RelaySet)> = None;
    for mask in 1u64..(1u64 << l) {
        let members: Vec<usize> = (0..l).filter(|&r| mask >> r & 1 == 1).collect();
        let set = RelaySet::new(members, l).unwrap();
        let b = beta(&set, k, n, ch).unwrap();
        let better = match &best {
            None => b > 1.0,
            Some((bb, bs)) => b > *bb || (b == *bb && set.len() < bs.len()),
        };
        if better {
            best = Some((b, set));
        }
    }
    match best {
        Some((b, relay_set)) => VirtualLinkDecision {
            relay_set,
            beta: b,
            rho: 1,
            upsilon: 2.0 * b * a,
            user: k,
            subcarrier: n,
        },
        None => VirtualLinkDecision {
            relay_set: RelaySet::empty(),
            beta: 1.0,
            rho: 0,
            upsilon: 2.0 * a,
            user: k,
            subcarrier: n,
        },
    }
}

/// Exhaustive search: all relay subsets per pair, then every subcarrier
/// partition with no user left empty, each solved exactly for delta.
pub fn oracle(config: &SystemConfig, ch: &ChannelRealization) -> Result<RunResult> {
    check_inputs(config, ch)?;
    let (n_total, k_total, l) = (config.num_subcarriers, config.num_users, config.num_relays);
    if l >= 64 || (1u64 << l) > ORACLE_MAX_SUBSETS {
        return Err(Error::GuardRail(format!(
            "oracle subset enumeration needs 2^L <= {ORACLE_MAX_SUBSETS}, got L = {l}; \
             use a desk-scale config"
        )));
    }
    let partitions = (k_total as f64).powi(n_total as i32);
    if partitions > ORACLE_MAX_PARTITIONS {
        return Err(Error::GuardRail(format!(
            "oracle partition enumeration needs K^N <= {ORACLE_MAX_PARTITIONS:.0}, \
             got {k_total}^{n_total}; use a desk-scale config"
        )));
    }

    let decisions =
        par::map_range(n_total * k_total, |i| brute_force_decision(i % k_total, i / k_total, ch));
    let upsilon: Vec<f64> = decisions.iter().map(|d| d.upsilon).collect();
    let p_equal = (config.p_max_w - config.p_static_w) / config.eta;

    let mut best: Option<(PowerSolution, Vec<usize>)> = None;
    let mut first_err: Option<Error> = None;
    let mut owner = vec![0usize; n_total];
    loop {
        let mut counts = vec![0usize; k_total];
        for &u in &owner {
            counts[u] += 1;
        }
        if counts.iter().all(|&c| c > 0) {
            let mut sets = vec![Vec::new(); k_total];
            for (n, &u) in owner.iter().enumerate() {
                sets[u].push(n);
            }
            let assignment = Assignment {
                sets,
                theta: theta_of(&owner, k_total),
                rates_equal_power: vec![0.0; k_total],
            };
            match build_profile(&assignment, &upsilon, &config.alpha, n_total)
                .and_then(|profile| find_delta_star(&profile, config, &decisions, ch))
            {
                Ok(solution) => {
                    if best.as_ref().is_none_or(|(b, _)| solution.ee > b.ee) {
                        best = Some((solution, owner.clone()));
                    }
                }
                Err(e) => {
                    first_err.get_or_insert(e);
                }
            }
        }
        // Next base-K counter value, most significant digit last.
        let mut pos = 0;
        loop {
            if pos == n_total {
                break;
            }
            owner[pos] += 1;
            if owner[pos] < k_total {
                break;
            }
            owner[pos] = 0;
            pos += 1;
        }
        if pos == n_total {
            break;
        }
    }

    let (solution, owner) = match best {
        Some(found) => found,
        None => return Err(first_err.unwrap()),
    };
    let mut sets = vec![Vec::new(); k_total];
    for (n, &u) in owner.iter().enumerate() {
        sets[u].push(n);
    }
    let rates_equal_power = (0..k_total)
        .map(|k| {
            sets[k]
                .iter()
                .map(|&n| equal_power_rate(upsilon[n * k_total + k], p_equal, n_total))
                .sum()
        })
        .collect();
    let assignment = Assignment { sets, theta: theta_of(&owner, k_total), rates_equal_power };
    Ok(RunResult {
        scheme: Scheme::Oracle,
        solution,
        assignment,
        decisions,
        iterations: 1,
        converged: true,
        seed: config.seed,
        config: config.clone(),
    })
}

fn theta_of(owner: &[usize], k_total: usize) -> Vec<u8> {
    let mut theta = vec![0u8; owner.len() * k_total];
    for (n, &u) in owner.iter().enumerate() {
        theta[n * k_total + u] = 1;
    }
    theta
}

/// Baseline: one uniformly sampled relay per pair (seeded independently of
/// the channel stream), kept only when eligible; steps 2 and 3 unchanged.
pub fn baseline_randr_opa(config: &SystemConfig, ch: &ChannelRealization) -> Result<RunResult> {
    check_inputs(config, ch)?;
    let l = config.num_relays;
    if l == 0 {
        return Err(Error::InvalidConfig("randr-opa needs at least one relay".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ RANDR_SALT);
    let (n_total, k_total) = (config.num_subcarriers, config.num_users);
    let mut decisions = Vec::with_capacity(n_total * k_total);
    for n in 0..n_total {
        for k in 0..k_total {
            let r = sample_index(&mut rng, l);
            let a = ch.bk(n, k);
            decisions.push(if ch.br(n, r) > a {
                let set = RelaySet::new(vec![r], l).unwrap();
                let b = beta(&set, k, n, ch).unwrap();
                VirtualLinkDecision {
                    relay_set: set,
                    beta: b,
                    rho: 1,
                    upsilon: 2.0 * b * a,
                    user: k,
                    subcarrier: n,
                }
            } else {
                VirtualLinkDecision {
                    relay_set: RelaySet::empty(),
                    beta: 1.0,
                    rho: 0,
                    upsilon: 2.0 * a,
                    user: k,
                    subcarrier: n,
                }
            });
        }
    }
    optimize_with_decisions(config, ch, decisions, Scheme::RandROpa)
}

/// Uniform draw from 0..bound without modulo bias.
fn sample_index(rng: &mut ChaCha8Rng, bound: usize) -> usize {
    let bound = bound as u64;
    let zone = u64::MAX - u64::MAX % bound;
    loop {
        let v = rng.next_u64();
        if v < zone {
            return (v % bound) as usize;
        }
    }
}

/// Effective CNR of a pair when both slots get equal energy and the slot-2
/// pool is split equally over the transmitting nodes instead of the
/// hop-equalizing optimum. Never exceeds the decision's Upsilon.
pub fn equal_split_cnr(decision: &VirtualLinkDecision, ch: &ChannelRealization) -> f64 {
    let (k, n) = (decision.user, decision.subcarrier);
    let a = ch.bk(n, k);
    if decision.rho == 0 {
        return 2.0 * a;
    }
    let g_min = bottleneck_cnr(&decision.relay_set, n, ch).unwrap();
    let nodes = decision.relay_set.len() + 1;
    let amplitude: f64 = std::iter::once(a)
        .chain(decision.relay_set.members().iter().map(|&r| ch.rk(n, r, k)))
        .map(f64::sqrt)
        .sum();
    g_min.min(a + amplitude * amplitude / nodes as f64)
}

/// Baseline: relay sets from step 1 but every power split is equal
/// (slot-to-slot and node-to-node), transmit power spread equally over
/// subcarriers and grid-searched for the best EE.
pub fn baseline_beam_epa(config: &SystemConfig, ch: &ChannelRealization) -> Result<RunResult> {
    check_inputs(config, ch)?;
    let (n_total, k_total) = (config.num_subcarriers, config.num_users);
    let decisions = decision_grid(ch);
    let cnr: Vec<f64> = decisions.iter().map(|d| equal_split_cnr(d, ch)).collect();
    let p_hi = (config.p_max_w - config.p_static_w) / config.eta;

    let mut best: Option<(f64, f64, Assignment)> = None; // (ee, p_trans, assignment)
    let mut min_needed = f64::INFINITY;
    for i in 1..=BEAM_EPA_GRID {
        let p_trans = p_hi * i as f64 / BEAM_EPA_GRID as f64;
        let assignment = assign_subcarriers(&cnr, n_total, k_total, p_trans, &config.alpha)?;
        let se: f64 = assignment.rates_equal_power.iter().sum();
        let p_total = config.eta * p_trans + config.p_static_w + config.xi * se;
        min_needed = min_needed.min(p_total);
        if p_total > config.p_max_w {
            continue;
        }
        let ee = se / p_total;
        if best.as_ref().is_none_or(|(b, _, _)| ee > *b) {
            best = Some((ee, p_trans, assignment));
        }
    }
    let (ee, p_trans, assignment) = best.ok_or(Error::InfeasibleBudget {
        needed_w: min_needed,
        p_max_w: config.p_max_w,
    })?;

    let p_pair = p_trans / n_total as f64;
    let mut p_kn = vec![0.0; n_total * k_total];
    let mut splits: Vec<Option<NodePowerSplit>> = vec![None; n_total * k_total];
    for (k, set) in assignment.sets.iter().enumerate() {
        for &n in set {
            p_kn[n * k_total + k] = p_pair;
            let d = &decisions[n * k_total + k];
            let split = if d.rho == 0 {
                NodePowerSplit { p_b_slot1: p_pair, p_nodes_slot2: vec![(TxNode::Bs, p_pair)] }
            } else {
                let share = p_pair / (d.relay_set.len() + 1) as f64;
                let mut nodes = vec![(TxNode::Bs, share)];
                nodes.extend(d.relay_set.members().iter().map(|&r| (TxNode::Relay(r), share)));
                NodePowerSplit { p_b_slot1: p_pair, p_nodes_slot2: nodes }
            };
            splits[n * k_total + k] = Some(split);
        }
    }
    let rates = assignment.rates_equal_power.clone();
    let se: f64 = rates.iter().sum();
    let delta = rates
        .iter()
        .zip(&config.alpha)
        .map(|(r, a)| r / a)
        .fold(f64::INFINITY, f64::min);
    let solution = PowerSolution {
        delta,
        p_kn,
        splits,
        rates,
        p_trans,
        p_total: config.eta * p_trans + config.p_static_w + config.xi * se,
        ee,
        budget_binding: p_trans == p_hi,
        clamped: false,
    };
    Ok(RunResult {
        scheme: Scheme::BeamEpa,
        solution,
        assignment,
        decisions,
        iterations: 1,
        converged: true,
        seed: config.seed,
        config: config.clone(),
    })
}

/// Runs one scheme on one realization.
pub fn run_scheme(
    scheme: Scheme,
    config: &SystemConfig,
    ch: &ChannelRealization,
) -> Result<RunResult> {
    match scheme {
        Scheme::Proposed => optimize(config, ch),
        Scheme::Oracle => oracle(config, ch),
        Scheme::RandROpa => baseline_randr_opa(config, ch),
        Scheme::BeamEpa => baseline_beam_epa(config, ch),
    }
}

/// Swept scenario parameter.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    CnrDb,
    PStatic,
    Xi,
    PMax,
    NumUsers,
    NumSubcarriers,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::CnrDb => "cnr_db",
            SweepAxis::PStatic => "p_static",
            SweepAxis::Xi => "xi",
            SweepAxis::PMax => "p_max",
            SweepAxis::NumUsers => "num_users",
            SweepAxis::NumSubcarriers => "num_subcarriers",
        }
    }
}

impl std::fmt::Display for SweepAxis {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cnr_db" => Ok(SweepAxis::CnrDb),
            "p_static" => Ok(SweepAxis::PStatic),
            "xi" => Ok(SweepAxis::Xi),
            "p_max" => Ok(SweepAxis::PMax),
            "num_users" => Ok(SweepAxis::NumUsers),
            "num_subcarriers" => Ok(SweepAxis::NumSubcarriers),
            other => Err(Error::InvalidConfig(format!(
                "unknown sweep axis {other:?} (expected cnr_db, p_static, xi, p_max, \
                 num_users, or num_subcarriers)"
            ))),
        }
    }
}

/// A Monte Carlo experiment: one axis, a grid of values, schemes to compare.
#[derive(Debug, Clone)]
pub struct SweepSpec {
    pub base: SystemConfig,
    pub axis: SweepAxis,
    pub grid: Vec<f64>,
    pub trials: usize,
    pub schemes: Vec<Scheme>,
}

/// Aggregates over the successful trials of one (grid value, scheme) cell.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub axis: SweepAxis,
    pub value: f64,
    pub scheme: Scheme,
    pub trials_ok: usize,
    pub ee_mean: f64,
    pub ee_stderr: f64,
    pub se_mean: f64,
    pub ptrans_mean: f64,
    pub delta_mean: f64,
    /// Per-user mean rates, bit/s/Hz.
    pub r_user_mean: Vec<f64>,
}

/// Applies one axis value to the base config.
fn apply_axis(base: &SystemConfig, axis: SweepAxis, value: f64) -> Result<SystemConfig> {
    let mut config = base.clone();
    let as_count = |value: f64, what: &str| -> Result<usize> {
        if value < 1.0 || value.fract() != 0.0 || value > 1e6 {
            return Err(Error::InvalidConfig(format!(
                "{what} axis needs a positive integer value, got {value}"
            )));
        }
        Ok(value as usize)
    };
    match axis {
        SweepAxis::CnrDb => config.avg_cnr_db = value,
        SweepAxis::PStatic => config.p_static_w = value,
        SweepAxis::Xi => config.xi = value,
        SweepAxis::PMax => config.p_max_w = value,
        SweepAxis::NumUsers => {
            let k = as_count(value, "num_users")?;
            if base.alpha.iter().any(|a| *a != base.alpha[0]) {
                return Err(Error::InvalidConfig(
                    "sweeping num_users needs uniform alpha in the base config".into(),
                ));
            }
            config.num_users = k;
            config.alpha = vec![base.alpha[0]; k];
        }
        SweepAxis::NumSubcarriers => {
            config.num_subcarriers = as_count(value, "num_subcarriers")?;
        }
    }
    config.validate()?;
    Ok(config)
}

struct TrialStat {
    ee: f64,
    se: f64,
    p_trans: f64,
    delta: f64,
    rates: Vec<f64>,
}

/// Runs the sweep. Trials use seed = base seed + trial index; failed trials
/// (infeasible corners) are skipped and reflected in `trials_ok`. Output is
/// deterministic for a given spec regardless of the thread pool.
pub fn monte_carlo(spec: &SweepSpec) -> Result<Vec<SweepRow>> {
    if spec.grid.is_empty() || spec.schemes.is_empty() || spec.trials == 0 {
        return Err(Error::InvalidConfig(
            "sweep needs a nonempty grid, at least one scheme, and trials >= 1".into(),
        ));
    }
    spec.base.validate()?;
    let mut rows = Vec::with_capacity(spec.grid.len() * spec.schemes.len());
    for &value in &spec.grid {
        let point = apply_axis(&spec.base, spec.axis, value)?;
        for &scheme in &spec.schemes {
            let stats: Vec<Option<TrialStat>> = par::map_range(spec.trials, |t| {
                let mut config = point.clone();
                config.seed = spec.base.seed.wrapping_add(t as u64);
                let ch = draw_channels(&config).ok()?;
                let run = run_scheme(scheme, &config, &ch).ok()?;
                Some(TrialStat {
                    ee: run.solution.ee,
                    se: run.solution.rates.iter().sum(),
                    p_trans: run.solution.p_trans,
                    delta: run.solution.delta,
                    rates: run.solution.rates,
                })
            });
            rows.push(aggregate(spec.axis, value, scheme, point.num_users, &stats));
        }
    }
    Ok(rows)
}

fn aggregate(
    axis: SweepAxis,
    value: f64,
    scheme: Scheme,
    num_users: usize,
    stats: &[Option<TrialStat>],
) -> SweepRow {
    let ok: Vec<&TrialStat> = stats.iter().flatten().collect();
    let n = ok.len();
    let mean = |f: &dyn Fn(&TrialStat) -> f64| -> f64 {
        if n == 0 {
            f64::NAN
        } else {
            ok.iter().map(|s| f(s)).sum::<f64>() / n as f64
        }
    };
    let ee_mean = mean(&|s| s.ee);
    let ee_stderr = if n >= 2 {
        let var = ok.iter().map(|s| (s.ee - ee_mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        (var / n as f64).sqrt()
    } else {
        0.0
    };
    let r_user_mean = (0..num_users)
        .map(|k| mean(&|s| s.rates[k]))
        .collect();
    SweepRow {
        axis,
        value,
        scheme,
        trials_ok: n,
        ee_mean,
        ee_stderr,
        se_mean: mean(&|s| s.se),
        ptrans_mean: mean(&|s| s.p_trans),
        delta_mean: mean(&|s| s.delta),
        r_user_mean,
    }
}
