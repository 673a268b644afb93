//! Weighted-goodput scheduling as a power-price game.
//!
//! Under a one-active-link-per-transmitter assumption, the scheduler wants
//! `max_p sum_n w_n mu_n q_n(p)` over the power box. The problem is not
//! concave, but each transmitter's payoff
//!
//! ```text
//! J_n(p) = w_n mu_n log q_n(p) + p_n c_n ,
//! c_n    = sum_{m != n} pi_hat_{m,n} ,
//! pi_hat_{m,n} = w_m mu_m (dq_m/dp_n) / q_n
//! ```
//!
//! is concave in the own power, and the joint power-price game is
//! supermodular: round-robin best responses started from the least joint
//! strategy (minimum powers, most negative prices) climb monotonically to
//! an equilibrium whose powers satisfy the KKT conditions of the original
//! problem. This module implements that round-robin algorithm, the KKT
//! residual check, a brute-force oracle, the interference-ratio receiver
//! selection rule, and the measured, over-the-air variant in which prices
//! arrive as superimposed broadcast power rather than signaling messages.

use crate::channel::{self, Link, NetworkTopology};
use crate::error::{Error, Result};
use rand::Rng;
use rand_distr::{Distribution, Exp};

/// One scheduling problem: links (one per transmitting node), their
/// backpressure weights, and their fixed scheduled rates.
#[derive(Debug, Clone, PartialEq)]
pub struct SchedulingInstance {
    links: Vec<Link>,
    weights: Vec<f64>,
    rates: Vec<f64>,
}

impl SchedulingInstance {
    pub fn new(links: Vec<Link>, weights: Vec<f64>, rates: Vec<f64>) -> Result<Self> {
        if links.is_empty() {
            return Err(Error::InvalidInput("a scheduling instance needs at least one link".into()));
        }
        if weights.len() != links.len() || rates.len() != links.len() {
            return Err(Error::InvalidInput(format!(
                "instance shape mismatch: {} links, {} weights, {} rates",
                links.len(),
                weights.len(),
                rates.len()
            )));
        }
        for (i, a) in links.iter().enumerate() {
            for b in links.iter().skip(i + 1) {
                if a.origin == b.origin {
                    return Err(Error::InvalidInput(format!(
                        "node {} transmits on two links; only one active link per node is allowed",
                        a.origin
                    )));
                }
            }
        }
        for (i, &w) in weights.iter().enumerate() {
            if !(w.is_finite() && w >= 0.0) {
                return Err(Error::InvalidInput(format!(
                    "weight of player {i} must be finite and >= 0, got {w}"
                )));
            }
        }
        for (i, &mu) in rates.iter().enumerate() {
            if !(mu.is_finite() && mu >= 0.0) {
                return Err(Error::InvalidInput(format!(
                    "rate of player {i} must be finite and >= 0, got {mu}"
                )));
            }
        }
        Ok(SchedulingInstance { links, weights, rates })
    }

    pub fn len(&self) -> usize {
        self.links.len()
    }

    pub fn is_empty(&self) -> bool {
        self.links.is_empty()
    }

    pub fn links(&self) -> &[Link] {
        &self.links
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn rates(&self) -> &[f64] {
        &self.rates
    }

    /// Per-player power interval, taken from the transmitter's bounds.
    pub fn bounds(&self, topo: &NetworkTopology) -> Vec<(f64, f64)> {
        self.links.iter().map(|l| topo.bounds(l.origin)).collect()
    }

    fn validate_against(&self, topo: &NetworkTopology) -> Result<()> {
        let probe: Vec<f64> =
            self.links.iter().map(|l| topo.bounds(l.origin).0).collect();
        channel::check_link_system(topo, &self.links, &probe)
    }
}

/// Knobs of the round-robin algorithm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GameOptions {
    /// Sup-norm stopping tolerance on both powers and prices.
    pub tolerance: f64,
    pub max_rounds: usize,
    /// Points per power axis for the grid that bounds the price intervals.
    pub floor_grid: usize,
}

impl Default for GameOptions {
    fn default() -> Self {
        GameOptions { tolerance: 1e-7, max_rounds: 1000, floor_grid: 8 }
    }
}

/// Joint strategy of the power-price game.
#[derive(Debug, Clone, PartialEq)]
pub struct GameState {
    pub powers: Vec<f64>,
    /// `prices[m][n]` is the normalized price player `m` charges player
    /// `n`; non-positive, zero on the diagonal.
    pub prices: Vec<Vec<f64>>,
    /// `sum_prices[n] = c_n`, the column sums of `prices`.
    pub sum_prices: Vec<f64>,
}

/// One round of the iterate trace.
#[derive(Debug, Clone, PartialEq)]
pub struct IterateRecord {
    pub round: usize,
    pub powers: Vec<f64>,
    pub sum_prices: Vec<f64>,
    /// Weighted-goodput objective at this round's powers.
    pub objective: f64,
    /// Sup-norm change of the powers against the previous round.
    pub power_delta: f64,
    /// Sup-norm change of the price matrix against the previous round.
    pub price_delta: f64,
}

/// Result of a full round-robin run.
#[derive(Debug, Clone, PartialEq)]
pub struct GameRun {
    pub state: GameState,
    pub trace: Vec<IterateRecord>,
    pub converged: bool,
    pub rounds: usize,
    pub objective: f64,
}

/// The scheduler's objective `sum_n w_n mu_n q_n(p)`.
pub fn objective(
    topo: &NetworkTopology,
    inst: &SchedulingInstance,
    powers: &[f64],
) -> Result<f64> {
    let mut total = 0.0;
    for n in 0..inst.len() {
        if inst.weights[n] == 0.0 {
            continue;
        }
        total += inst.weights[n]
            * inst.rates[n]
            * channel::success_probability(topo, &inst.links, powers, n, inst.rates[n])?;
    }
    Ok(total)
}

/// Price player `m` charges power player `n` the marginal damage of `n`'s
/// interference: `w_m mu_m dq_m/dp_n`. Non-positive.
pub fn raw_price(
    topo: &NetworkTopology,
    inst: &SchedulingInstance,
    powers: &[f64],
    m: usize,
    n: usize,
) -> Result<f64> {
    check_pair(inst, m, n)?;
    if inst.weights[m] == 0.0 {
        return Ok(0.0);
    }
    let d = channel::derivatives(topo, &inst.links, powers, m, inst.rates[m])?;
    Ok(inst.weights[m] * inst.rates[m] * d.dq_dpj[n])
}

/// Raw price scaled by the charged player's own success probability, which
/// is the form the power payoff consumes.
pub fn normalized_price(
    topo: &NetworkTopology,
    inst: &SchedulingInstance,
    powers: &[f64],
    m: usize,
    n: usize,
) -> Result<f64> {
    let raw = raw_price(topo, inst, powers, m, n)?;
    if raw == 0.0 {
        return Ok(0.0);
    }
    let q_n = channel::success_probability(topo, &inst.links, powers, n, inst.rates[n])?;
    Ok(raw / q_n)
}

/// Projection of the analytic normalized price onto its feasible interval
/// `[floor, 0]`.
pub fn best_response_price(
    topo: &NetworkTopology,
    inst: &SchedulingInstance,
    powers: &[f64],
    m: usize,
    n: usize,
    floor: f64,
) -> Result<f64> {
    Ok(normalized_price(topo, inst, powers, m, n)?.clamp(floor, 0.0))
}

/// Power player `n`'s payoff `J_n = w_n mu_n log q_n + p_n c_n` at the
/// given joint powers. Concave in the own power.
pub fn payoff(
    topo: &NetworkTopology,
    inst: &SchedulingInstance,
    powers: &[f64],
    n: usize,
    c_n: f64,
) -> Result<f64> {
    check_player(inst, n)?;
    let log_q =
        channel::log_success_probability(topo, &inst.links, powers, n, inst.rates[n])?;
    Ok(inst.weights[n] * inst.rates[n] * log_q + powers[n] * c_n)
}

/// `dJ_n/dp_n` at the given powers.
fn payoff_slope(
    topo: &NetworkTopology,
    inst: &SchedulingInstance,
    powers: &[f64],
    n: usize,
    c_n: f64,
) -> Result<f64> {
    let d = channel::derivatives(topo, &inst.links, powers, n, inst.rates[n])?;
    Ok(inst.weights[n] * inst.rates[n] * d.dlogq_dpl + c_n)
}

/// The unique maximizer of `J_n` over the player's power interval.
///
/// Endpoint slopes decide boundary solutions outright; interior solutions
/// are located by golden-section search to a width of `1e-8` of the
/// interval and then polished by bisecting the monotone payoff slope, so
/// the returned point is a derivative root to machine precision.
pub fn best_response_power(
    topo: &NetworkTopology,
    inst: &SchedulingInstance,
    powers: &[f64],
    n: usize,
    c_n: f64,
) -> Result<f64> {
    check_player(inst, n)?;
    if !c_n.is_finite() && c_n < 0.0 {
        // A minus-infinite price sum is the limit case of total damage.
        let (lo, _) = topo.bounds(inst.links[n].origin);
        return Ok(lo);
    }
    if !c_n.is_finite() {
        return Err(Error::InvalidInput(format!("price sum for player {n} is not finite: {c_n}")));
    }
    let (lo, hi) = topo.bounds(inst.links[n].origin);
    if lo == hi {
        return Ok(lo);
    }
    let mut probe = powers.to_vec();
    let slope_at = |p: f64, probe: &mut Vec<f64>| -> Result<f64> {
        probe[n] = p;
        payoff_slope(topo, inst, probe, n, c_n)
    };
    if slope_at(hi, &mut probe)? >= 0.0 {
        return Ok(hi);
    }
    if slope_at(lo, &mut probe)? <= 0.0 {
        return Ok(lo);
    }

    // Interior root. Golden-section pass over the payoff first.
    let gr = (5f64.sqrt() - 1.0) / 2.0;
    let width = 1e-8 * (hi - lo);
    let value_at = |p: f64, probe: &mut Vec<f64>| -> Result<f64> {
        probe[n] = p;
        payoff(topo, inst, probe, n, c_n)
    };
    let (mut a, mut b) = (lo, hi);
    let mut c = b - gr * (b - a);
    let mut d = a + gr * (b - a);
    let mut fc = value_at(c, &mut probe)?;
    let mut fd = value_at(d, &mut probe)?;
    while b - a > width {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - gr * (b - a);
            fc = value_at(c, &mut probe)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + gr * (b - a);
            fd = value_at(d, &mut probe)?;
        }
    }
    let golden = 0.5 * (a + b);

    // Polish: the slope is strictly decreasing with a sign change on
    // [lo, hi], so bisection pins the stationary point far tighter than
    // the golden-section width.
    let (mut a, mut b) = (lo, hi);
    for _ in 0..200 {
        let mid = 0.5 * (a + b);
        if mid <= a || mid >= b {
            break;
        }
        if slope_at(mid, &mut probe)? > 0.0 {
            a = mid;
        } else {
            b = mid;
        }
    }
    let root = 0.5 * (a + b);
    debug_assert!(
        (root - golden).abs() <= 1e-6 * (hi - lo),
        "golden-section maximizer {golden} disagrees with slope root {root}"
    );
    Ok(root)
}

/// Grid-minimized lower bounds of the normalized prices with the weights
/// factored out: `base[m][n] = min over the power grid of
/// mu_m (dq_m/dp_n) / q_n`. Weights enter linearly, so one base serves
/// every reweighting of the same links and rates; the NUM layer leans on
/// that to avoid re-gridding each iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct PriceFloorBase {
    links: Vec<Link>,
    rates: Vec<f64>,
    base: Vec<Vec<f64>>,
}

impl PriceFloorBase {
    /// Whether this base was computed for exactly these links and rates.
    pub fn matches(&self, links: &[Link], rates: &[f64]) -> bool {
        self.links == links && self.rates == rates
    }
}

/// Compute the price-floor base on a joint power grid of `grid_points`
/// per axis.
pub fn price_floor_base(
    topo: &NetworkTopology,
    links: &[Link],
    rates: &[f64],
    grid_points: usize,
) -> Result<PriceFloorBase> {
    let l_count = links.len();
    if rates.len() != l_count {
        return Err(Error::InvalidInput(format!(
            "floor base shape mismatch: {l_count} links, {} rates",
            rates.len()
        )));
    }
    if grid_points < 2 {
        return Err(Error::InvalidInput("price-floor grids need at least 2 points per axis".into()));
    }
    let combos = grid_points.checked_pow(l_count as u32).filter(|&c| c <= 2_000_000);
    let Some(_) = combos else {
        return Err(Error::InvalidInput(format!(
            "price-floor grid of {grid_points}^{l_count} joint points is too large; \
             lower the grid resolution"
        )));
    };
    let axes: Vec<(f64, f64)> = links.iter().map(|l| topo.bounds(l.origin)).collect();
    let mut base = vec![vec![0.0f64; l_count]; l_count];
    let mut idx = vec![0usize; l_count];
    let mut powers = vec![0.0f64; l_count];
    loop {
        for (i, (&k, &(lo, hi))) in idx.iter().zip(&axes).enumerate() {
            powers[i] = lo + (hi - lo) * k as f64 / (grid_points - 1) as f64;
        }
        let mut qs = Vec::with_capacity(l_count);
        for n in 0..l_count {
            qs.push(channel::success_probability(topo, links, &powers, n, rates[n])?);
        }
        for m in 0..l_count {
            let d = channel::derivatives(topo, links, &powers, m, rates[m])?;
            for n in 0..l_count {
                if n == m {
                    continue;
                }
                let v = rates[m] * d.dq_dpj[n] / qs[n];
                if v < base[m][n] {
                    base[m][n] = v;
                }
            }
        }
        let mut axis = l_count;
        loop {
            if axis == 0 {
                return Ok(PriceFloorBase {
                    links: links.to_vec(),
                    rates: rates.to_vec(),
                    base,
                });
            }
            axis -= 1;
            idx[axis] += 1;
            if idx[axis] < grid_points {
                break;
            }
            idx[axis] = 0;
        }
    }
}

/// Interval floors for the given weights, widened by 10% so the grid
/// minimum is a safe lower bound of the true one.
pub fn price_floors(base: &PriceFloorBase, weights: &[f64]) -> Result<Vec<Vec<f64>>> {
    let l_count = base.base.len();
    if weights.len() != l_count {
        return Err(Error::InvalidInput(format!(
            "floor base covers {l_count} players, got {} weights",
            weights.len()
        )));
    }
    Ok((0..l_count)
        .map(|m| (0..l_count).map(|n| 1.1 * weights[m] * base.base[m][n]).collect())
        .collect())
}

/// Round-robin power-price algorithm.
///
/// Starts at the least joint strategy (minimum powers, floor prices).
/// Each round runs the power phase in ascending player order, every
/// player best-responding against the freshest powers and the previous
/// round's prices; then the price phase recomputes all normalized prices
/// at the fresh powers and projects them onto their intervals. Stops when
/// both sup-norm changes fall below the tolerance. Non-convergence is
/// reported in the result, not as an error, with the partial trace kept.
pub fn run_table1(
    topo: &NetworkTopology,
    inst: &SchedulingInstance,
    opts: &GameOptions,
) -> Result<GameRun> {
    let base = price_floor_base(topo, &inst.links, &inst.rates, opts.floor_grid)?;
    run_table1_with_base(topo, inst, opts, &base)
}

/// [`run_table1`] with a precomputed price-floor base, so callers that
/// solve many games on the same links (the NUM loop reweights every
/// iteration) skip the grid scan.
pub fn run_table1_with_base(
    topo: &NetworkTopology,
    inst: &SchedulingInstance,
    opts: &GameOptions,
    base: &PriceFloorBase,
) -> Result<GameRun> {
    if !(opts.tolerance > 0.0 && opts.tolerance.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "stopping tolerance must be finite and > 0, got {}",
            opts.tolerance
        )));
    }
    if opts.max_rounds == 0 {
        return Err(Error::InvalidInput("max_rounds must be >= 1".into()));
    }
    inst.validate_against(topo)?;
    if !base.matches(&inst.links, &inst.rates) {
        return Err(Error::InvalidInput(
            "price-floor base was computed for different links or rates".into(),
        ));
    }
    let l_count = inst.len();
    let floors = price_floors(base, &inst.weights)?;

    let mut powers: Vec<f64> = inst.links.iter().map(|l| topo.bounds(l.origin).0).collect();
    let mut prices = floors.clone();
    for (m, row) in prices.iter_mut().enumerate() {
        row[m] = 0.0;
    }
    let mut trace = Vec::new();
    let mut converged = false;
    let mut rounds = 0;

    for round in 1..=opts.max_rounds {
        rounds = round;
        let prev_powers = powers.clone();
        let prev_prices = prices.clone();

        for n in 0..l_count {
            let c_n: f64 = (0..l_count).filter(|&m| m != n).map(|m| prices[m][n]).sum();
            powers[n] = best_response_power(topo, inst, &powers, n, c_n)?;
        }

        for m in 0..l_count {
            for n in 0..l_count {
                if n == m {
                    continue;
                }
                prices[m][n] = best_response_price(topo, inst, &powers, m, n, floors[m][n])?;
            }
        }

        let power_delta = sup_delta(&powers, &prev_powers);
        let price_delta = prices
            .iter()
            .zip(&prev_prices)
            .map(|(a, b)| sup_delta(a, b))
            .fold(0.0, f64::max);
        trace.push(IterateRecord {
            round,
            powers: powers.clone(),
            sum_prices: column_sums(&prices),
            objective: objective(topo, inst, &powers)?,
            power_delta,
            price_delta,
        });
        if power_delta < opts.tolerance && price_delta < opts.tolerance {
            converged = true;
            break;
        }
    }

    let sum_prices = column_sums(&prices);
    let objective = objective(topo, inst, &powers)?;
    Ok(GameRun {
        state: GameState { powers, prices, sum_prices },
        trace,
        converged,
        rounds,
        objective,
    })
}

fn sup_delta(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn column_sums(prices: &[Vec<f64>]) -> Vec<f64> {
    let l_count = prices.len();
    (0..l_count)
        .map(|n| (0..l_count).filter(|&m| m != n).map(|m| prices[m][n]).sum())
        .collect()
}

/// Gradient of the scheduling objective in one power coordinate:
/// `D_n = sum_m w_m mu_m dq_m/dp_n`.
fn objective_gradient(
    topo: &NetworkTopology,
    inst: &SchedulingInstance,
    powers: &[f64],
    n: usize,
) -> Result<f64> {
    let mut d_n = 0.0;
    for m in 0..inst.len() {
        if inst.weights[m] == 0.0 {
            continue;
        }
        let d = channel::derivatives(topo, &inst.links, powers, m, inst.rates[m])?;
        let partial = if m == n { d.dq_dpl } else { d.dq_dpj[n] };
        d_n += inst.weights[m] * inst.rates[m] * partial;
    }
    Ok(d_n)
}

/// First-order optimality diagnostics of a candidate power vector.
#[derive(Debug, Clone, PartialEq)]
pub struct KktResidual {
    /// Per-player stationarity residual `|D_n + nu_l - nu_u|` with the
    /// multipliers constructed from boundary activity.
    pub stationarity: Vec<f64>,
    /// Per-player complementary-slackness violation; zero by construction
    /// except for rounding in the boundary classification.
    pub complementarity: Vec<f64>,
    pub lower_multipliers: Vec<f64>,
    pub upper_multipliers: Vec<f64>,
}

impl KktResidual {
    pub fn max_stationarity(&self) -> f64 {
        self.stationarity.iter().copied().fold(0.0, f64::max)
    }

    pub fn max_complementarity(&self) -> f64 {
        self.complementarity.iter().copied().fold(0.0, f64::max)
    }
}

/// Evaluate the KKT conditions of the scheduling problem at `powers`.
/// Interior coordinates get zero multipliers and residual `|D_n|`; active
/// bounds get the sign-consistent multiplier, leaving only wrong-sign
/// slack as residual.
pub fn kkt_residual(
    topo: &NetworkTopology,
    inst: &SchedulingInstance,
    powers: &[f64],
) -> Result<KktResidual> {
    inst.validate_against(topo)?;
    if powers.len() != inst.len() {
        return Err(Error::InvalidInput(format!(
            "expected {} powers, got {}",
            inst.len(),
            powers.len()
        )));
    }
    let l_count = inst.len();
    let mut stationarity = Vec::with_capacity(l_count);
    let mut complementarity = Vec::with_capacity(l_count);
    let mut lower = Vec::with_capacity(l_count);
    let mut upper = Vec::with_capacity(l_count);
    for n in 0..l_count {
        let (lo, hi) = topo.bounds(inst.links[n].origin);
        let edge = 1e-9 * (hi - lo).max(f64::MIN_POSITIVE);
        let d_n = objective_gradient(topo, inst, powers, n)?;
        let at_lower = powers[n] - lo <= edge;
        let at_upper = hi - powers[n] <= edge;
        let nu_l = if at_lower { (-d_n).max(0.0) } else { 0.0 };
        let nu_u = if at_upper { d_n.max(0.0) } else { 0.0 };
        stationarity.push((d_n + nu_l - nu_u).abs());
        complementarity.push((nu_l * (powers[n] - lo)).abs().max((nu_u * (hi - powers[n])).abs()));
        lower.push(nu_l);
        upper.push(nu_u);
    }
    Ok(KktResidual { stationarity, complementarity, lower_multipliers: lower, upper_multipliers: upper })
}

/// Exhaustive grid maximization of the scheduling objective.
#[derive(Debug, Clone, PartialEq)]
pub struct BruteForceResult {
    pub powers: Vec<f64>,
    pub objective: f64,
}

/// Scan a joint power grid of `grid_points` per axis and return the best
/// point. Ties keep the lexicographically smallest power vector. Guarded
/// to at most 5 players.
pub fn brute_force_schedule(
    topo: &NetworkTopology,
    inst: &SchedulingInstance,
    grid_points: usize,
) -> Result<BruteForceResult> {
    inst.validate_against(topo)?;
    if inst.len() > 5 {
        return Err(Error::InvalidInput(format!(
            "brute force is limited to 5 players, got {}",
            inst.len()
        )));
    }
    if grid_points < 2 {
        return Err(Error::InvalidInput("brute-force grids need at least 2 points per axis".into()));
    }
    let l_count = inst.len();
    let axes: Vec<(f64, f64)> = inst.bounds(topo);
    let mut best_powers = Vec::new();
    let mut best_value = f64::NEG_INFINITY;
    let mut idx = vec![0usize; l_count];
    let mut powers = vec![0.0f64; l_count];
    loop {
        for (i, (&k, &(lo, hi))) in idx.iter().zip(&axes).enumerate() {
            powers[i] = lo + (hi - lo) * k as f64 / (grid_points - 1) as f64;
        }
        let value = objective(topo, inst, &powers)?;
        // Strict improvement keeps the first, lexicographically smallest
        // maximizer of the scan order.
        if value > best_value {
            best_value = value;
            best_powers = powers.clone();
        }
        let mut axis = l_count;
        loop {
            if axis == 0 {
                return Ok(BruteForceResult { powers: best_powers, objective: best_value });
            }
            axis -= 1;
            idx[axis] += 1;
            if idx[axis] < grid_points {
                break;
            }
            idx[axis] = 0;
        }
    }
}

/// Polish a candidate maximizer by cyclic coordinate ascent: each pass
/// scans every coordinate on a dense line grid, then pins the local
/// stationary point by bisecting the objective gradient inside the best
/// cell. Returns a KKT point of the scheduling problem to near machine
/// precision when started near a local maximizer (e.g. from
/// [`brute_force_schedule`]).
pub fn refine_to_kkt(
    topo: &NetworkTopology,
    inst: &SchedulingInstance,
    start: &[f64],
    max_sweeps: usize,
) -> Result<Vec<f64>> {
    inst.validate_against(topo)?;
    if start.len() != inst.len() {
        return Err(Error::InvalidInput(format!(
            "expected {} powers, got {}",
            inst.len(),
            start.len()
        )));
    }
    const LINE_POINTS: usize = 200;
    let axes = inst.bounds(topo);
    let mut powers = start.to_vec();
    for _ in 0..max_sweeps {
        let mut moved = 0.0f64;
        for n in 0..inst.len() {
            let (lo, hi) = axes[n];
            if lo == hi {
                continue;
            }
            let old = powers[n];
            let step = (hi - lo) / (LINE_POINTS - 1) as f64;
            let mut best_i = 0;
            let mut best_v = f64::NEG_INFINITY;
            for i in 0..LINE_POINTS {
                powers[n] = lo + step * i as f64;
                let v = objective(topo, inst, &powers)?;
                if v > best_v {
                    best_v = v;
                    best_i = i;
                }
            }
            let mut target = lo + step * best_i as f64;
            if best_i > 0 && best_i < LINE_POINTS - 1 {
                // Interior maximum: the gradient changes sign inside the
                // bracketing cells.
                let mut a = lo + step * (best_i - 1) as f64;
                let mut b = lo + step * (best_i + 1) as f64;
                powers[n] = a;
                let mut ga = objective_gradient(topo, inst, &powers, n)?;
                powers[n] = b;
                let gb = objective_gradient(topo, inst, &powers, n)?;
                if ga > 0.0 && gb < 0.0 {
                    for _ in 0..120 {
                        let mid = 0.5 * (a + b);
                        if mid <= a || mid >= b {
                            break;
                        }
                        powers[n] = mid;
                        let gm = objective_gradient(topo, inst, &powers, n)?;
                        if gm > 0.0 {
                            a = mid;
                            ga = gm;
                        } else {
                            b = mid;
                        }
                    }
                    let _ = ga;
                    target = 0.5 * (a + b);
                }
            }
            moved = moved.max((target - old).abs());
            powers[n] = target;
        }
        if moved < 1e-12 {
            break;
        }
    }
    Ok(powers)
}

/// A candidate end node for one transmitter's active link.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReceiverCandidate {
    pub link: Link,
    /// Backpressure weight the link would carry.
    pub weight: f64,
    /// Scheduled rate the link would use.
    pub rate: f64,
    /// Interference power measured at the candidate receiver.
    pub interference: f64,
}

/// Pick the receiver maximizing `w mu/(e^mu - 1) * G / (I + sigma2)`, a
/// Markov-style lower-bound ratio on the weighted goodput. The
/// transmitter's own power would scale every candidate equally, so it is
/// dropped from the comparison. Ties keep the smallest link.
pub fn select_receiver(
    topo: &NetworkTopology,
    origin: usize,
    candidates: &[ReceiverCandidate],
) -> Result<Link> {
    if candidates.is_empty() {
        return Err(Error::InvalidInput(format!(
            "receiver selection for node {origin} got an empty candidate set"
        )));
    }
    let mut best: Option<(f64, Link)> = None;
    for cand in candidates {
        if cand.link.origin != origin {
            return Err(Error::InvalidInput(format!(
                "candidate link {} -> {} does not start at node {origin}",
                cand.link.origin, cand.link.end
            )));
        }
        if !(cand.weight.is_finite() && cand.weight >= 0.0) {
            return Err(Error::InvalidInput(format!(
                "candidate weight must be finite and >= 0, got {}",
                cand.weight
            )));
        }
        if !(cand.rate.is_finite() && cand.rate > 0.0) {
            return Err(Error::InvalidInput(format!(
                "candidate rate must be finite and > 0, got {}",
                cand.rate
            )));
        }
        if !(cand.interference.is_finite() && cand.interference >= 0.0) {
            return Err(Error::InvalidInput(format!(
                "candidate interference must be finite and >= 0, got {}",
                cand.interference
            )));
        }
        let gamma = channel::sinr_threshold(cand.rate);
        let gain = topo.gain(cand.link.end, origin);
        let denom = cand.interference + topo.noise_at(cand.link.end);
        let ratio = if denom > 0.0 {
            cand.weight * cand.rate / gamma * gain / denom
        } else {
            // Noise-free, interference-free candidate: infinitely
            // attractive unless it carries no weight or gain.
            if cand.weight * gain > 0.0 { f64::INFINITY } else { 0.0 }
        };
        let better = match &best {
            None => true,
            Some((br, bl)) => ratio > *br || (ratio == *br && cand.link < *bl),
        };
        if better {
            best = Some((ratio, cand.link));
        }
    }
    Ok(best.expect("candidate set is non-empty").1)
}

/// Broadcast power a price player uses so that the channel itself applies
/// the interference gain: `phi_m = w_m mu_m q_m gamma_m / (G_mm p_m)`.
pub fn price_broadcast_power(
    topo: &NetworkTopology,
    inst: &SchedulingInstance,
    powers: &[f64],
    m: usize,
    q_m: f64,
) -> Result<f64> {
    check_player(inst, m)?;
    if !(q_m > 0.0 && q_m <= 1.0) {
        return Err(Error::InvalidInput(format!(
            "success probability for player {m} must lie in (0, 1], got {q_m}"
        )));
    }
    let link = inst.links[m];
    let g_mm = topo.gain(link.end, link.origin);
    if !(powers[m] > 0.0) {
        return Err(Error::InvalidInput(format!("player {m} has no transmit power")));
    }
    Ok(inst.weights[m] * inst.rates[m] * q_m * channel::sinr_threshold(inst.rates[m])
        / (g_mm * powers[m]))
}

/// Fading the price broadcasts see on their way to a listener.
#[derive(Debug, Clone, Copy)]
pub enum FadingModel<'a> {
    /// Block fading: `factors[n][m]` scales what listener `n` receives
    /// from broadcaster `m`, identically on every symbol. All-ones
    /// factors with zero noise make the aggregation exact.
    Fixed(&'a [Vec<f64>]),
    /// Fast fading: an independent unit-mean exponential factor per pair
    /// and per symbol, so long symbol averages recover the deterministic
    /// sum.
    UnitMeanPerSymbol,
}

/// Draw a unit-mean exponential fading factor per (listener, broadcaster)
/// pair, held fixed for a whole run, for use with [`FadingModel::Fixed`].
pub fn unit_mean_fading<R: Rng + ?Sized>(rng: &mut R, players: usize) -> Vec<Vec<f64>> {
    let exp = Exp::new(1.0).expect("rate 1 is valid");
    (0..players)
        .map(|_| (0..players).map(|_| exp.sample(rng)).collect())
        .collect()
}

/// Recover a price sum from superimposed broadcasts: every price player
/// `m != n` transmits at power `phi[m]` simultaneously, and listener `n`
/// averages its received power over `symbols` slots. Each slot the signal
/// part is `sum_m G(origin_n, end_m) * F[n][m] * phi[m]` with fading `F`
/// from the chosen model, and the noise part an exponential draw with the
/// listener's mean noise power. The listener subtracts its known noise
/// power, negates, and divides by its own success probability `q_n`.
#[allow(clippy::too_many_arguments)]
pub fn aggregate_prices_over_air<R: Rng + ?Sized>(
    topo: &NetworkTopology,
    links: &[Link],
    phi: &[f64],
    fading: FadingModel,
    n: usize,
    q_n: f64,
    symbols: usize,
    rng: &mut R,
) -> Result<f64> {
    let l_count = links.len();
    if phi.len() != l_count {
        return Err(Error::InvalidInput(format!(
            "expected {l_count} broadcast powers, got {}",
            phi.len()
        )));
    }
    if let FadingModel::Fixed(factors) = fading {
        if factors.len() != l_count || factors.iter().any(|row| row.len() != l_count) {
            return Err(Error::InvalidInput(format!(
                "fading matrix must be {l_count} x {l_count}"
            )));
        }
    }
    if n >= l_count {
        return Err(Error::InvalidInput(format!("listener index {n} out of range")));
    }
    if !(q_n > 0.0 && q_n <= 1.0) {
        return Err(Error::InvalidInput(format!(
            "listener success probability must lie in (0, 1], got {q_n}"
        )));
    }
    if symbols == 0 {
        return Err(Error::InvalidInput("need at least one symbol measurement".into()));
    }
    for (m, &p) in phi.iter().enumerate() {
        if !(p.is_finite() && p >= 0.0) {
            return Err(Error::InvalidInput(format!(
                "broadcast power of player {m} must be finite and >= 0, got {p}"
            )));
        }
    }
    let listener = links[n].origin;
    let sigma2 = topo.noise_at(listener);
    let noise = (sigma2 > 0.0).then(|| Exp::new(1.0 / sigma2).expect("positive noise power"));
    let mut mean = 0.0;
    match fading {
        FadingModel::Fixed(factors) => {
            let signal: f64 = (0..l_count)
                .filter(|&m| m != n)
                .map(|m| topo.gain(listener, links[m].end) * factors[n][m] * phi[m])
                .sum();
            if let Some(noise) = noise {
                for _ in 0..symbols {
                    mean += signal + noise.sample(rng);
                }
                mean /= symbols as f64;
            } else {
                mean = signal;
            }
        }
        FadingModel::UnitMeanPerSymbol => {
            let unit = Exp::new(1.0).expect("rate 1 is valid");
            let terms: Vec<f64> = (0..l_count)
                .filter(|&m| m != n)
                .map(|m| topo.gain(listener, links[m].end) * phi[m])
                .collect();
            for _ in 0..symbols {
                let mut s: f64 = terms.iter().map(|t| t * unit.sample(rng)).sum();
                if let Some(noise) = &noise {
                    s += noise.sample(rng);
                }
                mean += s;
            }
            mean /= symbols as f64;
        }
    }
    Ok(-(mean - sigma2) / q_n)
}

/// Result of the measured, over-the-air variant of the round-robin run.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasuredGameRun {
    pub powers: Vec<f64>,
    /// Final over-the-air price sums, clamped to be non-positive.
    pub sum_prices: Vec<f64>,
    pub rounds: usize,
    pub converged: bool,
    /// True weighted-goodput objective at the final powers, for
    /// comparison against the message-passing run.
    pub objective: f64,
}

/// Interference power the receiver of player `n` measures.
fn measured_interference(
    topo: &NetworkTopology,
    links: &[Link],
    powers: &[f64],
    n: usize,
) -> f64 {
    let rx = links[n].end;
    links
        .iter()
        .enumerate()
        .filter(|(j, other)| *j != n && other.origin != links[n].origin)
        .map(|(j, other)| topo.gain(rx, other.origin) * powers[j])
        .sum()
}

/// Success probability player `n` can form from its own measurements.
fn measured_success(
    topo: &NetworkTopology,
    inst: &SchedulingInstance,
    powers: &[f64],
    n: usize,
) -> Result<f64> {
    let link = inst.links[n];
    channel::success_probability_measured(
        powers[n],
        topo.gain(link.end, link.origin),
        measured_interference(topo, &inst.links, powers, n),
        topo.noise_at(link.end),
        inst.rates[n],
    )
}

/// Best response under the measured model. `log q` is `-(I + sigma2)
/// gamma / (G p)`, so the stationary point of `w mu log q + p c` has the
/// closed form `p* = sqrt(w mu (I + sigma2) gamma / (G (-c)))`.
fn measured_best_response(
    topo: &NetworkTopology,
    inst: &SchedulingInstance,
    powers: &[f64],
    n: usize,
    c_n: f64,
) -> f64 {
    let link = inst.links[n];
    let (lo, hi) = topo.bounds(link.origin);
    if c_n >= 0.0 {
        return hi;
    }
    let w_mu = inst.weights[n] * inst.rates[n];
    let gamma = channel::sinr_threshold(inst.rates[n]);
    if w_mu * gamma == 0.0 {
        return lo;
    }
    let load = measured_interference(topo, &inst.links, powers, n) + topo.noise_at(link.end);
    let g_nn = topo.gain(link.end, link.origin);
    (w_mu * load * gamma / (g_nn * (-c_n))).sqrt().clamp(lo, hi)
}

/// Round-robin run in which every quantity a player uses is one it could
/// measure: own-link success probabilities come from measured
/// interference, and price sums arrive through over-the-air aggregation
/// with the given fading model and per-round symbol averaging.
/// Powers start at the upper bounds and prices from a measurement there:
/// nodes cannot compute interval floors locally, and at minimum power the
/// price broadcasts would drown in receiver noise (the broadcast power
/// scales with the success probability, which is smallest there).
/// Convergence is judged on powers alone because the price estimates
/// keep their measurement noise floor.
pub fn run_table1_measured<R: Rng + ?Sized>(
    topo: &NetworkTopology,
    inst: &SchedulingInstance,
    opts: &GameOptions,
    symbols: usize,
    fading: FadingModel,
    rng: &mut R,
) -> Result<MeasuredGameRun> {
    inst.validate_against(topo)?;
    let l_count = inst.len();
    let mut powers: Vec<f64> = inst.links.iter().map(|l| topo.bounds(l.origin).1).collect();
    let mut sum_prices = ota_price_round(topo, inst, &powers, symbols, fading, rng)?;
    let mut converged = false;
    let mut rounds = 0;
    for round in 1..=opts.max_rounds {
        rounds = round;
        let prev = powers.clone();
        for n in 0..l_count {
            powers[n] = measured_best_response(topo, inst, &powers, n, sum_prices[n]);
        }
        sum_prices = ota_price_round(topo, inst, &powers, symbols, fading, rng)?;
        if sup_delta(&powers, &prev) < opts.tolerance {
            converged = true;
            break;
        }
    }
    let objective = objective(topo, inst, &powers)?;
    Ok(MeasuredGameRun { powers, sum_prices, rounds, converged, objective })
}

fn ota_price_round<R: Rng + ?Sized>(
    topo: &NetworkTopology,
    inst: &SchedulingInstance,
    powers: &[f64],
    symbols: usize,
    fading: FadingModel,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let l_count = inst.len();
    let mut phi = Vec::with_capacity(l_count);
    let mut q_hat = Vec::with_capacity(l_count);
    for m in 0..l_count {
        let q = measured_success(topo, inst, powers, m)?;
        phi.push(price_broadcast_power(topo, inst, powers, m, q)?);
        q_hat.push(q);
    }
    (0..l_count)
        .map(|n| {
            let c = aggregate_prices_over_air(
                topo,
                &inst.links,
                &phi,
                fading,
                n,
                q_hat[n],
                symbols,
                rng,
            )?;
            // Price sums are non-positive by definition; measurement
            // noise must not push them above zero.
            Ok(c.min(0.0))
        })
        .collect()
}

fn check_player(inst: &SchedulingInstance, n: usize) -> Result<()> {
    if n >= inst.len() {
        return Err(Error::InvalidInput(format!(
            "player index {n} out of range for {} players",
            inst.len()
        )));
    }
    Ok(())
}

fn check_pair(inst: &SchedulingInstance, m: usize, n: usize) -> Result<()> {
    check_player(inst, m)?;
    check_player(inst, n)?;
    if m == n {
        return Err(Error::InvalidInput(format!("player {m} does not price itself")));
    }
    Ok(())
}

/// Draw a random scheduling instance with 2 to 4 players: one transmitter
/// per player, receivers drawn with replacement, every cross pair
/// interfering. Used by the verification harnesses.
pub fn random_instance<R: Rng + ?Sized>(rng: &mut R) -> (NetworkTopology, SchedulingInstance) {
    let players = rng.random_range(2..=4usize);
    random_instance_with_players(rng, players)
}

/// Same family as [`random_instance`] with the player count pinned.
pub fn random_instance_with_players<R: Rng + ?Sized>(
    rng: &mut R,
    players: usize,
) -> (NetworkTopology, SchedulingInstance) {
    let nodes = 2 * players;
    let mut gains = vec![vec![0.0; nodes]; nodes];
    let mut links = Vec::with_capacity(players);
    for m in 0..players {
        let end = players + rng.random_range(0..players);
        links.push(Link::new(m, end).unwrap());
    }
    for m in 0..players {
        let rx = links[m].end;
        for tx in 0..players {
            gains[rx][tx] = if tx == m {
                rng.random_range(0.7..1.5)
            } else {
                rng.random_range(0.05..0.3)
            };
        }
    }
    let noise = (0..nodes).map(|_| rng.random_range(0.5..1.5)).collect();
    let topo = NetworkTopology::new(gains, noise, vec![(0.5, 2.5); nodes]).unwrap();
    let weights = (0..players).map(|_| rng.random_range(0.2..2.0)).collect();
    let rates = (0..players).map(|_| rng.random_range(0.3..1.2)).collect();
    let inst = SchedulingInstance::new(links, weights, rates).unwrap();
    (topo, inst)
}
