//! Dual decomposition of the network utility maximization problem.
//!
//! Sources solve a one-dimensional rate-control problem against their
//! local dual price, links get backpressure weights from dual-price
//! differentials, the weighted-goodput scheduling problem is handed to
//! the power-price game (or a brute-force oracle), and the dual prices
//! follow a projected subgradient recursion on the per-node flow
//! balance. Commodities are identified by destination node.

use crate::channel::{self, Link, NetworkTopology};
use crate::error::{Error, Result};
use crate::game::{self, GameOptions, PriceFloorBase, ReceiverCandidate, SchedulingInstance};
use crate::seed::labeled_rng;
use std::collections::HashMap;

/// Strictly concave elastic-traffic utility `U(x) = a log(x + eps)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UtilitySpec {
    weight: f64,
    offset: f64,
}

impl UtilitySpec {
    pub fn weighted_log(weight: f64, offset: f64) -> Result<Self> {
        if !(weight.is_finite() && weight > 0.0) {
            return Err(Error::InvalidInput(format!(
                "utility weight must be finite and > 0, got {weight}"
            )));
        }
        if !(offset.is_finite() && offset >= 0.0) {
            return Err(Error::InvalidInput(format!(
                "utility offset must be finite and >= 0, got {offset}"
            )));
        }
        Ok(UtilitySpec { weight, offset })
    }

    pub fn weight(&self) -> f64 {
        self.weight
    }

    pub fn offset(&self) -> f64 {
        self.offset
    }

    pub fn value(&self, x: f64) -> f64 {
        self.weight * (x + self.offset).ln()
    }
}

/// One end-to-end data flow.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CommodityFlow {
    pub source: usize,
    pub destination: usize,
    pub utility: UtilitySpec,
}

impl CommodityFlow {
    pub fn new(source: usize, destination: usize, utility: UtilitySpec) -> Result<Self> {
        if source == destination {
            return Err(Error::InvalidInput(format!(
                "flow source and destination coincide at node {source}"
            )));
        }
        Ok(CommodityFlow { source, destination, utility })
    }
}

/// Per-(node, commodity) dual prices; non-negative, with each
/// destination's own row entry pinned to zero (the destination absorbs).
#[derive(Debug, Clone, PartialEq)]
pub struct DualPrices {
    lambda: Vec<Vec<f64>>,
    destinations: Vec<usize>,
}

impl DualPrices {
    /// All-zero prices for `nodes` nodes and the given commodity
    /// destinations (strictly increasing node ids).
    pub fn zeros(nodes: usize, destinations: Vec<usize>) -> Result<Self> {
        if destinations.is_empty() {
            return Err(Error::InvalidInput("at least one commodity is required".into()));
        }
        if !destinations.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::InvalidInput(
                "commodity destinations must be strictly increasing".into(),
            ));
        }
        if let Some(&d) = destinations.iter().find(|&&d| d >= nodes) {
            return Err(Error::InvalidInput(format!(
                "destination node {d} out of range for {nodes} nodes"
            )));
        }
        Ok(DualPrices { lambda: vec![vec![0.0; destinations.len()]; nodes], destinations })
    }

    pub fn node_count(&self) -> usize {
        self.lambda.len()
    }

    pub fn destinations(&self) -> &[usize] {
        &self.destinations
    }

    pub fn commodity_index(&self, destination: usize) -> Option<usize> {
        self.destinations.binary_search(&destination).ok()
    }

    pub fn get(&self, node: usize, commodity: usize) -> f64 {
        self.lambda[node][commodity]
    }

    /// Row-major view, one row per node.
    pub fn lambda(&self) -> &[Vec<f64>] {
        &self.lambda
    }
}

/// Backpressure weight and chosen commodity per link, parallel to the
/// link slice they were computed from.
#[derive(Debug, Clone, PartialEq)]
pub struct BackpressureWeights {
    pub w: Vec<f64>,
    /// Commodity index (into the destinations list) attaining the weight.
    pub commodity: Vec<usize>,
}

/// Unique maximizer of `U(x) - lambda x` over `[0, cap]`. For the
/// weighted log family the stationary point is `a/lambda - eps`; a zero
/// price would push it to infinity, so the cap takes over there.
pub fn input_rate(utility: &UtilitySpec, lambda: f64, cap: f64) -> Result<f64> {
    if !(lambda.is_finite() && lambda >= 0.0) {
        return Err(Error::InvalidInput(format!(
            "dual price must be finite and >= 0, got {lambda}"
        )));
    }
    if !(cap.is_finite() && cap > 0.0) {
        return Err(Error::InvalidInput(format!("rate cap must be finite and > 0, got {cap}")));
    }
    if lambda == 0.0 {
        return Ok(cap);
    }
    Ok((utility.weight / lambda - utility.offset).clamp(0.0, cap))
}

/// Largest non-negative dual-price differential per link, with the
/// commodity attaining it; ties keep the smallest commodity index.
pub fn backpressure_weights(prices: &DualPrices, links: &[Link]) -> Result<BackpressureWeights> {
    let nodes = prices.node_count();
    let mut w = Vec::with_capacity(links.len());
    let mut commodity = Vec::with_capacity(links.len());
    for (i, link) in links.iter().enumerate() {
        if link.origin >= nodes || link.end >= nodes {
            return Err(Error::InvalidInput(format!(
                "link {i} ({} -> {}) falls outside the {nodes}-node price matrix",
                link.origin, link.end
            )));
        }
        let mut best = 0.0;
        let mut best_c = 0;
        for c in 0..prices.destinations.len() {
            let diff = prices.get(link.origin, c) - prices.get(link.end, c);
            if diff > best {
                best = diff;
                best_c = c;
            }
        }
        w.push(best);
        commodity.push(best_c);
    }
    Ok(BackpressureWeights { w, commodity })
}

/// Projected subgradient step on the dual prices:
/// `lambda <- [lambda + step (x - out + in)]+`, componentwise, with
/// destination entries re-pinned to zero. `arrivals` lists exogenous
/// input rates as (node, commodity, rate); `transfers` lists achieved
/// goodput flows as (link, commodity, amount), debited at the origin and
/// credited at the end.
pub fn dual_update(
    prices: &DualPrices,
    arrivals: &[(usize, usize, f64)],
    transfers: &[(Link, usize, f64)],
    stepsize: f64,
) -> Result<DualPrices> {
    if !(stepsize.is_finite() && stepsize > 0.0) {
        return Err(Error::InvalidInput(format!(
            "stepsize must be finite and > 0, got {stepsize}"
        )));
    }
    let nodes = prices.node_count();
    let commodities = prices.destinations.len();
    let mut subgradient = vec![vec![0.0f64; commodities]; nodes];
    for &(node, c, rate) in arrivals {
        if node >= nodes || c >= commodities {
            return Err(Error::InvalidInput(format!(
                "arrival entry (node {node}, commodity {c}) out of range"
            )));
        }
        if !(rate.is_finite() && rate >= 0.0) {
            return Err(Error::InvalidInput(format!(
                "arrival rate must be finite and >= 0, got {rate}"
            )));
        }
        subgradient[node][c] += rate;
    }
    for &(link, c, amount) in transfers {
        if link.origin >= nodes || link.end >= nodes || c >= commodities {
            return Err(Error::InvalidInput(format!(
                "transfer entry ({} -> {}, commodity {c}) out of range",
                link.origin, link.end
            )));
        }
        if !(amount.is_finite() && amount >= 0.0) {
            return Err(Error::InvalidInput(format!(
                "transfer amount must be finite and >= 0, got {amount}"
            )));
        }
        subgradient[link.origin][c] -= amount;
        subgradient[link.end][c] += amount;
    }
    let mut next = prices.clone();
    for n in 0..nodes {
        for c in 0..commodities {
            next.lambda[n][c] = (next.lambda[n][c] + stepsize * subgradient[n][c]).max(0.0);
        }
    }
    for (c, &d) in prices.destinations.iter().enumerate() {
        next.lambda[d][c] = 0.0;
    }
    Ok(next)
}

/// Which solver handles the per-iteration scheduling problem.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SchedulerKind {
    /// Round-robin power-price game.
    Game,
    /// Grid search plus coordinate polish.
    Oracle,
}

/// What enters the dual subgradient as the achieved flow.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GoodputMode {
    /// Expected goodput `mu q`.
    Expected,
    /// A Bernoulli draw of the slot's actual transfer, `mu` on success.
    Realized,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NumOptions {
    pub stepsize: f64,
    pub iterations: usize,
    /// Source-rate cap standing in for the unbounded log maximizer at
    /// zero price.
    pub rate_cap: f64,
    pub scheduler: SchedulerKind,
    pub goodput: GoodputMode,
    pub game: GameOptions,
    /// Points per axis for the oracle's grid search.
    pub oracle_grid: usize,
}

impl Default for NumOptions {
    fn default() -> Self {
        NumOptions {
            stepsize: 0.05,
            iterations: 1000,
            rate_cap: 10.0,
            scheduler: SchedulerKind::Game,
            goodput: GoodputMode::Expected,
            game: GameOptions::default(),
            oracle_grid: 12,
        }
    }
}

/// One iteration of the closed loop.
#[derive(Debug, Clone, PartialEq)]
pub struct NumIterate {
    pub t: usize,
    /// Dual prices after this iteration's update, one row per node.
    pub lambda: Vec<Vec<f64>>,
    /// Source rates chosen this iteration, parallel to the flow list.
    pub x: Vec<f64>,
    /// Achieved weighted goodput `sum_l w_l g_l`.
    pub objective: f64,
    pub scheduler_converged: bool,
    pub active: Vec<Link>,
    pub powers: Vec<f64>,
    /// Achieved goodput flow per active link.
    pub goodputs: Vec<f64>,
    /// Destination node served by each active link.
    pub served_destination: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NumTrace {
    pub destinations: Vec<usize>,
    pub iterates: Vec<NumIterate>,
}

impl NumTrace {
    pub fn flagged_iterations(&self) -> usize {
        self.iterates.iter().filter(|it| !it.scheduler_converged).count()
    }

    fn tail(&self, fraction: f64) -> &[NumIterate] {
        let len = self.iterates.len();
        let keep = ((len as f64 * fraction).ceil() as usize).clamp(1, len);
        &self.iterates[len - keep..]
    }

    /// Mean achieved objective over the trailing `fraction` of the run.
    pub fn mean_objective_over_last(&self, fraction: f64) -> f64 {
        let tail = self.tail(fraction);
        tail.iter().map(|it| it.objective).sum::<f64>() / tail.len() as f64
    }

    /// Per-flow mean source rates over the trailing `fraction`.
    pub fn mean_rates_over_last(&self, fraction: f64) -> Vec<f64> {
        let tail = self.tail(fraction);
        let flows = tail[0].x.len();
        let mut mean = vec![0.0; flows];
        for it in tail {
            for (m, &x) in mean.iter_mut().zip(&it.x) {
                *m += x;
            }
        }
        for m in &mut mean {
            *m /= tail.len() as f64;
        }
        mean
    }

    /// Per-(node, commodity) mean dual prices over the trailing
    /// `fraction`.
    pub fn mean_lambda_over_last(&self, fraction: f64) -> Vec<Vec<f64>> {
        let tail = self.tail(fraction);
        let mut mean = vec![vec![0.0; self.destinations.len()]; tail[0].lambda.len()];
        for it in tail {
            for (row, src) in mean.iter_mut().zip(&it.lambda) {
                for (m, &v) in row.iter_mut().zip(src) {
                    *m += v;
                }
            }
        }
        for row in &mut mean {
            for m in row.iter_mut() {
                *m /= tail.len() as f64;
            }
        }
        mean
    }
}

/// Closed-loop dual decomposition: rate control per source, backpressure
/// weights and receiver selection, the scheduling solve, goodput
/// accounting, and the projected dual step, for `opts.iterations` rounds.
///
/// `rates` fixes each node's scheduled transmission rate. Candidate links
/// run from every node to every neighbor it has a positive gain towards;
/// a node with positive-weight candidates picks one receiver per
/// iteration by the interference-ratio rule, measuring interference from
/// the previous iteration's transmit powers. Scheduler non-convergence is
/// recorded on the iterate, never raised.
pub fn num_loop(
    topo: &NetworkTopology,
    flows: &[CommodityFlow],
    rates: &[f64],
    opts: &NumOptions,
    seed: u64,
) -> Result<NumTrace> {
    validate_loop_inputs(topo, flows, rates, opts)?;
    let nodes = topo.node_count();
    let mut destinations: Vec<usize> = flows.iter().map(|f| f.destination).collect();
    destinations.sort_unstable();
    destinations.dedup();
    let commodity_of: Vec<usize> = flows
        .iter()
        .map(|f| destinations.binary_search(&f.destination).expect("destination present"))
        .collect();

    // Every positive-gain ordered pair is a candidate link.
    let candidates: Vec<Vec<Link>> = (0..nodes)
        .map(|n| {
            (0..nodes)
                .filter(|&m| m != n && topo.gain(m, n) > 0.0)
                .map(|m| Link::new(n, m).expect("distinct nodes"))
                .collect()
        })
        .collect();

    let mut prices = DualPrices::zeros(nodes, destinations.clone())?;
    let mut floor_cache: HashMap<Vec<Link>, PriceFloorBase> = HashMap::new();
    let mut rng = labeled_rng(seed, "num-realized-goodput");
    let mut prev_active: Vec<(usize, f64)> = Vec::new();
    let mut iterates = Vec::with_capacity(opts.iterations);

    for t in 1..=opts.iterations {
        // Rate control per flow.
        let x: Vec<f64> = flows
            .iter()
            .zip(&commodity_of)
            .map(|(f, &c)| input_rate(&f.utility, prices.get(f.source, c), opts.rate_cap))
            .collect::<Result<_>>()?;

        // Receiver selection among positive-weight candidates.
        let mut active = Vec::new();
        let mut active_weights = Vec::new();
        let mut active_commodity = Vec::new();
        for n in 0..nodes {
            if rates[n] <= 0.0 || candidates[n].is_empty() {
                continue;
            }
            let bw = backpressure_weights(&prices, &candidates[n])?;
            let offers: Vec<ReceiverCandidate> = candidates[n]
                .iter()
                .zip(bw.w.iter().zip(&bw.commodity))
                .filter(|(_, (&w, _))| w > 0.0)
                .map(|(&link, (&w, _))| ReceiverCandidate {
                    link,
                    weight: w,
                    rate: rates[n],
                    interference: prev_active
                        .iter()
                        .filter(|(origin, _)| *origin != n)
                        .map(|&(origin, p)| topo.gain(link.end, origin) * p)
                        .sum(),
                })
                .collect();
            if offers.is_empty() {
                continue;
            }
            let chosen = game::select_receiver(topo, n, &offers)?;
            let slot = candidates[n].iter().position(|l| *l == chosen).expect("chosen candidate");
            active.push(chosen);
            active_weights.push(bw.w[slot]);
            active_commodity.push(bw.commodity[slot]);
        }

        // Scheduling solve on the active set.
        let mut powers = Vec::new();
        let mut goodputs = Vec::new();
        let mut converged = true;
        if !active.is_empty() {
            let inst_rates: Vec<f64> = active.iter().map(|l| rates[l.origin]).collect();
            let inst =
                SchedulingInstance::new(active.clone(), active_weights.clone(), inst_rates)?;
            powers = match opts.scheduler {
                SchedulerKind::Game => {
                    let base = match floor_cache.get(&active) {
                        Some(base) => base,
                        None => {
                            let built = game::price_floor_base(
                                topo,
                                inst.links(),
                                inst.rates(),
                                opts.game.floor_grid,
                            )?;
                            floor_cache.entry(active.clone()).or_insert(built)
                        }
                    };
                    let run = game::run_table1_with_base(topo, &inst, &opts.game, base)?;
                    converged = run.converged;
                    run.state.powers
                }
                SchedulerKind::Oracle => {
                    let bf = game::brute_force_schedule(topo, &inst, opts.oracle_grid)?;
                    game::refine_to_kkt(topo, &inst, &bf.powers, 3)?
                }
            };
            for (i, link) in active.iter().enumerate() {
                let q = channel::success_probability(topo, &active, &powers, i, rates[link.origin])?;
                let g = match opts.goodput {
                    GoodputMode::Expected => rates[link.origin] * q,
                    GoodputMode::Realized => {
                        if channel::sample_transmission(q, &mut rng)? {
                            rates[link.origin]
                        } else {
                            0.0
                        }
                    }
                };
                goodputs.push(g);
            }
        }
        let objective: f64 =
            active_weights.iter().zip(&goodputs).map(|(w, g)| w * g).sum();

        // Dual step.
        let arrivals: Vec<(usize, usize, f64)> = flows
            .iter()
            .zip(&commodity_of)
            .zip(&x)
            .map(|((f, &c), &rate)| (f.source, c, rate))
            .collect();
        let transfers: Vec<(Link, usize, f64)> = active
            .iter()
            .zip(&active_commodity)
            .zip(&goodputs)
            .map(|((&link, &c), &g)| (link, c, g))
            .collect();
        prices = dual_update(&prices, &arrivals, &transfers, opts.stepsize)?;

        prev_active = active
            .iter()
            .zip(&powers)
            .map(|(link, &p)| (link.origin, p))
            .collect();
        iterates.push(NumIterate {
            t,
            lambda: prices.lambda().to_vec(),
            x,
            objective,
            scheduler_converged: converged,
            active,
            powers,
            goodputs,
            served_destination: active_commodity.iter().map(|&c| destinations[c]).collect(),
        });
    }
    Ok(NumTrace { destinations, iterates })
}

fn validate_loop_inputs(
    topo: &NetworkTopology,
    flows: &[CommodityFlow],
    rates: &[f64],
    opts: &NumOptions,
) -> Result<()> {
    if flows.is_empty() {
        return Err(Error::InvalidInput("at least one flow is required".into()));
    }
    for (i, f) in flows.iter().enumerate() {
        topo.check_node(f.source, &format!("flow {i} source"))?;
        topo.check_node(f.destination, &format!("flow {i} destination"))?;
        for other in flows.iter().skip(i + 1) {
            if f.source == other.source && f.destination == other.destination {
                return Err(Error::InvalidInput(format!(
                    "duplicate flow {} -> {}; merge it into one commodity",
                    f.source, f.destination
                )));
            }
        }
    }
    if rates.len() != topo.node_count() {
        return Err(Error::InvalidInput(format!(
            "expected one scheduled rate per node ({}), got {}",
            topo.node_count(),
            rates.len()
        )));
    }
    if let Some((n, &mu)) =
        rates.iter().enumerate().find(|(_, &mu)| !(mu.is_finite() && mu >= 0.0))
    {
        return Err(Error::InvalidInput(format!(
            "scheduled rate of node {n} must be finite and >= 0, got {mu}"
        )));
    }
    if !(opts.stepsize.is_finite() && opts.stepsize > 0.0) {
        return Err(Error::InvalidInput(format!(
            "stepsize must be finite and > 0, got {}",
            opts.stepsize
        )));
    }
    if opts.iterations == 0 {
        return Err(Error::InvalidInput("iterations must be >= 1".into()));
    }
    if !(opts.rate_cap.is_finite() && opts.rate_cap > 0.0) {
        return Err(Error::InvalidInput(format!(
            "rate cap must be finite and > 0, got {}",
            opts.rate_cap
        )));
    }
    if opts.oracle_grid < 2 {
        return Err(Error::InvalidInput("oracle grids need at least 2 points per axis".into()));
    }
    Ok(())
}
