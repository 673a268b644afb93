//! Slotted multi-commodity queue simulation with outage outcomes and ARQ.
//!
//! Each slot, every scheduled link draws a Bernoulli success from its
//! outage probability and, on failure, an independent retention decision:
//! with probability `delta` the packet stays for retransmission, with
//! `1 - delta` it is dropped. The transmitter's backlog shrinks on
//! success or drop; the receiver is credited only on success, and only
//! with the amount the transmitter actually held. Arrivals are added
//! after transfers, and destinations absorb their own commodity.

use crate::channel::{self, Link, NetworkTopology};
use crate::error::{Error, Result};
use crate::region::{self, DroppingProfile, PowerGrid};
use crate::seed::labeled_rng;
use rand::Rng;
use rand_distr::{Distribution, Poisson};
use std::collections::HashMap;

/// Per-node, per-commodity backlog. Commodities are identified by their
/// destination node; each destination's own entry is pinned to zero.
#[derive(Debug, Clone, PartialEq)]
pub struct QueueMatrix {
    u: Vec<Vec<f64>>,
    destinations: Vec<usize>,
}

impl QueueMatrix {
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
        Ok(QueueMatrix { u: vec![vec![0.0; destinations.len()]; nodes], destinations })
    }

    pub fn node_count(&self) -> usize {
        self.u.len()
    }

    pub fn destinations(&self) -> &[usize] {
        &self.destinations
    }

    pub fn backlog(&self, node: usize, commodity: usize) -> f64 {
        self.u[node][commodity]
    }

    pub fn total_backlog(&self) -> f64 {
        self.u.iter().flatten().sum()
    }

    pub fn commodity_backlog(&self, commodity: usize) -> f64 {
        self.u.iter().map(|row| row[commodity]).sum()
    }

    fn absorb_destinations(&mut self) {
        for (c, &d) in self.destinations.iter().enumerate() {
            self.u[d][c] = 0.0;
        }
    }
}

/// Exogenous arrivals, mean `rates[node][commodity]` per slot.
#[derive(Debug, Clone, PartialEq)]
pub struct ArrivalProcess {
    rates: Vec<Vec<f64>>,
    distribution: ArrivalDistribution,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArrivalDistribution {
    Deterministic,
    Poisson,
}

impl ArrivalProcess {
    pub fn new(rates: Vec<Vec<f64>>, distribution: ArrivalDistribution) -> Result<Self> {
        for (n, row) in rates.iter().enumerate() {
            if row.len() != rates[0].len() {
                return Err(Error::InvalidInput("ragged arrival-rate matrix".into()));
            }
            for (c, &r) in row.iter().enumerate() {
                if !(r.is_finite() && r >= 0.0) {
                    return Err(Error::InvalidInput(format!(
                        "arrival rate at (node {n}, commodity {c}) must be finite and >= 0, got {r}"
                    )));
                }
            }
        }
        Ok(ArrivalProcess { rates, distribution })
    }

    pub fn rates(&self) -> &[Vec<f64>] {
        &self.rates
    }

    /// The same process with every mean multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        if !(factor.is_finite() && factor >= 0.0) {
            return Err(Error::InvalidInput(format!(
                "arrival scale must be finite and >= 0, got {factor}"
            )));
        }
        let rates = self
            .rates
            .iter()
            .map(|row| row.iter().map(|r| r * factor).collect())
            .collect();
        Ok(ArrivalProcess { rates, distribution: self.distribution })
    }

    /// Draw one slot of arrivals.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<Vec<f64>> {
        match self.distribution {
            ArrivalDistribution::Deterministic => self.rates.clone(),
            ArrivalDistribution::Poisson => self
                .rates
                .iter()
                .map(|row| {
                    row.iter()
                        .map(|&r| {
                            if r > 0.0 {
                                Poisson::new(r).expect("positive mean").sample(rng)
                            } else {
                                0.0
                            }
                        })
                        .collect()
                })
                .collect(),
        }
    }
}

/// Per-link packet retention on failure.
#[derive(Debug, Clone, PartialEq)]
pub struct DropPolicy {
    profile: DroppingProfile,
}

impl DropPolicy {
    pub fn new(profile: DroppingProfile) -> Self {
        DropPolicy { profile }
    }

    /// Pure ARQ on every link: failures always stay queued.
    pub fn never_drop(links: usize) -> Self {
        DropPolicy { profile: DroppingProfile::uniform(1.0, links).expect("valid delta") }
    }

    pub fn profile(&self) -> &DroppingProfile {
        &self.profile
    }
}

/// One slot's transmission plan: per link a power (zero keeps the link
/// silent), a scheduled rate, and the split of that rate across
/// commodities.
#[derive(Debug, Clone, PartialEq)]
pub struct SlotSchedule {
    pub powers: Vec<f64>,
    pub rates: Vec<f64>,
    /// Per link, `(commodity index, allocated rate)` pairs; the
    /// allocations of a link must not exceed its scheduled rate.
    pub allocations: Vec<Vec<(usize, f64)>>,
}

impl SlotSchedule {
    /// A schedule that keeps every link silent.
    pub fn silent(links: usize) -> Self {
        SlotSchedule {
            powers: vec![0.0; links],
            rates: vec![0.0; links],
            allocations: vec![Vec::new(); links],
        }
    }
}

/// What happened on one link during a slot.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkOutcome {
    pub link: usize,
    pub transmitted: bool,
    pub success: bool,
    /// Retention draw on failure; meaningless when `success` holds.
    pub retained: bool,
    /// Amount actually taken from the transmitter, per commodity.
    pub sent: Vec<(usize, f64)>,
}

/// Advance the queues by one slot. Returns the new backlog matrix and
/// the per-link outcomes (which tests use to audit conservation).
///
/// Links sharing an (origin, commodity) backlog are served in index
/// order, each taking at most what is left, so the departure side never
/// goes negative. Receivers are credited the transmitter's actually-sent
/// amount, and only on success.
pub fn step<R: Rng + ?Sized>(
    queues: &QueueMatrix,
    topo: &NetworkTopology,
    links: &[Link],
    schedule: &SlotSchedule,
    drops: &DropPolicy,
    arrivals: &[Vec<f64>],
    rng: &mut R,
) -> Result<(QueueMatrix, Vec<LinkOutcome>)> {
    let nodes = queues.node_count();
    let commodities = queues.destinations.len();
    if schedule.powers.len() != links.len()
        || schedule.rates.len() != links.len()
        || schedule.allocations.len() != links.len()
    {
        return Err(Error::InvalidInput(format!(
            "schedule shape does not match the {} links",
            links.len()
        )));
    }
    if drops.profile.len() != links.len() {
        return Err(Error::InvalidInput(format!(
            "drop policy covers {} links, expected {}",
            drops.profile.len(),
            links.len()
        )));
    }
    if arrivals.len() != nodes || arrivals.iter().any(|row| row.len() != commodities) {
        return Err(Error::InvalidInput(format!(
            "arrival matrix must be {nodes} x {commodities}"
        )));
    }
    for (i, link) in links.iter().enumerate() {
        topo.check_node(link.origin, &format!("link {i} origin"))?;
        topo.check_node(link.end, &format!("link {i} end"))?;
        let alloc_total: f64 = schedule.allocations[i].iter().map(|&(_, a)| a).sum();
        if alloc_total > schedule.rates[i] + 1e-12 {
            return Err(Error::InvalidInput(format!(
                "link {i} allocates {alloc_total} above its scheduled rate {}",
                schedule.rates[i]
            )));
        }
        for &(c, a) in &schedule.allocations[i] {
            if c >= commodities {
                return Err(Error::InvalidInput(format!(
                    "link {i} allocates to unknown commodity {c}"
                )));
            }
            if !(a.is_finite() && a >= 0.0) {
                return Err(Error::InvalidInput(format!(
                    "allocation on link {i} must be finite and >= 0, got {a}"
                )));
            }
        }
    }

    // Success probabilities are evaluated on the transmitting subset
    // only; silent links never enter the interference terms.
    let active: Vec<usize> = (0..links.len())
        .filter(|&i| schedule.powers[i] > 0.0 && schedule.rates[i] > 0.0)
        .collect();
    let sub_links: Vec<Link> = active.iter().map(|&i| links[i]).collect();
    let sub_powers: Vec<f64> = active.iter().map(|&i| schedule.powers[i]).collect();

    let mut next = queues.clone();
    let mut incoming = vec![vec![0.0f64; commodities]; nodes];
    let mut outcomes = Vec::with_capacity(links.len());
    for (pos, &i) in active.iter().enumerate() {
        let q = channel::success_probability(topo, &sub_links, &sub_powers, pos, schedule.rates[i])?;
        let success = channel::sample_transmission(q, rng)?;
        let retained = rng.random::<f64>() < drops.profile.delta(i);
        // Departure happens on success, or on failure when the packet is
        // dropped instead of retained.
        let departs = success || !retained;
        let origin = links[i].origin;
        let mut sent = Vec::new();
        for &(c, alloc) in &schedule.allocations[i] {
            let amount = next.u[origin][c].min(alloc);
            if amount <= 0.0 {
                continue;
            }
            if departs {
                next.u[origin][c] -= amount;
            }
            if success {
                incoming[links[i].end][c] += amount;
            }
            sent.push((c, amount));
        }
        outcomes.push(LinkOutcome { link: i, transmitted: true, success, retained, sent });
    }
    for i in (0..links.len()).filter(|i| !active.contains(i)) {
        outcomes.push(LinkOutcome {
            link: i,
            transmitted: false,
            success: false,
            retained: true,
            sent: Vec::new(),
        });
    }
    outcomes.sort_by_key(|o| o.link);

    for n in 0..nodes {
        for c in 0..commodities {
            next.u[n][c] += incoming[n][c] + arrivals[n][c];
        }
    }
    next.absorb_destinations();
    Ok((next, outcomes))
}

/// How the experiment picks each slot's schedule.
#[derive(Debug, Clone, PartialEq)]
pub enum SchedulingPolicy {
    /// The same plan every slot.
    Fixed(SlotSchedule),
    /// Queue-differential backpressure: each slot, weigh every link by
    /// its largest backlog differential, then pick the joint power grid
    /// point (over the positive-weight subset) and per-link rates that
    /// maximize the weighted sum of retention-adjusted drain rates.
    GoodputBackpressure { grid: PowerGrid, rates: channel::RateSet },
}

#[derive(Debug, Clone, PartialEq)]
pub struct StabilityOptions {
    pub slots: usize,
    pub drops: DropPolicy,
    pub policy: SchedulingPolicy,
    /// Total-backlog growth (per slot) below which the run is declared
    /// stable.
    pub slope_threshold: f64,
}

pub const DEFAULT_STABLE_SLOPE: f64 = 1e-3;

/// Outcome of a stability run.
#[derive(Debug, Clone, PartialEq)]
pub struct StabilityReport {
    /// Least-squares slope of total backlog over the last half of the
    /// run, in backlog units per slot.
    pub slope: f64,
    pub stable: bool,
    pub mean_total_backlog: f64,
    pub final_total_backlog: f64,
    pub per_commodity_mean: Vec<f64>,
    /// `(slot, total backlog, per-commodity backlogs)` per slot.
    pub trace: Vec<(usize, f64, Vec<f64>)>,
}

/// Drive the queues for `options.slots` slots under scaled arrivals and
/// the chosen policy, then judge stability by the linear growth of total
/// backlog over the last half of the run.
pub fn run_stability_experiment(
    topo: &NetworkTopology,
    links: &[Link],
    destinations: &[usize],
    arrivals: &ArrivalProcess,
    scale: f64,
    options: &StabilityOptions,
    seed: u64,
) -> Result<StabilityReport> {
    if options.slots < 2 {
        return Err(Error::InvalidInput("stability runs need at least 2 slots".into()));
    }
    if !(options.slope_threshold.is_finite() && options.slope_threshold > 0.0) {
        return Err(Error::InvalidInput(format!(
            "slope threshold must be finite and > 0, got {}",
            options.slope_threshold
        )));
    }
    let nodes = topo.node_count();
    if arrivals.rates.len() != nodes || arrivals.rates[0].len() != destinations.len() {
        return Err(Error::InvalidInput(format!(
            "arrival matrix must be {nodes} x {} to match the commodities",
            destinations.len()
        )));
    }
    let scaled = arrivals.scaled(scale)?;
    let mut queues = QueueMatrix::zeros(nodes, destinations.to_vec())?;
    let mut rng = labeled_rng(seed, "stability-experiment");
    let mut cache = BackpressureTables::default();
    let mut trace = Vec::with_capacity(options.slots);
    let mut total_sum = 0.0;
    let mut commodity_sum = vec![0.0f64; destinations.len()];

    for t in 0..options.slots {
        let schedule = match &options.policy {
            SchedulingPolicy::Fixed(plan) => plan.clone(),
            SchedulingPolicy::GoodputBackpressure { grid, rates } => cache.plan(
                topo,
                links,
                &queues,
                grid,
                rates,
                options.drops.profile(),
            )?,
        };
        let drawn = scaled.sample(&mut rng);
        let (next, _) = step(&queues, topo, links, &schedule, &options.drops, &drawn, &mut rng)?;
        queues = next;
        let total = queues.total_backlog();
        let per_c: Vec<f64> =
            (0..destinations.len()).map(|c| queues.commodity_backlog(c)).collect();
        total_sum += total;
        for (s, &v) in commodity_sum.iter_mut().zip(&per_c) {
            *s += v;
        }
        trace.push((t, total, per_c));
    }

    let half = options.slots / 2;
    let slope = least_squares_slope(&trace[half..]);
    Ok(StabilityReport {
        slope,
        stable: slope <= options.slope_threshold,
        mean_total_backlog: total_sum / options.slots as f64,
        final_total_backlog: queues.total_backlog(),
        per_commodity_mean: commodity_sum
            .into_iter()
            .map(|s| s / options.slots as f64)
            .collect(),
        trace,
    })
}

fn least_squares_slope(window: &[(usize, f64, Vec<f64>)]) -> f64 {
    let n = window.len() as f64;
    let mean_t = window.iter().map(|(t, _, _)| *t as f64).sum::<f64>() / n;
    let mean_y = window.iter().map(|(_, y, _)| *y).sum::<f64>() / n;
    let mut num = 0.0;
    let mut den = 0.0;
    for (t, y, _) in window {
        let dt = *t as f64 - mean_t;
        num += dt * (y - mean_y);
        den += dt * dt;
    }
    if den > 0.0 {
        num / den
    } else {
        0.0
    }
}

/// Cached per-subset argmax tables for the backpressure policy: for each
/// set of positive-weight links, every joint grid power vector with each
/// link's best retention-adjusted drain rate and the rate attaining it.
#[derive(Default)]
struct BackpressureTables {
    tables: HashMap<u64, SubsetTable>,
}

struct SubsetTable {
    members: Vec<usize>,
    /// `(powers, per-member (drain value, rate))` rows.
    rows: Vec<(Vec<f64>, Vec<(f64, f64)>)>,
}

impl BackpressureTables {
    fn plan(
        &mut self,
        topo: &NetworkTopology,
        links: &[Link],
        queues: &QueueMatrix,
        grid: &PowerGrid,
        rates: &channel::RateSet,
        profile: &DroppingProfile,
    ) -> Result<SlotSchedule> {
        if links.len() > 63 {
            return Err(Error::InvalidInput(
                "backpressure policy supports at most 63 links".into(),
            ));
        }
        if profile.len() != links.len() {
            return Err(Error::InvalidInput(format!(
                "drop profile covers {} links, expected {}",
                profile.len(),
                links.len()
            )));
        }
        // Queue-differential weights, destination commodity by largest
        // differential, smallest index on ties.
        let commodities = queues.destinations().len();
        let mut weights = vec![0.0f64; links.len()];
        let mut commodity = vec![0usize; links.len()];
        for (i, link) in links.iter().enumerate() {
            for c in 0..commodities {
                let diff = queues.backlog(link.origin, c) - queues.backlog(link.end, c);
                if diff > weights[i] {
                    weights[i] = diff;
                    commodity[i] = c;
                }
            }
        }
        let members: Vec<usize> = (0..links.len()).filter(|&i| weights[i] > 0.0).collect();
        let mut schedule = SlotSchedule::silent(links.len());
        if members.is_empty() {
            return Ok(schedule);
        }
        let key = members.iter().fold(0u64, |acc, &i| acc | (1 << i));
        if !self.tables.contains_key(&key) {
            let sub_links: Vec<Link> = members.iter().map(|&i| links[i]).collect();
            let sub_profile = DroppingProfile::new(
                members.iter().map(|&i| profile.delta(i)).collect(),
            )?;
            let mut rows = Vec::new();
            for powers in grid.points(topo, &sub_links)? {
                let mut best = Vec::with_capacity(members.len());
                for pos in 0..members.len() {
                    let mg = region::max_dropping_goodput(
                        topo,
                        &sub_links,
                        &powers,
                        pos,
                        rates,
                        &sub_profile,
                    )?;
                    best.push((mg.value, mg.rate));
                }
                rows.push((powers, best));
            }
            self.tables.insert(key, SubsetTable { members: members.clone(), rows });
        }
        let table = &self.tables[&key];
        let mut best_row: Option<&(Vec<f64>, Vec<(f64, f64)>)> = None;
        let mut best_score = f64::NEG_INFINITY;
        for row in &table.rows {
            let score: f64 = table
                .members
                .iter()
                .zip(&row.1)
                .map(|(&i, &(value, _))| weights[i] * value)
                .sum();
            if score > best_score {
                best_score = score;
                best_row = Some(row);
            }
        }
        let (powers, drains) = best_row.expect("grid is non-empty");
        for (pos, &i) in table.members.iter().enumerate() {
            let (_, rate) = drains[pos];
            schedule.powers[i] = powers[pos];
            schedule.rates[i] = rate;
            if rate > 0.0 {
                schedule.allocations[i] = vec![(commodity[i], rate)];
            }
        }
        Ok(schedule)
    }
}
