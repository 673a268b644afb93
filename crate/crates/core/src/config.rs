//! TOML experiment configuration: parsing, defaulting, and validation.
//!
//! Parsing is strict (unknown keys are rejected by the deserializer);
//! semantic validation then runs over the whole document and reports
//! every problem it finds in one pass, each with the offending key path,
//! rather than stopping at the first.

use crate::channel::{Link, NetworkTopology, RateSet};
use crate::controller::{CommodityFlow, GoodputMode, SchedulerKind, UtilitySpec};
use crate::error::{Error, Result};
use crate::region::{DroppingProfile, MIN_REGION_GRID};
use serde::Deserialize;
use std::fmt;
use std::str::FromStr;

/// The experiment a run executes; doubles as the CLI subcommand.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scenario {
    Props,
    Region,
    Game,
    Num,
    Sim,
    Figures,
}

impl Scenario {
    pub fn name(&self) -> &'static str {
        match self {
            Scenario::Props => "props",
            Scenario::Region => "region",
            Scenario::Game => "game",
            Scenario::Num => "num",
            Scenario::Sim => "sim",
            Scenario::Figures => "figures",
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "props" => Ok(Scenario::Props),
            "region" => Ok(Scenario::Region),
            "game" => Ok(Scenario::Game),
            "num" => Ok(Scenario::Num),
            "sim" => Ok(Scenario::Sim),
            "figures" => Ok(Scenario::Figures),
            other => Err(Error::InvalidInput(format!(
                "unknown scenario {other:?}; expected props, region, game, num, sim or figures"
            ))),
        }
    }
}

#[derive(Debug, Clone, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    scenario: Option<String>,
    seed: Option<u64>,
    topology: Option<RawTopology>,
    links: Option<RawLinks>,
    rates: Option<RawRates>,
    flows: Option<RawFlows>,
    dropping: Option<RawDropping>,
    #[serde(default)]
    props: RawProps,
    #[serde(default)]
    region: RawRegion,
    #[serde(default)]
    game: RawGame,
    #[serde(default)]
    num: RawNum,
    #[serde(default)]
    sim: RawSim,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTopology {
    nodes: usize,
    /// `gains[rx][tx]`, diagonal ignored.
    gains: Vec<Vec<f64>>,
    noise: Vec<f64>,
    /// Per-node `[min, max]` transmit power.
    power_bounds: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLinks {
    /// `[origin, end]` pairs.
    pairs: Vec<[usize; 2]>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRates {
    menu: Vec<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFlows {
    entries: Vec<RawFlow>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFlow {
    source: usize,
    destination: usize,
    #[serde(default = "default_one")]
    utility_weight: f64,
    #[serde(default)]
    utility_offset: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDropping {
    /// Per-link continuation probabilities.
    deltas: Vec<f64>,
}

#[derive(Debug, Clone, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawProps {
    samples: Option<u64>,
    tolerance: Option<f64>,
    sweep_points: Option<usize>,
    base_powers: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawRegion {
    grid: Option<String>,
    points_per_axis: Option<usize>,
    total_power: Option<f64>,
}

#[derive(Debug, Clone, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawGame {
    tolerance: Option<f64>,
    max_rounds: Option<usize>,
    floor_grid: Option<usize>,
    weights: Option<Vec<f64>>,
    link_rates: Option<Vec<f64>>,
    oracle: Option<bool>,
    oracle_grid: Option<usize>,
    over_the_air: Option<bool>,
    symbols: Option<usize>,
}

#[derive(Debug, Clone, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawNum {
    stepsize: Option<f64>,
    iterations: Option<usize>,
    rate_cap: Option<f64>,
    scheduler: Option<String>,
    goodput: Option<String>,
    node_rates: Option<Vec<f64>>,
    oracle_grid: Option<usize>,
}

#[derive(Debug, Clone, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawSim {
    slots: Option<usize>,
    policy: Option<String>,
    scale: Option<f64>,
    arrival_rates: Option<Vec<Vec<f64>>>,
    arrival_distribution: Option<String>,
    points_per_axis: Option<usize>,
    slope_threshold: Option<f64>,
    fixed_powers: Option<Vec<f64>>,
    fixed_rates: Option<Vec<f64>>,
    fixed_commodities: Option<Vec<usize>>,
}

fn default_one() -> f64 {
    1.0
}

/// Validated experiment configuration with defaults applied.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub scenario: Option<Scenario>,
    pub seed: Option<u64>,
    pub topology: Option<NetworkTopology>,
    pub links: Option<Vec<Link>>,
    pub rates: Option<RateSet>,
    pub flows: Option<Vec<CommodityFlow>>,
    pub dropping: Option<DroppingProfile>,
    pub props: PropsConfig,
    pub region: RegionConfig,
    pub game: GameConfig,
    pub num: NumConfig,
    pub sim: SimConfig,
}

#[derive(Debug, Clone)]
pub struct PropsConfig {
    pub samples: u64,
    pub tolerance: f64,
    pub sweep_points: usize,
    pub base_powers: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GridKind {
    Box,
    Simplex,
}

#[derive(Debug, Clone)]
pub struct RegionConfig {
    pub grid: GridKind,
    pub points_per_axis: usize,
    pub total_power: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct GameConfig {
    pub tolerance: f64,
    pub max_rounds: usize,
    pub floor_grid: usize,
    pub weights: Option<Vec<f64>>,
    pub link_rates: Option<Vec<f64>>,
    pub oracle: bool,
    pub oracle_grid: usize,
    pub over_the_air: bool,
    pub symbols: usize,
}

#[derive(Debug, Clone)]
pub struct NumConfig {
    pub stepsize: f64,
    pub iterations: usize,
    pub rate_cap: f64,
    pub scheduler: SchedulerKind,
    pub goodput: GoodputMode,
    pub node_rates: Option<Vec<f64>>,
    pub oracle_grid: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SimPolicyKind {
    Backpressure,
    Fixed,
}

#[derive(Debug, Clone)]
pub struct SimConfig {
    pub slots: usize,
    pub policy: SimPolicyKind,
    pub scale: f64,
    pub arrival_rates: Option<Vec<Vec<f64>>>,
    pub poisson_arrivals: bool,
    pub points_per_axis: usize,
    pub slope_threshold: f64,
    pub fixed_powers: Option<Vec<f64>>,
    pub fixed_rates: Option<Vec<f64>>,
    pub fixed_commodities: Option<Vec<usize>>,
}

/// Parse and validate a TOML configuration document. Syntax problems and
/// unknown keys surface as a single parse error; semantic problems are
/// collected across the whole document and reported together.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let raw: RawConfig = toml::from_str(text)
        .map_err(|e| Error::ConfigValidation(vec![format!("config parse: {e}")]))?;
    let mut errors = Vec::new();

    let scenario = match &raw.scenario {
        None => None,
        Some(s) => match Scenario::from_str(s) {
            Ok(sc) => Some(sc),
            Err(e) => {
                errors.push(format!("scenario: {e}"));
                None
            }
        },
    };

    let topology = raw.topology.as_ref().and_then(|t| validate_topology(t, &mut errors));
    let links = raw
        .links
        .as_ref()
        .and_then(|l| validate_links(l, raw.topology.as_ref().map(|t| t.nodes), &mut errors));
    let rates = raw.rates.as_ref().and_then(|r| validate_rates(r, &mut errors));
    let flows = raw.flows.as_ref().and_then(|f| {
        validate_flows(f, raw.topology.as_ref().map(|t| t.nodes), &mut errors)
    });
    let dropping = raw.dropping.as_ref().and_then(|d| {
        validate_dropping(d, links.as_ref().map(|l| l.len()), &mut errors)
    });

    let props = validate_props(&raw.props, links.as_ref(), &mut errors);
    let region = validate_region(&raw.region, links.as_ref(), &mut errors);
    let game = validate_game(&raw.game, links.as_ref(), &mut errors);
    let num = validate_num(&raw.num, raw.topology.as_ref().map(|t| t.nodes), &mut errors);
    let sim = validate_sim(
        &raw.sim,
        raw.topology.as_ref().map(|t| t.nodes),
        links.as_ref().map(|l| l.len()),
        flows.as_deref(),
        &mut errors,
    );

    if !errors.is_empty() {
        return Err(Error::ConfigValidation(errors));
    }
    Ok(ExperimentConfig {
        scenario,
        seed: raw.seed,
        topology,
        links,
        rates,
        flows,
        dropping,
        props,
        region,
        game,
        num,
        sim,
    })
}

fn validate_topology(t: &RawTopology, errors: &mut Vec<String>) -> Option<NetworkTopology> {
    let mut ok = true;
    if t.nodes == 0 {
        errors.push("topology.nodes: must be >= 1".into());
        ok = false;
    }
    if t.gains.len() != t.nodes {
        errors.push(format!(
            "topology.gains: {} rows for {} nodes",
            t.gains.len(),
            t.nodes
        ));
        ok = false;
    }
    for (rx, row) in t.gains.iter().enumerate() {
        if row.len() != t.nodes {
            errors.push(format!(
                "topology.gains[{rx}]: {} columns for {} nodes",
                row.len(),
                t.nodes
            ));
            ok = false;
        }
        for (tx, &g) in row.iter().enumerate() {
            if !(g.is_finite() && g >= 0.0) {
                errors.push(format!(
                    "topology.gains[{rx}][{tx}]: must be finite and >= 0, got {g}"
                ));
                ok = false;
            }
        }
    }
    if t.noise.len() != t.nodes {
        errors.push(format!(
            "topology.noise: {} entries for {} nodes",
            t.noise.len(),
            t.nodes
        ));
        ok = false;
    }
    for (n, &s) in t.noise.iter().enumerate() {
        if !(s.is_finite() && s >= 0.0) {
            errors.push(format!("topology.noise[{n}]: must be finite and >= 0, got {s}"));
            ok = false;
        }
    }
    if t.power_bounds.len() != t.nodes {
        errors.push(format!(
            "topology.power_bounds: {} entries for {} nodes",
            t.power_bounds.len(),
            t.nodes
        ));
        ok = false;
    }
    for (n, &[lo, hi]) in t.power_bounds.iter().enumerate() {
        if !(lo.is_finite() && hi.is_finite()) {
            errors.push(format!("topology.power_bounds[{n}]: bounds must be finite"));
            ok = false;
        } else if lo <= 0.0 {
            // A zero minimum breaks the game's least-element start and
            // the price normalization.
            errors.push(format!(
                "topology.power_bounds[{n}]: minimum power must be > 0, got {lo}"
            ));
            ok = false;
        } else if hi < lo {
            errors.push(format!(
                "topology.power_bounds[{n}]: maximum {hi} below minimum {lo}"
            ));
            ok = false;
        }
    }
    if !ok {
        return None;
    }
    match NetworkTopology::new(
        t.gains.clone(),
        t.noise.clone(),
        t.power_bounds.iter().map(|&[a, b]| (a, b)).collect(),
    ) {
        Ok(topo) => Some(topo),
        Err(e) => {
            errors.push(format!("topology: {e}"));
            None
        }
    }
}

fn validate_links(
    l: &RawLinks,
    nodes: Option<usize>,
    errors: &mut Vec<String>,
) -> Option<Vec<Link>> {
    if l.pairs.is_empty() {
        errors.push("links.pairs: must not be empty".into());
        return None;
    }
    let mut out = Vec::with_capacity(l.pairs.len());
    let mut ok = true;
    for (i, &[origin, end]) in l.pairs.iter().enumerate() {
        if let Some(n) = nodes {
            if origin >= n || end >= n {
                errors.push(format!(
                    "links.pairs[{i}]: [{origin}, {end}] out of range for {n} nodes"
                ));
                ok = false;
                continue;
            }
        }
        match Link::new(origin, end) {
            Ok(link) => {
                if out.contains(&link) {
                    errors.push(format!("links.pairs[{i}]: duplicate link {origin} -> {end}"));
                    ok = false;
                } else {
                    out.push(link);
                }
            }
            Err(e) => {
                errors.push(format!("links.pairs[{i}]: {e}"));
                ok = false;
            }
        }
    }
    ok.then_some(out)
}

fn validate_rates(r: &RawRates, errors: &mut Vec<String>) -> Option<RateSet> {
    match RateSet::new(r.menu.clone()) {
        Ok(rates) => Some(rates),
        Err(e) => {
            errors.push(format!("rates.menu: {e}"));
            None
        }
    }
}

fn validate_flows(
    f: &RawFlows,
    nodes: Option<usize>,
    errors: &mut Vec<String>,
) -> Option<Vec<CommodityFlow>> {
    if f.entries.is_empty() {
        errors.push("flows.entries: must not be empty".into());
        return None;
    }
    let mut out: Vec<CommodityFlow> = Vec::with_capacity(f.entries.len());
    let mut ok = true;
    for (i, e) in f.entries.iter().enumerate() {
        if let Some(n) = nodes {
            if e.source >= n || e.destination >= n {
                errors.push(format!(
                    "flows.entries[{i}]: {} -> {} out of range for {n} nodes",
                    e.source, e.destination
                ));
                ok = false;
                continue;
            }
        }
        let utility = match UtilitySpec::weighted_log(e.utility_weight, e.utility_offset) {
            Ok(u) => u,
            Err(err) => {
                errors.push(format!("flows.entries[{i}]: {err}"));
                ok = false;
                continue;
            }
        };
        match CommodityFlow::new(e.source, e.destination, utility) {
            Ok(flow) => {
                if out
                    .iter()
                    .any(|x| x.source == flow.source && x.destination == flow.destination)
                {
                    errors.push(format!(
                        "flows.entries[{i}]: duplicate flow {} -> {}",
                        e.source, e.destination
                    ));
                    ok = false;
                } else {
                    out.push(flow);
                }
            }
            Err(err) => {
                errors.push(format!("flows.entries[{i}]: {err}"));
                ok = false;
            }
        }
    }
    ok.then_some(out)
}

fn validate_dropping(
    d: &RawDropping,
    links: Option<usize>,
    errors: &mut Vec<String>,
) -> Option<DroppingProfile> {
    if let Some(l) = links {
        if d.deltas.len() != l {
            errors.push(format!(
                "dropping.deltas: {} entries for {l} links",
                d.deltas.len()
            ));
            return None;
        }
    }
    match DroppingProfile::new(d.deltas.clone()) {
        Ok(p) => Some(p),
        Err(e) => {
            errors.push(format!("dropping.deltas: {e}"));
            None
        }
    }
}

fn validate_props(
    p: &RawProps,
    links: Option<&Vec<Link>>,
    errors: &mut Vec<String>,
) -> PropsConfig {
    let samples = p.samples.unwrap_or(1000);
    if samples == 0 {
        errors.push("props.samples: must be >= 1".into());
    }
    let tolerance = p.tolerance.unwrap_or(1e-9);
    if !(tolerance.is_finite() && tolerance > 0.0) {
        errors.push(format!("props.tolerance: must be finite and > 0, got {tolerance}"));
    }
    let sweep_points = p.sweep_points.unwrap_or(60);
    if sweep_points < 10 {
        errors.push(format!("props.sweep_points: must be >= 10, got {sweep_points}"));
    }
    if let (Some(powers), Some(links)) = (&p.base_powers, links) {
        if powers.len() != links.len() {
            errors.push(format!(
                "props.base_powers: {} entries for {} links",
                powers.len(),
                links.len()
            ));
        }
        for (i, &v) in powers.iter().enumerate() {
            if !(v.is_finite() && v > 0.0) {
                errors.push(format!(
                    "props.base_powers[{i}]: must be finite and > 0, got {v}"
                ));
            }
        }
    }
    PropsConfig { samples, tolerance, sweep_points, base_powers: p.base_powers.clone() }
}

fn validate_region(
    r: &RawRegion,
    links: Option<&Vec<Link>>,
    errors: &mut Vec<String>,
) -> RegionConfig {
    let grid = match r.grid.as_deref() {
        None | Some("box") => GridKind::Box,
        Some("simplex") => GridKind::Simplex,
        Some(other) => {
            errors.push(format!("region.grid: unknown grid {other:?}; expected box or simplex"));
            GridKind::Box
        }
    };
    let points_per_axis = r.points_per_axis.unwrap_or(50);
    if points_per_axis < MIN_REGION_GRID {
        errors.push(format!(
            "region.points_per_axis: must be >= {MIN_REGION_GRID}, got {points_per_axis}"
        ));
    }
    if grid == GridKind::Simplex {
        match r.total_power {
            None => errors.push("region.total_power: required for the simplex grid".into()),
            Some(t) if !(t.is_finite() && t > 0.0) => {
                errors.push(format!("region.total_power: must be finite and > 0, got {t}"));
            }
            _ => {}
        }
        if let Some(links) = links {
            if links.len() != 2 {
                errors.push(format!(
                    "region.grid: simplex grids need exactly 2 links, got {}",
                    links.len()
                ));
            }
        }
    }
    RegionConfig { grid, points_per_axis, total_power: r.total_power }
}

fn validate_game(g: &RawGame, links: Option<&Vec<Link>>, errors: &mut Vec<String>) -> GameConfig {
    let tolerance = g.tolerance.unwrap_or(1e-7);
    if !(tolerance.is_finite() && tolerance > 0.0) {
        errors.push(format!("game.tolerance: must be finite and > 0, got {tolerance}"));
    }
    let max_rounds = g.max_rounds.unwrap_or(1000);
    if max_rounds == 0 {
        errors.push("game.max_rounds: must be >= 1".into());
    }
    let floor_grid = g.floor_grid.unwrap_or(8);
    if floor_grid < 2 {
        errors.push(format!("game.floor_grid: must be >= 2, got {floor_grid}"));
    }
    let oracle_grid = g.oracle_grid.unwrap_or(41);
    if oracle_grid < 2 {
        errors.push(format!("game.oracle_grid: must be >= 2, got {oracle_grid}"));
    }
    let symbols = g.symbols.unwrap_or(10_000);
    if symbols == 0 {
        errors.push("game.symbols: must be >= 1".into());
    }
    for (name, list) in [("weights", &g.weights), ("link_rates", &g.link_rates)] {
        if let Some(values) = list {
            if let Some(links) = links {
                if values.len() != links.len() {
                    errors.push(format!(
                        "game.{name}: {} entries for {} links",
                        values.len(),
                        links.len()
                    ));
                }
            }
            for (i, &v) in values.iter().enumerate() {
                if !(v.is_finite() && v >= 0.0) {
                    errors.push(format!("game.{name}[{i}]: must be finite and >= 0, got {v}"));
                }
            }
        }
    }
    GameConfig {
        tolerance,
        max_rounds,
        floor_grid,
        weights: g.weights.clone(),
        link_rates: g.link_rates.clone(),
        oracle: g.oracle.unwrap_or(true),
        oracle_grid,
        over_the_air: g.over_the_air.unwrap_or(false),
        symbols,
    }
}

fn validate_num(n: &RawNum, nodes: Option<usize>, errors: &mut Vec<String>) -> NumConfig {
    let stepsize = n.stepsize.unwrap_or(0.05);
    if !(stepsize.is_finite() && stepsize > 0.0) {
        errors.push(format!("num.stepsize: must be finite and > 0, got {stepsize}"));
    }
    let iterations = n.iterations.unwrap_or(1000);
    if iterations == 0 {
        errors.push("num.iterations: must be >= 1".into());
    }
    let rate_cap = n.rate_cap.unwrap_or(10.0);
    if !(rate_cap.is_finite() && rate_cap > 0.0) {
        errors.push(format!("num.rate_cap: must be finite and > 0, got {rate_cap}"));
    }
    let scheduler = match n.scheduler.as_deref() {
        None | Some("game") => SchedulerKind::Game,
        Some("oracle") => SchedulerKind::Oracle,
        Some(other) => {
            errors.push(format!(
                "num.scheduler: unknown scheduler {other:?}; expected game or oracle"
            ));
            SchedulerKind::Game
        }
    };
    let goodput = match n.goodput.as_deref() {
        None | Some("expected") => GoodputMode::Expected,
        Some("realized") => GoodputMode::Realized,
        Some(other) => {
            errors.push(format!(
                "num.goodput: unknown mode {other:?}; expected expected or realized"
            ));
            GoodputMode::Expected
        }
    };
    if let (Some(rates), Some(nodes)) = (&n.node_rates, nodes) {
        if rates.len() != nodes {
            errors.push(format!(
                "num.node_rates: {} entries for {nodes} nodes",
                rates.len()
            ));
        }
        for (i, &v) in rates.iter().enumerate() {
            if !(v.is_finite() && v >= 0.0) {
                errors.push(format!("num.node_rates[{i}]: must be finite and >= 0, got {v}"));
            }
        }
    }
    let oracle_grid = n.oracle_grid.unwrap_or(12);
    if oracle_grid < 2 {
        errors.push(format!("num.oracle_grid: must be >= 2, got {oracle_grid}"));
    }
    NumConfig {
        stepsize,
        iterations,
        rate_cap,
        scheduler,
        goodput,
        node_rates: n.node_rates.clone(),
        oracle_grid,
    }
}

fn validate_sim(
    s: &RawSim,
    nodes: Option<usize>,
    links: Option<usize>,
    flows: Option<&[CommodityFlow]>,
    errors: &mut Vec<String>,
) -> SimConfig {
    let slots = s.slots.unwrap_or(50_000);
    if slots < 2 {
        errors.push(format!("sim.slots: must be >= 2, got {slots}"));
    }
    let policy = match s.policy.as_deref() {
        None | Some("backpressure") => SimPolicyKind::Backpressure,
        Some("fixed") => SimPolicyKind::Fixed,
        Some(other) => {
            errors.push(format!(
                "sim.policy: unknown policy {other:?}; expected backpressure or fixed"
            ));
            SimPolicyKind::Backpressure
        }
    };
    let scale = s.scale.unwrap_or(1.0);
    if !(scale.is_finite() && scale >= 0.0) {
        errors.push(format!("sim.scale: must be finite and >= 0, got {scale}"));
    }
    let poisson_arrivals = match s.arrival_distribution.as_deref() {
        None | Some("poisson") => true,
        Some("deterministic") => false,
        Some(other) => {
            errors.push(format!(
                "sim.arrival_distribution: unknown distribution {other:?}; \
                 expected poisson or deterministic"
            ));
            true
        }
    };
    if let Some(rates) = &s.arrival_rates {
        if let Some(n) = nodes {
            if rates.len() != n {
                errors.push(format!(
                    "sim.arrival_rates: {} rows for {n} nodes",
                    rates.len()
                ));
            }
        }
        let commodities = flows.map(|f| {
            let mut d: Vec<usize> = f.iter().map(|x| x.destination).collect();
            d.sort_unstable();
            d.dedup();
            d.len()
        });
        for (i, row) in rates.iter().enumerate() {
            if let Some(c) = commodities {
                if row.len() != c {
                    errors.push(format!(
                        "sim.arrival_rates[{i}]: {} columns for {c} commodities",
                        row.len()
                    ));
                }
            }
            for (j, &v) in row.iter().enumerate() {
                if !(v.is_finite() && v >= 0.0) {
                    errors.push(format!(
                        "sim.arrival_rates[{i}][{j}]: must be finite and >= 0, got {v}"
                    ));
                }
            }
        }
    }
    let points_per_axis = s.points_per_axis.unwrap_or(15);
    if points_per_axis < 2 {
        errors.push(format!("sim.points_per_axis: must be >= 2, got {points_per_axis}"));
    }
    let slope_threshold = s.slope_threshold.unwrap_or(1e-3);
    if !(slope_threshold.is_finite() && slope_threshold > 0.0) {
        errors.push(format!(
            "sim.slope_threshold: must be finite and > 0, got {slope_threshold}"
        ));
    }
    if policy == SimPolicyKind::Fixed {
        for (name, len) in [
            ("fixed_powers", s.fixed_powers.as_ref().map(|v| v.len())),
            ("fixed_rates", s.fixed_rates.as_ref().map(|v| v.len())),
            ("fixed_commodities", s.fixed_commodities.as_ref().map(|v| v.len())),
        ] {
            match (len, links) {
                (None, _) => errors.push(format!("sim.{name}: required for the fixed policy")),
                (Some(got), Some(l)) if got != l => {
                    errors.push(format!("sim.{name}: {got} entries for {l} links"));
                }
                _ => {}
            }
        }
    }
    SimConfig {
        slots,
        policy,
        scale,
        arrival_rates: s.arrival_rates.clone(),
        poisson_arrivals,
        points_per_axis,
        slope_threshold,
        fixed_powers: s.fixed_powers.clone(),
        fixed_rates: s.fixed_rates.clone(),
        fixed_commodities: s.fixed_commodities.clone(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
        [topology]
        nodes = 2
        gains = [[0.0, 0.0], [1.0, 0.0]]
        noise = [1.0, 1.0]
        power_bounds = [[0.1, 2.0], [0.1, 2.0]]
    "#;

    #[test]
    fn minimal_config_parses_with_defaults() {
        let cfg = parse_config(MINIMAL).unwrap();
        assert!(cfg.topology.is_some());
        assert_eq!(cfg.props.samples, 1000);
        assert_eq!(cfg.region.points_per_axis, 50);
        assert_eq!(cfg.game.max_rounds, 1000);
        assert!((cfg.num.stepsize - 0.05).abs() < 1e-15);
        assert_eq!(cfg.sim.slots, 50_000);
        assert!(cfg.seed.is_none());
        assert!(cfg.scenario.is_none());
    }

    #[test]
    fn zero_minimum_power_is_rejected_by_name() {
        let text = r#"
            [topology]
            nodes = 2
            gains = [[0.0, 0.0], [1.0, 0.0]]
            noise = [1.0, 1.0]
            power_bounds = [[0.0, 2.0], [0.1, 2.0]]
        "#;
        let err = parse_config(text).unwrap_err();
        match err {
            Error::ConfigValidation(errors) => {
                assert!(errors.iter().any(|e| e.contains("power_bounds[0]")
                    && e.contains("minimum power must be > 0")));
            }
            other => panic!("expected a validation error, got {other:?}"),
        }
    }

    #[test]
    fn dimension_mismatches_are_reported_together() {
        let text = r#"
            seed = 3
            [topology]
            nodes = 2
            gains = [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 0.0]]
            noise = [1.0]
            power_bounds = [[0.1, 2.0], [0.1, 2.0]]
            [links]
            pairs = [[0, 5]]
        "#;
        let err = parse_config(text).unwrap_err();
        match err {
            Error::ConfigValidation(errors) => {
                assert!(errors.iter().any(|e| e.contains("topology.gains")));
                assert!(errors.iter().any(|e| e.contains("topology.noise")));
                assert!(errors.iter().any(|e| e.contains("links.pairs[0]")));
                assert!(errors.len() >= 3, "expected every problem listed, got {errors:?}");
            }
            other => panic!("expected a validation error, got {other:?}"),
        }
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = parse_config("banana = 1").unwrap_err();
        match err {
            Error::ConfigValidation(errors) => {
                assert!(errors[0].contains("banana"), "got {errors:?}");
            }
            other => panic!("expected a validation error, got {other:?}"),
        }
        let err = parse_config("[game]\nbanana = 1").unwrap_err();
        assert!(matches!(err, Error::ConfigValidation(_)));
    }

    #[test]
    fn full_document_round_trips() {
        let text = r#"
            scenario = "sim"
            seed = 11
            [topology]
            nodes = 4
            gains = [
                [0.0, 0.0, 0.0, 0.0],
                [0.0, 0.0, 0.0, 0.0],
                [1.0, 0.2, 0.0, 0.0],
                [0.2, 1.0, 0.0, 0.0],
            ]
            noise = [0.5, 0.5, 0.5, 0.5]
            power_bounds = [[0.1, 5.0], [0.1, 5.0], [0.1, 5.0], [0.1, 5.0]]
            [links]
            pairs = [[0, 2], [1, 3]]
            [rates]
            menu = [0.4, 0.8, 1.2]
            [flows]
            entries = [
                { source = 0, destination = 2 },
                { source = 1, destination = 3, utility_weight = 2.0, utility_offset = 0.1 },
            ]
            [dropping]
            deltas = [1.0, 0.5]
            [sim]
            slots = 1000
            policy = "backpressure"
            arrival_rates = [[0.2, 0.0], [0.0, 0.2], [0.0, 0.0], [0.0, 0.0]]
            arrival_distribution = "deterministic"
        "#;
        let cfg = parse_config(text).unwrap();
        assert_eq!(cfg.scenario, Some(Scenario::Sim));
        assert_eq!(cfg.seed, Some(11));
        assert_eq!(cfg.links.as_ref().unwrap().len(), 2);
        assert_eq!(cfg.flows.as_ref().unwrap()[1].utility.weight(), 2.0);
        assert_eq!(cfg.dropping.as_ref().unwrap().delta(1), 0.5);
        assert!(!cfg.sim.poisson_arrivals);
        assert_eq!(cfg.sim.slots, 1000);
    }

    #[test]
    fn simplex_region_requires_its_parameters() {
        let text = r#"
            [topology]
            nodes = 3
            gains = [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.5, 0.0, 0.0]]
            noise = [1.0, 1.0, 1.0]
            power_bounds = [[0.1, 2.0], [0.1, 2.0], [0.1, 2.0]]
            [links]
            pairs = [[0, 1], [0, 2]]
            [region]
            grid = "simplex"
        "#;
        let err = parse_config(text).unwrap_err();
        match err {
            Error::ConfigValidation(errors) => {
                assert!(errors.iter().any(|e| e.contains("region.total_power")));
            }
            other => panic!("expected a validation error, got {other:?}"),
        }
    }

    #[test]
    fn fixed_sim_policy_requires_its_schedule() {
        let text = r#"
            [topology]
            nodes = 2
            gains = [[0.0, 0.0], [1.0, 0.0]]
            noise = [1.0, 1.0]
            power_bounds = [[0.1, 2.0], [0.1, 2.0]]
            [links]
            pairs = [[0, 1]]
            [sim]
            policy = "fixed"
        "#;
        let err = parse_config(text).unwrap_err();
        match err {
            Error::ConfigValidation(errors) => {
                for field in ["fixed_powers", "fixed_rates", "fixed_commodities"] {
                    assert!(
                        errors.iter().any(|e| e.contains(field)),
                        "missing complaint about {field}: {errors:?}"
                    );
                }
            }
            other => panic!("expected a validation error, got {other:?}"),
        }
    }
}
