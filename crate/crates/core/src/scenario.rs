//! Experiment orchestration: runs a scenario from a validated config and
//! writes CSV artifacts, each with a manifest sibling.
//!
//! All output is deterministic in (config, seed): no timestamps, seeded
//! generators per module label, and default float formatting. Plots are
//! left to external tools; every file is plain CSV with a header row.

use crate::channel::{self, Link, NetworkTopology, RateSet};
use crate::config::{ExperimentConfig, GridKind, Scenario, SimPolicyKind};
use crate::controller::{self, CommodityFlow, NumOptions, UtilitySpec};
use crate::error::{Error, Result};
use crate::game::{self, GameOptions, SchedulingInstance};
use crate::properties;
use crate::queue::{
    self, ArrivalDistribution, ArrivalProcess, DropPolicy, SchedulingPolicy, SlotSchedule,
    StabilityOptions,
};
use crate::region::{self, DroppingProfile, GoodputRegion, PowerGrid};
use crate::seed::labeled_rng;
use sha2::{Digest, Sha256};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

/// What a scenario produced.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub files: Vec<PathBuf>,
    /// False when an iterative solver hit its round limit; the files are
    /// still written, and the caller maps this to the non-convergence
    /// exit status.
    pub converged: bool,
}

struct Emitter<'a> {
    out_dir: &'a Path,
    scenario: Scenario,
    seed: u64,
    config_sha256: String,
    files: Vec<PathBuf>,
}

impl<'a> Emitter<'a> {
    fn new(out_dir: &'a Path, scenario: Scenario, seed: u64, config_text: &str) -> Result<Self> {
        fs::create_dir_all(out_dir)
            .map_err(|e| Error::Io(format!("creating {}: {e}", out_dir.display())))?;
        let mut hasher = Sha256::new();
        hasher.update(config_text.as_bytes());
        let config_sha256 = hasher
            .finalize()
            .iter()
            .fold(String::with_capacity(64), |mut acc, b| {
                let _ = write!(acc, "{b:02x}");
                acc
            });
        Ok(Emitter { out_dir, scenario, seed, config_sha256, files: Vec::new() })
    }

    /// Write one CSV (header + rows) and its manifest sibling.
    fn csv(&mut self, name: &str, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
        let mut text = String::new();
        text.push_str(&header.join(","));
        text.push('\n');
        for row in rows {
            debug_assert_eq!(row.len(), header.len(), "ragged row in {name}");
            text.push_str(&row.join(","));
            text.push('\n');
        }
        let path = self.out_dir.join(name);
        fs::write(&path, text).map_err(|e| Error::Io(format!("writing {name}: {e}")))?;

        let manifest = format!(
            "file = {name:?}\nscenario = {:?}\nseed = {}\nconfig_sha256 = {:?}\n\
             package = {:?}\nversion = {:?}\n",
            self.scenario.name(),
            self.seed,
            self.config_sha256,
            env!("CARGO_PKG_NAME"),
            env!("CARGO_PKG_VERSION"),
        );
        let manifest_name = format!("{}.manifest.toml", name.trim_end_matches(".csv"));
        let manifest_path = self.out_dir.join(&manifest_name);
        fs::write(&manifest_path, manifest)
            .map_err(|e| Error::Io(format!("writing {manifest_name}: {e}")))?;
        self.files.push(path);
        self.files.push(manifest_path);
        Ok(())
    }
}

fn fmt(v: f64) -> String {
    format!("{v}")
}

fn linspace(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    (0..points)
        .map(|i| lo + (hi - lo) * i as f64 / (points - 1) as f64)
        .collect()
}

fn require<T: Clone>(value: &Option<T>, what: &str, missing: &mut Vec<String>) -> Option<T> {
    if value.is_none() {
        missing.push(format!("{what} is required for this scenario"));
    }
    value.clone()
}

/// Execute a scenario and write its artifacts under `out_dir`.
pub fn run_scenario(
    scenario: Scenario,
    config: &ExperimentConfig,
    config_text: &str,
    seed: u64,
    out_dir: &Path,
) -> Result<RunOutcome> {
    if let Some(declared) = config.scenario {
        if declared != scenario {
            return Err(Error::ConfigValidation(vec![format!(
                "scenario: config declares {declared:?} but the {scenario} subcommand was invoked"
            )]));
        }
    }
    let mut emitter = Emitter::new(out_dir, scenario, seed, config_text)?;
    let converged = match scenario {
        Scenario::Props => run_props(config, seed, &mut emitter)?,
        Scenario::Region => run_region(config, &mut emitter)?,
        Scenario::Game => run_game(config, seed, &mut emitter)?,
        Scenario::Num => run_num(config, seed, &mut emitter)?,
        Scenario::Sim => run_sim(config, seed, &mut emitter)?,
        Scenario::Figures => run_figures(config, seed, &mut emitter)?,
    };
    Ok(RunOutcome { files: emitter.files, converged })
}

fn run_props(config: &ExperimentConfig, seed: u64, emitter: &mut Emitter) -> Result<bool> {
    let mut missing = Vec::new();
    let topo = require(&config.topology, "[topology]", &mut missing);
    let links = require(&config.links, "[links]", &mut missing);
    let rates = require(&config.rates, "[rates]", &mut missing);
    if !missing.is_empty() {
        return Err(Error::ConfigValidation(missing));
    }
    let (topo, links, rates) = (topo.unwrap(), links.unwrap(), rates.unwrap());

    let mut reports = properties::check_success_properties(
        &topo,
        &links,
        config.props.samples,
        seed,
        config.props.tolerance,
    )?;
    let base_powers: Vec<f64> = match &config.props.base_powers {
        Some(p) => p.clone(),
        None => links
            .iter()
            .map(|l| {
                let (lo, hi) = topo.bounds(l.origin);
                0.5 * (lo + hi)
            })
            .collect(),
    };
    reports.extend(properties::check_goodput_properties(
        &topo,
        &links,
        &base_powers,
        &rates,
        config.props.sweep_points,
        config.props.tolerance,
    )?);

    let rows: Vec<Vec<String>> = reports
        .iter()
        .map(|r| {
            vec![
                r.property_id.clone(),
                r.samples.to_string(),
                r.violations.to_string(),
                fmt(r.worst_margin),
            ]
        })
        .collect();
    emitter.csv(
        "props_report.csv",
        &["property_id", "samples", "violations", "worst_margin"],
        &rows,
    )?;
    Ok(reports.iter().all(|r| r.violations == 0))
}

fn emit_region(
    emitter: &mut Emitter,
    stem: &str,
    region: &GoodputRegion,
    links: usize,
) -> Result<()> {
    let headers: Vec<String> = (1..=links).map(|i| format!("g{i}")).collect();
    let header_refs: Vec<&str> = headers.iter().map(|s| s.as_str()).collect();
    let rows: Vec<Vec<String>> = region
        .raw_points
        .iter()
        .map(|p| p.g.iter().map(|&v| fmt(v)).collect())
        .collect();
    emitter.csv(&format!("{stem}_points.csv"), &header_refs, &rows)?;
    if let Some(hull) = &region.hull {
        let rows: Vec<Vec<String>> =
            hull.iter().map(|&[x, y]| vec![fmt(x), fmt(y)]).collect();
        emitter.csv(&format!("{stem}_hull.csv"), &["g1", "g2"], &rows)?;
    }
    Ok(())
}

fn run_region(config: &ExperimentConfig, emitter: &mut Emitter) -> Result<bool> {
    let mut missing = Vec::new();
    let topo = require(&config.topology, "[topology]", &mut missing);
    let links = require(&config.links, "[links]", &mut missing);
    let rates = require(&config.rates, "[rates]", &mut missing);
    if !missing.is_empty() {
        return Err(Error::ConfigValidation(missing));
    }
    let (topo, links, rates) = (topo.unwrap(), links.unwrap(), rates.unwrap());
    let profile = match &config.dropping {
        Some(p) => p.clone(),
        None => DroppingProfile::uniform(1.0, links.len())?,
    };
    let grid = match config.region.grid {
        GridKind::Box => PowerGrid::Box { points_per_axis: config.region.points_per_axis },
        GridKind::Simplex => PowerGrid::Simplex {
            total: config.region.total_power.expect("validated"),
            points_per_axis: config.region.points_per_axis,
        },
    };
    let region = region::enumerate_region(&topo, &links, &rates, &grid, &profile)?;
    emit_region(emitter, "region", &region, links.len())?;
    Ok(true)
}

fn run_game(config: &ExperimentConfig, seed: u64, emitter: &mut Emitter) -> Result<bool> {
    let mut missing = Vec::new();
    let topo = require(&config.topology, "[topology]", &mut missing);
    let links = require(&config.links, "[links]", &mut missing);
    let link_rates = require(&config.game.link_rates, "game.link_rates", &mut missing);
    if !missing.is_empty() {
        return Err(Error::ConfigValidation(missing));
    }
    let (topo, links, link_rates) = (topo.unwrap(), links.unwrap(), link_rates.unwrap());
    let weights = config.game.weights.clone().unwrap_or_else(|| vec![1.0; links.len()]);
    let inst = SchedulingInstance::new(links.clone(), weights, link_rates)?;
    let opts = GameOptions {
        tolerance: config.game.tolerance,
        max_rounds: config.game.max_rounds,
        floor_grid: config.game.floor_grid,
    };
    let run = game::run_table1(&topo, &inst, &opts)?;

    let players = inst.len();
    let mut header: Vec<String> = vec!["iteration".into()];
    header.extend((1..=players).map(|n| format!("p_{n}")));
    header.extend((1..=players).map(|n| format!("c_{n}")));
    header.push("objective".into());
    let header_refs: Vec<&str> = header.iter().map(|s| s.as_str()).collect();
    let rows: Vec<Vec<String>> = run
        .trace
        .iter()
        .map(|rec| {
            let mut row = vec![rec.round.to_string()];
            row.extend(rec.powers.iter().map(|&p| fmt(p)));
            row.extend(rec.sum_prices.iter().map(|&c| fmt(c)));
            row.push(fmt(rec.objective));
            row
        })
        .collect();
    emitter.csv("game_trace.csv", &header_refs, &rows)?;

    let kkt = game::kkt_residual(&topo, &inst, &run.state.powers)?;
    let (oracle_objective, gap) = if config.game.oracle {
        let bf = game::brute_force_schedule(&topo, &inst, config.game.oracle_grid)?;
        let refined = game::refine_to_kkt(&topo, &inst, &bf.powers, 20)?;
        let oracle = game::objective(&topo, &inst, &refined)?.max(bf.objective);
        (fmt(oracle), fmt(oracle - run.objective))
    } else {
        (String::new(), String::new())
    };
    emitter.csv(
        "game_summary.csv",
        &[
            "ne_objective",
            "oracle_objective",
            "gap",
            "kkt_residual",
            "iterations",
            "converged",
        ],
        &[vec![
            fmt(run.objective),
            oracle_objective,
            gap,
            fmt(kkt.max_stationarity()),
            run.rounds.to_string(),
            run.converged.to_string(),
        ]],
    )?;

    let mut converged = run.converged;
    if config.game.over_the_air {
        let mut rng = labeled_rng(seed, "game-ota");
        let measured = game::run_table1_measured(
            &topo,
            &inst,
            &opts,
            config.game.symbols,
            game::FadingModel::UnitMeanPerSymbol,
            &mut rng,
        )?;
        let rows: Vec<Vec<String>> = (0..players)
            .map(|n| {
                vec![
                    (n + 1).to_string(),
                    fmt(measured.powers[n]),
                    fmt(measured.sum_prices[n]),
                    fmt(run.state.powers[n]),
                    fmt(run.state.sum_prices[n]),
                ]
            })
            .collect();
        emitter.csv(
            "game_over_the_air.csv",
            &["player", "measured_power", "measured_price_sum", "exact_power", "exact_price_sum"],
            &rows,
        )?;
        converged = converged && measured.converged;
    }
    Ok(converged)
}

fn run_num(config: &ExperimentConfig, seed: u64, emitter: &mut Emitter) -> Result<bool> {
    let mut missing = Vec::new();
    let topo = require(&config.topology, "[topology]", &mut missing);
    let flows = require(&config.flows, "[flows]", &mut missing);
    let node_rates = require(&config.num.node_rates, "num.node_rates", &mut missing);
    if !missing.is_empty() {
        return Err(Error::ConfigValidation(missing));
    }
    let (topo, flows, node_rates) = (topo.unwrap(), flows.unwrap(), node_rates.unwrap());
    let opts = NumOptions {
        stepsize: config.num.stepsize,
        iterations: config.num.iterations,
        rate_cap: config.num.rate_cap,
        scheduler: config.num.scheduler,
        goodput: config.num.goodput,
        game: GameOptions {
            tolerance: config.game.tolerance,
            max_rounds: config.game.max_rounds,
            floor_grid: config.game.floor_grid,
        },
        oracle_grid: config.num.oracle_grid,
    };
    let trace = controller::num_loop(&topo, &flows, &node_rates, &opts, seed)?;
    emit_num_trace(emitter, "num_trace.csv", &topo, &flows, &trace)?;
    Ok(true)
}

fn emit_num_trace(
    emitter: &mut Emitter,
    name: &str,
    topo: &NetworkTopology,
    flows: &[CommodityFlow],
    trace: &controller::NumTrace,
) -> Result<()> {
    let mut header: Vec<String> = vec!["t".into()];
    for n in 0..topo.node_count() {
        for &d in &trace.destinations {
            header.push(format!("lambda_{n}_{d}"));
        }
    }
    for (i, f) in flows.iter().enumerate() {
        header.push(format!("x_{}_{}_{}", i + 1, f.source, f.destination));
    }
    header.push("objective".into());
    header.push("scheduler_converged".into());
    let header_refs: Vec<&str> = header.iter().map(|s| s.as_str()).collect();
    let rows: Vec<Vec<String>> = trace
        .iterates
        .iter()
        .map(|it| {
            let mut row = vec![it.t.to_string()];
            row.extend(it.lambda.iter().flatten().map(|&v| fmt(v)));
            row.extend(it.x.iter().map(|&v| fmt(v)));
            row.push(fmt(it.objective));
            row.push(it.scheduler_converged.to_string());
            row
        })
        .collect();
    emitter.csv(name, &header_refs, &rows)
}

fn run_sim(config: &ExperimentConfig, seed: u64, emitter: &mut Emitter) -> Result<bool> {
    let mut missing = Vec::new();
    let topo = require(&config.topology, "[topology]", &mut missing);
    let links = require(&config.links, "[links]", &mut missing);
    let flows = require(&config.flows, "[flows]", &mut missing);
    let arrival_rates = require(&config.sim.arrival_rates, "sim.arrival_rates", &mut missing);
    if config.sim.policy == SimPolicyKind::Backpressure && config.rates.is_none() {
        missing.push("[rates] is required for the backpressure policy".into());
    }
    if !missing.is_empty() {
        return Err(Error::ConfigValidation(missing));
    }
    let (topo, links, flows) = (topo.unwrap(), links.unwrap(), flows.unwrap());
    let arrival_rates = arrival_rates.unwrap();

    let mut destinations: Vec<usize> = flows.iter().map(|f| f.destination).collect();
    destinations.sort_unstable();
    destinations.dedup();

    let distribution = if config.sim.poisson_arrivals {
        ArrivalDistribution::Poisson
    } else {
        ArrivalDistribution::Deterministic
    };
    let arrivals = ArrivalProcess::new(arrival_rates, distribution)?;
    let drops = match &config.dropping {
        Some(p) => DropPolicy::new(p.clone()),
        None => DropPolicy::never_drop(links.len()),
    };
    let policy = match config.sim.policy {
        SimPolicyKind::Backpressure => SchedulingPolicy::GoodputBackpressure {
            grid: PowerGrid::Box { points_per_axis: config.sim.points_per_axis },
            rates: config.rates.clone().expect("checked above"),
        },
        SimPolicyKind::Fixed => {
            let rates = config.sim.fixed_rates.clone().expect("validated");
            let commodities = config.sim.fixed_commodities.clone().expect("validated");
            if let Some(&c) = commodities.iter().find(|&&c| c >= destinations.len()) {
                return Err(Error::ConfigValidation(vec![format!(
                    "sim.fixed_commodities: index {c} out of range for {} commodities",
                    destinations.len()
                )]));
            }
            SchedulingPolicy::Fixed(SlotSchedule {
                powers: config.sim.fixed_powers.clone().expect("validated"),
                allocations: commodities
                    .iter()
                    .zip(&rates)
                    .map(|(&c, &mu)| if mu > 0.0 { vec![(c, mu)] } else { Vec::new() })
                    .collect(),
                rates,
            })
        }
    };
    let options = StabilityOptions {
        slots: config.sim.slots,
        drops,
        policy,
        slope_threshold: config.sim.slope_threshold,
    };
    let report = queue::run_stability_experiment(
        &topo,
        &links,
        &destinations,
        &arrivals,
        config.sim.scale,
        &options,
        seed,
    )?;

    let mut header: Vec<String> = vec!["t".into(), "total_backlog".into()];
    header.extend(destinations.iter().map(|d| format!("backlog_{d}")));
    let header_refs: Vec<&str> = header.iter().map(|s| s.as_str()).collect();
    let mut rows: Vec<Vec<String>> = report
        .trace
        .iter()
        .map(|(t, total, per_c)| {
            let mut row = vec![t.to_string(), fmt(*total)];
            row.extend(per_c.iter().map(|&v| fmt(v)));
            row
        })
        .collect();
    // Verdict row, padded to the trace's column count.
    let mut verdict = vec![
        "verdict".to_string(),
        fmt(report.slope),
        if report.stable { "stable".into() } else { "unstable".into() },
    ];
    verdict.resize(header.len(), String::new());
    rows.push(verdict);
    emitter.csv("sim_trace.csv", &header_refs, &rows)?;

    emitter.csv(
        "sim_summary.csv",
        &["slope", "stable", "mean_total_backlog", "final_total_backlog"],
        &[vec![
            fmt(report.slope),
            report.stable.to_string(),
            fmt(report.mean_total_backlog),
            fmt(report.final_total_backlog),
        ]],
    )?;
    Ok(true)
}

/// The two-transmitter sweep setup: symmetric direct and cross gains of
/// one, unit noise everywhere, wide power bounds.
pub fn sweep_pair() -> (NetworkTopology, Vec<Link>) {
    let topo = NetworkTopology::new(
        vec![
            vec![0.0, 1.0, 1.0, 1.0],
            vec![1.0, 0.0, 1.0, 1.0],
            vec![1.0, 1.0, 0.0, 1.0],
            vec![1.0, 1.0, 1.0, 0.0],
        ],
        vec![1.0; 4],
        vec![(0.01, 30.0); 4],
    )
    .unwrap();
    (topo, vec![Link::new(0, 2).unwrap(), Link::new(1, 3).unwrap()])
}

/// Two transmitters into one shared receiver, unit gains and noise,
/// asymmetric power budgets (2 W and 3 W).
pub fn shared_receiver_pair() -> (NetworkTopology, Vec<Link>) {
    let topo = NetworkTopology::new(
        vec![
            vec![0.0, 0.0, 0.0],
            vec![0.0, 0.0, 0.0],
            vec![1.0, 1.0, 0.0],
        ],
        vec![1.0; 3],
        vec![(0.01, 2.0), (0.01, 3.0), (0.01, 1.0)],
    )
    .unwrap();
    (topo, vec![Link::new(0, 2).unwrap(), Link::new(1, 2).unwrap()])
}

/// Two co-located transmitters feeding separate receivers with
/// asymmetric cross gains (0.5 one way, 0.8 the other) and a shared
/// 10 W power budget.
pub fn colocated_broadcast_pair() -> (NetworkTopology, Vec<Link>) {
    let topo = NetworkTopology::new(
        vec![
            vec![0.0, 0.0, 0.0, 0.0],
            vec![0.0, 0.0, 0.0, 0.0],
            vec![1.0, 0.5, 0.0, 0.0],
            vec![0.8, 1.0, 0.0, 0.0],
        ],
        vec![1.0; 4],
        vec![(0.01, 10.0); 4],
    )
    .unwrap();
    (topo, vec![Link::new(0, 2).unwrap(), Link::new(1, 3).unwrap()])
}

/// Four-node relay scenario: node 0 sources two commodities sunk at
/// nodes 2 and 3, node 1 is a strong relay, and the destinations can
/// relay for each other. Gains are a documented stand-in; the comparison
/// this feeds is qualitative.
///
/// The power floor is deliberately only one order of magnitude under the
/// cap. With a much deeper floor a link parked there under interference
/// has a success probability near 1e-7, the price normalization divides
/// by it, and the game locks into a spurious boundary equilibrium that
/// silences the highest-weight link; keeping the floor at 0.5 W keeps
/// every equilibrium of the scheduling game near the brute-force optimum.
pub fn relay_mesh() -> (NetworkTopology, Vec<CommodityFlow>, Vec<f64>) {
    let topo = NetworkTopology::new(
        vec![
            vec![0.0, 0.0, 0.0, 0.0],
            vec![1.0, 0.0, 0.0, 0.0],
            vec![0.3, 0.9, 0.0, 0.5],
            vec![0.25, 0.85, 0.5, 0.0],
        ],
        vec![1.0; 4],
        vec![(0.5, 2.0); 4],
    )
    .unwrap();
    let log = UtilitySpec::weighted_log(1.0, 0.0).unwrap();
    let flows = vec![
        CommodityFlow::new(0, 2, log).unwrap(),
        CommodityFlow::new(0, 3, log).unwrap(),
    ];
    let rates = vec![0.8; 4];
    (topo, flows, rates)
}

fn run_figures(config: &ExperimentConfig, seed: u64, emitter: &mut Emitter) -> Result<bool> {
    let _ = config;
    let sweep_rates = RateSet::new(vec![0.4, 0.8, 1.2, 1.6, 2.0])?;
    let (topo, links) = sweep_pair();

    // Own-power sweep at a fixed interferer (5 W), and interferer sweep
    // at a fixed own power (25 W).
    for (name, own_sweep) in [("fig2_goodput_vs_own_power.csv", true), ("fig3_goodput_vs_interference.csv", false)] {
        let mut header: Vec<String> = vec![if own_sweep { "p1" } else { "p2" }.into()];
        for &mu in sweep_rates.rates() {
            header.push(format!("g1_rate_{mu}"));
        }
        header.push("g1_best".into());
        header.push("mu_best".into());
        let header_refs: Vec<&str> = header.iter().map(|s| s.as_str()).collect();
        let mut rows = Vec::new();
        for p in linspace(0.1, 20.0, 200) {
            let powers = if own_sweep { vec![p, 5.0] } else { vec![25.0, p] };
            let mut row = vec![fmt(p)];
            for &mu in sweep_rates.rates() {
                row.push(fmt(channel::goodput(&topo, &links, &powers, 0, mu)?));
            }
            let best = channel::max_goodput(&topo, &links, &powers, 0, &sweep_rates)?;
            row.push(fmt(best.value));
            row.push(fmt(best.rate));
            rows.push(row);
        }
        emitter.csv(name, &header_refs, &rows)?;
    }

    // Goodput regions of the shared-receiver pair under three retention
    // levels, nested always-drop box outwards.
    let region_rates = RateSet::new(vec![0.4, 0.6, 0.8, 1.0, 1.2, 1.4, 1.6, 1.8])?;
    let (topo4, links4) = shared_receiver_pair();
    let grid = PowerGrid::Box { points_per_axis: 41 };
    for (delta, stem) in [(1.0, "fig4_retain_all"), (0.5, "fig4_retain_half"), (0.0, "fig4_drop_all")] {
        let profile = DroppingProfile::uniform(delta, 2)?;
        let reg = region::enumerate_region(&topo4, &links4, &region_rates, &grid, &profile)?;
        emit_region(emitter, stem, &reg, 2)?;
    }

    // Region of the co-located pair splitting a shared 10 W budget.
    let colo_rates = RateSet::new(vec![0.2, 0.4, 0.6])?;
    let (topo5, links5) = colocated_broadcast_pair();
    let reg = region::enumerate_region(
        &topo5,
        &links5,
        &colo_rates,
        &PowerGrid::Simplex { total: 10.0, points_per_axis: 41 },
        &DroppingProfile::uniform(1.0, 2)?,
    )?;
    emit_region(emitter, "fig5_colocated", &reg, 2)?;

    // Paired closed-loop runs, game-scheduled against oracle-scheduled.
    let (topo6, flows, node_rates) = relay_mesh();
    let base = NumOptions { iterations: 1500, oracle_grid: 10, ..Default::default() };
    let game_trace = controller::num_loop(&topo6, &flows, &node_rates, &base, seed)?;
    let oracle_opts =
        NumOptions { scheduler: controller::SchedulerKind::Oracle, ..base };
    let oracle_trace = controller::num_loop(&topo6, &flows, &node_rates, &oracle_opts, seed)?;
    let source_commodity = 0;
    let rows: Vec<Vec<String>> = game_trace
        .iterates
        .iter()
        .zip(&oracle_trace.iterates)
        .map(|(g, o)| {
            vec![
                g.t.to_string(),
                fmt(g.x[0]),
                fmt(o.x[0]),
                fmt(g.objective),
                fmt(o.objective),
                fmt(g.lambda[flows[0].source][source_commodity]),
                fmt(o.lambda[flows[0].source][source_commodity]),
            ]
        })
        .collect();
    emitter.csv(
        "fig6_loop_comparison.csv",
        &[
            "t",
            "x1_game",
            "x1_oracle",
            "objective_game",
            "objective_oracle",
            "lambda_source_game",
            "lambda_source_oracle",
        ],
        &rows,
    )?;
    Ok(game_trace.flagged_iterations() == 0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::parse_config;
    use tempfile::TempDir;

    const GAME_CONFIG: &str = r#"
        [topology]
        nodes = 4
        gains = [
            [0.0, 1.0, 1.0, 1.0],
            [1.0, 0.0, 1.0, 1.0],
            [1.0, 1.0, 0.0, 1.0],
            [1.0, 1.0, 1.0, 0.0],
        ]
        noise = [1.0, 1.0, 1.0, 1.0]
        power_bounds = [[0.1, 2.0], [0.1, 2.0], [0.1, 2.0], [0.1, 2.0]]
        [links]
        pairs = [[0, 2], [1, 3]]
        [game]
        link_rates = [0.7, 0.7]
        oracle_grid = 21
    "#;

    #[test]
    fn game_scenario_writes_trace_summary_and_manifests() {
        let config = parse_config(GAME_CONFIG).unwrap();
        let dir = TempDir::new().unwrap();
        let outcome =
            run_scenario(Scenario::Game, &config, GAME_CONFIG, 5, dir.path()).unwrap();
        assert!(outcome.converged);
        let trace = std::fs::read_to_string(dir.path().join("game_trace.csv")).unwrap();
        assert!(trace.starts_with("iteration,p_1,p_2,c_1,c_2,objective\n"));
        assert!(trace.lines().count() > 2);
        let summary = std::fs::read_to_string(dir.path().join("game_summary.csv")).unwrap();
        let fields: Vec<&str> = summary.lines().nth(1).unwrap().split(',').collect();
        // Oracle dominates the equilibrium, so the gap field is >= 0 (up
        // to refine slack).
        let gap: f64 = fields[2].parse().unwrap();
        assert!(gap >= -1e-9, "gap {gap} should be non-negative");
        let manifest =
            std::fs::read_to_string(dir.path().join("game_trace.manifest.toml")).unwrap();
        assert!(manifest.contains("scenario = \"game\""));
        assert!(manifest.contains("seed = 5"));
        assert!(manifest.contains("config_sha256"));
    }

    #[test]
    fn reruns_are_byte_identical() {
        let config = parse_config(GAME_CONFIG).unwrap();
        let dir_a = TempDir::new().unwrap();
        let dir_b = TempDir::new().unwrap();
        run_scenario(Scenario::Game, &config, GAME_CONFIG, 9, dir_a.path()).unwrap();
        run_scenario(Scenario::Game, &config, GAME_CONFIG, 9, dir_b.path()).unwrap();
        for name in ["game_trace.csv", "game_summary.csv"] {
            let a = std::fs::read(dir_a.path().join(name)).unwrap();
            let b = std::fs::read(dir_b.path().join(name)).unwrap();
            assert_eq!(a, b, "{name} differs between identical runs");
        }
    }

    #[test]
    fn scenario_mismatch_is_a_validation_error() {
        let text = "scenario = \"region\"";
        let config = parse_config(text).unwrap();
        let dir = TempDir::new().unwrap();
        let err = run_scenario(Scenario::Game, &config, text, 0, dir.path()).unwrap_err();
        assert!(matches!(err, Error::ConfigValidation(_)));
    }

    #[test]
    fn missing_sections_are_collected_per_scenario() {
        let config = parse_config("").unwrap();
        let dir = TempDir::new().unwrap();
        let err = run_scenario(Scenario::Sim, &config, "", 0, dir.path()).unwrap_err();
        match err {
            Error::ConfigValidation(errors) => {
                assert!(errors.len() >= 3, "expected several missing sections: {errors:?}");
            }
            other => panic!("expected a validation error, got {other:?}"),
        }
    }

    #[test]
    fn props_scenario_reports_every_property() {
        let text = r#"
            [topology]
            nodes = 4
            gains = [
                [0.0, 1.0, 1.0, 1.0],
                [1.0, 0.0, 1.0, 1.0],
                [1.0, 1.0, 0.0, 1.0],
                [1.0, 1.0, 1.0, 0.0],
            ]
            noise = [1.0, 1.0, 1.0, 1.0]
            power_bounds = [[0.1, 20.0], [0.1, 20.0], [0.1, 20.0], [0.1, 20.0]]
            [links]
            pairs = [[0, 2], [1, 3]]
            [rates]
            menu = [0.4, 0.8, 1.2]
            [props]
            samples = 50
            sweep_points = 12
            base_powers = [5.0, 5.0]
        "#;
        let config = parse_config(text).unwrap();
        let dir = TempDir::new().unwrap();
        let outcome = run_scenario(Scenario::Props, &config, text, 3, dir.path()).unwrap();
        assert!(outcome.converged, "properties should hold on the sweep fixture");
        let report = std::fs::read_to_string(dir.path().join("props_report.csv")).unwrap();
        for id in ["P1", "P2", "P3", "P4", "P5", "P'1", "P'2", "P'3", "P'4"] {
            assert!(
                report.lines().any(|l| l.starts_with(&format!("{id},"))),
                "missing {id} in {report}"
            );
        }
    }

    #[test]
    fn figures_scenario_emits_every_figure_file() {
        let config = parse_config("").unwrap();
        let dir = TempDir::new().unwrap();
        let outcome = run_scenario(Scenario::Figures, &config, "", 1, dir.path()).unwrap();
        assert!(outcome.converged);
        for name in [
            "fig2_goodput_vs_own_power.csv",
            "fig3_goodput_vs_interference.csv",
            "fig4_retain_all_points.csv",
            "fig4_retain_all_hull.csv",
            "fig4_retain_half_points.csv",
            "fig4_drop_all_points.csv",
            "fig5_colocated_points.csv",
            "fig5_colocated_hull.csv",
            "fig6_loop_comparison.csv",
        ] {
            assert!(dir.path().join(name).exists(), "missing {name}");
            let stem = name.trim_end_matches(".csv");
            assert!(
                dir.path().join(format!("{stem}.manifest.toml")).exists(),
                "missing manifest for {name}"
            );
        }
    }
}
