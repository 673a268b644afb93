//! Python bindings: build a [`Network`] once, then query success
//! probabilities, goodputs, rate regions, the pricing game, the
//! cross-layer rate-control loop, and queue stability from Python.
//!
//! Build with `cargo build -p goodput-python`; the resulting `cdylib`
//! imports as the module `goodput_py` (see `python/smoke_test.py`).

use goodput::channel::{self, Link, NetworkTopology, RateSet};
use goodput::controller::{self, CommodityFlow, NumOptions, UtilitySpec};
use goodput::game::{self, GameOptions, SchedulingInstance};
use goodput::queue::{
    ArrivalDistribution, ArrivalProcess, DropPolicy, SchedulingPolicy, StabilityOptions,
};
use goodput::region::{self, DroppingProfile, PowerGrid};
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

/// Every library error reaching Python is a rejected model or argument,
/// so they all surface as `ValueError`. Solvers that hit their round
/// limit return normally with `converged = False` instead of raising.
fn err(e: goodput::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// Closed-form sensitivities of one link's success probability.
#[pyclass(frozen)]
struct Derivatives {
    /// d q / d own power.
    #[pyo3(get)]
    dq_dpl: f64,
    /// d q / d interferer power, indexed like the network's links.
    #[pyo3(get)]
    dq_dpj: Vec<f64>,
    /// d q / d rate.
    #[pyo3(get)]
    dq_dmu: f64,
    /// d log q / d own power.
    #[pyo3(get)]
    dlogq_dpl: f64,
    /// d^2 log q / d own power^2.
    #[pyo3(get)]
    d2logq_dpl2: f64,
}

/// A sampled goodput region; `hull` is present only for two links.
#[pyclass(frozen)]
struct Region {
    /// One goodput vector per enumerated power/rate choice.
    #[pyo3(get)]
    points: Vec<Vec<f64>>,
    /// Counterclockwise hull of the downward-closed two-link scatter.
    #[pyo3(get)]
    hull: Option<Vec<(f64, f64)>>,
}

/// Fixed point (or last iterate) of the power-pricing game.
#[pyclass(frozen)]
struct GameOutcome {
    #[pyo3(get)]
    powers: Vec<f64>,
    /// `prices[m][n]`: normalized price player `m` charges player `n`.
    #[pyo3(get)]
    prices: Vec<Vec<f64>>,
    /// Column sums of `prices`; the interference cost seen by each player.
    #[pyo3(get)]
    sum_prices: Vec<f64>,
    #[pyo3(get)]
    rounds: usize,
    #[pyo3(get)]
    converged: bool,
    /// Weighted goodput of the final power vector.
    #[pyo3(get)]
    objective: f64,
    /// Worst per-player stationarity residual at the final powers.
    #[pyo3(get)]
    kkt_residual: f64,
}

/// Trailing-window summary of a rate-control run.
#[pyclass(frozen)]
struct RateControlOutcome {
    /// Mean achieved weighted goodput over the trailing half.
    #[pyo3(get)]
    mean_objective: f64,
    /// Per-flow mean source rates over the trailing half.
    #[pyo3(get)]
    mean_rates: Vec<f64>,
    #[pyo3(get)]
    iterations: usize,
    /// Iterations whose scheduler solve hit its round limit.
    #[pyo3(get)]
    flagged_iterations: usize,
}

/// Verdict of a finite-horizon queue stability run.
#[pyclass(frozen)]
struct StabilityOutcome {
    /// Total-backlog growth per slot over the trailing half.
    #[pyo3(get)]
    slope: f64,
    #[pyo3(get)]
    stable: bool,
    #[pyo3(get)]
    mean_total_backlog: f64,
    #[pyo3(get)]
    final_total_backlog: f64,
}

/// A wireless mesh under study: channel gains indexed `gains[rx][tx]`,
/// per-node noise powers, per-node transmit power intervals, and the
/// directed links of interest.
///
/// Nodes are 0-based; `links` lists `(origin, end)` pairs, and every
/// per-link argument elsewhere (powers, weights, rates) is indexed in
/// the same order as `links`.
#[pyclass(frozen)]
struct Network {
    topo: NetworkTopology,
    links: Vec<Link>,
}

impl Network {
    fn rate_set(&self, menu: Vec<f64>) -> PyResult<RateSet> {
        RateSet::new(menu).map_err(err)
    }

    fn instance(&self, weights: Vec<f64>, link_rates: Vec<f64>) -> PyResult<SchedulingInstance> {
        SchedulingInstance::new(self.links.clone(), weights, link_rates).map_err(err)
    }
}

#[pymethods]
impl Network {
    #[new]
    fn new(
        gains: Vec<Vec<f64>>,
        noise: Vec<f64>,
        power_bounds: Vec<(f64, f64)>,
        links: Vec<(usize, usize)>,
    ) -> PyResult<Self> {
        let topo = NetworkTopology::new(gains, noise, power_bounds).map_err(err)?;
        let links: Vec<Link> = links
            .into_iter()
            .map(|(o, e)| Link::new(o, e))
            .collect::<goodput::Result<_>>()
            .map_err(err)?;
        let floor: Vec<f64> = links.iter().map(|l| topo.bounds(l.origin).0).collect();
        channel::check_link_system(&topo, &links, &floor).map_err(err)?;
        Ok(Network { topo, links })
    }

    #[getter]
    fn node_count(&self) -> usize {
        self.topo.node_count()
    }

    #[getter]
    fn link_count(&self) -> usize {
        self.links.len()
    }

    /// Probability that one slot at rate `rate` on link `link` decodes,
    /// under fading on both the direct and the interfering paths.
    fn success_probability(&self, powers: Vec<f64>, link: usize, rate: f64) -> PyResult<f64> {
        channel::success_probability(&self.topo, &self.links, &powers, link, rate).map_err(err)
    }

    /// Expected decoded rate `rate * success_probability`.
    fn goodput(&self, powers: Vec<f64>, link: usize, rate: f64) -> PyResult<f64> {
        channel::goodput(&self.topo, &self.links, &powers, link, rate).map_err(err)
    }

    /// Best `(goodput, rate)` over a finite ascending rate menu.
    fn max_goodput(&self, powers: Vec<f64>, link: usize, menu: Vec<f64>) -> PyResult<(f64, f64)> {
        let rates = self.rate_set(menu)?;
        let best = channel::max_goodput(&self.topo, &self.links, &powers, link, &rates).map_err(err)?;
        Ok((best.value, best.rate))
    }

    /// Closed-form derivatives of `success_probability` at one point.
    fn derivatives(&self, powers: Vec<f64>, link: usize, rate: f64) -> PyResult<Derivatives> {
        let d = channel::derivatives(&self.topo, &self.links, &powers, link, rate).map_err(err)?;
        Ok(Derivatives {
            dq_dpl: d.dq_dpl,
            dq_dpj: d.dq_dpj,
            dq_dmu: d.dq_dmu,
            dlogq_dpl: d.dlogq_dpl,
            d2logq_dpl2: d.d2logq_dpl2,
        })
    }

    /// Enumerate achievable goodput vectors over a power grid and rate
    /// menu, with per-link retention probabilities `deltas` (1 drops
    /// every failed packet, 0 retries forever).
    ///
    /// `simplex_total` switches the grid from independent per-link
    /// intervals to two-link splits of a shared power budget.
    #[pyo3(signature = (menu, deltas, points_per_axis = 25, simplex_total = None))]
    fn region(
        &self,
        menu: Vec<f64>,
        deltas: Vec<f64>,
        points_per_axis: usize,
        simplex_total: Option<f64>,
    ) -> PyResult<Region> {
        let rates = self.rate_set(menu)?;
        let profile = DroppingProfile::new(deltas).map_err(err)?;
        let grid = match simplex_total {
            Some(total) => PowerGrid::Simplex { total, points_per_axis },
            None => PowerGrid::Box { points_per_axis },
        };
        let reg =
            region::enumerate_region(&self.topo, &self.links, &rates, &grid, &profile).map_err(err)?;
        Ok(Region {
            points: reg.raw_points.into_iter().map(|p| p.g).collect(),
            hull: reg.hull.map(|h| h.into_iter().map(|[x, y]| (x, y)).collect()),
        })
    }

    /// Play the distributed power-pricing game for a weighted scheduling
    /// instance until powers and prices stop moving.
    #[pyo3(signature = (weights, link_rates, tolerance = 1e-7, max_rounds = 1000))]
    fn run_game(
        &self,
        weights: Vec<f64>,
        link_rates: Vec<f64>,
        tolerance: f64,
        max_rounds: usize,
    ) -> PyResult<GameOutcome> {
        let inst = self.instance(weights, link_rates)?;
        let opts = GameOptions { tolerance, max_rounds, ..GameOptions::default() };
        let run = game::run_table1(&self.topo, &inst, &opts).map_err(err)?;
        let kkt = game::kkt_residual(&self.topo, &inst, &run.state.powers).map_err(err)?;
        let worst = kkt.stationarity.iter().cloned().fold(0.0, f64::max);
        Ok(GameOutcome {
            powers: run.state.powers,
            prices: run.state.prices,
            sum_prices: run.state.sum_prices,
            rounds: run.rounds,
            converged: run.converged,
            objective: run.objective,
            kkt_residual: worst,
        })
    }

    /// Run the full cross-layer loop: log-utility source rates, queue
    /// dual prices, and the pricing game as the per-iteration scheduler.
    ///
    /// `flows` lists `(source, destination)` node pairs, each maximizing
    /// `log(x)` up to `rate_cap`; `node_rates` gives the physical-layer
    /// rate used by each node's outgoing links.
    #[pyo3(signature = (flows, node_rates, iterations = 400, stepsize = 0.05, rate_cap = 5.0, seed = 0))]
    fn run_rate_control(
        &self,
        flows: Vec<(usize, usize)>,
        node_rates: Vec<f64>,
        iterations: usize,
        stepsize: f64,
        rate_cap: f64,
        seed: u64,
    ) -> PyResult<RateControlOutcome> {
        let utility = UtilitySpec::weighted_log(1.0, 0.0).map_err(err)?;
        let flows: Vec<CommodityFlow> = flows
            .into_iter()
            .map(|(s, d)| CommodityFlow::new(s, d, utility))
            .collect::<goodput::Result<_>>()
            .map_err(err)?;
        let opts = NumOptions { stepsize, iterations, rate_cap, ..NumOptions::default() };
        let trace = controller::num_loop(&self.topo, &flows, &node_rates, &opts, seed).map_err(err)?;
        Ok(RateControlOutcome {
            mean_objective: trace.mean_objective_over_last(0.5),
            mean_rates: trace.mean_rates_over_last(0.5),
            iterations: trace.iterates.len(),
            flagged_iterations: trace.flagged_iterations(),
        })
    }

    /// Drive per-node queues under backpressure scheduling for `slots`
    /// slots and judge stability by trailing backlog growth.
    ///
    /// `arrival_rates[node][commodity]` are mean packet arrivals per
    /// slot; commodities are indexed by the sorted `destinations`.
    #[pyo3(signature = (destinations, arrival_rates, menu, slots = 20_000, scale = 1.0, points_per_axis = 15, seed = 0))]
    fn run_stability(
        &self,
        destinations: Vec<usize>,
        arrival_rates: Vec<Vec<f64>>,
        menu: Vec<f64>,
        slots: usize,
        scale: f64,
        points_per_axis: usize,
        seed: u64,
    ) -> PyResult<StabilityOutcome> {
        let rates = self.rate_set(menu)?;
        let arrivals = ArrivalProcess::new(arrival_rates, ArrivalDistribution::Poisson).map_err(err)?;
        let options = StabilityOptions {
            slots,
            drops: DropPolicy::never_drop(self.links.len()),
            policy: SchedulingPolicy::GoodputBackpressure {
                grid: PowerGrid::Box { points_per_axis },
                rates,
            },
            slope_threshold: goodput::queue::DEFAULT_STABLE_SLOPE,
        };
        let report = goodput::queue::run_stability_experiment(
            &self.topo,
            &self.links,
            &destinations,
            &arrivals,
            scale,
            &options,
            seed,
        )
        .map_err(err)?;
        Ok(StabilityOutcome {
            slope: report.slope,
            stable: report.stable,
            mean_total_backlog: report.mean_total_backlog,
            final_total_backlog: report.final_total_backlog,
        })
    }
}

#[pymodule]
fn goodput_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_class::<Network>()?;
    m.add_class::<Derivatives>()?;
    m.add_class::<Region>()?;
    m.add_class::<GameOutcome>()?;
    m.add_class::<RateControlOutcome>()?;
    m.add_class::<StabilityOutcome>()?;
    Ok(())
}
