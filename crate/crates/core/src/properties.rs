//! Randomized verification of the structural properties the upper layers
//! lean on, each checked through two independent routes: the closed-form
//! derivatives and direct probing of the success function itself.
//!
//! For the slot success probability `q_l(p, mu)`:
//!
//! - P.1: strictly increasing and log-concave in own power `p_l`
//! - P.2: strictly decreasing and convex in an interferer power `p_k`
//! - P.3: strictly decreasing in the rate `mu`
//! - P.4: `log q` has increasing differences in `(p_l, mu)`
//! - P.5: `log q` has increasing differences in `(p_l, p_j)` and constant
//!   differences in any interferer pair `(p_i, p_j)`
//!
//! For the menu-maximized goodput `g_l(p) = max_mu mu * q_l(p, mu)` and its
//! maximizer `mu_bar`:
//!
//! - P'.1: `g_l` strictly increasing in `p_l`,  P'.3: `mu_bar` non-decreasing
//! - P'.2: `g_l` strictly decreasing and convex in `p_k`, P'.4: `mu_bar`
//!   non-increasing
//!
//! The checks are sampling-based on purpose: they are the regression net
//! that catches a broken sign or index long before a scheduler run would.

use crate::channel::{self, Link, NetworkTopology, RateSet};
use crate::error::{Error, Result};
use crate::seed::labeled_rng;
use rand::Rng;

/// Default slack tolerance for the inequality checks.
pub const DEFAULT_TOLERANCE: f64 = 1e-9;

/// Margin a "strictly" monotone comparison must clear, applied in the log
/// domain so it means the same thing at q = 0.5 and q = 1e-150.
const STRICT_MARGIN: f64 = 1e-12;

/// Tolerance for the constant-differences part of P.5, which holds exactly.
const EXACT_TOLERANCE: f64 = 1e-12;

/// Outcome of one property over a batch of samples.
#[derive(Debug, Clone, PartialEq)]
pub struct PropertyReport {
    pub property_id: String,
    /// Samples on which the property was evaluated.
    pub samples: u64,
    /// Samples where at least one route failed its margin.
    pub violations: u64,
    /// Smallest slack seen across all samples and routes; a passing run
    /// keeps this above `-tolerance`.
    pub worst_margin: f64,
}

struct Tally {
    samples: u64,
    violations: u64,
    worst: f64,
}

impl Tally {
    fn new() -> Self {
        Tally { samples: 0, violations: 0, worst: f64::INFINITY }
    }

    /// Record one sample given the slacks of its routes; `fail` is decided
    /// by the caller because strict and tolerant routes have different bars.
    fn record(&mut self, slacks: &[f64], fail: bool) {
        self.samples += 1;
        if fail {
            self.violations += 1;
        }
        for &s in slacks {
            if s < self.worst {
                self.worst = s;
            }
        }
    }

    fn report(&self, id: &str) -> PropertyReport {
        PropertyReport {
            property_id: id.to_string(),
            samples: self.samples,
            violations: self.violations,
            worst_margin: if self.samples == 0 { 0.0 } else { self.worst },
        }
    }
}

/// A success-probability evaluator with the same shape as
/// [`channel::success_probability`]. The checks take it as a parameter so a
/// deliberately corrupted variant can prove they have teeth.
pub type SuccessFn<'a> = &'a dyn Fn(&NetworkTopology, &[Link], &[f64], usize, f64) -> Result<f64>;

/// Draw a random 2-5 link system: one transmitter per link, receivers
/// possibly shared, every cross pair coupled with a nonzero gain. Power
/// bounds are `[0.5, 5]` W so log-uniform power draws stay in a regime
/// where nothing underflows.
pub fn random_link_system<R: Rng + ?Sized>(rng: &mut R) -> (NetworkTopology, Vec<Link>) {
    let link_count = rng.random_range(2..=5usize);
    let nodes = 2 * link_count;
    let mut gains = vec![vec![0.0; nodes]; nodes];
    let mut links = Vec::with_capacity(link_count);
    for l in 0..link_count {
        let end = link_count + rng.random_range(0..link_count);
        links.push(Link::new(l, end).unwrap());
    }
    for l in 0..link_count {
        for tx in 0..link_count {
            let rx = links[l].end;
            gains[rx][tx] = if tx == l {
                rng.random_range(0.5..2.0)
            } else {
                rng.random_range(0.05..0.6)
            };
        }
    }
    let noise = (0..nodes).map(|_| rng.random_range(0.3..1.5)).collect();
    let topo = NetworkTopology::new(gains, noise, vec![(0.5, 5.0); nodes]).unwrap();
    (topo, links)
}

fn log_uniform<R: Rng + ?Sized>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    (rng.random_range(lo.ln()..hi.ln())).exp()
}

/// Check P.1-P.5 on `samples` random `(p, mu)` draws over the given link
/// system. Powers are log-uniform within each transmitter's bounds, rates
/// uniform in `[0.1, 3]` nats/slot.
pub fn check_success_properties(
    topo: &NetworkTopology,
    links: &[Link],
    samples: u64,
    seed: u64,
    tolerance: f64,
) -> Result<Vec<PropertyReport>> {
    check_success_properties_with(topo, links, samples, seed, tolerance, &|t, l, p, i, m| {
        channel::success_probability(t, l, p, i, m)
    })
}

/// Same checks with an injectable success function. The closed-form routes
/// always use the real derivatives; only the probing routes see `q_fn`, so
/// feeding a corrupted function here shows which probe catches it.
pub fn check_success_properties_with(
    topo: &NetworkTopology,
    links: &[Link],
    samples: u64,
    seed: u64,
    tolerance: f64,
    q_fn: SuccessFn,
) -> Result<Vec<PropertyReport>> {
    if links.len() < 2 {
        return Err(Error::InvalidInput(
            "success-property checks need at least 2 links (one interferer)".into(),
        ));
    }
    if samples == 0 {
        return Err(Error::InvalidInput("sample count must be >= 1".into()));
    }
    check_link_bounds(topo, links)?;
    let mut rng = labeled_rng(seed, "properties/success");
    let mut p1 = Tally::new();
    let mut p2 = Tally::new();
    let mut p3 = Tally::new();
    let mut p4 = Tally::new();
    let mut p5 = Tally::new();

    for _ in 0..samples {
        let powers: Vec<f64> = links
            .iter()
            .map(|link| {
                let (lo, hi) = topo.bounds(link.origin);
                log_uniform(&mut rng, lo, hi)
            })
            .collect();
        let mu = rng.random_range(0.1..3.0);
        let l = rng.random_range(0..links.len());
        let k = pick_other(&mut rng, links.len(), &[l]);
        let q = |pw: &[f64], m: f64| q_fn(topo, links, pw, l, m);
        let d = channel::derivatives(topo, links, &powers, l, mu)?;
        let base = q(&powers, mu)?;

        // P.1: own power helps, and does so with diminishing log returns.
        // Strictness is probed on log q: q spans hundreds of orders of
        // magnitude over the power box, so a fixed q-scale margin would be
        // unrepresentable in the low-power corner.
        {
            let grow = 1.0 + rng.random_range(0.05..0.5);
            let up = q(&with(&powers, l, powers[l] * grow), mu)?;
            let s_probe = up.ln() - base.ln() - STRICT_MARGIN;
            let s_deriv = d.dq_dpl;
            let s_curv = -d.d2logq_dpl2;
            let h = 0.2 * powers[l];
            let s_logconc = 2.0 * base.ln()
                - q(&with(&powers, l, powers[l] - h), mu)?.ln()
                - q(&with(&powers, l, powers[l] + h), mu)?.ln();
            let fail = s_probe < 0.0
                || s_deriv < -tolerance
                || s_curv < -tolerance
                || s_logconc < -tolerance;
            p1.record(&[s_probe, s_deriv, s_curv, s_logconc], fail);
        }

        // P.2: interferer power hurts, convexly.
        {
            let grow = 1.0 + rng.random_range(0.05..0.5);
            let up = q(&with(&powers, k, powers[k] * grow), mu)?;
            let s_probe = base.ln() - up.ln() - STRICT_MARGIN;
            let s_deriv = -d.dq_dpj[k];
            let h = 0.3 * powers[k];
            let s_convex = q(&with(&powers, k, powers[k] - h), mu)?
                + q(&with(&powers, k, powers[k] + h), mu)?
                - 2.0 * base;
            let fail = s_probe < 0.0 || s_deriv < -tolerance || s_convex < -tolerance;
            p2.record(&[s_probe, s_deriv, s_convex], fail);
        }

        // P.3: a faster slot fails more often.
        {
            let up = q(&powers, mu * (1.0 + rng.random_range(0.05..0.5)))?;
            let s_probe = base.ln() - up.ln() - STRICT_MARGIN;
            let s_deriv = -d.dq_dmu;
            let fail = s_probe < 0.0 || s_deriv < -tolerance;
            p3.record(&[s_probe, s_deriv], fail);
        }

        // P.4: raising own power is worth more (in log q) at higher rates.
        {
            let dp = 0.3 * powers[l];
            let dm = 0.3 * mu;
            let s_probe = quad_log_diff(&|pw, m| q(pw, m), &powers, l, dp, mu, dm)?;
            let d_hi = channel::derivatives(topo, links, &with(&powers, l, powers[l] + dp), l, mu)?;
            let q_hi = channel::success_probability(
                topo,
                links,
                &with(&powers, l, powers[l] + dp),
                l,
                mu,
            )?;
            let q_lo = channel::success_probability(topo, links, &powers, l, mu)?;
            // d(log q)/dmu must grow with p_l (cross partial >= 0).
            let s_deriv = d_hi.dq_dmu / q_hi - d.dq_dmu / q_lo;
            let fail = s_probe < -tolerance || s_deriv < -tolerance;
            p4.record(&[s_probe, s_deriv], fail);
        }

        // P.5: complementarity between own and one interferer power; no
        // coupling at all between two interferer powers.
        {
            let dp = 0.3 * powers[l];
            let dk = 0.3 * powers[k];
            let mut slacks = vec![d.d2logq_dpl_dpj[k]];
            let s_pair = {
                let up = |pw: &[f64]| q(pw, mu);
                let a = up(&with(&with(&powers, l, powers[l] + dp), k, powers[k] + dk))?.ln()
                    - up(&with(&powers, k, powers[k] + dk))?.ln();
                let b = up(&with(&powers, l, powers[l] + dp))?.ln() - base.ln();
                a - b
            };
            slacks.push(s_pair);
            let mut fail = slacks[0] < -tolerance || s_pair < -tolerance;
            if links.len() >= 3 {
                let i = pick_other(&mut rng, links.len(), &[l, k]);
                let di = 0.3 * powers[i];
                let both = q(&with(&with(&powers, i, powers[i] + di), k, powers[k] + dk), mu)?
                    .ln();
                let only_i = q(&with(&powers, i, powers[i] + di), mu)?.ln();
                let only_k = q(&with(&powers, k, powers[k] + dk), mu)?.ln();
                let cross = both - only_i - only_k + base.ln();
                let s_const = EXACT_TOLERANCE - cross.abs();
                fail = fail || s_const < 0.0;
                slacks.push(s_const);
            }
            p5.record(&slacks, fail);
        }
    }

    Ok(vec![
        p1.report("P1"),
        p2.report("P2"),
        p3.report("P3"),
        p4.report("P4"),
        p5.report("P5"),
    ])
}

/// Check P'.1-P'.4 by sweeping, for every ordered link pair `(l, k)`, the
/// own power `p_l` and the interferer power `p_k` over uniform grids of
/// `points_per_axis` points within the transmitter bounds, holding the
/// other powers at `base_powers`.
pub fn check_goodput_properties(
    topo: &NetworkTopology,
    links: &[Link],
    base_powers: &[f64],
    rates: &RateSet,
    points_per_axis: usize,
    tolerance: f64,
) -> Result<Vec<PropertyReport>> {
    if links.len() < 2 {
        return Err(Error::InvalidInput(
            "goodput-property sweeps need at least 2 links".into(),
        ));
    }
    if points_per_axis < 10 {
        return Err(Error::InvalidInput(format!(
            "goodput sweeps need >= 10 grid points per axis, got {points_per_axis}"
        )));
    }
    channel::check_link_system(topo, links, base_powers)?;
    let mut r1 = Tally::new();
    let mut r2 = Tally::new();
    let mut r3 = Tally::new();
    let mut r4 = Tally::new();

    for l in 0..links.len() {
        // Sweep own power: goodput up, optimal rate up.
        let sweep = sweep_series(topo, links, base_powers, l, l, rates, points_per_axis)?;
        for w in sweep.windows(2) {
            let (g0, m0) = w[0];
            let (g1, m1) = w[1];
            // Strict staircases are probed on log g, same scale argument
            // as the success-probability strictness routes.
            let s = g1.ln() - g0.ln() - STRICT_MARGIN;
            r1.record(&[s], s < 0.0);
            let sm = m1 - m0;
            r3.record(&[sm], sm < 0.0);
        }
        for k in 0..links.len() {
            if k == l || links[k].origin == links[l].origin {
                continue;
            }
            // Sweep the interferer: goodput down convexly, optimal rate down.
            let sweep = sweep_series(topo, links, base_powers, l, k, rates, points_per_axis)?;
            for w in sweep.windows(2) {
                let s = w[0].0.ln() - w[1].0.ln() - STRICT_MARGIN;
                r2.record(&[s], s < 0.0);
                let sm = w[0].1 - w[1].1;
                r4.record(&[sm], sm < 0.0);
            }
            for w in sweep.windows(3) {
                let s = w[0].0 + w[2].0 - 2.0 * w[1].0;
                r2.record(&[s], s < -tolerance);
            }
        }
    }

    Ok(vec![
        r1.report("P'1"),
        r2.report("P'2"),
        r3.report("P'3"),
        r4.report("P'4"),
    ])
}

/// Goodput and optimal rate of link `l` while link `swept`'s power runs
/// over its transmitter's power interval.
fn sweep_series(
    topo: &NetworkTopology,
    links: &[Link],
    base_powers: &[f64],
    l: usize,
    swept: usize,
    rates: &RateSet,
    points: usize,
) -> Result<Vec<(f64, f64)>> {
    let (lo, hi) = topo.bounds(links[swept].origin);
    let mut series = Vec::with_capacity(points);
    let mut powers = base_powers.to_vec();
    for i in 0..points {
        powers[swept] = lo + (hi - lo) * i as f64 / (points - 1) as f64;
        let best = channel::max_goodput(topo, links, &powers, l, rates)?;
        series.push((best.value, best.rate));
    }
    Ok(series)
}

/// A deliberately broken success function: interferer powers enter the
/// coupling term squared. Still positive and decreasing in `p_j`, but
/// concave near zero, so the P.2 convexity probe must flag it. Exists so
/// tests can prove the checker detects a wrong model, not just bless the
/// right one.
pub fn corrupted_success_interferer_squared(
    topo: &NetworkTopology,
    links: &[Link],
    powers: &[f64],
    l: usize,
    mu: f64,
) -> Result<f64> {
    let squared: Vec<f64> = powers.iter().map(|p| p * p).collect();
    let mut warped = squared;
    warped[l] = powers[l];
    channel::success_probability(topo, links, &warped, l, mu)
}

fn check_link_bounds(topo: &NetworkTopology, links: &[Link]) -> Result<()> {
    let powers = vec![1.0; links.len()];
    channel::check_link_system(topo, links, &powers)
}

fn with(powers: &[f64], idx: usize, value: f64) -> Vec<f64> {
    let mut out = powers.to_vec();
    out[idx] = value;
    out
}

fn pick_other<R: Rng + ?Sized>(rng: &mut R, len: usize, taken: &[usize]) -> usize {
    loop {
        let c = rng.random_range(0..len);
        if !taken.contains(&c) {
            return c;
        }
    }
}

/// Four-point increasing-differences probe on `log q` in `(p_l, mu)`.
fn quad_log_diff(
    q: &dyn Fn(&[f64], f64) -> Result<f64>,
    powers: &[f64],
    l: usize,
    dp: f64,
    mu: f64,
    dm: f64,
) -> Result<f64> {
    let hi_p = with(powers, l, powers[l] + dp);
    let a = q(&hi_p, mu + dm)?.ln() - q(powers, mu + dm)?.ln();
    let b = q(&hi_p, mu)?.ln() - q(powers, mu)?.ln();
    Ok(a - b)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_link_system() -> (NetworkTopology, Vec<Link>) {
        let topo = NetworkTopology::new(
            vec![
                vec![0.0, 1.0, 1.0, 1.0],
                vec![1.0, 0.0, 1.0, 1.0],
                vec![1.0, 1.0, 0.0, 1.0],
                vec![1.0, 1.0, 1.0, 0.0],
            ],
            vec![1.0; 4],
            vec![(0.05, 2.0); 4],
        )
        .unwrap();
        (topo, vec![Link::new(0, 2).unwrap(), Link::new(1, 3).unwrap()])
    }

    #[test]
    fn symmetric_pair_passes_all_success_properties() {
        let (topo, links) = two_link_system();
        let reports = check_success_properties(&topo, &links, 1000, 11, DEFAULT_TOLERANCE).unwrap();
        assert_eq!(reports.len(), 5);
        for r in &reports {
            assert_eq!(r.violations, 0, "{} violated, worst margin {}", r.property_id, r.worst_margin);
            assert!(r.samples >= 1000);
        }
    }

    #[test]
    fn three_link_system_exercises_constant_differences() {
        let mut rng = labeled_rng(5, "props-test");
        // Draw until the generator hands us >= 3 links.
        let (topo, links) = loop {
            let sys = random_link_system(&mut rng);
            if sys.1.len() >= 3 {
                break sys;
            }
        };
        let reports = check_success_properties(&topo, &links, 400, 3, DEFAULT_TOLERANCE).unwrap();
        let p5 = &reports[4];
        assert_eq!(p5.property_id, "P5");
        assert_eq!(p5.violations, 0, "worst margin {}", p5.worst_margin);
    }

    #[test]
    fn corrupted_success_function_is_caught_by_convexity_probe() {
        let (topo, links) = two_link_system();
        let reports = check_success_properties_with(
            &topo,
            &links,
            1000,
            11,
            DEFAULT_TOLERANCE,
            &corrupted_success_interferer_squared,
        )
        .unwrap();
        let p2 = reports.iter().find(|r| r.property_id == "P2").unwrap();
        assert!(
            p2.violations > 0,
            "squared interferer power must break P.2 convexity, margin {}",
            p2.worst_margin
        );
    }

    #[test]
    fn goodput_sweeps_pass_on_the_sweep_figure_setup() {
        let (topo, links) = {
            let topo = NetworkTopology::new(
                vec![
                    vec![0.0, 1.0, 1.0, 1.0],
                    vec![1.0, 0.0, 1.0, 1.0],
                    vec![1.0, 1.0, 0.0, 1.0],
                    vec![1.0, 1.0, 1.0, 0.0],
                ],
                vec![1.0; 4],
                vec![(0.1, 20.0); 4],
            )
            .unwrap();
            (topo, vec![Link::new(0, 2).unwrap(), Link::new(1, 3).unwrap()])
        };
        let rates = RateSet::new(vec![0.4, 0.8, 1.2, 1.6, 2.0]).unwrap();
        let reports =
            check_goodput_properties(&topo, &links, &[5.0, 5.0], &rates, 60, DEFAULT_TOLERANCE)
                .unwrap();
        for r in &reports {
            assert_eq!(r.violations, 0, "{} violated, margin {}", r.property_id, r.worst_margin);
        }
    }

    #[test]
    fn rejects_degenerate_requests() {
        let (topo, links) = two_link_system();
        assert!(check_success_properties(&topo, &links[..1], 10, 0, 1e-9).is_err());
        assert!(check_success_properties(&topo, &links, 0, 0, 1e-9).is_err());
        let rates = RateSet::new(vec![0.5]).unwrap();
        assert!(check_goodput_properties(&topo, &links, &[1.0, 1.0], &rates, 5, 1e-9).is_err());
    }
}
