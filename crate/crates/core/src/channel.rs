//! Rayleigh-fading link model: outage success probabilities, goodput, and
//! the closed-form derivatives the pricing and property layers rely on.
//!
//! A slot-long transmission on link `l` at rate `mu` (nats per slot) is
//! decodable when the instantaneous SINR at the receiving node clears the
//! threshold `gamma(mu) = e^mu - 1`. With Rayleigh fading on the desired and
//! on every interfering path, the slot success probability has a closed form:
//!
//! ```text
//! q_l(p, mu) = exp(-sigma2 * gamma / (G_ll * p_l))
//!            * prod_{j != l} 1 / (1 + gamma * G_lj * p_j / (G_ll * p_l))
//! ```
//!
//! where `G_lj` is the average power gain from the transmitter of link `j`
//! to the receiver of link `l` and `sigma2` is the noise power at that
//! receiver. Links sharing a transmitter do not interfere with each other:
//! a scheduled node drives a single outgoing link at a time, so the product
//! runs over links with a distinct origin node. Goodput is `mu * q`, the
//! expected number of nats per slot that survive.

use crate::error::{Error, Result};
use rand::Rng;

/// Static description of the radio network.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkTopology {
    node_count: usize,
    /// Row-major average power gains: `gains[rx * n + tx]` is the gain from
    /// transmitting node `tx` to the receiver input of node `rx`. Diagonal
    /// entries are never read; a node does not jam its own reception.
    gains: Vec<f64>,
    /// Noise power at each node's receiver input, Watt.
    noise: Vec<f64>,
    /// Per-node transmit power interval `[p_min, p_max]`, Watt, `p_min > 0`.
    power_bounds: Vec<(f64, f64)>,
}

impl NetworkTopology {
    pub fn new(
        gains: Vec<Vec<f64>>,
        noise: Vec<f64>,
        power_bounds: Vec<(f64, f64)>,
    ) -> Result<Self> {
        let n = gains.len();
        if n < 2 {
            return Err(Error::InvalidModel(format!(
                "a network needs at least 2 nodes, got {n}"
            )));
        }
        let mut flat = Vec::with_capacity(n * n);
        for (rx, row) in gains.iter().enumerate() {
            if row.len() != n {
                return Err(Error::InvalidModel(format!(
                    "gain matrix must be square: row {rx} has {} entries, expected {n}",
                    row.len()
                )));
            }
            for (tx, &g) in row.iter().enumerate() {
                if !g.is_finite() || g < 0.0 {
                    return Err(Error::InvalidModel(format!(
                        "gain[{rx}][{tx}] must be finite and >= 0, got {g}"
                    )));
                }
            }
            flat.extend_from_slice(row);
        }
        if noise.len() != n {
            return Err(Error::InvalidModel(format!(
                "noise vector has {} entries, expected {n}",
                noise.len()
            )));
        }
        for (i, &s) in noise.iter().enumerate() {
            if !s.is_finite() || s < 0.0 {
                return Err(Error::InvalidModel(format!(
                    "noise[{i}] must be finite and >= 0, got {s}"
                )));
            }
        }
        if power_bounds.len() != n {
            return Err(Error::InvalidModel(format!(
                "power bounds have {} entries, expected {n}",
                power_bounds.len()
            )));
        }
        for (i, &(lo, hi)) in power_bounds.iter().enumerate() {
            if !(lo.is_finite() && hi.is_finite() && lo > 0.0 && lo <= hi) {
                return Err(Error::InvalidModel(format!(
                    "power bounds for node {i} must satisfy 0 < min <= max, got [{lo}, {hi}]"
                )));
            }
        }
        Ok(Self { node_count: n, gains: flat, noise, power_bounds })
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    /// Average power gain from transmitter `tx` to the receiver of node `rx`.
    pub fn gain(&self, rx: usize, tx: usize) -> f64 {
        self.gains[rx * self.node_count + tx]
    }

    pub fn noise_at(&self, node: usize) -> f64 {
        self.noise[node]
    }

    /// `[p_min, p_max]` for `node`.
    pub fn bounds(&self, node: usize) -> (f64, f64) {
        self.power_bounds[node]
    }

    /// Validate a node id, naming the offending field in the error.
    pub fn check_node(&self, node: usize, what: &str) -> Result<()> {
        if node >= self.node_count {
            return Err(Error::InvalidInput(format!(
                "{what} refers to node {node}, but the network has {} nodes",
                self.node_count
            )));
        }
        Ok(())
    }
}

/// One directed transmission `origin -> end` between distinct nodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Link {
    pub origin: usize,
    pub end: usize,
}

impl Link {
    pub fn new(origin: usize, end: usize) -> Result<Self> {
        if origin == end {
            return Err(Error::InvalidModel(format!(
                "link origin and end must differ, got {origin} -> {end}"
            )));
        }
        Ok(Self { origin, end })
    }
}

/// Validate that `links` and `powers` describe a usable link system on
/// `topo`: nodes in range, distinct endpoints, one power per link, powers
/// finite and non-negative.
pub fn check_link_system(topo: &NetworkTopology, links: &[Link], powers: &[f64]) -> Result<()> {
    if links.is_empty() {
        return Err(Error::InvalidInput("link system is empty".into()));
    }
    if powers.len() != links.len() {
        return Err(Error::InvalidInput(format!(
            "{} powers for {} links",
            powers.len(),
            links.len()
        )));
    }
    for (i, link) in links.iter().enumerate() {
        topo.check_node(link.origin, &format!("link {i} origin"))?;
        topo.check_node(link.end, &format!("link {i} end"))?;
        if link.origin == link.end {
            return Err(Error::InvalidInput(format!("link {i} is a self-loop")));
        }
        if !powers[i].is_finite() || powers[i] < 0.0 {
            return Err(Error::InvalidInput(format!(
                "power of link {i} must be finite and >= 0, got {}",
                powers[i]
            )));
        }
    }
    Ok(())
}

/// Transmit powers for a set of active links, checked against the per-node
/// budget: the powers of all links leaving node `n` may not exceed that
/// node's upper power bound in total.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerAllocation {
    powers: Vec<f64>,
}

impl PowerAllocation {
    pub fn new(topo: &NetworkTopology, links: &[Link], powers: Vec<f64>) -> Result<Self> {
        check_link_system(topo, links, &powers)?;
        for node in 0..topo.node_count() {
            let total: f64 = links
                .iter()
                .zip(&powers)
                .filter(|(l, _)| l.origin == node)
                .map(|(_, &p)| p)
                .sum();
            let (_, hi) = topo.bounds(node);
            // Tiny slack so grids that land exactly on the budget survive
            // float round-off.
            if total > hi * (1.0 + 1e-12) {
                return Err(Error::InvalidInput(format!(
                    "links leaving node {node} use {total} W total, budget is {hi} W"
                )));
            }
        }
        Ok(Self { powers })
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.powers
    }
}

impl std::ops::Deref for PowerAllocation {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.powers
    }
}

/// The finite menu of rates a scheduler may pick from, strictly ascending,
/// nats per slot.
#[derive(Debug, Clone, PartialEq)]
pub struct RateSet {
    rates: Vec<f64>,
}

impl RateSet {
    pub fn new(rates: Vec<f64>) -> Result<Self> {
        if rates.is_empty() {
            return Err(Error::InvalidModel("rate set is empty".into()));
        }
        for (i, &r) in rates.iter().enumerate() {
            if !r.is_finite() || r <= 0.0 {
                return Err(Error::InvalidModel(format!(
                    "rate[{i}] must be finite and > 0, got {r}"
                )));
            }
            if i > 0 && r <= rates[i - 1] {
                return Err(Error::InvalidModel(format!(
                    "rates must be strictly ascending, rate[{i}] = {r} after {}",
                    rates[i - 1]
                )));
            }
        }
        Ok(Self { rates })
    }

    pub fn rates(&self) -> &[f64] {
        &self.rates
    }

    /// Largest rate on the menu; the error-free goodput ceiling per link.
    pub fn max_rate(&self) -> f64 {
        *self.rates.last().unwrap()
    }
}

/// SINR threshold `gamma(mu) = e^mu - 1` a rate-`mu` slot must clear.
pub fn sinr_threshold(mu: f64) -> f64 {
    mu.exp() - 1.0
}

fn check_rate(mu: f64) -> Result<()> {
    if !mu.is_finite() || mu < 0.0 {
        return Err(Error::InvalidInput(format!(
            "rate must be finite and >= 0 nats/slot, got {mu}"
        )));
    }
    Ok(())
}

/// Direct gain and transmit power of link `l`, with the checks shared by
/// every evaluation path.
fn own_terms(
    topo: &NetworkTopology,
    links: &[Link],
    powers: &[f64],
    l: usize,
) -> Result<(Link, f64, f64)> {
    check_link_system(topo, links, powers)?;
    if l >= links.len() {
        return Err(Error::InvalidInput(format!(
            "link index {l} out of range for {} links",
            links.len()
        )));
    }
    let link = links[l];
    let g_ll = topo.gain(link.end, link.origin);
    if g_ll <= 0.0 {
        return Err(Error::InvalidInput(format!(
            "link {} -> {} has no direct gain",
            link.origin, link.end
        )));
    }
    let p_l = powers[l];
    if p_l <= 0.0 {
        return Err(Error::InvalidInput(format!(
            "link {} -> {} has zero transmit power; success probability is undefined",
            link.origin, link.end
        )));
    }
    Ok((link, g_ll, p_l))
}

/// `log q_l(p, mu)`. Exact even where `q` itself would underflow, which the
/// pricing layer relies on when it forms success-probability ratios.
pub fn log_success_probability(
    topo: &NetworkTopology,
    links: &[Link],
    powers: &[f64],
    l: usize,
    mu: f64,
) -> Result<f64> {
    check_rate(mu)?;
    let (link, g_ll, p_l) = own_terms(topo, links, powers, l)?;
    let gamma = sinr_threshold(mu);
    let den = g_ll * p_l;
    let mut log_q = -topo.noise_at(link.end) * gamma / den;
    for (j, other) in links.iter().enumerate() {
        if j == l || other.origin == link.origin {
            continue;
        }
        let t = gamma * topo.gain(link.end, other.origin) * powers[j] / den;
        log_q -= t.ln_1p();
    }
    Ok(log_q)
}

/// Probability that one slot on link `l` at rate `mu` is decoded, given the
/// whole power vector. Strictly inside `(0, 1]`.
pub fn success_probability(
    topo: &NetworkTopology,
    links: &[Link],
    powers: &[f64],
    l: usize,
    mu: f64,
) -> Result<f64> {
    Ok(log_success_probability(topo, links, powers, l, mu)?.exp())
}

/// Success probability from a measured aggregate: the transmitter only
/// knows the interference power `interference` seen at its receiver, not
/// who causes it, so the interference is folded into the noise term:
///
/// ```text
/// q = exp(-(interference + noise) * gamma / (gain * power))
/// ```
///
/// Coincides with [`success_probability`] when no interferer is active.
pub fn success_probability_measured(
    power: f64,
    gain: f64,
    interference: f64,
    noise: f64,
    mu: f64,
) -> Result<f64> {
    check_rate(mu)?;
    if !(power > 0.0 && power.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "transmit power must be finite and > 0, got {power}"
        )));
    }
    if !(gain > 0.0 && gain.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "direct gain must be finite and > 0, got {gain}"
        )));
    }
    if !(interference >= 0.0 && interference.is_finite()) || !(noise >= 0.0 && noise.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "interference and noise must be finite and >= 0, got {interference} and {noise}"
        )));
    }
    Ok((-(interference + noise) * sinr_threshold(mu) / (gain * power)).exp())
}

/// Expected decoded nats per slot: `mu * q_l(p, mu)`.
pub fn goodput(
    topo: &NetworkTopology,
    links: &[Link],
    powers: &[f64],
    l: usize,
    mu: f64,
) -> Result<f64> {
    Ok(mu * success_probability(topo, links, powers, l, mu)?)
}

/// A maximized goodput value together with the menu rate that achieves it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaxGoodput {
    pub value: f64,
    pub rate: f64,
}

/// Best goodput link `l` can get from the rate menu at fixed powers:
/// `max_{mu in rates} mu * q_l(p, mu)`. Ties go to the smallest maximizing
/// rate, so equal goodput never buys extra decoding risk.
pub fn max_goodput(
    topo: &NetworkTopology,
    links: &[Link],
    powers: &[f64],
    l: usize,
    rates: &RateSet,
) -> Result<MaxGoodput> {
    let mut best: Option<MaxGoodput> = None;
    for &mu in rates.rates() {
        let value = goodput(topo, links, powers, l, mu)?;
        match best {
            // Strict improvement only: the menu ascends, so the first
            // maximizer seen is the smallest one.
            Some(b) if value <= b.value => {}
            _ => best = Some(MaxGoodput { value, rate: mu }),
        }
    }
    Ok(best.unwrap())
}

/// Closed-form first and second derivatives of `q_l` at one operating point.
///
/// Entries of the per-link vectors are indexed like `links`; the slot of
/// link `l` itself and of links sharing its transmitter hold 0 (those
/// powers do not enter `q_l` as interference).
#[derive(Debug, Clone, PartialEq)]
pub struct LinkDerivatives {
    /// `dq/dp_l  >= 0`: own power helps.
    pub dq_dpl: f64,
    /// `dq/dp_j  <= 0` per interfering link: their power hurts.
    pub dq_dpj: Vec<f64>,
    /// `dq/dmu   <= 0`: faster slots fail more.
    pub dq_dmu: f64,
    /// `d(log q)/dp_l`, kept alongside because payoff maximization works on
    /// the log and must not lose it to underflow of `q`.
    pub dlogq_dpl: f64,
    /// `d2(log q)/dp_l^2  <= 0`: log-concavity in own power.
    pub d2logq_dpl2: f64,
    /// `d2(log q)/dp_l dp_j >= 0` per interfering link.
    pub d2logq_dpl_dpj: Vec<f64>,
}

/// Evaluate all closed-form derivatives of `q_l(p, mu)`.
///
/// With `t_j = gamma * G_lj * p_j / (G_ll * p_l)` and `a = sigma2 * gamma /
/// (G_ll * p_l)`:
///
/// ```text
/// dq/dp_l          =  q * [ a/p_l + sum_j t_j / (p_l (1 + t_j)) ]
/// dq/dp_j          = -q / (G_ll p_l / (gamma G_lj) + p_j)
/// dq/dmu           = -q * [ sigma2 e^mu/(G_ll p_l)
///                           + sum_j e^mu G_lj p_j/(G_ll p_l + gamma G_lj p_j) ]
/// d2logq/dp_l^2    = -2a/p_l^2 - sum_j t_j (t_j + 2) / (p_l (1 + t_j))^2
/// d2logq/dp_l dp_j =  (G_ll/(gamma G_lj)) / (G_ll p_l/(gamma G_lj) + p_j)^2
/// ```
///
/// Mixed second differences of `log q` in two interferer powers are
/// identically zero: `log q` separates into one term per interferer.
pub fn derivatives(
    topo: &NetworkTopology,
    links: &[Link],
    powers: &[f64],
    l: usize,
    mu: f64,
) -> Result<LinkDerivatives> {
    check_rate(mu)?;
    let (link, g_ll, p_l) = own_terms(topo, links, powers, l)?;
    let gamma = sinr_threshold(mu);
    let e_mu = mu.exp();
    let sigma2 = topo.noise_at(link.end);
    let den = g_ll * p_l;
    let q = success_probability(topo, links, powers, l, mu)?;

    let mut sum_own = sigma2 * gamma / (den * p_l);
    let mut sum_mu = sigma2 * e_mu / den;
    let mut d2_own = -2.0 * sigma2 * gamma / (den * p_l * p_l);
    let mut dq_dpj = vec![0.0; links.len()];
    let mut d2_cross = vec![0.0; links.len()];

    for (j, other) in links.iter().enumerate() {
        if j == l || other.origin == link.origin {
            continue;
        }
        let g_lj = topo.gain(link.end, other.origin);
        let p_j = powers[j];
        let t = gamma * g_lj * p_j / den;
        sum_own += t / (p_l * (1.0 + t));
        sum_mu += e_mu * g_lj * p_j / (den + gamma * g_lj * p_j);
        d2_own -= t * (t + 2.0) / (p_l * (1.0 + t)).powi(2);
        if gamma > 0.0 && g_lj > 0.0 {
            dq_dpj[j] = -q / (den / (gamma * g_lj) + p_j);
            let c = g_ll / (gamma * g_lj);
            d2_cross[j] = c / (c * p_l + p_j).powi(2);
        }
    }

    Ok(LinkDerivatives {
        dq_dpl: q * sum_own,
        dq_dpj,
        dq_dmu: -q * sum_mu,
        dlogq_dpl: sum_own,
        d2logq_dpl2: d2_own,
        d2logq_dpl_dpj: d2_cross,
    })
}

/// Draw one slot outcome: `true` with probability `q`.
pub fn sample_transmission<R: Rng + ?Sized>(q: f64, rng: &mut R) -> Result<bool> {
    if !(0.0..=1.0).contains(&q) {
        return Err(Error::InvalidInput(format!(
            "success probability must lie in [0, 1], got {q}"
        )));
    }
    Ok(rng.random::<f64>() < q)
}
