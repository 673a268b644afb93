//! Achievable goodput regions under randomized dropping.
//!
//! Each link carries a continuation probability `delta_l`: after a failed
//! slot the packet is kept for retransmission with probability `delta_l`
//! and dropped with probability `1 - delta_l`. Dropped packets still leave
//! the queue, so the per-link drain rate at scheduled rate `mu` and
//! success probability `q` is
//!
//! ```text
//! mu * (1 - delta * (1 - q))
//! ```
//!
//! At `delta = 1` (never drop) this is the plain goodput `mu * q`; at
//! `delta = 0` (always drop) every scheduled packet leaves one way or the
//! other and the region inflates to the box `[0, mu_max]^L`.
//!
//! The region is sampled by brute force: on a grid of feasible power
//! vectors, each link contributes its best drain rate over the rate menu.
//! The sampled cloud is closed downward (a link may always serve less)
//! and, for two links, convexified by time sharing.

use crate::channel::{self, Link, MaxGoodput, NetworkTopology, RateSet};
use crate::error::{Error, Result};

/// Default slack, in goodput units, for point-in-region tests.
pub const DEFAULT_CONTAINS_TOL: f64 = 1e-9;

/// Fewest grid points per power axis a region enumeration accepts.
pub const MIN_REGION_GRID: usize = 20;

/// Per-link probability that a failed packet is retained for
/// retransmission. The dropping probability is `1 - delta_l`.
#[derive(Debug, Clone, PartialEq)]
pub struct DroppingProfile {
    deltas: Vec<f64>,
}

impl DroppingProfile {
    pub fn new(deltas: Vec<f64>) -> Result<Self> {
        if deltas.is_empty() {
            return Err(Error::InvalidInput("dropping profile must cover at least one link".into()));
        }
        for (l, &d) in deltas.iter().enumerate() {
            if !d.is_finite() || !(0.0..=1.0).contains(&d) {
                return Err(Error::InvalidInput(format!(
                    "continuation probability for link {l} must lie in [0, 1], got {d}"
                )));
            }
        }
        Ok(DroppingProfile { deltas })
    }

    /// Same continuation probability on every link.
    pub fn uniform(delta: f64, links: usize) -> Result<Self> {
        if links == 0 {
            return Err(Error::InvalidInput("dropping profile must cover at least one link".into()));
        }
        DroppingProfile::new(vec![delta; links])
    }

    pub fn len(&self) -> usize {
        self.deltas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.deltas.is_empty()
    }

    pub fn delta(&self, link: usize) -> f64 {
        self.deltas[link]
    }

    pub fn deltas(&self) -> &[f64] {
        &self.deltas
    }

    /// Drain rate of link `link` at scheduled rate `mu` with success
    /// probability `q`.
    pub fn drain_rate(&self, link: usize, mu: f64, q: f64) -> f64 {
        mu * (1.0 - self.deltas[link] * (1.0 - q))
    }
}

/// How transmit powers are enumerated for the region scatter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PowerGrid {
    /// Independent uniform grids over each transmitter's power interval.
    Box { points_per_axis: usize },
    /// Two-link splits `(p, total - p)` of a shared power budget, for
    /// co-located transmitters fed by one amplifier.
    Simplex { total: f64, points_per_axis: usize },
}

impl PowerGrid {
    pub fn points_per_axis(&self) -> usize {
        match *self {
            PowerGrid::Box { points_per_axis } | PowerGrid::Simplex { points_per_axis, .. } => {
                points_per_axis
            }
        }
    }

    /// Enumerate the grid's power vectors for the given links.
    pub fn points(&self, topo: &NetworkTopology, links: &[Link]) -> Result<Vec<Vec<f64>>> {
        let n = self.points_per_axis();
        if n < 2 {
            return Err(Error::InvalidInput("power grids need at least 2 points per axis".into()));
        }
        match *self {
            PowerGrid::Box { .. } => {
                let total = n.checked_pow(links.len() as u32).filter(|&t| t <= 10_000_000);
                let Some(total) = total else {
                    return Err(Error::InvalidInput(format!(
                        "box grid of {n} points per axis over {} links is too large",
                        links.len()
                    )));
                };
                let axes: Vec<(f64, f64)> =
                    links.iter().map(|link| topo.bounds(link.origin)).collect();
                let mut pts = Vec::with_capacity(total);
                let mut idx = vec![0usize; links.len()];
                loop {
                    pts.push(
                        idx.iter()
                            .zip(&axes)
                            .map(|(&i, &(lo, hi))| lerp(lo, hi, i, n))
                            .collect(),
                    );
                    let mut axis = links.len();
                    loop {
                        if axis == 0 {
                            return Ok(pts);
                        }
                        axis -= 1;
                        idx[axis] += 1;
                        if idx[axis] < n {
                            break;
                        }
                        idx[axis] = 0;
                    }
                }
            }
            PowerGrid::Simplex { total, .. } => {
                if links.len() != 2 {
                    return Err(Error::InvalidInput(
                        "simplex power grids are defined for exactly 2 links".into(),
                    ));
                }
                if !(total.is_finite() && total > 0.0) {
                    return Err(Error::InvalidInput(format!(
                        "simplex power budget must be positive, got {total}"
                    )));
                }
                Ok((0..n)
                    .map(|i| {
                        let p0 = lerp(0.0, total, i, n);
                        vec![p0, total - p0]
                    })
                    .collect())
            }
        }
    }
}

fn lerp(lo: f64, hi: f64, i: usize, n: usize) -> f64 {
    lo + (hi - lo) * i as f64 / (n - 1) as f64
}

/// One sampled vector of per-link drain rates.
#[derive(Debug, Clone, PartialEq)]
pub struct GoodputPoint {
    pub g: Vec<f64>,
}

/// Sampled region plus, for two links, its convex hull.
#[derive(Debug, Clone, PartialEq)]
pub struct GoodputRegion {
    /// Continuation probability per link used for the enumeration.
    pub deltas: Vec<f64>,
    pub raw_points: Vec<GoodputPoint>,
    /// Counterclockwise hull of the downward-closed scatter, starting at
    /// the origin. Present only for two-link regions.
    pub hull: Option<Vec<[f64; 2]>>,
}

impl GoodputRegion {
    /// Whether a goodput pair lies in the hull, up to a slack of `tol` in
    /// Euclidean distance from the boundary. Errors when no hull was
    /// computed (more than two links).
    pub fn contains(&self, point: [f64; 2], tol: f64) -> Result<bool> {
        let hull = self.hull.as_ref().ok_or_else(|| {
            Error::InvalidInput("region has no hull; only 2-link regions are convexified".into())
        })?;
        Ok(hull_contains(hull, point, tol))
    }

    /// Membership by dominance for regions of any dimension: the point is
    /// inside if some raw sample weakly dominates it componentwise.
    pub fn contains_dominated(&self, point: &[f64], tol: f64) -> bool {
        self.raw_points.iter().any(|rp| {
            rp.g.len() == point.len() && rp.g.iter().zip(point).all(|(&g, &x)| x <= g + tol)
        })
    }

    /// Whether this region's hull sits inside `other`'s. Both hulls are
    /// convex, so testing vertices suffices.
    pub fn is_subset_of(&self, other: &GoodputRegion, tol: f64) -> Result<bool> {
        let hull = self.hull.as_ref().ok_or_else(|| {
            Error::InvalidInput("region has no hull; only 2-link regions are convexified".into())
        })?;
        for &v in hull {
            if !other.contains(v, tol)? {
                return Ok(false);
            }
        }
        Ok(true)
    }
}

fn hull_contains(hull: &[[f64; 2]], point: [f64; 2], tol: f64) -> bool {
    match hull.len() {
        0 => false,
        1 => dist(point, hull[0]) <= tol,
        2 => dist_to_segment(point, hull[0], hull[1]) <= tol,
        _ => hull.iter().zip(hull.iter().cycle().skip(1)).all(|(&a, &b)| {
            let len = dist(a, b).max(f64::MIN_POSITIVE);
            cross(a, b, point) >= -tol * len
        }),
    }
}

/// Best drain rate of link `l` over the rate menu under the profile. A
/// silent link (`p_l = 0`) never succeeds but still drains dropped
/// packets, so `q = 0` rather than an error. Ties keep the smallest rate.
pub fn max_dropping_goodput(
    topo: &NetworkTopology,
    links: &[Link],
    powers: &[f64],
    l: usize,
    rates: &RateSet,
    profile: &DroppingProfile,
) -> Result<MaxGoodput> {
    if profile.len() != links.len() {
        return Err(Error::InvalidInput(format!(
            "dropping profile covers {} links, system has {}",
            profile.len(),
            links.len()
        )));
    }
    let mut best: Option<MaxGoodput> = None;
    for &mu in rates.rates() {
        let q = if powers[l] > 0.0 {
            channel::success_probability(topo, links, powers, l, mu)?
        } else {
            0.0
        };
        let value = profile.drain_rate(l, mu, q);
        if best.as_ref().is_none_or(|b| value > b.value) {
            best = Some(MaxGoodput { value, rate: mu });
        }
    }
    Ok(best.expect("rate menus are never empty"))
}

/// Enumerate the achievable drain-rate region over a power grid: one raw
/// point per grid vector, each link at its menu-optimal rate. Requires at
/// least [`MIN_REGION_GRID`] points per power axis.
pub fn enumerate_region(
    topo: &NetworkTopology,
    links: &[Link],
    rates: &RateSet,
    grid: &PowerGrid,
    profile: &DroppingProfile,
) -> Result<GoodputRegion> {
    if links.is_empty() {
        return Err(Error::InvalidInput("region enumeration needs at least one link".into()));
    }
    if profile.len() != links.len() {
        return Err(Error::InvalidInput(format!(
            "dropping profile covers {} links, system has {}",
            profile.len(),
            links.len()
        )));
    }
    if grid.points_per_axis() < MIN_REGION_GRID {
        return Err(Error::InvalidInput(format!(
            "region grids need >= {MIN_REGION_GRID} points per axis, got {}",
            grid.points_per_axis()
        )));
    }
    for (i, link) in links.iter().enumerate() {
        topo.check_node(link.origin, &format!("link {i} origin"))?;
        topo.check_node(link.end, &format!("link {i} end"))?;
    }
    let mut raw_points = Vec::new();
    for powers in grid.points(topo, links)? {
        let g = (0..links.len())
            .map(|l| Ok(max_dropping_goodput(topo, links, &powers, l, rates, profile)?.value))
            .collect::<Result<Vec<f64>>>()?;
        raw_points.push(GoodputPoint { g });
    }
    let hull = (links.len() == 2)
        .then(|| convex_hull_2d(&raw_points.iter().map(|p| [p.g[0], p.g[1]]).collect::<Vec<_>>()));
    Ok(GoodputRegion { deltas: profile.deltas().to_vec(), raw_points, hull })
}

/// Convex hull of a planar cloud closed downward: the origin and the axis
/// projections of every point are feasible by serving less, so they are
/// added before hulling. Returns the counterclockwise vertex cycle
/// starting at the lexicographically smallest point, strict corners only.
pub fn convex_hull_2d(points: &[[f64; 2]]) -> Vec<[f64; 2]> {
    let mut cloud = Vec::with_capacity(3 * points.len() + 1);
    cloud.push([0.0, 0.0]);
    for &[x, y] in points {
        cloud.push([x, y]);
        cloud.push([x, 0.0]);
        cloud.push([0.0, y]);
    }
    monotone_chain(cloud)
}

/// Andrew's monotone chain; collinear interior points are dropped.
fn monotone_chain(mut pts: Vec<[f64; 2]>) -> Vec<[f64; 2]> {
    pts.sort_by(|a, b| a.partial_cmp(b).expect("goodputs are finite"));
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let mut lower: Vec<[f64; 2]> = Vec::new();
    for &p in &pts {
        while lower.len() >= 2 && cross(lower[lower.len() - 2], lower[lower.len() - 1], p) <= 0.0 {
            lower.pop();
        }
        lower.push(p);
    }
    let mut upper: Vec<[f64; 2]> = Vec::new();
    for &p in pts.iter().rev() {
        while upper.len() >= 2 && cross(upper[upper.len() - 2], upper[upper.len() - 1], p) <= 0.0 {
            upper.pop();
        }
        upper.push(p);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    lower
}

fn cross(a: [f64; 2], b: [f64; 2], p: [f64; 2]) -> f64 {
    (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0])
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

fn dist_to_segment(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    let len2 = dist(a, b).powi(2);
    if len2 == 0.0 {
        return dist(p, a);
    }
    let t = (((p[0] - a[0]) * (b[0] - a[0]) + (p[1] - a[1]) * (b[1] - a[1])) / len2).clamp(0.0, 1.0);
    dist(p, [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])])
}
