//! Randomized invariant checks with shrinking, covering the success
//! model, retention drain rates, hull construction, and menu
//! maximization on arbitrary two-link systems.

use goodput::channel::{self, Link, NetworkTopology, RateSet};
use goodput::region::{convex_hull_2d, DroppingProfile};
use proptest::prelude::*;

/// Two interfering links 0 -> 2 and 1 -> 3 with the given direct and
/// cross gains and receiver noise levels.
fn pair_system(
    direct: (f64, f64),
    cross: (f64, f64),
    noise: (f64, f64),
) -> (NetworkTopology, Vec<Link>) {
    let gains = vec![
        vec![0.0, 0.0, 0.0, 0.0],
        vec![0.0, 0.0, 0.0, 0.0],
        vec![direct.0, cross.0, 0.0, 0.0],
        vec![cross.1, direct.1, 0.0, 0.0],
    ];
    let topo = NetworkTopology::new(
        gains,
        vec![1.0, 1.0, noise.0, noise.1],
        vec![(0.05, 20.0); 4],
    )
    .unwrap();
    let links = vec![Link::new(0, 2).unwrap(), Link::new(1, 3).unwrap()];
    (topo, links)
}

proptest! {
    #![proptest_config(ProptestConfig {
        failure_persistence: None,
        ..ProptestConfig::default()
    })]

    #[test]
    fn success_probability_bounded_and_monotone(
        direct in (0.5f64..2.0, 0.5f64..2.0),
        cross in (0.0f64..0.8, 0.0f64..0.8),
        noise in (0.2f64..1.5, 0.2f64..1.5),
        powers in (0.5f64..5.0, 0.5f64..5.0),
        mu in 0.1f64..2.5,
    ) {
        let (topo, links) = pair_system(direct, cross, noise);
        let p = vec![powers.0, powers.1];
        let q = channel::success_probability(&topo, &links, &p, 0, mu).unwrap();
        prop_assert!(q > 0.0 && q <= 1.0, "q = {q}");

        // More own power always helps; noise is positive, so strictly.
        let p_up = vec![powers.0 * 1.2, powers.1];
        let q_up = channel::success_probability(&topo, &links, &p_up, 0, mu).unwrap();
        prop_assert!(q_up > q, "own-power bump lowered q: {q_up} < {q}");

        // More interference never helps, and hurts whenever the cross
        // gain is nonzero.
        let p_jam = vec![powers.0, powers.1 * 1.3];
        let q_jam = channel::success_probability(&topo, &links, &p_jam, 0, mu).unwrap();
        prop_assert!(q_jam <= q, "interference bump raised q: {q_jam} > {q}");
        if cross.0 > 1e-9 {
            prop_assert!(q_jam < q);
        }

        // A faster rate is harder to decode at fixed power.
        let q_fast = channel::success_probability(&topo, &links, &p, 0, mu + 0.1).unwrap();
        prop_assert!(q_fast < q);
    }

    #[test]
    fn drain_rate_interpolates_between_goodput_extremes(
        delta in 0.0f64..=1.0,
        mu in 0.1f64..3.0,
        q in 0.01f64..=1.0,
    ) {
        let profile = DroppingProfile::uniform(delta, 1).unwrap();
        let drain = profile.drain_rate(0, mu, q);
        prop_assert!(drain >= mu * q - 1e-12, "drain {drain} below goodput {}", mu * q);
        prop_assert!(drain <= mu + 1e-12, "drain {drain} above raw rate {mu}");

        // Retaining every failed packet drains at exactly the scheduled
        // rate; dropping every one drains at the goodput.
        let keep_all = DroppingProfile::uniform(0.0, 1).unwrap();
        prop_assert_eq!(keep_all.drain_rate(0, mu, q), mu);
        let drop_all = DroppingProfile::uniform(1.0, 1).unwrap();
        prop_assert!((drop_all.drain_rate(0, mu, q) - mu * q).abs() <= 1e-12);

        // Dropping more aggressively never raises the drain rate.
        let milder = DroppingProfile::uniform(delta * 0.5, 1).unwrap();
        prop_assert!(milder.drain_rate(0, mu, q) >= drain - 1e-15);
    }

    #[test]
    fn convex_hull_contains_every_input_point(
        points in prop::collection::vec((0.01f64..3.0, 0.01f64..3.0), 1..40),
    ) {
        let cloud: Vec<[f64; 2]> = points.iter().map(|&(x, y)| [x, y]).collect();
        let hull = convex_hull_2d(&cloud);
        // The hull always folds in the origin and both axis projections,
        // so positive inputs give a polygon with real area.
        prop_assert!(hull.len() >= 3, "degenerate hull: {hull:?}");

        // Orientation-agnostic containment: every cross product against
        // the polygon edges must carry the polygon's own turning sign.
        let area: f64 = hull
            .iter()
            .zip(hull.iter().cycle().skip(1))
            .map(|(a, b)| a[0] * b[1] - b[0] * a[1])
            .sum();
        let orient = area.signum();
        for &[x, y] in &cloud {
            for (a, b) in hull.iter().zip(hull.iter().cycle().skip(1)) {
                let cross = (b[0] - a[0]) * (y - a[1]) - (b[1] - a[1]) * (x - a[0]);
                prop_assert!(
                    cross * orient >= -1e-9,
                    "point ({x}, {y}) outside hull edge {a:?} -> {b:?}"
                );
            }
        }
    }

    #[test]
    fn menu_maximization_matches_a_manual_scan(
        direct in (0.5f64..2.0, 0.5f64..2.0),
        cross in (0.0f64..0.8, 0.0f64..0.8),
        noise in (0.2f64..1.5, 0.2f64..1.5),
        powers in (0.5f64..5.0, 0.5f64..5.0),
        start in 0.1f64..0.5,
        step in 0.1f64..0.5,
        count in 2usize..8,
    ) {
        let (topo, links) = pair_system(direct, cross, noise);
        let p = vec![powers.0, powers.1];
        let menu: Vec<f64> = (0..count).map(|i| start + step * i as f64).collect();
        let rates = RateSet::new(menu.clone()).unwrap();

        let best = channel::max_goodput(&topo, &links, &p, 0, &rates).unwrap();
        let mut expect_value = f64::NEG_INFINITY;
        let mut expect_rate = 0.0;
        for &mu in &menu {
            let g = channel::goodput(&topo, &links, &p, 0, mu).unwrap();
            if g > expect_value {
                expect_value = g;
                expect_rate = mu;
            }
        }
        prop_assert_eq!(best.value, expect_value);
        prop_assert_eq!(best.rate, expect_rate);
        prop_assert!(best.value <= rates.max_rate());
    }
}
