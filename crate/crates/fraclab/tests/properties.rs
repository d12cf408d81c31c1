//! Randomized structural properties: invariants that must hold for every
//! admissible input, checked with proptest-generated cases.

use proptest::prelude::*;

use fraclab::graph::{
    build_compact, graph_from_json, graph_to_json, BuildOptions, FractalFamily,
};
use fraclab::resistance::two_point_resistance;
use fraclab::scaling::{phi, psi, psi_inv, upsilon, ScalingExponents};

fn exps_strategy() -> impl Strategy<Value = ScalingExponents> {
    // admissible range: alpha < beta, 2 <= beta <= alpha + 1 on each branch
    (1.05f64..3.0, 1.05f64..3.0)
        .prop_flat_map(|(a1, a2)| {
            let lo1 = a1.max(2.0) + 0.002;
            let lo2 = a2.max(2.0) + 0.002;
            (Just(a1), Just(a2), lo1..(a1 + 0.99), lo2..(a2 + 0.99))
        })
        .prop_map(|(a1, a2, b1, b2)| ScalingExponents::new(a1, a2, b1, b2).unwrap())
}

proptest! {
    #[test]
    fn psi_inverts_psi(exps in exps_strategy(), r in 1e-6f64..1e6) {
        let t = psi(&exps, r).unwrap();
        let back = psi_inv(&exps, t).unwrap();
        prop_assert!((back - r).abs() <= 1e-9 * r, "{back} vs {r}");
    }

    #[test]
    fn phi_psi_monotone_and_ordered(
        exps in exps_strategy(),
        r in 1e-6f64..1e6,
        factor in 1.01f64..10.0,
    ) {
        let (p1, p2) = (phi(&exps, r).unwrap(), phi(&exps, r * factor).unwrap());
        let (q1, q2) = (psi(&exps, r).unwrap(), psi(&exps, r * factor).unwrap());
        prop_assert!(p2 > p1 && q2 > q1);
        // beta > alpha on both branches, so Psi/Phi grows with r
        prop_assert!(q2 / p2 > q1 / p1);
    }

    #[test]
    fn upsilon_monotone_in_arguments(
        exps in exps_strategy(),
        big_r in 0.01f64..100.0,
        t in 0.01f64..100.0,
        bump in 1.01f64..4.0,
    ) {
        let base = upsilon(&exps, big_r, t).unwrap();
        prop_assert!(upsilon(&exps, big_r * bump, t).unwrap() >= base - 1e-12);
        prop_assert!(upsilon(&exps, big_r, t * bump).unwrap() <= base + 1e-12);
    }

    #[test]
    fn resistance_respects_conductance_scaling(
        level in 1u32..4,
        edge_seed in any::<u32>(),
        scale in 0.2f64..5.0,
    ) {
        // R is symmetric, and scaling every conductance by c divides R by c
        let g = build_compact(FractalFamily::Gasket, level, &BuildOptions::default()).unwrap();
        let x = 0;
        let y = g.vertex_count() - 1;
        let r = two_point_resistance(&g, x, y).unwrap();
        prop_assert!(r > 0.0);
        let r_rev = two_point_resistance(&g, y, x).unwrap();
        prop_assert!((r - r_rev).abs() <= 1e-12 * r);

        let mut scaled = g.clone();
        for e in 0..g.edge_count() {
            scaled = scaled.with_conductance(e, g.edges()[e].c * scale).unwrap();
        }
        let r_scaled = two_point_resistance(&scaled, x, y).unwrap();
        prop_assert!((r_scaled * scale - r).abs() <= 1e-9 * r);

        // a single random edge bump can only lower (or keep) the resistance
        let e = (edge_seed as usize) % g.edge_count();
        let bumped = g.with_conductance(e, g.edges()[e].c * 3.0).unwrap();
        let r_bumped = two_point_resistance(&bumped, x, y).unwrap();
        prop_assert!(r_bumped <= r * (1.0 + 1e-12));
    }

    #[test]
    fn graph_json_round_trips(level in 0u32..4, family_idx in 0usize..4) {
        let family = [
            FractalFamily::Interval,
            FractalFamily::Gasket,
            FractalFamily::Vicsek,
            FractalFamily::Carpet,
        ][family_idx];
        let g = build_compact(family, level, &BuildOptions::default()).unwrap();
        let back = graph_from_json(&graph_to_json(&g)).unwrap();
        prop_assert_eq!(back.fingerprint(), g.fingerprint());
        prop_assert_eq!(back.vertex_count(), g.vertex_count());
        prop_assert_eq!(back.edge_count(), g.edge_count());
    }
}
