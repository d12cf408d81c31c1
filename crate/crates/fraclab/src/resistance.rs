//! Effective resistance between vertex sets, computed from one harmonic
//! solve: with v = 0 on A and v = 1 on B, R(A, B) = 1 / E(v, v). Also the
//! resistance-scaling fit R(x, y) ~ (Psi/Phi)(d(x, y)), the harmonic
//! oscillation inequality and the ball resistance lower bound as empirical
//! condition checks.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::dirichlet::{energy, solve_harmonic};
use crate::error::{Error, Result};
use crate::graph::{FractalFamily, WeightedGraph};
use crate::scaling::ratio_psi_phi;
use crate::verify::{
    fit_exponent, log_grid, mesoscopic_window, spans_dyadic_scales, Bracket, ConditionReport,
    ExperimentPlan, FitMode, Verdict,
};

pub fn eff_resistance(graph: &WeightedGraph, a: &[usize], b: &[usize]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::InvalidArgument(
            "resistance needs two non-empty vertex sets".into(),
        ));
    }
    let mut boundary: BTreeMap<usize, f64> = BTreeMap::new();
    for &v in a {
        boundary.insert(v, 0.0);
    }
    for &v in b {
        if boundary.insert(v, 1.0) == Some(0.0) {
            return Err(Error::InvalidArgument(format!(
                "vertex {v} is in both resistance terminals"
            )));
        }
    }
    let (h, _) = solve_harmonic(graph, &boundary)?;
    let e = energy(graph, &h, &h)?;
    if !(e > 0.0) {
        return Err(Error::SingularSystem(
            "zero energy between resistance terminals".into(),
        ));
    }
    Ok(1.0 / e)
}

pub fn two_point_resistance(graph: &WeightedGraph, x: usize, y: usize) -> Result<f64> {
    eff_resistance(graph, &[x], &[y])
}

/// Resistance from a ball's center to its complement's boundary:
/// R({x}, V \ B(x, r)). Errors if the ball is the whole graph.
pub fn resistance_to_ball_complement(
    graph: &WeightedGraph,
    center: usize,
    ball: &[usize],
) -> Result<f64> {
    let mut in_ball = vec![false; graph.vertex_count()];
    for &v in ball {
        in_ball[v] = true;
    }
    let outside: Vec<usize> = (0..graph.vertex_count()).filter(|&v| !in_ball[v]).collect();
    if outside.is_empty() {
        return Err(Error::Domain(
            "ball covers the whole graph; no exterior to measure against".into(),
        ));
    }
    eff_resistance(graph, &[center], &outside)
}

/// Fit of log R(x, y) against log (Psi/Phi)(d(x, y)) over vertex pairs at
/// log-spaced distances in the mesoscopic window. Under resistance scaling
/// the slope is 1 and R / (Psi/Phi)(d) stays in a constant bracket; the
/// report also carries the mean resistance ratio between successive
/// distance scales (spaced by the family's length scale factor L), whose
/// scaling value is (Psi/Phi)(L).
pub fn resistance_scaling_fit(
    graph: &WeightedGraph,
    plan: &ExperimentPlan,
) -> Result<ConditionReport> {
    let exps = &plan.exps;
    let mut report = ConditionReport::new("resistance-scaling", graph);
    report.sample_columns = vec!["d".into(), "resistance".into()];

    let Some((r_min, r_max)) = mesoscopic_window(graph) else {
        report.notes.push("window empty: diameter/4 <= 4h".into());
        report
            .sub_verdicts
            .insert("r_scaling".into(), Verdict::Inconclusive);
        report.finalize();
        return Ok(report);
    };
    report.window.r_min = Some(r_min);
    report.window.r_max = Some(r_max);
    if !spans_dyadic_scales(r_min, r_max) {
        report
            .notes
            .push("window too narrow (fewer than 3 dyadic scales)".into());
        report
            .sub_verdicts
            .insert("r_scaling".into(), Verdict::Inconclusive);
        report.finalize();
        return Ok(report);
    }

    // distance targets spaced by the family's length scale factor, so
    // consecutive bins are one refinement level apart
    let scale = FractalFamily::parse(&graph.meta.family)
        .map(|f| f.scale_factor() as f64)
        .unwrap_or(2.0);
    let n_scales = ((r_max / r_min).ln() / scale.ln()).floor() as usize + 1;
    let targets: Vec<f64> = (0..n_scales).map(|k| r_min * scale.powi(k as i32)).collect();

    let mut rng = plan.rng_for("resistance.scaling", 0);
    let mut centers = graph.central_vertices(0.25);
    centers.shuffle(&mut rng);
    centers.truncate(4);

    let mut samples: Vec<(f64, f64)> = Vec::new();
    let mut c_r = Bracket::empty();
    let mut per_scale: Vec<Vec<f64>> = vec![Vec::new(); n_scales];
    for &x in &centers {
        let dist = graph.geodesic_distances(x);
        for (k, &target) in targets.iter().enumerate() {
            let Some(y) = (0..graph.vertex_count())
                .filter(|&y| y != x && dist[y].is_finite())
                .min_by(|&a, &b| {
                    (dist[a] - target)
                        .abs()
                        .total_cmp(&(dist[b] - target).abs())
                        .then(a.cmp(&b))
                })
            else {
                continue;
            };
            let d = dist[y];
            // the nearest realizable distance can fall outside the scale
            // bin on coarse graphs; skip rather than pollute the bin
            if d < target / scale.sqrt() || d > target * scale.sqrt() {
                report.skipped_samples += 1;
                continue;
            }
            let r = two_point_resistance(graph, x, y)?;
            samples.push((d, r));
            c_r.push(r / ratio_psi_phi(exps, d)?);
            per_scale[k].push(r);
            report.samples.push(vec![d, r]);
        }
    }
    report.constants.insert("c_r".into(), c_r);

    let mut ratio_bracket = Bracket::empty();
    for k in 0..n_scales.saturating_sub(1) {
        if per_scale[k].is_empty() || per_scale[k + 1].is_empty() {
            continue;
        }
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        let ratio = mean(&per_scale[k + 1]) / mean(&per_scale[k]);
        ratio_bracket.push(ratio);
        report
            .notes
            .push(format!("scale ratio x{scale:.0} at d ~ {:.3}: {ratio:.4}", targets[k]));
    }
    if !ratio_bracket.is_empty() {
        report.constants.insert("scale_ratio".into(), ratio_bracket);
    }

    // distances in the window sit above the branch point, so the scaling
    // target is the large-scale exponent gamma2 = beta2 - alpha2
    let gamma = exps.gamma2();
    let verdict = match fit_exponent(&samples, FitMode::Ls) {
        Ok(fit) => {
            let ok = (fit.slope - gamma).abs() <= plan.tolerances.hr_slope;
            report.notes.push(format!(
                "r_scaling: slope {:.4} vs gamma {gamma:.4}, normalized {:.4} vs 1 (tolerance {})",
                fit.slope,
                fit.slope / gamma,
                plan.tolerances.hr_slope
            ));
            report.fits.insert("r_scaling".into(), fit);
            if ok {
                Verdict::Pass
            } else {
                Verdict::Fail
            }
        }
        Err(e) => {
            report.notes.push(format!("r_scaling: {e}"));
            Verdict::Inconclusive
        }
    };
    report.sub_verdicts.insert("r_scaling".into(), verdict);
    report.finalize();
    Ok(report)
}

/// Oscillation inequality for harmonic functions: with u harmonic in the
/// ball B (boundary data on X \ B), every pair x, y in B satisfies
/// |u(x) - u(y)| <= R(x, y) / R(x, X \ B) * osc_{X \ B} u. A theorem for
/// resistance forms, so any violation beyond 1e-12 relative slack is a
/// solver bug; the report carries the worst margin seen.
pub fn oscillation_check(
    graph: &WeightedGraph,
    ball: &[usize],
    trials: usize,
    plan: &ExperimentPlan,
) -> Result<ConditionReport> {
    let mut report = ConditionReport::new("oscillation-inequality", graph);
    report.sample_columns = vec!["trial".into(), "lhs".into(), "bound".into()];

    let n = graph.vertex_count();
    let mut in_ball = vec![false; n];
    for &v in ball {
        if v >= n {
            return Err(Error::UnknownVertex(v));
        }
        in_ball[v] = true;
    }
    let outside: Vec<usize> = (0..n).filter(|&v| !in_ball[v]).collect();
    if outside.is_empty() {
        return Err(Error::Domain(
            "oscillation check needs a proper ball with non-empty exterior".into(),
        ));
    }
    if ball.len() < 2 {
        report.notes.push("ball too small for pairs; degenerate pass".into());
        report.sub_verdicts.insert("oscillation".into(), Verdict::Pass);
        report.finalize();
        return Ok(report);
    }

    let mut r_exterior: BTreeMap<usize, f64> = BTreeMap::new();
    let mut r_pair: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    let mut worst_margin = f64::INFINITY;
    let mut violations = 0usize;
    for trial in 0..trials {
        let mut rng = plan.rng_for("resistance.osc", trial as u64);
        let boundary: BTreeMap<usize, f64> = outside
            .iter()
            .map(|&v| (v, rng.gen_range(-1.0..1.0)))
            .collect();
        let osc = boundary.values().fold(f64::NEG_INFINITY, |a, &b| a.max(b))
            - boundary.values().fold(f64::INFINITY, |a, &b| a.min(b));
        let (u, _) = solve_harmonic(graph, &boundary)?;
        for _ in 0..6 {
            let x = ball[rng.gen_range(0..ball.len())];
            let y = ball[rng.gen_range(0..ball.len())];
            if x == y {
                continue;
            }
            let rxy = *match r_pair.entry((x.min(y), x.max(y))) {
                std::collections::btree_map::Entry::Occupied(e) => e.into_mut(),
                std::collections::btree_map::Entry::Vacant(e) => {
                    e.insert(two_point_resistance(graph, x, y)?)
                }
            };
            let rx = *match r_exterior.entry(x) {
                std::collections::btree_map::Entry::Occupied(e) => e.into_mut(),
                std::collections::btree_map::Entry::Vacant(e) => {
                    e.insert(eff_resistance(graph, &[x], &outside)?)
                }
            };
            let lhs = (u.value(x) - u.value(y)).abs();
            let bound = rxy / rx * osc;
            report.samples.push(vec![trial as f64, lhs, bound]);
            let margin = bound - lhs;
            if margin < worst_margin {
                worst_margin = margin;
            }
            if lhs > bound + 1e-12 * bound.max(1.0) {
                violations += 1;
            }
        }
    }
    report.notes.push(format!(
        "oscillation: {} samples, worst margin {:.3e}, {} violations",
        report.samples.len(),
        worst_margin,
        violations
    ));
    report.sub_verdicts.insert(
        "oscillation".into(),
        if violations == 0 {
            Verdict::Pass
        } else {
            Verdict::Fail
        },
    );
    report.finalize();
    Ok(report)
}

/// Ball resistance lower bound: R(x0, X \ B(x0, r)) >= C (Psi/Phi)(r).
/// Samples centers and radii across the mesoscopic window, reports the
/// normalized constant bracket and its stability across dyadic scales.
pub fn ball_resistance_check(
    graph: &WeightedGraph,
    plan: &ExperimentPlan,
) -> Result<ConditionReport> {
    let exps = &plan.exps;
    let mut report = ConditionReport::new("ball-resistance", graph);
    report.sample_columns = vec!["r".into(), "constant".into()];

    let Some((r_min, r_max)) = mesoscopic_window(graph) else {
        report.notes.push("window empty: diameter/4 <= 4h".into());
        report
            .sub_verdicts
            .insert("ball_resistance".into(), Verdict::Inconclusive);
        report.finalize();
        return Ok(report);
    };
    report.window.r_min = Some(r_min);
    report.window.r_max = Some(r_max);

    let mut rng = plan.rng_for("resistance.ball", 0);
    let mut centers = graph.central_vertices(0.25);
    centers.shuffle(&mut rng);
    centers.truncate(4);

    let radii = log_grid(r_min, r_max, 8);
    let mut c_ball = Bracket::empty();
    // per-dyadic-scale minima, for the scale-stability verdict
    let mut per_scale: BTreeMap<i64, f64> = BTreeMap::new();
    for &x in &centers {
        for &r in &radii {
            let ball = graph.ball(x, r, plan.metric)?;
            if ball.len() >= graph.vertex_count() {
                report.skipped_samples += 1;
                continue;
            }
            let res = resistance_to_ball_complement(graph, x, &ball)?;
            let c = res / ratio_psi_phi(exps, r)?;
            c_ball.push(c);
            report.samples.push(vec![r, c]);
            let key = (r / r_min).log2().floor() as i64;
            let e = per_scale.entry(key).or_insert(f64::INFINITY);
            if c < *e {
                *e = c;
            }
        }
    }
    report.constants.insert("c_ball".into(), c_ball);
    let verdict = if per_scale.len() < 2 {
        report
            .notes
            .push("ball_resistance: fewer than 2 populated scales".into());
        Verdict::Inconclusive
    } else {
        let mut b = Bracket::empty();
        for &v in per_scale.values() {
            b.push(v);
        }
        report.notes.push(format!(
            "ball_resistance: per-scale lower constant in [{:.4e}, {:.4e}], spread {:.3}",
            b.min,
            b.max,
            b.factor()
        ));
        if c_ball.min > 0.0 && b.factor() < plan.tolerances.bracket_factor {
            Verdict::Pass
        } else {
            Verdict::Fail
        }
    };
    report
        .sub_verdicts
        .insert("ball_resistance".into(), verdict);
    report.finalize();
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{build_compact, BuildOptions, Edge, FractalFamily, GraphMeta};
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn meta() -> GraphMeta {
        GraphMeta {
            family: "interval".into(),
            level: 0,
            scale: 1.0,
            kind: "test".into(),
        }
    }

    #[test]
    fn interval_resistance_is_series_sum() {
        // unit conductances in series: R = number of edges
        for n in 1..=6 {
            let g = build_compact(FractalFamily::Interval, n, &BuildOptions::default()).unwrap();
            let left = (0..g.vertex_count())
                .find(|&v| g.coord_int(v) == (0, 0))
                .unwrap();
            let right = (0..g.vertex_count())
                .find(|&v| g.coord_int(v) == (g.den, 0))
                .unwrap();
            assert_relative_eq!(
                two_point_resistance(&g, left, right).unwrap(),
                2f64.powi(n as i32),
                max_relative = 1e-9
            );
        }
    }

    #[test]
    fn parallel_edges_add_conductance() {
        let g = WeightedGraph::assemble(
            2,
            vec![(0, 0), (2, 0)],
            vec![1.0, 1.0],
            vec![
                Edge { u: 0, v: 1, c: 2.0, len: 1.0 },
                Edge { u: 0, v: 1, c: 3.0, len: 1.0 },
            ],
            meta(),
        )
        .unwrap();
        assert_relative_eq!(
            two_point_resistance(&g, 0, 1).unwrap(),
            0.2,
            max_relative = 1e-12
        );
    }

    #[test]
    fn triangle_series_parallel() {
        // unit triangle: R between any two corners = 2/3
        let g = build_compact(FractalFamily::Gasket, 0, &BuildOptions::default()).unwrap();
        for (x, y) in [(0, 1), (0, 2), (1, 2)] {
            assert_relative_eq!(
                two_point_resistance(&g, x, y).unwrap(),
                2.0 / 3.0,
                max_relative = 1e-12
            );
        }
    }

    #[test]
    fn rayleigh_monotonicity_on_random_edges() {
        let g = build_compact(FractalFamily::Gasket, 3, &BuildOptions::default()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = 0;
        let y = g.vertex_count() - 1;
        let base = two_point_resistance(&g, x, y).unwrap();
        for _ in 0..10 {
            let e = rng.gen_range(0..g.edge_count());
            let up = g.with_conductance(e, 4.0).unwrap();
            let down = g.with_conductance(e, 0.25).unwrap();
            assert!(two_point_resistance(&up, x, y).unwrap() <= base + 1e-12);
            assert!(two_point_resistance(&down, x, y).unwrap() >= base - 1e-12);
        }
    }

    #[test]
    fn resistance_triangle_inequality() {
        let g = build_compact(FractalFamily::Vicsek, 2, &BuildOptions::default()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..30 {
            let x = rng.gen_range(0..g.vertex_count());
            let y = rng.gen_range(0..g.vertex_count());
            let z = rng.gen_range(0..g.vertex_count());
            if x == y || y == z || x == z {
                continue;
            }
            let rxz = two_point_resistance(&g, x, z).unwrap();
            let rxy = two_point_resistance(&g, x, y).unwrap();
            let ryz = two_point_resistance(&g, y, z).unwrap();
            assert!(rxz <= rxy + ryz + 1e-12);
        }
    }

    #[test]
    fn overlapping_terminals_rejected() {
        let g = build_compact(FractalFamily::Interval, 1, &BuildOptions::default()).unwrap();
        assert!(eff_resistance(&g, &[0], &[0]).is_err());
        assert!(eff_resistance(&g, &[], &[0]).is_err());
    }

    fn plan(preset: &str) -> crate::verify::ExperimentPlan {
        crate::verify::ExperimentPlan::new(
            crate::scaling::ScalingExponents::preset(preset).unwrap(),
            42,
        )
    }

    #[test]
    fn scaling_fit_interval_slope_one() {
        let g =
            crate::graph::build_prefractal(FractalFamily::Interval, 7, &BuildOptions::default())
                .unwrap();
        let r = resistance_scaling_fit(&g, &plan("interval")).unwrap();
        // R(x, y) = d(x, y) exactly on a path with unit conductances
        let fit = r.fits.get("r_scaling").expect("fit");
        assert_relative_eq!(fit.slope, 1.0, max_relative = 1e-9);
        assert_eq!(r.sub_verdicts["r_scaling"], crate::verify::Verdict::Pass);
    }

    #[test]
    fn scaling_fit_narrow_window_is_inconclusive() {
        let g =
            crate::graph::build_prefractal(FractalFamily::Gasket, 4, &BuildOptions::default())
                .unwrap();
        let r = resistance_scaling_fit(&g, &plan("gasket")).unwrap();
        // diameter 16 scale units: window [4, 4 * sqrt(2)] spans < 3 scales
        assert_eq!(
            r.sub_verdicts["r_scaling"],
            crate::verify::Verdict::Inconclusive
        );
    }

    #[test]
    fn oscillation_inequality_zero_violations_on_gasket() {
        let g = build_compact(FractalFamily::Gasket, 4, &BuildOptions::default()).unwrap();
        let p = plan("gasket");
        let center = g.central_vertices(0.25)[0];
        let ball = g
            .ball(center, 0.25, crate::graph::MetricMode::Geodesic)
            .unwrap();
        let r = oscillation_check(&g, &ball, 100, &p).unwrap();
        assert_eq!(r.sub_verdicts["oscillation"], crate::verify::Verdict::Pass);
        assert!(!r.samples.is_empty());
    }

    #[test]
    fn oscillation_rejects_full_graph_ball() {
        let g = build_compact(FractalFamily::Gasket, 2, &BuildOptions::default()).unwrap();
        let all: Vec<usize> = (0..g.vertex_count()).collect();
        assert!(oscillation_check(&g, &all, 1, &plan("gasket")).is_err());
    }

    #[test]
    fn oscillation_constant_boundary_is_degenerate_pass() {
        // constant data: both sides of the inequality vanish
        let g = build_compact(FractalFamily::Gasket, 2, &BuildOptions::default()).unwrap();
        let center = g.central_vertices(0.25)[0];
        let ball = g
            .ball(center, 0.3, crate::graph::MetricMode::Geodesic)
            .unwrap();
        let outside: BTreeMap<usize, f64> = (0..g.vertex_count())
            .filter(|v| !ball.contains(v))
            .map(|v| (v, 0.7))
            .collect();
        let (u, _) = solve_harmonic(&g, &outside).unwrap();
        for &x in &ball {
            assert_relative_eq!(u.value(x), 0.7, max_relative = 1e-9);
        }
    }

    #[test]
    fn ball_resistance_constant_is_half_on_interval() {
        // two arms of resistance ~r in parallel: R = r/2, (Psi/Phi)(r) = r;
        // the snap of the ball boundary to lattice vertices inflates the
        // constant by at most (r + 1)/r at the smallest radius r = 4
        let g =
            crate::graph::build_prefractal(FractalFamily::Interval, 7, &BuildOptions::default())
                .unwrap();
        let r = ball_resistance_check(&g, &plan("interval")).unwrap();
        let c = r.constants.get("c_ball").expect("bracket");
        assert!(c.min >= 0.5 - 1e-9, "min {}", c.min);
        assert!(c.max <= 0.5 * 1.26, "max {}", c.max);
        assert_eq!(
            r.sub_verdicts["ball_resistance"],
            crate::verify::Verdict::Pass
        );
    }

    #[test]
    fn ball_resistance_stable_on_gasket() {
        let g =
            crate::graph::build_prefractal(FractalFamily::Gasket, 6, &BuildOptions::default())
                .unwrap();
        let r = ball_resistance_check(&g, &plan("gasket")).unwrap();
        assert_eq!(
            r.sub_verdicts["ball_resistance"],
            crate::verify::Verdict::Pass
        );
        let c = r.constants.get("c_ball").expect("bracket");
        assert!(c.factor() < 2.0, "spread {}", c.factor());
    }

    #[test]
    fn degenerate_ball_still_positive() {
        // ball smaller than an edge: resistance to the neighbor set
        let g =
            crate::graph::build_prefractal(FractalFamily::Gasket, 3, &BuildOptions::default())
                .unwrap();
        let center = g.central_vertices(0.25)[0];
        let r = resistance_to_ball_complement(&g, center, &[center]).unwrap();
        assert!(r.is_finite() && r > 0.0);
    }
}
