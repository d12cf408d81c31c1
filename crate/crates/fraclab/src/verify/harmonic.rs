//! Hölder regularity of harmonic functions: random boundary data on 2B,
//! harmonic solve inside, Hölder quotients over pairs in B. Also records
//! the mean-value bound, per-segment difference quotients on cable graphs,
//! and the Poisson analogue with source correction terms.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::dirichlet::{solve_harmonic, solve_poisson};
use crate::error::Result;
use crate::graph::WeightedGraph;
use crate::scaling::{psi, ratio_psi_phi};
use crate::verify::{
    fit_exponent, log_grid, mesoscopic_window, Bracket, ConditionReport, ExperimentPlan, FitMode,
    Verdict,
};

pub fn check_harmonic_regularity(
    graph: &WeightedGraph,
    plan: &ExperimentPlan,
    trials: usize,
) -> Result<ConditionReport> {
    let exps = &plan.exps;
    let mut report = ConditionReport::new("harmonic-regularity", graph);
    report.sample_columns = vec!["d".into(), "r".into(), "quotient".into()];

    let Some((r_min, r_max)) = mesoscopic_window(graph) else {
        report.notes.push("window empty: diameter/4 <= 4h".into());
        report.sub_verdicts.insert("hr".into(), Verdict::Inconclusive);
        report.finalize();
        return Ok(report);
    };
    report.window.r_min = Some(r_min);
    report.window.r_max = Some(r_max);

    // 2B must fit inside the graph with room to spare
    let radii = log_grid(r_min, r_max / 2.0, 8);
    let centers = graph.central_vertices(0.25);
    // 2B only has to avoid the outermost ring (window-edge effects), not the
    // much smaller region the centers are drawn from
    let mut central_mask = vec![false; graph.vertex_count()];
    for v in graph.central_vertices(0.05) {
        central_mask[v] = true;
    }
    // window graphs (anything that is a cut-out of a larger space) keep 2B
    // inside the central region; compact graphs have no window boundary
    let windowed = !graph.meta.kind.starts_with("compact");
    let is_cable = graph.meta.kind.contains("cable");
    // branch of the two-sided scaling the window lives on
    let branch2 = r_max > 1.0;
    let gamma = if branch2 {
        exps.gamma2()
    } else {
        exps.gamma1()
    };

    let mut c_h = Bracket::empty();
    let mut mv = Bracket::empty();
    let mut grh = Bracket::empty();
    let mut poisson_holder = Bracket::empty();
    let mut degenerate_mean = false;
    let mut completed = 0usize;

    for trial in 0..trials {
        let mut rng = plan.rng_for("harmonic.trial", trial as u64);
        let center = centers[rng.gen_range(0..centers.len())];
        let dist_c = graph.geodesic_distances(center);
        // radii this center supports without 2B leaving the central region
        let feasible: Vec<f64> = radii
            .iter()
            .cloned()
            .filter(|&r| {
                !windowed
                    || (0..graph.vertex_count()).all(|v| dist_c[v] >= 2.0 * r || central_mask[v])
            })
            .collect();
        if feasible.is_empty() {
            report.skipped_samples += 1;
            continue;
        }
        // most trials use the largest feasible radius: the envelope needs
        // the full range of d/r in one ball, and small balls only reach
        // d ~ r; the rest cycle the grid so the constant bracket sees every
        // scale
        let r = if trial % 3 == 2 {
            feasible[(trial / 3) % feasible.len()]
        } else {
            *feasible.last().unwrap()
        };
        let ball2: Vec<usize> = (0..graph.vertex_count())
            .filter(|&v| dist_c[v] < 2.0 * r)
            .collect();
        // component of the center within 2B
        let members = component_within(graph, center, &ball2);
        let mut in_members = vec![false; graph.vertex_count()];
        for &v in &members {
            in_members[v] = true;
        }
        let boundary: Vec<usize> = members
            .iter()
            .cloned()
            .filter(|&v| graph.neighbors(v).iter().any(|&(w, _)| !in_members[w]))
            .collect();
        if boundary.is_empty() || boundary.contains(&center) {
            report.skipped_samples += 1;
            continue;
        }
        let (sub, order) = graph.induced_subgraph(&members)?;
        let sub_id: BTreeMap<usize, usize> =
            order.iter().enumerate().map(|(i, &v)| (v, i)).collect();
        // boundary data: alternate smooth-ish uniform and rough Rademacher
        let data: BTreeMap<usize, f64> = boundary
            .iter()
            .map(|&v| {
                let val = if trial % 2 == 0 {
                    rng.gen_range(-1.0..1.0)
                } else if rng.gen_bool(0.5) {
                    1.0
                } else {
                    -1.0
                };
                (sub_id[&v], val)
            })
            .collect();
        let (u, _) = solve_harmonic(&sub, &data)?;
        let m2b: f64 = sub.total_measure();
        let mean_abs: f64 = (0..sub.vertex_count())
            .map(|v| u.value(v).abs() * sub.measure(v))
            .sum::<f64>()
            / m2b;
        if mean_abs <= 1e-300 {
            degenerate_mean = true;
            report.skipped_samples += 1;
            continue;
        }
        let ball: Vec<usize> = members.iter().cloned().filter(|&v| dist_c[v] < r).collect();
        if ball.len() < 2 {
            report.skipped_samples += 1;
            continue;
        }
        // pair sampling: a few bases in B, partners at log-spaced distances
        // so every distance scale gets samples (uniform pairs almost always
        // land at d comparable to r). One base is anchored at the steepest
        // edge of u inside B: the worst Hölder quotients at small distances
        // concentrate there, and random bases alone miss them.
        let h = graph.min_edge_len();
        let mut in_ball = vec![false; graph.vertex_count()];
        for &v in &ball {
            in_ball[v] = true;
        }
        let anchor = sub
            .edges()
            .iter()
            .filter(|e| in_ball[order[e.u]] && in_ball[order[e.v]])
            .max_by(|a, b| {
                let ga = (u.value(a.u) - u.value(a.v)).abs() / a.len;
                let gb = (u.value(b.u) - u.value(b.v)).abs() / b.len;
                ga.total_cmp(&gb)
            })
            .map(|e| order[e.u]);
        let mut xs = ball.clone();
        xs.shuffle(&mut rng);
        xs.truncate(8);
        if let Some(a) = anchor {
            if !xs.contains(&a) {
                xs[0] = a;
            }
        }
        let ratio_r = ratio_psi_phi(exps, r)?;
        for &x in &xs {
            let dx = graph.geodesic_distances(x);
            let ux = u.value(sub_id[&x]);
            let mut ys: Vec<usize> = Vec::new();
            let mut shell = 2.0 * h;
            while shell <= 1.4 * r {
                // the envelope is a sup: in each distance shell take the
                // partner with the worst quotient, not an arbitrary one
                if let Some(y) = ball
                    .iter()
                    .cloned()
                    .filter(|&y| y != x && dx[y] >= shell && dx[y] < shell * 1.4)
                    .max_by(|&a, &b| {
                        let qa = (ux - u.value(sub_id[&a])).abs();
                        let qb = (ux - u.value(sub_id[&b])).abs();
                        qa.total_cmp(&qb)
                    })
                {
                    ys.push(y);
                }
                shell *= 1.4;
            }
            for &y in &ys {
                let d = dx[y];
                if !(d > 0.0) {
                    continue;
                }
                let dq = (u.value(sub_id[&x]) - u.value(sub_id[&y])).abs() / mean_abs;
                // envelope samples: same branch of the scaling (so the
                // quotient is exactly a power of d/r), above lattice scale,
                // and below the d ~ 2r saturation where |u(x)-u(y)| is
                // capped by the oscillation of u
                if branch2 == (d >= 1.0) && d >= 2.0 * h && d <= r {
                    report.samples.push(vec![d, r, dq]);
                }
                c_h.push(dq * ratio_r / ratio_psi_phi(exps, d)?);
            }
        }
        // mean-value bound
        let sup_b = ball
            .iter()
            .map(|&v| u.value(sub_id[&v]).abs())
            .fold(0.0, f64::max);
        mv.push(sup_b / mean_abs);
        // per-segment difference quotients (gradient proxy on cables)
        if is_cable {
            let mut sup_grad: f64 = 0.0;
            for e in sub.edges() {
                if dist_c[order[e.u]] < r && dist_c[order[e.v]] < r {
                    sup_grad = sup_grad.max((u.value(e.u) - u.value(e.v)).abs() / e.len);
                }
            }
            grh.push(sup_grad * ratio_r / mean_abs);
        }
        // Poisson analogue on a subset of trials
        if trial % 4 == 0 {
            if let Some(q) = poisson_quotient(
                graph, &sub, &order, &sub_id, &data, &dist_c, r, plan, &mut rng,
            )? {
                poisson_holder.push(q);
            }
        }
        completed += 1;
    }

    report.constants.insert("c_h".into(), c_h);
    report.constants.insert("mv".into(), mv);
    if is_cable {
        report.constants.insert("grh".into(), grh);
    }
    if !poisson_holder.is_empty() {
        report
            .constants
            .insert("poisson_holder".into(), poisson_holder);
    }
    report
        .notes
        .push(format!("completed {completed} of {trials} trials"));
    if degenerate_mean {
        report
            .notes
            .push("some trials had vanishing mean |u| and were skipped".into());
    }

    // envelope slope of the pooled Hölder quotient vs d/r: per-bin maximum
    // over log-spaced bins, fitted by least squares across bins. HR is an
    // upper bound |u(x)-u(y)| <= C (d/r)^gamma avg|u|, so the verdict is
    // one-sided: the envelope must decay at least that fast. Where the
    // exponent is attained (gasket, Vicsek, interval) the slope also matches
    // gamma within tolerance, and a note records whether it does.
    let mut bins: BTreeMap<i64, Vec<f64>> = BTreeMap::new();
    for row in &report.samples {
        let b = ((row[0] / row[1]).log2() * 3.0).floor() as i64;
        bins.entry(b).or_default().push(row[2]);
    }
    let mut pooled: Vec<(f64, f64)> = Vec::new();
    for (b, vals) in bins {
        if vals.len() < 3 {
            continue;
        }
        let m = vals.iter().cloned().fold(0.0, f64::max);
        pooled.push((2f64.powf((b as f64 + 0.5) / 3.0), m));
    }
    // the power law holds away from the large-d saturation where
    // |u(x)-u(y)| is capped by osc(u) rather than C (d/r)^gamma avg|u|:
    // bins above d/r ~ 2^(-2/3) are dropped, but only while the rest keeps
    // enough points and dyadic span for the fit
    while let Some(&(x_hi, _)) = pooled.last() {
        let n = pooled.len();
        let enough = n > 8
            && pooled[n - 2].0 / pooled[0].0 >= 2f64.powf(crate::verify::MIN_DYADIC_SCALES);
        if x_hi > 2f64.powf(-2.0 / 3.0) && enough {
            pooled.pop();
        } else {
            break;
        }
    }
    let hr_verdict = match fit_exponent(&pooled, FitMode::Ls) {
        Ok(fit) => {
            let ok = fit.slope >= gamma - plan.tolerances.hr_slope;
            if (fit.slope - gamma).abs() <= plan.tolerances.hr_slope {
                report
                    .notes
                    .push(format!("hr: envelope slope {:.4} attains gamma {gamma:.4}", fit.slope));
            } else if ok {
                report.notes.push(format!(
                    "hr: envelope slope {:.4} steeper than gamma {gamma:.4} (bound holds, not sharp here)",
                    fit.slope
                ));
            } else {
                report.notes.push(format!(
                    "hr: envelope slope {:.4} shallower than gamma {gamma:.4} minus tolerance {}",
                    fit.slope, plan.tolerances.hr_slope
                ));
            }
            report.fits.insert("hr_envelope".into(), fit);
            if ok {
                Verdict::Pass
            } else {
                Verdict::Fail
            }
        }
        Err(e) => {
            report.notes.push(format!("hr: {e}"));
            Verdict::Inconclusive
        }
    };
    report.sub_verdicts.insert("hr".into(), hr_verdict);
    let mv_verdict = if mv.is_empty() {
        Verdict::Inconclusive
    } else if mv.max.is_finite() {
        Verdict::Pass
    } else {
        Verdict::Fail
    };
    report.sub_verdicts.insert("mv".into(), mv_verdict);
    report.finalize();
    Ok(report)
}

fn component_within(graph: &WeightedGraph, start: usize, allowed: &[usize]) -> Vec<usize> {
    let mut mask = vec![false; graph.vertex_count()];
    for &v in allowed {
        mask[v] = true;
    }
    let mut seen = vec![false; graph.vertex_count()];
    let mut stack = vec![start];
    seen[start] = true;
    let mut out = Vec::new();
    while let Some(v) = stack.pop() {
        out.push(v);
        for &(w, _) in graph.neighbors(v) {
            if mask[w] && !seen[w] {
                seen[w] = true;
                stack.push(w);
            }
        }
    }
    out.sort_unstable();
    out
}

/// Hölder quotient for a Poisson solution, with the source correction term
/// sum_j Psi(2^j) avg_{B(x, 2^j)} |f| added to the denominator. Pairs are
/// restricted to the inner (1/16)-ball.
#[allow(clippy::too_many_arguments)]
fn poisson_quotient(
    graph: &WeightedGraph,
    sub: &WeightedGraph,
    order: &[usize],
    sub_id: &BTreeMap<usize, usize>,
    boundary: &BTreeMap<usize, f64>,
    dist_c: &[f64],
    r: f64,
    plan: &ExperimentPlan,
    rng: &mut impl Rng,
) -> Result<Option<f64>> {
    let exps = &plan.exps;
    let f: Vec<f64> = (0..sub.vertex_count())
        .map(|_| rng.gen_range(-1.0..1.0))
        .collect();
    let zero: BTreeMap<usize, f64> = boundary.keys().map(|&v| (v, 0.0)).collect();
    let (u, _) = solve_poisson(sub, Some(&f), &zero)?;
    let m2b = sub.total_measure();
    let mean_abs: f64 = (0..sub.vertex_count())
        .map(|v| u.value(v).abs() * sub.measure(v))
        .sum::<f64>()
        / m2b;
    let inner: Vec<usize> = order
        .iter()
        .cloned()
        .filter(|&v| dist_c[v] < r / 16.0)
        .collect();
    if inner.len() < 2 {
        return Ok(None);
    }
    let ratio_r = ratio_psi_phi(exps, r)?;
    // correction at a point: dyadic sum of Psi(2^j) * avg_{B(x,2^j)} |f|
    let correction = |x: usize| -> Result<f64> {
        let dx = graph.geodesic_distances(x);
        let mut acc = 0.0;
        let j_min = graph.min_edge_len().log2().floor() as i32;
        let j_max = r.log2().floor() as i32;
        for j in j_min..=j_max {
            let rad = 2f64.powi(j);
            let mut num = 0.0;
            let mut den = 0.0;
            for (i, &v) in order.iter().enumerate() {
                if dx[v] < rad {
                    num += f[i].abs() * sub.measure(i);
                    den += sub.measure(i);
                }
            }
            if den > 0.0 {
                acc += psi(exps, rad)? * num / den;
            }
        }
        Ok(acc)
    };
    let x = inner[rng.gen_range(0..inner.len())];
    let y = inner[rng.gen_range(0..inner.len())];
    if x == y {
        return Ok(None);
    }
    let d = graph.geodesic_distances(x)[y];
    if !(d > 0.0) {
        return Ok(None);
    }
    let du = (u.value(sub_id[&x]) - u.value(sub_id[&y])).abs();
    let denom =
        ratio_psi_phi(exps, d)? / ratio_r * mean_abs + correction(x)? + correction(y)?;
    if denom <= 0.0 {
        return Ok(None);
    }
    Ok(Some(du / denom))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{build_prefractal, BuildOptions, FractalFamily};
    use crate::scaling::ScalingExponents;

    #[test]
    fn interval_harmonic_is_affine() {
        // harmonic on the line is affine, so quotients behave like d/r and
        // the envelope slope is 1 (gamma for the interval preset)
        let g = build_prefractal(FractalFamily::Interval, 7, &BuildOptions::default()).unwrap();
        let plan = ExperimentPlan::new(ScalingExponents::preset("interval").unwrap(), 11);
        let r = check_harmonic_regularity(&g, &plan, 60).unwrap();
        let fit = r.fits.get("hr_envelope").expect("fit");
        assert!((fit.slope - 1.0).abs() < 0.05, "slope {}", fit.slope);
        assert_eq!(r.sub_verdicts["hr"], Verdict::Pass);
        // mean-value bound is modest on the line
        assert!(r.constants["mv"].max < 10.0);
    }

    #[test]
    fn determinism() {
        let g = build_prefractal(FractalFamily::Gasket, 4, &BuildOptions::default()).unwrap();
        let plan = ExperimentPlan::new(ScalingExponents::preset("gasket").unwrap(), 5);
        let a = check_harmonic_regularity(&g, &plan, 20).unwrap().to_json();
        let b = check_harmonic_regularity(&g, &plan, 20).unwrap().to_json();
        assert_eq!(a, b);
    }
}
