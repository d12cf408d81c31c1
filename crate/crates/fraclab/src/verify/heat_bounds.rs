//! Heat kernel estimates on the mesoscopic window: on-diagonal decay, the
//! sub-Gaussian upper bound, the near-diagonal lower bound, kernel Hölder
//! continuity (plain and with exponential weights), and the time-derivative
//! bound.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::Result;
use crate::graph::WeightedGraph;
use crate::heat::Spectrum;
use crate::scaling::{psi, psi_inv, ratio_psi_phi, upsilon};
use crate::verify::{
    decade, fit_log_periodic, log_grid, mesoscopic_window, per_decade_stability, Bracket,
    ConditionReport, ExperimentPlan, Verdict,
};

const NLE_EPSILONS: [(&str, f64); 3] = [
    ("nle_eps_1_8", 0.125),
    ("nle_eps_1_4", 0.25),
    ("nle_eps_1_2", 0.5),
];

pub fn check_heat_kernel_bounds(
    graph: &WeightedGraph,
    spectrum: &Spectrum,
    plan: &ExperimentPlan,
) -> Result<ConditionReport> {
    spectrum.check_domain(graph)?;
    let exps = &plan.exps;
    let mut report = ConditionReport::new("heat-kernel-bounds", graph);
    report.sample_columns = vec![
        "t".into(),
        "d".into(),
        "p".into(),
        "dt_p".into(),
        "volume".into(),
    ];

    let Some((r_min, r_max)) = mesoscopic_window(graph) else {
        report.notes.push("window empty: diameter/4 <= 4h".into());
        for name in ["ondiag", "uhk", "nle", "hhk", "hhkexp", "davies"] {
            report.sub_verdicts.insert(name.into(), Verdict::Inconclusive);
        }
        report.finalize();
        return Ok(report);
    };
    // beyond a fraction of 1/lambda_1 the kernel relaxes to the finite-graph
    // equilibrium 1/m(X), which is outside the scaling regime, so the time
    // window is capped there; if that empties the mesoscopic window, fall
    // back to lattice-scale times and record the adjustment
    let lambda1 = spectrum
        .eigenvalues()
        .iter()
        .copied()
        .find(|&l| l > 1e-12)
        .unwrap_or(f64::INFINITY);
    let mut t_min = psi(exps, r_min)?;
    let t_max = psi(exps, r_max)?.min(0.3 / lambda1);
    if t_max <= 4.0 * t_min {
        t_min = psi(exps, graph.min_edge_len())?.max(t_max / 1000.0);
        report.notes.push(format!(
            "t-window widened below Psi(4h): mixing cap 0.3/lambda_1 = {:.4e}",
            0.3 / lambda1
        ));
    }
    report.window.r_min = Some(r_min);
    report.window.r_max = Some(r_max);
    report.window.t_min = Some(t_min);
    report.window.t_max = Some(t_max);
    if t_max <= t_min {
        report.notes.push("t-window empty after mixing cap".into());
        for name in ["ondiag", "uhk", "nle", "hhk", "hhkexp", "davies"] {
            report.sub_verdicts.insert(name.into(), Verdict::Inconclusive);
        }
        report.finalize();
        return Ok(report);
    }

    let decades_t = (t_max / t_min).log10();
    let n_t = ((12.0 * decades_t).ceil() as usize).clamp(12, 36);
    let t_grid = log_grid(t_min, t_max, n_t);

    // base vertices in the central region; partners at log-spaced distances
    let mut rng = plan.rng_for("heat.bases", 0);
    let mut bases = graph.central_vertices(0.25);
    bases.shuffle(&mut rng);
    bases.truncate(8);
    let h = graph.min_edge_len();

    let mut dist: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    for &x in &bases {
        dist.insert(x, graph.geodesic_distances(x));
    }
    let mut partners: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for &x in &bases {
        let dx = &dist[&x];
        let mut chosen = vec![x];
        for target in log_grid(h, r_max, 12) {
            let best = (0..graph.vertex_count())
                .filter(|&y| dx[y].is_finite() && y != x)
                .min_by(|&a, &b| {
                    (dx[a] - target)
                        .abs()
                        .total_cmp(&(dx[b] - target).abs())
                        .then(a.cmp(&b))
                });
            if let Some(y) = best {
                if !chosen.contains(&y) {
                    chosen.push(y);
                }
            }
        }
        partners.insert(x, chosen);
    }
    let mut sample_verts: Vec<usize> = partners.values().flatten().cloned().collect();
    sample_verts.sort_unstable();
    sample_verts.dedup();
    for &v in &sample_verts {
        dist.entry(v).or_insert_with(|| graph.geodesic_distances(v));
    }

    // main sweep: raw (t, x, y) values
    struct Row {
        t: f64,
        d: f64,
        p: f64,
        dp: f64,
        vol: f64,
    }
    let mut rows: Vec<Row> = Vec::new();
    let mut nle_decades: BTreeMap<&'static str, BTreeMap<i64, f64>> = BTreeMap::new();
    for &t in &t_grid {
        let s_t = psi_inv(exps, t)?;
        for &x in &bases {
            let dx = &dist[&x];
            let vol_xt: f64 = (0..graph.vertex_count())
                .filter(|&y| dx[y] < s_t)
                .map(|y| graph.measure(y))
                .sum();
            for &y in &partners[&x] {
                let d = dx[y];
                let p = spectrum.heat_kernel(t, x, y);
                let dp = spectrum.dt_heat_kernel(t, x, y);
                for (name, eps) in NLE_EPSILONS {
                    if d < eps * s_t {
                        let floor = nle_decades.entry(name).or_default();
                        let entry = floor.entry(decade(t)).or_insert(f64::INFINITY);
                        let val = p * vol_xt;
                        if val < *entry {
                            *entry = val;
                        }
                    }
                }
                rows.push(Row {
                    t,
                    d,
                    p,
                    dp,
                    vol: vol_xt,
                });
            }
        }
    }
    for row in &rows {
        report
            .samples
            .push(vec![row.t, row.d, row.p, row.dp, row.vol]);
    }

    // --- on-diagonal decay: log p_t(x,x) vs log t, slope -> -alpha/beta ---
    // sampled on its own wider time grid (down to lattice-scale times, where
    // p_t(x,x) is already self-averaging) so the scaling regime between the
    // lattice transient and the mixing cap is long enough to fit
    {
        // the decay carries a log-periodic ripple with period Psi(L) in t
        // (L the family's length scale factor), so the window is an integer
        // number of periods ending at the mixing cap, starting above the
        // lattice transient, and the ripple is regressed out of the fit
        let scale = crate::graph::FractalFamily::parse(&graph.meta.family)
            .map(|f| f.scale_factor() as f64)
            .unwrap_or(2.0);
        let period = psi(exps, scale)?;
        let omega = 2.0 * std::f64::consts::PI / period.ln();
        let mut start_lo = psi(exps, 2.0 * graph.min_edge_len())?;
        // when the window crosses the branch point t = Psi(1), measure the
        // branch that governs the large-time end
        if psi_inv(exps, t_max)? >= 1.0 && psi_inv(exps, start_lo)? < 1.0 {
            start_lo = start_lo.max(psi(exps, 1.0)?);
        }
        let start_hi = t_max / period;
        let target_for = |t: f64| -> Result<f64> {
            Ok(if psi_inv(exps, t)? < 1.0 {
                exps.alpha1 / exps.beta1
            } else {
                exps.alpha2 / exps.beta2
            })
        };
        let fit = if start_hi > start_lo {
            // the curve s(t) = log(p_{Pt}/p_t) / log P (P one ripple period)
            // is ripple-free by self-similarity; it drifts at the early end
            // (lattice transient) and the late end (boundary dip towards
            // equilibrium), so the scaling exponent is read off the flattest
            // plateau of s over the admissible start times
            report.notes.push(format!(
                "ondiag starts [{start_lo:.4}, {start_hi:.4}], one-period ratios"
            ));
            let starts = log_grid(start_lo, start_hi, 48);
            let curve: Vec<f64> = starts
                .iter()
                .map(|&t| {
                    let mut acc = 0.0;
                    for &x in &bases {
                        let p0 = spectrum.heat_kernel(t, x, x);
                        let p1 = spectrum.heat_kernel(t * period, x, x);
                        acc += (p1 / p0).ln() / period.ln();
                    }
                    acc / bases.len() as f64
                })
                .collect();
            let min_pts = 8.min(curve.len());
            let mut best: Option<(f64, usize, f64)> = None; // (std, width, mean)
            let mut candidates: Vec<(f64, usize, f64)> = Vec::new();
            for i in 0..curve.len() {
                for j in (i + min_pts)..=curve.len() {
                    let w = &curve[i..j];
                    let n = w.len() as f64;
                    let mean = w.iter().sum::<f64>() / n;
                    let var = w.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / n;
                    let cand = (var.sqrt(), w.len(), mean);
                    if best.is_none_or(|b| cand.0 < b.0) {
                        best = Some(cand);
                    }
                    candidates.push(cand);
                }
            }
            best.map(|b| {
                let (std, width, mean) = candidates
                    .iter()
                    .copied()
                    .filter(|c| c.0 <= 1.25 * b.0 + 1e-12)
                    .max_by(|a, c| a.1.cmp(&c.1))
                    .unwrap_or(b);
                crate::verify::ExponentFit {
                    slope: mean,
                    intercept: 0.0,
                    residual: std,
                    samples: width,
                }
            })
        } else {
            // no room for a whole ripple period of start times: regress the
            // ripple out of the raw decay over what window there is
            let t_lo = (t_max / period).max(t_min);
            report.notes.push(format!(
                "ondiag window [{t_lo:.4}, {t_max:.4}], sub-period fallback"
            ));
            let mut samples: Vec<(f64, f64)> = Vec::new();
            for &t in &log_grid(t_lo, t_max, 24) {
                if (psi_inv(exps, t)? >= 1.0) == (psi_inv(exps, t_max)? >= 1.0) {
                    for &x in &bases {
                        samples.push((t, spectrum.heat_kernel(t, x, x)));
                    }
                }
            }
            fit_log_periodic(&samples, omega).ok()
        };
        let verdict = match fit {
            Some(fit) => {
                let target = target_for(t_max)?;
                let ok = (fit.slope + target).abs() <= plan.tolerances.heat_slope;
                if !ok {
                    report.notes.push(format!(
                        "ondiag: slope {:.4} vs target {:.4} exceeds tolerance {}",
                        fit.slope,
                        -target,
                        plan.tolerances.heat_slope
                    ));
                }
                report.fits.insert("ondiag".into(), fit);
                if ok {
                    Verdict::Pass
                } else {
                    Verdict::Fail
                }
            }
            None => Verdict::Inconclusive,
        };
        report.sub_verdicts.insert("ondiag".into(), verdict);
    }

    // --- UHK: minimal C1 over a grid of C2 ---
    let c2_grid = log_grid(0.25, 8.0, 8);
    let mut best: Option<(f64, f64)> = None; // (c2, log C1)
    for &c2 in &c2_grid {
        let mut sup = f64::NEG_INFINITY;
        for row in &rows {
            if row.p <= 0.0 || row.vol <= 0.0 {
                continue;
            }
            let log_val = row.p.ln() + row.vol.ln() + upsilon(exps, c2 * row.d, row.t)?;
            if log_val > sup {
                sup = log_val;
            }
        }
        report.notes.push(format!(
            "uhk: C1(C2={c2:.4}) = {:.6e}",
            sup.min(700.0).exp()
        ));
        if best.map_or(true, |(_, b)| sup < b) {
            best = Some((c2, sup));
        }
    }
    let c2_best = best.map(|(c2, _)| c2).unwrap_or(1.0);
    {
        let mut per_dec: BTreeMap<i64, f64> = BTreeMap::new();
        for row in &rows {
            if row.p <= 0.0 || row.vol <= 0.0 {
                continue;
            }
            let v = (row.p.ln() + row.vol.ln() + upsilon(exps, c2_best * row.d, row.t)?)
                .min(700.0)
                .exp();
            let e = per_dec.entry(decade(row.t)).or_insert(0.0);
            if v > *e {
                *e = v;
            }
        }
        record_stability(&mut report, "uhk", &per_dec, plan);
    }

    // --- NLE floors per epsilon ---
    for (name, _) in NLE_EPSILONS {
        let floors = nle_decades.remove(name).unwrap_or_default();
        let finite: BTreeMap<i64, f64> = floors
            .into_iter()
            .filter(|&(_, v)| v.is_finite())
            .collect();
        let mut bracket = Bracket::empty();
        for &v in finite.values() {
            bracket.push(v);
        }
        report.constants.insert(name.into(), bracket);
        if name == "nle_eps_1_4" {
            record_stability(&mut report, "nle", &finite, plan);
        }
    }

    // --- HHK: sup of t |p(x1,y1) - p(x2,y2)| / (ratio(d(x1,x2)) + ratio(d(y1,y2))) ---
    {
        let mut per_dec: BTreeMap<i64, f64> = BTreeMap::new();
        let mut rng = plan.rng_for("heat.hhk", 0);
        let quads_per_t = (plan.samples / 8).max(12);
        for &t in &t_grid {
            for _ in 0..quads_per_t {
                let x1 = sample_verts[rng.gen_range(0..sample_verts.len())];
                let x2 = sample_verts[rng.gen_range(0..sample_verts.len())];
                let y1 = sample_verts[rng.gen_range(0..sample_verts.len())];
                let y2 = sample_verts[rng.gen_range(0..sample_verts.len())];
                let dx = dist[&x1][x2];
                let dy = dist[&y1][y2];
                if (x1 == x2 && y1 == y2) || !dx.is_finite() || !dy.is_finite() {
                    continue;
                }
                let denom = safe_ratio(exps, dx)? + safe_ratio(exps, dy)?;
                if denom <= 0.0 {
                    continue;
                }
                let dp = (spectrum.heat_kernel(t, x1, y1) - spectrum.heat_kernel(t, x2, y2)).abs();
                let q = t * dp / denom;
                let e = per_dec.entry(decade(t)).or_insert(0.0);
                if q > *e {
                    *e = q;
                }
            }
        }
        record_stability(&mut report, "hhk", &per_dec, plan);
    }

    // --- HHKexp: triples (x, y1, y2) with exponential weights at c2_best ---
    {
        let mut per_dec: BTreeMap<i64, f64> = BTreeMap::new();
        for &t in &t_grid {
            for &x in &bases {
                let ps = &partners[&x];
                for i in 0..ps.len() {
                    for j in (i + 1)..ps.len() {
                        let (y1, y2) = (ps[i], ps[j]);
                        let dy = dist[&y1][y2];
                        if !dy.is_finite() || dy <= 0.0 {
                            continue;
                        }
                        let w1 = (-upsilon(exps, c2_best * dist[&x][y1], t)?).exp();
                        let w2 = (-upsilon(exps, c2_best * dist[&x][y2], t)?).exp();
                        let denom = safe_ratio(exps, dy)? * (w1 + w2);
                        if denom <= 0.0 {
                            continue;
                        }
                        let dp =
                            (spectrum.heat_kernel(t, x, y1) - spectrum.heat_kernel(t, x, y2)).abs();
                        let q = t * dp / denom;
                        let e = per_dec.entry(decade(t)).or_insert(0.0);
                        if q > *e {
                            *e = q;
                        }
                    }
                }
            }
        }
        record_stability(&mut report, "hhkexp", &per_dec, plan);
    }

    // --- Davies-type time-derivative bound ---
    {
        let mut per_dec: BTreeMap<i64, f64> = BTreeMap::new();
        for row in &rows {
            if row.vol <= 0.0 {
                continue;
            }
            let v = row.t
                * row.dp.abs()
                * row.vol
                * upsilon(exps, c2_best * row.d, row.t)?.min(700.0).exp();
            let e = per_dec.entry(decade(row.t)).or_insert(0.0);
            if v > *e {
                *e = v;
            }
        }
        record_stability(&mut report, "davies", &per_dec, plan);
    }

    report.notes.push(format!("uhk: C2 used = {c2_best:.4}"));
    report.finalize();
    Ok(report)
}

/// (Psi/Phi)(d) with the d = 0 degenerate case mapped to 0.
fn safe_ratio(exps: &crate::scaling::ScalingExponents, d: f64) -> Result<f64> {
    if d <= 0.0 {
        Ok(0.0)
    } else {
        ratio_psi_phi(exps, d)
    }
}

/// Record a per-decade bracket and the verdict from its spread factor.
fn record_stability(
    report: &mut ConditionReport,
    name: &str,
    per_decade: &BTreeMap<i64, f64>,
    plan: &ExperimentPlan,
) {
    let mut bracket = Bracket::empty();
    for &v in per_decade.values() {
        bracket.push(v);
    }
    report.constants.insert(name.to_string(), bracket);
    let verdict = match per_decade_stability(per_decade) {
        None => Verdict::Inconclusive,
        Some(f) if f < plan.tolerances.bracket_factor && bracket.min > 0.0 => Verdict::Pass,
        Some(f) => {
            report.notes.push(format!(
                "{name}: per-decade spread factor {f:.3} exceeds {}",
                plan.tolerances.bracket_factor
            ));
            Verdict::Fail
        }
    };
    report.sub_verdicts.insert(name.to_string(), verdict);
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{build_prefractal, BuildOptions, FractalFamily};
    use crate::scaling::ScalingExponents;

    #[test]
    fn interval_prefractal_passes() {
        let g = build_prefractal(FractalFamily::Interval, 7, &BuildOptions::default()).unwrap();
        let s = Spectrum::compute(&g).unwrap();
        let plan = ExperimentPlan::new(ScalingExponents::preset("interval").unwrap(), 7);
        let r = check_heat_kernel_bounds(&g, &s, &plan).unwrap();
        assert_eq!(
            r.sub_verdicts["ondiag"],
            Verdict::Pass,
            "report: {}",
            r.to_json()
        );
        assert_eq!(r.sub_verdicts["nle"], Verdict::Pass, "{}", r.to_json());
        // Gaussian comparison: the NLE floor on the line should be within a
        // factor 2 of (4 pi)^{-1/2} (kernel of d^2/dx^2 at the near-diagonal
        // scale), well above the 0.1 acceptance floor
        let b = r.constants["nle_eps_1_4"];
        assert!(b.min > 0.1, "floor {}", b.min);
        assert!(b.min < 2.0 * 0.2821 && b.max > 0.5 * 0.2821, "{:?}", b);
    }

    #[test]
    fn gasket_ondiag_slope() {
        let g = build_prefractal(FractalFamily::Gasket, 5, &BuildOptions::default()).unwrap();
        let s = Spectrum::compute(&g).unwrap();
        let plan = ExperimentPlan::new(ScalingExponents::preset("gasket").unwrap(), 3);
        let r = check_heat_kernel_bounds(&g, &s, &plan).unwrap();
        let fit = r.fits.get("ondiag").expect("ondiag fit");
        let target = -(3f64.ln() / 5f64.ln());
        assert!(
            (fit.slope - target).abs() < 0.05,
            "slope {} target {target}",
            fit.slope
        );
        assert_eq!(r.sub_verdicts["nle"], Verdict::Pass, "{}", r.to_json());
    }
}
