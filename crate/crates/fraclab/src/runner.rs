//! Batch experiment orchestration: parse a run config, build the graph,
//! compute heat tables (content-hash cached), run the requested condition
//! checks and write reports plus a consolidated summary.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::graph::{
    build_blowup, build_cable, build_compact, build_prefractal, graph_to_json, BlowupSpec,
    BuildOptions, FractalFamily, WeightedGraph,
};
use crate::heat::{HeatKernelTable, Spectrum, SPECTRUM_CAP};
use crate::scaling::{psi, ScalingExponents};
use crate::verify::{
    check_functional_inequalities, check_harmonic_regularity, check_heat_kernel_bounds,
    check_volume, equivalence_matrix, ConditionReport, EquivalenceSummary, ExperimentPlan,
    Tolerances, Verdict, REPORT_SCHEMA,
};

pub const EXIT_PASS: i32 = 0;
pub const EXIT_NO_REPORTS: i32 = 1;
pub const EXIT_FAIL: i32 = 2;
pub const EXIT_INCONCLUSIVE: i32 = 3;
pub const EXIT_INVALID_CONFIG: i32 = 64;

/// Condition names accepted in `RunConfig::conditions`.
pub const CONDITION_NAMES: [&str; 4] = ["volume", "heat", "harmonic", "functional"];

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub graph: GraphSpec,
    pub exponents: ExponentSpec,
    pub conditions: Vec<String>,
    #[serde(default)]
    pub samples: Option<usize>,
    /// mandatory so every run is reproducible by construction
    pub seed: u64,
    #[serde(default)]
    pub tolerances: Option<Tolerances>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default = "default_true")]
    pub cache: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphSpec {
    #[serde(default)]
    pub family: Option<String>,
    #[serde(default)]
    pub blowup: Option<BlowupConfig>,
    #[serde(default)]
    pub level: Option<u32>,
    /// prefractal window of the unbounded space (default) vs compact set
    #[serde(default = "default_true")]
    pub prefractal: bool,
    /// subdivide every edge into k cable segments
    #[serde(default)]
    pub cable_k: Option<u32>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlowupConfig {
    pub cell: String,
    pub model: String,
    pub cell_level: u32,
    pub blowup_level: u32,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ExponentSpec {
    Preset(String),
    Explicit(ScalingExponents),
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let config: RunConfig =
            serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        let errors = config.validation_errors();
        if errors.is_empty() {
            Ok(config)
        } else {
            Err(Error::Config(
                serde_json::to_string(&errors).expect("string list serializes"),
            ))
        }
    }

    /// Machine-readable list of everything wrong with the config.
    pub fn validation_errors(&self) -> Vec<String> {
        let mut errors = Vec::new();
        match (&self.graph.family, &self.graph.blowup) {
            (Some(_), Some(_)) => {
                errors.push("graph: family and blowup are mutually exclusive".into())
            }
            (None, None) => errors.push("graph: one of family or blowup is required".into()),
            (Some(f), None) => {
                if FractalFamily::parse(f).is_err() {
                    errors.push(format!("graph.family: unknown family '{f}'"));
                }
                if self.graph.level.is_none() {
                    errors.push("graph.level: required with graph.family".into());
                }
            }
            (None, Some(b)) => {
                for (key, name) in [("cell", &b.cell), ("model", &b.model)] {
                    if FractalFamily::parse(name).is_err() {
                        errors.push(format!("graph.blowup.{key}: unknown family '{name}'"));
                    }
                }
            }
        }
        if let ExponentSpec::Preset(name) = &self.exponents {
            if ScalingExponents::preset(name).is_err() {
                errors.push(format!("exponents: unknown preset '{name}'"));
            }
        }
        if self.conditions.is_empty() {
            errors.push("conditions: at least one condition is required".into());
        }
        for c in &self.conditions {
            if !CONDITION_NAMES.contains(&c.as_str()) {
                errors.push(format!(
                    "conditions: unknown condition '{c}' (known: {})",
                    CONDITION_NAMES.join(", ")
                ));
            }
        }
        errors
    }

    pub fn exponents(&self) -> Result<ScalingExponents> {
        match &self.exponents {
            ExponentSpec::Preset(name) => ScalingExponents::preset(name),
            ExponentSpec::Explicit(e) => Ok(e.clone()),
        }
    }

    pub fn build_graph(&self) -> Result<WeightedGraph> {
        let opts = BuildOptions::default();
        let base = if let Some(b) = &self.graph.blowup {
            build_blowup(
                &BlowupSpec {
                    cell: FractalFamily::parse(&b.cell)?,
                    model: FractalFamily::parse(&b.model)?,
                    cell_level: b.cell_level,
                    blowup_level: b.blowup_level,
                },
                &opts,
            )?
        } else {
            let family = FractalFamily::parse(self.graph.family.as_deref().unwrap_or(""))?;
            let level = self
                .graph
                .level
                .ok_or_else(|| Error::Config("graph.level is required".into()))?;
            if self.graph.prefractal {
                build_prefractal(family, level, &opts)?
            } else {
                build_compact(family, level, &opts)?
            }
        };
        match self.graph.cable_k {
            Some(k) => build_cable(&base, k),
            None => Ok(base),
        }
    }

    pub fn plan(&self) -> Result<ExperimentPlan> {
        let mut plan = ExperimentPlan::new(self.exponents()?, self.seed);
        if let Some(s) = self.samples {
            plan.samples = s;
        }
        if let Some(t) = &self.tolerances {
            plan.tolerances = t.clone();
        }
        Ok(plan)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunSummary {
    pub schema: u32,
    pub graph: String,
    pub vertex_count: usize,
    pub seed: u64,
    pub verdicts: BTreeMap<String, Verdict>,
    pub equivalence: Option<EquivalenceSummary>,
    pub cache_hits: Vec<String>,
    pub notes: Vec<String>,
    pub exit_code: i32,
}

/// Exit status derived from overall condition verdicts: any fail wins, then
/// any inconclusive, then pass.
pub fn exit_code_for(verdicts: &BTreeMap<String, Verdict>) -> i32 {
    if verdicts.values().any(|&v| v == Verdict::Fail) {
        EXIT_FAIL
    } else if verdicts.values().any(|&v| v == Verdict::Inconclusive) {
        EXIT_INCONCLUSIVE
    } else {
        EXIT_PASS
    }
}

/// Content-hash key for a heat table: graph fingerprint + exponents + grid.
fn heat_cache_key(graph: &WeightedGraph, exps: &ScalingExponents, times: &[f64]) -> String {
    let mut h = Sha256::new();
    h.update(graph.fingerprint().to_le_bytes());
    for v in [exps.alpha1, exps.alpha2, exps.beta1, exps.beta2] {
        h.update(v.to_bits().to_le_bytes());
    }
    for t in times {
        h.update(t.to_bits().to_le_bytes());
    }
    let digest = h.finalize();
    digest[..8].iter().map(|b| format!("{b:02x}")).collect()
}

/// Default diagonal heat table over the mesoscopic time window: one row per
/// central base vertex, log-spaced times between Psi(4h) and Psi(diam/4).
pub fn heat_table_grid(
    graph: &WeightedGraph,
    plan: &ExperimentPlan,
) -> Result<(Vec<f64>, Vec<(usize, usize)>)> {
    use rand::seq::SliceRandom;
    let h = graph.min_edge_len();
    let d4 = graph.diameter_estimate() / 4.0;
    let (lo, hi) = (psi(&plan.exps, 4.0 * h)?, psi(&plan.exps, d4.max(8.0 * h))?);
    let times = crate::verify::log_grid(lo, hi.max(lo * 16.0), 32);
    let mut bases = graph.central_vertices(0.25);
    let mut rng = plan.rng_for("heat.bases", 0);
    bases.shuffle(&mut rng);
    bases.truncate(8);
    let pairs = bases.iter().map(|&x| (x, x)).collect();
    Ok((times, pairs))
}

/// Compute (or load from cache) the heat table and write its artifacts.
/// Returns the cache key and whether the cache was hit.
pub fn heat_table_artifacts(
    graph: &WeightedGraph,
    spectrum: &Spectrum,
    plan: &ExperimentPlan,
    out: &Path,
    use_cache: bool,
) -> Result<(String, bool)> {
    let (times, pairs) = heat_table_grid(graph, plan)?;
    let key = heat_cache_key(graph, &plan.exps, &times);
    let bin_path = out.join(format!("heat-{key}.bin"));
    let csv_path = out.join(format!("heat-{key}.csv"));
    let mut hit = false;
    let table = if use_cache && bin_path.is_file() {
        hit = true;
        HeatKernelTable::read_binary(fs::File::open(&bin_path)?)?
    } else {
        let table = HeatKernelTable::compute(spectrum, &times, &pairs);
        table.write_binary(fs::File::create(&bin_path)?)?;
        table
    };
    if !csv_path.is_file() || !use_cache {
        table.write_csv(fs::File::create(&csv_path)?)?;
    }
    Ok((key, hit))
}

fn write_report(out: &Path, name: &str, report: &ConditionReport) -> Result<()> {
    fs::write(
        out.join(format!("report-{name}.json")),
        report.to_json() + "\n",
    )?;
    report.write_samples_csv(fs::File::create(out.join(format!("samples-{name}.csv")))?)?;
    Ok(())
}

/// Run every requested condition, writing all artifacts under the output
/// directory. Returns the summary (also written as summary.json).
pub fn run(config: &RunConfig, out_dir: &Path) -> Result<RunSummary> {
    let errors = config.validation_errors();
    if !errors.is_empty() {
        return Err(Error::Config(
            serde_json::to_string(&errors).expect("string list serializes"),
        ));
    }
    fs::create_dir_all(out_dir)?;
    let graph = config.build_graph()?;
    let plan = config.plan()?;
    fs::write(out_dir.join("graph.json"), graph_to_json(&graph) + "\n")?;

    let needs_spectrum = config
        .conditions
        .iter()
        .any(|c| c == "heat" || c == "functional");
    let spectrum = if needs_spectrum && graph.vertex_count() <= SPECTRUM_CAP {
        Some(Spectrum::compute(&graph)?)
    } else {
        None
    };

    let mut summary = RunSummary {
        schema: REPORT_SCHEMA,
        graph: format!("{:016x}", graph.fingerprint()),
        vertex_count: graph.vertex_count(),
        seed: config.seed,
        verdicts: BTreeMap::new(),
        equivalence: None,
        cache_hits: Vec::new(),
        notes: Vec::new(),
        exit_code: EXIT_PASS,
    };
    let mut reports: Vec<ConditionReport> = Vec::new();

    for condition in &config.conditions {
        let report = match condition.as_str() {
            "volume" => check_volume(&graph, &plan)?,
            "harmonic" => {
                let trials = config.samples.unwrap_or(200);
                check_harmonic_regularity(&graph, &plan, trials)?
            }
            "functional" => check_functional_inequalities(&graph, spectrum.as_ref(), &plan)?,
            "heat" => match &spectrum {
                Some(s) => {
                    let (key, hit) =
                        heat_table_artifacts(&graph, s, &plan, out_dir, config.cache)?;
                    if hit {
                        summary.cache_hits.push(format!("heat-{key}.bin"));
                    }
                    check_heat_kernel_bounds(&graph, s, &plan)?
                }
                None => {
                    // graph above the dense-spectrum cap: report rather
                    // than abort, so the run still yields artifacts
                    let mut r = ConditionReport::new("heat-kernel-bounds", &graph);
                    r.notes.push(format!(
                        "graph has {} vertices, dense spectrum cap is {SPECTRUM_CAP}",
                        graph.vertex_count()
                    ));
                    for name in ["ondiag", "uhk", "nle", "hhk", "hhkexp", "davies"] {
                        r.sub_verdicts.insert(name.into(), Verdict::Inconclusive);
                    }
                    r.finalize();
                    r
                }
            },
            other => return Err(Error::Config(format!("unknown condition '{other}'"))),
        };
        write_report(out_dir, condition, &report)?;
        summary.verdicts.insert(condition.clone(), report.verdict);
        reports.push(report);
    }

    match equivalence_matrix(&reports) {
        Ok(eq) => summary.equivalence = Some(eq),
        Err(e) => summary.notes.push(format!("equivalence matrix: {e}")),
    }
    summary.exit_code = exit_code_for(&summary.verdicts);
    fs::write(
        out_dir.join("summary.json"),
        serde_json::to_string_pretty(&summary).expect("summary serializes") + "\n",
    )?;
    Ok(summary)
}

/// Consolidated human-readable table plus CSV rows from the reports in a run
/// directory; never recomputes anything. Reports are grouped per graph hash.
pub fn report(run_dir: &Path) -> Result<(String, String)> {
    let mut reports: Vec<(String, ConditionReport)> = Vec::new();
    let mut entries: Vec<PathBuf> = fs::read_dir(run_dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.starts_with("report-") && n.ends_with(".json"))
        })
        .collect();
    entries.sort();
    for path in entries {
        let name = path.file_name().unwrap().to_string_lossy().into_owned();
        let text = fs::read_to_string(&path)?;
        let r: ConditionReport = serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("{name}: not a condition report: {e}")))?;
        if r.schema != REPORT_SCHEMA {
            return Err(Error::Config(format!(
                "{name}: schema {} (expected {REPORT_SCHEMA})",
                r.schema
            )));
        }
        reports.push((name, r));
    }
    if reports.is_empty() {
        return Err(Error::Config("no reports".into()));
    }

    // group per graph hash; no aggregation across graphs
    let mut groups: BTreeMap<String, Vec<&(String, ConditionReport)>> = BTreeMap::new();
    for entry in &reports {
        groups.entry(entry.1.graph.clone()).or_default().push(entry);
    }
    let mut text = String::new();
    let mut csv = String::from("graph,condition,verdict,kind,name,value1,value2\n");
    for (graph, group) in &groups {
        text.push_str(&format!("graph {graph}\n"));
        text.push_str(&format!(
            "  {:<28} {:<14} {}\n",
            "condition", "verdict", "details"
        ));
        for (_, r) in group {
            let verdict = format!("{:?}", r.verdict).to_lowercase();
            let mut details: Vec<String> = Vec::new();
            for (name, fit) in &r.fits {
                details.push(format!("{name}: slope {:.4}", fit.slope));
                csv.push_str(&format!(
                    "{graph},{},{verdict},fit,{name},{:.17e},{:.17e}\n",
                    r.condition, fit.slope, fit.residual
                ));
            }
            for (name, b) in &r.constants {
                details.push(format!("{name}: [{:.3e}, {:.3e}]", b.min, b.max));
                csv.push_str(&format!(
                    "{graph},{},{verdict},constant,{name},{:.17e},{:.17e}\n",
                    r.condition, b.min, b.max
                ));
            }
            text.push_str(&format!(
                "  {:<28} {:<14} {}\n",
                r.condition,
                verdict,
                details.join("; ")
            ));
        }
        text.push('\n');
    }
    Ok((text, csv))
}
