//! Cross-tabulation of the five equivalent-condition verdicts on one graph.
//! The implications between them are theorems, so a disagreement flags a
//! tolerance or window problem in the experiment, never a counterexample.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::verify::{ConditionReport, Verdict, REPORT_SCHEMA};

/// The conditions the equivalence statement ties together.
pub const EQUIVALENT_CONDITIONS: [&str; 5] = ["hr", "wbe", "hhk", "hhkexp", "nle"];

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EquivalenceSummary {
    pub schema: u32,
    pub graph: String,
    /// verdicts of the five tied conditions, where reported
    pub verdicts: BTreeMap<String, Verdict>,
    /// verdicts of everything else found in the reports
    pub other_verdicts: BTreeMap<String, Verdict>,
    /// false when some tied conditions pass while others fail
    pub consistent: bool,
    pub notes: Vec<String>,
}

pub fn equivalence_matrix(reports: &[ConditionReport]) -> Result<EquivalenceSummary> {
    if reports.is_empty() {
        return Err(Error::InvalidArgument(
            "equivalence matrix needs at least one report".into(),
        ));
    }
    let graph = reports[0].graph.clone();
    for r in reports {
        if r.graph != graph {
            return Err(Error::InvalidArgument(format!(
                "mixed graph hashes: {} vs {}",
                graph, r.graph
            )));
        }
        if r.schema != REPORT_SCHEMA {
            return Err(Error::Config(format!(
                "report '{}' has schema {} (expected {REPORT_SCHEMA})",
                r.condition, r.schema
            )));
        }
    }
    let mut verdicts = BTreeMap::new();
    let mut other = BTreeMap::new();
    for r in reports {
        for (name, &v) in &r.sub_verdicts {
            if EQUIVALENT_CONDITIONS.contains(&name.as_str()) {
                verdicts.insert(name.clone(), v);
            } else {
                other.insert(name.clone(), v);
            }
        }
    }
    let any_pass = verdicts.values().any(|&v| v == Verdict::Pass);
    let any_fail = verdicts.values().any(|&v| v == Verdict::Fail);
    let consistent = !(any_pass && any_fail);
    let mut notes = Vec::new();
    if !consistent {
        notes.push(
            "tied conditions disagree: check tolerances and window coverage".to_string(),
        );
    }
    if verdicts.len() < EQUIVALENT_CONDITIONS.len() {
        let missing: Vec<&str> = EQUIVALENT_CONDITIONS
            .iter()
            .filter(|&&c| !verdicts.contains_key(c))
            .cloned()
            .collect();
        notes.push(format!("not reported: {}", missing.join(", ")));
    }
    Ok(EquivalenceSummary {
        schema: REPORT_SCHEMA,
        graph,
        verdicts,
        other_verdicts: other,
        consistent,
        notes,
    })
}

impl EquivalenceSummary {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("summary serialization cannot fail")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{build_compact, BuildOptions, FractalFamily};

    fn stub(graph_hex: &str, subs: &[(&str, Verdict)]) -> ConditionReport {
        let g = build_compact(FractalFamily::Interval, 1, &BuildOptions::default()).unwrap();
        let mut r = ConditionReport::new("stub", &g);
        r.graph = graph_hex.to_string();
        for (k, v) in subs {
            r.sub_verdicts.insert(k.to_string(), *v);
        }
        r
    }

    #[test]
    fn consistent_when_all_pass() {
        let r1 = stub("aa", &[("hr", Verdict::Pass), ("nle", Verdict::Pass)]);
        let r2 = stub("aa", &[("wbe", Verdict::Pass)]);
        let s = equivalence_matrix(&[r1, r2]).unwrap();
        assert!(s.consistent);
        assert_eq!(s.verdicts.len(), 3);
    }

    #[test]
    fn flags_disagreement() {
        let r = stub("aa", &[("hr", Verdict::Pass), ("nle", Verdict::Fail)]);
        let s = equivalence_matrix(&[r]).unwrap();
        assert!(!s.consistent);
    }

    #[test]
    fn refuses_mixed_graphs() {
        let r1 = stub("aa", &[("hr", Verdict::Pass)]);
        let r2 = stub("bb", &[("nle", Verdict::Pass)]);
        assert!(equivalence_matrix(&[r1, r2]).is_err());
    }
}
