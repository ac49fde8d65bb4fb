use serde::{Deserialize, Serialize};

use super::checks::{CheckOutcome, Gate};

/// Which case a report belongs to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseInfo {
    /// Position in the config's `cases` array.
    pub index: usize,
    pub identity: String,
    /// `configured` or `randomized`.
    pub space: String,
    pub weights: Vec<f64>,
    pub bindings: serde_json::Value,
}

/// Outcome of one identity check on one backend.
///
/// Every field is always present; fields that do not apply are `null`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub case: CaseInfo,
    /// `exact`, `mc`, `pointwise`, or `cross` for the exact-vs-mc coherence row.
    pub backend: String,
    pub lhs: Option<f64>,
    pub rhs: Option<f64>,
    pub defect: Option<f64>,
    pub gate: Option<Gate>,
    pub pass: bool,
    pub seed: Option<u64>,
    pub n: Option<u64>,
    pub state_count: Option<u64>,
    pub tail_bound: Option<f64>,
    pub boundary_leak: Option<f64>,
    pub wall_time_ms: Option<f64>,
    pub note: Option<String>,
    pub error: Option<String>,
}

impl VerificationReport {
    pub(crate) fn from_outcome(case: CaseInfo, backend: &str, o: &CheckOutcome) -> Self {
        Self {
            case,
            backend: backend.to_string(),
            lhs: Some(o.lhs),
            rhs: Some(o.rhs),
            defect: Some(o.defect),
            gate: Some(o.gate.clone()),
            pass: o.pass,
            seed: None,
            n: o.n,
            state_count: o.state_count,
            tail_bound: o.tail_bound,
            boundary_leak: None,
            wall_time_ms: None,
            note: o.note.clone(),
            error: None,
        }
    }

    pub(crate) fn failed(case: CaseInfo, backend: &str, reason: String) -> Self {
        Self {
            case,
            backend: backend.to_string(),
            lhs: None,
            rhs: None,
            defect: None,
            gate: None,
            pass: false,
            seed: None,
            n: None,
            state_count: None,
            tail_bound: None,
            boundary_leak: None,
            wall_time_ms: None,
            note: None,
            error: Some(reason),
        }
    }

    /// One human-readable line.
    pub fn summary(&self) -> String {
        let status = if self.pass { "PASS" } else { "FAIL" };
        let detail = match (&self.defect, &self.gate, &self.error) {
            (_, _, Some(e)) => format!("error: {e}"),
            (Some(d), Some(g), None) => format!("defect {d:.3e} gate {:?} {:.3e}", g.kind, g.value),
            _ => String::new(),
        };
        format!(
            "{status} [{}#{} {} {}] {detail}",
            self.case.space, self.case.index, self.case.identity, self.backend
        )
    }
}

/// Pretty JSON array followed by a newline. Stable for equal inputs.
pub fn to_json(reports: &[VerificationReport]) -> String {
    let mut s = serde_json::to_string_pretty(reports).expect("reports serialize");
    s.push('\n');
    s
}
