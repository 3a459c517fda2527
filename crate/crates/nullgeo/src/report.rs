//! Verification reports: one entry per identity with residual statistics
//! and a pass/fail/skip verdict. JSON output is deterministic for a fixed
//! spec and seed up to the elapsed-time field.

use serde::{Deserialize, Serialize};

pub const REPORT_SCHEMA: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct IdentityResult {
    pub id: String,
    pub description: String,
    pub verdict: Verdict,
    pub max_residual: f64,
    pub mean_residual: f64,
    pub samples: usize,
    pub tolerance: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub skipped_reason: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    Fail,
    Skip,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VerificationReport {
    pub schema: u32,
    pub tool_version: String,
    pub spec_name: Option<String>,
    pub spec_fingerprint: String,
    pub suite: String,
    pub elapsed_ms: u128,
    pub identities: Vec<IdentityResult>,
}

impl VerificationReport {
    pub fn new(
        spec_name: Option<String>,
        fingerprint: &str,
        suite: &str,
        mut identities: Vec<IdentityResult>,
        elapsed_ms: u128,
    ) -> VerificationReport {
        identities.sort_by(|a, b| a.id.cmp(&b.id));
        VerificationReport {
            schema: REPORT_SCHEMA,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            spec_name,
            spec_fingerprint: fingerprint.to_string(),
            suite: suite.to_string(),
            elapsed_ms,
            identities,
        }
    }

    pub fn all_passed(&self) -> bool {
        self.identities.iter().all(|r| r.verdict != Verdict::Fail)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialization cannot fail")
    }

    /// Human-readable table.
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        let name = self.spec_name.as_deref().unwrap_or("<unnamed>");
        out.push_str(&format!(
            "spec: {name}  suite: {}  fingerprint: {}\n",
            self.suite,
            &self.spec_fingerprint[..16]
        ));
        out.push_str(&format!(
            "{:<16} {:<6} {:>12} {:>12} {:>8}  {}\n",
            "identity", "status", "max", "mean", "samples", "detail"
        ));
        for r in &self.identities {
            let status = match r.verdict {
                Verdict::Pass => "pass",
                Verdict::Fail => "FAIL",
                Verdict::Skip => "skip",
            };
            let detail = match (&r.skipped_reason, &r.note) {
                (Some(reason), _) => reason.clone(),
                (None, Some(note)) => note.clone(),
                _ => String::new(),
            };
            out.push_str(&format!(
                "{:<16} {:<6} {:>12.3e} {:>12.3e} {:>8}  {}\n",
                r.id, status, r.max_residual, r.mean_residual, r.samples, detail
            ));
        }
        let (pass, fail, skip) = self.identities.iter().fold((0, 0, 0), |acc, r| match r.verdict {
            Verdict::Pass => (acc.0 + 1, acc.1, acc.2),
            Verdict::Fail => (acc.0, acc.1 + 1, acc.2),
            Verdict::Skip => (acc.0, acc.1, acc.2 + 1),
        });
        out.push_str(&format!(
            "{pass} passed, {fail} failed, {skip} skipped ({} ms)\n",
            self.elapsed_ms
        ));
        out
    }
}
