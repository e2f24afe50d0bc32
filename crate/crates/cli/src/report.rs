//! JSON run reports.

use std::fs;
use std::path::Path;

use framecond::conic::SolveStatus;
use framecond::frames::FrameReport;
use serde::{Deserialize, Serialize};
use serde_json::Value;

/// Bumped when the report layout changes.
pub const REPORT_FORMAT: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverReport {
    pub status: SolveStatus,
    pub iterations: usize,
    pub gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Versions {
    pub framecond: String,
    pub report_format: u32,
}

impl Default for Versions {
    fn default() -> Self {
        Self {
            framecond: env!("CARGO_PKG_VERSION").to_string(),
            report_format: REPORT_FORMAT,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportFile {
    /// The command and every option it ran with.
    pub config: Value,
    pub seed: Option<u64>,
    pub frame_stats: Option<FrameReport>,
    pub result: Value,
    pub solver: Option<SolverReport>,
    pub versions: Versions,
}

pub fn to_json(report: &ReportFile) -> serde_json::Result<String> {
    // Non-finite floats serialize as null.
    let mut s = serde_json::to_string_pretty(report)?;
    s.push('\n');
    Ok(s)
}

pub fn write_report(path: &Path, report: &ReportFile) -> std::io::Result<()> {
    let text = to_json(report).map_err(std::io::Error::other)?;
    fs::write(path, text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn keys_are_sorted_and_stable() {
        let r = ReportFile {
            config: json!({"zeta": 1, "alpha": 2}),
            seed: Some(3),
            frame_stats: None,
            result: json!({"q": 0.5, "b": [1, 2]}),
            solver: Some(SolverReport {
                status: SolveStatus::Optimal,
                iterations: 4,
                gap: 1e-9,
            }),
            versions: Versions::default(),
        };
        let a = to_json(&r).unwrap();
        assert_eq!(a, to_json(&r).unwrap());
        assert!(a.find("\"alpha\"").unwrap() < a.find("\"zeta\"").unwrap());
        let back: ReportFile = serde_json::from_str(&a).unwrap();
        assert_eq!(back, r);
    }
}
