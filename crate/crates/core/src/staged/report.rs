use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::eval::ScoreReport;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportMeta {
    pub backend: String,
    pub timeout_ms: u64,
    pub instances: usize,
    pub stage1_instances: usize,
    pub stage1_pool_size: usize,
    /// Virtual-best PAR-10 after each portfolio pick.
    pub vbs_trace: Vec<f64>,
    pub final_strategy: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ReportRow {
    Score(ScoreReport),
    Error { strategy: String, error: String },
}

/// Score rows, optionally with pipeline metadata. Contains no timings, so
/// replays with the same inputs serialize identically.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct Report {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub meta: Option<ReportMeta>,
    pub rows: Vec<ReportRow>,
}

impl Report {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports serialize")
    }

    pub fn from_json(text: &str) -> serde_json::Result<Self> {
        serde_json::from_str(text)
    }

    /// Human-readable summary, one block per row.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        if let Some(m) = &self.meta {
            let _ = writeln!(out, "backend: {}", m.backend);
            let _ = writeln!(out, "timeout: {} ms", m.timeout_ms);
            let _ = writeln!(out, "instances: {} (stage 1: {})", m.instances, m.stage1_instances);
            let _ = writeln!(out, "stage-1 pool: {}", m.stage1_pool_size);
            let _ = writeln!(out, "final: {}", m.final_strategy);
            out.push('\n');
        }
        for row in &self.rows {
            match row {
                ReportRow::Score(r) => {
                    let _ = writeln!(out, "strategy: {}", r.strategy);
                    let _ = writeln!(out, "  solved: {:.1}% ({}/{} correct)", r.percent_solved(), r.correct_count, r.total);
                    if r.wrong_count > 0 {
                        let _ = writeln!(out, "  WRONG: {}", r.wrong_count);
                    }
                    let _ = writeln!(out, "  PAR-2: {:.3} s", r.par2);
                    let _ = writeln!(out, "  PAR-10: {:.3} s", r.par10);
                }
                ReportRow::Error { strategy, error } => {
                    let _ = writeln!(out, "strategy: {strategy}");
                    let _ = writeln!(out, "  error: {error}");
                }
            }
        }
        out
    }

    pub fn wrong_answers(&self) -> usize {
        self.rows
            .iter()
            .map(|r| match r {
                ReportRow::Score(s) => s.wrong_count,
                ReportRow::Error { .. } => 0,
            })
            .sum()
    }
}
