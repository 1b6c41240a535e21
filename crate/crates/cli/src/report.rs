//! Pass/fail aggregation and exit codes.

use std::io::{self, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CRITERION_FAILED: i32 = 1;
pub const EXIT_CRASHED: i32 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Pass,
    Fail,
    /// The run itself errored.
    Crash,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriterionResult {
    pub id: u32,
    pub name: String,
    pub status: Status,
    pub detail: String,
}

/// 0 when everything passed (or nothing ran), 1 when some criterion failed,
/// 2 when some run crashed.
pub fn exit_code(results: &[CriterionResult]) -> i32 {
    if results.iter().any(|r| r.status == Status::Crash) {
        EXIT_CRASHED
    } else if results.iter().any(|r| r.status == Status::Fail) {
        EXIT_CRITERION_FAILED
    } else {
        EXIT_OK
    }
}

/// One line per result, then the summary table as CSV if `csv_path` is
/// given. Returns the exit code.
pub fn emit_report<W: Write>(results: &[CriterionResult], out: &mut W, csv_path: Option<&Path>) -> io::Result<i32> {
    for r in results {
        let tag = match r.status {
            Status::Pass => "PASS",
            Status::Fail => "FAIL",
            Status::Crash => "CRASH",
        };
        writeln!(out, "[{tag}] {:>2} {}: {}", r.id, r.name, r.detail)?;
    }
    if !results.is_empty() {
        let passed = results.iter().filter(|r| r.status == Status::Pass).count();
        writeln!(out, "{passed}/{} criteria passed", results.len())?;
    }
    if let Some(path) = csv_path {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["id", "name", "status", "detail"])?;
        for r in results {
            let status = match r.status {
                Status::Pass => "pass",
                Status::Fail => "fail",
                Status::Crash => "crash",
            };
            w.write_record([r.id.to_string().as_str(), &r.name, status, &r.detail])?;
        }
        w.flush()?;
    }
    Ok(exit_code(results))
}

/// Reads a summary written by [`emit_report`].
pub fn load_report(path: &Path) -> anyhow::Result<Vec<CriterionResult>> {
    if !path.exists() {
        anyhow::bail!("missing report artifact {}", path.display());
    }
    let mut rd = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for rec in rd.records() {
        let rec = rec?;
        let status = match &rec[2] {
            "pass" => Status::Pass,
            "fail" => Status::Fail,
            "crash" => Status::Crash,
            other => anyhow::bail!("bad status `{other}` in {}", path.display()),
        };
        out.push(CriterionResult { id: rec[0].parse()?, name: rec[1].to_string(), status, detail: rec[3].to_string() });
    }
    Ok(out)
}
