use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use serde::Serialize;

use super::create;
use crate::error::{Error, Result};
use crate::sim::{ChunkReport, ExperimentRow, SessionSummary};

/// Column order of `chunks.csv`.
pub const CHUNK_COLUMNS: [&str; 24] = [
    "chunk",
    "scheme",
    "request_time_s",
    "bytes",
    "tau_s",
    "buffer_before_s",
    "buffer_after_s",
    "wait_s",
    "predicted_bw_mbps",
    "realized_bw_mbps",
    "d_t_m",
    "eta_star",
    "predicted_d_t_m",
    "predicted_eta_star",
    "pose_error_m",
    "visible_tiles",
    "predicted_visible_tiles",
    "decision_q1",
    "q1",
    "q2",
    "q3",
    "q4",
    "qoe",
    "levels",
];

pub fn write_chunks_csv(path: &Path, chunks: &[ChunkReport]) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    let err = |e: csv::Error| Error::invalid(format!("{}: {e}", path.display()));
    w.write_record(CHUNK_COLUMNS).map_err(err)?;
    for c in chunks {
        let levels = c.levels.iter().map(|l| l.to_string()).collect::<Vec<_>>().join(";");
        let row = [
            c.chunk.to_string(),
            c.scheme.to_string(),
            c.request_time.to_string(),
            c.bytes.to_string(),
            c.tau.to_string(),
            c.buffer_before.to_string(),
            c.buffer_after.to_string(),
            c.wait.to_string(),
            c.predicted_bw_mbps.to_string(),
            c.realized_bw_mbps.to_string(),
            c.d_t.to_string(),
            c.eta_star.to_string(),
            c.predicted_d_t.to_string(),
            c.predicted_eta_star.to_string(),
            c.pose_error_m.to_string(),
            c.visible_tiles.to_string(),
            c.predicted_visible_tiles.to_string(),
            c.decision_q1.to_string(),
            c.qoe.q1.to_string(),
            c.qoe.q2.to_string(),
            c.qoe.q3.to_string(),
            c.qoe.q4.to_string(),
            c.qoe.total.to_string(),
            levels,
        ];
        w.write_record(&row).map_err(err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)
        .map_err(|e| Error::invalid(format!("{}: {e}", path.display())))?;
    writeln!(w).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_summary_json(path: &Path, summary: &SessionSummary) -> Result<()> {
    write_json(path, summary)
}

#[derive(Serialize)]
struct ComparisonRow<'a> {
    session: &'a str,
    normalized_qoe: f64,
    #[serde(flatten)]
    summary: &'a SessionSummary,
}

/// Writes `comparison.{csv,json}` (one row per session and scheme, with the
/// QoE normalized to the session's best scheme) and `chunk_cdf.csv`
/// (empirical CDF of per-chunk QoE and perceived quality per scheme).
pub fn write_comparison(dir: &Path, rows: &[ExperimentRow], json: bool) -> Result<()> {
    let table: Vec<ComparisonRow> = rows
        .iter()
        .map(|r| ComparisonRow {
            session: &r.session,
            normalized_qoe: r.normalized_qoe,
            summary: &r.report.summary,
        })
        .collect();
    if json {
        write_json(&dir.join("comparison.json"), &table)?;
    } else {
        let path = dir.join("comparison.csv");
        let mut w = csv::Writer::from_writer(create(&path)?);
        let err = |e: csv::Error| Error::invalid(format!("{}: {e}", path.display()));
        w.write_record([
            "session", "scheme", "chunks", "truncated", "mean_q1", "total_q2", "mean_q3", "mean_q4",
            "total_qoe", "mean_qoe", "normalized_qoe", "total_bytes", "startup_delay_s", "stall_chunks", "mean_d_t_m",
        ])
        .map_err(err)?;
        for row in &table {
            let s = row.summary;
            w.write_record([
                row.session.to_string(),
                s.scheme.to_string(),
                s.chunks.to_string(),
                s.truncated.to_string(),
                s.mean_q1.to_string(),
                s.total_q2.to_string(),
                s.mean_q3.to_string(),
                s.mean_q4.to_string(),
                s.total_qoe.to_string(),
                s.mean_qoe.to_string(),
                row.normalized_qoe.to_string(),
                s.total_bytes.to_string(),
                s.startup_delay.to_string(),
                s.stall_chunks.to_string(),
                s.mean_d_t.to_string(),
            ])
            .map_err(err)?;
        }
        w.flush().map_err(|e| Error::io(&path, e))?;
    }

    let mut samples: BTreeMap<(String, &str), Vec<f64>> = BTreeMap::new();
    for r in rows {
        let scheme = r.report.summary.scheme.to_string();
        for c in &r.report.chunks {
            samples.entry((scheme.clone(), "qoe")).or_default().push(c.qoe.total);
            samples.entry((scheme.clone(), "q1")).or_default().push(c.qoe.q1);
        }
    }
    let path = dir.join("chunk_cdf.csv");
    let mut w = create(&path)?;
    let io = |e| Error::io(&path, e);
    writeln!(w, "scheme,metric,value,cdf").map_err(io)?;
    for ((scheme, metric), mut v) in samples {
        v.sort_by(f64::total_cmp);
        let n = v.len() as f64;
        for (i, x) in v.iter().enumerate() {
            writeln!(w, "{scheme},{metric},{x},{}", (i + 1) as f64 / n).map_err(io)?;
        }
    }
    w.flush().map_err(io)
}
