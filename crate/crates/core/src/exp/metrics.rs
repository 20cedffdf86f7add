//! CSV metrics persistence.
//!
//! Three files per run, with fixed headers:
//! - `episodes.csv`: episode_global_idx,worker_id,update_idx_at_end,return,length
//! - `updates.csv`: update_idx,total_env_steps,policy_loss,value_loss,entropy,grad_norm
//! - `flips.csv`: worker_id,total_actions,flipped_actions,empirical_fraction,expected_fraction
//!
//! Floats are written with Rust's shortest-round-trip formatting and no
//! timestamps appear anywhere, so identical runs produce identical bytes.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::a2c::{EpisodeRecord, MetricsSink, UpdateRecord};
use crate::byzantine::{verify_empirical, ByzantineSchedule, FlipLedger};
use crate::error::{Error, Result};

pub const EPISODES_HEADER: &str = "episode_global_idx,worker_id,update_idx_at_end,return,length";
pub const UPDATES_HEADER: &str = "update_idx,total_env_steps,policy_loss,value_loss,entropy,grad_norm";
pub const FLIPS_HEADER: &str = "worker_id,total_actions,flipped_actions,empirical_fraction,expected_fraction";

/// Streams episode and update records to CSV while keeping the episode list
/// in memory for the convergence detector.
pub struct CsvSink {
    episodes_out: BufWriter<File>,
    updates_out: BufWriter<File>,
    pub episodes: Vec<EpisodeRecord>,
    pub update_count: u64,
    pub last_total_env_steps: u64,
}

impl CsvSink {
    pub fn create(episodes_path: &Path, updates_path: &Path) -> Result<Self> {
        let mut episodes_out = BufWriter::new(File::create(episodes_path)?);
        let mut updates_out = BufWriter::new(File::create(updates_path)?);
        writeln!(episodes_out, "{EPISODES_HEADER}")?;
        writeln!(updates_out, "{UPDATES_HEADER}")?;
        Ok(CsvSink {
            episodes_out,
            updates_out,
            episodes: Vec::new(),
            update_count: 0,
            last_total_env_steps: 0,
        })
    }

    /// Flush both streams; called at the end of a run and on fault exits so
    /// partial metrics survive.
    pub fn flush(&mut self) -> Result<()> {
        self.episodes_out.flush()?;
        self.updates_out.flush()?;
        Ok(())
    }
}

impl MetricsSink for CsvSink {
    fn on_episode(&mut self, record: &EpisodeRecord) {
        let _ = writeln!(
            self.episodes_out,
            "{},{},{},{},{}",
            record.episode_global_idx,
            record.worker_id,
            record.update_idx_at_end,
            record.episode_return,
            record.length
        );
        self.episodes.push(record.clone());
    }

    fn on_update(&mut self, record: &UpdateRecord) {
        let _ = writeln!(
            self.updates_out,
            "{},{},{},{},{},{}",
            record.update_idx,
            record.total_env_steps,
            record.policy_loss,
            record.value_loss,
            record.entropy,
            record.grad_norm
        );
        self.update_count += 1;
        self.last_total_env_steps = record.total_env_steps;
    }
}

/// Write the per-worker flip audit table. The audit itself (fractions within
/// tolerance) is a separate call; this only persists the counters.
pub fn write_flips_csv(path: &Path, ledger: &FlipLedger, schedule: &ByzantineSchedule) -> Result<()> {
    // tolerance ∞: we want the table regardless of whether the audit passes
    let rows = verify_empirical(ledger, schedule, f64::INFINITY)?;
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "{FLIPS_HEADER}")?;
    for row in rows {
        writeln!(
            out,
            "{},{},{},{},{}",
            row.worker_id, row.total_actions, row.flipped_actions, row.empirical_fraction, row.expected_fraction
        )?;
    }
    out.flush()?;
    Ok(())
}

fn parse_field<T: std::str::FromStr>(field: &str, name: &str, row: usize) -> Result<T> {
    field
        .parse()
        .map_err(|_| Error::Parse(format!("row {row}: bad {name} value {field:?}")))
}

/// Read an `episodes.csv` back into records, reporting the offending row
/// number on malformed input.
pub fn read_episodes_csv(path: &Path) -> Result<Vec<EpisodeRecord>> {
    let reader = BufReader::new(File::open(path)?);
    let mut lines = reader.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Parse("row 1: empty file, expected header".into()))??;
    if header.trim() != EPISODES_HEADER {
        return Err(Error::Parse(format!("row 1: unexpected header {header:?}")));
    }
    let mut records = Vec::new();
    for (i, line) in lines.enumerate() {
        let row = i + 2; // 1-based, after the header
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 5 {
            return Err(Error::Parse(format!("row {row}: expected 5 fields, got {}", fields.len())));
        }
        records.push(EpisodeRecord {
            episode_global_idx: parse_field(fields[0], "episode_global_idx", row)?,
            worker_id: parse_field(fields[1], "worker_id", row)?,
            update_idx_at_end: parse_field(fields[2], "update_idx_at_end", row)?,
            episode_return: parse_field(fields[3], "return", row)?,
            length: parse_field(fields[4], "length", row)?,
        });
    }
    Ok(records)
}
