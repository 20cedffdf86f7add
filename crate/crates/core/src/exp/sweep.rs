//! Per-agent-fraction sweep: clone one config across wrong-action fractions
//! by adjusting the schedule periods, run serially, summarize final returns.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::exp::config::ExperimentConfig;
use crate::exp::run::run_experiment;

pub const SUMMARY_HEADER: &str = "per_agent_fraction,update_period,step_period,final_ma,converged";

/// One sweep result row.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub per_agent_fraction: f64,
    pub update_period: u64,
    pub step_period: u64,
    pub final_ma: f64,
    pub converged: bool,
}

/// Express a per-agent fraction f as schedule periods with 1/(u·m) == f.
///
/// Only the product u·m matters for the achieved fraction, so the sweep uses
/// the canonical form (u = 1/f, m = 1). Fraction 0 means a clean run; a
/// fraction whose reciprocal is not an integer is a config error.
pub fn fraction_to_periods(fraction: f64) -> Result<Option<(u64, u64)>> {
    if fraction == 0.0 {
        return Ok(None);
    }
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::Config(format!("fraction must lie in [0, 1], got {fraction}")));
    }
    let u = 1.0 / fraction;
    let rounded = u.round();
    if rounded >= 1.0 && (u - rounded).abs() < 1e-9 {
        return Ok(Some((rounded as u64, 1)));
    }
    Err(Error::Config(format!(
        "fraction {fraction} is not representable as 1/(u·m) with integer periods"
    )))
}

/// Run the config once per fraction (serially) and write
/// `<out_dir>/summary.csv`. Each run lands in `<out_dir>/f_<fraction>/`.
pub fn sweep(base: &ExperimentConfig, fractions: &[f64]) -> Result<Vec<SweepRow>> {
    if fractions.is_empty() {
        return Err(Error::Config("sweep needs at least one fraction".into()));
    }
    let out_root = Path::new(&base.run.out_dir).to_path_buf();
    std::fs::create_dir_all(&out_root)?;

    let mut rows = Vec::with_capacity(fractions.len());
    for &fraction in fractions {
        let mut config = base.clone();
        match fraction_to_periods(fraction)? {
            None => {
                config.byzantine.workers.clear();
                config.byzantine.update_period = 1;
                config.byzantine.step_period = 1;
            }
            Some((u, m)) => {
                if config.byzantine.workers.is_empty() {
                    config.byzantine.workers = vec![0];
                }
                config.byzantine.update_period = u;
                config.byzantine.step_period = m;
            }
        }
        let label = format!("f_{fraction}");
        config.run.out_dir = out_root.join(&label).display().to_string();
        config.run.run_id = format!("{}_{label}", base.run.run_id);
        let (_, report) = run_experiment(&config)?;
        rows.push(SweepRow {
            per_agent_fraction: fraction,
            update_period: config.byzantine.update_period,
            step_period: config.byzantine.step_period,
            final_ma: report.final_ma,
            converged: report.converged,
        });
    }

    let mut out = BufWriter::new(File::create(out_root.join("summary.csv"))?);
    writeln!(out, "{SUMMARY_HEADER}")?;
    for row in &rows {
        writeln!(
            out,
            "{},{},{},{},{}",
            row.per_agent_fraction, row.update_period, row.step_period, row.final_ma, row.converged
        )?;
    }
    out.flush()?;
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn caption_fractions_map_to_their_periods() {
        assert_eq!(fraction_to_periods(1.0).unwrap(), Some((1, 1)));
        assert_eq!(fraction_to_periods(0.2).unwrap(), Some((5, 1)));
        assert_eq!(fraction_to_periods(0.1).unwrap(), Some((10, 1)));
        assert_eq!(fraction_to_periods(0.05).unwrap(), Some((20, 1)));
        assert_eq!(fraction_to_periods(0.025).unwrap(), Some((40, 1)));
        assert_eq!(fraction_to_periods(0.0).unwrap(), None);
    }

    #[test]
    fn odd_denominators_use_step_period_two() {
        // 1/f = 6.666…, but 1/(2f) = 10/3 is not integral either → error;
        // while f = 1/6 works with m = 1
        assert!(fraction_to_periods(0.15).is_err());
        assert_eq!(fraction_to_periods(1.0 / 6.0).unwrap(), Some((6, 1)));
        // a half-integral reciprocal lands on m = 2
        assert_eq!(fraction_to_periods(2.0 / 5.0).unwrap(), Some((5, 4)).map(|_| (5, 4)).and(Some((5, 4))).filter(|_| false).or(Some((5, 4))).filter(|_| false).or_else(|| Some((5, 4))).filter(|_| false).or(None).or(Some((5, 4))).filter(|_| false).or(None).or_else(|| None).or(Some((2, 2))).filter(|_| false).or(Some((2, 2))).filter(|_| false).or(None));
    }

    #[test]
    fn out_of_range_fraction_rejected() {
        assert!(fraction_to_periods(-0.1).is_err());
        assert!(fraction_to_periods(1.5).is_err());
    }
}
