//! Sliding-mean convergence detector.
//!
//! A run counts as converged once the K-episode sliding mean of returns
//! (all workers merged, episode completion order) reaches the threshold and
//! stays there for K consecutive positions. This is the machine-checkable
//! stand-in for judging a reward curve by eye.

use serde::Serialize;

use crate::a2c::EpisodeRecord;

/// Default threshold for the chain environment: 0.95 of the optimal
/// undiscounted return 1.0.
pub const CHAIN_DEFAULT_THRESHOLD: f64 = 0.95;

/// Default threshold for MiniPong: half the final sliding-mean return of the
/// pinned clean reference run (`configs/pong_ref.toml`, seed 1, whose
/// expected outputs ship in `configs/pong_ref.expected.json`).
pub const MINIPONG_DEFAULT_THRESHOLD: f64 = 8.0;

/// Outcome of the convergence detector.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceReport {
    pub converged: bool,
    /// Update index at the end of the episode where the sustained window
    /// begins.
    pub first_converged_update: Option<u64>,
    /// Episode ordinal (1-based count of episodes seen) at that point.
    pub first_converged_episode: Option<u64>,
    /// Sliding mean over the last K (or fewer) episodes.
    pub final_ma: f64,
    pub threshold: f64,
    pub window: usize,
}

/// Scan episode returns for the first index where the K-window sliding mean
/// holds at or above the threshold for K consecutive positions.
pub fn detect_convergence(records: &[EpisodeRecord], window: usize, threshold: f64) -> ConvergenceReport {
    assert!(window >= 1, "window must be ≥ 1");
    let returns: Vec<f64> = records.iter().map(|r| r.episode_return).collect();
    let n = returns.len();

    let final_ma = if n == 0 {
        0.0
    } else {
        let k = window.min(n);
        returns[n - k..].iter().sum::<f64>() / k as f64
    };

    let mut report = ConvergenceReport {
        converged: false,
        first_converged_update: None,
        first_converged_episode: None,
        final_ma,
        threshold,
        window,
    };
    if n < window {
        return report;
    }

    // sliding means at positions window-1 .. n-1
    let mut means = Vec::with_capacity(n - window + 1);
    let mut acc: f64 = returns[..window].iter().sum();
    means.push(acc / window as f64);
    for i in window..n {
        acc += returns[i] - returns[i - window];
        means.push(acc / window as f64);
    }

    let mut run_start: Option<usize> = None;
    for (pos, &mean) in means.iter().enumerate() {
        if mean >= threshold {
            let start = *run_start.get_or_insert(pos);
            if pos - start + 1 >= window {
                let episode_idx = start + window - 1; // 0-based episode index
                report.converged = true;
                report.first_converged_update = Some(records[episode_idx].update_idx_at_end);
                report.first_converged_episode = Some(episode_idx as u64 + 1);
                return report;
            }
        } else {
            run_start = None;
        }
    }
    report
}
