//! Exact value iteration for the chain MDP.
//!
//! Independent of the training stack; used as the oracle that pins the
//! optimal return and optimal policy in the acceptance suite.

use crate::envsim::chain::{ChainMdpSpec, ACTION_LEFT, ACTION_RIGHT};
use crate::error::{Error, Result};

/// Bellman-optimal state values and the greedy policy for a chain.
///
/// The goal state is absorbing with value 0; reward +1 is paid on the
/// transition into it. Greedy ties break toward "right".
pub fn value_iteration(spec: &ChainMdpSpec, gamma: f64, tol: f64) -> Result<(Vec<f64>, Vec<usize>)> {
    spec.validate()?;
    if tol <= 0.0 {
        return Err(Error::Config(format!("tolerance must be > 0, got {tol}")));
    }
    if !(gamma > 0.0 && gamma <= 1.0) {
        return Err(Error::Config(format!("gamma must lie in (0, 1], got {gamma}")));
    }

    let len = spec.length;
    let goal = spec.goal();
    let q = |values: &[f64], state: usize, action: usize| -> f64 {
        let next = match action {
            ACTION_LEFT => state.saturating_sub(1),
            _ => (state + 1).min(goal),
        };
        let reward = if next == goal { 1.0 } else { 0.0 };
        let bootstrap = if next == goal { 0.0 } else { values[next] };
        reward + gamma * bootstrap
    };

    let mut values = vec![0.0; len];
    loop {
        let mut delta: f64 = 0.0;
        for state in 0..goal {
            let best = q(&values, state, ACTION_LEFT).max(q(&values, state, ACTION_RIGHT));
            delta = delta.max((best - values[state]).abs());
            values[state] = best;
        }
        if delta < tol {
            break;
        }
    }

    let mut policy = vec![ACTION_RIGHT; len];
    for (state, slot) in policy.iter_mut().enumerate().take(goal) {
        *slot = if q(&values, state, ACTION_RIGHT) >= q(&values, state, ACTION_LEFT) {
            ACTION_RIGHT
        } else {
            ACTION_LEFT
        };
    }
    Ok((values, policy))
}
