//! Shared actor-critic function: observation → (action log-probabilities,
//! value estimate), plus categorical sampling and entropy.
//!
//! The default network is a shared two-hidden-layer tanh trunk (width 64)
//! with an actor head of A logits and a critic head of one value. Setting
//! `separate = true` builds two fully independent trunks instead.

use crate::diffmath::{DenseArray, Graph, NodeId, ParameterSet};
use crate::error::{Error, Result};
use crate::rng::SplitMix64;

/// One sampled action with the statistics the trainer records.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActionSample {
    pub action: usize,
    /// log p(action | obs, θ) at sampling time.
    pub log_prob: f64,
    /// Critic estimate V(obs) at sampling time.
    pub value: f64,
}

/// Actor-critic network over vector observations.
#[derive(Debug, Clone)]
pub struct PolicyNet {
    pub params: ParameterSet,
    pub obs_dim: usize,
    pub action_cardinality: usize,
    pub hidden: usize,
    pub separate: bool,
}

/// Layer names in deterministic initialization order.
fn layer_plan(obs_dim: usize, hidden: usize, actions: usize, separate: bool) -> Vec<(&'static str, usize, usize)> {
    if separate {
        vec![
            ("actor.w1", obs_dim, hidden),
            ("actor.w2", hidden, hidden),
            ("actor.w3", hidden, actions),
            ("critic.w1", obs_dim, hidden),
            ("critic.w2", hidden, hidden),
            ("critic.w3", hidden, 1),
        ]
    } else {
        vec![
            ("trunk.w1", obs_dim, hidden),
            ("trunk.w2", hidden, hidden),
            ("actor.w", hidden, actions),
            ("critic.w", hidden, 1),
        ]
    }
}

fn bias_name(weight_name: &str) -> String {
    weight_name.replacen(".w", ".b", 1)
}

impl PolicyNet {
    /// Initialize weights uniform(−1/√fan_in, +1/√fan_in) from the seed;
    /// biases start at zero.
    pub fn init(obs_dim: usize, hidden: usize, actions: usize, seed: u64, separate: bool) -> Result<Self> {
        if obs_dim == 0 || hidden == 0 || actions == 0 {
            return Err(Error::Config("network dimensions must be positive".into()));
        }
        let mut rng = SplitMix64::new(seed);
        let mut params = ParameterSet::new();
        for (name, fan_in, fan_out) in layer_plan(obs_dim, hidden, actions, separate) {
            let bound = 1.0 / (fan_in as f64).sqrt();
            let data: Vec<f64> = (0..fan_in * fan_out).map(|_| rng.uniform(-bound, bound)).collect();
            params.insert(name, DenseArray::matrix(fan_in, fan_out, data)?)?;
            params.insert(&bias_name(name), DenseArray::vector(vec![0.0; fan_out]))?;
        }
        Ok(PolicyNet { params, obs_dim, action_cardinality: actions, hidden, separate })
    }

    fn check_obs(&self, obs: &DenseArray) -> Result<()> {
        if obs.rank() != 2 || obs.cols() != self.obs_dim {
            return Err(Error::Dim(format!(
                "observation batch shape {:?} does not match obs_dim {}",
                obs.shape(),
                self.obs_dim
            )));
        }
        Ok(())
    }

    fn trunk_plain(&self, obs: &DenseArray, prefix: &str) -> Result<DenseArray> {
        let w1 = &self.params.get(&format!("{prefix}.w1"))?.value;
        let b1 = &self.params.get(&format!("{prefix}.b1"))?.value;
        let w2 = &self.params.get(&format!("{prefix}.w2"))?.value;
        let b2 = &self.params.get(&format!("{prefix}.b2"))?.value;
        let h1 = obs.matmul(w1)?.add_bias(b1)?.map(f64::tanh);
        Ok(h1.matmul(w2)?.add_bias(b2)?.map(f64::tanh))
    }

    /// Inference-only forward pass: (log-probs B×A, values B×1).
    ///
    /// Uses the same kernels as the graph path, so the two agree bit-exactly.
    pub fn forward(&self, obs: &DenseArray) -> Result<(DenseArray, DenseArray)> {
        self.check_obs(obs)?;
        let (logits, values) = if self.separate {
            let ha = self.trunk_plain(obs, "actor")?;
            let hc = self.trunk_plain(obs, "critic")?;
            let logits = ha
                .matmul(&self.params.get("actor.w3")?.value)?
                .add_bias(&self.params.get("actor.b3")?.value)?;
            let values = hc
                .matmul(&self.params.get("critic.w3")?.value)?
                .add_bias(&self.params.get("critic.b3")?.value)?;
            (logits, values)
        } else {
            let h = self.trunk_plain(obs, "trunk")?;
            let logits = h
                .matmul(&self.params.get("actor.w")?.value)?
                .add_bias(&self.params.get("actor.b")?.value)?;
            let values = h
                .matmul(&self.params.get("critic.w")?.value)?
                .add_bias(&self.params.get("critic.b")?.value)?;
            (logits, values)
        };
        let log_probs = logits.log_softmax_rows()?;
        log_probs.ensure_finite("forward log_probs")?;
        values.ensure_finite("forward values")?;
        Ok((log_probs, values))
    }

    fn trunk_graph(&self, g: &mut Graph, obs: NodeId, prefix: &str) -> Result<NodeId> {
        let w1 = g.param(&self.params, &format!("{prefix}.w1"))?;
        let b1 = g.param(&self.params, &format!("{prefix}.b1"))?;
        let w2 = g.param(&self.params, &format!("{prefix}.w2"))?;
        let b2 = g.param(&self.params, &format!("{prefix}.b2"))?;
        let z1 = g.matmul(obs, w1)?;
        let z1b = g.add_bias(z1, b1)?;
        let h1 = g.tanh(z1b)?;
        let z2 = g.matmul(h1, w2)?;
        let z2b = g.add_bias(z2, b2)?;
        g.tanh(z2b)
    }

    /// Differentiable forward pass on a tape: (log-probs node, values node).
    pub fn forward_graph(&self, g: &mut Graph, obs: DenseArray) -> Result<(NodeId, NodeId)> {
        self.check_obs(&obs)?;
        let obs = g.leaf(obs)?;
        let (logits, values) = if self.separate {
            let ha = self.trunk_graph(g, obs, "actor")?;
            let hc = self.trunk_graph(g, obs, "critic")?;
            let wa = g.param(&self.params, "actor.w3")?;
            let ba = g.param(&self.params, "actor.b3")?;
            let wc = g.param(&self.params, "critic.w3")?;
            let bc = g.param(&self.params, "critic.b3")?;
            let za = g.matmul(ha, wa)?;
            let logits = g.add_bias(za, ba)?;
            let zc = g.matmul(hc, wc)?;
            let values = g.add_bias(zc, bc)?;
            (logits, values)
        } else {
            let h = self.trunk_graph(g, obs, "trunk")?;
            let wa = g.param(&self.params, "actor.w")?;
            let ba = g.param(&self.params, "actor.b")?;
            let wc = g.param(&self.params, "critic.w")?;
            let bc = g.param(&self.params, "critic.b")?;
            let za = g.matmul(h, wa)?;
            let logits = g.add_bias(za, ba)?;
            let zc = g.matmul(h, wc)?;
            let values = g.add_bias(zc, bc)?;
            (logits, values)
        };
        let log_probs = g.log_softmax(logits)?;
        Ok((log_probs, values))
    }
}

/// Categorical sample by inverse CDF over exp(log_probs), one generator draw,
/// fixed iteration order over actions.
pub fn sample_action(log_probs: &DenseArray, value: f64, rng: &mut SplitMix64) -> ActionSample {
    let u = rng.next_f64();
    let mut cum = 0.0;
    let n = log_probs.len();
    for (a, &lp) in log_probs.data().iter().enumerate() {
        cum += lp.exp();
        if u < cum {
            return ActionSample { action: a, log_prob: lp, value };
        }
    }
    // float residue: the row sums to 1 − ε and u landed in the gap
    ActionSample { action: n - 1, log_prob: log_probs.data()[n - 1], value }
}

/// Shannon entropy −Σ p·log p of a log-probability row, in [0, ln A].
pub fn entropy(log_probs: &DenseArray) -> f64 {
    log_probs
        .data()
        .iter()
        .map(|&lp| {
            let p = lp.exp();
            if p > 0.0 {
                -p * lp
            } else {
                0.0
            }
        })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn uniform_row(n: usize) -> DenseArray {
        DenseArray::vector(vec![(1.0 / n as f64).ln(); n])
    }

    #[test]
    fn init_is_deterministic_and_biases_zero() {
        let a = PolicyNet::init(5, 64, 3, 42, false).unwrap();
        let b = PolicyNet::init(5, 64, 3, 42, false).unwrap();
        assert_eq!(a.params.flat_values(), b.params.flat_values());
        for name in ["trunk.b1", "trunk.b2", "actor.b", "critic.b"] {
            assert!(a.params.get(name).unwrap().value.data().iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn initial_policy_is_near_uniform() {
        for actions in [2usize, 3] {
            let net = PolicyNet::init(5, 64, actions, 7, false).unwrap();
            let mut rng = SplitMix64::new(1);
            for _ in 0..100 {
                let obs: Vec<f64> = (0..5).map(|_| rng.uniform(-1.0, 1.0)).collect();
                let (lp, _) = net.forward(&DenseArray::matrix(1, 5, obs).unwrap()).unwrap();
                let max_p = lp.data().iter().map(|v| v.exp()).fold(0.0, f64::max);
                assert!(max_p < 0.5, "max probability {max_p} for A={actions}");
            }
        }
    }

    #[test]
    fn forward_rows_are_batch_independent() {
        let net = PolicyNet::init(4, 8, 3, 3, false).unwrap();
        let row = vec![0.25, -0.5, 0.75, -1.0];
        let single = DenseArray::matrix(1, 4, row.clone()).unwrap();
        let batch = DenseArray::matrix(8, 4, row.repeat(8)).unwrap();
        let (lp1, v1) = net.forward(&single).unwrap();
        let (lp8, v8) = net.forward(&batch).unwrap();
        for r in 0..8 {
            for c in 0..3 {
                assert_eq!(lp8.at(r, c), lp1.at(0, c));
            }
            assert_eq!(v8.at(r, 0), v1.at(0, 0));
        }
    }

    #[test]
    fn forward_log_prob_rows_normalize() {
        let net = PolicyNet::init(5, 16, 3, 11, false).unwrap();
        let mut rng = SplitMix64::new(2);
        let obs: Vec<f64> = (0..40).map(|_| rng.uniform(-1.0, 1.0)).collect();
        let (lp, _) = net.forward(&DenseArray::matrix(8, 5, obs).unwrap()).unwrap();
        for r in 0..8 {
            let s: f64 = (0..3).map(|c| lp.at(r, c).exp()).sum();
            assert!((s - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn forward_rejects_wrong_obs_dim() {
        let net = PolicyNet::init(5, 8, 2, 0, false).unwrap();
        let bad = DenseArray::matrix(1, 4, vec![0.0; 4]).unwrap();
        assert!(matches!(net.forward(&bad), Err(Error::Dim(_))));
    }

    #[test]
    fn graph_forward_matches_plain_forward_bitwise() {
        for separate in [false, true] {
            let net = PolicyNet::init(5, 12, 3, 21, separate).unwrap();
            let mut rng = SplitMix64::new(4);
            let obs: Vec<f64> = (0..20).map(|_| rng.uniform(-1.0, 1.0)).collect();
            let batch = DenseArray::matrix(4, 5, obs).unwrap();
            let (lp_p, v_p) = net.forward(&batch).unwrap();
            let mut g = Graph::new();
            let (lp_g, v_g) = net.forward_graph(&mut g, batch).unwrap();
            assert_eq!(g.value(lp_g), &lp_p);
            assert_eq!(g.value(v_g), &v_p);
        }
    }

    #[test]
    fn value_mean_gradient_matches_finite_differences() {
        let net = PolicyNet::init(3, 6, 2, 17, false).unwrap();
        let mut rng = SplitMix64::new(8);
        let obs: Vec<f64> = (0..6).map(|_| rng.uniform(-1.0, 1.0)).collect();
        let batch = DenseArray::matrix(2, 3, obs).unwrap();

        let mut g = Graph::new();
        let (_, values) = net.forward_graph(&mut g, batch.clone()).unwrap();
        let loss = g.mean_all(values).unwrap();
        g.backward(loss).unwrap();
        let mut grads = net.params.clone();
        grads.zero_grads();
        g.scatter_grads(&mut grads).unwrap();

        let eval = |flat: &[f64]| -> f64 {
            let mut probe = net.clone();
            probe.params.set_flat_values(flat).unwrap();
            let (_, v) = probe.forward(&batch).unwrap();
            v.mean()
        };
        let base = net.params.flat_values();
        let h = 1e-5;
        let analytic: Vec<f64> =
            grads.iter().flat_map(|(_, p)| p.grad.data().iter().copied()).collect();
        for (i, a) in analytic.iter().enumerate() {
            let mut plus = base.clone();
            let mut minus = base.clone();
            plus[i] += h;
            minus[i] -= h;
            let fd = (eval(&plus) - eval(&minus)) / (2.0 * h);
            let rel = (a - fd).abs() / a.abs().max(fd.abs()).max(1e-4);
            assert!(rel < 1e-4, "param {i}: analytic {a} fd {fd}");
        }
    }

    #[test]
    fn degenerate_distribution_always_sampled() {
        let row = DenseArray::vector(vec![0.0, f64::NEG_INFINITY, f64::NEG_INFINITY]);
        let mut rng = SplitMix64::new(0);
        for _ in 0..100 {
            assert_eq!(sample_action(&row, 0.0, &mut rng).action, 0);
        }
    }

    #[test]
    fn same_rng_state_same_action() {
        let net = PolicyNet::init(4, 8, 3, 5, false).unwrap();
        let obs = DenseArray::matrix(1, 4, vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        let (lp, v) = net.forward(&obs).unwrap();
        let row = lp.row(0);
        let a = sample_action(&row, v.item(), &mut SplitMix64::new(33));
        let b = sample_action(&row, v.item(), &mut SplitMix64::new(33));
        assert_eq!(a, b);
    }

    #[test]
    fn uniform_two_action_frequency_is_half() {
        let row = uniform_row(2);
        let mut rng = SplitMix64::new(1234);
        let n = 100_000;
        let zeros = (0..n).filter(|_| sample_action(&row, 0.0, &mut rng).action == 0).count();
        let freq = zeros as f64 / n as f64;
        assert!((freq - 0.5).abs() < 0.01, "freq {freq}");
    }

    #[test]
    fn sampling_chi_squared_sanity() {
        // 3 actions with p = [0.5, 0.25, 0.25]; χ² threshold fixed well above
        // the 99.9% quantile for 2 degrees of freedom (13.8)
        let row = DenseArray::vector(vec![0.5f64.ln(), 0.25f64.ln(), 0.25f64.ln()]);
        let mut rng = SplitMix64::new(777);
        let n = 100_000usize;
        let mut counts = [0usize; 3];
        for _ in 0..n {
            counts[sample_action(&row, 0.0, &mut rng).action] += 1;
        }
        let expected = [0.5 * n as f64, 0.25 * n as f64, 0.25 * n as f64];
        let chi2: f64 = counts
            .iter()
            .zip(&expected)
            .map(|(&c, &e)| (c as f64 - e).powi(2) / e)
            .sum();
        assert!(chi2 < 16.0, "chi2 {chi2}");
    }

    #[test]
    fn entropy_point_values() {
        assert!((entropy(&uniform_row(3)) - 3.0f64.ln()).abs() < 1e-12);
        let one_hot = DenseArray::vector(vec![0.0, f64::NEG_INFINITY]);
        assert_eq!(entropy(&one_hot), 0.0);
        let row = DenseArray::vector(vec![0.5f64.ln(), 0.25f64.ln(), 0.25f64.ln()]);
        assert!((entropy(&row) - 1.5 * 2.0f64.ln()).abs() < 1e-12);
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn entropy_within_bounds(logits in proptest::collection::vec(-30.0f64..30.0, 2..6)) {
                let n = logits.len();
                let z = DenseArray::matrix(1, n, logits).unwrap();
                let lp = z.log_softmax_rows().unwrap();
                let h = entropy(&lp.row(0));
                prop_assert!(h >= -1e-12);
                prop_assert!(h <= (n as f64).ln() + 1e-12);
            }

            #[test]
            fn argmax_invariant_under_logit_shift(
                logits in proptest::collection::vec(-30.0f64..30.0, 2..6),
                shift in -100.0f64..100.0,
            ) {
                let n = logits.len();
                let z = DenseArray::matrix(1, n, logits.clone()).unwrap();
                let shifted = DenseArray::matrix(1, n, logits.iter().map(|v| v + shift).collect()).unwrap();
                let argmax = |a: &DenseArray| {
                    a.log_softmax_rows().unwrap().data().iter().enumerate()
                        .max_by(|x, y| x.1.partial_cmp(y.1).unwrap()).unwrap().0
                };
                prop_assert_eq!(argmax(&z), argmax(&shifted));
            }
        }
    }
}
