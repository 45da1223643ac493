//! Group-relative policy optimization losses.
//!
//! A rollout group holds G sampled sequences for one prompt together with
//! their rewards and per-token log-probabilities under the current, old, and
//! reference policies. The loss is the token-level mean of negated clipped
//! surrogates plus a per-token KL penalty:
//!
//! ```text
//! L = -(1/ΣT_i) Σ_i Σ_t min(r A_i, clip(r, 1-ε, 1+ε) A_i)
//!     + β (1/ΣT_i) Σ_i Σ_t (e^δ - δ - 1),   δ = logp_ref - logp_new
//! ```
//!
//! with advantages `A_i = (R_i - mean) / max(std, floor)` normalized inside
//! the group. Gradients are taken with respect to the current-policy
//! log-probs only; old and reference log-probs are constants.
//!
//! [`chunked_loss`] computes the identical value and gradients by
//! accumulating weighted per-chunk losses over a partition of the group, so
//! only one chunk's working set is ever live — the memory-saving
//! reformulation used for long-context training.

use thiserror::Error;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum GrpoError {
    #[error("group must have at least 2 samples, got {0}")]
    GroupTooSmall(usize),
    #[error("sample {0} has an empty token sequence")]
    EmptySequence(usize),
    #[error("log-prob arrays must align with token sequences: {0}")]
    MisalignedLogProbs(String),
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("invalid partition: {0}")]
    InvalidPartition(String),
}

/// Hyperparameters of the GRPO objective.
#[derive(Debug, Clone, Copy)]
pub struct GrpoConfig {
    /// Clip half-width ε of the surrogate, in (0, 1).
    pub clip_eps: f64,
    /// KL penalty coefficient β ≥ 0.
    pub kl_beta: f64,
    /// Samples per group.
    pub group_size: usize,
    /// Maximum samples per micro-chunk in [`chunked_loss`].
    pub micro_chunk: usize,
    /// Floor on the advantage-normalizing standard deviation.
    pub advantage_std_floor: f64,
}

impl Default for GrpoConfig {
    fn default() -> Self {
        Self {
            clip_eps: 0.2,
            kl_beta: 0.04,
            group_size: 8,
            micro_chunk: 2,
            advantage_std_floor: 1e-4,
        }
    }
}

impl GrpoConfig {
    pub fn validate(&self) -> Result<(), GrpoError> {
        if !(0.0..1.0).contains(&self.clip_eps) || self.clip_eps == 0.0 {
            return Err(GrpoError::InvalidConfig(format!(
                "clip_eps must lie in (0, 1), got {}",
                self.clip_eps
            )));
        }
        if self.kl_beta < 0.0 {
            return Err(GrpoError::InvalidConfig("kl_beta must be >= 0".into()));
        }
        if self.micro_chunk < 1 {
            return Err(GrpoError::InvalidConfig("micro_chunk must be >= 1".into()));
        }
        if self.group_size < 2 {
            return Err(GrpoError::InvalidConfig("group_size must be >= 2".into()));
        }
        Ok(())
    }
}

/// G sampled sequences for one prompt with rewards and per-token log-probs.
#[derive(Debug, Clone)]
pub struct RolloutGroup {
    pub tokens: Vec<Vec<u32>>,
    pub rewards: Vec<f64>,
    pub logp_new: Vec<Vec<f64>>,
    pub logp_old: Vec<Vec<f64>>,
    pub logp_ref: Vec<Vec<f64>>,
}

impl RolloutGroup {
    pub fn new(
        tokens: Vec<Vec<u32>>,
        rewards: Vec<f64>,
        logp_new: Vec<Vec<f64>>,
        logp_old: Vec<Vec<f64>>,
        logp_ref: Vec<Vec<f64>>,
    ) -> Result<Self, GrpoError> {
        let group_size = tokens.len();
        if group_size < 2 {
            return Err(GrpoError::GroupTooSmall(group_size));
        }
        if rewards.len() != group_size {
            return Err(GrpoError::MisalignedLogProbs(format!(
                "{} rewards for {} samples",
                rewards.len(),
                group_size
            )));
        }
        for (i, seq) in tokens.iter().enumerate() {
            if seq.is_empty() {
                return Err(GrpoError::EmptySequence(i));
            }
            for (name, arr) in [("new", &logp_new), ("old", &logp_old), ("ref", &logp_ref)] {
                if arr.len() != group_size || arr[i].len() != seq.len() {
                    return Err(GrpoError::MisalignedLogProbs(format!(
                        "logp_{name} does not match sample {i} of length {}",
                        seq.len()
                    )));
                }
            }
        }
        Ok(Self {
            tokens,
            rewards,
            logp_new,
            logp_old,
            logp_ref,
        })
    }

    pub fn group_size(&self) -> usize {
        self.tokens.len()
    }

    pub fn total_tokens(&self) -> usize {
        self.tokens.iter().map(Vec::len).sum()
    }
}

/// Group-normalized advantages `(R_i - mean) / max(pop_std, std_floor)`.
///
/// A group with identical rewards yields exactly zero advantages.
pub fn group_advantages(rewards: &[f64], std_floor: f64) -> Result<Vec<f64>, GrpoError> {
    let n = rewards.len();
    if n < 2 {
        return Err(GrpoError::GroupTooSmall(n));
    }
    if rewards.iter().all(|r| *r == rewards[0]) {
        return Ok(vec![0.0; n]);
    }
    let mean = rewards.iter().sum::<f64>() / n as f64;
    let var = rewards.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / n as f64;
    let std = var.sqrt().max(std_floor);
    Ok(rewards.iter().map(|r| (r - mean) / std).collect())
}

/// `min(r A, clip(r, 1-ε, 1+ε) A)`.
pub fn clipped_surrogate(ratio: f64, advantage: f64, eps: f64) -> f64 {
    let clipped = ratio.clamp(1.0 - eps, 1.0 + eps);
    (ratio * advantage).min(clipped * advantage)
}

/// Importance ratio `exp(logp_new - logp_old)`.
pub fn token_ratio(logp_new: f64, logp_old: f64) -> f64 {
    (logp_new - logp_old).exp()
}

/// Nonnegative per-token KL estimate `e^δ - δ - 1` with `δ = logp_ref - logp_new`.
pub fn kl_token(logp_ref: f64, logp_new: f64) -> f64 {
    let delta = logp_ref - logp_new;
    delta.exp() - delta - 1.0
}

/// Loss value together with gradients w.r.t. each current-policy log-prob
/// and the diagnostics a trainer logs.
#[derive(Debug, Clone)]
pub struct LossOutput {
    pub loss: f64,
    /// d loss / d logp_new, aligned with the group's token sequences.
    pub grads: Vec<Vec<f64>>,
    /// Mean per-token KL estimate.
    pub mean_kl: f64,
    /// Fraction of tokens whose surrogate gradient is zeroed by the clip.
    pub clip_fraction: f64,
}

/// Per-sample sums of the loss terms; the shared primitive under both
/// aggregation routes.
struct SampleTerms {
    neg_surrogate_sum: f64,
    kl_sum: f64,
    /// Per-token `(-d surrogate + β d kl) / 1` before the global 1/ΣT factor.
    unscaled_grads: Vec<f64>,
    clipped_tokens: usize,
}

fn sample_terms(group: &RolloutGroup, advantage: f64, i: usize, cfg: &GrpoConfig) -> SampleTerms {
    let len = group.tokens[i].len();
    let mut neg_surrogate_sum = 0.0;
    let mut kl_sum = 0.0;
    let mut unscaled_grads = Vec::with_capacity(len);
    let mut clipped_tokens = 0;
    for t in 0..len {
        let ratio = token_ratio(group.logp_new[i][t], group.logp_old[i][t]);
        neg_surrogate_sum -= clipped_surrogate(ratio, advantage, cfg.clip_eps);

        // The surrogate's derivative w.r.t. logp_new is r*A unless the min
        // picks the saturated clip branch, where it vanishes.
        let outside = ratio < 1.0 - cfg.clip_eps || ratio > 1.0 + cfg.clip_eps;
        let clipped_ratio = ratio.clamp(1.0 - cfg.clip_eps, 1.0 + cfg.clip_eps);
        let saturated = outside && clipped_ratio * advantage < ratio * advantage;
        let d_surrogate = if saturated { 0.0 } else { ratio * advantage };
        if saturated {
            clipped_tokens += 1;
        }

        let delta = group.logp_ref[i][t] - group.logp_new[i][t];
        kl_sum += delta.exp() - delta - 1.0;
        let d_kl = 1.0 - delta.exp();

        unscaled_grads.push(-d_surrogate + cfg.kl_beta * d_kl);
    }
    SampleTerms {
        neg_surrogate_sum,
        kl_sum,
        unscaled_grads,
        clipped_tokens,
    }
}

/// Direct evaluation of the GRPO objective over the whole group.
pub fn grpo_loss(group: &RolloutGroup, cfg: &GrpoConfig) -> Result<LossOutput, GrpoError> {
    cfg.validate()?;
    let advantages = group_advantages(&group.rewards, cfg.advantage_std_floor)?;
    let total_tokens = group.total_tokens() as f64;

    let mut neg_surrogate = 0.0;
    let mut kl = 0.0;
    let mut clipped = 0usize;
    let mut grads = Vec::with_capacity(group.group_size());
    for i in 0..group.group_size() {
        let terms = sample_terms(group, advantages[i], i, cfg);
        neg_surrogate += terms.neg_surrogate_sum;
        kl += terms.kl_sum;
        clipped += terms.clipped_tokens;
        grads.push(
            terms
                .unscaled_grads
                .into_iter()
                .map(|g| g / total_tokens)
                .collect(),
        );
    }
    Ok(LossOutput {
        loss: (neg_surrogate + cfg.kl_beta * kl) / total_tokens,
        grads,
        mean_kl: kl / total_tokens,
        clip_fraction: clipped as f64 / total_tokens,
    })
}

/// Consecutive chunks of at most `cfg.micro_chunk` samples.
pub fn default_partition(group_size: usize, micro_chunk: usize) -> Vec<Vec<usize>> {
    (0..group_size)
        .collect::<Vec<_>>()
        .chunks(micro_chunk.max(1))
        .map(|c| c.to_vec())
        .collect()
}

/// Chunked evaluation: the loss is accumulated as `Σ_m (w_m / ΣT) L_m` over a
/// partition of the samples, where `w_m` is the chunk's token count and `L_m`
/// the chunk's token-mean loss. Matches [`grpo_loss`] in value and gradients;
/// only one chunk's terms are held at a time.
pub fn chunked_loss(group: &RolloutGroup, cfg: &GrpoConfig) -> Result<LossOutput, GrpoError> {
    let partition = default_partition(group.group_size(), cfg.micro_chunk);
    chunked_loss_with_partition(group, cfg, &partition)
}

/// [`chunked_loss`] over an explicit partition of sample indices.
pub fn chunked_loss_with_partition(
    group: &RolloutGroup,
    cfg: &GrpoConfig,
    partition: &[Vec<usize>],
) -> Result<LossOutput, GrpoError> {
    cfg.validate()?;
    let mut seen = vec![false; group.group_size()];
    for chunk in partition {
        for &i in chunk {
            if i >= seen.len() || seen[i] {
                return Err(GrpoError::InvalidPartition(format!(
                    "sample {i} repeated or out of range"
                )));
            }
            seen[i] = true;
        }
    }
    if !seen.iter().all(|s| *s) {
        return Err(GrpoError::InvalidPartition(
            "partition must cover every sample".into(),
        ));
    }

    let advantages = group_advantages(&group.rewards, cfg.advantage_std_floor)?;
    let total_tokens = group.total_tokens() as f64;

    let mut loss = 0.0;
    let mut kl = 0.0;
    let mut clipped = 0usize;
    let mut grads: Vec<Vec<f64>> = group.tokens.iter().map(|t| vec![0.0; t.len()]).collect();
    for chunk in partition {
        let chunk_tokens: usize = chunk.iter().map(|&i| group.tokens[i].len()).sum();
        let weight = chunk_tokens as f64 / total_tokens;
        let mut chunk_neg_surrogate = 0.0;
        let mut chunk_kl = 0.0;
        for &i in chunk {
            let terms = sample_terms(group, advantages[i], i, cfg);
            chunk_neg_surrogate += terms.neg_surrogate_sum;
            chunk_kl += terms.kl_sum;
            clipped += terms.clipped_tokens;
            for (t, g) in terms.unscaled_grads.into_iter().enumerate() {
                grads[i][t] = weight * (g / chunk_tokens as f64);
            }
        }
        let chunk_loss = (chunk_neg_surrogate + cfg.kl_beta * chunk_kl) / chunk_tokens as f64;
        loss += weight * chunk_loss;
        kl += chunk_kl;
    }
    Ok(LossOutput {
        loss,
        grads,
        mean_kl: kl / total_tokens,
        clip_fraction: clipped as f64 / total_tokens,
    })
}

/// SFT warm-up loss: negative sum of ground-truth token log-probs.
pub fn sft_loss(logp_gt_tokens: &[f64]) -> f64 {
    assert!(!logp_gt_tokens.is_empty(), "sequence must be nonempty");
    -logp_gt_tokens.iter().sum::<f64>()
}

/// Per-token mean variant of [`sft_loss`], for reporting.
pub fn sft_loss_mean(logp_gt_tokens: &[f64]) -> f64 {
    sft_loss(logp_gt_tokens) / logp_gt_tokens.len() as f64
}

#[cfg(test)]
mod tests {
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::seq::SliceRandom;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;

    pub(crate) fn random_group(rng: &mut ChaCha8Rng, group_size: usize) -> RolloutGroup {
        let tokens: Vec<Vec<u32>> = (0..group_size)
            .map(|_| (0..rng.random_range(1..6)).map(|_| rng.random_range(0..16)).collect())
            .collect();
        let logp = |rng: &mut ChaCha8Rng, tokens: &[Vec<u32>]| {
            tokens
                .iter()
                .map(|seq| seq.iter().map(|_| rng.random_range(-3.0..-0.01)).collect())
                .collect::<Vec<Vec<f64>>>()
        };
        let rewards = (0..group_size).map(|_| rng.random_range(0.0..3.0)).collect();
        let logp_new = logp(rng, &tokens);
        let logp_old = logp(rng, &tokens);
        let logp_ref = logp(rng, &tokens);
        RolloutGroup::new(tokens, rewards, logp_new, logp_old, logp_ref).unwrap()
    }

    #[test]
    fn advantages_for_alternating_rewards() {
        let a = group_advantages(&[1.0, 0.0, 1.0, 0.0], 1e-4).unwrap();
        assert_eq!(a, vec![1.0, -1.0, 1.0, -1.0]);
    }

    #[test]
    fn advantages_for_equal_rewards_are_exactly_zero() {
        let a = group_advantages(&[0.7, 0.7, 0.7], 1e-4).unwrap();
        assert!(a.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn singleton_group_is_rejected() {
        assert_eq!(group_advantages(&[3.0], 1e-4), Err(GrpoError::GroupTooSmall(1)));
    }

    #[test]
    fn advantages_normalize_to_zero_mean_unit_std() {
        let mut rng = ChaCha8Rng::seed_from_u64(51);
        for _ in 0..100 {
            let n = rng.random_range(2..16);
            let rewards: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..3.0)).collect();
            if rewards.iter().all(|r| *r == rewards[0]) {
                continue;
            }
            let a = group_advantages(&rewards, 1e-4).unwrap();
            let mean = a.iter().sum::<f64>() / n as f64;
            let std = (a.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64).sqrt();
            assert!(mean.abs() < 1e-12);
            assert!((std - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn advantages_are_shift_and_scale_invariant() {
        let rewards = vec![0.25, 1.5, 0.75, 2.0];
        let base = group_advantages(&rewards, 1e-4).unwrap();
        let shifted: Vec<f64> = rewards.iter().map(|r| r + 10.0).collect();
        let scaled: Vec<f64> = rewards.iter().map(|r| r * 3.0).collect();
        for (b, s) in base.iter().zip(group_advantages(&shifted, 1e-4).unwrap()) {
            assert_abs_diff_eq!(*b, s, epsilon = 1e-9);
        }
        for (b, s) in base.iter().zip(group_advantages(&scaled, 1e-4).unwrap()) {
            assert_abs_diff_eq!(*b, s, epsilon = 1e-9);
        }
    }

    #[test]
    fn surrogate_values() {
        assert_abs_diff_eq!(clipped_surrogate(1.0, 2.0, 0.2), 2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(clipped_surrogate(1.5, 1.0, 0.2), 1.2, epsilon = 1e-15);
        assert_abs_diff_eq!(clipped_surrogate(0.5, -1.0, 0.2), -0.8, epsilon = 1e-15);
    }

    #[test]
    fn surrogate_is_unclipped_inside_the_band() {
        let mut rng = ChaCha8Rng::seed_from_u64(52);
        for _ in 0..100 {
            let eps = 0.2;
            let r = rng.random_range(1.0 - eps..1.0 + eps);
            let a = rng.random_range(-2.0..2.0);
            assert_eq!(clipped_surrogate(r, a, eps), r * a);
        }
    }

    #[test]
    fn ratio_identities() {
        assert_eq!(token_ratio(-1.5, -1.5), 1.0);
        assert_abs_diff_eq!(token_ratio(-0.5, -0.5 - 2.0_f64.ln()), 2.0, epsilon = 1e-12);
        let mut rng = ChaCha8Rng::seed_from_u64(53);
        for _ in 0..100 {
            let ln_p = rng.random_range(-5.0..0.0f64);
            let ln_q = rng.random_range(-5.0..0.0f64);
            let direct = ln_p.exp() / ln_q.exp();
            assert!((token_ratio(ln_p, ln_q) - direct).abs() < 1e-12 * direct.max(1.0));
        }
    }

    #[test]
    fn kl_estimator_values_and_nonnegativity() {
        assert_eq!(kl_token(-1.0, -1.0), 0.0);
        assert_abs_diff_eq!(kl_token(-0.9, -1.0), 0.1f64.exp() - 0.1 - 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(kl_token(-0.9, -1.0), 0.0051709180756477, epsilon = 1e-12);
        let mut rng = ChaCha8Rng::seed_from_u64(54);
        for _ in 0..200 {
            let kl = kl_token(rng.random_range(-5.0..0.0), rng.random_range(-5.0..0.0));
            assert!(kl >= 0.0);
        }
    }

    #[test]
    fn zero_advantage_zero_beta_means_zero_loss() {
        let tokens = vec![vec![0u32], vec![1u32]];
        let logp = vec![vec![-0.5], vec![-0.7]];
        let group = RolloutGroup::new(
            tokens,
            vec![1.0, 1.0],
            logp.clone(),
            logp.clone(),
            logp,
        )
        .unwrap();
        let cfg = GrpoConfig {
            kl_beta: 0.0,
            ..Default::default()
        };
        let out = grpo_loss(&group, &cfg).unwrap();
        assert_eq!(out.loss, 0.0);
        assert!(out.grads.iter().flatten().all(|g| *g == 0.0));
    }

    #[test]
    fn single_token_group_composes_the_scalar_ops() {
        // Hand-composed from clipped_surrogate, token_ratio, and kl_token.
        let group = RolloutGroup::new(
            vec![vec![0u32], vec![1u32]],
            vec![2.0, 0.0],
            vec![vec![-0.4], vec![-1.2]],
            vec![vec![-0.9], vec![-1.0]],
            vec![vec![-0.6], vec![-1.1]],
        )
        .unwrap();
        let cfg = GrpoConfig {
            clip_eps: 0.2,
            kl_beta: 0.3,
            group_size: 2,
            micro_chunk: 1,
            advantage_std_floor: 1e-4,
        };
        let adv = group_advantages(&group.rewards, cfg.advantage_std_floor).unwrap();
        let mut expected = 0.0;
        for i in 0..2 {
            let r = token_ratio(group.logp_new[i][0], group.logp_old[i][0]);
            expected -= clipped_surrogate(r, adv[i], cfg.clip_eps);
            expected += cfg.kl_beta * kl_token(group.logp_ref[i][0], group.logp_new[i][0]);
        }
        expected /= 2.0;
        let out = grpo_loss(&group, &cfg).unwrap();
        assert_abs_diff_eq!(out.loss, expected, epsilon = 1e-15);
    }

    /// Central finite differences over each logp_new coordinate.
    fn finite_difference_grads(group: &RolloutGroup, cfg: &GrpoConfig) -> Vec<Vec<f64>> {
        let h = 1e-5;
        let mut grads = Vec::new();
        for i in 0..group.group_size() {
            let mut row = Vec::new();
            for t in 0..group.tokens[i].len() {
                let mut plus = group.clone();
                plus.logp_new[i][t] += h;
                let mut minus = group.clone();
                minus.logp_new[i][t] -= h;
                let f_plus = grpo_loss(&plus, cfg).unwrap().loss;
                let f_minus = grpo_loss(&minus, cfg).unwrap().loss;
                row.push((f_plus - f_minus) / (2.0 * h));
            }
            grads.push(row);
        }
        grads
    }

    #[test]
    fn analytic_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(55);
        let cfg = GrpoConfig {
            kl_beta: 0.1,
            ..Default::default()
        };
        for trial in 0..30 {
            let group = random_group(&mut rng, 2 + trial % 5);
            let out = grpo_loss(&group, &cfg).unwrap();
            let fd = finite_difference_grads(&group, &cfg);
            for (gi, gr) in out.grads.iter().zip(&fd) {
                for (a, n) in gi.iter().zip(gr) {
                    let denom = a.abs().max(n.abs()).max(1e-8);
                    assert!(
                        (a - n).abs() / denom < 1e-4,
                        "analytic {a} vs fd {n} in trial {trial}"
                    );
                }
            }
        }
    }

    #[test]
    fn beta_zero_ignores_reference_logps() {
        let mut rng = ChaCha8Rng::seed_from_u64(56);
        let cfg = GrpoConfig {
            kl_beta: 0.0,
            ..Default::default()
        };
        let group = random_group(&mut rng, 6);
        let base = grpo_loss(&group, &cfg).unwrap();
        let mut perturbed = group.clone();
        for seq in &mut perturbed.logp_ref {
            for lp in seq {
                *lp += rng.random_range(-1.0..1.0);
            }
        }
        let changed = grpo_loss(&perturbed, &cfg).unwrap();
        assert_eq!(base.loss.to_bits(), changed.loss.to_bits());
        assert_eq!(base.grads, changed.grads);
    }

    #[test]
    fn single_chunk_is_bitwise_identical() {
        let mut rng = ChaCha8Rng::seed_from_u64(57);
        for _ in 0..20 {
            let group = random_group(&mut rng, 8);
            let cfg = GrpoConfig {
                micro_chunk: 8,
                ..Default::default()
            };
            let direct = grpo_loss(&group, &cfg).unwrap();
            let chunked = chunked_loss(&group, &cfg).unwrap();
            assert_eq!(direct.loss.to_bits(), chunked.loss.to_bits());
            for (a, b) in direct.grads.iter().flatten().zip(chunked.grads.iter().flatten()) {
                assert_eq!(a.to_bits(), b.to_bits());
            }
        }
    }

    #[test]
    fn chunking_matches_for_all_chunk_sizes() {
        let mut rng = ChaCha8Rng::seed_from_u64(58);
        let group = random_group(&mut rng, 8);
        let direct = grpo_loss(&group, &GrpoConfig::default()).unwrap();
        for micro_chunk in 1..=8 {
            let cfg = GrpoConfig {
                micro_chunk,
                ..Default::default()
            };
            let chunked = chunked_loss(&group, &cfg).unwrap();
            assert!((chunked.loss - direct.loss).abs() <= 1e-12 * direct.loss.abs().max(1.0));
            for (a, b) in direct.grads.iter().flatten().zip(chunked.grads.iter().flatten()) {
                assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
            }
        }
    }

    #[test]
    fn partition_validation() {
        let mut rng = ChaCha8Rng::seed_from_u64(59);
        let group = random_group(&mut rng, 4);
        let cfg = GrpoConfig::default();
        let missing = vec![vec![0, 1], vec![2]];
        assert!(matches!(
            chunked_loss_with_partition(&group, &cfg, &missing),
            Err(GrpoError::InvalidPartition(_))
        ));
        let repeated = vec![vec![0, 1], vec![1, 2, 3]];
        assert!(chunked_loss_with_partition(&group, &cfg, &repeated).is_err());
    }

    #[test]
    fn sft_loss_values() {
        assert_eq!(sft_loss(&[0.0, 0.0, 0.0]), 0.0);
        let two = 2.0_f64.ln();
        assert_abs_diff_eq!(sft_loss(&[-two, -two]), 2.0 * two, epsilon = 1e-15);
        let mut rng = ChaCha8Rng::seed_from_u64(60);
        for _ in 0..50 {
            let seq: Vec<f64> = (0..rng.random_range(1..20))
                .map(|_| rng.random_range(-4.0..0.0))
                .collect();
            let direct: f64 = seq.iter().map(|lp| -lp).sum();
            assert_abs_diff_eq!(sft_loss(&seq), direct, epsilon = 1e-12);
            assert_abs_diff_eq!(
                sft_loss_mean(&seq),
                direct / seq.len() as f64,
                epsilon = 1e-12
            );
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn prop_chunking_identity_over_random_partitions(seed in 0u64..100_000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let group_size = rng.random_range(2..10);
            let group = random_group(&mut rng, group_size);
            let cfg = GrpoConfig { kl_beta: 0.05, ..Default::default() };

            // Random partition: shuffle indices then split at random points.
            let mut indices: Vec<usize> = (0..group_size).collect();
            indices.shuffle(&mut rng);
            let mut partition = Vec::new();
            let mut start = 0;
            while start < group_size {
                let len = rng.random_range(1..=group_size - start);
                partition.push(indices[start..start + len].to_vec());
                start += len;
            }

            let direct = grpo_loss(&group, &cfg).unwrap();
            let chunked = chunked_loss_with_partition(&group, &cfg, &partition).unwrap();
            prop_assert!((chunked.loss - direct.loss).abs() <= 1e-12 * direct.loss.abs().max(1.0));
            for (a, b) in direct.grads.iter().flatten().zip(chunked.grads.iter().flatten()) {
                prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
            }
        }
    }
}
