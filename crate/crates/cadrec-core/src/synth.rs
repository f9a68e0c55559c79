//! Synthetic corpus generation with planted structure: latent user/item
//! affinities, a Zipf-like item popularity with known exponent, and a
//! per-user bias of known scale, so debiasing claims can be checked against
//! ground truth.

use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::CoreError;
use crate::interactions::{Event, InteractionLog};
use crate::math;
use crate::matrix::Mat;
use crate::Result;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub num_users: usize,
    pub num_items: usize,
    /// Latent affinity dimension (independent of any model width).
    pub d_true: usize,
    /// Popularity skew; 0 plants no popularity signal at all.
    pub alpha_pop: f64,
    /// Scale of the planted per-user bias; 0 plants none.
    pub sigma_indi: f64,
    pub events_per_user: usize,
    pub seed: u64,
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_users == 0 {
            return Err(CoreError::InvalidConfig { field: "num_users", reason: "must be positive" });
        }
        if self.num_items == 0 {
            return Err(CoreError::InvalidConfig { field: "num_items", reason: "must be positive" });
        }
        if self.d_true == 0 {
            return Err(CoreError::InvalidConfig { field: "d_true", reason: "must be positive" });
        }
        if self.events_per_user == 0 {
            return Err(CoreError::InvalidConfig {
                field: "events_per_user",
                reason: "must be positive",
            });
        }
        if !self.alpha_pop.is_finite() || self.alpha_pop < 0.0 {
            return Err(CoreError::InvalidConfig {
                field: "alpha_pop",
                reason: "must be finite and non-negative",
            });
        }
        if !self.sigma_indi.is_finite() || self.sigma_indi < 0.0 {
            return Err(CoreError::InvalidConfig {
                field: "sigma_indi",
                reason: "must be finite and non-negative",
            });
        }
        Ok(())
    }
}

/// Everything the generator planted, for comparison after training.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthTruth {
    /// M x d_true latent user factors.
    pub user_factors: Mat,
    /// N x d_true latent item factors.
    pub item_factors: Mat,
    /// Planted base popularity per item, normalized to sum to one.
    pub base_popularity: Vec<f64>,
    /// Planted per-user bias strength.
    pub user_bias: Vec<f64>,
    /// Fixed per-item sensitivity the user bias couples to.
    pub sensitivity: Vec<f64>,
}

fn standard_normal<R: Rng>(rng: &mut R) -> f64 {
    // Box-Muller on a (0,1] uniform keeps the logarithm finite.
    let u1: f64 = 1.0 - rng.gen::<f64>();
    let u2: f64 = rng.gen();
    math::sqrt(-2.0 * math::ln(u1)) * math::cos(2.0 * core::f64::consts::PI * u2)
}

fn normal_mat<R: Rng>(rng: &mut R, rows: usize, cols: usize) -> Mat {
    let mut m = Mat::zeros(rows, cols);
    for x in m.as_mut_slice() {
        *x = standard_normal(rng);
    }
    m
}

/// Tempered Zipf weights: item at popularity rank r (rank = id) gets weight
/// proportional to `(r + 0.1 N)^(-alpha)`. The offset keeps the head from
/// swallowing the whole catalog at large exponents.
fn zipf_weights(n: usize, alpha: f64) -> Vec<f64> {
    let offset = 0.1 * n as f64;
    let mut w: Vec<f64> = (0..n)
        .map(|r| math::powf(r as f64 + 1.0 + offset, -alpha))
        .collect();
    let total: f64 = w.iter().sum();
    for x in &mut w {
        *x /= total;
    }
    w
}

/// Draw a full corpus. Truth tensors come from one seeded stream; each
/// user's events come from an independent per-user stream of the same seed,
/// so the corpus is reproducible user by user.
pub fn generate(cfg: &SynthConfig) -> Result<(InteractionLog, SynthTruth)> {
    cfg.validate()?;
    let (m, n) = (cfg.num_users, cfg.num_items);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let user_factors = normal_mat(&mut rng, m, cfg.d_true);
    let item_factors = normal_mat(&mut rng, n, cfg.d_true);
    let user_bias: Vec<f64> =
        (0..m).map(|_| cfg.sigma_indi * standard_normal(&mut rng)).collect();
    let sensitivity: Vec<f64> = (0..n).map(|_| standard_normal(&mut rng)).collect();
    let base_popularity = zipf_weights(n, cfg.alpha_pop);
    let log_pop: Vec<f64> = base_popularity.iter().map(|&z| math::ln(z)).collect();

    let mut events = Vec::with_capacity(m * cfg.events_per_user);
    for u in 0..m {
        let mut user_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        user_rng.set_stream(u as u64 + 1);

        let mut logits = vec![0.0; n];
        let uf = user_factors.row(u);
        let mut max = f64::NEG_INFINITY;
        for i in 0..n {
            let l = math::dot(uf, item_factors.row(i))
                + cfg.alpha_pop * log_pop[i]
                + user_bias[u] * sensitivity[i];
            logits[i] = l;
            max = max.max(l);
        }
        let mut cum = 0.0;
        let cumulative: Vec<f64> = logits
            .iter()
            .map(|&l| {
                cum += math::exp(l - max);
                cum
            })
            .collect();
        let total = cum;

        for ts in 0..cfg.events_per_user {
            let x: f64 = user_rng.gen::<f64>() * total;
            let item = cumulative.partition_point(|&c| c <= x).min(n - 1);
            events.push(Event { user: u as u32, item: item as u32, ts: ts as i64 });
        }
    }

    let log = InteractionLog::new(events, m, n)?;
    let truth = SynthTruth { user_factors, item_factors, base_popularity, user_bias, sensitivity };
    Ok((log, truth))
}

/// Raw interaction count per item over the whole log.
pub fn item_counts(log: &InteractionLog) -> Vec<u32> {
    let mut counts = vec![0u32; log.num_items];
    for e in &log.events {
        counts[e.item as usize] += 1;
    }
    counts
}

/// Gini coefficient of a count vector; 0 for perfectly even counts,
/// approaching 1 as interactions concentrate on few items.
pub fn gini(counts: &[u32]) -> f64 {
    let n = counts.len();
    let total: u64 = counts.iter().map(|&c| c as u64).sum();
    if n == 0 || total == 0 {
        return 0.0;
    }
    let mut sorted: Vec<u64> = counts.iter().map(|&c| c as u64).collect();
    sorted.sort_unstable();
    let weighted: f64 = sorted
        .iter()
        .enumerate()
        .map(|(i, &x)| (i as f64 + 1.0) * x as f64)
        .sum();
    2.0 * weighted / (n as f64 * total as f64) - (n as f64 + 1.0) / n as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn cfg(alpha_pop: f64, sigma_indi: f64, seed: u64) -> SynthConfig {
        SynthConfig {
            num_users: 80,
            num_items: 150,
            d_true: 6,
            alpha_pop,
            sigma_indi,
            events_per_user: 50,
            seed,
        }
    }

    #[test]
    fn rejects_bad_configs() {
        assert!(cfg(1.0, 1.0, 0).validate().is_ok());
        assert!(SynthConfig { num_users: 0, ..cfg(1.0, 1.0, 0) }.validate().is_err());
        assert!(SynthConfig { d_true: 0, ..cfg(1.0, 1.0, 0) }.validate().is_err());
        assert!(SynthConfig { alpha_pop: -0.1, ..cfg(1.0, 1.0, 0) }.validate().is_err());
        assert!(SynthConfig { sigma_indi: f64::NAN, ..cfg(1.0, 1.0, 0) }.validate().is_err());
        assert!(SynthConfig { events_per_user: 0, ..cfg(1.0, 1.0, 0) }.validate().is_err());
    }

    #[test]
    fn same_seed_reproduces_the_corpus() {
        let c = cfg(1.5, 0.8, 42);
        let (log_a, truth_a) = generate(&c).unwrap();
        let (log_b, truth_b) = generate(&c).unwrap();
        assert_eq!(log_a.events, log_b.events);
        assert_eq!(truth_a, truth_b);
        let (log_c, _) = generate(&SynthConfig { seed: 43, ..c }).unwrap();
        assert_ne!(log_a.events, log_c.events);
    }

    #[test]
    fn corpus_shape_and_timestamps() {
        let c = cfg(1.0, 1.0, 7);
        let (log, truth) = generate(&c).unwrap();
        assert_eq!(log.events.len(), c.num_users * c.events_per_user);
        assert_eq!(log.num_users, c.num_users);
        assert_eq!(log.num_items, c.num_items);
        for w in log.events.chunks(c.events_per_user) {
            for (ts, e) in w.iter().enumerate() {
                assert_eq!(e.user, w[0].user);
                assert_eq!(e.ts, ts as i64);
            }
        }
        assert_eq!(truth.user_factors.rows(), c.num_users);
        assert_eq!(truth.item_factors.rows(), c.num_items);
        assert_relative_eq!(truth.base_popularity.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn zero_exponent_and_scale_plant_nothing() {
        let (_, truth) = generate(&cfg(0.0, 0.0, 11)).unwrap();
        let uniform = 1.0 / 150.0;
        for &z in &truth.base_popularity {
            assert_relative_eq!(z, uniform, epsilon = 1e-12);
        }
        assert!(truth.user_bias.iter().all(|&b| b == 0.0));
    }

    #[test]
    fn gini_hand_values() {
        assert_eq!(gini(&[1, 1, 1, 1]), 0.0);
        assert_relative_eq!(gini(&[0, 0, 0, 4]), 0.75, epsilon = 1e-12);
        assert_relative_eq!(gini(&[0, 4]), 0.5, epsilon = 1e-12);
        assert_eq!(gini(&[]), 0.0);
        assert_eq!(gini(&[0, 0]), 0.0);
    }

    #[test]
    fn concentration_grows_with_the_popularity_exponent() {
        let seeds = [3u64, 5, 9];
        for &seed in &seeds {
            let g: Vec<f64> = [0.0, 1.0, 2.0]
                .iter()
                .map(|&a| gini(&item_counts(&generate(&cfg(a, 0.5, seed)).unwrap().0)))
                .collect();
            assert!(g[0] <= g[1] && g[1] <= g[2], "seed {seed}: {g:?}");
        }
    }

    #[test]
    fn top_decile_share_grows_with_the_exponent() {
        let share = |alpha: f64| {
            let (log, _) = generate(&cfg(alpha, 0.0, 21)).unwrap();
            let mut counts = item_counts(&log);
            counts.sort_unstable_by(|a, b| b.cmp(a));
            let top: u32 = counts[..counts.len() / 10].iter().sum();
            let total: u32 = counts.iter().sum();
            top as f64 / total as f64
        };
        assert!(share(2.0) > share(0.0) + 0.2, "{} vs {}", share(2.0), share(0.0));
    }

    #[test]
    fn planted_bias_shifts_users_toward_sensitive_items() {
        // With a huge bias scale and no affinity signal to speak of, a user
        // with positive planted bias should hit high-sensitivity items more
        // than a user with negative bias does.
        let c = SynthConfig {
            num_users: 40,
            num_items: 100,
            d_true: 1,
            alpha_pop: 0.0,
            sigma_indi: 4.0,
            events_per_user: 80,
            seed: 13,
        };
        let (log, truth) = generate(&c).unwrap();
        let mean_sensitivity = |u: u32| {
            let picks: Vec<f64> = log
                .events
                .iter()
                .filter(|e| e.user == u)
                .map(|e| truth.sensitivity[e.item as usize])
                .collect();
            picks.iter().sum::<f64>() / picks.len() as f64
        };
        let most_positive = (0..c.num_users)
            .max_by(|&a, &b| truth.user_bias[a].total_cmp(&truth.user_bias[b]))
            .unwrap();
        let most_negative = (0..c.num_users)
            .min_by(|&a, &b| truth.user_bias[a].total_cmp(&truth.user_bias[b]))
            .unwrap();
        assert!(
            mean_sensitivity(most_positive as u32) > mean_sensitivity(most_negative as u32),
            "bias did not shift item choice"
        );
    }
}
