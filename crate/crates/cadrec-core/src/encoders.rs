//! Trainable parameter tables, the popularity positional encoding, and the
//! individual-bias perturbation applied to item embeddings.

use alloc::vec::Vec;
use rand::distributions::Uniform;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::CoreError;
use crate::hgc::SaNormMode;
use crate::interactions::PopularityTable;
use crate::math;
use crate::matrix::Mat;
use crate::Result;

/// All model hyperparameters, including the code-path switches that ablation
/// and reduction tests flip. A disabled switch skips the computation entirely
/// instead of multiplying it by zero.
#[derive(Debug, Clone, PartialEq)]
pub struct HyperParams {
    /// Embedding width; must be even so popularity sin/cos pairs line up.
    pub d_m: usize,
    /// Attention heads per layer.
    pub z_h: usize,
    /// Stacked convolution layers.
    pub z_l: usize,
    /// Attention perturbation strength.
    pub delta: f64,
    /// Popularity-branch weight in the training score.
    pub beta1: f64,
    /// Embedding L2 penalty weight.
    pub beta2: f64,
    /// Loss weight on inter-acted targets.
    pub lambda1: f64,
    /// Loss weight on future-interacted targets.
    pub lambda2: f64,
    /// Learning rate.
    pub eta: f64,
    pub sa_norm: SaNormMode,
    pub sa_enabled: bool,
    pub pop_enabled: bool,
    pub bias_enabled: bool,
}

impl Default for HyperParams {
    fn default() -> Self {
        HyperParams {
            d_m: 64,
            z_h: 1,
            z_l: 1,
            delta: 0.1,
            beta1: 0.25,
            beta2: 0.6,
            lambda1: 2.3,
            lambda2: 7.0,
            eta: 0.01,
            sa_norm: SaNormMode::Row,
            sa_enabled: true,
            pop_enabled: true,
            bias_enabled: true,
        }
    }
}

impl HyperParams {
    pub fn validate(&self) -> Result<()> {
        if self.d_m == 0 || self.d_m % 2 != 0 {
            return Err(CoreError::InvalidConfig {
                field: "d_m",
                reason: "must be positive and even",
            });
        }
        if self.z_h == 0 {
            return Err(CoreError::InvalidConfig { field: "z_h", reason: "must be at least 1" });
        }
        if self.z_l == 0 {
            return Err(CoreError::InvalidConfig { field: "z_l", reason: "must be at least 1" });
        }
        if !(self.eta > 0.0) {
            return Err(CoreError::InvalidConfig { field: "eta", reason: "must be positive" });
        }
        for (field, v) in [
            ("delta", self.delta),
            ("beta1", self.beta1),
            ("beta2", self.beta2),
            ("lambda1", self.lambda1),
            ("lambda2", self.lambda2),
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(CoreError::InvalidConfig { field, reason: "must be finite and >= 0" });
            }
        }
        Ok(())
    }
}

/// Trainable state: item table, per-user bias table, and attention weights.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    /// Item embeddings, N x d_m.
    pub item_embeddings: Mat,
    /// Per-user individual bias, M x d_m.
    pub indiv_bias: Mat,
    /// Query projection per head, each d_m x d_m.
    pub w_query: Vec<Mat>,
    /// Key projection per head, each d_m x d_m.
    pub w_key: Vec<Mat>,
    /// Value projection shared by every head, d_m x d_m.
    pub w_value: Mat,
    pub hp: HyperParams,
}

impl ModelParams {
    pub fn num_users(&self) -> usize {
        self.indiv_bias.rows()
    }

    pub fn num_items(&self) -> usize {
        self.item_embeddings.rows()
    }

    pub fn all_finite(&self) -> bool {
        math::all_finite(self.item_embeddings.as_slice())
            && math::all_finite(self.indiv_bias.as_slice())
            && self.w_query.iter().all(|m| math::all_finite(m.as_slice()))
            && self.w_key.iter().all(|m| math::all_finite(m.as_slice()))
            && math::all_finite(self.w_value.as_slice())
    }
}

fn fill_uniform(rng: &mut ChaCha8Rng, rows: usize, cols: usize, bound: f64) -> Mat {
    let dist = Uniform::new(-bound, bound);
    let mut m = Mat::zeros(rows, cols);
    for x in m.as_mut_slice() {
        *x = rng.sample(dist);
    }
    m
}

/// Initialize parameters from a seeded generator. Item embeddings draw from
/// Uniform(-1, 1), projection weights from Uniform(-a, a) with
/// `a = sqrt(6 / (2 d_m))`, and the bias table starts at zero so the
/// perturbation opens as an identity. The sampling order is fixed (items,
/// then query/key per head, then value) so a seed pins every entry.
pub fn init_params(num_users: usize, num_items: usize, hp: HyperParams, seed: u64) -> Result<ModelParams> {
    hp.validate()?;
    if num_users == 0 || num_items == 0 {
        return Err(CoreError::EmptyCorpus);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let item_embeddings = fill_uniform(&mut rng, num_items, hp.d_m, 1.0);
    let a = math::sqrt(6.0 / (2.0 * hp.d_m as f64));
    let mut w_query = Vec::with_capacity(hp.z_h);
    let mut w_key = Vec::with_capacity(hp.z_h);
    for _ in 0..hp.z_h {
        w_query.push(fill_uniform(&mut rng, hp.d_m, hp.d_m, a));
        w_key.push(fill_uniform(&mut rng, hp.d_m, hp.d_m, a));
    }
    let w_value = fill_uniform(&mut rng, hp.d_m, hp.d_m, a);
    Ok(ModelParams {
        item_embeddings,
        indiv_bias: Mat::zeros(num_users, hp.d_m),
        w_query,
        w_key,
        w_value,
        hp,
    })
}

/// Positional encoding of an item's training interaction count: even slots
/// carry `sin(z_c / 10000^(j/d_m))`, the odd slot that follows carries the
/// cosine at the same frequency.
pub fn popularity_encoding(z_c: u32, d_m: usize) -> Vec<f64> {
    let z = z_c as f64;
    (0..d_m)
        .map(|j| {
            if j % 2 == 0 {
                math::sin(z / math::powf(10000.0, j as f64 / d_m as f64))
            } else {
                math::cos(z / math::powf(10000.0, (j - 1) as f64 / d_m as f64))
            }
        })
        .collect()
}

/// Average popularity encoding over a user's inter-acted items.
pub fn user_popularity(ia_items: &[u32], pop: &PopularityTable, d_m: usize) -> Result<Vec<f64>> {
    if ia_items.is_empty() {
        return Err(CoreError::EmptyInput("ia_items"));
    }
    let mut mean = alloc::vec![0.0; d_m];
    for &item in ia_items {
        math::axpy(1.0, &popularity_encoding(pop.count(item), d_m), &mut mean);
    }
    let inv = 1.0 / ia_items.len() as f64;
    for x in &mut mean {
        *x *= inv;
    }
    Ok(mean)
}

/// Shift every component of the item vector away from zero along the user's
/// unit bias direction: `psi + sign(psi) * e / ||e||`. A zero bias vector
/// (the initial state) leaves the embedding untouched, and `sign(0) = 0`
/// keeps zero components unperturbed.
pub fn perturb_with_bias(item_vec: &[f64], user_bias: &[f64]) -> Vec<f64> {
    debug_assert_eq!(item_vec.len(), user_bias.len());
    let mut unit = user_bias.to_vec();
    let norm = math::l2_normalize(&mut unit);
    if norm <= math::NORM_EPS {
        return item_vec.to_vec();
    }
    item_vec
        .iter()
        .zip(&unit)
        .map(|(&p, &b)| p + math::sign(p) * b)
        .collect()
}
