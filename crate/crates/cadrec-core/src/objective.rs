//! Training objective: two-branch scoring, weighted multi-label cross-entropy
//! over each user's positive items, reverse-mode gradients through the whole
//! encoder, the decayed update step, and finite-difference verification.
//!
//! Negative items carry zero label weight, so the loss is accumulated over
//! positives only; the result is identical to scoring the full item vector
//! and masking (covered by a test).

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::encoders::{popularity_encoding, HyperParams, ModelParams};
use crate::error::CoreError;
use crate::hgc::{self, LayerCache, SaNormMode};
use crate::interactions::PopularityTable;
use crate::math;
use crate::matrix::Mat;
use crate::Result;

/// Training scores mix in the popularity branch; test scores never do.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScoreMode {
    Train,
    Test,
}

/// Form of the embedding penalty added by [`total_loss`] reporting.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RegForm {
    /// `beta2 * ||psi||^2`, consistent with the multiplicative decay step.
    Squared,
    /// `beta2 * ||psi||`.
    Norm,
}

/// Precomputed popularity encodings for every item.
#[derive(Debug, Clone)]
pub struct PopEncodings {
    items: Mat,
}

impl PopEncodings {
    pub fn build(pop: &PopularityTable, d_m: usize) -> Self {
        let n = pop.counts().len();
        let mut items = Mat::zeros(n, d_m);
        for i in 0..n {
            items.row_mut(i).copy_from_slice(&popularity_encoding(pop.counts()[i], d_m));
        }
        PopEncodings { items }
    }

    pub fn item(&self, i: u32) -> &[f64] {
        self.items.row(i as usize)
    }

    /// Mean encoding over a user's inter-acted items.
    pub fn user_mean(&self, ia_items: &[u32]) -> Vec<f64> {
        let mut mean = vec![0.0; self.items.cols()];
        for &i in ia_items {
            math::axpy(1.0, self.item(i), &mut mean);
        }
        let inv = 1.0 / ia_items.len() as f64;
        for x in &mut mean {
            *x *= inv;
        }
        mean
    }
}

/// One user's training inputs: encoder items, extra targets, and the
/// adjacency slice over `ia` (symmetric, in `ia` order).
#[derive(Debug, Clone, Copy)]
pub struct UserExample<'a> {
    pub user: usize,
    pub ia: &'a [u32],
    pub fia: &'a [u32],
    pub slice: &'a Mat,
}

/// Dot-product score with the concatenated popularity branch in train mode:
/// `phi . psi + beta1^2 * (user_pop . item_pop)`.
pub fn score(
    phi: &[f64],
    psi: &[f64],
    user_pop: &[f64],
    item_pop: &[f64],
    beta1: f64,
    mode: ScoreMode,
) -> f64 {
    let base = math::dot(phi, psi);
    match mode {
        ScoreMode::Test => base,
        ScoreMode::Train => base + beta1 * beta1 * math::dot(user_pop, item_pop),
    }
}

/// Test-mode scores against every item: `psi * phi`.
pub fn score_all_test(params: &ModelParams, phi: &[f64]) -> Vec<f64> {
    (0..params.num_items())
        .map(|i| math::dot(phi, params.item_embeddings.row(i)))
        .collect()
}

/// Per-item loss weights: `lambda1` on inter-acted items, `lambda2` on
/// future-interacted items, zero elsewhere. The two sets must be disjoint.
pub fn weight_vector(
    ia: &[u32],
    fia: &[u32],
    lambda1: f64,
    lambda2: f64,
    n: usize,
) -> Result<Vec<f64>> {
    let mut c = vec![0.0; n];
    let mut seen = BTreeSet::new();
    for &i in ia {
        if i as usize >= n {
            return Err(CoreError::IdOutOfRange { kind: "item", id: i as usize, bound: n });
        }
        seen.insert(i);
        c[i as usize] = lambda1;
    }
    for &i in fia {
        if i as usize >= n {
            return Err(CoreError::IdOutOfRange { kind: "item", id: i as usize, bound: n });
        }
        if seen.contains(&i) {
            return Err(CoreError::OverlappingItem(i));
        }
        c[i as usize] = lambda2;
    }
    Ok(c)
}

/// Gradients contributed by a single user.
#[derive(Debug, Clone)]
pub struct UserGrad {
    pub user: usize,
    pub loss: f64,
    pub d_items: BTreeMap<u32, Vec<f64>>,
    /// Gradient of the user's bias row; empty when the bias path is off.
    pub d_bias: Vec<f64>,
    /// Per-head projection gradients; empty when attention is off.
    pub d_wq: Vec<Mat>,
    pub d_wk: Vec<Mat>,
    pub d_w1: Mat,
}

/// Merged gradients over a batch of users, plus the inter-acted multiplicity
/// counts that drive the decay step. Users are absorbed in a fixed order so
/// the merge is bit-reproducible regardless of how the per-user passes ran.
#[derive(Debug, Clone)]
pub struct BatchGrads {
    pub data_loss: f64,
    pub d_items: BTreeMap<u32, Vec<f64>>,
    pub d_bias: BTreeMap<usize, Vec<f64>>,
    pub d_wq: Vec<Mat>,
    pub d_wk: Vec<Mat>,
    pub d_w1: Mat,
    /// Number of batch users holding each item in their inter-acted set.
    pub ia_counts: BTreeMap<u32, u32>,
    pub num_users: usize,
}

impl BatchGrads {
    pub fn zeros(hp: &HyperParams) -> Self {
        let heads = if hp.sa_enabled { hp.z_h } else { 0 };
        BatchGrads {
            data_loss: 0.0,
            d_items: BTreeMap::new(),
            d_bias: BTreeMap::new(),
            d_wq: (0..heads).map(|_| Mat::zeros(hp.d_m, hp.d_m)).collect(),
            d_wk: (0..heads).map(|_| Mat::zeros(hp.d_m, hp.d_m)).collect(),
            d_w1: Mat::zeros(hp.d_m, hp.d_m),
            ia_counts: BTreeMap::new(),
            num_users: 0,
        }
    }

    pub fn absorb(&mut self, ia: &[u32], ug: UserGrad) {
        self.data_loss += ug.loss;
        for (item, g) in ug.d_items {
            match self.d_items.entry(item) {
                alloc::collections::btree_map::Entry::Occupied(mut e) => {
                    math::axpy(1.0, &g, e.get_mut());
                }
                alloc::collections::btree_map::Entry::Vacant(e) => {
                    e.insert(g);
                }
            }
        }
        if !ug.d_bias.is_empty() {
            self.d_bias.insert(ug.user, ug.d_bias);
        }
        for (acc, g) in self.d_wq.iter_mut().zip(&ug.d_wq) {
            acc.add_assign(g);
        }
        for (acc, g) in self.d_wk.iter_mut().zip(&ug.d_wk) {
            acc.add_assign(g);
        }
        self.d_w1.add_assign(&ug.d_w1);
        for &i in ia {
            *self.ia_counts.entry(i).or_insert(0) += 1;
        }
        self.num_users += 1;
    }

    pub fn item_grad(&self, item: u32) -> Option<&[f64]> {
        self.d_items.get(&item).map(|v| v.as_slice())
    }

    fn check_finite(&self) -> Result<()> {
        for (item, g) in &self.d_items {
            if !math::all_finite(g) {
                return Err(CoreError::NonFinite { tensor: format!("d_items[{item}]") });
            }
        }
        for (user, g) in &self.d_bias {
            if !math::all_finite(g) {
                return Err(CoreError::NonFinite { tensor: format!("d_bias[{user}]") });
            }
        }
        for (h, g) in self.d_wq.iter().enumerate() {
            if !math::all_finite(g.as_slice()) {
                return Err(CoreError::NonFinite { tensor: format!("d_w_query[{h}]") });
            }
        }
        for (h, g) in self.d_wk.iter().enumerate() {
            if !math::all_finite(g.as_slice()) {
                return Err(CoreError::NonFinite { tensor: format!("d_w_key[{h}]") });
            }
        }
        if !math::all_finite(self.d_w1.as_slice()) {
            return Err(CoreError::NonFinite { tensor: String::from("d_w_value") });
        }
        Ok(())
    }
}

/// Score every target once and return the loss along with `dL/dr` per target.
fn score_targets(
    params: &ModelParams,
    phi: &[f64],
    ex: &UserExample<'_>,
    user_pop: Option<&[f64]>,
    pop: Option<&PopEncodings>,
) -> Result<(f64, Vec<(u32, f64)>)> {
    let hp = &params.hp;
    let n = params.num_items();
    let mut loss = 0.0;
    let mut slope = Vec::with_capacity(ex.ia.len() + ex.fia.len());
    let groups = [(ex.ia, hp.lambda1), (ex.fia, hp.lambda2)];
    for (items, weight) in groups {
        for &item in items {
            if item as usize >= n {
                return Err(CoreError::IdOutOfRange { kind: "item", id: item as usize, bound: n });
            }
            let mut r = math::dot(phi, params.item_embeddings.row(item as usize));
            if let (Some(up), Some(pe)) = (user_pop, pop) {
                r += hp.beta1 * hp.beta1 * math::dot(up, pe.item(item));
            }
            loss += weight * math::softplus(-r);
            slope.push((item, -weight * math::sigmoid(-r)));
        }
    }
    Ok((loss, slope))
}

fn user_pop_mean(
    hp: &HyperParams,
    ia: &[u32],
    pop: Option<&PopEncodings>,
) -> Result<Option<Vec<f64>>> {
    if !hp.pop_enabled {
        return Ok(None);
    }
    let pe = pop.ok_or(CoreError::EmptyInput("popularity encodings"))?;
    Ok(Some(pe.user_mean(ia)))
}

/// Data-term loss for one user (no embedding penalty).
pub fn user_loss(
    params: &ModelParams,
    ex: &UserExample<'_>,
    pop: Option<&PopEncodings>,
) -> Result<f64> {
    let fw = hgc::forward_user(params, ex.user, ex.ia, ex.slice)?;
    let up = user_pop_mean(&params.hp, ex.ia, pop)?;
    let (loss, _) = score_targets(params, &fw.phi, ex, up.as_deref(), pop)?;
    Ok(loss)
}

/// Backward through the score normalization on the attention matrix.
fn norm_backward(dr: &Mat, normalized: &Mat, norms: &[f64], mode: SaNormMode) -> Mat {
    let mut ds = dr.clone();
    match mode {
        SaNormMode::Row => {
            for p in 0..dr.rows() {
                if norms[p] > math::NORM_EPS {
                    let r = normalized.row(p);
                    let inner = math::dot(dr.row(p), r);
                    let row = ds.row_mut(p);
                    let inv = 1.0 / norms[p];
                    for (x, &rc) in row.iter_mut().zip(r) {
                        *x = (*x - inner * rc) * inv;
                    }
                }
            }
        }
        SaNormMode::Frobenius => {
            if norms[0] > math::NORM_EPS {
                let inner = math::dot(dr.as_slice(), normalized.as_slice());
                let inv = 1.0 / norms[0];
                for (x, &rc) in ds.as_mut_slice().iter_mut().zip(normalized.as_slice()) {
                    *x = (*x - inner * rc) * inv;
                }
            }
        }
        SaNormMode::Col => {
            for c in 0..dr.cols() {
                if norms[c] > math::NORM_EPS {
                    let mut inner = 0.0;
                    for r in 0..dr.rows() {
                        inner += dr[(r, c)] * normalized[(r, c)];
                    }
                    let inv = 1.0 / norms[c];
                    for r in 0..dr.rows() {
                        ds[(r, c)] = (dr[(r, c)] - inner * normalized[(r, c)]) * inv;
                    }
                }
            }
        }
    }
    ds
}

/// Backward through one convolution layer; returns the gradient with respect
/// to the layer input and accumulates weight gradients into `ug`.
fn layer_backward(
    params: &ModelParams,
    slice: &Mat,
    lc: &LayerCache,
    d_out: &Mat,
    ug: &mut UserGrad,
) -> Mat {
    let hp = &params.hp;
    let mut du = slice.matmul_tn(d_out);
    if hp.z_h > 1 {
        du.scale(hp.z_h as f64);
    }
    for head in &lc.heads {
        let mut t = head.normalized.matmul_tn(d_out);
        t.scale(hp.delta);
        du.add_assign(&t);
    }

    let mut d_input = Mat::zeros(d_out.rows(), d_out.cols());
    if !lc.heads.is_empty() {
        let mut dr = d_out.matmul_nt(&lc.u);
        dr.scale(hp.delta);
        let inv_sqrt = 1.0 / math::sqrt(hp.d_m as f64);
        for (h, head) in lc.heads.iter().enumerate() {
            let ds = norm_backward(&dr, &head.normalized, &head.norms, hp.sa_norm);
            let mut dq = ds.matmul(&head.k);
            dq.scale(inv_sqrt);
            let mut dk = ds.matmul_tn(&head.q);
            dk.scale(inv_sqrt);
            ug.d_wq[h].add_assign(&lc.input.matmul_tn(&dq));
            ug.d_wk[h].add_assign(&lc.input.matmul_tn(&dk));
            d_input.add_assign(&dq.matmul_nt(&params.w_query[h]));
            d_input.add_assign(&dk.matmul_nt(&params.w_key[h]));
        }
    }

    let mut dv = du;
    for (x, &v) in dv.as_mut_slice().iter_mut().zip(lc.v.as_slice()) {
        *x *= math::elu_prime(v);
    }
    ug.d_w1.add_assign(&lc.input.matmul_tn(&dv));
    d_input.add_assign(&dv.matmul_nt(&params.w_value));
    d_input
}

/// Full forward + reverse pass for one user.
pub fn user_loss_and_grad(
    params: &ModelParams,
    ex: &UserExample<'_>,
    pop: Option<&PopEncodings>,
) -> Result<UserGrad> {
    let hp = &params.hp;
    let d = hp.d_m;
    let fw = hgc::forward_user(params, ex.user, ex.ia, ex.slice)?;
    let up = user_pop_mean(hp, ex.ia, pop)?;
    let (loss, slopes) = score_targets(params, &fw.phi, ex, up.as_deref(), pop)?;

    let heads = if hp.sa_enabled { hp.z_h } else { 0 };
    let mut ug = UserGrad {
        user: ex.user,
        loss,
        d_items: BTreeMap::new(),
        d_bias: Vec::new(),
        d_wq: (0..heads).map(|_| Mat::zeros(d, d)).collect(),
        d_wk: (0..heads).map(|_| Mat::zeros(d, d)).collect(),
        d_w1: Mat::zeros(d, d),
    };

    // Score layer: r = phi . psi(i), plus a constant popularity term.
    let mut d_phi = vec![0.0; d];
    for &(item, g) in &slopes {
        math::axpy(g, params.item_embeddings.row(item as usize), &mut d_phi);
        let acc = ug.d_items.entry(item).or_insert_with(|| vec![0.0; d]);
        math::axpy(g, &fw.phi, acc);
    }

    // Unit normalization of the pooled vector.
    let mut d_pool = d_phi;
    if fw.pooled_norm > math::NORM_EPS {
        let inner = math::dot(&d_pool, &fw.phi);
        let inv = 1.0 / fw.pooled_norm;
        for (x, &pc) in d_pool.iter_mut().zip(&fw.phi) {
            *x = (*x - inner * pc) * inv;
        }
    }

    // Average pooling spreads the gradient evenly over rows.
    let l = ex.ia.len();
    let inv_l = 1.0 / l as f64;
    let mut d_cur = Mat::zeros(l, d);
    for r in 0..l {
        math::axpy(inv_l, &d_pool, d_cur.row_mut(r));
    }

    for lc in fw.layers.iter().rev() {
        d_cur = layer_backward(params, ex.slice, lc, &d_cur, &mut ug);
    }

    if hp.bias_enabled {
        let sg = fw.sign.as_ref().expect("sign cache present when bias path is on");
        let mut v = vec![0.0; d];
        for r in 0..l {
            for (c, vc) in v.iter_mut().enumerate() {
                *vc += sg[(r, c)] * d_cur[(r, c)];
            }
        }
        // Through the unit normalization of the bias; below the threshold the
        // forward is the identity in the perturbation direction, so the raw
        // accumulation passes through and lets a zero-initialized bias move.
        if fw.bias_norm > math::NORM_EPS {
            let inner = math::dot(&v, &fw.bias_unit);
            let inv = 1.0 / fw.bias_norm;
            for (x, &bc) in v.iter_mut().zip(&fw.bias_unit) {
                *x = (*x - inner * bc) * inv;
            }
        }
        ug.d_bias = v;
    }

    for (r, &item) in ex.ia.iter().enumerate() {
        let acc = ug.d_items.entry(item).or_insert_with(|| vec![0.0; d]);
        math::axpy(1.0, d_cur.row(r), acc);
    }
    Ok(ug)
}

/// Sequential batch gradient in example order.
pub fn batch_grad(
    params: &ModelParams,
    examples: &[UserExample<'_>],
    pop: Option<&PopEncodings>,
) -> Result<BatchGrads> {
    let mut grads = BatchGrads::zeros(&params.hp);
    for ex in examples {
        let ug = user_loss_and_grad(params, ex, pop)?;
        grads.absorb(ex.ia, ug);
    }
    Ok(grads)
}

/// Reported objective: data loss plus the embedding penalty over every batch
/// user's inter-acted items.
pub fn total_loss(
    params: &ModelParams,
    examples: &[UserExample<'_>],
    pop: Option<&PopEncodings>,
    reg: RegForm,
) -> Result<f64> {
    let mut total = 0.0;
    for ex in examples {
        total += user_loss(params, ex, pop)?;
        for &i in ex.ia {
            let row = params.item_embeddings.row(i as usize);
            total += params.hp.beta2
                * match reg {
                    RegForm::Squared => math::dot(row, row),
                    RegForm::Norm => math::norm2(row),
                };
        }
    }
    Ok(total)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OptimizerKind {
    Sgd,
    Momentum { momentum: f64 },
    Adam { decay1: f64, decay2: f64, epsilon: f64 },
}

#[derive(Debug, Clone)]
struct MomentBuffers {
    items: Mat,
    bias: Mat,
    wq: Vec<Mat>,
    wk: Vec<Mat>,
    w1: Mat,
}

impl MomentBuffers {
    fn zeros_like(p: &ModelParams) -> Self {
        MomentBuffers {
            items: Mat::zeros(p.item_embeddings.rows(), p.item_embeddings.cols()),
            bias: Mat::zeros(p.indiv_bias.rows(), p.indiv_bias.cols()),
            wq: p.w_query.iter().map(|m| Mat::zeros(m.rows(), m.cols())).collect(),
            wk: p.w_key.iter().map(|m| Mat::zeros(m.rows(), m.cols())).collect(),
            w1: Mat::zeros(p.w_value.rows(), p.w_value.cols()),
        }
    }
}

/// Optimizer state. Plain SGD keeps none; momentum and Adam keep moments.
#[derive(Debug, Clone)]
pub struct OptState {
    kind: OptimizerKind,
    step: u64,
    m: Option<MomentBuffers>,
    v: Option<MomentBuffers>,
}

impl OptState {
    pub fn new(kind: OptimizerKind, params: &ModelParams) -> Self {
        let m = match kind {
            OptimizerKind::Sgd => None,
            _ => Some(MomentBuffers::zeros_like(params)),
        };
        let v = match kind {
            OptimizerKind::Adam { .. } => Some(MomentBuffers::zeros_like(params)),
            _ => None,
        };
        OptState { kind, step: 0, m, v }
    }

    fn apply(&mut self, eta: f64, theta: &mut [f64], g: &[f64], tensor: Tensor, row: usize) {
        let t = self.step + 1;
        match self.kind {
            OptimizerKind::Sgd => math::axpy(-eta, g, theta),
            OptimizerKind::Momentum { momentum } => {
                let m = tensor.row(self.m.as_mut().expect("momentum buffers"), row);
                for ((x, &gj), mj) in theta.iter_mut().zip(g).zip(m) {
                    *mj = momentum * *mj + gj;
                    *x -= eta * *mj;
                }
            }
            OptimizerKind::Adam { decay1, decay2, epsilon } => {
                let bc1 = 1.0 - math::powf(decay1, t as f64);
                let bc2 = 1.0 - math::powf(decay2, t as f64);
                let mb = self.m.as_mut().expect("first moments");
                let vb = self.v.as_mut().expect("second moments");
                let m = tensor.row(mb, row);
                let v = tensor.row(vb, row);
                for (j, (x, &gj)) in theta.iter_mut().zip(g).enumerate() {
                    m[j] = decay1 * m[j] + (1.0 - decay1) * gj;
                    v[j] = decay2 * v[j] + (1.0 - decay2) * gj * gj;
                    *x -= eta * (m[j] / bc1) / (math::sqrt(v[j] / bc2) + epsilon);
                }
            }
        }
    }
}

/// Addresses one row of one tensor inside the moment buffers.
#[derive(Clone, Copy)]
enum Tensor {
    Items,
    Bias,
    Wq(usize),
    Wk(usize),
    W1,
}

impl Tensor {
    fn row<'a>(self, b: &'a mut MomentBuffers, row: usize) -> &'a mut [f64] {
        match self {
            Tensor::Items => b.items.row_mut(row),
            Tensor::Bias => b.bias.row_mut(row),
            Tensor::Wq(h) => b.wq[h].row_mut(row),
            Tensor::Wk(h) => b.wk[h].row_mut(row),
            Tensor::W1 => b.w1.row_mut(row),
        }
    }
}

/// Apply one batch update: multiplicative decay on the inter-acted item rows
/// (factor `1 - count * eta * beta2` per row), then an optimizer step on
/// every accumulated gradient. Non-finite gradients reject the whole step.
pub fn update_step(
    params: &mut ModelParams,
    grads: &BatchGrads,
    opt: &mut OptState,
) -> Result<()> {
    grads.check_finite()?;
    let eta = params.hp.eta;
    let beta2 = params.hp.beta2;

    for (&item, &count) in &grads.ia_counts {
        let factor = 1.0 - count as f64 * eta * beta2;
        for x in params.item_embeddings.row_mut(item as usize) {
            *x *= factor;
        }
    }
    for (&item, g) in &grads.d_items {
        opt.apply(eta, params.item_embeddings.row_mut(item as usize), g, Tensor::Items, item as usize);
    }
    for (&user, g) in &grads.d_bias {
        opt.apply(eta, params.indiv_bias.row_mut(user), g, Tensor::Bias, user);
    }
    let d = params.hp.d_m;
    for h in 0..grads.d_wq.len() {
        for r in 0..d {
            let (g, gk) = (grads.d_wq[h].row(r), grads.d_wk[h].row(r));
            opt.apply(eta, params.w_query[h].row_mut(r), g, Tensor::Wq(h), r);
            opt.apply(eta, params.w_key[h].row_mut(r), gk, Tensor::Wk(h), r);
        }
    }
    for r in 0..d {
        opt.apply(eta, params.w_value.row_mut(r), grads.d_w1.row(r), Tensor::W1, r);
    }
    opt.step += 1;

    for (name, ok) in [
        ("item_embeddings", math::all_finite(params.item_embeddings.as_slice())),
        ("indiv_bias", math::all_finite(params.indiv_bias.as_slice())),
        ("w_value", math::all_finite(params.w_value.as_slice())),
    ] {
        if !ok {
            return Err(CoreError::NonFinite { tensor: String::from(name) });
        }
    }
    Ok(())
}

/// One tensor's worst relative disagreement between analytic and numeric
/// gradients.
#[derive(Debug, Clone)]
pub struct TensorCheck {
    pub tensor: String,
    pub max_rel_err: f64,
}

pub fn max_rel_err(report: &[TensorCheck]) -> f64 {
    report.iter().fold(0.0, |m, t| m.max(t.max_rel_err))
}

fn rel_err(ga: f64, gn: f64) -> f64 {
    math::abs(ga - gn) / f64::max(1e-8, math::abs(ga) + math::abs(gn))
}

/// Central finite differences over every coordinate of every tensor,
/// compared against the supplied analytic gradients (absent map entries
/// count as zero).
pub fn grad_check<F>(
    params: &ModelParams,
    grads: &BatchGrads,
    loss: F,
    step: f64,
) -> Vec<TensorCheck>
where
    F: Fn(&ModelParams) -> f64,
{
    let mut work = params.clone();
    let mut report = Vec::new();

    let mut probe = |work: &mut ModelParams,
                     select: &dyn Fn(&mut ModelParams) -> &mut Mat,
                     analytic: &dyn Fn(usize, usize) -> f64,
                     name: String| {
        let (rows, cols) = {
            let m = select(work);
            (m.rows(), m.cols())
        };
        let mut worst = 0.0f64;
        for r in 0..rows {
            for c in 0..cols {
                let orig = select(work)[(r, c)];
                select(work)[(r, c)] = orig + step;
                let fp = loss(work);
                select(work)[(r, c)] = orig - step;
                let fm = loss(work);
                select(work)[(r, c)] = orig;
                let gn = (fp - fm) / (2.0 * step);
                worst = worst.max(rel_err(analytic(r, c), gn));
            }
        }
        report.push(TensorCheck { tensor: name, max_rel_err: worst });
    };

    probe(
        &mut work,
        &|p| &mut p.item_embeddings,
        &|r, c| grads.item_grad(r as u32).map_or(0.0, |g| g[c]),
        String::from("item_embeddings"),
    );
    probe(
        &mut work,
        &|p| &mut p.indiv_bias,
        &|r, c| grads.d_bias.get(&r).map_or(0.0, |g| g[c]),
        String::from("indiv_bias"),
    );
    for h in 0..params.w_query.len() {
        probe(
            &mut work,
            &move |p| &mut p.w_query[h],
            &|r, c| grads.d_wq.get(h).map_or(0.0, |m| m[(r, c)]),
            format!("w_query[{h}]"),
        );
        probe(
            &mut work,
            &move |p| &mut p.w_key[h],
            &|r, c| grads.d_wk.get(h).map_or(0.0, |m| m[(r, c)]),
            format!("w_key[{h}]"),
        );
    }
    probe(
        &mut work,
        &|p| &mut p.w_value,
        &|r, c| grads.d_w1[(r, c)],
        String::from("w_value"),
    );
    report
}
