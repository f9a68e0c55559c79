//! The contextualized convolution: structural propagation over the user's
//! adjacency slice plus a self-attention perturbation, multi-head summation,
//! and pooling to the unit-norm user vector.
//!
//! The forward pass records every intermediate (projections, score norms,
//! activations) so the training code can run reverse-mode accumulation
//! without recomputing them.

use alloc::vec;
use alloc::vec::Vec;

use crate::encoders::ModelParams;
use crate::error::CoreError;
use crate::hypergraph::HyperGraph;
use crate::math;
use crate::matrix::Mat;
use crate::Result;

/// How the attention score matrix is L2-normalized before scaling by delta.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SaNormMode {
    /// Each row of the L x L score matrix to unit norm (default).
    Row,
    /// The whole matrix to unit Frobenius norm.
    Frobenius,
    /// Each column to unit norm.
    Col,
}

/// Per-head intermediates kept for the backward pass. `normalized` is the
/// score matrix after L2 normalization but before the delta scale.
#[derive(Debug, Clone)]
pub struct HeadCache {
    pub q: Mat,
    pub k: Mat,
    pub scores: Mat,
    /// Row norms, column norms, or a single Frobenius norm per `SaNormMode`.
    pub norms: Vec<f64>,
    pub normalized: Mat,
}

/// One convolution layer's intermediates.
#[derive(Debug, Clone)]
pub struct LayerCache {
    pub input: Mat,
    /// Value projection `input * W_1`.
    pub v: Mat,
    /// `ELU(v)`, shared by the structural term and every head.
    pub u: Mat,
    /// Empty when the attention path is disabled.
    pub heads: Vec<HeadCache>,
    pub output: Mat,
}

/// Complete forward record for one user.
#[derive(Debug, Clone)]
pub struct UserForward {
    pub user: usize,
    pub items: Vec<u32>,
    /// `sign(psi)` of the raw input rows when the bias path is enabled.
    pub sign: Option<Mat>,
    /// L2 norm of the user's bias vector at forward time.
    pub bias_norm: f64,
    /// Unit bias direction (the raw vector when its norm is below threshold).
    pub bias_unit: Vec<f64>,
    pub layers: Vec<LayerCache>,
    /// Mean of the final layer's rows, before normalization.
    pub pooled: Vec<f64>,
    pub pooled_norm: f64,
    /// Unit-norm user vector.
    pub phi: Vec<f64>,
}

/// L2-normalize the score matrix per `mode`. Slices with norm at most
/// [`math::NORM_EPS`] pass through unchanged.
fn normalize_scores(s: &Mat, mode: SaNormMode) -> (Mat, Vec<f64>) {
    let mut out = s.clone();
    match mode {
        SaNormMode::Row => {
            let norms = (0..out.rows()).map(|r| math::l2_normalize(out.row_mut(r))).collect();
            (out, norms)
        }
        SaNormMode::Frobenius => {
            let n = math::norm2(s.as_slice());
            if n > math::NORM_EPS {
                out.scale(1.0 / n);
            }
            (out, vec![n])
        }
        SaNormMode::Col => {
            let mut norms = vec![0.0; s.cols()];
            for c in 0..s.cols() {
                let mut acc = 0.0;
                for r in 0..s.rows() {
                    acc += s[(r, c)] * s[(r, c)];
                }
                norms[c] = math::sqrt(acc);
                if norms[c] > math::NORM_EPS {
                    let inv = 1.0 / norms[c];
                    for r in 0..s.rows() {
                        out[(r, c)] *= inv;
                    }
                }
            }
            (out, norms)
        }
    }
}

fn attention_head(e: &Mat, wq: &Mat, wk: &Mat, mode: SaNormMode) -> HeadCache {
    let q = e.matmul(wq);
    let k = e.matmul(wk);
    let mut scores = q.matmul_nt(&k);
    scores.scale(1.0 / math::sqrt(e.cols() as f64));
    let (normalized, norms) = normalize_scores(&scores, mode);
    HeadCache { q, k, scores, norms, normalized }
}

/// The attention perturbation `delta * Norm(E W_q (E W_k)^T / sqrt(d_m))`.
pub fn attention_perturbation(e: &Mat, wq: &Mat, wk: &Mat, delta: f64, mode: SaNormMode) -> Mat {
    let mut out = attention_head(e, wq, wk, mode).normalized;
    out.scale(delta);
    out
}

/// One head of the convolution: `(slice + delta') * ELU(E W_1)`.
pub fn hgc_forward(
    slice: &Mat,
    e: &Mat,
    wq: &Mat,
    wk: &Mat,
    w_value: &Mat,
    delta: f64,
    mode: SaNormMode,
) -> Mat {
    assert_eq!(slice.rows(), e.rows(), "slice height");
    assert_eq!(slice.cols(), e.rows(), "slice width");
    let u = e.matmul(w_value).map(math::elu);
    let mut mixer = attention_perturbation(e, wq, wk, delta, mode);
    mixer.add_assign(slice);
    mixer.matmul(&u)
}

/// Aggregate heads by elementwise summation.
pub fn multi_head(head_outputs: &[Mat]) -> Mat {
    assert!(!head_outputs.is_empty(), "at least one head");
    let mut out = head_outputs[0].clone();
    for h in &head_outputs[1..] {
        out.add_assign(h);
    }
    out
}

/// One full layer over all heads, caching intermediates. The value path is
/// shared, so the head sum factors into
/// `(z_h * slice + delta * sum_h Norm(S_h)) * U`.
pub fn layer_forward(params: &ModelParams, slice: &Mat, input: Mat) -> LayerCache {
    let hp = &params.hp;
    let v = input.matmul(&params.w_value);
    let u = v.map(math::elu);
    let mut output = slice.matmul(&u);
    if hp.z_h > 1 {
        output.scale(hp.z_h as f64);
    }
    let mut heads = Vec::new();
    if hp.sa_enabled {
        for h in 0..hp.z_h {
            let head = attention_head(&input, &params.w_query[h], &params.w_key[h], hp.sa_norm);
            let mut term = head.normalized.matmul(&u);
            term.scale(hp.delta);
            output.add_assign(&term);
            heads.push(head);
        }
    }
    LayerCache { input, v, u, heads, output }
}

/// Run the full per-user forward pass and keep every intermediate.
pub fn forward_user(
    params: &ModelParams,
    user: usize,
    ia_items: &[u32],
    slice: &Mat,
) -> Result<UserForward> {
    let hp = &params.hp;
    let l = ia_items.len();
    if l == 0 {
        return Err(CoreError::EmptyInput("ia_items"));
    }
    if user >= params.num_users() {
        return Err(CoreError::IdOutOfRange { kind: "user", id: user, bound: params.num_users() });
    }
    if slice.rows() != l || slice.cols() != l {
        return Err(CoreError::DimMismatch {
            context: "adjacency slice",
            expected: l,
            got: slice.rows(),
        });
    }

    let d = hp.d_m;
    let mut e0 = Mat::zeros(l, d);
    for (r, &item) in ia_items.iter().enumerate() {
        if item as usize >= params.num_items() {
            return Err(CoreError::IdOutOfRange {
                kind: "item",
                id: item as usize,
                bound: params.num_items(),
            });
        }
        e0.row_mut(r).copy_from_slice(params.item_embeddings.row(item as usize));
    }

    let mut sign = None;
    let mut bias_norm = 0.0;
    let mut bias_unit = Vec::new();
    if hp.bias_enabled {
        let mut unit = params.indiv_bias.row(user).to_vec();
        let norm = math::l2_normalize(&mut unit);
        let mut sg = Mat::zeros(l, d);
        for r in 0..l {
            for c in 0..d {
                let s = math::sign(e0[(r, c)]);
                sg[(r, c)] = s;
                if norm > math::NORM_EPS {
                    e0[(r, c)] += s * unit[c];
                }
            }
        }
        sign = Some(sg);
        bias_norm = norm;
        bias_unit = unit;
    }

    let mut layers = Vec::with_capacity(hp.z_l);
    let mut cur = e0;
    for _ in 0..hp.z_l {
        let lc = layer_forward(params, slice, cur);
        cur = lc.output.clone();
        layers.push(lc);
    }

    let pooled = cur.mean_rows();
    let mut phi = pooled.clone();
    let pooled_norm = math::l2_normalize(&mut phi);
    Ok(UserForward {
        user,
        items: ia_items.to_vec(),
        sign,
        bias_norm,
        bias_unit,
        layers,
        pooled,
        pooled_norm,
        phi,
    })
}

/// Encode one user against the live graph and return the unit-norm vector.
pub fn encode_user(
    params: &ModelParams,
    graph: &HyperGraph,
    user: usize,
    ia_items: &[u32],
) -> Result<Vec<f64>> {
    let slice = graph.slice(ia_items)?;
    Ok(forward_user(params, user, ia_items, &slice.sub_adjacency)?.phi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoders::{init_params, HyperParams};
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn rand_mat(rng: &mut rand_chacha::ChaCha8Rng, r: usize, c: usize, scale: f64) -> Mat {
        let mut m = Mat::zeros(r, c);
        for x in m.as_mut_slice() {
            *x = rng.gen_range(-scale..scale);
        }
        m
    }

    #[test]
    fn zero_delta_gives_zero_perturbation() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let e = rand_mat(&mut rng, 3, 4, 1.0);
        let wq = rand_mat(&mut rng, 4, 4, 1.0);
        let wk = rand_mat(&mut rng, 4, 4, 1.0);
        let d = attention_perturbation(&e, &wq, &wk, 0.0, SaNormMode::Row);
        assert!(d.as_slice().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn singleton_score_normalizes_to_delta() {
        let e = Mat::from_vec(1, 2, vec![1.0, 2.0]);
        let wq = Mat::identity(2);
        let wk = Mat::identity(2);
        let d = attention_perturbation(&e, &wq, &wk, 0.3, SaNormMode::Row);
        assert_relative_eq!(d[(0, 0)], 0.3);

        let zero = Mat::zeros(1, 2);
        let d0 = attention_perturbation(&zero, &wq, &wk, 0.3, SaNormMode::Row);
        assert_eq!(d0[(0, 0)], 0.0);
    }

    #[test]
    fn every_row_of_the_perturbation_has_norm_delta() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        let e = rand_mat(&mut rng, 3, 4, 1.0);
        let wq = rand_mat(&mut rng, 4, 4, 0.5);
        let wk = rand_mat(&mut rng, 4, 4, 0.5);
        let d = attention_perturbation(&e, &wq, &wk, 0.7, SaNormMode::Row);
        for r in 0..3 {
            assert_relative_eq!(math::norm2(d.row(r)), 0.7, epsilon = 1e-12);
        }
    }

    #[test]
    fn frobenius_mode_normalizes_the_whole_matrix() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let e = rand_mat(&mut rng, 3, 4, 1.0);
        let wq = rand_mat(&mut rng, 4, 4, 0.5);
        let wk = rand_mat(&mut rng, 4, 4, 0.5);
        let d = attention_perturbation(&e, &wq, &wk, 0.7, SaNormMode::Frobenius);
        assert_relative_eq!(math::norm2(d.as_slice()), 0.7, epsilon = 1e-12);
    }

    #[test]
    fn col_mode_normalizes_each_column() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let e = rand_mat(&mut rng, 3, 4, 1.0);
        let wq = rand_mat(&mut rng, 4, 4, 0.5);
        let wk = rand_mat(&mut rng, 4, 4, 0.5);
        let d = attention_perturbation(&e, &wq, &wk, 0.7, SaNormMode::Col);
        for c in 0..3 {
            let col: Vec<f64> = (0..3).map(|r| d[(r, c)]).collect();
            assert_relative_eq!(math::norm2(&col), 0.7, epsilon = 1e-12);
        }
    }

    #[test]
    fn zero_delta_forward_is_pure_structural_convolution() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let e = rand_mat(&mut rng, 3, 4, 1.0);
        let wq = rand_mat(&mut rng, 4, 4, 0.5);
        let wk = rand_mat(&mut rng, 4, 4, 0.5);
        let w1 = rand_mat(&mut rng, 4, 4, 0.5);
        let slice = {
            let mut s = Mat::identity(3);
            s[(0, 1)] = 0.4;
            s[(1, 0)] = 0.4;
            s
        };
        let out = hgc_forward(&slice, &e, &wq, &wk, &w1, 0.0, SaNormMode::Row);
        let expected = slice.matmul(&e.matmul(&w1).map(math::elu));
        assert!(out.max_abs_diff(&expected) == 0.0);
    }

    #[test]
    fn identity_graph_identity_value_reduces_to_elu() {
        let e = Mat::from_vec(2, 2, vec![0.5, -0.5, 2.0, -2.0]);
        let out = hgc_forward(
            &Mat::identity(2),
            &e,
            &Mat::identity(2),
            &Mat::identity(2),
            &Mat::identity(2),
            0.0,
            SaNormMode::Row,
        );
        assert_eq!(out, e.map(math::elu));
    }

    /// Re-derives the head forward with nalgebra as an independent check.
    fn nalgebra_head(slice: &Mat, e: &Mat, wq: &Mat, wk: &Mat, w1: &Mat, delta: f64) -> Mat {
        use nalgebra::DMatrix;
        let dm = |m: &Mat| DMatrix::from_fn(m.rows(), m.cols(), |r, c| m[(r, c)]);
        let (ne, nq, nk, nv, ns) = (dm(e), dm(wq), dm(wk), dm(w1), dm(slice));
        let q = &ne * &nq;
        let k = &ne * &nk;
        let mut s = (&q * k.transpose()) / (e.cols() as f64).sqrt();
        for r in 0..s.nrows() {
            let norm = s.row(r).norm();
            if norm > 1e-12 {
                for c in 0..s.ncols() {
                    s[(r, c)] /= norm;
                }
            }
        }
        let mixed = ns + s * delta;
        let u = (&ne * &nv).map(|x| if x > 0.0 { x } else { x.exp_m1() });
        let out = mixed * u;
        let mut m = Mat::zeros(out.nrows(), out.ncols());
        for r in 0..out.nrows() {
            for c in 0..out.ncols() {
                m[(r, c)] = out[(r, c)];
            }
        }
        m
    }

    #[test]
    fn two_item_forward_matches_dense_oracle() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(6);
        for _ in 0..20 {
            let e = rand_mat(&mut rng, 2, 4, 1.5);
            let wq = rand_mat(&mut rng, 4, 4, 0.5);
            let wk = rand_mat(&mut rng, 4, 4, 0.5);
            let w1 = rand_mat(&mut rng, 4, 4, 0.5);
            let mut slice = Mat::identity(2);
            slice[(0, 1)] = 0.5;
            slice[(1, 0)] = 0.5;
            let ours = hgc_forward(&slice, &e, &wq, &wk, &w1, 0.35, SaNormMode::Row);
            let oracle = nalgebra_head(&slice, &e, &wq, &wk, &w1, 0.35);
            assert!(ours.max_abs_diff(&oracle) < 1e-10, "diff {}", ours.max_abs_diff(&oracle));
        }
    }

    #[test]
    fn multi_head_sums() {
        let a = Mat::from_vec(1, 2, vec![1.0, 2.0]);
        let b = Mat::from_vec(1, 2, vec![10.0, 20.0]);
        let c = Mat::from_vec(1, 2, vec![100.0, 200.0]);
        assert_eq!(multi_head(&[a.clone()]), a);
        let twice = multi_head(&[a.clone(), a.clone()]);
        assert_eq!(twice.as_slice(), &[2.0, 4.0]);
        assert_eq!(
            multi_head(&[a, b, c]).as_slice(),
            &[111.0, 222.0]
        );
    }

    fn tiny_params(d_m: usize, z_h: usize, delta: f64) -> ModelParams {
        let hp = HyperParams { d_m, z_h, delta, ..HyperParams::default() };
        init_params(2, 6, hp, 99).unwrap()
    }

    #[test]
    fn layer_forward_equals_multi_head_of_single_heads() {
        let params = tiny_params(4, 3, 0.2);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let input = rand_mat(&mut rng, 5, 4, 1.0);
        let mut slice = Mat::identity(5);
        slice[(0, 2)] = 0.3;
        slice[(2, 0)] = 0.3;
        let lc = layer_forward(&params, &slice, input.clone());
        let per_head: Vec<Mat> = (0..3)
            .map(|h| {
                hgc_forward(
                    &slice,
                    &input,
                    &params.w_query[h],
                    &params.w_key[h],
                    &params.w_value,
                    0.2,
                    SaNormMode::Row,
                )
            })
            .collect();
        let summed = multi_head(&per_head);
        assert!(lc.output.max_abs_diff(&summed) < 1e-12);
    }

    #[test]
    fn single_item_user_vector_hand_example() {
        let mut params = tiny_params(2, 1, 0.0);
        params.item_embeddings.row_mut(3).copy_from_slice(&[3.0, 4.0]);
        params.w_value = Mat::identity(2);
        let slice = Mat::identity(1);
        let fw = forward_user(&params, 0, &[3], &slice).unwrap();
        assert_relative_eq!(fw.phi[0], 0.6, epsilon = 1e-12);
        assert_relative_eq!(fw.phi[1], 0.8, epsilon = 1e-12);
    }

    #[test]
    fn disabled_attention_matches_zero_delta_exactly() {
        let mut with_sa = tiny_params(4, 2, 0.0);
        with_sa.hp.bias_enabled = false;
        let mut without_sa = with_sa.clone();
        without_sa.hp.sa_enabled = false;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(8);
        let slice = {
            let mut s = Mat::identity(3);
            s[(1, 2)] = 0.25;
            s[(2, 1)] = 0.25;
            s
        };
        for _ in 0..5 {
            let items: Vec<u32> = {
                let mut set = alloc::collections::BTreeSet::new();
                while set.len() < 3 {
                    set.insert(rng.gen_range(0u32..6));
                }
                set.into_iter().collect()
            };
            let a = forward_user(&with_sa, 0, &items, &slice).unwrap();
            let b = forward_user(&without_sa, 0, &items, &slice).unwrap();
            assert_eq!(a.phi, b.phi);
        }
    }

    #[test]
    fn empty_items_rejected() {
        let params = tiny_params(2, 1, 0.1);
        assert!(matches!(
            forward_user(&params, 0, &[], &Mat::zeros(0, 0)),
            Err(CoreError::EmptyInput("ia_items"))
        ));
    }

    #[test]
    fn slice_shape_checked() {
        let params = tiny_params(2, 1, 0.1);
        assert!(matches!(
            forward_user(&params, 0, &[1, 2], &Mat::identity(3)),
            Err(CoreError::DimMismatch { .. })
        ));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn user_vector_has_unit_norm(seed in 0u64..500) {
            let params = tiny_params(4, 2, 0.3);
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let l = rng.gen_range(1usize..5);
            let items: Vec<u32> = {
                let mut set = alloc::collections::BTreeSet::new();
                while set.len() < l {
                    set.insert(rng.gen_range(0u32..6));
                }
                set.into_iter().collect()
            };
            let mut slice = Mat::identity(l);
            if l > 1 {
                slice[(0, l - 1)] = 0.5;
                slice[(l - 1, 0)] = 0.5;
            }
            let fw = forward_user(&params, 1, &items, &slice).unwrap();
            prop_assert!((math::norm2(&fw.phi) - 1.0).abs() < 1e-12);
            prop_assert!(math::all_finite(&fw.phi));
        }

        #[test]
        fn permuting_items_permutes_rows_and_fixes_phi(seed in 0u64..200) {
            let mut params = tiny_params(4, 2, 0.4);
            // Give the user a nonzero bias so that path is exercised too.
            params.indiv_bias.row_mut(0).copy_from_slice(&[0.5, -0.25, 0.1, 0.9]);
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let items = alloc::vec![0u32, 2, 5];
            let mut slice = Mat::identity(3);
            slice[(0, 1)] = 0.3;
            slice[(1, 0)] = 0.3;
            slice[(1, 2)] = 0.2;
            slice[(2, 1)] = 0.2;
            let perm = match rng.gen_range(0..3) {
                0 => [1usize, 2, 0],
                1 => [2usize, 0, 1],
                _ => [1usize, 0, 2],
            };
            let p_items: Vec<u32> = perm.iter().map(|&p| items[p]).collect();
            let mut p_slice = Mat::zeros(3, 3);
            for a in 0..3 {
                for b in 0..3 {
                    p_slice[(a, b)] = slice[(perm[a], perm[b])];
                }
            }
            let base = forward_user(&params, 0, &items, &slice).unwrap();
            let permuted = forward_user(&params, 0, &p_items, &p_slice).unwrap();
            for (a, &p) in perm.iter().enumerate() {
                for c in 0..4 {
                    let lhs = permuted.layers.last().unwrap().output[(a, c)];
                    let rhs = base.layers.last().unwrap().output[(p, c)];
                    prop_assert!((lhs - rhs).abs() < 1e-12);
                }
            }
            for c in 0..4 {
                prop_assert!((base.phi[c] - permuted.phi[c]).abs() < 1e-12);
            }
        }
    }
}
