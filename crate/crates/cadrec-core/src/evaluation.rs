//! Ranking metrics and diagnostics: top-K ranking with deterministic tie
//! handling, Recall@K and NDCG@K, macro averaging across users, and the
//! popularity diagnostics (embedding-magnitude gap storage and a Spearman
//! score/popularity correlation).

use alloc::collections::BTreeSet;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::CoreError;
use crate::interactions::PopularityTable;
use crate::math;
use crate::matrix::Mat;
use crate::Result;

/// Top `k` item ids by descending score, ties broken by ascending id.
/// Excluded items are removed before truncation; `k` must not exceed the
/// number of remaining candidates.
pub fn rank_items(scores: &[f64], exclude: &[u32], k: usize) -> Result<Vec<u32>> {
    let banned: BTreeSet<u32> = exclude.iter().copied().collect();
    let mut candidates: Vec<u32> = (0..scores.len() as u32)
        .filter(|i| !banned.contains(i))
        .collect();
    if k > candidates.len() {
        return Err(CoreError::KTooLarge { k, candidates: candidates.len() });
    }
    candidates.sort_unstable_by(|&a, &b| {
        scores[b as usize]
            .total_cmp(&scores[a as usize])
            .then(a.cmp(&b))
    });
    candidates.truncate(k);
    Ok(candidates)
}

/// Fraction of the relevant set found in the ranked list.
pub fn recall_at_k(topk: &[u32], relevant: &BTreeSet<u32>) -> f64 {
    if relevant.is_empty() {
        return 0.0;
    }
    let hits = topk.iter().filter(|i| relevant.contains(i)).count();
    hits as f64 / relevant.len() as f64
}

/// Binary-relevance NDCG: each hit at 1-based rank `r` is worth
/// `1 / log2(r + 1)`, normalized by the best achievable arrangement.
pub fn ndcg_at_k(topk: &[u32], relevant: &BTreeSet<u32>, k: usize) -> f64 {
    if relevant.is_empty() {
        return 0.0;
    }
    let mut dcg = 0.0;
    for (pos, item) in topk.iter().enumerate() {
        if relevant.contains(item) {
            dcg += 1.0 / math::log2(pos as f64 + 2.0);
        }
    }
    let ideal_hits = k.min(relevant.len());
    let mut idcg = 0.0;
    for pos in 0..ideal_hits {
        idcg += 1.0 / math::log2(pos as f64 + 2.0);
    }
    dcg / idcg
}

/// One user's metrics at a fixed K.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UserEval {
    pub recall: f64,
    pub ndcg: f64,
}

/// Rank `scores` with the user's training items masked out and score the
/// result against the distinct held-out items that were never trained on.
/// Users with nothing left to find yield `None` and are skipped upstream.
pub fn evaluate_user(
    scores: &[f64],
    train_items: &[u32],
    test_items: &[u32],
    k: usize,
) -> Result<Option<UserEval>> {
    let train: BTreeSet<u32> = train_items.iter().copied().collect();
    let relevant: BTreeSet<u32> =
        test_items.iter().copied().filter(|i| !train.contains(i)).collect();
    if relevant.is_empty() {
        return Ok(None);
    }
    let topk = rank_items(scores, train_items, k)?;
    Ok(Some(UserEval {
        recall: recall_at_k(&topk, &relevant),
        ndcg: ndcg_at_k(&topk, &relevant, k),
    }))
}

/// Running macro average over users; users without relevant items are
/// counted separately and do not influence the averages.
#[derive(Debug, Clone, Copy, Default)]
pub struct MacroAccumulator {
    sum_recall: f64,
    sum_ndcg: f64,
    pub users: usize,
    pub skipped: usize,
}

/// Macro-averaged metrics over the users that had something to find.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MacroMetrics {
    pub recall: f64,
    pub ndcg: f64,
    pub users: usize,
    pub skipped: usize,
}

impl MacroAccumulator {
    pub fn add(&mut self, eval: Option<UserEval>) {
        match eval {
            Some(e) => {
                self.sum_recall += e.recall;
                self.sum_ndcg += e.ndcg;
                self.users += 1;
            }
            None => self.skipped += 1,
        }
    }

    pub fn finish(&self) -> MacroMetrics {
        let denom = if self.users == 0 { 1.0 } else { self.users as f64 };
        MacroMetrics {
            recall: self.sum_recall / denom,
            ndcg: self.sum_ndcg / denom,
            users: self.users,
            skipped: self.skipped,
        }
    }
}

/// Standard deviation of every entry in the selected embedding rows.
fn entry_sd(embeddings: &Mat, rows: &[u32]) -> f64 {
    let n = (rows.len() * embeddings.cols()) as f64;
    let mut mean = 0.0;
    for &r in rows {
        for &x in embeddings.row(r as usize) {
            mean += x;
        }
    }
    mean /= n;
    let mut var = 0.0;
    for &r in rows {
        for &x in embeddings.row(r as usize) {
            var += (x - mean) * (x - mean);
        }
    }
    math::sqrt(var / n)
}

/// Spread of embedding magnitudes at the popularity extremes: the standard
/// deviation over all entries of the `k` most popular items' rows and of the
/// `k` least popular items' rows. Popularity ties break by ascending id, and
/// `k` may cover at most half the catalog so the two groups never overlap.
pub fn sd_gap(embeddings: &Mat, pop: &PopularityTable, k: usize) -> Result<(f64, f64)> {
    let n = embeddings.rows();
    if k == 0 {
        return Err(CoreError::InvalidConfig { field: "k", reason: "must be positive" });
    }
    if 2 * k > n {
        return Err(CoreError::InvalidConfig {
            field: "k",
            reason: "group size exceeds half the item count",
        });
    }
    if pop.counts().len() != n {
        return Err(CoreError::DimMismatch {
            context: "popularity table",
            expected: n,
            got: pop.counts().len(),
        });
    }
    let mut by_count: Vec<u32> = (0..n as u32).collect();
    by_count.sort_unstable_by(|&a, &b| {
        pop.count(b).cmp(&pop.count(a)).then(a.cmp(&b))
    });
    let top = &by_count[..k];
    let mut by_count_asc: Vec<u32> = (0..n as u32).collect();
    by_count_asc.sort_unstable_by(|&a, &b| {
        pop.count(a).cmp(&pop.count(b)).then(a.cmp(&b))
    });
    let bottom = &by_count_asc[..k];
    Ok((entry_sd(embeddings, top), entry_sd(embeddings, bottom)))
}

/// Average rank per value, ties sharing the mean of their rank range.
fn average_ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_unstable_by(|&a, &b| v[a].total_cmp(&v[b]).then(a.cmp(&b)));
    let mut ranks = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let shared = (i + j) as f64 / 2.0 + 1.0;
        for &t in &idx[i..=j] {
            ranks[t] = shared;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman rank correlation with averaged tie ranks. Returns the
/// coefficient and a degeneracy flag; a constant input has no ordering, so
/// the coefficient is reported as zero with the flag set.
pub fn spearman(x: &[f64], y: &[f64]) -> (f64, bool) {
    debug_assert_eq!(x.len(), y.len());
    let rx = average_ranks(x);
    let ry = average_ranks(y);
    let n = x.len() as f64;
    let mx = rx.iter().sum::<f64>() / n;
    let my = ry.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut vx = 0.0;
    let mut vy = 0.0;
    for (a, b) in rx.iter().zip(&ry) {
        cov += (a - mx) * (b - my);
        vx += (a - mx) * (a - mx);
        vy += (b - my) * (b - my);
    }
    if vx <= 0.0 || vy <= 0.0 {
        return (0.0, true);
    }
    (cov / math::sqrt(vx * vy), false)
}

/// Spearman correlation between per-item mean scores and raw popularity.
pub fn pop_correlation(mean_scores: &[f64], pop: &PopularityTable) -> Result<(f64, bool)> {
    if mean_scores.len() != pop.counts().len() {
        return Err(CoreError::DimMismatch {
            context: "mean scores vs popularity table",
            expected: pop.counts().len(),
            got: mean_scores.len(),
        });
    }
    if mean_scores.is_empty() {
        return Err(CoreError::EmptyInput("mean_scores"));
    }
    let counts: Vec<f64> = pop.counts().iter().map(|&c| c as f64).collect();
    Ok(spearman(mean_scores, &counts))
}
