//! Interaction logs, chronological splits, and item popularity counts.
//!
//! Users are split per-user by timestamp into train/val/test, the training
//! sequence is further divided into an inter-acted (IA) prefix that feeds the
//! encoder and a future-interacted (FIA) suffix that supplies extra targets,
//! and popularity is counted over training events only.

use alloc::collections::BTreeSet;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::CoreError;
use crate::Result;

/// One implicit-feedback event.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Event {
    pub user: u32,
    pub item: u32,
    pub ts: i64,
}

/// A re-indexed corpus of events: user ids in `0..num_users`, item ids in
/// `0..num_items`.
#[derive(Debug, Clone)]
pub struct InteractionLog {
    pub events: Vec<Event>,
    pub num_users: usize,
    pub num_items: usize,
}

impl InteractionLog {
    pub fn new(events: Vec<Event>, num_users: usize, num_items: usize) -> Result<Self> {
        if num_users == 0 || num_items == 0 || events.is_empty() {
            return Err(CoreError::EmptyCorpus);
        }
        for ev in &events {
            if ev.user as usize >= num_users {
                return Err(CoreError::IdOutOfRange {
                    kind: "user",
                    id: ev.user as usize,
                    bound: num_users,
                });
            }
            if ev.item as usize >= num_items {
                return Err(CoreError::IdOutOfRange {
                    kind: "item",
                    id: ev.item as usize,
                    bound: num_items,
                });
            }
        }
        Ok(InteractionLog { events, num_users, num_items })
    }
}

/// Knobs for [`temporal_split`].
#[derive(Debug, Clone)]
pub struct SplitOptions {
    /// (train, val, test) fractions; must sum to 1.
    pub ratios: (f64, f64, f64),
    /// Users with fewer events are dropped from the split.
    pub min_interactions: usize,
    /// Training sequences keep at most this many of their most recent items.
    pub max_seq_len: usize,
    /// Fraction of the training sequence treated as IA input.
    pub ia_fraction: f64,
}

impl Default for SplitOptions {
    fn default() -> Self {
        SplitOptions {
            ratios: (0.7, 0.1, 0.2),
            min_interactions: 5,
            max_seq_len: 200,
            ia_fraction: 0.8,
        }
    }
}

impl SplitOptions {
    pub fn validate(&self) -> Result<()> {
        let (tr, va, te) = self.ratios;
        if !(tr > 0.0 && va >= 0.0 && te >= 0.0) || crate::math::abs(tr + va + te - 1.0) > 1e-9 {
            return Err(CoreError::InvalidConfig {
                field: "ratios",
                reason: "train must be positive and train+val+test must sum to 1",
            });
        }
        if !(self.ia_fraction > 0.0 && self.ia_fraction <= 1.0) {
            return Err(CoreError::InvalidConfig {
                field: "ia_fraction",
                reason: "must lie in (0, 1]",
            });
        }
        if self.min_interactions == 0 {
            return Err(CoreError::InvalidConfig {
                field: "min_interactions",
                reason: "must be at least 1",
            });
        }
        if self.max_seq_len == 0 {
            return Err(CoreError::InvalidConfig {
                field: "max_seq_len",
                reason: "must be at least 1",
            });
        }
        Ok(())
    }
}

/// Per-user chronological split. Dropped users keep their slot with all
/// sequences empty so user ids stay aligned with the embedding tables.
#[derive(Debug, Clone, Default)]
pub struct UserSplit {
    pub train_seq: Vec<u32>,
    pub val_seq: Vec<u32>,
    pub test_seq: Vec<u32>,
    /// Distinct IA items in first-occurrence order; the encoder input.
    pub ia_items: Vec<u32>,
    /// Distinct FIA items (tail of the training sequence, minus IA).
    pub fia_items: Vec<u32>,
}

impl UserSplit {
    pub fn is_trained(&self) -> bool {
        !self.train_seq.is_empty()
    }
}

#[derive(Debug, Clone)]
pub struct SplitDataset {
    pub users: Vec<UserSplit>,
    pub num_items: usize,
}

impl SplitDataset {
    pub fn num_users(&self) -> usize {
        self.users.len()
    }

    /// Indices of users that survived the minimum-interaction filter.
    pub fn trained_users(&self) -> impl Iterator<Item = usize> + '_ {
        self.users
            .iter()
            .enumerate()
            .filter(|(_, u)| u.is_trained())
            .map(|(i, _)| i)
    }

    pub fn num_train_events(&self) -> usize {
        self.users.iter().map(|u| u.train_seq.len()).sum()
    }
}

/// Split every user's history by timestamp: the earliest `ceil(r_train * n)`
/// events train, the latest `floor(r_test * n)` test, and the remainder in
/// between validates. Timestamp ties keep input order.
pub fn temporal_split(log: &InteractionLog, opts: &SplitOptions) -> Result<SplitDataset> {
    opts.validate()?;
    let mut per_user: Vec<Vec<(i64, u32)>> = vec![Vec::new(); log.num_users];
    for ev in &log.events {
        per_user[ev.user as usize].push((ev.ts, ev.item));
    }

    let mut users = Vec::with_capacity(log.num_users);
    let mut dropped = 0usize;
    for (u, mut seq) in per_user.into_iter().enumerate() {
        if seq.len() < opts.min_interactions {
            log::debug!(
                "user {} dropped: {} events < min_interactions {}",
                u,
                seq.len(),
                opts.min_interactions
            );
            dropped += 1;
            users.push(UserSplit::default());
            continue;
        }
        seq.sort_by_key(|&(ts, _)| ts);
        let n = seq.len();
        let n_train = crate::math::ceil(opts.ratios.0 * n as f64) as usize;
        let n_test = crate::math::floor(opts.ratios.2 * n as f64) as usize;
        debug_assert!(n_train + n_test <= n);
        let n_val = n - n_train - n_test;

        let items: Vec<u32> = seq.iter().map(|&(_, it)| it).collect();
        let mut train_seq = items[..n_train].to_vec();
        if train_seq.len() > opts.max_seq_len {
            train_seq.drain(..train_seq.len() - opts.max_seq_len);
        }
        let (ia_items, fia_items) = split_ia_fia(&train_seq, opts.ia_fraction);
        users.push(UserSplit {
            train_seq,
            val_seq: items[n_train..n_train + n_val].to_vec(),
            test_seq: items[n_train + n_val..].to_vec(),
            ia_items,
            fia_items,
        });
    }
    if dropped == log.num_users {
        return Err(CoreError::EmptyCorpus);
    }
    Ok(SplitDataset { users, num_items: log.num_items })
}

/// Divide a training sequence into the IA prefix (earliest
/// `ceil(ia_fraction * len)` events) and the FIA tail, deduplicating each side
/// in first-occurrence order. Items already in IA are not repeated in FIA so
/// the two target sets stay disjoint.
pub fn split_ia_fia(train_seq: &[u32], ia_fraction: f64) -> (Vec<u32>, Vec<u32>) {
    if train_seq.is_empty() {
        return (Vec::new(), Vec::new());
    }
    let n_ia = (crate::math::ceil(ia_fraction * train_seq.len() as f64) as usize)
        .clamp(1, train_seq.len());

    let mut seen = BTreeSet::new();
    let mut ia = Vec::new();
    for &item in &train_seq[..n_ia] {
        if seen.insert(item) {
            ia.push(item);
        }
    }
    let mut fia = Vec::new();
    for &item in &train_seq[n_ia..] {
        if seen.insert(item) {
            fia.push(item);
        }
    }
    (ia, fia)
}

/// Per-item count of training interactions.
#[derive(Debug, Clone)]
pub struct PopularityTable {
    counts: Vec<u32>,
}

impl PopularityTable {
    pub fn count(&self, item: u32) -> u32 {
        self.counts[item as usize]
    }

    pub fn counts(&self) -> &[u32] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().map(|&c| c as u64).sum()
    }
}

/// Count training events per item. Val and test events never contribute.
pub fn item_popularity(split: &SplitDataset) -> PopularityTable {
    let mut counts = vec![0u32; split.num_items];
    for user in &split.users {
        for &item in &user.train_seq {
            counts[item as usize] += 1;
        }
    }
    PopularityTable { counts }
}
