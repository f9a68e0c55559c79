//! Report files: metrics as key=value plus machine-readable tables, the
//! per-epoch training log, popularity diagnostics, and an embedding dump
//! for external visualization. Floats are printed with Rust's shortest
//! round-trip formatting.

use std::collections::BTreeMap;
use std::path::Path;

use cadrec_core::encoders::ModelParams;
use cadrec_core::evaluation::MacroMetrics;

use crate::trainer::EpochStats;
use crate::{AppError, AppResult};

fn write(path: &Path, contents: &str) -> AppResult<()> {
    std::fs::write(path, contents)
        .map_err(|e| AppError::data(format!("cannot write {}: {e}", path.display())))
}

pub fn write_metrics_report(
    path: &Path,
    metrics: &BTreeMap<usize, MacroMetrics>,
) -> AppResult<()> {
    let mut out = String::new();
    if let Some(first) = metrics.values().next() {
        out.push_str(&format!("users={}\n", first.users));
        out.push_str(&format!("skipped={}\n", first.skipped));
    }
    for (k, m) in metrics {
        out.push_str(&format!("recall@{k}={}\n", m.recall));
        out.push_str(&format!("ndcg@{k}={}\n", m.ndcg));
    }
    out.push('\n');
    out.push_str("K,recall,ndcg\n");
    for (k, m) in metrics {
        out.push_str(&format!("{k},{},{}\n", m.recall, m.ndcg));
    }
    write(path, &out)
}

pub fn write_training_log(path: &Path, history: &[EpochStats], val_k: usize) -> AppResult<()> {
    let mut out = format!("epoch, loss, val_R@{val_k}, val_N@{val_k}, seconds\n");
    for e in history {
        out.push_str(&format!(
            "{}, {}, {}, {}, {:.3}\n",
            e.epoch, e.loss, e.val_recall, e.val_ndcg, e.seconds
        ));
    }
    write(path, &out)
}

pub fn write_diagnostics(
    path: &Path,
    gap_rows: &[(usize, f64, f64)],
    pop_correlation: f64,
    degenerate: bool,
) -> AppResult<()> {
    let mut out = String::new();
    out.push_str(&format!("pop_correlation={pop_correlation}\n"));
    out.push_str(&format!("pop_correlation_degenerate={degenerate}\n"));
    out.push('\n');
    out.push_str("k,sd_top,sd_bottom\n");
    for (k, top, bottom) in gap_rows {
        out.push_str(&format!("{k},{top},{bottom}\n"));
    }
    write(path, &out)
}

/// Side-by-side gap table for two checkpoints; `gap` is sd_top/sd_bottom.
pub fn write_gap_comparison(
    path: &Path,
    label_a: &str,
    rows_a: &[(usize, f64, f64)],
    label_b: &str,
    rows_b: &[(usize, f64, f64)],
) -> AppResult<()> {
    let ratio = |top: f64, bottom: f64| {
        if bottom > 0.0 {
            (top / bottom).to_string()
        } else {
            "inf".to_string()
        }
    };
    let mut out = format!(
        "k,sd_top_{label_a},sd_bottom_{label_a},gap_{label_a},sd_top_{label_b},sd_bottom_{label_b},gap_{label_b}\n"
    );
    for ((ka, ta, ba), (kb, tb, bb)) in rows_a.iter().zip(rows_b) {
        debug_assert_eq!(ka, kb);
        out.push_str(&format!(
            "{ka},{ta},{ba},{},{tb},{bb},{}\n",
            ratio(*ta, *ba),
            ratio(*tb, *bb)
        ));
    }
    write(path, &out)
}

/// One row per item: `item_id v1 ... v_dm`, space separated.
pub fn write_embedding_dump(path: &Path, params: &ModelParams) -> AppResult<()> {
    let mut out = String::new();
    for i in 0..params.num_items() {
        out.push_str(&i.to_string());
        for v in params.item_embeddings.row(i) {
            out.push(' ');
            out.push_str(&v.to_string());
        }
        out.push('\n');
    }
    write(path, &out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use cadrec_core::encoders::{init_params, HyperParams};

    #[test]
    fn metrics_report_has_key_values_and_table() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("metrics.txt");
        let mut m = BTreeMap::new();
        m.insert(5, MacroMetrics { recall: 0.25, ndcg: 0.125, users: 10, skipped: 2 });
        m.insert(20, MacroMetrics { recall: 0.5, ndcg: 0.25, users: 10, skipped: 2 });
        write_metrics_report(&path, &m).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.contains("users=10"));
        assert!(text.contains("recall@5=0.25"));
        assert!(text.contains("K,recall,ndcg"));
        assert!(text.contains("20,0.5,0.25"));
    }

    #[test]
    fn training_log_is_one_row_per_epoch() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("train.log");
        let history = vec![
            EpochStats { epoch: 0, loss: 3.5, val_recall: 0.1, val_ndcg: 0.05, seconds: 0.5 },
            EpochStats { epoch: 1, loss: 3.0, val_recall: 0.2, val_ndcg: 0.1, seconds: 0.4 },
        ];
        write_training_log(&path, &history, 20).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 3);
        assert_eq!(lines[0], "epoch, loss, val_R@20, val_N@20, seconds");
        assert!(lines[1].starts_with("0, 3.5, 0.1, 0.05"));
    }

    #[test]
    fn diagnostics_table_is_parseable() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("diag.txt");
        write_diagnostics(&path, &[(50, 0.5, 0.25), (100, 0.4, 0.3)], 0.75, false).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.contains("pop_correlation=0.75"));
        assert!(text.contains("k,sd_top,sd_bottom"));
        assert!(text.contains("50,0.5,0.25"));
        let row = text.lines().last().unwrap();
        let cells: Vec<&str> = row.split(',').collect();
        assert_eq!(cells.len(), 3);
        cells[1].parse::<f64>().unwrap();
    }

    #[test]
    fn gap_comparison_pairs_rows() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cmp.csv");
        write_gap_comparison(
            &path,
            "full",
            &[(50, 0.4, 0.2)],
            "no_er",
            &[(50, 0.9, 0.1)],
        )
        .unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("k,sd_top_full,sd_bottom_full,gap_full,"));
        assert!(text.contains("50,0.4,0.2,2,0.9,0.1,9"));
    }

    #[test]
    fn embedding_dump_rows_match_items() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("emb.txt");
        let hp = HyperParams { d_m: 4, ..HyperParams::default() };
        let params = init_params(2, 5, hp, 3).unwrap();
        write_embedding_dump(&path, &params).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 5);
        for (i, line) in lines.iter().enumerate() {
            let mut tokens = line.split(' ');
            assert_eq!(tokens.next().unwrap(), i.to_string());
            let values: Vec<f64> =
                tokens.map(|t| t.parse().unwrap()).collect();
            assert_eq!(values.len(), 4);
            assert_eq!(values, params.item_embeddings.row(i));
        }
    }
}
