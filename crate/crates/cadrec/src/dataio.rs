//! Interaction file IO: delimited text events in, contiguous ids out, with
//! the original-id maps and split manifests written alongside.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use cadrec_core::interactions::{Event, InteractionLog, SplitDataset};
use cadrec_core::synth::SynthTruth;

use crate::{AppError, AppResult};

/// A parsed corpus plus the maps from dense ids back to input tokens.
#[derive(Debug, Clone)]
pub struct LoadedData {
    pub log: InteractionLog,
    pub user_ids: Vec<String>,
    pub item_ids: Vec<String>,
}

/// Read `<user><delim><item><delim><timestamp>` lines. Blank lines and `#`
/// comments are skipped; ids are re-indexed densely in first-appearance
/// order; repeated delimiters collapse so space-padded files parse cleanly.
pub fn load_interactions(path: &Path, delimiter: char) -> AppResult<LoadedData> {
    let file = File::open(path)
        .map_err(|e| AppError::data(format!("cannot open {}: {e}", path.display())))?;
    let reader = BufReader::new(file);

    let mut user_index: BTreeMap<String, u32> = BTreeMap::new();
    let mut item_index: BTreeMap<String, u32> = BTreeMap::new();
    let mut user_ids = Vec::new();
    let mut item_ids = Vec::new();
    let mut events = Vec::new();

    for (lineno, line) in reader.lines().enumerate() {
        let line = line
            .map_err(|e| AppError::data(format!("{}:{}: {e}", path.display(), lineno + 1)))?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = trimmed.split(delimiter).filter(|t| !t.is_empty()).collect();
        if fields.len() != 3 {
            return Err(AppError::data(format!(
                "{}:{}: expected 3 fields (user, item, timestamp), got {}",
                path.display(),
                lineno + 1,
                fields.len()
            )));
        }
        let ts: i64 = fields[2].parse().map_err(|_| {
            AppError::data(format!(
                "{}:{}: bad timestamp `{}`",
                path.display(),
                lineno + 1,
                fields[2]
            ))
        })?;
        let user = *user_index.entry(fields[0].to_string()).or_insert_with(|| {
            user_ids.push(fields[0].to_string());
            (user_ids.len() - 1) as u32
        });
        let item = *item_index.entry(fields[1].to_string()).or_insert_with(|| {
            item_ids.push(fields[1].to_string());
            (item_ids.len() - 1) as u32
        });
        events.push(Event { user, item, ts });
    }

    let log = InteractionLog::new(events, user_ids.len(), item_ids.len())
        .map_err(|e| AppError::data(format!("{}: {e}", path.display())))?;
    Ok(LoadedData { log, user_ids, item_ids })
}

/// Write a log in the standard three-column format with dense integer ids.
pub fn save_interactions(path: &Path, log: &InteractionLog, delimiter: char) -> AppResult<()> {
    let mut w = writer(path)?;
    for e in &log.events {
        writeln!(w, "{}{}{}{}{}", e.user, delimiter, e.item, delimiter, e.ts)
            .map_err(|e| AppError::data(format!("cannot write {}: {e}", path.display())))?;
    }
    Ok(())
}

/// Two-column `dense_id original_id` map.
pub fn save_index_map(path: &Path, ids: &[String]) -> AppResult<()> {
    let mut w = writer(path)?;
    for (dense, original) in ids.iter().enumerate() {
        writeln!(w, "{dense}\t{original}")
            .map_err(|e| AppError::data(format!("cannot write {}: {e}", path.display())))?;
    }
    Ok(())
}

/// Per-user `user = train,val,test` counts, with totals up front.
pub fn save_split_manifest(path: &Path, split: &SplitDataset) -> AppResult<()> {
    let mut w = writer(path)?;
    let mut out = String::new();
    out.push_str(&format!("num_users = {}\n", split.num_users()));
    out.push_str(&format!("num_items = {}\n", split.num_items));
    out.push_str(&format!("trained_users = {}\n", split.trained_users().count()));
    for (u, us) in split.users.iter().enumerate() {
        out.push_str(&format!(
            "user_{u} = {},{},{}\n",
            us.train_seq.len(),
            us.val_seq.len(),
            us.test_seq.len()
        ));
    }
    w.write_all(out.as_bytes())
        .map_err(|e| AppError::data(format!("cannot write {}: {e}", path.display())))
}

/// Ground-truth sidecar for a synthetic corpus; the header echoes the
/// generator settings so a corpus is self-describing.
pub fn save_truth_sidecar(
    path: &Path,
    truth: &SynthTruth,
    seed: u64,
    alpha_pop: f64,
    sigma_indi: f64,
) -> AppResult<()> {
    let mut w = writer(path)?;
    let mut out = String::new();
    out.push_str("# synthetic ground truth\n");
    out.push_str(&format!("# seed={seed} alpha_pop={alpha_pop} sigma_indi={sigma_indi}\n"));
    out.push_str("[base_popularity]\n");
    for (i, z) in truth.base_popularity.iter().enumerate() {
        out.push_str(&format!("{i}\t{z}\n"));
    }
    out.push_str("[user_bias]\n");
    for (u, b) in truth.user_bias.iter().enumerate() {
        out.push_str(&format!("{u}\t{b}\n"));
    }
    out.push_str("[sensitivity]\n");
    for (i, s) in truth.sensitivity.iter().enumerate() {
        out.push_str(&format!("{i}\t{s}\n"));
    }
    out.push_str("[user_factors]\n");
    for u in 0..truth.user_factors.rows() {
        let row: Vec<String> = truth.user_factors.row(u).iter().map(|v| v.to_string()).collect();
        out.push_str(&format!("{u}\t{}\n", row.join("\t")));
    }
    out.push_str("[item_factors]\n");
    for i in 0..truth.item_factors.rows() {
        let row: Vec<String> = truth.item_factors.row(i).iter().map(|v| v.to_string()).collect();
        out.push_str(&format!("{i}\t{}\n", row.join("\t")));
    }
    w.write_all(out.as_bytes())
        .map_err(|e| AppError::data(format!("cannot write {}: {e}", path.display())))
}

fn writer(path: &Path) -> AppResult<BufWriter<File>> {
    let file = File::create(path)
        .map_err(|e| AppError::data(format!("cannot create {}: {e}", path.display())))?;
    Ok(BufWriter::new(file))
}

#[cfg(test)]
mod tests {
    use super::*;
    use cadrec_core::interactions::{temporal_split, SplitOptions};

    fn tmp() -> tempfile::TempDir {
        tempfile::tempdir().unwrap()
    }

    #[test]
    fn loads_and_reindexes_in_first_appearance_order() {
        let dir = tmp();
        let path = dir.path().join("events.tsv");
        std::fs::write(
            &path,
            "# comment\nu9\tmovie_b\t100\nu2\tmovie_a\t50\n\nu9\tmovie_a\t120\n",
        )
        .unwrap();
        let data = load_interactions(&path, '\t').unwrap();
        assert_eq!(data.user_ids, vec!["u9", "u2"]);
        assert_eq!(data.item_ids, vec!["movie_b", "movie_a"]);
        assert_eq!(data.log.events.len(), 3);
        assert_eq!(data.log.events[0], Event { user: 0, item: 0, ts: 100 });
        assert_eq!(data.log.events[2], Event { user: 0, item: 1, ts: 120 });
    }

    #[test]
    fn collapses_repeated_space_delimiters() {
        let dir = tmp();
        let path = dir.path().join("events.txt");
        std::fs::write(&path, "1  5   7\n2 5 9\n").unwrap();
        let data = load_interactions(&path, ' ').unwrap();
        assert_eq!(data.log.events.len(), 2);
        assert_eq!(data.log.num_users, 2);
        assert_eq!(data.log.num_items, 1);
    }

    #[test]
    fn reports_line_numbers_on_bad_rows() {
        let dir = tmp();
        let path = dir.path().join("events.tsv");
        std::fs::write(&path, "1\t2\t3\n1\t2\n").unwrap();
        let err = load_interactions(&path, '\t').unwrap_err().to_string();
        assert!(err.contains(":2:"), "{err}");
        std::fs::write(&path, "1\t2\tsoon\n").unwrap();
        let err = load_interactions(&path, '\t').unwrap_err().to_string();
        assert!(err.contains("bad timestamp"), "{err}");
        let missing = load_interactions(&dir.path().join("nope.tsv"), '\t').unwrap_err();
        assert_eq!(missing.exit_code(), 3);
    }

    #[test]
    fn save_and_load_round_trip() {
        let dir = tmp();
        let path = dir.path().join("events.tsv");
        let log = InteractionLog::new(
            vec![
                Event { user: 0, item: 0, ts: 1 },
                Event { user: 0, item: 1, ts: 2 },
                Event { user: 1, item: 1, ts: 1 },
            ],
            2,
            2,
        )
        .unwrap();
        save_interactions(&path, &log, '\t').unwrap();
        let back = load_interactions(&path, '\t').unwrap();
        assert_eq!(back.log.events, log.events);
        assert_eq!(back.log.num_users, 2);
        assert_eq!(back.log.num_items, 2);
    }

    #[test]
    fn manifest_lists_per_user_counts() {
        let dir = tmp();
        let events: Vec<Event> = (0..10)
            .map(|k| Event { user: 0, item: k as u32 % 4, ts: k })
            .chain((0..6).map(|k| Event { user: 1, item: k as u32 % 3, ts: k }))
            .collect();
        let log = InteractionLog::new(events, 2, 4).unwrap();
        let split = temporal_split(&log, &SplitOptions::default()).unwrap();
        let path = dir.path().join("split.manifest");
        save_split_manifest(&path, &split).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.contains("num_users = 2"));
        assert!(text.contains("user_0 = 7,1,2"));
        assert!(text.contains("user_1 = 5,0,1"));
    }
}
