//! Binary model checkpoints: a fixed magic, a (M, N, d_m, z_h) header, then
//! named sections of row-major little-endian f64 matrices. Writing the same
//! parameters always produces the same bytes.

use std::fs;
use std::path::Path;

use cadrec_core::encoders::{HyperParams, ModelParams};
use cadrec_core::hgc::SaNormMode;
use cadrec_core::Mat;

use crate::{AppError, AppResult};

const MAGIC: &[u8; 8] = b"CADREC01";

fn push_u64(out: &mut Vec<u8>, v: u64) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn push_section(out: &mut Vec<u8>, name: &str, m: &Mat) {
    push_u64(out, name.len() as u64);
    out.extend_from_slice(name.as_bytes());
    push_u64(out, m.rows() as u64);
    push_u64(out, m.cols() as u64);
    for &x in m.as_slice() {
        out.extend_from_slice(&x.to_le_bytes());
    }
}

fn hp_row(hp: &HyperParams) -> Mat {
    let norm = match hp.sa_norm {
        SaNormMode::Row => 0.0,
        SaNormMode::Frobenius => 1.0,
        SaNormMode::Col => 2.0,
    };
    let flag = |b: bool| if b { 1.0 } else { 0.0 };
    Mat::from_rows(&[&[
        hp.d_m as f64,
        hp.z_h as f64,
        hp.z_l as f64,
        hp.delta,
        hp.beta1,
        hp.beta2,
        hp.lambda1,
        hp.lambda2,
        hp.eta,
        norm,
        flag(hp.sa_enabled),
        flag(hp.pop_enabled),
        flag(hp.bias_enabled),
    ]])
}

fn hp_from_row(row: &[f64]) -> AppResult<HyperParams> {
    if row.len() != 13 {
        return Err(AppError::model(format!(
            "checkpoint hyperparameter section has {} values, expected 13",
            row.len()
        )));
    }
    let sa_norm = match row[9] as i64 {
        0 => SaNormMode::Row,
        1 => SaNormMode::Frobenius,
        2 => SaNormMode::Col,
        other => {
            return Err(AppError::model(format!("unknown score-norm tag {other} in checkpoint")))
        }
    };
    Ok(HyperParams {
        d_m: row[0] as usize,
        z_h: row[1] as usize,
        z_l: row[2] as usize,
        delta: row[3],
        beta1: row[4],
        beta2: row[5],
        lambda1: row[6],
        lambda2: row[7],
        eta: row[8],
        sa_norm,
        sa_enabled: row[10] != 0.0,
        pop_enabled: row[11] != 0.0,
        bias_enabled: row[12] != 0.0,
    })
}

pub fn save_checkpoint(path: &Path, params: &ModelParams) -> AppResult<()> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    push_u64(&mut out, params.num_users() as u64);
    push_u64(&mut out, params.num_items() as u64);
    push_u64(&mut out, params.hp.d_m as u64);
    push_u64(&mut out, params.hp.z_h as u64);
    push_section(&mut out, "hyperparams", &hp_row(&params.hp));
    push_section(&mut out, "item_embeddings", &params.item_embeddings);
    push_section(&mut out, "indiv_bias", &params.indiv_bias);
    for (h, w) in params.w_query.iter().enumerate() {
        push_section(&mut out, &format!("w_query_{h}"), w);
    }
    for (h, w) in params.w_key.iter().enumerate() {
        push_section(&mut out, &format!("w_key_{h}"), w);
    }
    push_section(&mut out, "w_value", &params.w_value);
    fs::write(path, &out)
        .map_err(|e| AppError::data(format!("cannot write checkpoint {}: {e}", path.display())))
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> AppResult<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(AppError::model("checkpoint truncated".to_string()));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u64(&mut self) -> AppResult<u64> {
        let b = self.take(8)?;
        Ok(u64::from_le_bytes(b.try_into().unwrap()))
    }

    fn section(&mut self, expect: &str) -> AppResult<Mat> {
        let name_len = self.u64()? as usize;
        let name = std::str::from_utf8(self.take(name_len)?)
            .map_err(|_| AppError::model("checkpoint section name is not UTF-8".to_string()))?;
        if name != expect {
            return Err(AppError::model(format!(
                "checkpoint section order: expected `{expect}`, found `{name}`"
            )));
        }
        let rows = self.u64()? as usize;
        let cols = self.u64()? as usize;
        let bytes = rows
            .checked_mul(cols)
            .and_then(|n| n.checked_mul(8))
            .ok_or_else(|| AppError::model("checkpoint section size overflows".to_string()))?;
        let raw = self.take(bytes)?;
        let data: Vec<f64> = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Ok(Mat::from_vec(rows, cols, data))
    }
}

pub fn load_checkpoint(path: &Path) -> AppResult<ModelParams> {
    let buf = fs::read(path)
        .map_err(|e| AppError::data(format!("cannot read checkpoint {}: {e}", path.display())))?;
    let mut c = Cursor { buf: &buf, pos: 0 };
    if c.take(8)? != MAGIC {
        return Err(AppError::model(format!("{} is not a checkpoint file", path.display())));
    }
    let m = c.u64()? as usize;
    let n = c.u64()? as usize;
    let d_m = c.u64()? as usize;
    let z_h = c.u64()? as usize;

    let hp_mat = c.section("hyperparams")?;
    let hp = hp_from_row(hp_mat.row(0))?;
    let item_embeddings = c.section("item_embeddings")?;
    let indiv_bias = c.section("indiv_bias")?;
    let mut w_query = Vec::with_capacity(z_h);
    for h in 0..z_h {
        w_query.push(c.section(&format!("w_query_{h}"))?);
    }
    let mut w_key = Vec::with_capacity(z_h);
    for h in 0..z_h {
        w_key.push(c.section(&format!("w_key_{h}"))?);
    }
    let w_value = c.section("w_value")?;

    let check = |what: &str, got: (usize, usize), expect: (usize, usize)| {
        if got != expect {
            return Err(AppError::model(format!(
                "checkpoint {what} is {}x{}, header says {}x{}",
                got.0, got.1, expect.0, expect.1
            )));
        }
        Ok(())
    };
    if hp.d_m != d_m || hp.z_h != z_h {
        return Err(AppError::model(
            "checkpoint header disagrees with stored hyperparameters".to_string(),
        ));
    }
    check("item_embeddings", (item_embeddings.rows(), item_embeddings.cols()), (n, d_m))?;
    check("indiv_bias", (indiv_bias.rows(), indiv_bias.cols()), (m, d_m))?;
    for w in w_query.iter().chain(&w_key).chain(std::iter::once(&w_value)) {
        check("projection", (w.rows(), w.cols()), (d_m, d_m))?;
    }
    hp.validate()?;
    Ok(ModelParams { item_embeddings, indiv_bias, w_query, w_key, w_value, hp })
}

#[cfg(test)]
mod tests {
    use super::*;
    use cadrec_core::encoders::init_params;

    fn params() -> ModelParams {
        let hp = HyperParams { d_m: 6, z_h: 2, ..HyperParams::default() };
        init_params(3, 8, hp, 99).unwrap()
    }

    #[test]
    fn round_trips_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        let p = params();
        save_checkpoint(&path, &p).unwrap();
        let back = load_checkpoint(&path).unwrap();
        assert_eq!(back, p);
    }

    #[test]
    fn identical_params_write_identical_bytes() {
        let dir = tempfile::tempdir().unwrap();
        let a = dir.path().join("a.ckpt");
        let b = dir.path().join("b.ckpt");
        save_checkpoint(&a, &params()).unwrap();
        save_checkpoint(&b, &params()).unwrap();
        assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    }

    #[test]
    fn missing_file_is_a_data_error() {
        let dir = tempfile::tempdir().unwrap();
        let err = load_checkpoint(&dir.path().join("absent.ckpt")).unwrap_err();
        assert_eq!(err.exit_code(), 3);
    }

    #[test]
    fn corrupt_files_are_model_errors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        save_checkpoint(&path, &params()).unwrap();

        let full = std::fs::read(&path).unwrap();
        std::fs::write(&path, &full[..full.len() / 2]).unwrap();
        let err = load_checkpoint(&path).unwrap_err();
        assert_eq!(err.exit_code(), 4);

        std::fs::write(&path, b"definitely not a checkpoint").unwrap();
        let err = load_checkpoint(&path).unwrap_err();
        assert_eq!(err.exit_code(), 4);

        let mut tampered = full.clone();
        tampered[9] = 7;
        std::fs::write(&path, &tampered).unwrap();
        assert!(load_checkpoint(&path).is_err());
    }
}
