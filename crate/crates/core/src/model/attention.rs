//! Fusion-layer attention export.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::{AttentionRecord, ModelConfig, ModelError};
use crate::mstmap::io::encode_gray;

/// Fusion-layer attention of the joint summary over all fusion tokens, one
/// vector per head. With a class token this is the class token's row; with
/// average pooling it is the mean row.
pub fn fusion_attention(record: &AttentionRecord, cfg: &ModelConfig) -> Result<Vec<Vec<f64>>, ModelError> {
    fusion_rows(record, cfg.use_class_token)
}

fn fusion_rows(record: &AttentionRecord, cls_row: bool) -> Result<Vec<Vec<f64>>, ModelError> {
    let layer = record.get("fusion").ok_or_else(|| ModelError::Shape("no fusion attention recorded".into()))?;
    Ok(layer
        .heads
        .iter()
        .map(|a| {
            let (rows, cols) = (a.shape()[0], a.shape()[1]);
            if cls_row {
                a.row(0).to_vec()
            } else {
                (0..cols).map(|j| (0..rows).map(|i| a.data()[i * cols + j]).sum::<f64>() / rows as f64).collect()
            }
        })
        .collect())
}

/// Writes `attn_head<h>.csv` and `attn_head<h>.pgm` per fusion head.
///
/// The CSV lists every fusion token with its branch and patch-grid position.
/// The image stacks the face patch grid above the background grid, scaled so
/// the largest weight is white; the class token is left out.
pub fn export_attention(record: &AttentionRecord, cfg: &ModelConfig, dir: &Path) -> Result<Vec<PathBuf>, ModelError> {
    std::fs::create_dir_all(dir).map_err(|e| ModelError::io(dir, e))?;
    let rows = fusion_attention(record, cfg)?;
    let cls = usize::from(cfg.use_class_token);
    let (fh, fw) = cfg.face_grid().unwrap_or((0, 0));
    let (bh, bw) = if cfg.use_bg_branch { cfg.bg_grid().unwrap_or((0, 0)) } else { (0, 0) };
    let mut written = Vec::new();
    for (h, row) in rows.iter().enumerate() {
        if row.len() != cfg.fusion_seq_len() {
            return Err(ModelError::Shape(format!(
                "fusion attention has {} columns, model expects {}",
                row.len(),
                cfg.fusion_seq_len()
            )));
        }
        let mut csv = String::from("index,branch,grid_row,grid_col,weight\n");
        for (k, &v) in row.iter().enumerate() {
            let (branch, r, c) = if k < cls {
                ("cls", 0, 0)
            } else if k < cls + fh * fw {
                let p = k - cls;
                ("face", p / fw, p % fw)
            } else {
                let p = k - cls - fh * fw;
                ("bg", p / bw, p % bw)
            };
            writeln!(csv, "{k},{branch},{r},{c},{v:.8e}").unwrap();
        }
        let csv_path = dir.join(format!("attn_head{h}.csv"));
        std::fs::write(&csv_path, csv).map_err(|e| ModelError::io(&csv_path, e))?;
        written.push(csv_path);

        // Both grids share the frame axis, so the widths agree.
        let width = fw.max(bw);
        let mut grid = vec![0.0; width * (fh + bh)];
        for r in 0..fh {
            for c in 0..fw {
                grid[r * width + c] = row[cls + r * fw + c];
            }
        }
        for r in 0..bh {
            for c in 0..bw {
                grid[(fh + r) * width + c] = row[cls + fh * fw + r * bw + c];
            }
        }
        let pgm_path = dir.join(format!("attn_head{h}.pgm"));
        std::fs::write(&pgm_path, encode_gray(&grid, width, fh + bh)).map_err(|e| ModelError::io(&pgm_path, e))?;
        written.push(pgm_path);
    }
    Ok(written)
}
