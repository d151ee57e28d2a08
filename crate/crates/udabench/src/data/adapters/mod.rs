//! Per-dataset ingestion adapters. Each adapter documents the directory
//! layout it expects (the published archive layout) and returns one
//! [`RawRecord`] per file/channel of interest.

pub mod cwru;
pub mod jnu;
pub mod phm2009;
pub mod pu;
pub mod seu;

use super::RawRecord;
use crate::tasks::DatasetId;
use crate::{Error, Result};
use std::path::Path;

/// Ingest every record of one operating condition.
pub fn ingest(dataset: DatasetId, data_root: &Path, condition: u32) -> Result<Vec<RawRecord>> {
    if condition >= dataset.domain_count() {
        return Err(Error::Data(format!(
            "condition {condition} is not registered for {dataset} (has {} conditions)",
            dataset.domain_count()
        )));
    }
    match dataset {
        DatasetId::Cwru => cwru::ingest(data_root, condition),
        DatasetId::Pu => pu::ingest(data_root, condition),
        DatasetId::PuTypes => pu::ingest_types(data_root, condition),
        DatasetId::Jnu => jnu::ingest(data_root, condition),
        DatasetId::Phm2009 => phm2009::ingest(data_root, condition),
        DatasetId::Seu => seu::ingest(data_root, condition),
        DatasetId::Synth => Err(Error::Data("the synthetic dataset is generated, not ingested".into())),
    }
}

/// Human-readable description of the expected directory layout.
pub fn layout_help(dataset: DatasetId) -> &'static str {
    match dataset {
        DatasetId::Cwru => cwru::LAYOUT,
        DatasetId::Pu => pu::LAYOUT,
        DatasetId::PuTypes => pu::LAYOUT_TYPES,
        DatasetId::Jnu => jnu::LAYOUT,
        DatasetId::Phm2009 => phm2009::LAYOUT,
        DatasetId::Seu => seu::LAYOUT,
        DatasetId::Synth => "generated in-process from the synth spec; no files required",
    }
}

/// Parse a delimited numeric text file into per-column series.
///
/// Delimiters: tab, comma, semicolon, or runs of spaces, sniffed per line.
/// Lines that do not parse as numbers (headers, notes) are skipped.
pub(crate) fn read_numeric_columns(path: &Path, want_cols: usize) -> Result<Vec<Vec<f32>>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Layout(format!("cannot read {}: {e}", path.display())))?;
    let mut cols: Vec<Vec<f32>> = vec![Vec::new(); want_cols];
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = if line.contains('\t') {
            line.split('\t').collect()
        } else if line.contains(',') {
            line.split(',').collect()
        } else if line.contains(';') {
            line.split(';').collect()
        } else {
            line.split_whitespace().collect()
        };
        if fields.len() < want_cols {
            continue;
        }
        let parsed: Option<Vec<f32>> =
            fields[..want_cols].iter().map(|f| f.trim().parse::<f32>().ok()).collect();
        if let Some(values) = parsed {
            for (c, v) in values.into_iter().enumerate() {
                cols[c].push(v);
            }
        }
    }
    if cols[0].is_empty() {
        return Err(Error::Parse {
            path: path.display().to_string(),
            msg: format!("no numeric rows with at least {want_cols} column(s) found"),
        });
    }
    Ok(cols)
}

/// Recursively collect files under `root` whose lowercased path matches the
/// filter. Results are sorted for deterministic ingestion order.
pub(crate) fn find_files(root: &Path, filter: &dyn Fn(&str) -> bool) -> Result<Vec<std::path::PathBuf>> {
    fn walk(dir: &Path, filter: &dyn Fn(&str) -> bool, out: &mut Vec<std::path::PathBuf>) -> std::io::Result<()> {
        for entry in std::fs::read_dir(dir)? {
            let entry = entry?;
            let path = entry.path();
            if path.is_dir() {
                walk(&path, filter, out)?;
            } else if filter(&path.display().to_string().to_lowercase()) {
                out.push(path);
            }
        }
        Ok(())
    }
    let mut out = Vec::new();
    walk(root, filter, &mut out)
        .map_err(|e| Error::Layout(format!("cannot scan {}: {e}", root.display())))?;
    out.sort();
    Ok(out)
}
