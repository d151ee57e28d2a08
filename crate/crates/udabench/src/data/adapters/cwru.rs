//! Case Western Reserve University bearing data: drive-end channel sampled
//! at 12 kHz, ten health classes, four motor loads (0-3 HP).

use super::super::{mat5, RawRecord};
use crate::tasks::DatasetId;
use crate::{Error, Result};
use std::collections::BTreeMap;
use std::path::Path;

pub const LAYOUT: &str = "\
data_root/<id>.mat with the published file ids, one file per (class, load):
  normal 97-100; inner 0.007\" 105-108; ball 0.007\" 118-121; outer 0.007\" 130-133;
  inner 0.014\" 169-172; ball 0.014\" 185-188; outer 0.014\" 197-200;
  inner 0.021\" 209-212; ball 0.021\" 222-225; outer 0.021\" 234-237.
Each file holds the drive-end channel as variable X<id>_DE_time.";

/// File id of (class, load 0); loads 1-3 add their offset.
const BASE_IDS: [u32; 10] = [97, 105, 118, 130, 169, 185, 197, 209, 222, 234];

/// Motor speed in rpm per load condition.
const SPEEDS: [u32; 4] = [1797, 1772, 1750, 1730];

pub fn ingest(data_root: &Path, condition: u32) -> Result<Vec<RawRecord>> {
    let mut records = Vec::with_capacity(10);
    for (label, base) in BASE_IDS.iter().enumerate() {
        let id = base + condition;
        let path = data_root.join(format!("{id}.mat"));
        if !path.exists() {
            return Err(Error::Layout(format!(
                "missing {} (class {label}, load {condition}); expected layout:\n{LAYOUT}",
                path.display()
            )));
        }
        let vars = mat5::read_mat(&path)?;
        let var_name = format!("X{id:03}_DE_time");
        let samples = vars
            .get(&var_name)
            .and_then(|v| v.as_numeric())
            .ok_or_else(|| Error::Parse {
                path: path.display().to_string(),
                msg: format!("variable {var_name} not found or not numeric"),
            })?;
        let mut metadata = BTreeMap::new();
        metadata.insert("speed_rpm".to_string(), SPEEDS[condition as usize].to_string());
        metadata.insert("file_id".to_string(), id.to_string());
        records.push(RawRecord {
            samples: samples.iter().map(|&v| v as f32).collect(),
            sampling_rate_hz: 12_000.0,
            condition,
            label: label as u32,
            dataset: DatasetId::Cwru,
            metadata,
        });
    }
    Ok(records)
}
