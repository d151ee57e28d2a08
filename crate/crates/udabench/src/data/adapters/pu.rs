//! Paderborn University bearing data: 64 kHz vibration channel, thirteen
//! real-damage bearing codes under four operating conditions, plus the
//! artificial-damage task pair used for negative-transfer analysis.

use super::super::{mat5, RawRecord};
use crate::tasks::DatasetId;
use crate::{Error, Result};
use std::collections::BTreeMap;
use std::path::Path;

pub const LAYOUT: &str = "\
data_root/<BEARING_CODE>/<CONDITION>_<BEARING_CODE>_<k>.mat, k = 1..20,
bearing codes KA04 KA15 KA16 KA22 KA30 KB23 KB24 KB27 KI14 KI16 KI17 KI18 KI21,
conditions N15_M07_F10 N09_M07_F10 N15_M01_F10 N15_M07_F04.
Each file holds one struct variable named like the file; the vibration
signal is the Y entry whose Name is \"vibration_1\".";

pub const LAYOUT_TYPES: &str = "\
data_root/<BEARING_CODE>/N15_M07_F10_<BEARING_CODE>_<k>.mat, k = 1..20,
bearing codes KA05 KA03 KI03 (electric-engraver task) and
KA01 KA07 KA08 KI01 (EDM/drilling task).";

/// Real-damage bearing codes in label order 0..12.
pub const REAL_DAMAGE_CODES: [&str; 13] = [
    "KA04", "KA15", "KA16", "KA22", "KA30", "KB23", "KB24", "KB27", "KI14", "KI16", "KI17", "KI18", "KI21",
];

/// Operating-condition file prefixes per task id.
pub const CONDITIONS: [&str; 4] = ["N15_M07_F10", "N09_M07_F10", "N15_M01_F10", "N15_M07_F04"];

/// (rpm, load torque Nm, radial force N) per condition.
const PARAMS: [(u32, f64, u32); 4] = [(1500, 0.7, 1000), (900, 0.7, 1000), (1500, 0.1, 1000), (1500, 0.7, 400)];

/// Artificial-damage bearing codes and labels per task: task 0 uses
/// electric-engraver damages, task 1 EDM and drilling. Both run under the
/// N15_M07_F10 condition.
const TYPES_TASKS: [&[(&str, u32)]; 2] =
    [&[("KA05", 0), ("KA03", 1), ("KI03", 2)], &[("KA01", 0), ("KA07", 0), ("KA08", 1), ("KI01", 2)]];

const EXPERIMENTS_PER_CODE: u32 = 20;

fn read_vibration(path: &Path, var_name: &str) -> Result<Vec<f32>> {
    let vars = mat5::read_mat(path)?;
    let var = vars.get(var_name).or_else(|| vars.values().next()).ok_or_else(|| Error::Parse {
        path: path.display().to_string(),
        msg: "file holds no variables".into(),
    })?;
    let mat5::MatValue::Struct { fields, .. } = var else {
        return Err(Error::Parse { path: path.display().to_string(), msg: "expected a struct variable".into() });
    };
    let y = fields.get("Y").and_then(|v| v.first()).ok_or_else(|| Error::Parse {
        path: path.display().to_string(),
        msg: "struct has no Y field".into(),
    })?;
    let mat5::MatValue::Struct { fields: yf, .. } = y else {
        return Err(Error::Parse { path: path.display().to_string(), msg: "Y is not a struct array".into() });
    };
    let names = yf.get("Name").ok_or_else(|| Error::Parse {
        path: path.display().to_string(),
        msg: "Y entries have no Name field".into(),
    })?;
    let datas = yf.get("Data").ok_or_else(|| Error::Parse {
        path: path.display().to_string(),
        msg: "Y entries have no Data field".into(),
    })?;
    for (name, data) in names.iter().zip(datas) {
        if name.as_char() == Some("vibration_1") {
            let series = data.as_numeric().ok_or_else(|| Error::Parse {
                path: path.display().to_string(),
                msg: "vibration_1 data is not numeric".into(),
            })?;
            return Ok(series.iter().map(|&v| v as f32).collect());
        }
    }
    Err(Error::Parse { path: path.display().to_string(), msg: "no Y entry named vibration_1".into() })
}

fn ingest_codes(
    data_root: &Path,
    condition_prefix: &str,
    condition: u32,
    codes: &[(&str, u32)],
    dataset: DatasetId,
    layout: &str,
) -> Result<Vec<RawRecord>> {
    let mut records = Vec::new();
    for &(code, label) in codes {
        let dir = data_root.join(code);
        if !dir.exists() {
            return Err(Error::Layout(format!(
                "missing bearing-code directory {}; expected layout:\n{layout}",
                dir.display()
            )));
        }
        let mut found = 0;
        for k in 1..=EXPERIMENTS_PER_CODE {
            let name = format!("{condition_prefix}_{code}_{k}");
            let path = dir.join(format!("{name}.mat"));
            if !path.exists() {
                continue;
            }
            let samples = read_vibration(&path, &name)?;
            let (rpm, torque, force) = PARAMS[condition as usize];
            let mut metadata = BTreeMap::new();
            metadata.insert("speed_rpm".to_string(), rpm.to_string());
            metadata.insert("load_torque_nm".to_string(), torque.to_string());
            metadata.insert("radial_force_n".to_string(), force.to_string());
            metadata.insert("bearing_code".to_string(), code.to_string());
            metadata.insert("experiment".to_string(), k.to_string());
            records.push(RawRecord {
                samples,
                sampling_rate_hz: 64_000.0,
                condition,
                label,
                dataset,
                metadata,
            });
            found += 1;
        }
        if found == 0 {
            return Err(Error::Layout(format!(
                "no {condition_prefix}_{code}_<k>.mat experiments under {}; expected layout:\n{layout}",
                dir.display()
            )));
        }
    }
    Ok(records)
}

/// Real-damage transfer conditions: all 13 bearing codes under condition
/// `condition`, every available experiment (up to 20 per code).
pub fn ingest(data_root: &Path, condition: u32) -> Result<Vec<RawRecord>> {
    let codes: Vec<(&str, u32)> =
        REAL_DAMAGE_CODES.iter().enumerate().map(|(label, &code)| (code, label as u32)).collect();
    ingest_codes(data_root, CONDITIONS[condition as usize], condition, &codes, DatasetId::Pu, LAYOUT)
}

/// Artificial-damage tasks (damage-generation-method transfer); both tasks
/// run under the N15_M07_F10 condition.
pub fn ingest_types(data_root: &Path, condition: u32) -> Result<Vec<RawRecord>> {
    ingest_codes(
        data_root,
        CONDITIONS[0],
        condition,
        TYPES_TASKS[condition as usize],
        DatasetId::PuTypes,
        LAYOUT_TYPES,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::mat5::{write_mat, MatValue};

    fn write_experiment(dir: &Path, cond: &str, code: &str, k: u32, n: usize) {
        let name = format!("{cond}_{code}_{k}");
        let mut yf = BTreeMap::new();
        yf.insert(
            "Name".to_string(),
            vec![MatValue::Char("force".into()), MatValue::Char("vibration_1".into())],
        );
        yf.insert(
            "Data".to_string(),
            vec![
                MatValue::Numeric { dims: vec![1, 2], data: vec![0.0, 0.0] },
                MatValue::Numeric {
                    dims: vec![1, n],
                    data: (0..n).map(|i| (i as f64 * 0.3 + k as f64).cos()).collect(),
                },
            ],
        );
        let y = MatValue::Struct { dims: vec![1, 2], fields: yf };
        let mut outer = BTreeMap::new();
        outer.insert("Y".to_string(), vec![y]);
        let var = MatValue::Struct { dims: vec![1, 1], fields: outer };
        std::fs::create_dir_all(dir.join(code)).unwrap();
        write_mat(&dir.join(code).join(format!("{name}.mat")), &[(&name, &var)]).unwrap();
    }

    #[test]
    fn ingest_reads_vibration_channel_for_all_codes() {
        let dir = tempfile::tempdir().unwrap();
        for code in REAL_DAMAGE_CODES {
            for k in 1..=2 {
                write_experiment(dir.path(), CONDITIONS[1], code, k, 64);
            }
        }
        let records = ingest(dir.path(), 1).unwrap();
        assert_eq!(records.len(), 13 * 2);
        let labels: std::collections::BTreeSet<u32> = records.iter().map(|r| r.label).collect();
        assert_eq!(labels, (0..13).collect());
        assert!(records.iter().all(|r| r.samples.len() == 64));
        assert_eq!(records[0].metadata["speed_rpm"], "900");
        assert_eq!(records[0].metadata["load_torque_nm"], "0.7");
        assert_eq!(records[0].metadata["radial_force_n"], "1000");
    }

    #[test]
    fn types_variant_maps_method_groups() {
        let dir = tempfile::tempdir().unwrap();
        for &(code, _) in TYPES_TASKS[0] {
            write_experiment(dir.path(), CONDITIONS[0], code, 1, 32);
        }
        let records = ingest_types(dir.path(), 0).unwrap();
        assert_eq!(records.len(), 3);
        let labels: Vec<u32> = records.iter().map(|r| r.label).collect();
        assert_eq!(labels, vec![0, 1, 2]);
    }

    #[test]
    fn missing_code_directory_is_actionable() {
        let dir = tempfile::tempdir().unwrap();
        let err = ingest(dir.path(), 0).unwrap_err();
        assert!(err.to_string().contains("KA04"), "{err}");
    }
}
