//! Dataset ingestion, preprocessing (windowing, frequency transform,
//! Z-score), 80/20 splitting, the processed-window cache, and the synthetic
//! domain-shift generator.
//!
//! Preprocessing pipeline per domain: cut non-overlapping 1024-sample
//! windows, optionally replace each window by the magnitude of the first 512
//! spectral coefficients, then Z-score every window with its own statistics.

pub mod adapters;
pub mod cache;
pub mod mat5;
pub mod synth;

use crate::tasks::{DatasetId, InputType};
use crate::{Error, Result};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::collections::{BTreeMap, BTreeSet};

/// Time-domain window length.
pub const WINDOW_LEN: usize = 1024;
/// Frequency-domain input length (first half of the spectrum).
pub const SPECTRUM_LEN: usize = WINDOW_LEN / 2;

/// One raw sensor recording for a single health condition.
#[derive(Debug, Clone)]
pub struct RawRecord {
    pub samples: Vec<f32>,
    pub sampling_rate_hz: f64,
    /// Operating-condition index (the transfer domain id).
    pub condition: u32,
    /// Health-state class label.
    pub label: u32,
    pub dataset: DatasetId,
    pub metadata: BTreeMap<String, String>,
}

impl RawRecord {
    pub fn validate(&self) -> Result<()> {
        if self.samples.is_empty() {
            return Err(Error::Data("raw record has no samples".into()));
        }
        if self.sampling_rate_hz <= 0.0 {
            return Err(Error::Data("raw record needs a positive sampling rate".into()));
        }
        Ok(())
    }
}

/// One preprocessed model input.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleWindow {
    pub values: Vec<f32>,
    pub label: u32,
    pub domain: u32,
}

impl SampleWindow {
    /// Content hash used by the leakage audit (FNV-1a over the raw bits).
    pub fn content_hash(&self) -> u64 {
        let mut h: u64 = 0xcbf29ce484222325;
        let mut eat = |b: u64| {
            h ^= b;
            h = h.wrapping_mul(0x100000001b3);
        };
        eat(self.label as u64);
        eat(self.domain as u64);
        for v in &self.values {
            eat(v.to_bits() as u64);
        }
        h
    }
}

/// All windows of one transfer domain.
#[derive(Debug, Clone, Default)]
pub struct DomainDataset {
    pub windows: Vec<SampleWindow>,
    pub domain: u32,
}

impl DomainDataset {
    pub fn label_set(&self) -> BTreeSet<u32> {
        self.windows.iter().map(|w| w.label).collect()
    }

    pub fn len(&self) -> usize {
        self.windows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.windows.is_empty()
    }

    /// Windows per class, keyed by label.
    pub fn class_counts(&self) -> BTreeMap<u32, usize> {
        let mut counts = BTreeMap::new();
        for w in &self.windows {
            *counts.entry(w.label).or_insert(0) += 1;
        }
        counts
    }

    /// Keep only windows whose label is in `labels`.
    pub fn filter_labels(&self, labels: &BTreeSet<u32>) -> DomainDataset {
        DomainDataset {
            windows: self.windows.iter().filter(|w| labels.contains(&w.label)).cloned().collect(),
            domain: self.domain,
        }
    }
}

/// Train/test partition of one domain.
#[derive(Debug, Clone)]
pub struct SplitDataset {
    pub train: DomainDataset,
    pub test: DomainDataset,
}

/// Cut a record into consecutive non-overlapping windows; the remainder is
/// discarded, never padded.
pub fn window_signal(record: &RawRecord, length: usize) -> Result<Vec<SampleWindow>> {
    record.validate()?;
    if record.samples.len() < length {
        return Err(Error::Data(format!(
            "record with {} samples is shorter than one {length}-sample window",
            record.samples.len()
        )));
    }
    let count = record.samples.len() / length;
    Ok((0..count)
        .map(|i| SampleWindow {
            values: record.samples[i * length..(i + 1) * length].to_vec(),
            label: record.label,
            domain: record.condition,
        })
        .collect())
}

thread_local! {
    static FFT_1024: std::cell::RefCell<Option<std::sync::Arc<dyn rustfft::Fft<f32>>>> =
        const { std::cell::RefCell::new(None) };
}

/// Magnitude of the first half of the window's discrete Fourier transform
/// (the second half is redundant for real signals).
pub fn to_frequency(window: &SampleWindow) -> Result<SampleWindow> {
    if window.values.len() != WINDOW_LEN {
        return Err(Error::Shape(format!(
            "frequency transform expects {WINDOW_LEN}-sample time windows, got {}",
            window.values.len()
        )));
    }
    let fft = FFT_1024.with(|cell| {
        let mut slot = cell.borrow_mut();
        if slot.is_none() {
            *slot = Some(rustfft::FftPlanner::new().plan_fft_forward(WINDOW_LEN));
        }
        slot.as_ref().unwrap().clone()
    });
    let mut buf: Vec<rustfft::num_complex::Complex<f32>> =
        window.values.iter().map(|&v| rustfft::num_complex::Complex::new(v, 0.0)).collect();
    fft.process(&mut buf);
    Ok(SampleWindow {
        values: buf[..SPECTRUM_LEN].iter().map(|c| c.norm()).collect(),
        label: window.label,
        domain: window.domain,
    })
}

/// Z-score with the window's own (population) statistics. A zero-variance
/// window becomes all zeros; returns `true` in that degenerate case.
pub fn zscore_normalize(values: &mut [f32]) -> bool {
    let n = values.len() as f64;
    let mean = values.iter().map(|&v| v as f64).sum::<f64>() / n;
    let var = values.iter().map(|&v| (v as f64 - mean) * (v as f64 - mean)).sum::<f64>() / n;
    if var <= 0.0 {
        log::warn!("zero-variance window normalized to zeros");
        values.iter_mut().for_each(|v| *v = 0.0);
        return true;
    }
    let inv = 1.0 / var.sqrt();
    values.iter_mut().for_each(|v| *v = ((*v as f64 - mean) * inv) as f32);
    false
}

/// Windowing + optional frequency transform + per-window Z-score for a set
/// of records belonging to one domain.
pub fn prepare_domain(
    records: &[RawRecord],
    input_type: InputType,
    max_windows_per_class: Option<usize>,
) -> Result<DomainDataset> {
    if records.is_empty() {
        return Err(Error::Data("no records to prepare".into()));
    }
    let domain = records[0].condition;
    let mut per_class: BTreeMap<u32, usize> = BTreeMap::new();
    let mut windows = Vec::new();
    for record in records {
        if record.condition != domain {
            return Err(Error::Data("prepare_domain received records from multiple conditions".into()));
        }
        for w in window_signal(record, WINDOW_LEN)? {
            let taken = per_class.entry(w.label).or_insert(0);
            if let Some(cap) = max_windows_per_class {
                if *taken >= cap {
                    continue;
                }
            }
            *taken += 1;
            let mut w = match input_type {
                InputType::Time => w,
                InputType::Frequency => to_frequency(&w)?,
            };
            zscore_normalize(&mut w.values);
            windows.push(w);
        }
    }
    Ok(DomainDataset { windows, domain })
}

/// Stratified 80/20 split, rounding toward the training side but always
/// keeping at least one test window per class. Deterministic in `seed`.
pub fn split_80_20(dataset: &DomainDataset, seed: u64) -> Result<SplitDataset> {
    let mut by_class: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
    for (i, w) in dataset.windows.iter().enumerate() {
        by_class.entry(w.label).or_default().push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train = DomainDataset { windows: Vec::new(), domain: dataset.domain };
    let mut test = DomainDataset { windows: Vec::new(), domain: dataset.domain };
    for (label, mut idx) in by_class {
        if idx.len() < 2 {
            return Err(Error::Data(format!(
                "class {label} has {} window(s); the 80/20 split needs at least 2",
                idx.len()
            )));
        }
        idx.shuffle(&mut rng);
        let n = idx.len();
        let n_train = ((n as f64 * 0.8).ceil() as usize).min(n - 1);
        for (pos, &i) in idx.iter().enumerate() {
            let w = dataset.windows[i].clone();
            if pos < n_train {
                train.windows.push(w);
            } else {
                test.windows.push(w);
            }
        }
    }
    Ok(SplitDataset { train, test })
}
