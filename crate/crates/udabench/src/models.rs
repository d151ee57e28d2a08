//! The shared neural components: 1D-CNN feature-extraction backbone,
//! bottleneck, classifier heads, and domain discriminators, plus batch-norm
//! statistic access and snapshot serialization.
//!
//! Backbone layout (fixed):
//!
//! ```text
//! Conv(1->16, k15) BN ReLU
//! Conv(16->32, k3) BN ReLU  MaxPool(k2 s2)
//! Conv(32->64, k3) BN ReLU
//! Conv(64->128, k3) BN ReLU AdaptiveMaxPool(4)
//! Flatten(512) Fc(256) ReLU Dropout(0.5)
//! ```
//!
//! Adaptive pooling makes the 256-d output independent of the input length,
//! so time-domain (1024) and frequency-domain (512) windows share one model.

use crate::nn::{BatchNorm1d, Conv1d, Dropout, Linear, Mode, Param};
use crate::tensor::{Element, Tape, Var};
use crate::{Error, Result};
use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use ndarray::{Array1, ArrayD, IxDyn};
use rand::Rng;
use sha2::{Digest, Sha256};
use std::io::{Read, Write};

/// Feature dimension produced by the backbone and the bottleneck.
pub const FEATURE_DIM: usize = 256;

/// Shortest input the conv stack can reduce to the 4-slot adaptive pool.
pub const MIN_INPUT_LEN: usize = 32;

/// Per-layer running statistics of every batch-norm layer, in layer order.
pub type BnStats<F> = Vec<(Array1<F>, Array1<F>)>;

/// The shared feature extractor `G_f`.
#[derive(Debug, Clone)]
pub struct Backbone<F: Element> {
    conv1: Conv1d<F>,
    bn1: BatchNorm1d<F>,
    conv2: Conv1d<F>,
    bn2: BatchNorm1d<F>,
    conv3: Conv1d<F>,
    bn3: BatchNorm1d<F>,
    conv4: Conv1d<F>,
    bn4: BatchNorm1d<F>,
    fc: Linear<F>,
    dropout: Dropout,
}

impl<F: Element> Backbone<F> {
    pub fn new(rng: &mut impl Rng) -> Self {
        Backbone {
            conv1: Conv1d::new("backbone.conv1", 1, 16, 15, rng),
            bn1: BatchNorm1d::new("backbone.bn1", 16),
            conv2: Conv1d::new("backbone.conv2", 16, 32, 3, rng),
            bn2: BatchNorm1d::new("backbone.bn2", 32),
            conv3: Conv1d::new("backbone.conv3", 32, 64, 3, rng),
            bn3: BatchNorm1d::new("backbone.bn3", 64),
            conv4: Conv1d::new("backbone.conv4", 64, 128, 3, rng),
            bn4: BatchNorm1d::new("backbone.bn4", 128),
            fc: Linear::new("backbone.fc", 128 * 4, FEATURE_DIM, rng),
            dropout: Dropout::new(0.5),
        }
    }

    /// `[b, 1, l] -> [b, 256]` for any `l >= MIN_INPUT_LEN`.
    pub fn forward(&mut self, tape: &mut Tape<F>, x: Var, mode: Mode, rng: &mut impl Rng) -> Var {
        let shape = tape.val(x).shape().to_vec();
        assert_eq!(shape.len(), 3, "backbone expects [batch, 1, len]");
        assert_eq!(shape[1], 1, "backbone expects a single input channel");
        assert!(shape[2] >= MIN_INPUT_LEN, "backbone input length {} below minimum {MIN_INPUT_LEN}", shape[2]);
        let b = shape[0];

        let h = self.conv1.forward(tape, x);
        let h = self.bn1.forward(tape, h, mode);
        let h = tape.relu(h);
        let h = self.conv2.forward(tape, h);
        let h = self.bn2.forward(tape, h, mode);
        let h = tape.relu(h);
        let h = tape.maxpool1d(h, 2);
        let h = self.conv3.forward(tape, h);
        let h = self.bn3.forward(tape, h, mode);
        let h = tape.relu(h);
        let h = self.conv4.forward(tape, h);
        let h = self.bn4.forward(tape, h, mode);
        let h = tape.relu(h);
        let h = tape.adaptive_maxpool1d(h, 4);
        let h = tape.reshape(h, vec![b, 128 * 4]);
        let h = self.fc.forward(tape, h);
        let h = tape.relu(h);
        self.dropout.forward(tape, h, mode, rng)
    }

    pub fn params(&mut self) -> Vec<&mut Param<F>> {
        let mut ps = self.conv1.params();
        ps.extend(self.bn1.params());
        ps.extend(self.conv2.params());
        ps.extend(self.bn2.params());
        ps.extend(self.conv3.params());
        ps.extend(self.bn3.params());
        ps.extend(self.conv4.params());
        ps.extend(self.bn4.params());
        ps.extend(self.fc.params());
        ps
    }

    fn bn_layers(&mut self) -> Vec<&mut BatchNorm1d<F>> {
        vec![&mut self.bn1, &mut self.bn2, &mut self.bn3, &mut self.bn4]
    }

    /// Running `(mean, var)` of each BN layer, in layer order.
    pub fn bn_statistics(&mut self) -> BnStats<F> {
        self.bn_layers().iter().map(|bn| bn.statistics()).collect()
    }

    /// Replace the running statistics of every BN layer.
    pub fn set_bn_statistics(&mut self, stats: BnStats<F>) -> Result<()> {
        let mut layers = self.bn_layers();
        if stats.len() != layers.len() {
            return Err(Error::Shape(format!(
                "expected statistics for {} BN layers, got {}",
                layers.len(),
                stats.len()
            )));
        }
        for (layer, (mean, var)) in layers.iter_mut().zip(stats) {
            layer.set_statistics(mean, var)?;
        }
        Ok(())
    }
}

/// Bottleneck projection: `Fc(256) -> ReLU -> Dropout(0.5)`.
#[derive(Debug, Clone)]
pub struct Bottleneck<F: Element> {
    fc: Linear<F>,
    dropout: Dropout,
}

impl<F: Element> Bottleneck<F> {
    pub fn new(rng: &mut impl Rng) -> Self {
        Bottleneck { fc: Linear::new("bottleneck.fc", FEATURE_DIM, FEATURE_DIM, rng), dropout: Dropout::new(0.5) }
    }

    pub fn forward(&mut self, tape: &mut Tape<F>, x: Var, mode: Mode, rng: &mut impl Rng) -> Var {
        let h = self.fc.forward(tape, x);
        let h = tape.relu(h);
        self.dropout.forward(tape, h, mode, rng)
    }

    pub fn params(&mut self) -> Vec<&mut Param<F>> {
        self.fc.params()
    }
}

/// Linear classifier head `G_c`: 256 -> K logits.
///
/// K equals the source class count, plus one extra "unknown" logit for the
/// open-set boundary method.
#[derive(Debug, Clone)]
pub struct ClassifierHead<F: Element> {
    fc: Linear<F>,
    pub classes: usize,
}

impl<F: Element> ClassifierHead<F> {
    pub fn new(classes: usize, rng: &mut impl Rng) -> Self {
        ClassifierHead { fc: Linear::new("classifier.fc", FEATURE_DIM, classes, rng), classes }
    }

    pub fn forward(&mut self, tape: &mut Tape<F>, x: Var) -> Var {
        self.fc.forward(tape, x)
    }

    pub fn params(&mut self) -> Vec<&mut Param<F>> {
        self.fc.params()
    }
}

/// Domain discriminator `G_d`: `Fc(1024) ReLU Dropout Fc(1024) ReLU Dropout Fc(out)`.
///
/// `out` is 2 for the binary softmax discriminators, 1 for the sigmoid
/// discriminators, and the domain count for the multi-source methods.
#[derive(Debug, Clone)]
pub struct DomainDiscriminator<F: Element> {
    fc1: Linear<F>,
    fc2: Linear<F>,
    fc3: Linear<F>,
    dropout: Dropout,
    pub out: usize,
}

impl<F: Element> DomainDiscriminator<F> {
    pub fn new(name: &str, in_features: usize, out: usize, rng: &mut impl Rng) -> Self {
        DomainDiscriminator {
            fc1: Linear::new(&format!("{name}.fc1"), in_features, 1024, rng),
            fc2: Linear::new(&format!("{name}.fc2"), 1024, 1024, rng),
            fc3: Linear::new(&format!("{name}.fc3"), 1024, out, rng),
            dropout: Dropout::new(0.5),
            out,
        }
    }

    pub fn forward(&mut self, tape: &mut Tape<F>, x: Var, mode: Mode, rng: &mut impl Rng) -> Var {
        let h = self.fc1.forward(tape, x);
        let h = tape.relu(h);
        let h = self.dropout.forward(tape, h, mode, rng);
        let h = self.fc2.forward(tape, h);
        let h = tape.relu(h);
        let h = self.dropout.forward(tape, h, mode, rng);
        self.fc3.forward(tape, h)
    }

    pub fn params(&mut self) -> Vec<&mut Param<F>> {
        let mut ps = self.fc1.params();
        ps.extend(self.fc2.params());
        ps.extend(self.fc3.params());
        ps
    }
}

// ── snapshots ───────────────────────────────────────────────────────────────

const SNAPSHOT_MAGIC: &[u8; 8] = b"UDABSNAP";
const SNAPSHOT_VERSION: u32 = 1;

/// Architecture fingerprint: digest over the ordered parameter names/shapes.
pub fn fingerprint<F: Element>(params: &[&Param<F>]) -> String {
    let mut hasher = Sha256::new();
    for p in params {
        hasher.update(p.name.as_bytes());
        hasher.update(b":");
        for d in p.value.shape() {
            hasher.update(d.to_le_bytes());
        }
        hasher.update(b";");
    }
    hex_digest(hasher)
}

fn hex_digest(hasher: Sha256) -> String {
    hasher.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

/// Serialize parameters as a named map preceded by the fingerprint.
pub fn save_snapshot<F: Element, W: Write>(w: &mut W, params: &[&Param<F>]) -> Result<()> {
    w.write_all(SNAPSHOT_MAGIC)?;
    w.write_u32::<LittleEndian>(SNAPSHOT_VERSION)?;
    let fp = fingerprint(params);
    w.write_u32::<LittleEndian>(fp.len() as u32)?;
    w.write_all(fp.as_bytes())?;
    w.write_u32::<LittleEndian>(params.len() as u32)?;
    for p in params {
        w.write_u32::<LittleEndian>(p.name.len() as u32)?;
        w.write_all(p.name.as_bytes())?;
        w.write_u32::<LittleEndian>(p.value.ndim() as u32)?;
        for d in p.value.shape() {
            w.write_u64::<LittleEndian>(*d as u64)?;
        }
        for &v in p.value.iter() {
            w.write_f64::<LittleEndian>(v.to_f64().unwrap())?;
        }
    }
    Ok(())
}

/// Load a snapshot into parameters; refuses on fingerprint mismatch.
pub fn load_snapshot<F: Element, R: Read>(r: &mut R, params: Vec<&mut Param<F>>) -> Result<()> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != SNAPSHOT_MAGIC {
        return Err(Error::Snapshot("bad magic".into()));
    }
    let version = r.read_u32::<LittleEndian>()?;
    if version != SNAPSHOT_VERSION {
        return Err(Error::Snapshot(format!("unsupported version {version}")));
    }
    let fp_len = r.read_u32::<LittleEndian>()? as usize;
    let mut fp = vec![0u8; fp_len];
    r.read_exact(&mut fp)?;
    let stored_fp = String::from_utf8(fp).map_err(|_| Error::Snapshot("corrupt fingerprint".into()))?;
    let expect_fp = fingerprint(&params.iter().map(|p| &**p).collect::<Vec<_>>());
    if stored_fp != expect_fp {
        return Err(Error::Snapshot(format!(
            "architecture fingerprint mismatch: snapshot {stored_fp}, model {expect_fp}"
        )));
    }
    let count = r.read_u32::<LittleEndian>()? as usize;
    if count != params.len() {
        return Err(Error::Snapshot(format!("snapshot has {count} tensors, model has {}", params.len())));
    }
    for p in params {
        let name_len = r.read_u32::<LittleEndian>()? as usize;
        let mut name = vec![0u8; name_len];
        r.read_exact(&mut name)?;
        let name = String::from_utf8(name).map_err(|_| Error::Snapshot("corrupt name".into()))?;
        if name != p.name {
            return Err(Error::Snapshot(format!("tensor order mismatch: snapshot {name}, model {}", p.name)));
        }
        let ndim = r.read_u32::<LittleEndian>()? as usize;
        let mut shape = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            shape.push(r.read_u64::<LittleEndian>()? as usize);
        }
        if shape != p.value.shape() {
            return Err(Error::Snapshot(format!("shape mismatch for {name}")));
        }
        let mut data = Vec::with_capacity(p.value.len());
        for _ in 0..p.value.len() {
            data.push(F::f(r.read_f64::<LittleEndian>()?));
        }
        p.value = ArrayD::from_shape_vec(IxDyn(&shape), data).unwrap();
    }
    Ok(())
}
