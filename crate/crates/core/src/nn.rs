//! Parameter storage, initialization, optimizers and checkpoint files.
//!
//! Parameters live in a `BTreeMap` so every iteration order is
//! deterministic; training loops bind them into a fresh [`Graph`] each
//! step and apply gradients back by name.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::io::{Read, Write};
use std::path::Path;

use ndarray::Array2;
use rand::Rng;

use crate::autodiff::{Graph, Gradients, TensorId};
use crate::error::{Error, Result};

/// Named parameter tensors with deterministic iteration order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    params: BTreeMap<String, Array2<f64>>,
}

impl ParamStore {
    pub fn new() -> Self {
        ParamStore::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Array2<f64>) {
        let name = name.into();
        let prev = self.params.insert(name.clone(), value);
        assert!(prev.is_none(), "duplicate parameter name {name}");
    }

    pub fn get(&self, name: &str) -> &Array2<f64> {
        self.params
            .get(name)
            .unwrap_or_else(|| panic!("missing parameter {name}"))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.params.contains_key(name)
    }

    /// Replace an existing parameter; the shape must not change.
    pub fn set(&mut self, name: &str, value: Array2<f64>) {
        let slot = self
            .params
            .get_mut(name)
            .unwrap_or_else(|| panic!("missing parameter {name}"));
        assert_eq!(slot.dim(), value.dim(), "shape change for parameter {name}");
        *slot = value;
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Array2<f64>)> {
        self.params.iter()
    }

    pub fn names(&self) -> impl Iterator<Item = &String> {
        self.params.keys()
    }

    pub fn n_tensors(&self) -> usize {
        self.params.len()
    }

    /// Total scalar parameter count.
    pub fn n_scalars(&self) -> usize {
        self.params.values().map(|v| v.len()).sum()
    }

    /// Bind every parameter as a differentiable leaf in `g`.
    pub fn bind(&self, g: &mut Graph) -> BoundParams {
        let ids = self
            .params
            .iter()
            .map(|(name, value)| (name.clone(), g.leaf(value.clone())))
            .collect();
        BoundParams { ids }
    }

    /// Bind every parameter as a constant (frozen model).
    pub fn bind_frozen(&self, g: &mut Graph) -> BoundParams {
        let ids = self
            .params
            .iter()
            .map(|(name, value)| (name.clone(), g.constant(value.clone())))
            .collect();
        BoundParams { ids }
    }

    fn from_map(params: BTreeMap<String, Array2<f64>>) -> Self {
        ParamStore { params }
    }
}

/// Parameter-name to tensor-id mapping for one graph.
pub struct BoundParams {
    ids: BTreeMap<String, TensorId>,
}

impl BoundParams {
    pub fn id(&self, name: &str) -> TensorId {
        *self
            .ids
            .get(name)
            .unwrap_or_else(|| panic!("parameter {name} not bound"))
    }

    /// Collect gradients for all bound parameters. Parameters the loss does
    /// not reach get zero gradients.
    pub fn collect_grads(
        &self,
        store: &ParamStore,
        grads: &Gradients,
    ) -> BTreeMap<String, Array2<f64>> {
        self.ids
            .iter()
            .map(|(name, &id)| {
                let g = grads
                    .get(id)
                    .cloned()
                    .unwrap_or_else(|| Array2::zeros(store.get(name).dim()));
                (name.clone(), g)
            })
            .collect()
    }
}

/// Standard normal sample via Box-Muller (keeps the dependency surface
/// small and the stream portable).
pub fn sample_normal(rng: &mut impl Rng) -> f64 {
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (2.0 * PI * u2).cos()
}

/// He-normal initialization: std = sqrt(2 / fan_in).
pub fn he_normal(rng: &mut impl Rng, rows: usize, cols: usize, fan_in: usize) -> Array2<f64> {
    let std = (2.0 / fan_in as f64).sqrt();
    Array2::from_shape_fn((rows, cols), |_| sample_normal(rng) * std)
}

/// Per-row weight normalization: w = v * gain / ||v||_row.
///
/// `v` is (rows, cols), `gain` is (rows, 1). The small epsilon keeps the
/// gradient finite if a row collapses to zero.
pub fn weight_norm(g: &mut Graph, v: TensorId, gain: TensorId) -> TensorId {
    let sq = g.square(v);
    let ss = g.sum_axis1(sq);
    let ss_safe = g.add_scalar(ss, 1e-12);
    let norm = g.sqrt(ss_safe);
    let scale = g.div(gain, norm);
    g.scale_rows(v, scale)
}

/// Gain initialization matching [`weight_norm`]: the row norms of `v`, so
/// the effective initial weight equals `v`.
pub fn initial_gain(v: &Array2<f64>) -> Array2<f64> {
    let rows = v.dim().0;
    Array2::from_shape_fn((rows, 1), |(r, _)| {
        (v.row(r).iter().map(|x| x * x).sum::<f64>() + 1e-12).sqrt()
    })
}

/// Gradient-descent flavor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OptimizerKind {
    /// Adam with the usual (0.9, 0.999, 1e-8) moments.
    Adam,
    /// Plain SGD.
    Sgd,
}

/// Stateful optimizer applying gradients by parameter name.
#[derive(Debug, Clone)]
pub struct Optimizer {
    kind: OptimizerKind,
    step: u64,
    m: BTreeMap<String, Array2<f64>>,
    v: BTreeMap<String, Array2<f64>>,
}

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

impl Optimizer {
    pub fn new(kind: OptimizerKind) -> Self {
        Optimizer {
            kind,
            step: 0,
            m: BTreeMap::new(),
            v: BTreeMap::new(),
        }
    }

    pub fn kind(&self) -> OptimizerKind {
        self.kind
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// One update over all parameters present in `grads`.
    pub fn apply(
        &mut self,
        params: &mut ParamStore,
        grads: &BTreeMap<String, Array2<f64>>,
        lr: f64,
    ) {
        self.step += 1;
        for (name, grad) in grads {
            let p = self
                .params_entry(params, name)
                .unwrap_or_else(|| panic!("gradient for unknown parameter {name}"));
            match self.kind {
                OptimizerKind::Sgd => {
                    *p -= &(grad * lr);
                }
                OptimizerKind::Adam => {
                    let m = self
                        .m
                        .entry(name.clone())
                        .or_insert_with(|| Array2::zeros(grad.dim()));
                    *m = &*m * ADAM_BETA1 + &(grad * (1.0 - ADAM_BETA1));
                    let v = self
                        .v
                        .entry(name.clone())
                        .or_insert_with(|| Array2::zeros(grad.dim()));
                    *v = &*v * ADAM_BETA2 + &(grad.mapv(|x| x * x) * (1.0 - ADAM_BETA2));
                    let bc1 = 1.0 - ADAM_BETA1.powi(self.step as i32);
                    let bc2 = 1.0 - ADAM_BETA2.powi(self.step as i32);
                    let m_hat = &*m / bc1;
                    let v_hat = &*v / bc2;
                    *p -= &(m_hat / (v_hat.mapv(f64::sqrt) + ADAM_EPS) * lr);
                }
            }
        }
    }

    fn params_entry<'a>(
        &self,
        params: &'a mut ParamStore,
        name: &str,
    ) -> Option<&'a mut Array2<f64>> {
        params.params.get_mut(name)
    }

    /// Optimizer state as named tensors, for checkpointing.
    pub fn state_tensors(&self) -> BTreeMap<String, Array2<f64>> {
        let mut out = BTreeMap::new();
        for (name, t) in &self.m {
            out.insert(format!("adam_m/{name}"), t.clone());
        }
        for (name, t) in &self.v {
            out.insert(format!("adam_v/{name}"), t.clone());
        }
        out
    }

    /// Rebuild optimizer state saved by [`Optimizer::state_tensors`].
    pub fn restore(kind: OptimizerKind, step: u64, state: &BTreeMap<String, Array2<f64>>) -> Self {
        let mut opt = Optimizer::new(kind);
        opt.step = step;
        for (name, t) in state {
            if let Some(base) = name.strip_prefix("adam_m/") {
                opt.m.insert(base.to_string(), t.clone());
            } else if let Some(base) = name.strip_prefix("adam_v/") {
                opt.v.insert(base.to_string(), t.clone());
            }
        }
        opt
    }
}

/// On-disk model archive: a JSON header plus named f64 tensors.
///
/// Layout (all integers little-endian):
/// magic "ARCK", u32 format version, u64 header length, header JSON,
/// u64 tensor count, then per tensor: u32 name length, name bytes,
/// u64 rows, u64 cols, rows*cols f64 values.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub header: serde_json::Value,
    pub tensors: BTreeMap<String, Array2<f64>>,
}

const CHECKPOINT_MAGIC: &[u8; 4] = b"ARCK";
pub const CHECKPOINT_VERSION: u32 = 1;

impl Checkpoint {
    pub fn new(header: serde_json::Value) -> Self {
        Checkpoint {
            header,
            tensors: BTreeMap::new(),
        }
    }

    /// Add a parameter store under a name prefix ("param", "adam_m", ...).
    pub fn add_section(&mut self, prefix: &str, params: &ParamStore) {
        for (name, t) in params.iter() {
            self.tensors.insert(format!("{prefix}/{name}"), t.clone());
        }
    }

    pub fn add_tensors(&mut self, tensors: BTreeMap<String, Array2<f64>>) {
        self.tensors.extend(tensors);
    }

    /// Extract a section back into a parameter store.
    pub fn section(&self, prefix: &str) -> ParamStore {
        let full = format!("{prefix}/");
        let map = self
            .tensors
            .iter()
            .filter_map(|(name, t)| {
                name.strip_prefix(&full)
                    .map(|base| (base.to_string(), t.clone()))
            })
            .collect();
        ParamStore::from_map(map)
    }

    /// Tensors under a prefix, keeping the prefix stripped only once.
    pub fn tensors_with_prefix(&self, prefix: &str) -> BTreeMap<String, Array2<f64>> {
        let full = format!("{prefix}/");
        self.tensors
            .iter()
            .filter_map(|(name, t)| {
                name.strip_prefix(&full)
                    .map(|base| (base.to_string(), t.clone()))
            })
            .collect()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let header_bytes =
            serde_json::to_vec(&self.header).map_err(|e| Error::CheckpointFormat {
                path: path.to_path_buf(),
                reason: format!("header serialization: {e}"),
            })?;
        let mut buf = Vec::new();
        buf.extend_from_slice(CHECKPOINT_MAGIC);
        buf.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        buf.extend_from_slice(&(header_bytes.len() as u64).to_le_bytes());
        buf.extend_from_slice(&header_bytes);
        buf.extend_from_slice(&(self.tensors.len() as u64).to_le_bytes());
        for (name, t) in &self.tensors {
            buf.extend_from_slice(&(name.len() as u32).to_le_bytes());
            buf.extend_from_slice(name.as_bytes());
            let (r, c) = t.dim();
            buf.extend_from_slice(&(r as u64).to_le_bytes());
            buf.extend_from_slice(&(c as u64).to_le_bytes());
            for &v in t.iter() {
                buf.extend_from_slice(&v.to_le_bytes());
            }
        }
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&buf).map_err(|e| Error::io(path, e))?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut bytes = Vec::new();
        std::fs::File::open(path)
            .map_err(|e| Error::io(path, e))?
            .read_to_end(&mut bytes)
            .map_err(|e| Error::io(path, e))?;
        let bad = |reason: &str| Error::CheckpointFormat {
            path: path.to_path_buf(),
            reason: reason.to_string(),
        };
        let mut off = 0usize;
        let take = |off: &mut usize, n: usize| -> Result<&[u8]> {
            if *off + n > bytes.len() {
                return Err(bad("truncated file"));
            }
            let s = &bytes[*off..*off + n];
            *off += n;
            Ok(s)
        };
        if take(&mut off, 4)? != CHECKPOINT_MAGIC {
            return Err(bad("bad magic"));
        }
        let version = u32::from_le_bytes(take(&mut off, 4)?.try_into().expect("4 bytes"));
        if version != CHECKPOINT_VERSION {
            return Err(bad(&format!("unsupported format version {version}")));
        }
        let header_len =
            u64::from_le_bytes(take(&mut off, 8)?.try_into().expect("8 bytes")) as usize;
        let header: serde_json::Value = serde_json::from_slice(take(&mut off, header_len)?)
            .map_err(|e| bad(&format!("header parse: {e}")))?;
        let n_tensors = u64::from_le_bytes(take(&mut off, 8)?.try_into().expect("8 bytes"));
        let mut tensors = BTreeMap::new();
        for _ in 0..n_tensors {
            let name_len =
                u32::from_le_bytes(take(&mut off, 4)?.try_into().expect("4 bytes")) as usize;
            let name = std::str::from_utf8(take(&mut off, name_len)?)
                .map_err(|_| bad("tensor name is not utf-8"))?
                .to_string();
            let r = u64::from_le_bytes(take(&mut off, 8)?.try_into().expect("8 bytes")) as usize;
            let c = u64::from_le_bytes(take(&mut off, 8)?.try_into().expect("8 bytes")) as usize;
            let count = r
                .checked_mul(c)
                .ok_or_else(|| bad("tensor dimensions overflow"))?;
            let raw = take(&mut off, count * 8)?;
            let values: Vec<f64> = raw
                .chunks_exact(8)
                .map(|ch| f64::from_le_bytes(ch.try_into().expect("8 bytes")))
                .collect();
            let t = Array2::from_shape_vec((r, c), values).map_err(|_| bad("tensor shape"))?;
            tensors.insert(name, t);
        }
        if off != bytes.len() {
            return Err(bad("trailing bytes"));
        }
        Ok(Checkpoint { header, tensors })
    }
}

/// SHA-256 of a file's bytes, hex-encoded. Used to verify that frozen
/// models stay frozen.
pub fn file_sha256(path: impl AsRef<Path>) -> Result<String> {
    use sha2::{Digest, Sha256};
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let digest = Sha256::digest(&bytes);
    Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seeds;
    use ndarray::array;

    #[test]
    fn he_normal_statistics() {
        let mut rng = seeds::rng(1);
        let w = he_normal(&mut rng, 100, 100, 50);
        let mean = w.sum() / w.len() as f64;
        let var = w.mapv(|v| (v - mean) * (v - mean)).sum() / w.len() as f64;
        assert!(mean.abs() < 0.01, "mean {mean}");
        assert!((var - 2.0 / 50.0).abs() < 0.005, "var {var}");
    }

    #[test]
    fn weight_norm_rows_have_gain_norm() {
        let mut g = Graph::new();
        let v = g.leaf(array![[3.0, 4.0], [1.0, 0.0]]);
        let gain = g.leaf(array![[10.0], [2.0]]);
        let w = weight_norm(&mut g, v, gain);
        let wv = g.value(w);
        assert!((wv[[0, 0]] - 6.0).abs() < 1e-9);
        assert!((wv[[0, 1]] - 8.0).abs() < 1e-9);
        assert!((wv[[1, 0]] - 2.0).abs() < 1e-9);
    }

    #[test]
    fn initial_gain_makes_weight_norm_identity() {
        let mut rng = seeds::rng(2);
        let v = he_normal(&mut rng, 4, 9, 9);
        let gain = initial_gain(&v);
        let mut g = Graph::new();
        let vid = g.leaf(v.clone());
        let gid = g.leaf(gain);
        let w = weight_norm(&mut g, vid, gid);
        let diff = (g.value(w) - &v).iter().map(|d| d.abs()).fold(0.0, f64::max);
        assert!(diff < 1e-9, "diff {diff}");
    }

    #[test]
    fn sgd_moves_against_gradient() {
        let mut params = ParamStore::new();
        params.insert("w", array![[1.0, 2.0]]);
        let mut opt = Optimizer::new(OptimizerKind::Sgd);
        let mut grads = BTreeMap::new();
        grads.insert("w".to_string(), array![[0.5, -1.0]]);
        opt.apply(&mut params, &grads, 0.1);
        assert_eq!(params.get("w"), &array![[0.95, 2.1]]);
    }

    #[test]
    fn adam_first_step_moves_by_lr() {
        // With bias correction, the first Adam step is ~lr * sign(grad).
        let mut params = ParamStore::new();
        params.insert("w", array![[0.0]]);
        let mut opt = Optimizer::new(OptimizerKind::Adam);
        let mut grads = BTreeMap::new();
        grads.insert("w".to_string(), array![[3.0]]);
        opt.apply(&mut params, &grads, 0.01);
        assert!((params.get("w")[[0, 0]] + 0.01).abs() < 1e-6);
    }

    #[test]
    fn adam_resume_matches_uninterrupted_run() {
        let grad_for = |step: u64| array![[(step as f64 * 0.37).sin(), 0.4]];
        let run = |resume_at: Option<u64>| -> ParamStore {
            let mut params = ParamStore::new();
            params.insert("w", array![[0.3, -0.2]]);
            let mut opt = Optimizer::new(OptimizerKind::Adam);
            let mut snapshot: Option<(ParamStore, BTreeMap<String, Array2<f64>>, u64)> = None;
            for step in 0..10u64 {
                if Some(step) == resume_at {
                    let (p, state, s) = snapshot.take().expect("snapshot saved");
                    params = p;
                    opt = Optimizer::restore(OptimizerKind::Adam, s, &state);
                }
                let mut grads = BTreeMap::new();
                grads.insert("w".to_string(), grad_for(step));
                opt.apply(&mut params, &grads, 0.05);
                if resume_at.is_some() && step == 4 {
                    snapshot = Some((params.clone(), opt.state_tensors(), opt.steps_taken()));
                }
            }
            params
        };
        let direct = run(None);
        let resumed = run(Some(5));
        assert_eq!(direct.get("w"), resumed.get("w"));
    }

    #[test]
    fn checkpoint_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("model.ckpt");
        let mut params = ParamStore::new();
        params.insert("conv/w", array![[1.5, -2.5], [0.0, 1e-300]]);
        params.insert("head/b", array![[0.25]]);
        let mut ck = Checkpoint::new(serde_json::json!({"kind": "test", "version": 1}));
        ck.add_section("param", &params);
        ck.save(&p).unwrap();
        let back = Checkpoint::load(&p).unwrap();
        assert_eq!(back.header["kind"], "test");
        assert_eq!(back.section("param"), params);
    }

    #[test]
    fn checkpoint_rejects_garbage() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.ckpt");
        std::fs::write(&p, b"not a checkpoint").unwrap();
        match Checkpoint::load(&p) {
            Err(Error::CheckpointFormat { .. }) => {}
            other => panic!("expected checkpoint format error, got {other:?}"),
        }
    }

    #[test]
    fn checkpoint_bytes_are_reproducible() {
        let dir = tempfile::tempdir().unwrap();
        let (p1, p2) = (dir.path().join("a.ckpt"), dir.path().join("b.ckpt"));
        let mut params = ParamStore::new();
        params.insert("w", array![[0.1, 0.2, 0.3]]);
        let mut ck = Checkpoint::new(serde_json::json!({"v": 1}));
        ck.add_section("param", &params);
        ck.save(&p1).unwrap();
        ck.save(&p2).unwrap();
        assert_eq!(file_sha256(&p1).unwrap(), file_sha256(&p2).unwrap());
    }
}
