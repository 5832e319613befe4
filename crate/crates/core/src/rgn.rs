//! Residual generation network: a fully convolutional generator that maps
//! a waveform to an additive residual of the same length.
//!
//! The input is cut into non-overlapping 256-sample frames treated as 256
//! channels, pushed through a stack of transposed-convolution upsampling
//! stages with dilated residual blocks in between, and projected back to
//! one channel. The upsampling factors multiply back to the frame width,
//! so the output aligns sample-for-sample with the input. A scaled tanh
//! bounds the residual amplitude.

use std::collections::BTreeMap;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::audio::Waveform;
use crate::autodiff::{ConvGeom, Graph, TensorId};
use crate::error::{Error, Result};
use crate::nn::{
    he_normal, initial_gain, weight_norm, BoundParams, Checkpoint, ParamStore,
};
use crate::seeds;

/// Samples per input frame; the upsampling factors must multiply to this.
pub const FRAME_WIDTH: usize = 256;

const LEAKY_SLOPE: f64 = 0.2;

/// Generator shape. Stored in checkpoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RgnArch {
    /// Per-stage upsampling factors; their product must equal
    /// [`FRAME_WIDTH`] and each must be even (the transposed convolutions
    /// use kernel 2f, stride f, padding f/2 to hit exactly f-fold length).
    pub upsample_factors: Vec<usize>,
    /// Channels after the input convolution; halved at each stage.
    pub base_channels: usize,
    /// Dilations of the residual blocks after each upsampling stage.
    pub dilations: Vec<usize>,
    /// Hard bound on |residual| via scaled tanh.
    pub output_scale: f64,
}

impl Default for RgnArch {
    fn default() -> Self {
        RgnArch {
            upsample_factors: vec![8, 8, 2, 2],
            base_channels: 256,
            dilations: vec![1, 3, 9],
            output_scale: 0.1,
        }
    }
}

impl RgnArch {
    pub fn validate(&self) -> Result<()> {
        if self.upsample_factors.is_empty() {
            return Err(Error::Config("upsample_factors must not be empty".into()));
        }
        let product: usize = self.upsample_factors.iter().product();
        if product != FRAME_WIDTH {
            return Err(Error::Config(format!(
                "upsample_factors {:?} multiply to {product}, need {FRAME_WIDTH}",
                self.upsample_factors
            )));
        }
        if self.upsample_factors.iter().any(|&f| f < 2 || f % 2 != 0) {
            return Err(Error::Config(format!(
                "upsample factors must be even and at least 2, got {:?}",
                self.upsample_factors
            )));
        }
        if self.base_channels == 0 {
            return Err(Error::Config("base_channels must be positive".into()));
        }
        if self.dilations.is_empty() || self.dilations.contains(&0) {
            return Err(Error::Config(
                "dilations must be a non-empty list of positive values".into(),
            ));
        }
        if !(self.output_scale.is_finite() && self.output_scale > 0.0) {
            return Err(Error::Config("output_scale must be positive".into()));
        }
        Ok(())
    }

    /// Channel count entering stage `s` (stage 0 sees the input conv
    /// output); channels halve per stage with a floor of 2.
    fn channels_in(&self, stage: usize) -> usize {
        let mut c = self.base_channels;
        for _ in 0..stage {
            c = (c / 2).max(2);
        }
        c
    }

    /// Expected parameter names and shapes. Weight-normalized convolutions
    /// store direction `v` plus per-row gain `g`; the final projection is a
    /// plain convolution (a zero gain would freeze its gradient at zero,
    /// and this layer starts at zero on purpose).
    fn param_shapes(&self) -> BTreeMap<String, (usize, usize)> {
        let mut shapes = BTreeMap::new();
        let c0 = self.base_channels;
        shapes.insert("input/v".to_string(), (c0, FRAME_WIDTH * 7));
        shapes.insert("input/g".to_string(), (c0, 1));
        shapes.insert("input/b".to_string(), (c0, 1));
        for (s, &f) in self.upsample_factors.iter().enumerate() {
            let (cin, cout) = (self.channels_in(s), self.channels_in(s + 1));
            // Transposed conv weights are stored as (in_channels, out*k).
            shapes.insert(format!("up{s}/v"), (cin, cout * 2 * f));
            shapes.insert(format!("up{s}/g"), (cin, 1));
            shapes.insert(format!("up{s}/b"), (cout, 1));
            for b in 0..self.dilations.len() {
                shapes.insert(format!("stage{s}/block{b}/d/v"), (cout, cout * 3));
                shapes.insert(format!("stage{s}/block{b}/d/g"), (cout, 1));
                shapes.insert(format!("stage{s}/block{b}/d/b"), (cout, 1));
                shapes.insert(format!("stage{s}/block{b}/p/v"), (cout, cout));
                shapes.insert(format!("stage{s}/block{b}/p/g"), (cout, 1));
                shapes.insert(format!("stage{s}/block{b}/p/b"), (cout, 1));
            }
        }
        let c_last = self.channels_in(self.upsample_factors.len());
        shapes.insert("output/w".to_string(), (1, c_last * 7));
        shapes.insert("output/b".to_string(), (1, 1));
        shapes
    }
}

/// Generator model: architecture plus parameters.
#[derive(Debug, Clone)]
pub struct ResidualGenerator {
    pub arch: RgnArch,
    pub params: ParamStore,
}

impl ResidualGenerator {
    /// Fresh generator. All weight-normalized convolutions start He-normal
    /// with gain matching the direction norm; the output projection starts
    /// at zero so an untrained generator is an exact identity and the first
    /// training gradient is purely adversarial.
    pub fn init(arch: RgnArch, seed: u64) -> Result<Self> {
        arch.validate()?;
        let mut rng = seeds::rng(seeds::derive_seed(seed, "rgn/init"));
        let mut params = ParamStore::new();
        let shapes = arch.param_shapes();
        for (name, (rows, cols)) in &shapes {
            if name.ends_with("/v") {
                let v = he_normal(&mut rng, *rows, *cols, *cols);
                let g = initial_gain(&v);
                params.insert(name.clone(), v);
                params.insert(name.replace("/v", "/g"), g);
            } else if name.ends_with("/b") || name == "output/w" {
                params.insert(name.clone(), Array2::zeros((*rows, *cols)));
            }
            // "/g" handled together with its "/v".
        }
        Ok(ResidualGenerator { arch, params })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let header = serde_json::json!({
            "kind": "rgn",
            "arch": self.arch,
        });
        let mut ck = Checkpoint::new(header);
        ck.add_section("param", &self.params);
        ck.save(path)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let ck = Checkpoint::load(path)?;
        let bad = |reason: String| Error::CheckpointFormat {
            path: path.to_path_buf(),
            reason,
        };
        if ck.header["kind"] != "rgn" {
            return Err(bad(format!(
                "expected a generator checkpoint, found kind {}",
                ck.header["kind"]
            )));
        }
        let arch: RgnArch = serde_json::from_value(ck.header["arch"].clone())
            .map_err(|e| bad(format!("arch: {e}")))?;
        arch.validate().map_err(|e| bad(e.to_string()))?;
        let params = ck.section("param");
        let shapes = arch.param_shapes();
        for (name, shape) in &shapes {
            if !params.contains(name) {
                return Err(bad(format!("missing parameter {name}")));
            }
            if params.get(name).dim() != *shape {
                return Err(bad(format!(
                    "parameter {name} has shape {:?}, expected {:?}",
                    params.get(name).dim(),
                    shape
                )));
            }
        }
        if params.n_tensors() != shapes.len() {
            return Err(bad("unexpected extra parameters".to_string()));
        }
        Ok(ResidualGenerator { arch, params })
    }
}

/// Input length after zero-padding to a whole number of frames. Empty
/// input still pads to one frame so the network has something to chew on.
fn padded_len(len: usize) -> usize {
    len.div_ceil(FRAME_WIDTH).max(1) * FRAME_WIDTH
}

/// Build the generator forward pass on a (1, padded_len) signal node,
/// returning a (1, padded_len) residual node bounded by `output_scale`.
pub fn residual_graph(
    g: &mut Graph,
    p: &BoundParams,
    arch: &RgnArch,
    signal: TensorId,
) -> TensorId {
    let k7 = ConvGeom {
        kernel: 7,
        stride: 1,
        dilation: 1,
        padding: 3,
    };
    let framed = g.frame(signal, FRAME_WIDTH, FRAME_WIDTH);
    let mut x = g.transpose(framed);
    let w_in = weight_norm(g, p.id("input/v"), p.id("input/g"));
    x = g.conv1d(x, w_in, k7);
    x = g.add_colvec(x, p.id("input/b"));
    for (s, &f) in arch.upsample_factors.iter().enumerate() {
        x = g.leaky_relu(x, LEAKY_SLOPE);
        let w_up = weight_norm(g, p.id(&format!("up{s}/v")), p.id(&format!("up{s}/g")));
        let geom = ConvGeom {
            kernel: 2 * f,
            stride: f,
            dilation: 1,
            padding: f / 2,
        };
        x = g.conv_transpose1d(x, w_up, geom);
        x = g.add_colvec(x, p.id(&format!("up{s}/b")));
        for (b, &d) in arch.dilations.iter().enumerate() {
            let kd = ConvGeom {
                kernel: 3,
                stride: 1,
                dilation: d,
                padding: d,
            };
            let k1 = ConvGeom {
                kernel: 1,
                stride: 1,
                dilation: 1,
                padding: 0,
            };
            let h = g.leaky_relu(x, LEAKY_SLOPE);
            let w_d = weight_norm(
                g,
                p.id(&format!("stage{s}/block{b}/d/v")),
                p.id(&format!("stage{s}/block{b}/d/g")),
            );
            let h = g.conv1d(h, w_d, kd);
            let h = g.add_colvec(h, p.id(&format!("stage{s}/block{b}/d/b")));
            let h = g.leaky_relu(h, LEAKY_SLOPE);
            let w_p = weight_norm(
                g,
                p.id(&format!("stage{s}/block{b}/p/v")),
                p.id(&format!("stage{s}/block{b}/p/g")),
            );
            let h = g.conv1d(h, w_p, k1);
            let h = g.add_colvec(h, p.id(&format!("stage{s}/block{b}/p/b")));
            x = g.add(x, h);
        }
    }
    x = g.leaky_relu(x, LEAKY_SLOPE);
    x = g.conv1d(x, p.id("output/w"), k7);
    x = g.add_colvec(x, p.id("output/b"));
    x = g.tanh(x);
    g.mul_scalar(x, arch.output_scale)
}

/// Pad a signal row to a whole number of frames, run the generator, trim
/// back. Helper shared by inference and the training loop.
pub fn residual_graph_padded(
    g: &mut Graph,
    p: &BoundParams,
    arch: &RgnArch,
    signal: TensorId,
) -> TensorId {
    let len = g.value(signal).dim().1;
    let padded = padded_len(len);
    let mut x = signal;
    if padded != len {
        x = g.pad_cols(x, padded);
    }
    let r = residual_graph(g, p, arch, x);
    if padded != len {
        return g.trim_cols(r, len);
    }
    r
}

/// The residual P(w): same length and rate as the input, |values| bounded
/// by the architecture's output_scale, deterministic per parameters.
pub fn generate_residual(model: &ResidualGenerator, w: &Waveform) -> Result<Waveform> {
    if !w.is_finite() {
        return Err(Error::NonFiniteInput);
    }
    let mut g = Graph::new();
    let bound = model.params.bind_frozen(&mut g);
    let row = Array2::from_shape_vec((1, w.len()), w.samples().to_vec())
        .expect("row shape matches sample count");
    let signal = g.constant(row);
    let r = residual_graph_padded(&mut g, &bound, &model.arch, signal);
    if g.poisoned().is_some() {
        return Err(Error::NonFiniteInput);
    }
    let values = g.value(r).row(0).to_vec();
    Ok(Waveform::new(values, w.sample_rate()))
}

/// Test-only helper: the output projection starts at zero by design, so
/// tests that need a live residual randomize it first.
#[cfg(test)]
pub(crate) fn randomize_output_layer(model: &mut ResidualGenerator, seed: u64) {
    let mut rng = seeds::rng(seed);
    let shape = model.params.get("output/w").dim();
    let w = he_normal(&mut rng, shape.0, shape.1, shape.1);
    model.params.set("output/w", w);
}

/// Post-processed audio: clip(w + P(w), -1, 1).
pub fn apply(model: &ResidualGenerator, w: &Waveform) -> Result<Waveform> {
    let residual = generate_residual(model, w)?;
    let samples = w
        .samples()
        .iter()
        .zip(residual.samples())
        .map(|(a, b)| (a + b).clamp(-1.0, 1.0))
        .collect();
    Ok(Waveform::new(samples, w.sample_rate()))
}
