//! Differentiable LFCC front end.
//!
//! Pipeline: framing → Hamming window → DFT power spectrum → linear
//! triangular filter bank → log → orthonormal DCT-II → truncation, with
//! optional delta / delta-delta appended. Every stage is a matrix
//! operation on the [`Graph`] tape, so detector scores stay differentiable
//! all the way back to the waveform samples.

use std::f64::consts::PI;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::audio::Waveform;
use crate::autodiff::{Graph, TensorId};
use crate::error::{Error, Result};

/// LFCC extraction settings. Defaults: 16 kHz, 25 ms window, 10 ms hop,
/// 70 linear filters, 20 coefficients, deltas on (60-dim features).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LfccConfig {
    pub sample_rate: u32,
    pub win_ms: f64,
    pub hop_ms: f64,
    pub n_filters: usize,
    pub n_coeffs: usize,
    pub with_deltas: bool,
    pub log_floor: f64,
}

impl Default for LfccConfig {
    fn default() -> Self {
        LfccConfig {
            sample_rate: 16_000,
            win_ms: 25.0,
            hop_ms: 10.0,
            n_filters: 70,
            n_coeffs: 20,
            with_deltas: true,
            log_floor: 1e-10,
        }
    }
}

impl LfccConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.sample_rate == 0 {
            return fail("lfcc.sample_rate must be positive".into());
        }
        if !(self.win_ms > 0.0) || !(self.hop_ms > 0.0) {
            return fail("lfcc window and hop must be positive".into());
        }
        if self.win_len() < 2 {
            return fail("lfcc window must span at least 2 samples".into());
        }
        if self.hop_len() < 1 {
            return fail("lfcc hop must span at least 1 sample".into());
        }
        if self.n_filters == 0 {
            return fail("lfcc.n_filters must be positive".into());
        }
        if self.n_coeffs == 0 || self.n_coeffs > self.n_filters {
            return fail(format!(
                "lfcc.n_coeffs must be in 1..={}, got {}",
                self.n_filters, self.n_coeffs
            ));
        }
        if !(self.log_floor > 0.0) {
            return fail("lfcc.log_floor must be positive".into());
        }
        Ok(())
    }

    /// Window length in samples.
    pub fn win_len(&self) -> usize {
        (self.win_ms / 1000.0 * self.sample_rate as f64).round() as usize
    }

    /// Hop length in samples.
    pub fn hop_len(&self) -> usize {
        (self.hop_ms / 1000.0 * self.sample_rate as f64).round() as usize
    }

    /// Output feature dimensionality per frame.
    pub fn feature_dim(&self) -> usize {
        self.n_coeffs * if self.with_deltas { 3 } else { 1 }
    }

    /// Frame count for a signal of `t` samples: floor((t - win)/hop) + 1.
    pub fn n_frames(&self, t: usize) -> Result<usize> {
        let win = self.win_len();
        if t < win {
            return Err(Error::ShortInput { needed: win, got: t });
        }
        Ok((t - win) / self.hop_len() + 1)
    }
}

/// Extracted features: one row per frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub values: Array2<f64>,
}

impl FeatureMatrix {
    pub fn n_frames(&self) -> usize {
        self.values.dim().0
    }

    pub fn dim(&self) -> usize {
        self.values.dim().1
    }
}

/// LFCC extractor with precomputed transform matrices for one config.
pub struct LfccExtractor {
    cfg: LfccConfig,
    window: Array2<f64>,   // (1, win)
    dft_cos: Array2<f64>,  // (win, bins)
    dft_sin: Array2<f64>,  // (win, bins)
    fbank: Array2<f64>,    // (bins, n_filters)
    dct: Array2<f64>,      // (n_filters, n_coeffs)
}

impl LfccExtractor {
    pub fn new(cfg: LfccConfig) -> Result<Self> {
        cfg.validate()?;
        let win = cfg.win_len();
        let bins = win / 2 + 1;

        let window = Array2::from_shape_fn((1, win), |(_, n)| {
            0.54 - 0.46 * (2.0 * PI * n as f64 / (win - 1) as f64).cos()
        });

        let dft_cos =
            Array2::from_shape_fn((win, bins), |(j, b)| (2.0 * PI * (j * b) as f64 / win as f64).cos());
        let dft_sin =
            Array2::from_shape_fn((win, bins), |(j, b)| (2.0 * PI * (j * b) as f64 / win as f64).sin());

        // Triangular filters on a linear frequency axis over 0..Nyquist.
        let nyquist = cfg.sample_rate as f64 / 2.0;
        let edge = |i: usize| i as f64 * nyquist / (cfg.n_filters + 1) as f64;
        let fbank = Array2::from_shape_fn((bins, cfg.n_filters), |(b, fi)| {
            let f = b as f64 * cfg.sample_rate as f64 / win as f64;
            let (lo, mid, hi) = (edge(fi), edge(fi + 1), edge(fi + 2));
            if f >= lo && f < mid {
                (f - lo) / (mid - lo)
            } else if f >= mid && f <= hi {
                (hi - f) / (hi - mid)
            } else {
                0.0
            }
        });

        // Orthonormal DCT-II, arranged for right-multiplication.
        let n = cfg.n_filters as f64;
        let dct = Array2::from_shape_fn((cfg.n_filters, cfg.n_coeffs), |(j, k)| {
            let scale = if k == 0 { (1.0 / n).sqrt() } else { (2.0 / n).sqrt() };
            scale * (PI * k as f64 * (2 * j + 1) as f64 / (2.0 * n)).cos()
        });

        Ok(LfccExtractor {
            cfg,
            window,
            dft_cos,
            dft_sin,
            fbank,
            dct,
        })
    }

    pub fn config(&self) -> &LfccConfig {
        &self.cfg
    }

    /// Regression-delta matrix for `n_frames` frames (window ±2 frames,
    /// replicated edges), arranged so `features (dim, F) @ D` gives deltas.
    fn delta_matrix(n_frames: usize) -> Array2<f64> {
        let mut d = Array2::zeros((n_frames, n_frames));
        let clampi = |t: isize| t.clamp(0, n_frames as isize - 1) as usize;
        for t in 0..n_frames {
            for n in 1..=2isize {
                d[[clampi(t as isize + n), t]] += n as f64 / 10.0;
                d[[clampi(t as isize - n), t]] -= n as f64 / 10.0;
            }
        }
        d
    }

    /// Build the differentiable feature pipeline on `g`.
    ///
    /// `signal` must be a (1, T) node with T at least one window. The
    /// result is (feature_dim, n_frames): coefficients as channels, which
    /// is the layout the detector consumes.
    pub fn build_graph(&self, g: &mut Graph, signal: TensorId) -> TensorId {
        let t = g.value(signal).dim().1;
        let n_frames = self
            .cfg
            .n_frames(t)
            .expect("caller must validate signal length");

        let frames = g.frame(signal, self.cfg.win_len(), self.cfg.hop_len());
        let win = g.constant(self.window.clone());
        let windowed = g.mul_rowvec(frames, win);

        let cos_m = g.constant(self.dft_cos.clone());
        let sin_m = g.constant(self.dft_sin.clone());
        let re = g.matmul(windowed, cos_m);
        let im = g.matmul(windowed, sin_m);
        let re2 = g.square(re);
        let im2 = g.square(im);
        let power = g.add(re2, im2);

        let fb = g.constant(self.fbank.clone());
        let energies = g.matmul(power, fb);
        let floored = g.add_scalar(energies, self.cfg.log_floor);
        let logged = g.ln(floored);

        let dct = g.constant(self.dct.clone());
        let ceps = g.matmul(logged, dct);
        let static_t = g.transpose(ceps); // (n_coeffs, frames)

        if !self.cfg.with_deltas {
            return static_t;
        }
        let dmat = g.constant(Self::delta_matrix(n_frames));
        let d1 = g.matmul(static_t, dmat);
        let d2 = g.matmul(d1, dmat);
        g.concat_rows(&[static_t, d1, d2])
    }

    /// Extract features for a waveform (non-graph entry point).
    pub fn extract(&self, w: &Waveform) -> Result<FeatureMatrix> {
        if w.sample_rate() != self.cfg.sample_rate {
            return Err(Error::SampleRateMismatch {
                left: w.sample_rate(),
                right: self.cfg.sample_rate,
            });
        }
        self.cfg.n_frames(w.len())?; // validates length
        let mut g = Graph::new();
        let row = Array2::from_shape_vec((1, w.len()), w.samples().to_vec())
            .expect("shape matches length");
        let signal = g.constant(row);
        let feats = self.build_graph(&mut g, signal);
        Ok(FeatureMatrix {
            values: g.value(feats).t().to_owned(),
        })
    }
}

/// One-shot extraction helper.
pub fn extract_lfcc(w: &Waveform, cfg: &LfccConfig) -> Result<FeatureMatrix> {
    LfccExtractor::new(cfg.clone())?.extract(w)
}
