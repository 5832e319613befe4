//! Anti-spoofing detector: a residual CNN over LFCC features scoring how
//! likely a clip is natural target-speaker speech.
//!
//! The detector is trained as a binary classifier (target-speaker natural
//! audio against everything else) and later frozen as the adversary the
//! residual generator attacks. Scores are probabilities in (0, 1); equal
//! error rate is the headline metric throughout.

use std::collections::BTreeMap;
use std::path::Path;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{ConvGeom, Graph, TensorId};
use crate::error::{Error, Result};
use crate::lfcc::{FeatureMatrix, LfccConfig, LfccExtractor};
use crate::manifest::{Label, ManifestEntry};
use crate::nn::{he_normal, BoundParams, Checkpoint, Optimizer, OptimizerKind, ParamStore};
use crate::seeds;

const LEAKY_SLOPE: f64 = 0.2;
const VAR_EPS: f64 = 1e-5;

/// Network shape. Stored in checkpoints so a saved model rebuilds itself.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectorArch {
    /// Feature rows per frame (must match the feature extractor).
    pub in_dim: usize,
    /// Conv channels, constant across stages.
    pub channels: usize,
    /// Stride-2 downsampling stages.
    pub n_stages: usize,
    /// Residual blocks per stage.
    pub blocks_per_stage: usize,
}

impl Default for DetectorArch {
    fn default() -> Self {
        DetectorArch {
            in_dim: LfccConfig::default().feature_dim(),
            channels: 64,
            n_stages: 4,
            blocks_per_stage: 2,
        }
    }
}

impl DetectorArch {
    pub fn validate(&self) -> Result<()> {
        for (what, v) in [
            ("in_dim", self.in_dim),
            ("channels", self.channels),
            ("n_stages", self.n_stages),
            ("blocks_per_stage", self.blocks_per_stage),
        ] {
            if v == 0 {
                return Err(Error::Config(format!("detector {what} must be positive")));
            }
        }
        Ok(())
    }

    /// Expected parameter names and shapes. Convolution weights are stored
    /// as (out_channels, in_channels * kernel).
    fn param_shapes(&self) -> BTreeMap<String, (usize, usize)> {
        let c = self.channels;
        let mut shapes = BTreeMap::new();
        shapes.insert("stem/w".to_string(), (c, self.in_dim * 3));
        shapes.insert("stem/b".to_string(), (c, 1));
        for s in 0..self.n_stages {
            shapes.insert(format!("stage{s}/down/w"), (c, c * 3));
            shapes.insert(format!("stage{s}/down/b"), (c, 1));
            for b in 0..self.blocks_per_stage {
                shapes.insert(format!("stage{s}/block{b}/c1/w"), (c, c * 3));
                shapes.insert(format!("stage{s}/block{b}/c1/b"), (c, 1));
                shapes.insert(format!("stage{s}/block{b}/c2/w"), (c, c * 3));
                shapes.insert(format!("stage{s}/block{b}/c2/b"), (c, 1));
            }
        }
        shapes.insert("head/w".to_string(), (1, 2 * c));
        shapes.insert("head/b".to_string(), (1, 1));
        shapes
    }
}

/// A detector: architecture, feature recipe, and weights.
#[derive(Debug, Clone)]
pub struct DetectorModel {
    pub arch: DetectorArch,
    pub lfcc: LfccConfig,
    pub params: ParamStore,
}

impl DetectorModel {
    /// Fresh model. Conv weights are He-normal; the linear head starts at
    /// zero so an untrained model scores exactly 0.5 everywhere.
    pub fn init(arch: DetectorArch, lfcc: LfccConfig, seed: u64) -> Result<Self> {
        arch.validate()?;
        lfcc.validate()?;
        if arch.in_dim != lfcc.feature_dim() {
            return Err(Error::DimensionMismatch {
                expected: arch.in_dim,
                got: lfcc.feature_dim(),
            });
        }
        let mut rng = seeds::rng(seeds::derive_seed(seed, "detector/init"));
        let mut params = ParamStore::new();
        for (name, (rows, cols)) in arch.param_shapes() {
            let value = if name.starts_with("head/") || name.ends_with("/b") {
                Array2::zeros((rows, cols))
            } else {
                // fan_in = in_channels * kernel = cols for our weight layout.
                he_normal(&mut rng, rows, cols, cols)
            };
            params.insert(name, value);
        }
        Ok(DetectorModel { arch, lfcc, params })
    }

    /// Probability that `feats` is natural target-speaker speech.
    pub fn score(&self, feats: &FeatureMatrix) -> Result<f64> {
        let (_frames, dim) = feats.values.dim();
        if dim != self.arch.in_dim {
            return Err(Error::DimensionMismatch {
                expected: self.arch.in_dim,
                got: dim,
            });
        }
        let mut g = Graph::new();
        let bound = self.params.bind_frozen(&mut g);
        let x = g.constant(feats.values.t().to_owned());
        let prob = detector_prob_graph(&mut g, &bound, &self.arch, x);
        if g.poisoned().is_some() {
            return Err(Error::NonFiniteInput);
        }
        Ok(g.scalar_value(prob))
    }

    /// Extract features and score a waveform in one call.
    pub fn score_waveform(&self, wave: &crate::audio::Waveform) -> Result<f64> {
        let extractor = LfccExtractor::new(self.lfcc.clone())?;
        let feats = extractor.extract(wave)?;
        self.score(&feats)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let header = serde_json::json!({
            "kind": "detector",
            "arch": self.arch,
            "lfcc": self.lfcc,
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
        if ck.header["kind"] != "detector" {
            return Err(bad(format!(
                "expected a detector checkpoint, found kind {}",
                ck.header["kind"]
            )));
        }
        let arch: DetectorArch = serde_json::from_value(ck.header["arch"].clone())
            .map_err(|e| bad(format!("arch: {e}")))?;
        let lfcc: LfccConfig = serde_json::from_value(ck.header["lfcc"].clone())
            .map_err(|e| bad(format!("lfcc: {e}")))?;
        let params = ck.section("param");
        for (name, shape) in arch.param_shapes() {
            if !params.contains(&name) {
                return Err(bad(format!("missing parameter {name}")));
            }
            if params.get(&name).dim() != shape {
                return Err(bad(format!(
                    "parameter {name} has shape {:?}, expected {:?}",
                    params.get(&name).dim(),
                    shape
                )));
            }
        }
        if params.n_tensors() != arch.param_shapes().len() {
            return Err(bad("unexpected extra parameters".to_string()));
        }
        Ok(DetectorModel { arch, lfcc, params })
    }
}

/// Detector forward pass on a (in_dim, frames) feature tensor, returning a
/// (1, 1) probability node. Differentiable with respect to the features,
/// which is what lets a generator train against a frozen detector.
pub fn detector_prob_graph(
    g: &mut Graph,
    p: &BoundParams,
    arch: &DetectorArch,
    feats: TensorId,
) -> TensorId {
    let logit = detector_logit_graph(g, p, arch, feats);
    g.sigmoid(logit)
}

fn detector_logit_graph(
    g: &mut Graph,
    p: &BoundParams,
    arch: &DetectorArch,
    feats: TensorId,
) -> TensorId {
    let k3 = ConvGeom {
        kernel: 3,
        stride: 1,
        dilation: 1,
        padding: 1,
    };
    let k3s2 = ConvGeom {
        kernel: 3,
        stride: 2,
        dilation: 1,
        padding: 1,
    };
    let mut x = g.conv1d(feats, p.id("stem/w"), k3);
    x = g.add_colvec(x, p.id("stem/b"));
    x = g.leaky_relu(x, LEAKY_SLOPE);
    for s in 0..arch.n_stages {
        x = g.conv1d(x, p.id(&format!("stage{s}/down/w")), k3s2);
        x = g.add_colvec(x, p.id(&format!("stage{s}/down/b")));
        x = g.leaky_relu(x, LEAKY_SLOPE);
        for b in 0..arch.blocks_per_stage {
            // Pre-activation residual block.
            let h = g.leaky_relu(x, LEAKY_SLOPE);
            let h = g.conv1d(h, p.id(&format!("stage{s}/block{b}/c1/w")), k3);
            let h = g.add_colvec(h, p.id(&format!("stage{s}/block{b}/c1/b")));
            let h = g.leaky_relu(h, LEAKY_SLOPE);
            let h = g.conv1d(h, p.id(&format!("stage{s}/block{b}/c2/w")), k3);
            let h = g.add_colvec(h, p.id(&format!("stage{s}/block{b}/c2/b")));
            x = g.add(x, h);
        }
    }
    // Statistics pooling over time: mean and standard deviation per channel.
    let mean = g.mean_axis1(x);
    let sq = g.square(x);
    let sq_mean = g.mean_axis1(sq);
    let mean_sq = g.square(mean);
    let var = g.sub(sq_mean, mean_sq);
    let var_safe = g.add_scalar(var, VAR_EPS);
    let std = g.sqrt(var_safe);
    let pooled = g.concat_rows(&[mean, std]);
    let proj = g.matmul(p.id("head/w"), pooled);
    g.add(proj, p.id("head/b"))
}

/// Numerically stable binary cross-entropy from a (1, 1) logit node:
/// relu(l) - y*l + ln(1 + exp(-|l|)).
pub fn bce_from_logit(g: &mut Graph, logit: TensorId, target: f64) -> TensorId {
    let relu = g.leaky_relu(logit, 0.0);
    let yl = g.mul_scalar(logit, target);
    let margin = g.sub(relu, yl);
    let abs = g.abs(logit);
    let neg_abs = g.neg(abs);
    let e = g.exp(neg_abs);
    let e1 = g.add_scalar(e, 1.0);
    let softplus = g.ln(e1);
    g.add(margin, softplus)
}

/// Equal error rate of a score set, with scores oriented so positives are
/// high. Returns (eer, threshold).
///
/// FAR(t) counts negatives scoring >= t, FRR(t) counts positives scoring
/// < t; both are step functions that only change at observed score values,
/// so those are the candidate thresholds. Walking them in ascending order,
/// FAR - FRR is non-increasing. An exact tie returns at the first candidate
/// where it happens (ties resolve toward the lower threshold); otherwise
/// the rate is linearly interpolated between the operating points
/// bracketing the sign change.
pub fn compute_eer(pos: &[f64], neg: &[f64]) -> Result<(f64, f64)> {
    if pos.is_empty() {
        return Err(Error::EmptyScores { which: "positives" });
    }
    if neg.is_empty() {
        return Err(Error::EmptyScores { which: "negatives" });
    }
    if !pos.iter().chain(neg.iter()).all(|s| s.is_finite()) {
        return Err(Error::NonFiniteInput);
    }
    let mut ps = pos.to_vec();
    ps.sort_unstable_by(f64::total_cmp);
    let mut ns = neg.to_vec();
    ns.sort_unstable_by(f64::total_cmp);
    let (np, nn) = (ps.len() as f64, ns.len() as f64);

    let mut cands: Vec<f64> = ps.iter().chain(ns.iter()).copied().collect();
    cands.sort_unstable_by(f64::total_cmp);
    cands.dedup();

    let rates_at = |t: f64| -> (f64, f64) {
        let far = (ns.len() - ns.partition_point(|&s| s < t)) as f64 / nn;
        let frr = ps.partition_point(|&s| s < t) as f64 / np;
        (far, frr)
    };

    let (mut prev_far, mut prev_frr, mut prev_t) = (1.0, 0.0, f64::NEG_INFINITY);
    for &t in &cands {
        let (far, frr) = rates_at(t);
        if far <= frr {
            if (far - frr).abs() < 1e-15 {
                return Ok((far, t));
            }
            let d0 = prev_far - prev_frr;
            let d1 = far - frr;
            let alpha = d0 / (d0 - d1);
            let eer = prev_far + alpha * (far - prev_far);
            let thr = if prev_t.is_finite() { prev_t } else { t };
            return Ok((eer, thr));
        }
        (prev_far, prev_frr, prev_t) = (far, frr, t);
    }
    // FAR stayed above FRR at every candidate; past the top score FAR
    // drops to 0 and FRR is 1.
    let d0 = prev_far - prev_frr;
    let d1 = -1.0;
    let alpha = d0 / (d0 - d1);
    Ok((prev_far + alpha * (0.0 - prev_far), prev_t))
}

/// Labeled file lists for detector training: target-speaker natural speech
/// against everything else.
#[derive(Debug, Clone)]
pub struct DatasetSplit {
    pub positives: Vec<ManifestEntry>,
    pub negatives: Vec<ManifestEntry>,
}

impl DatasetSplit {
    pub fn new(positives: Vec<ManifestEntry>, negatives: Vec<ManifestEntry>) -> Result<Self> {
        if positives.is_empty() {
            return Err(Error::EmptySplit { which: "positives" });
        }
        if negatives.is_empty() {
            return Err(Error::EmptySplit { which: "negatives" });
        }
        Ok(DatasetSplit {
            positives,
            negatives,
        })
    }

    /// Positives are target-speaker natural clips; other speakers and fakes
    /// are negatives.
    pub fn from_manifest(entries: &[ManifestEntry]) -> Result<Self> {
        let positives = entries
            .iter()
            .filter(|e| e.label == Label::TargetNatural)
            .cloned()
            .collect();
        let negatives = entries
            .iter()
            .filter(|e| e.label != Label::TargetNatural)
            .cloned()
            .collect();
        DatasetSplit::new(positives, negatives)
    }
}

/// Detector training hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DetectorTrainConfig {
    pub channels: usize,
    pub n_stages: usize,
    pub blocks_per_stage: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    /// Fraction of each class held out for validation.
    pub val_fraction: f64,
    /// Frames per training crop; shorter clips are tiled.
    pub crop_frames: usize,
    pub optimizer: String,
    pub seed: u64,
}

impl Default for DetectorTrainConfig {
    fn default() -> Self {
        DetectorTrainConfig {
            channels: 64,
            n_stages: 4,
            blocks_per_stage: 2,
            epochs: 10,
            batch_size: 16,
            lr: 1e-3,
            val_fraction: 0.1,
            crop_frames: 400,
            optimizer: "adam".to_string(),
            seed: 0,
        }
    }
}

impl DetectorTrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        if self.crop_frames == 0 {
            return Err(Error::Config("crop_frames must be positive".into()));
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(Error::Config("lr must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.val_fraction) {
            return Err(Error::Config("val_fraction must be in [0, 1)".into()));
        }
        self.optimizer_kind()?;
        Ok(())
    }

    pub fn optimizer_kind(&self) -> Result<OptimizerKind> {
        match self.optimizer.as_str() {
            "adam" => Ok(OptimizerKind::Adam),
            "sgd" => Ok(OptimizerKind::Sgd),
            other => Err(Error::Config(format!("unknown optimizer {other:?}"))),
        }
    }
}

/// One line of the detector training log. Per-step entries carry the batch
/// loss; epoch-end entries carry the validation EER.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorLogEntry {
    pub epoch: usize,
    pub step: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub loss: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub val_eer: Option<f64>,
}

struct Clip {
    feats: Array2<f64>, // (dim, frames)
    target: f64,        // 1.0 positive, 0.0 negative
}

/// Train a detector on the split, returning the epoch checkpoint with the
/// best validation EER plus the training log. Deterministic per seed.
pub fn train_detector(
    split: &DatasetSplit,
    lfcc: &LfccConfig,
    cfg: &DetectorTrainConfig,
) -> Result<(DetectorModel, Vec<DetectorLogEntry>)> {
    cfg.validate()?;
    if split.positives.is_empty() {
        return Err(Error::EmptySplit { which: "positives" });
    }
    if split.negatives.is_empty() {
        return Err(Error::EmptySplit { which: "negatives" });
    }
    let extractor = LfccExtractor::new(lfcc.clone())?;
    let load_class = |entries: &[ManifestEntry], target: f64| -> Result<Vec<Clip>> {
        entries
            .iter()
            .map(|e| {
                let wave = crate::audio::read_wav(&e.path)?;
                let feats = extractor.extract(&wave)?;
                Ok(Clip {
                    feats: feats.values.t().to_owned(),
                    target,
                })
            })
            .collect()
    };
    let pos = load_class(&split.positives, 1.0)?;
    let neg = load_class(&split.negatives, 0.0)?;
    train_detector_on_clips(pos, neg, lfcc, cfg)
}

/// Training core on preloaded feature tensors; `train_detector` is the
/// file-reading wrapper.
fn train_detector_on_clips(
    pos: Vec<Clip>,
    neg: Vec<Clip>,
    lfcc: &LfccConfig,
    cfg: &DetectorTrainConfig,
) -> Result<(DetectorModel, Vec<DetectorLogEntry>)> {
    let arch = DetectorArch {
        in_dim: lfcc.feature_dim(),
        channels: cfg.channels,
        n_stages: cfg.n_stages,
        blocks_per_stage: cfg.blocks_per_stage,
    };
    let mut model = DetectorModel::init(arch.clone(), lfcc.clone(), cfg.seed)?;
    let mut opt = Optimizer::new(cfg.optimizer_kind()?);

    let split_class = |clips: Vec<Clip>, scope: &str| -> (Vec<Clip>, Vec<Clip>) {
        let n = clips.len();
        if n < 2 {
            // Degenerate class: the lone clip serves both roles.
            let dup: Vec<Clip> = clips
                .iter()
                .map(|c| Clip {
                    feats: c.feats.clone(),
                    target: c.target,
                })
                .collect();
            return (clips, dup);
        }
        let mut order: Vec<usize> = (0..n).collect();
        let mut rng = seeds::rng(seeds::derive_seed(cfg.seed, scope));
        order.shuffle(&mut rng);
        let n_val = ((n as f64 * cfg.val_fraction).round() as usize).clamp(1, n - 1);
        let mut clips: Vec<Option<Clip>> = clips.into_iter().map(Some).collect();
        let val = order[n - n_val..]
            .iter()
            .map(|&i| clips[i].take().expect("each index once"))
            .collect();
        let train = clips.into_iter().flatten().collect();
        (train, val)
    };
    let (train_pos, val_pos) = split_class(pos, "detector/split/pos");
    let (train_neg, val_neg) = split_class(neg, "detector/split/neg");
    let train: Vec<Clip> = train_pos.into_iter().chain(train_neg).collect();

    let mut log = Vec::new();
    let mut best: Option<(f64, ParamStore)> = None;
    let mut global_step: u64 = 0;
    let epoch_seed = seeds::derive_seed(cfg.seed, "detector/epoch");
    let crop_seed = seeds::derive_seed(cfg.seed, "detector/crop");

    for epoch in 0..cfg.epochs {
        let mut order: Vec<usize> = (0..train.len()).collect();
        order.shuffle(&mut seeds::rng(seeds::step_seed(epoch_seed, epoch as u64)));
        for batch in order.chunks(cfg.batch_size) {
            let mut crop_rng = seeds::rng(seeds::step_seed(crop_seed, global_step));
            let mut g = Graph::new();
            let bound = model.params.bind(&mut g);
            let mut losses = Vec::with_capacity(batch.len());
            for &idx in batch {
                let clip = &train[idx];
                let cropped = crop_or_tile(&clip.feats, cfg.crop_frames, &mut crop_rng);
                let x = g.constant(cropped);
                let logit = detector_logit_graph(&mut g, &bound, &arch, x);
                losses.push(bce_from_logit(&mut g, logit, clip.target));
            }
            let mut total = losses[0];
            for &l in &losses[1..] {
                total = g.add(total, l);
            }
            let loss = g.mul_scalar(total, 1.0 / batch.len() as f64);
            let loss_value = g.scalar_value(loss);
            if let Some(diag) = g.poisoned() {
                return Err(Error::NonFiniteLoss {
                    step: global_step,
                    diagnostic: diag.to_string(),
                });
            }
            let grads = g.backward(loss);
            let grad_map = bound.collect_grads(&model.params, &grads);
            opt.apply(&mut model.params, &grad_map, cfg.lr);
            log.push(DetectorLogEntry {
                epoch,
                step: global_step,
                loss: Some(loss_value),
                val_eer: None,
            });
            global_step += 1;
        }
        let val_eer = validation_eer(&model, &val_pos, &val_neg)?;
        log.push(DetectorLogEntry {
            epoch,
            step: global_step,
            loss: None,
            val_eer: Some(val_eer),
        });
        // Ties go to the later epoch: when the EER plateaus (commonly at
        // zero on easy validation splits) the extra epochs still sharpen
        // the score margins, which downstream consumers rely on.
        let improved = best.as_ref().map_or(true, |(b, _)| val_eer <= *b);
        if improved {
            best = Some((val_eer, model.params.clone()));
        }
    }

    if let Some((_, params)) = best {
        model.params = params;
    }
    Ok((model, log))
}

/// Scores every validation clip at full length and returns the EER.
fn validation_eer(model: &DetectorModel, val_pos: &[Clip], val_neg: &[Clip]) -> Result<f64> {
    let score_clip = |clip: &Clip| -> Result<f64> {
        let mut g = Graph::new();
        let bound = model.params.bind_frozen(&mut g);
        let x = g.constant(clip.feats.clone());
        let prob = detector_prob_graph(&mut g, &bound, &model.arch, x);
        if g.poisoned().is_some() {
            return Err(Error::NonFiniteInput);
        }
        Ok(g.scalar_value(prob))
    };
    let pos: Vec<f64> = val_pos.iter().map(score_clip).collect::<Result<_>>()?;
    let neg: Vec<f64> = val_neg.iter().map(score_clip).collect::<Result<_>>()?;
    let (eer, _) = compute_eer(&pos, &neg)?;
    Ok(eer)
}

/// Random crop to `crop` frames; clips shorter than the crop are tiled
/// cyclically (zero-padding would inject frames no real signal produces).
fn crop_or_tile(feats: &Array2<f64>, crop: usize, rng: &mut impl Rng) -> Array2<f64> {
    let (dim, frames) = feats.dim();
    if frames == crop {
        return feats.clone();
    }
    if frames > crop {
        let start = rng.gen_range(0..=frames - crop);
        return feats.slice(ndarray::s![.., start..start + crop]).to_owned();
    }
    Array2::from_shape_fn((dim, crop), |(r, c)| feats[[r, c % frames]])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::audio::Waveform;

    fn tiny_lfcc() -> LfccConfig {
        LfccConfig {
            sample_rate: 8_000,
            win_ms: 25.0,
            hop_ms: 10.0,
            n_filters: 20,
            n_coeffs: 8,
            with_deltas: false,
            log_floor: 1e-10,
        }
    }

    fn tiny_arch() -> DetectorArch {
        DetectorArch {
            in_dim: 8,
            channels: 6,
            n_stages: 2,
            blocks_per_stage: 1,
        }
    }

    #[test]
    fn eer_crossing_interpolates_between_candidates() {
        let pos = [0.9, 0.8, 0.4];
        let neg = [0.1, 0.3, 0.7];
        let (eer, thr) = compute_eer(&pos, &neg).unwrap();
        assert!((eer - 1.0 / 3.0).abs() < 1e-12, "eer {eer}");
        assert!((thr - 0.7).abs() < 1e-12, "threshold {thr}");
    }

    #[test]
    fn eer_perfect_separation_is_zero() {
        let (eer, _) = compute_eer(&[0.8, 0.9], &[0.1, 0.2]).unwrap();
        assert_eq!(eer, 0.0);
    }

    #[test]
    fn eer_identical_score_sets_is_half() {
        let (eer, _) = compute_eer(&[0.3, 0.7], &[0.3, 0.7]).unwrap();
        assert!((eer - 0.5).abs() < 1e-12);
    }

    #[test]
    fn eer_single_scores() {
        // Separable pair: at t=0.6 both rates are 0.
        let (eer, thr) = compute_eer(&[0.6], &[0.4]).unwrap();
        assert_eq!(eer, 0.0);
        assert!((thr - 0.6).abs() < 1e-12);
        // Inverted pair: at t=0.6 both rates are 1.
        let (eer, _) = compute_eer(&[0.4], &[0.6]).unwrap();
        assert_eq!(eer, 1.0);
    }

    #[test]
    fn eer_rejects_empty_and_non_finite() {
        match compute_eer(&[], &[0.1]) {
            Err(Error::EmptyScores { which: "positives" }) => {}
            other => panic!("unexpected {other:?}"),
        }
        match compute_eer(&[0.1], &[]) {
            Err(Error::EmptyScores { which: "negatives" }) => {}
            other => panic!("unexpected {other:?}"),
        }
        match compute_eer(&[f64::NAN], &[0.1]) {
            Err(Error::NonFiniteInput) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn untrained_model_scores_exactly_half() {
        let lfcc = tiny_lfcc();
        let model = DetectorModel::init(tiny_arch(), lfcc.clone(), 7).unwrap();
        let wave = Waveform::new(
            (0..4000).map(|i| (i as f64 * 0.01).sin() * 0.3).collect(),
            8_000,
        );
        let feats = LfccExtractor::new(lfcc).unwrap().extract(&wave).unwrap();
        let score = model.score(&feats).unwrap();
        assert_eq!(score, 0.5);
    }

    #[test]
    fn score_rejects_wrong_feature_dim() {
        let model = DetectorModel::init(tiny_arch(), tiny_lfcc(), 7).unwrap();
        let feats = FeatureMatrix {
            values: Array2::zeros((10, 5)),
        };
        match model.score(&feats) {
            Err(Error::DimensionMismatch {
                expected: 8,
                got: 5,
            }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn init_rejects_mismatched_feature_dim() {
        let mut arch = tiny_arch();
        arch.in_dim = 13;
        match DetectorModel::init(arch, tiny_lfcc(), 7) {
            Err(Error::DimensionMismatch { .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn split_from_manifest_partitions_labels() {
        let entries = vec![
            ManifestEntry::new("a.wav", Label::TargetNatural, "t"),
            ManifestEntry::new("b.wav", Label::OtherNatural, "o"),
            ManifestEntry::new("c.wav", Label::Fake, "t"),
        ];
        let split = DatasetSplit::from_manifest(&entries).unwrap();
        assert_eq!(split.positives.len(), 1);
        assert_eq!(split.negatives.len(), 2);
    }

    #[test]
    fn split_requires_both_classes() {
        let entries = vec![ManifestEntry::new("a.wav", Label::Fake, "t")];
        match DatasetSplit::from_manifest(&entries) {
            Err(Error::EmptySplit { which: "positives" }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn checkpoint_roundtrip_preserves_model() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("det.ckpt");
        let model = DetectorModel::init(tiny_arch(), tiny_lfcc(), 3).unwrap();
        model.save(&path).unwrap();
        let back = DetectorModel::load(&path).unwrap();
        assert_eq!(back.arch, model.arch);
        assert_eq!(back.params, model.params);
    }

    #[test]
    fn load_rejects_wrong_kind() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("other.ckpt");
        let ck = Checkpoint::new(serde_json::json!({"kind": "other"}));
        ck.save(&path).unwrap();
        match DetectorModel::load(&path) {
            Err(Error::CheckpointFormat { .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn crop_handles_all_length_relations() {
        let feats = Array2::from_shape_fn((2, 5), |(r, c)| (r * 5 + c) as f64);
        let mut rng = seeds::rng(1);
        assert_eq!(crop_or_tile(&feats, 5, &mut rng), feats);
        let cropped = crop_or_tile(&feats, 3, &mut rng);
        assert_eq!(cropped.dim(), (2, 3));
        let tiled = crop_or_tile(&feats, 8, &mut rng);
        assert_eq!(tiled.dim(), (2, 8));
        assert_eq!(tiled[[0, 5]], feats[[0, 0]]);
        assert_eq!(tiled[[1, 7]], feats[[1, 2]]);
    }

    #[test]
    fn param_count_scales_with_arch() {
        let small = tiny_arch();
        let big = DetectorArch::default();
        let small_n: usize = small.param_shapes().values().map(|(r, c)| r * c).sum();
        let big_n: usize = big.param_shapes().values().map(|(r, c)| r * c).sum();
        assert!(small_n < 5_000, "small {small_n}");
        assert!(big_n > 100_000, "default {big_n}");
    }
}
