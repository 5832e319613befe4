//! Adversarial training of the residual generator against a frozen
//! detector: the attack objective plus the three-part regularization that
//! keeps the modification slight.
//!
//! The loss on a processed clip s + P(s) is
//!
//!   L = lambda_A * L_A + lambda_R * (L_r + L_m + L_s)
//!
//! where L_A = 1 - D(F(s + P(s))) rewards fooling the detector, L_r is the
//! residual's peak-to-peak range, L_m its mean square, and L_s the mean
//! per-sample modification magnitude M_t = |P(s_t)| / (|P(s_t)| + |s_t| +
//! 0.0001). Range and the other terms are computed per utterance, then
//! averaged over the batch.

use std::io::Write as IoWrite;
use std::path::Path;

use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::audio::Waveform;
use crate::autodiff::{Graph, TensorId};
use crate::detector::{detector_prob_graph, DetectorModel};
use crate::error::{Error, Result};
use crate::lfcc::LfccExtractor;
use crate::manifest::{Label, ManifestEntry};
use crate::nn::{BoundParams, Checkpoint, Optimizer, OptimizerKind};
use crate::rgn::{residual_graph_padded, ResidualGenerator};
use crate::seeds;

/// Smoothing constant in the modification magnitude denominator. Fixed so
/// the metric stays comparable across runs.
pub const MT_EPS: f64 = 1e-4;

/// Floor inside the log-domain adversarial variant, keeping -ln(p) finite.
const LOG_ADV_FLOOR: f64 = 1e-12;

/// One training step's loss, decomposed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    #[serde(rename = "L_A")]
    pub l_a: f64,
    #[serde(rename = "L_r")]
    pub l_r: f64,
    #[serde(rename = "L_m")]
    pub l_m: f64,
    #[serde(rename = "L_s")]
    pub l_s: f64,
    /// L_r + L_m + L_s.
    #[serde(rename = "L_R")]
    pub l_reg: f64,
    /// lambda_A * L_A + lambda_R * L_R.
    #[serde(rename = "L")]
    pub total: f64,
    #[serde(rename = "lambda_A")]
    pub lambda_a: f64,
    #[serde(rename = "lambda_R")]
    pub lambda_r: f64,
}

impl LossBreakdown {
    /// Assemble from the four raw terms; the aggregates are derived here
    /// and nowhere else.
    pub fn assemble(l_a: f64, l_r: f64, l_m: f64, l_s: f64, lambda_a: f64, lambda_r: f64) -> Self {
        let l_reg = l_r + l_m + l_s;
        LossBreakdown {
            l_a,
            l_r,
            l_m,
            l_s,
            l_reg,
            total: lambda_a * l_a + lambda_r * l_reg,
            lambda_a,
            lambda_r,
        }
    }

    /// Largest violation of the two defining identities; zero for any
    /// breakdown built by [`LossBreakdown::assemble`], and a cheap honesty
    /// check on logged values.
    pub fn identity_residual(&self) -> f64 {
        let sum = (self.l_reg - (self.l_r + self.l_m + self.l_s)).abs();
        let comb = (self.total - (self.lambda_a * self.l_a + self.lambda_r * self.l_reg)).abs();
        sum.max(comb)
    }
}

/// Piecewise-constant learning-rate schedule: rate i applies to steps in
/// [boundary_{i-1}, boundary_i), with boundary_{-1} = 0 and the last rate
/// open-ended.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSchedule {
    pub learning_rates: Vec<f64>,
    pub decay_boundaries_steps: Vec<u64>,
    pub total_steps: u64,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for TrainSchedule {
    fn default() -> Self {
        TrainSchedule {
            learning_rates: vec![1e-4, 5e-5, 2.5e-5, 1.25e-5, 6.25e-6],
            decay_boundaries_steps: vec![5_000, 10_000, 30_000, 50_000],
            total_steps: 60_000,
            batch_size: 8,
            seed: 0,
        }
    }
}

impl TrainSchedule {
    pub fn validate(&self) -> Result<()> {
        if self.learning_rates.len() != self.decay_boundaries_steps.len() + 1 {
            return Err(Error::Config(format!(
                "need one more learning rate ({}) than decay boundaries ({})",
                self.learning_rates.len(),
                self.decay_boundaries_steps.len()
            )));
        }
        if !self
            .decay_boundaries_steps
            .windows(2)
            .all(|w| w[0] < w[1])
        {
            return Err(Error::Config(
                "decay boundaries must be strictly increasing".into(),
            ));
        }
        if self
            .learning_rates
            .iter()
            .any(|lr| !(lr.is_finite() && *lr > 0.0))
        {
            return Err(Error::Config("learning rates must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        Ok(())
    }

    pub fn lr_at(&self, step: u64) -> f64 {
        let idx = self.decay_boundaries_steps.partition_point(|&b| b <= step);
        self.learning_rates[idx]
    }
}

/// Everything the attack trainer needs beyond the models and data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdvTrainConfig {
    pub schedule: TrainSchedule,
    pub lambda_a: f64,
    pub lambda_r: f64,
    /// Training crop length; full utterances are used at apply time.
    pub crop_seconds: f64,
    /// Replace 1 - D with -ln(D): steeper gradients when the detector is
    /// confident. Off by default; the reported L_A stays in [0, 1] either
    /// way because the log form only reshapes the training signal.
    pub log_domain_adversarial: bool,
    pub optimizer: String,
    /// Persist training state every N steps (0 = only at the end).
    pub checkpoint_every: u64,
}

impl Default for AdvTrainConfig {
    fn default() -> Self {
        AdvTrainConfig {
            schedule: TrainSchedule::default(),
            lambda_a: 1.0,
            lambda_r: 20.0,
            crop_seconds: 4.0,
            log_domain_adversarial: false,
            optimizer: "adam".to_string(),
            checkpoint_every: 10_000,
        }
    }
}

impl AdvTrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.schedule.validate()?;
        if !(self.lambda_a.is_finite() && self.lambda_a >= 0.0) {
            return Err(Error::Config("lambda_a must be >= 0".into()));
        }
        if !(self.lambda_r.is_finite() && self.lambda_r >= 0.0) {
            return Err(Error::Config("lambda_r must be >= 0".into()));
        }
        if !(self.crop_seconds.is_finite() && self.crop_seconds > 0.0) {
            return Err(Error::Config("crop_seconds must be positive".into()));
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

/// One line of the attack training log.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainLogEntry {
    pub step: u64,
    pub lr: f64,
    #[serde(rename = "L_A")]
    pub l_a: f64,
    #[serde(rename = "L_r")]
    pub l_r: f64,
    #[serde(rename = "L_m")]
    pub l_m: f64,
    #[serde(rename = "L_s")]
    pub l_s: f64,
    #[serde(rename = "L")]
    pub l: f64,
}

impl TrainLogEntry {
    fn from_breakdown(step: u64, lr: f64, b: &LossBreakdown) -> Self {
        TrainLogEntry {
            step,
            lr,
            l_a: b.l_a,
            l_r: b.l_r,
            l_m: b.l_m,
            l_s: b.l_s,
            l: b.total,
        }
    }
}

/// 1 - D(F(processed)): how far the detector is from calling the clip
/// genuine. Scalar convenience over the differentiable graph path.
pub fn adversarial_loss(det: &DetectorModel, processed: &Waveform) -> Result<f64> {
    Ok(1.0 - det.score_waveform(processed)?)
}

/// Per-sample modification magnitude M_t, each in [0, 1).
pub fn modification_magnitude(residual: &Waveform, original: &Waveform) -> Result<Vec<f64>> {
    if residual.len() != original.len() {
        return Err(Error::LengthMismatch {
            left: residual.len(),
            right: original.len(),
        });
    }
    Ok(residual
        .samples()
        .iter()
        .zip(original.samples())
        .map(|(p, s)| p.abs() / (p.abs() + s.abs() + MT_EPS))
        .collect())
}

/// (L_r, L_m, L_s) for one utterance: residual range, residual mean
/// square, mean modification magnitude.
pub fn regularization_loss(residual: &Waveform, original: &Waveform) -> Result<(f64, f64, f64)> {
    if residual.is_empty() {
        return Err(Error::ShortInput { needed: 1, got: 0 });
    }
    let m = modification_magnitude(residual, original)?;
    let r = residual.samples();
    let max = r.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = r.iter().copied().fold(f64::INFINITY, f64::min);
    let l_m = r.iter().map(|v| v * v).sum::<f64>() / r.len() as f64;
    let l_s = m.iter().sum::<f64>() / m.len() as f64;
    Ok((max - min, l_m, l_s))
}

/// Full loss on one utterance given an already-generated residual. The
/// detector sees s + P(s) unclipped; clipping happens only when audio is
/// written out.
pub fn total_loss(
    det: &DetectorModel,
    original: &Waveform,
    residual: &Waveform,
    lambda_a: f64,
    lambda_r: f64,
) -> Result<LossBreakdown> {
    let (l_r, l_m, l_s) = regularization_loss(residual, original)?;
    let processed = Waveform::new(
        original
            .samples()
            .iter()
            .zip(residual.samples())
            .map(|(s, p)| s + p)
            .collect(),
        original.sample_rate(),
    );
    let l_a = adversarial_loss(det, &processed)?;
    Ok(LossBreakdown::assemble(
        l_a, l_r, l_m, l_s, lambda_a, lambda_r,
    ))
}

/// Scalar ids of the per-batch loss terms inside a training graph.
struct GraphLoss {
    total: TensorId,
    l_a: TensorId,
    l_r: TensorId,
    l_m: TensorId,
    l_s: TensorId,
}

/// Build the differentiable batch loss: for every crop, run the generator,
/// form s + P(s), push it through features and the frozen detector, and
/// accumulate all four terms, each averaged over the batch.
fn batch_loss_graph(
    g: &mut Graph,
    gen_params: &BoundParams,
    gen: &ResidualGenerator,
    det_params: &BoundParams,
    det: &DetectorModel,
    extractor: &LfccExtractor,
    crops: &[Array2<f64>],
    cfg: &AdvTrainConfig,
) -> GraphLoss {
    let mut l_a_terms = Vec::with_capacity(crops.len());
    let mut l_r_terms = Vec::with_capacity(crops.len());
    let mut l_m_terms = Vec::with_capacity(crops.len());
    let mut l_s_terms = Vec::with_capacity(crops.len());
    for crop in crops {
        let signal = g.constant(crop.clone());
        let residual = residual_graph_padded(g, gen_params, &gen.arch, signal);
        let processed = g.add(signal, residual);
        let feats = extractor.build_graph(g, processed);
        let prob = detector_prob_graph(g, det_params, &det.arch, feats);
        let l_a = if cfg.log_domain_adversarial {
            let safe = g.add_scalar(prob, LOG_ADV_FLOOR);
            let ln = g.ln(safe);
            g.neg(ln)
        } else {
            let neg = g.neg(prob);
            g.add_scalar(neg, 1.0)
        };
        l_a_terms.push(l_a);

        let rmax = g.max_all(residual);
        let rmin = g.min_all(residual);
        l_r_terms.push(g.sub(rmax, rmin));
        let sq = g.square(residual);
        l_m_terms.push(g.mean_all(sq));

        let abs_r = g.abs(residual);
        let abs_s = g.abs(signal);
        let sum = g.add(abs_r, abs_s);
        let denom = g.add_scalar(sum, MT_EPS);
        let m = g.div(abs_r, denom);
        l_s_terms.push(g.mean_all(m));
    }
    let mean_of = |g: &mut Graph, terms: &[TensorId]| -> TensorId {
        let mut acc = terms[0];
        for &t in &terms[1..] {
            acc = g.add(acc, t);
        }
        g.mul_scalar(acc, 1.0 / terms.len() as f64)
    };
    let l_a = mean_of(g, &l_a_terms);
    let l_r = mean_of(g, &l_r_terms);
    let l_m = mean_of(g, &l_m_terms);
    let l_s = mean_of(g, &l_s_terms);
    let reg = {
        let rm = g.add(l_r, l_m);
        g.add(rm, l_s)
    };
    let wa = g.mul_scalar(l_a, cfg.lambda_a);
    let wr = g.mul_scalar(reg, cfg.lambda_r);
    let total = g.add(wa, wr);
    GraphLoss {
        total,
        l_a,
        l_r,
        l_m,
        l_s,
    }
}

/// Fake clips from a manifest, validated against the detector's sample
/// rate and minimum analyzable length.
pub fn load_fake_corpus(
    entries: &[ManifestEntry],
    expected_rate: u32,
    min_len: usize,
) -> Result<Vec<Waveform>> {
    let fakes: Vec<&ManifestEntry> = entries.iter().filter(|e| e.label == Label::Fake).collect();
    if fakes.is_empty() {
        return Err(Error::EmptyManifest { which: "fakes" });
    }
    fakes
        .iter()
        .map(|e| {
            let w = crate::audio::read_wav(&e.path)?;
            if w.sample_rate() != expected_rate {
                return Err(Error::SampleRateMismatch {
                    left: w.sample_rate(),
                    right: expected_rate,
                });
            }
            if w.len() < min_len {
                return Err(Error::ShortInput {
                    needed: min_len,
                    got: w.len(),
                });
            }
            Ok(w)
        })
        .collect()
}

/// Serialized training state: generator, optimizer moments, next step.
pub struct TrainState {
    pub gen: ResidualGenerator,
    pub opt: Optimizer,
    pub next_step: u64,
}

pub fn save_train_state(path: impl AsRef<Path>, state: &TrainState) -> Result<()> {
    let header = serde_json::json!({
        "kind": "rgn_train_state",
        "arch": state.gen.arch,
        "next_step": state.next_step,
        "optimizer_steps": state.opt.steps_taken(),
    });
    let mut ck = Checkpoint::new(header);
    ck.add_section("param", &state.gen.params);
    ck.add_tensors(state.opt.state_tensors());
    ck.save(path)
}

pub fn load_train_state(path: impl AsRef<Path>, kind: OptimizerKind) -> Result<TrainState> {
    let path = path.as_ref();
    let ck = Checkpoint::load(path)?;
    let bad = |reason: String| Error::CheckpointFormat {
        path: path.to_path_buf(),
        reason,
    };
    if ck.header["kind"] != "rgn_train_state" {
        return Err(bad(format!(
            "expected a training-state checkpoint, found kind {}",
            ck.header["kind"]
        )));
    }
    let arch = serde_json::from_value(ck.header["arch"].clone())
        .map_err(|e| bad(format!("arch: {e}")))?;
    let next_step = ck.header["next_step"]
        .as_u64()
        .ok_or_else(|| bad("missing next_step".into()))?;
    let opt_steps = ck.header["optimizer_steps"]
        .as_u64()
        .ok_or_else(|| bad("missing optimizer_steps".into()))?;
    let gen = ResidualGenerator {
        arch,
        params: ck.section("param"),
    };
    // Optimizer moments were stored with their "adam_m/" / "adam_v/"
    // prefixes intact; restore() strips them itself.
    let opt_state: std::collections::BTreeMap<String, Array2<f64>> = ck
        .tensors
        .iter()
        .filter(|(k, _)| k.starts_with("adam_m/") || k.starts_with("adam_v/"))
        .map(|(k, v)| (k.clone(), v.clone()))
        .collect();
    let opt = Optimizer::restore(kind, opt_steps, &opt_state);
    Ok(TrainState {
        gen,
        opt,
        next_step,
    })
}

/// Train the generator against a frozen detector. Returns the trained
/// generator and the per-step log. When `state_dir` is given, training
/// state lands in `state.ckpt` (every `checkpoint_every` steps, at the
/// end, and at the last good step before a non-finite abort) and log lines
/// append to `train_log.jsonl`.
pub fn train_rgn(
    gen: ResidualGenerator,
    det: &DetectorModel,
    corpus: &[Waveform],
    cfg: &AdvTrainConfig,
    state_dir: Option<&Path>,
) -> Result<(ResidualGenerator, Vec<TrainLogEntry>)> {
    let opt = Optimizer::new(cfg.optimizer_kind()?);
    let state = TrainState {
        gen,
        opt,
        next_step: 0,
    };
    run_training(state, det, corpus, cfg, state_dir)
}

/// Continue a run from saved state; with the same seed and corpus the
/// result is bit-identical to the uninterrupted run because batches and
/// crops derive from (seed, step) alone.
pub fn resume_train_rgn(
    state_path: &Path,
    det: &DetectorModel,
    corpus: &[Waveform],
    cfg: &AdvTrainConfig,
    state_dir: Option<&Path>,
) -> Result<(ResidualGenerator, Vec<TrainLogEntry>)> {
    let state = load_train_state(state_path, cfg.optimizer_kind()?)?;
    run_training(state, det, corpus, cfg, state_dir)
}

fn run_training(
    mut state: TrainState,
    det: &DetectorModel,
    corpus: &[Waveform],
    cfg: &AdvTrainConfig,
    state_dir: Option<&Path>,
) -> Result<(ResidualGenerator, Vec<TrainLogEntry>)> {
    cfg.validate()?;
    state.gen.arch.validate()?;
    if corpus.is_empty() {
        return Err(Error::EmptyManifest { which: "fakes" });
    }
    let rate = det.lfcc.sample_rate;
    for w in corpus {
        if w.sample_rate() != rate {
            return Err(Error::SampleRateMismatch {
                left: w.sample_rate(),
                right: rate,
            });
        }
        if w.len() < det.lfcc.win_len() {
            return Err(Error::ShortInput {
                needed: det.lfcc.win_len(),
                got: w.len(),
            });
        }
    }
    let crop_len = ((cfg.crop_seconds * rate as f64).round() as usize).max(det.lfcc.win_len());
    let extractor = LfccExtractor::new(det.lfcc.clone())?;
    let batch_seed = seeds::derive_seed(cfg.schedule.seed, "adv/batch");

    let mut log = Vec::new();
    let mut log_file = match state_dir {
        Some(dir) => {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
            let p = dir.join("train_log.jsonl");
            Some(
                std::fs::OpenOptions::new()
                    .create(true)
                    .append(true)
                    .open(&p)
                    .map_err(|e| Error::io(&p, e))?,
            )
        }
        None => None,
    };
    let state_path = state_dir.map(|d| d.join("state.ckpt"));
    let save_state = |state: &TrainState| -> Result<()> {
        if let Some(p) = &state_path {
            save_train_state(p, state)?;
        }
        Ok(())
    };

    for step in state.next_step..cfg.schedule.total_steps {
        let lr = cfg.schedule.lr_at(step);
        let mut rng = seeds::rng(seeds::step_seed(batch_seed, step));
        let crops: Vec<Array2<f64>> = (0..cfg.schedule.batch_size)
            .map(|_| {
                let clip = &corpus[rng.gen_range(0..corpus.len())];
                let len = clip.len().min(crop_len);
                let start = if clip.len() > len {
                    rng.gen_range(0..=clip.len() - len)
                } else {
                    0
                };
                Array2::from_shape_vec((1, len), clip.samples()[start..start + len].to_vec())
                    .expect("crop shape")
            })
            .collect();

        let mut g = Graph::new();
        let gen_bound = state.gen.params.bind(&mut g);
        let det_bound = det.params.bind_frozen(&mut g);
        let loss = batch_loss_graph(
            &mut g,
            &gen_bound,
            &state.gen,
            &det_bound,
            det,
            &extractor,
            &crops,
            cfg,
        );
        if let Some(diag) = g.poisoned() {
            // Parameters have not been touched this step; persist them as
            // the last good state before reporting.
            state.next_step = step;
            save_state(&state)?;
            return Err(Error::NonFiniteLoss {
                step,
                diagnostic: diag.to_string(),
            });
        }
        let breakdown = LossBreakdown::assemble(
            g.scalar_value(loss.l_a),
            g.scalar_value(loss.l_r),
            g.scalar_value(loss.l_m),
            g.scalar_value(loss.l_s),
            cfg.lambda_a,
            cfg.lambda_r,
        );
        let grads = g.backward(loss.total);
        let grad_map = gen_bound.collect_grads(&state.gen.params, &grads);
        state.opt.apply(&mut state.gen.params, &grad_map, lr);
        state.next_step = step + 1;

        let entry = TrainLogEntry::from_breakdown(step, lr, &breakdown);
        if let Some(f) = &mut log_file {
            let line = serde_json::to_string(&entry).expect("log entry serializes");
            writeln!(f, "{line}").map_err(|e| {
                Error::io(state_dir.expect("log file implies state dir"), e)
            })?;
        }
        log.push(entry);

        if cfg.checkpoint_every > 0 && state.next_step % cfg.checkpoint_every == 0 {
            save_state(&state)?;
        }
    }
    save_state(&state)?;
    Ok((state.gen, log))
}

/// One processed file in the batch-apply log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApplyLogEntry {
    /// Path of the processed output file.
    pub path: std::path::PathBuf,
    #[serde(rename = "mean_Mt")]
    pub mean_mt: f64,
    /// Largest absolute residual sample before clipping.
    pub max_residual: f64,
}

/// Run the generator over every manifest entry, writing processed WAVs
/// under `out_root` with the same relative layout the inputs have under
/// `in_root`. Also writes `apply_log.jsonl` (one [`ApplyLogEntry`] per
/// file) and `manifest.jsonl` (the input manifest re-pointed at the
/// processed files) into `out_root`.
///
/// Files process in parallel; outputs and log order follow the manifest.
pub fn batch_apply(
    gen: &ResidualGenerator,
    entries: &[ManifestEntry],
    in_root: &Path,
    out_root: &Path,
) -> Result<Vec<ApplyLogEntry>> {
    use rayon::prelude::*;

    if entries.is_empty() {
        return Err(Error::EmptyManifest { which: "apply" });
    }
    let planned: Result<Vec<std::path::PathBuf>> = entries
        .iter()
        .map(|e| {
            let rel = e.path.strip_prefix(in_root).map_err(|_| {
                Error::Config(format!(
                    "manifest path {} is not under input root {}",
                    e.path.display(),
                    in_root.display()
                ))
            })?;
            Ok(out_root.join(rel))
        })
        .collect();
    let planned = planned?;

    let results: Result<Vec<(ApplyLogEntry, ManifestEntry)>> = entries
        .par_iter()
        .zip(planned.par_iter())
        .map(|(entry, out_path)| {
            let original = crate::audio::read_wav(&entry.path)?;
            let residual = crate::rgn::generate_residual(gen, &original)?;
            let processed = crate::rgn::apply(gen, &original)?;
            if let Some(parent) = out_path.parent() {
                std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
            }
            crate::audio::write_wav(&processed, out_path)?;
            let m = modification_magnitude(&residual, &original)?;
            let mean_mt = m.iter().sum::<f64>() / m.len() as f64;
            let max_residual = residual
                .samples()
                .iter()
                .fold(0.0f64, |acc, &r| acc.max(r.abs()));
            let log = ApplyLogEntry {
                path: out_path.clone(),
                mean_mt,
                max_residual,
            };
            let mut out_entry = entry.clone();
            out_entry.path = out_path.clone();
            Ok((log, out_entry))
        })
        .collect();
    let (logs, out_entries): (Vec<_>, Vec<_>) = results?.into_iter().unzip();

    let log_path = out_root.join("apply_log.jsonl");
    let mut f = std::fs::File::create(&log_path).map_err(|e| Error::io(&log_path, e))?;
    for entry in &logs {
        let line = serde_json::to_string(entry).expect("log entry serializes");
        writeln!(f, "{line}").map_err(|e| Error::io(&log_path, e))?;
    }
    crate::manifest::write_manifest(out_root.join("manifest.jsonl"), &out_entries)?;
    Ok(logs)
}
