//! Evaluation and reporting: deception success rate against one or more
//! detectors, EER before and after post-processing, modification-magnitude
//! statistics split by speech activity, and spectrogram-difference
//! artifacts.

use std::io::Write as IoWrite;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use rustfft::{num_complex::Complex, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::adv_train::modification_magnitude;
use crate::audio::{frame_energies, Waveform};
use crate::detector::{compute_eer, DetectorModel};
use crate::error::{Error, Result};
use crate::manifest::{Label, ManifestEntry};
use crate::nn::Checkpoint;

pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// Anything that can score a waveform as genuine-vs-fake. The deception
/// rate evaluator treats detectors as black boxes behind this trait so
/// transfer targets can be plugged in.
pub trait Scorer {
    fn name(&self) -> String;
    /// Probability-like score, higher = more genuine.
    fn score(&self, wave: &Waveform) -> Result<f64>;
}

impl Scorer for DetectorModel {
    fn name(&self) -> String {
        format!(
            "detector_c{}s{}",
            self.arch.channels, self.arch.n_stages
        )
    }

    fn score(&self, wave: &Waveform) -> Result<f64> {
        self.score_waveform(wave)
    }
}

/// One scored file in the per-file table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRow {
    pub path: PathBuf,
    pub label: Label,
    /// One score per detector, in the evaluator's detector order.
    pub scores: Vec<f64>,
}

/// Deception success rate fragment: W wrong detections over A evaluated
/// fakes times N detectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DsrReport {
    pub dsr: f64,
    #[serde(rename = "W")]
    pub wrong: u64,
    #[serde(rename = "A")]
    pub evaluated: u64,
    #[serde(rename = "N")]
    pub n_detectors: u64,
    pub detector_names: Vec<String>,
    /// Per-detector acceptance thresholds at each one's own EER point.
    pub thresholds: Vec<f64>,
    /// Files dropped because loading or scoring failed; these reduce A.
    pub excluded: Vec<PathBuf>,
    /// Fake-file scores backing the counts above.
    pub table: Vec<ScoreRow>,
}

impl DsrReport {
    /// Recount W from the score table; equals `wrong` by construction and
    /// is re-checked on every run.
    pub fn recount_wrong(&self) -> u64 {
        self.table
            .iter()
            .map(|row| {
                row.scores
                    .iter()
                    .zip(&self.thresholds)
                    .filter(|(s, t)| *s >= *t)
                    .count() as u64
            })
            .sum()
    }
}

fn score_all(
    scorers: &[&dyn Scorer],
    entries: &[ManifestEntry],
    excluded: &mut Vec<PathBuf>,
) -> Vec<ScoreRow> {
    entries
        .iter()
        .filter_map(|e| {
            let scores: Result<Vec<f64>> = crate::audio::read_wav(&e.path).and_then(|w| {
                scorers.iter().map(|s| s.score(&w)).collect()
            });
            match scores {
                Ok(scores) => Some(ScoreRow {
                    path: e.path.clone(),
                    label: e.label,
                    scores,
                }),
                Err(_) => {
                    excluded.push(e.path.clone());
                    None
                }
            }
        })
        .collect()
}

/// Deception success rate of a fake set against N detectors.
///
/// Genuine clips only calibrate each detector's threshold at its own EER
/// operating point; a fake counts as a wrong detection when it scores at
/// or above that threshold (accepted as genuine). Files that fail to load
/// or score are excluded and shrink A.
pub fn compute_dsr(
    scorers: &[&dyn Scorer],
    fakes: &[ManifestEntry],
    genuines: &[ManifestEntry],
) -> Result<DsrReport> {
    if scorers.is_empty() {
        return Err(Error::EmptyScores {
            which: "detectors",
        });
    }
    if fakes.is_empty() {
        return Err(Error::EmptyManifest { which: "fakes" });
    }
    if genuines.is_empty() {
        return Err(Error::EmptyManifest { which: "genuines" });
    }
    let mut excluded = Vec::new();
    let genuine_rows = score_all(scorers, genuines, &mut excluded);
    let fake_rows = score_all(scorers, fakes, &mut excluded);
    if genuine_rows.is_empty() {
        return Err(Error::EmptyScores { which: "genuines" });
    }
    if fake_rows.is_empty() {
        return Err(Error::EmptyScores { which: "fakes" });
    }

    let mut thresholds = Vec::with_capacity(scorers.len());
    let mut wrong = 0u64;
    for d in 0..scorers.len() {
        let pos: Vec<f64> = genuine_rows.iter().map(|r| r.scores[d]).collect();
        let neg: Vec<f64> = fake_rows.iter().map(|r| r.scores[d]).collect();
        let (_, threshold) = compute_eer(&pos, &neg)?;
        wrong += neg.iter().filter(|&&s| s >= threshold).count() as u64;
        thresholds.push(threshold);
    }
    let evaluated = fake_rows.len() as u64;
    let n_detectors = scorers.len() as u64;
    let report = DsrReport {
        dsr: wrong as f64 / (evaluated * n_detectors) as f64,
        wrong,
        evaluated,
        n_detectors,
        detector_names: scorers.iter().map(|s| s.name()).collect(),
        thresholds,
        excluded,
        table: fake_rows,
    };
    assert_eq!(
        report.recount_wrong(),
        report.wrong,
        "score table disagrees with the wrong-detection count"
    );
    Ok(report)
}

/// EER against the same genuine set before and after post-processing.
/// Genuines are the positives; each fake set supplies the negatives.
pub fn eer_delta(
    scorer: &dyn Scorer,
    genuines: &[ManifestEntry],
    fakes_before: &[ManifestEntry],
    fakes_after: &[ManifestEntry],
) -> Result<(f64, f64)> {
    let score_set = |entries: &[ManifestEntry], which: &'static str| -> Result<Vec<f64>> {
        if entries.is_empty() {
            return Err(Error::EmptyManifest { which });
        }
        entries
            .iter()
            .map(|e| scorer.score(&crate::audio::read_wav(&e.path)?))
            .collect()
    };
    let pos = score_set(genuines, "genuines")?;
    let before = score_set(fakes_before, "fakes")?;
    let after = score_set(fakes_after, "fakes")?;
    let (eer_before, _) = compute_eer(&pos, &before)?;
    let (eer_after, _) = compute_eer(&pos, &after)?;
    Ok((eer_before, eer_after))
}

/// Frame length for the speech/silence energy gate: 25 ms, non-overlapping
/// so each sample lands in exactly one class.
const MT_VAD_FRAME_MS: f64 = 25.0;

/// Mean modification magnitude over speech frames and over silence frames.
/// Frames are classified on the original signal by short-time energy
/// relative to the loudest frame; a class with no frames is reported as
/// absent rather than zero.
pub fn silence_speech_mt(
    original: &Waveform,
    residual: &Waveform,
    vad_threshold_db: f64,
) -> Result<(Option<f64>, Option<f64>)> {
    let m = modification_magnitude(residual, original)?;
    let frame_len =
        ((MT_VAD_FRAME_MS / 1000.0) * original.sample_rate() as f64).round() as usize;
    let frame_len = frame_len.max(1);
    let energies = frame_energies(original.samples(), frame_len, frame_len);
    if energies.is_empty() {
        return Ok((None, None));
    }
    let peak = energies.iter().cloned().fold(f64::MIN, f64::max);
    let threshold = peak * 10f64.powf(-vad_threshold_db.abs() / 10.0);
    let mut sums = [0.0f64; 2]; // [speech, silence]
    let mut counts = [0usize; 2];
    for (f, &e) in energies.iter().enumerate() {
        let class = if e >= threshold { 0 } else { 1 };
        let start = f * frame_len;
        let end = (start + frame_len).min(m.len());
        for &v in &m[start..end] {
            sums[class] += v;
            counts[class] += 1;
        }
    }
    // Samples past the last whole frame join the final frame's class.
    let tail_start = energies.len() * frame_len;
    if tail_start < m.len() {
        let class = if *energies.last().expect("nonempty") >= threshold {
            0
        } else {
            1
        };
        for &v in &m[tail_start..] {
            sums[class] += v;
            counts[class] += 1;
        }
    }
    let mean = |i: usize| (counts[i] > 0).then(|| sums[i] / counts[i] as f64);
    Ok((mean(0), mean(1)))
}

const SPEC_WIN: usize = 512;
const SPEC_FLOOR_DB: f64 = -80.0;

/// Log-magnitude spectrogram matrix (bins, frames) in dB relative to the
/// clip's peak bin, floored at -80 dB. 512-point analysis, 10 ms hop.
fn log_spectrogram(w: &Waveform) -> Result<Array2<f64>> {
    let hop = ((w.sample_rate() as f64) * 0.010).round() as usize;
    let samples = w.samples();
    if samples.len() < SPEC_WIN {
        return Err(Error::ShortInput {
            needed: SPEC_WIN,
            got: samples.len(),
        });
    }
    let n_frames = (samples.len() - SPEC_WIN) / hop + 1;
    let n_bins = SPEC_WIN / 2 + 1;
    let window: Vec<f64> = (0..SPEC_WIN)
        .map(|n| {
            0.54 - 0.46 * (2.0 * std::f64::consts::PI * n as f64 / (SPEC_WIN - 1) as f64).cos()
        })
        .collect();
    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft_forward(SPEC_WIN);
    let mut power = Array2::zeros((n_bins, n_frames));
    for f in 0..n_frames {
        let mut buf: Vec<Complex<f64>> = (0..SPEC_WIN)
            .map(|j| Complex::new(samples[f * hop + j] * window[j], 0.0))
            .collect();
        fft.process(&mut buf);
        for b in 0..n_bins {
            power[[b, f]] = buf[b].norm_sqr();
        }
    }
    let peak = power.iter().cloned().fold(0.0f64, f64::max);
    let to_db = |p: f64| {
        if peak <= 0.0 || p <= 0.0 {
            SPEC_FLOOR_DB
        } else {
            (10.0 * (p / peak).log10()).max(SPEC_FLOOR_DB)
        }
    };
    Ok(power.mapv(to_db))
}

/// Artifact paths and summary numbers from [`spectrogram_diff`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpectrogramDiff {
    pub png: PathBuf,
    pub bands_json: PathBuf,
    pub matrix: PathBuf,
    pub bins: usize,
    pub frames: usize,
    /// Mean |before - after| in dB per frequency band, low bands first.
    pub band_mean_abs_diff_db: Vec<f64>,
}

/// Render before/after/difference spectrograms side by side (stacked
/// panels in one PNG), dump both raw matrices, and summarize the per-band
/// log-spectral distance as JSON. `base` is the output path without
/// extension.
pub fn spectrogram_diff(
    before: &Waveform,
    after: &Waveform,
    base: &Path,
) -> Result<SpectrogramDiff> {
    if before.len() != after.len() {
        return Err(Error::LengthMismatch {
            left: before.len(),
            right: after.len(),
        });
    }
    if before.sample_rate() != after.sample_rate() {
        return Err(Error::SampleRateMismatch {
            left: before.sample_rate(),
            right: after.sample_rate(),
        });
    }
    let b = log_spectrogram(before)?;
    let a = log_spectrogram(after)?;
    let (bins, frames) = b.dim();
    let diff = &a - &b;
    let band_mean_abs_diff_db: Vec<f64> = (0..bins)
        .map(|band| diff.row(band).iter().map(|d| d.abs()).sum::<f64>() / frames as f64)
        .collect();

    // One grayscale image, three panels: before, after, |difference|.
    // Low frequencies render at the bottom of each panel.
    let sep = 2usize;
    let height = bins * 3 + sep * 2;
    let mut img = image::GrayImage::new(frames as u32, height as u32);
    let db_to_u8 = |db: f64| (((db - SPEC_FLOOR_DB) / -SPEC_FLOOR_DB) * 255.0) as u8;
    let diff_to_u8 = |d: f64| ((d.abs() / -SPEC_FLOOR_DB).min(1.0) * 255.0) as u8;
    for f in 0..frames {
        for bin in 0..bins {
            let y_in_panel = (bins - 1 - bin) as u32;
            img.put_pixel(
                f as u32,
                y_in_panel,
                image::Luma([db_to_u8(b[[bin, f]])]),
            );
            img.put_pixel(
                f as u32,
                y_in_panel + (bins + sep) as u32,
                image::Luma([db_to_u8(a[[bin, f]])]),
            );
            img.put_pixel(
                f as u32,
                y_in_panel + (2 * (bins + sep)) as u32,
                image::Luma([diff_to_u8(diff[[bin, f]])]),
            );
        }
    }
    for y in [bins, 2 * bins + sep] {
        for off in 0..sep {
            for f in 0..frames {
                img.put_pixel(f as u32, (y + off) as u32, image::Luma([255]));
            }
        }
    }
    let png = base.with_extension("png");
    img.save(&png).map_err(|e| Error::Io {
        path: png.clone(),
        source: std::io::Error::other(e.to_string()),
    })?;

    let bands_json = base.with_extension("bands.json");
    let summary = serde_json::json!({
        "schema_version": REPORT_SCHEMA_VERSION,
        "window": SPEC_WIN,
        "hop_ms": 10.0,
        "floor_db": SPEC_FLOOR_DB,
        "bins": bins,
        "frames": frames,
        "band_mean_abs_diff_db": band_mean_abs_diff_db,
    });
    std::fs::write(
        &bands_json,
        serde_json::to_string_pretty(&summary).expect("summary serializes"),
    )
    .map_err(|e| Error::io(&bands_json, e))?;

    // Raw matrices ride in the same archive container as model files, so
    // the image can be regenerated exactly.
    let matrix = base.with_extension("mat");
    let mut ck = Checkpoint::new(serde_json::json!({
        "kind": "spectrogram_diff",
        "window": SPEC_WIN,
        "floor_db": SPEC_FLOOR_DB,
    }));
    ck.add_tensors(
        [
            ("before_db".to_string(), b),
            ("after_db".to_string(), a),
        ]
        .into_iter()
        .collect(),
    );
    ck.save(&matrix)?;

    Ok(SpectrogramDiff {
        png,
        bands_json,
        matrix,
        bins,
        frames,
        band_mean_abs_diff_db,
    })
}

/// Full evaluation summary, serialized as JSON next to the CSV table.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    pub schema_version: u32,
    pub eer_before: f64,
    pub eer_after: f64,
    pub dsr: f64,
    #[serde(rename = "W")]
    pub wrong: u64,
    #[serde(rename = "A")]
    pub evaluated: u64,
    #[serde(rename = "N")]
    pub n_detectors: u64,
    /// Absent when the corpus had no frames of that class.
    pub mean_mt_speech: Option<f64>,
    pub mean_mt_silence: Option<f64>,
    pub excluded: Vec<PathBuf>,
    /// A = submitted fakes minus exclusions; genuine clips are never
    /// counted in A.
    pub a_counts_fakes_only: bool,
}

impl EvalReport {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(
            path,
            serde_json::to_string_pretty(self).expect("report serializes"),
        )
        .map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::ConfigParse {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })
    }
}

/// Per-file score table as CSV: path, label, then one column per detector.
pub fn write_score_csv(
    path: impl AsRef<Path>,
    detector_names: &[String],
    rows: &[ScoreRow],
) -> Result<()> {
    let path = path.as_ref();
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let header: Vec<String> = ["path", "label"]
        .into_iter()
        .map(String::from)
        .chain(detector_names.iter().map(|n| format!("score_{n}")))
        .collect();
    writeln!(f, "{}", header.join(",")).map_err(|e| Error::io(path, e))?;
    for row in rows {
        let mut cols = vec![
            row.path.display().to_string(),
            row.label.as_str().to_string(),
        ];
        cols.extend(row.scores.iter().map(|s| format!("{s}")));
        writeln!(f, "{}", cols.join(",")).map_err(|e| Error::io(path, e))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::audio::write_wav;
    use crate::seeds;
    use rand::Rng;

    /// Scores a clip by reading one designated sample, so tests can paint
    /// exact score sets into WAV files. PCM16 quantization perturbs each
    /// painted value by at most 1/65536, which preserves ordering for the
    /// well-separated sets used here.
    struct SampleScorer {
        index: usize,
    }

    impl Scorer for SampleScorer {
        fn name(&self) -> String {
            format!("sample{}", self.index)
        }

        fn score(&self, wave: &Waveform) -> Result<f64> {
            Ok(wave.samples()[self.index])
        }
    }

    /// Writes a clip whose first samples encode the per-scorer scores.
    fn score_clip(dir: &Path, name: &str, scores: &[f64]) -> PathBuf {
        let mut samples = vec![0.0; 64];
        samples[..scores.len()].copy_from_slice(scores);
        let p = dir.join(name);
        write_wav(&Waveform::new(samples, 8_000), &p).unwrap();
        p
    }

    fn entry(p: PathBuf, label: Label) -> ManifestEntry {
        ManifestEntry::new(p, label, "spk")
    }

    #[test]
    fn dsr_counts_fakes_accepted_at_threshold() {
        // Genuines all at 0.52; 47 fakes at 0.9, 53 at 0.1. The EER
        // threshold lands on 0.52, so exactly the 47 high fakes pass.
        let dir = tempfile::tempdir().unwrap();
        let mut genuines = Vec::new();
        for i in 0..100 {
            let p = score_clip(dir.path(), &format!("g{i}.wav"), &[0.52]);
            genuines.push(entry(p, Label::TargetNatural));
        }
        let mut fakes = Vec::new();
        for i in 0..100 {
            let s = if i < 47 { 0.9 } else { 0.1 };
            let p = score_clip(dir.path(), &format!("f{i}.wav"), &[s]);
            fakes.push(entry(p, Label::Fake));
        }
        let scorer = SampleScorer { index: 0 };
        let report = compute_dsr(&[&scorer], &fakes, &genuines).unwrap();
        assert_eq!(report.wrong, 47);
        assert_eq!(report.evaluated, 100);
        assert_eq!(report.n_detectors, 1);
        assert!((report.dsr - 0.47).abs() < 1e-12, "dsr {}", report.dsr);
        assert_eq!(report.recount_wrong(), 47);
    }

    #[test]
    fn dsr_every_fake_fooling_every_detector_is_one() {
        let dir = tempfile::tempdir().unwrap();
        let genuines: Vec<ManifestEntry> = (0..4)
            .map(|i| {
                let v = 0.5 + 0.05 * i as f64;
                entry(
                    score_clip(dir.path(), &format!("g{i}.wav"), &[v]),
                    Label::TargetNatural,
                )
            })
            .collect();
        let fakes: Vec<ManifestEntry> = (0..4)
            .map(|i| {
                let v = 0.8 + 0.04 * i as f64;
                entry(
                    score_clip(dir.path(), &format!("f{i}.wav"), &[v]),
                    Label::Fake,
                )
            })
            .collect();
        let scorer = SampleScorer { index: 0 };
        let report = compute_dsr(&[&scorer], &fakes, &genuines).unwrap();
        assert_eq!(report.dsr, 1.0);
        assert_eq!(report.wrong, 4);
    }

    #[test]
    fn dsr_averages_over_detectors() {
        // Detector 0 is fully fooled (fakes above every genuine), detector
        // 1 is perfect (fakes below every genuine): DSR = 1/2.
        let dir = tempfile::tempdir().unwrap();
        let genuines: Vec<ManifestEntry> = (0..3)
            .map(|i| {
                entry(
                    score_clip(dir.path(), &format!("g{i}.wav"), &[0.5, 0.9]),
                    Label::TargetNatural,
                )
            })
            .collect();
        let fakes: Vec<ManifestEntry> = (0..3)
            .map(|i| {
                entry(
                    score_clip(dir.path(), &format!("f{i}.wav"), &[0.9, 0.1]),
                    Label::Fake,
                )
            })
            .collect();
        let s0 = SampleScorer { index: 0 };
        let s1 = SampleScorer { index: 1 };
        let report = compute_dsr(&[&s0, &s1], &fakes, &genuines).unwrap();
        assert_eq!(report.n_detectors, 2);
        assert!((report.dsr - 0.5).abs() < 1e-12, "dsr {}", report.dsr);
    }

    #[test]
    fn unreadable_files_are_excluded_and_shrink_a() {
        let dir = tempfile::tempdir().unwrap();
        let genuines: Vec<ManifestEntry> = (0..3)
            .map(|i| {
                let v = 0.6 + 0.1 * i as f64;
                entry(
                    score_clip(dir.path(), &format!("g{i}.wav"), &[v]),
                    Label::TargetNatural,
                )
            })
            .collect();
        let mut fakes: Vec<ManifestEntry> = (0..3)
            .map(|i| {
                let v = 0.1 + 0.1 * i as f64;
                entry(
                    score_clip(dir.path(), &format!("f{i}.wav"), &[v]),
                    Label::Fake,
                )
            })
            .collect();
        fakes.push(entry(dir.path().join("missing.wav"), Label::Fake));
        let scorer = SampleScorer { index: 0 };
        let report = compute_dsr(&[&scorer], &fakes, &genuines).unwrap();
        assert_eq!(report.evaluated, 3);
        assert_eq!(report.excluded.len(), 1);
        assert!(report.excluded[0].ends_with("missing.wav"));
    }

    #[test]
    fn dsr_survives_monotone_rescaling_of_scores_and_thresholds() {
        // W counts only score-vs-threshold comparisons, so any strictly
        // increasing map applied to both sides leaves it unchanged.
        let dir = tempfile::tempdir().unwrap();
        let mut rng = seeds::rng(17);
        let genuines: Vec<ManifestEntry> = (0..20)
            .map(|i| {
                let v = 0.3 + 0.6 * rng.gen::<f64>();
                entry(
                    score_clip(dir.path(), &format!("g{i}.wav"), &[v]),
                    Label::TargetNatural,
                )
            })
            .collect();
        let fakes: Vec<ManifestEntry> = (0..20)
            .map(|i| {
                let v = 0.1 + 0.6 * rng.gen::<f64>();
                entry(
                    score_clip(dir.path(), &format!("f{i}.wav"), &[v]),
                    Label::Fake,
                )
            })
            .collect();
        let scorer = SampleScorer { index: 0 };
        let mut report = compute_dsr(&[&scorer], &fakes, &genuines).unwrap();
        let before = report.recount_wrong();
        let warp = |x: f64| (3.0 * x).exp() + 0.5 * x;
        for row in &mut report.table {
            for s in &mut row.scores {
                *s = warp(*s);
            }
        }
        for t in &mut report.thresholds {
            *t = warp(*t);
        }
        assert_eq!(report.recount_wrong(), before);
    }

    #[test]
    fn eer_delta_is_symmetric_under_swap() {
        let dir = tempfile::tempdir().unwrap();
        let mut rng = seeds::rng(31);
        let genuines: Vec<ManifestEntry> = (0..10)
            .map(|i| {
                let v = 0.4 + 0.6 * rng.gen::<f64>();
                entry(
                    score_clip(dir.path(), &format!("g{i}.wav"), &[v]),
                    Label::TargetNatural,
                )
            })
            .collect();
        let make_fakes = |tag: &str, lo: f64, rng: &mut rand_chacha::ChaCha8Rng| {
            (0..10)
                .map(|i| {
                    let v = lo + 0.4 * rng.gen::<f64>();
                    entry(
                        score_clip(dir.path(), &format!("{tag}{i}.wav"), &[v]),
                        Label::Fake,
                    )
                })
                .collect::<Vec<_>>()
        };
        let before = make_fakes("b", 0.0, &mut rng);
        let after = make_fakes("a", 0.3, &mut rng);
        let scorer = SampleScorer { index: 0 };
        let (eb, ea) = eer_delta(&scorer, &genuines, &before, &after).unwrap();
        let (ea2, eb2) = eer_delta(&scorer, &genuines, &after, &before).unwrap();
        assert_eq!(eb.to_bits(), eb2.to_bits());
        assert_eq!(ea.to_bits(), ea2.to_bits());
        // Same set twice: identical EERs.
        let (x, y) = eer_delta(&scorer, &genuines, &before, &before).unwrap();
        assert_eq!(x.to_bits(), y.to_bits());
    }

    /// Half silence, half speech-like tone at 0.3 amplitude.
    fn half_silent(len: usize) -> Waveform {
        let samples = (0..len)
            .map(|i| {
                if i < len / 2 {
                    0.0
                } else {
                    0.3 * (2.0 * std::f64::consts::PI * 220.0 * i as f64 / 8_000.0).sin()
                }
            })
            .collect();
        Waveform::new(samples, 8_000)
    }

    #[test]
    fn mt_split_zero_residual_is_zero_in_both_classes() {
        let w = half_silent(4_000);
        let zero = Waveform::new(vec![0.0; w.len()], 8_000);
        let (speech, silence) = silence_speech_mt(&w, &zero, 30.0).unwrap();
        assert_eq!(speech, Some(0.0));
        assert_eq!(silence, Some(0.0));
    }

    #[test]
    fn mt_split_detects_residual_concentrated_in_silence() {
        let w = half_silent(4_000);
        let residual = Waveform::new(
            (0..4_000)
                .map(|i| if i < 2_000 { 0.01 } else { 0.0 })
                .collect(),
            8_000,
        );
        let (speech, silence) = silence_speech_mt(&w, &residual, 30.0).unwrap();
        let (speech, silence) = (speech.unwrap(), silence.unwrap());
        assert!(
            silence > speech,
            "silence {silence} should exceed speech {speech}"
        );
    }

    #[test]
    fn mt_split_reports_missing_class_as_absent() {
        let loud = Waveform::new(
            (0..4_000)
                .map(|i| 0.4 * (2.0 * std::f64::consts::PI * 200.0 * i as f64 / 8_000.0).sin())
                .collect(),
            8_000,
        );
        let zero = Waveform::new(vec![0.0; loud.len()], 8_000);
        let (speech, silence) = silence_speech_mt(&loud, &zero, 30.0).unwrap();
        assert!(speech.is_some());
        assert_eq!(silence, None, "uniform loud signal has no silent frames");
    }

    fn voiced_clip(len: usize, seed: u64) -> Waveform {
        let mut rng = seeds::rng(seed);
        let f0 = 110.0 + 40.0 * rng.gen::<f64>();
        Waveform::new(
            (0..len)
                .map(|i| {
                    let t = i as f64 / 8_000.0;
                    let mut v = 0.0;
                    for h in 1..=6 {
                        v += (2.0 * std::f64::consts::PI * f0 * h as f64 * t).sin()
                            / (h as f64).powi(2);
                    }
                    0.35 * v
                })
                .collect(),
            8_000,
        )
    }

    #[test]
    fn spectrogram_diff_identical_inputs_is_all_zero() {
        let dir = tempfile::tempdir().unwrap();
        let w = voiced_clip(4_000, 1);
        let d = spectrogram_diff(&w, &w, &dir.path().join("same")).unwrap();
        assert!(d.band_mean_abs_diff_db.iter().all(|&v| v == 0.0));
        assert!(d.png.exists());
        assert!(d.bands_json.exists());
        assert!(d.matrix.exists());
        let ck = Checkpoint::load(&d.matrix).unwrap();
        assert_eq!(ck.tensors["before_db"], ck.tensors["after_db"]);
    }

    #[test]
    fn spectrogram_diff_added_noise_hits_high_bands_harder() {
        let dir = tempfile::tempdir().unwrap();
        let w = voiced_clip(8_000, 2);
        let mut rng = seeds::rng(3);
        let noisy = Waveform::new(
            w.samples()
                .iter()
                .map(|s| s + 0.01 * (rng.gen::<f64>() * 2.0 - 1.0))
                .collect(),
            8_000,
        );
        let d = spectrogram_diff(&w, &noisy, &dir.path().join("noise")).unwrap();
        let low: f64 = d.band_mean_abs_diff_db[1..40].iter().sum::<f64>() / 39.0;
        let n = d.band_mean_abs_diff_db.len();
        let high: f64 = d.band_mean_abs_diff_db[n - 40..].iter().sum::<f64>() / 40.0;
        assert!(
            low < high,
            "voiced-band diff {low} should undercut noise-band diff {high}"
        );
    }

    #[test]
    fn spectrogram_diff_rejects_mismatches() {
        let dir = tempfile::tempdir().unwrap();
        let a = voiced_clip(4_000, 1);
        let b = voiced_clip(4_001, 1);
        match spectrogram_diff(&a, &b, &dir.path().join("bad")) {
            Err(Error::LengthMismatch { .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn report_roundtrips_and_csv_writes() {
        let dir = tempfile::tempdir().unwrap();
        let report = EvalReport {
            schema_version: REPORT_SCHEMA_VERSION,
            eer_before: 0.25,
            eer_after: 0.74,
            dsr: 0.47,
            wrong: 47,
            evaluated: 100,
            n_detectors: 1,
            mean_mt_speech: Some(0.01),
            mean_mt_silence: Some(0.002),
            excluded: vec![],
            a_counts_fakes_only: true,
        };
        let p = dir.path().join("report.json");
        report.save(&p).unwrap();
        let back = EvalReport::load(&p).unwrap();
        assert_eq!(back.wrong, 47);
        assert_eq!(back.mean_mt_silence, Some(0.002));
        let text = std::fs::read_to_string(&p).unwrap();
        assert!(text.contains("\"W\": 47"), "wire name for W");

        let rows = vec![ScoreRow {
            path: PathBuf::from("x.wav"),
            label: Label::Fake,
            scores: vec![0.5, 0.25],
        }];
        let csv = dir.path().join("scores.csv");
        write_score_csv(&csv, &["d0".into(), "d1".into()], &rows).unwrap();
        let text = std::fs::read_to_string(&csv).unwrap();
        assert!(text.starts_with("path,label,score_d0,score_d1\n"));
        assert!(text.contains("x.wav,fake,0.5,0.25"));
    }
}
