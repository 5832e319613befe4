//! Negative-data augmentation menu for hardening the detector.
//!
//! Ten methods: three additive interferers (noise, music, babble), room
//! reverb, volume perturbation, four lossy codecs, and a downsample round
//! trip. Interferer and RIR corpora are user-supplied WAV directories;
//! synthetic stand-ins are included so tests need no external data. Every
//! method is deterministic given (input, spec, seed).

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::audio::{energy_vad, frame_energies, lowpass_fir, read_wav, resample, Waveform};
use crate::error::{Error, Result};
use crate::seeds;

/// Energy threshold (dB below peak frame) separating speech from silence
/// when measuring SNR over the voiced region.
const VAD_THRESHOLD_DB: f64 = 30.0;

/// Codec family for the compression augmentations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CodecKind {
    Mp3,
    Ogg,
    Aac,
    Opus,
}

impl CodecKind {
    pub fn name(self) -> &'static str {
        match self {
            CodecKind::Mp3 => "codec_mp3",
            CodecKind::Ogg => "codec_ogg",
            CodecKind::Aac => "codec_aac",
            CodecKind::Opus => "codec_opus",
        }
    }

    fn ffmpeg_codec(self) -> &'static str {
        match self {
            CodecKind::Mp3 => "libmp3lame",
            CodecKind::Ogg => "libvorbis",
            CodecKind::Aac => "aac",
            CodecKind::Opus => "libopus",
        }
    }
}

/// Where additive interferers come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InterfererSource {
    /// User-supplied WAV files (e.g. a MUSAN subset).
    Files(Vec<PathBuf>),
    /// Synthetic white noise.
    SynthNoise,
    /// Synthetic tone complex (music stand-in).
    SynthTones,
    /// Synthetic overlapped-voices mix (babble stand-in).
    SynthBabble,
}

/// Where room impulse responses come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RirSource {
    Files(Vec<PathBuf>),
    /// Synthetic exponential-decay RIR with RT60 drawn from the range (s).
    SynthExpDecay { rt60_s: (f64, f64) },
}

/// One entry of the augmentation menu.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AugmentSpec {
    Noise {
        snr_db: (f64, f64),
        source: InterfererSource,
    },
    Music {
        snr_db: (f64, f64),
        source: InterfererSource,
    },
    Babble {
        snr_db: (f64, f64),
        source: InterfererSource,
    },
    Reverb {
        source: RirSource,
    },
    Volume {
        gain_db: (f64, f64),
    },
    Codec {
        codec: CodecKind,
        /// Normalized quality scale: 0 = worst, 1 = best.
        quality: (f64, f64),
    },
    /// Round trip through half the sample rate (16 kHz -> 8 kHz -> 16 kHz).
    Downsample,
}

impl AugmentSpec {
    pub fn name(&self) -> &'static str {
        match self {
            AugmentSpec::Noise { .. } => "noise",
            AugmentSpec::Music { .. } => "music",
            AugmentSpec::Babble { .. } => "babble",
            AugmentSpec::Reverb { .. } => "reverb",
            AugmentSpec::Volume { .. } => "volume",
            AugmentSpec::Codec { codec, .. } => codec.name(),
            AugmentSpec::Downsample => "downsample",
        }
    }
}

/// The default ten-method menu with synthetic interferer stand-ins.
pub fn default_menu() -> Vec<AugmentSpec> {
    vec![
        AugmentSpec::Noise {
            snr_db: (0.0, 20.0),
            source: InterfererSource::SynthNoise,
        },
        AugmentSpec::Music {
            snr_db: (0.0, 20.0),
            source: InterfererSource::SynthTones,
        },
        AugmentSpec::Babble {
            snr_db: (0.0, 20.0),
            source: InterfererSource::SynthBabble,
        },
        AugmentSpec::Reverb {
            source: RirSource::SynthExpDecay { rt60_s: (0.1, 0.5) },
        },
        AugmentSpec::Volume {
            gain_db: (-10.0, 20.0),
        },
        AugmentSpec::Codec {
            codec: CodecKind::Mp3,
            quality: (0.0, 1.0),
        },
        AugmentSpec::Codec {
            codec: CodecKind::Ogg,
            quality: (0.0, 1.0),
        },
        AugmentSpec::Codec {
            codec: CodecKind::Aac,
            quality: (0.0, 1.0),
        },
        AugmentSpec::Codec {
            codec: CodecKind::Opus,
            quality: (0.0, 1.0),
        },
        AugmentSpec::Downsample,
    ]
}

/// Record of an applied augmentation, written into output manifests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AppliedAugment {
    pub augmentation: String,
    pub params: serde_json::Value,
    pub seed: u64,
}

/// Mix an interferer into `w` at a target SNR measured over the voiced
/// region of `w`. The interferer is looped or truncated to `w`'s length.
pub fn mix_additive(w: &Waveform, interferer: &Waveform, snr_db: f64) -> Result<Waveform> {
    if w.sample_rate() != interferer.sample_rate() {
        return Err(Error::SampleRateMismatch {
            left: w.sample_rate(),
            right: interferer.sample_rate(),
        });
    }
    if interferer.is_empty() || interferer.power() == 0.0 {
        return Err(Error::ZeroPowerInterferer);
    }
    // Loop/truncate to length.
    let tiled: Vec<f64> = (0..w.len())
        .map(|i| interferer.samples()[i % interferer.len()])
        .collect();

    // Measure both powers over w's voiced frames so silence does not
    // deflate the target's power estimate.
    let frame_len = ((0.025 * w.sample_rate() as f64).round() as usize).max(1);
    let hop = ((0.010 * w.sample_rate() as f64).round() as usize).max(1);
    let mask = energy_vad(w.samples(), w.sample_rate(), VAD_THRESHOLD_DB);
    let we = frame_energies(w.samples(), frame_len, hop);
    let ie = frame_energies(&tiled, frame_len, hop);
    let (mut p_w, mut p_i, mut n_active) = (0.0, 0.0, 0usize);
    for (f, &active) in mask.iter().enumerate() {
        if active && f < ie.len() {
            p_w += we[f];
            p_i += ie[f];
            n_active += 1;
        }
    }
    if n_active == 0 {
        // Degenerate all-silence target: fall back to full-signal powers.
        p_w = w.power();
        p_i = Waveform::new(tiled.clone(), w.sample_rate()).power();
    }
    if p_i == 0.0 {
        return Err(Error::ZeroPowerInterferer);
    }
    // 10 log10(p_w / (g^2 p_i)) = snr  =>  g = sqrt(p_w/p_i) 10^(-snr/20)
    let gain = (p_w / p_i).sqrt() * 10f64.powf(-snr_db / 20.0);
    let mut out = Waveform::new(
        w.samples()
            .iter()
            .zip(&tiled)
            .map(|(&s, &i)| s + gain * i)
            .collect(),
        w.sample_rate(),
    );
    out.clip_to_unit();
    Ok(out)
}

/// Convolve with a room impulse response, truncate to the input length,
/// and rescale so the peak matches the dry signal's peak.
pub fn apply_reverb(w: &Waveform, rir: &Waveform) -> Result<Waveform> {
    if rir.is_empty() {
        return Err(Error::EmptyRir);
    }
    if w.sample_rate() != rir.sample_rate() {
        return Err(Error::SampleRateMismatch {
            left: w.sample_rate(),
            right: rir.sample_rate(),
        });
    }
    let x = w.samples();
    let h = rir.samples();
    let mut wet = vec![0.0f64; w.len()];
    for (j, &hv) in h.iter().enumerate() {
        if hv == 0.0 {
            continue;
        }
        for i in 0..w.len().saturating_sub(j) {
            wet[i + j] += hv * x[i];
        }
    }
    let wet_peak = wet.iter().fold(0.0f64, |m, &s| m.max(s.abs()));
    let scale = if wet_peak > 0.0 { w.peak() / wet_peak } else { 1.0 };
    let mut out = Waveform::new(wet.iter().map(|&s| s * scale).collect(), w.sample_rate());
    out.clip_to_unit();
    Ok(out)
}

/// Scale by `gain_db` decibels and clip to [-1, 1].
pub fn apply_gain(w: &Waveform, gain_db: f64) -> Waveform {
    let g = 10f64.powf(gain_db / 20.0);
    let mut out = Waveform::new(w.samples().iter().map(|&s| s * g).collect(), w.sample_rate());
    out.clip_to_unit();
    out
}

/// Which implementation produced a codec round trip.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CodecBackend {
    /// External encoder binary (name recorded).
    External(String),
    /// Built-in lossy surrogate: bit-crush plus low-pass.
    Surrogate,
}

/// A codec round trip plus the backend that produced it.
#[derive(Debug, Clone)]
pub struct CodecResult {
    pub wave: Waveform,
    pub backend: CodecBackend,
}

/// Encode/decode through a lossy codec at normalized `quality` in [0, 1].
///
/// If an ffmpeg binary exists in `binary_dir` it is used; otherwise the
/// documented surrogate (bit depth 5..15 bits plus a 0.30..0.95 Nyquist
/// low-pass) stands in, and the result is flagged accordingly.
pub fn apply_codec(
    w: &Waveform,
    codec: CodecKind,
    quality: f64,
    binary_dir: Option<&Path>,
) -> Result<CodecResult> {
    let quality = quality.clamp(0.0, 1.0);
    if let Some(dir) = binary_dir {
        if let Some(wave) = external_codec_roundtrip(w, codec, quality, dir) {
            return Ok(CodecResult {
                wave,
                backend: CodecBackend::External("ffmpeg".to_string()),
            });
        }
    }
    Ok(CodecResult {
        wave: codec_surrogate(w, quality),
        backend: CodecBackend::Surrogate,
    })
}

/// Built-in lossy surrogate: low-pass then requantize at reduced depth.
fn codec_surrogate(w: &Waveform, quality: f64) -> Waveform {
    let nyquist = w.sample_rate() as f64 / 2.0;
    let cutoff = (0.30 + 0.65 * quality) * nyquist;
    let bits = 5.0 + (10.0 * quality).round();
    let levels = 2f64.powf(bits - 1.0);
    let filtered = lowpass_fir(w, cutoff);
    let mut out = Waveform::new(
        filtered
            .samples()
            .iter()
            .map(|&s| (s * levels).round() / levels)
            .collect(),
        w.sample_rate(),
    );
    out.clip_to_unit();
    out
}

/// Round trip through an external ffmpeg binary. Any failure (missing
/// binary, nonzero exit, unreadable output) yields None so the caller can
/// fall back to the surrogate.
fn external_codec_roundtrip(
    w: &Waveform,
    codec: CodecKind,
    quality: f64,
    dir: &Path,
) -> Option<Waveform> {
    use std::process::Command;
    let ffmpeg = dir.join("ffmpeg");
    if !ffmpeg.is_file() {
        return None;
    }
    let tmp = tempdir_in_default().ok()?;
    let wav_in = tmp.join("in.wav");
    let ext = match codec {
        CodecKind::Mp3 => "mp3",
        CodecKind::Ogg => "ogg",
        CodecKind::Aac => "m4a",
        CodecKind::Opus => "opus",
    };
    let enc = tmp.join(format!("mid.{ext}"));
    let wav_out = tmp.join("out.wav");
    crate::audio::write_wav(w, &wav_in).ok()?;
    // Map quality to a bitrate range typical of each codec's scale.
    let bitrate_kbps = (16.0 + quality * 112.0).round() as u32;
    let enc_status = Command::new(&ffmpeg)
        .args(["-y", "-loglevel", "quiet", "-i"])
        .arg(&wav_in)
        .args(["-c:a", codec.ffmpeg_codec(), "-b:a", &format!("{bitrate_kbps}k")])
        .arg(&enc)
        .status()
        .ok()?;
    if !enc_status.success() {
        return None;
    }
    let dec_status = Command::new(&ffmpeg)
        .args(["-y", "-loglevel", "quiet", "-i"])
        .arg(&enc)
        .args(["-ar", &w.sample_rate().to_string(), "-ac", "1"])
        .arg(&wav_out)
        .status()
        .ok()?;
    if !dec_status.success() {
        return None;
    }
    let decoded = read_wav(&wav_out).ok()?;
    // Codec round trips shift/retime; re-align to the input length.
    let mut samples = decoded.into_samples();
    samples.resize(w.len(), 0.0);
    let _ = std::fs::remove_dir_all(&tmp);
    Some(Waveform::new(samples, w.sample_rate()))
}

fn tempdir_in_default() -> std::io::Result<PathBuf> {
    let base = std::env::temp_dir();
    let unique = format!(
        "advres-codec-{}-{:x}",
        std::process::id(),
        std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_nanos())
            .unwrap_or(0)
    );
    let dir = base.join(unique);
    std::fs::create_dir_all(&dir)?;
    Ok(dir)
}

/// Downsample to half rate and back, band-limiting below the intermediate
/// Nyquist.
pub fn apply_downsample_roundtrip(w: &Waveform) -> Waveform {
    let half = (w.sample_rate() / 2).max(1);
    let down = resample(w, half);
    resample(&down, w.sample_rate())
}

// ---- synthetic stand-ins ----

/// White noise interferer.
pub fn synth_white_noise(len: usize, rate: u32, rng: &mut ChaCha8Rng) -> Waveform {
    Waveform::new((0..len).map(|_| rng.gen_range(-0.3..0.3)).collect(), rate)
}

/// Tone complex: a random fundamental with decaying harmonics (music
/// stand-in).
pub fn synth_tone_complex(len: usize, rate: u32, rng: &mut ChaCha8Rng) -> Waveform {
    let f0 = rng.gen_range(80.0..400.0);
    let n_harm = rng.gen_range(3..7);
    let phases: Vec<f64> = (0..n_harm).map(|_| rng.gen_range(0.0..2.0 * PI)).collect();
    let samples = (0..len)
        .map(|i| {
            let t = i as f64 / rate as f64;
            (0..n_harm)
                .map(|h| {
                    let amp = 0.25 / (h + 1) as f64;
                    amp * (2.0 * PI * f0 * (h + 1) as f64 * t + phases[h]).sin()
                })
                .sum()
        })
        .collect();
    Waveform::new(samples, rate)
}

/// Overlapped-voices mix: several amplitude-modulated narrowband voices
/// (babble stand-in).
pub fn synth_babble(len: usize, rate: u32, rng: &mut ChaCha8Rng) -> Waveform {
    let n_voices = 6;
    let mut mix = vec![0.0f64; len];
    for _ in 0..n_voices {
        let f = rng.gen_range(120.0..800.0);
        let mod_rate = rng.gen_range(2.0..6.0);
        let phase = rng.gen_range(0.0..2.0 * PI);
        let mod_phase = rng.gen_range(0.0..2.0 * PI);
        for (i, m) in mix.iter_mut().enumerate() {
            let t = i as f64 / rate as f64;
            let env = 0.5 * (1.0 + (2.0 * PI * mod_rate * t + mod_phase).sin());
            *m += 0.08 * env * (2.0 * PI * f * t + phase).sin();
        }
    }
    Waveform::new(mix, rate)
}

/// Exponentially decaying noise RIR with a unit direct path; `rt60_s` is
/// the time for the tail to fall 60 dB.
pub fn synth_exp_decay_rir(rate: u32, rt60_s: f64, rng: &mut ChaCha8Rng) -> Waveform {
    assert!(rt60_s > 0.0);
    let len = ((rt60_s * rate as f64).round() as usize).max(2);
    let decay_per_sample = -3.0 * std::f64::consts::LN_10 / (rt60_s * rate as f64); // ln scale
    let mut samples = vec![0.0f64; len];
    samples[0] = 1.0;
    for (n, s) in samples.iter_mut().enumerate().skip(1) {
        let env = (decay_per_sample * n as f64).exp();
        *s = 0.3 * env * rng.gen_range(-1.0..1.0);
    }
    Waveform::new(samples, rate)
}

fn interferer_for(
    source: &InterfererSource,
    len: usize,
    rate: u32,
    rng: &mut ChaCha8Rng,
) -> Result<Waveform> {
    match source {
        InterfererSource::Files(paths) => {
            if paths.is_empty() {
                return Err(Error::EmptyMenu);
            }
            let idx = rng.gen_range(0..paths.len());
            let w = read_wav(&paths[idx])?;
            if w.sample_rate() != rate {
                Ok(resample(&w, rate))
            } else {
                Ok(w)
            }
        }
        InterfererSource::SynthNoise => Ok(synth_white_noise(len, rate, rng)),
        InterfererSource::SynthTones => Ok(synth_tone_complex(len, rate, rng)),
        InterfererSource::SynthBabble => Ok(synth_babble(len, rate, rng)),
    }
}

fn rir_for(source: &RirSource, rate: u32, rng: &mut ChaCha8Rng) -> Result<Waveform> {
    match source {
        RirSource::Files(paths) => {
            if paths.is_empty() {
                return Err(Error::EmptyRir);
            }
            let idx = rng.gen_range(0..paths.len());
            let w = read_wav(&paths[idx])?;
            if w.sample_rate() != rate {
                Ok(resample(&w, rate))
            } else {
                Ok(w)
            }
        }
        RirSource::SynthExpDecay { rt60_s } => {
            let rt60 = rng.gen_range(rt60_s.0..=rt60_s.1);
            Ok(synth_exp_decay_rir(rate, rt60, rng))
        }
    }
}

/// Apply one augmentation with parameters drawn from `spec`'s ranges.
pub fn apply_augment(
    w: &Waveform,
    spec: &AugmentSpec,
    seed: u64,
    codec_binary_dir: Option<&Path>,
) -> Result<(Waveform, AppliedAugment)> {
    let mut rng = seeds::rng(seed);
    let (out, params) = match spec {
        AugmentSpec::Noise { snr_db, source }
        | AugmentSpec::Music { snr_db, source }
        | AugmentSpec::Babble { snr_db, source } => {
            let snr = rng.gen_range(snr_db.0..=snr_db.1);
            let interferer = interferer_for(source, w.len(), w.sample_rate(), &mut rng)?;
            let out = mix_additive(w, &interferer, snr)?;
            (out, serde_json::json!({ "snr_db": snr }))
        }
        AugmentSpec::Reverb { source } => {
            let rir = rir_for(source, w.sample_rate(), &mut rng)?;
            let out = apply_reverb(w, &rir)?;
            (out, serde_json::json!({ "rir_len": rir.len() }))
        }
        AugmentSpec::Volume { gain_db } => {
            let g = rng.gen_range(gain_db.0..=gain_db.1);
            (apply_gain(w, g), serde_json::json!({ "gain_db": g }))
        }
        AugmentSpec::Codec { codec, quality } => {
            let q = rng.gen_range(quality.0..=quality.1);
            let result = apply_codec(w, *codec, q, codec_binary_dir)?;
            let surrogate = result.backend == CodecBackend::Surrogate;
            (
                result.wave,
                serde_json::json!({ "quality": q, "surrogate": surrogate }),
            )
        }
        AugmentSpec::Downsample => (
            apply_downsample_roundtrip(w),
            serde_json::json!({ "intermediate_rate": w.sample_rate() / 2 }),
        ),
    };
    let mut out = out;
    out.clip_to_unit();
    Ok((
        out,
        AppliedAugment {
            augmentation: spec.name().to_string(),
            params,
            seed,
        },
    ))
}

/// Pick one menu entry uniformly at random (seeded) and apply it.
pub fn augment_random(
    w: &Waveform,
    menu: &[AugmentSpec],
    seed: u64,
    codec_binary_dir: Option<&Path>,
) -> Result<(Waveform, AppliedAugment)> {
    if menu.is_empty() {
        return Err(Error::EmptyMenu);
    }
    let mut rng = seeds::rng(seed);
    let idx = rng.gen_range(0..menu.len());
    apply_augment(
        w,
        &menu[idx],
        seeds::derive_seed(seed, menu[idx].name()),
        codec_binary_dir,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seeds;

    fn speechish(len: usize, rate: u32, seed: u64) -> Waveform {
        // Tone bursts with silence margins, loosely speech-shaped.
        let mut rng = seeds::rng(seed);
        let f: f64 = rng.gen_range(200.0..800.0);
        let samples = (0..len)
            .map(|i| {
                let t = i as f64 / rate as f64;
                if i < len / 8 || i > len * 7 / 8 {
                    0.0
                } else {
                    0.4 * (2.0 * PI * f * t).sin() * (1.0 + 0.3 * (2.0 * PI * 3.0 * t).sin())
                }
            })
            .collect();
        Waveform::new(samples, rate)
    }

    #[test]
    fn mix_at_huge_snr_is_nearly_identity() {
        let w = speechish(8_000, 16_000, 1);
        let mut rng = seeds::rng(2);
        let noise = synth_white_noise(8_000, 16_000, &mut rng);
        let out = mix_additive(&w, &noise, 100.0).unwrap();
        let max_diff = w
            .samples()
            .iter()
            .zip(out.samples())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        assert!(max_diff < 1e-4, "max diff {max_diff}");
    }

    #[test]
    fn mix_at_zero_snr_balances_power() {
        let w = speechish(16_000, 16_000, 3);
        let mut rng = seeds::rng(4);
        let noise = synth_white_noise(16_000, 16_000, &mut rng);
        // Recompute the power ratio of the two addends over voiced frames.
        let out = mix_additive(&w, &noise, 0.0).unwrap();
        let added = Waveform::new(
            out.samples()
                .iter()
                .zip(w.samples())
                .map(|(o, s)| o - s)
                .collect(),
            16_000,
        );
        let mask = energy_vad(w.samples(), 16_000, VAD_THRESHOLD_DB);
        let we = frame_energies(w.samples(), 400, 160);
        let ae = frame_energies(added.samples(), 400, 160);
        let (mut pw, mut pa) = (0.0, 0.0);
        for (f, &m) in mask.iter().enumerate() {
            if m {
                pw += we[f];
                pa += ae[f];
            }
        }
        let snr = 10.0 * (pw / pa).log10();
        assert!(snr.abs() <= 0.1, "measured snr {snr} dB");
    }

    #[test]
    fn zero_interferer_is_an_error() {
        let w = speechish(4_000, 16_000, 5);
        let silent = Waveform::silence(4_000, 16_000);
        assert!(matches!(
            mix_additive(&w, &silent, 10.0),
            Err(Error::ZeroPowerInterferer)
        ));
    }

    #[test]
    fn short_interferer_is_looped() {
        let w = speechish(8_000, 16_000, 6);
        let mut rng = seeds::rng(7);
        let noise = synth_white_noise(1_000, 16_000, &mut rng);
        let out = mix_additive(&w, &noise, 10.0).unwrap();
        assert_eq!(out.len(), w.len());
    }

    #[test]
    fn reverb_with_unit_impulse_is_identity() {
        let w = speechish(4_000, 16_000, 8);
        let mut h = vec![0.0; 64];
        h[0] = 1.0;
        let out = apply_reverb(&w, &Waveform::new(h, 16_000)).unwrap();
        let max_diff = w
            .samples()
            .iter()
            .zip(out.samples())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        assert!(max_diff < 1e-12, "max diff {max_diff}");
    }

    #[test]
    fn reverb_with_delayed_impulse_shifts_by_the_delay() {
        let w = speechish(4_000, 16_000, 9);
        let mut h = vec![0.0; 200];
        h[160] = 1.0;
        let out = apply_reverb(&w, &Waveform::new(h, 16_000)).unwrap();
        // Cross-correlation peak should sit at lag 160.
        let mut best = (0usize, f64::NEG_INFINITY);
        for lag in 0..200 {
            let mut acc = 0.0;
            for i in 0..w.len() - lag {
                acc += w.samples()[i] * out.samples()[i + lag];
            }
            if acc > best.1 {
                best = (lag, acc);
            }
        }
        assert_eq!(best.0, 160);
    }

    #[test]
    fn empty_rir_is_an_error() {
        let w = speechish(1_000, 16_000, 10);
        assert!(matches!(
            apply_reverb(&w, &Waveform::silence(0, 16_000)),
            Err(Error::EmptyRir)
        ));
    }

    #[test]
    fn gain_scales_and_clips() {
        let w = Waveform::new(vec![0.05, -0.05], 16_000);
        let up = apply_gain(&w, 20.0);
        assert!((up.peak() - 0.5).abs() < 1e-6);
        let loud = Waveform::new(vec![0.5, -0.5], 16_000);
        let clipped = apply_gain(&loud, 20.0);
        assert_eq!(clipped.peak(), 1.0);
        let same = apply_gain(&w, 0.0);
        assert_eq!(same.samples(), w.samples());
    }

    #[test]
    fn gain_round_trip_is_identity_without_clipping() {
        let quiet = speechish(2_000, 16_000, 11);
        let w = apply_gain(&quiet, -12.0); // headroom so +6 dB cannot clip
        for gain in [1.0, 3.5, 6.0] {
            let round = apply_gain(&apply_gain(&w, gain), -gain);
            let max_diff = w
                .samples()
                .iter()
                .zip(round.samples())
                .map(|(a, b)| (a - b).abs())
                .fold(0.0f64, f64::max);
            assert!(max_diff < 1e-6, "gain {gain}: diff {max_diff}");
        }
    }

    #[test]
    fn codec_surrogate_quality_ordering() {
        let w = speechish(8_000, 16_000, 12);
        let snr_of = |q: f64| {
            let out = apply_codec(&w, CodecKind::Mp3, q, None).unwrap();
            assert_eq!(out.backend, CodecBackend::Surrogate);
            let residual: f64 = w
                .samples()
                .iter()
                .zip(out.wave.samples())
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            10.0 * (w.power() * w.len() as f64 / residual.max(1e-300)).log10()
        };
        let hi = snr_of(1.0);
        let lo = snr_of(0.0);
        assert!(hi >= 20.0, "high-quality snr {hi} dB");
        assert!(lo < hi, "low {lo} dB should be worse than high {hi} dB");
    }

    #[test]
    fn downsample_roundtrip_preserves_length_and_rate() {
        let w = speechish(16_000, 16_000, 13);
        let out = apply_downsample_roundtrip(&w);
        assert_eq!(out.len(), w.len());
        assert_eq!(out.sample_rate(), 16_000);
    }

    #[test]
    fn augment_random_is_deterministic() {
        let w = speechish(8_000, 16_000, 14);
        let menu = default_menu();
        let (a, meta_a) = augment_random(&w, &menu, 99, None).unwrap();
        let (b, meta_b) = augment_random(&w, &menu, 99, None).unwrap();
        assert_eq!(meta_a, meta_b);
        assert_eq!(a.samples(), b.samples());
        let (c, _) = augment_random(&w, &menu, 100, None).unwrap();
        assert!(a.samples() != c.samples() || a == c); // different seed may differ
    }

    #[test]
    fn menu_of_one_always_chooses_it() {
        let w = speechish(4_000, 16_000, 15);
        let menu = vec![AugmentSpec::Volume {
            gain_db: (-3.0, 3.0),
        }];
        for seed in 0..5 {
            let (_, meta) = augment_random(&w, &menu, seed, None).unwrap();
            assert_eq!(meta.augmentation, "volume");
        }
    }

    #[test]
    fn menu_choice_is_roughly_uniform() {
        let menu = default_menu();
        assert_eq!(menu.len(), 10);
        let mut counts = vec![0usize; menu.len()];
        for seed in 0..10_000u64 {
            let mut rng = seeds::rng(seed);
            let idx = rng.gen_range(0..menu.len());
            counts[idx] += 1;
        }
        for (i, &c) in counts.iter().enumerate() {
            assert!(
                (850..=1150).contains(&c),
                "menu item {i} chosen {c} times out of 10000"
            );
        }
    }

    #[test]
    fn empty_menu_is_an_error() {
        let w = speechish(1_000, 16_000, 16);
        assert!(matches!(
            augment_random(&w, &[], 1, None),
            Err(Error::EmptyMenu)
        ));
    }

    #[test]
    fn all_augmentations_stay_in_unit_range_and_keep_rate() {
        let w = speechish(8_000, 16_000, 17);
        for (i, spec) in default_menu().iter().enumerate() {
            let (out, _) = apply_augment(&w, spec, 1000 + i as u64, None).unwrap();
            assert_eq!(out.sample_rate(), 16_000, "{}", spec.name());
            assert_eq!(out.len(), w.len(), "{}", spec.name());
            assert!(
                out.samples().iter().all(|s| (-1.0..=1.0).contains(s)),
                "{} left the unit range",
                spec.name()
            );
        }
    }

    #[test]
    fn synthetic_rir_decays() {
        let mut rng = seeds::rng(18);
        let rir = synth_exp_decay_rir(16_000, 0.2, &mut rng);
        assert_eq!(rir.samples()[0], 1.0);
        let head: f64 = rir.samples()[1..400].iter().map(|s| s * s).sum();
        let tail: f64 = rir.samples()[rir.len() - 400..].iter().map(|s| s * s).sum();
        assert!(tail < head / 10.0, "tail {tail} vs head {head}");
    }
}
