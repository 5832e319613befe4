//! Waveform container, WAV file I/O and band-limited resampling.
//!
//! All audio in the toolkit is mono f64 in [-1, 1] at an explicit sample
//! rate.  Files are read from PCM16 or float32 RIFF WAV and always written
//! back as PCM16 with clipping.

use std::f64::consts::PI;
use std::path::Path;

use crate::error::{Error, Result};

/// Canonical sample rate used by the pipeline unless configured otherwise.
pub const CANONICAL_SAMPLE_RATE: u32 = 16_000;

/// A mono audio signal.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    samples: Vec<f64>,
    sample_rate: u32,
}

impl Waveform {
    /// Wrap raw samples. Panics if `sample_rate` is zero.
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Self {
        assert!(sample_rate > 0, "sample rate must be positive");
        Waveform {
            samples,
            sample_rate,
        }
    }

    /// A waveform of `n` zero samples.
    pub fn silence(n: usize, sample_rate: u32) -> Self {
        Waveform::new(vec![0.0; n], sample_rate)
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn samples_mut(&mut self) -> &mut [f64] {
        &mut self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    /// Largest absolute sample value (0 for an empty waveform).
    pub fn peak(&self) -> f64 {
        self.samples.iter().fold(0.0, |m, &s| m.max(s.abs()))
    }

    /// Mean squared sample value.
    pub fn power(&self) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        self.samples.iter().map(|&s| s * s).sum::<f64>() / self.samples.len() as f64
    }

    pub fn is_finite(&self) -> bool {
        self.samples.iter().all(|s| s.is_finite())
    }

    /// Clamp all samples into [-1, 1].
    pub fn clip_to_unit(&mut self) {
        for s in &mut self.samples {
            *s = s.clamp(-1.0, 1.0);
        }
    }
}

/// Read a mono PCM16 or float32 WAV file, normalizing samples to [-1, 1].
///
/// PCM16 values are scaled by 1/32768, so full-scale 32767 maps to
/// 32767/32768.
pub fn read_wav(path: impl AsRef<Path>) -> Result<Waveform> {
    let path = path.as_ref();
    let mut reader = hound::WavReader::open(path).map_err(|e| Error::WavRead {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })?;
    let spec = reader.spec();
    if spec.channels != 1 {
        return Err(Error::Multichannel {
            path: path.to_path_buf(),
            channels: spec.channels,
        });
    }
    let samples: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (hound::SampleFormat::Int, 16) => reader
            .samples::<i16>()
            .map(|s| s.map(|v| v as f64 / 32768.0))
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::WavRead {
                path: path.to_path_buf(),
                reason: e.to_string(),
            })?,
        (hound::SampleFormat::Float, 32) => reader
            .samples::<f32>()
            .map(|s| s.map(|v| v as f64))
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::WavRead {
                path: path.to_path_buf(),
                reason: e.to_string(),
            })?,
        (fmt, bits) => {
            return Err(Error::UnsupportedEncoding {
                path: path.to_path_buf(),
                detail: format!("{fmt:?} {bits}-bit"),
            })
        }
    };
    Ok(Waveform::new(samples, spec.sample_rate))
}

/// Write a waveform as PCM16. Samples outside [-1, 1] are clipped.
///
/// Quantization is `round(s * 32768)` clamped to i16 range, so a
/// read-after-write round trip is exact to within one PCM16 step.
pub fn write_wav(w: &Waveform, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: w.sample_rate(),
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut writer = hound::WavWriter::create(path, spec).map_err(|e| Error::WavWrite {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })?;
    for &s in w.samples() {
        let q = (s * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
        writer.write_sample(q).map_err(|e| Error::WavWrite {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })?;
    }
    writer.finalize().map_err(|e| Error::WavWrite {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })
}

/// Resample to `target_rate` with a windowed-sinc low-pass interpolator.
///
/// Output length is `round(len * target/source)`; content above
/// `0.95 * min(rates)/2` is suppressed. Resampling to the same rate is the
/// identity.
pub fn resample(w: &Waveform, target_rate: u32) -> Waveform {
    assert!(target_rate > 0, "target rate must be positive");
    if target_rate == w.sample_rate() {
        return w.clone();
    }
    if w.is_empty() {
        return Waveform::new(Vec::new(), target_rate);
    }
    let src_rate = w.sample_rate() as f64;
    let dst_rate = target_rate as f64;
    let ratio = dst_rate / src_rate;
    let out_len = (w.len() as f64 * ratio).round() as usize;

    // Cutoff as a fraction of the source rate, with headroom for the
    // transition band of the finite kernel.
    let cutoff = 0.95 * 0.5 * src_rate.min(dst_rate) / src_rate;
    // Wider kernel when downsampling so the stopband stays deep.
    let half_width = (32.0 / (2.0 * cutoff)).ceil() as isize;

    let x = w.samples();
    let mut out = Vec::with_capacity(out_len);
    for n in 0..out_len {
        let t = n as f64 / ratio; // position in source samples
        let center = t.floor() as isize;
        let mut acc = 0.0;
        for k in (center - half_width)..=(center + half_width) {
            if k < 0 || k as usize >= x.len() {
                continue;
            }
            let u = t - k as f64;
            acc += x[k as usize] * sinc_kernel(u, cutoff, half_width as f64);
        }
        out.push(acc);
    }
    Waveform::new(out, target_rate)
}

/// Zero-phase FIR low-pass at `cutoff_hz` (Blackman-windowed sinc).
pub fn lowpass_fir(w: &Waveform, cutoff_hz: f64) -> Waveform {
    assert!(cutoff_hz > 0.0, "cutoff must be positive");
    let nyquist = w.sample_rate() as f64 / 2.0;
    if cutoff_hz >= nyquist || w.is_empty() {
        return w.clone();
    }
    let nu = 0.5 * cutoff_hz / nyquist; // cycles per sample
    let half_width = (32.0 / (2.0 * nu)).ceil().min(2048.0) as isize;
    let x = w.samples();
    let kernel: Vec<f64> = (-half_width..=half_width)
        .map(|k| sinc_kernel(k as f64, nu, half_width as f64))
        .collect();
    let out = (0..x.len())
        .map(|n| {
            let mut acc = 0.0;
            for (ki, &kv) in kernel.iter().enumerate() {
                let src = n as isize + ki as isize - half_width;
                if src >= 0 && (src as usize) < x.len() {
                    acc += kv * x[src as usize];
                }
            }
            acc
        })
        .collect();
    Waveform::new(out, w.sample_rate())
}

/// Blackman-windowed sinc, unit passband gain at cutoff `nu` (cycles/sample).
fn sinc_kernel(u: f64, nu: f64, half_width: f64) -> f64 {
    if u.abs() >= half_width {
        return 0.0;
    }
    let x = 2.0 * PI * nu * u;
    let sinc = if x == 0.0 { 1.0 } else { x.sin() / x };
    let w = 0.42 + 0.5 * (PI * u / half_width).cos() + 0.08 * (2.0 * PI * u / half_width).cos();
    2.0 * nu * sinc * w
}

/// Per-frame short-time energy (mean squared amplitude), 25 ms frames by
/// default via [`frame_energies`]. Shared by SNR mixing and the VAD used in
/// evaluation.
pub fn frame_energies(samples: &[f64], frame_len: usize, hop: usize) -> Vec<f64> {
    assert!(frame_len > 0 && hop > 0);
    if samples.len() < frame_len {
        if samples.is_empty() {
            return Vec::new();
        }
        let e = samples.iter().map(|&s| s * s).sum::<f64>() / samples.len() as f64;
        return vec![e];
    }
    let n_frames = (samples.len() - frame_len) / hop + 1;
    (0..n_frames)
        .map(|f| {
            let fr = &samples[f * hop..f * hop + frame_len];
            fr.iter().map(|&s| s * s).sum::<f64>() / frame_len as f64
        })
        .collect()
}

/// Frame-level voice activity mask: a frame is active when its energy is
/// within `threshold_db` of the loudest frame.
pub fn energy_vad(samples: &[f64], sample_rate: u32, threshold_db: f64) -> Vec<bool> {
    let frame_len = (0.025 * sample_rate as f64).round() as usize;
    let hop = (0.010 * sample_rate as f64).round() as usize;
    let energies = frame_energies(samples, frame_len.max(1), hop.max(1));
    let peak = energies.iter().cloned().fold(0.0_f64, f64::max);
    if peak <= 0.0 {
        return vec![false; energies.len()];
    }
    let floor = peak * 10f64.powf(-threshold_db / 10.0);
    energies.iter().map(|&e| e >= floor).collect()
}

/// Mean power restricted to VAD-active regions; falls back to overall power
/// when nothing is active.
pub fn voiced_power(w: &Waveform, threshold_db: f64) -> f64 {
    let frame_len = (0.025 * w.sample_rate() as f64).round() as usize;
    let hop = (0.010 * w.sample_rate() as f64).round() as usize;
    let energies = frame_energies(w.samples(), frame_len.max(1), hop.max(1));
    let peak = energies.iter().cloned().fold(0.0_f64, f64::max);
    if peak <= 0.0 {
        return 0.0;
    }
    let floor = peak * 10f64.powf(-threshold_db / 10.0);
    let active: Vec<f64> = energies.iter().cloned().filter(|&e| e >= floor).collect();
    if active.is_empty() {
        w.power()
    } else {
        active.iter().sum::<f64>() / active.len() as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn tone(freq: f64, len: usize, rate: u32, amp: f64) -> Waveform {
        let samples = (0..len)
            .map(|i| amp * (2.0 * PI * freq * i as f64 / rate as f64).sin())
            .collect();
        Waveform::new(samples, rate)
    }

    #[test]
    fn silence_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("silence.wav");
        write_wav(&Waveform::silence(16_000, 16_000), &p).unwrap();
        let back = read_wav(&p).unwrap();
        assert_eq!(back.len(), 16_000);
        assert_eq!(back.sample_rate(), 16_000);
        assert!(back.samples().iter().all(|&s| s == 0.0));
    }

    #[test]
    fn full_scale_pcm16_reads_as_just_below_one() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("full.wav");
        let spec = hound::WavSpec {
            channels: 1,
            sample_rate: 16_000,
            bits_per_sample: 16,
            sample_format: hound::SampleFormat::Int,
        };
        let mut wr = hound::WavWriter::create(&p, spec).unwrap();
        wr.write_sample(32767i16).unwrap();
        wr.finalize().unwrap();
        let w = read_wav(&p).unwrap();
        assert!((w.samples()[0] - 32767.0 / 32768.0).abs() < 1e-12);
    }

    #[test]
    fn stereo_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("stereo.wav");
        let spec = hound::WavSpec {
            channels: 2,
            sample_rate: 16_000,
            bits_per_sample: 16,
            sample_format: hound::SampleFormat::Int,
        };
        let mut wr = hound::WavWriter::create(&p, spec).unwrap();
        wr.write_sample(0i16).unwrap();
        wr.write_sample(0i16).unwrap();
        wr.finalize().unwrap();
        match read_wav(&p) {
            Err(Error::Multichannel { channels, .. }) => assert_eq!(channels, 2),
            other => panic!("expected multichannel error, got {other:?}"),
        }
    }

    #[test]
    fn float32_wav_reads() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("f32.wav");
        let spec = hound::WavSpec {
            channels: 1,
            sample_rate: 8_000,
            bits_per_sample: 32,
            sample_format: hound::SampleFormat::Float,
        };
        let mut wr = hound::WavWriter::create(&p, spec).unwrap();
        wr.write_sample(0.25f32).unwrap();
        wr.finalize().unwrap();
        let w = read_wav(&p).unwrap();
        assert_eq!(w.sample_rate(), 8_000);
        assert!((w.samples()[0] - 0.25).abs() < 1e-7);
    }

    #[test]
    fn roundtrip_error_within_one_lsb() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("rt.wav");
        let mut rng = 0x12345678u64;
        let samples: Vec<f64> = (0..4096)
            .map(|_| {
                rng = rng.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                ((rng >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
            })
            .collect();
        let w = Waveform::new(samples, 16_000);
        write_wav(&w, &p).unwrap();
        let back = read_wav(&p).unwrap();
        let max_err = w
            .samples()
            .iter()
            .zip(back.samples())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0_f64, f64::max);
        assert!(max_err <= 1.0 / 32768.0, "max_err = {max_err}");
    }

    #[test]
    fn out_of_range_sample_clips_to_full_scale() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("clip.wav");
        write_wav(&Waveform::new(vec![1.5, -1.5], 16_000), &p).unwrap();
        let back = read_wav(&p).unwrap();
        assert!((back.samples()[0] - 32767.0 / 32768.0).abs() < 1e-12);
        assert!((back.samples()[1] + 1.0).abs() < 1e-12);
    }

    #[test]
    fn empty_waveform_roundtrips() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("empty.wav");
        write_wav(&Waveform::silence(0, 16_000), &p).unwrap();
        let back = read_wav(&p).unwrap();
        assert!(back.is_empty());
    }

    #[test]
    fn resample_halves_length() {
        let w = tone(440.0, 16_000, 16_000, 0.5);
        let d = resample(&w, 8_000);
        assert_eq!(d.len(), 8_000);
        assert_eq!(d.sample_rate(), 8_000);
    }

    #[test]
    fn resample_same_rate_is_identity() {
        let w = tone(440.0, 1000, 16_000, 0.5);
        let r = resample(&w, 16_000);
        assert_eq!(r.len(), w.len());
        let max_diff = w
            .samples()
            .iter()
            .zip(r.samples())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0_f64, f64::max);
        assert!(max_diff < 1e-6);
    }

    #[test]
    fn downsample_kills_out_of_band_tone() {
        // 6 kHz cannot survive a trip through 8 kHz sampling.
        let w = tone(6_000.0, 16_000, 16_000, 0.5);
        let down = resample(&w, 8_000);
        let up = resample(&down, 16_000);
        let probe = |s: &[f64]| {
            // Goertzel-style single-bin power at 6 kHz.
            let n = s.len();
            let (mut re, mut im) = (0.0, 0.0);
            for (i, &v) in s.iter().enumerate() {
                let ph = 2.0 * PI * 6_000.0 * i as f64 / 16_000.0;
                re += v * ph.cos();
                im += v * ph.sin();
            }
            (re * re + im * im) / (n * n) as f64
        };
        let before = probe(w.samples());
        let after = probe(up.samples());
        let atten_db = 10.0 * (before / after.max(1e-300)).log10();
        assert!(atten_db >= 40.0, "attenuation only {atten_db:.1} dB");
    }

    #[test]
    fn vad_flags_loud_frames() {
        let rate = 16_000;
        let mut samples = vec![0.0; 8_000];
        samples.extend(tone(1_000.0, 8_000, rate, 0.5).into_samples());
        let mask = energy_vad(&samples, rate, 30.0);
        assert!(!mask[0]);
        assert!(mask[mask.len() - 1]);
    }
}
