//! Shared test oracles, written independently of the library internals.
//!
//! The LFCC reference here uses rustfft and plain scalar loops rather than
//! the library's matrix pipeline; the EER reference sweeps every candidate
//! threshold by brute force. Both exist to pin the production code to an
//! independent computation of the same definitions.

#![allow(dead_code)]

use ndarray::Array2;
use rustfft::{num_complex::Complex, FftPlanner};

/// Reference LFCC: framing, Hamming window, FFT power spectrum, linear
/// triangular filter bank, log, orthonormal DCT-II, truncation, and
/// (optionally) delta / delta-delta appended along the coefficient axis.
/// Returns (frames, dim).
pub struct RefLfcc {
    pub sample_rate: u32,
    pub win_len: usize,
    pub hop: usize,
    pub n_filters: usize,
    pub n_coeffs: usize,
    pub with_deltas: bool,
    pub log_floor: f64,
}

impl RefLfcc {
    pub fn extract(&self, samples: &[f64]) -> Array2<f64> {
        assert!(samples.len() >= self.win_len, "input shorter than window");
        let n_frames = (samples.len() - self.win_len) / self.hop + 1;
        let n_bins = self.win_len / 2 + 1;

        // Hamming window.
        let window: Vec<f64> = (0..self.win_len)
            .map(|n| {
                0.54 - 0.46
                    * (2.0 * std::f64::consts::PI * n as f64 / (self.win_len - 1) as f64).cos()
            })
            .collect();

        // Power spectra via FFT.
        let mut planner = FftPlanner::new();
        let fft = planner.plan_fft_forward(self.win_len);
        let mut power = vec![vec![0.0f64; n_bins]; n_frames];
        for f in 0..n_frames {
            let mut buf: Vec<Complex<f64>> = (0..self.win_len)
                .map(|j| Complex::new(samples[f * self.hop + j] * window[j], 0.0))
                .collect();
            fft.process(&mut buf);
            for b in 0..n_bins {
                power[f][b] = buf[b].norm_sqr();
            }
        }

        // Linear triangular filter bank over 0..Nyquist.
        let nyquist = self.sample_rate as f64 / 2.0;
        let edge = |i: usize| i as f64 * nyquist / (self.n_filters + 1) as f64;
        let bin_freq = |b: usize| b as f64 * self.sample_rate as f64 / self.win_len as f64;
        let mut fbank_energy = vec![vec![0.0f64; self.n_filters]; n_frames];
        for i in 1..=self.n_filters {
            let (lo, mid, hi) = (edge(i - 1), edge(i), edge(i + 1));
            for b in 0..n_bins {
                let f = bin_freq(b);
                let w = if f >= lo && f < mid {
                    (f - lo) / (mid - lo)
                } else if f >= mid && f <= hi {
                    (hi - f) / (hi - mid)
                } else {
                    0.0
                };
                if w > 0.0 {
                    for fr in 0..n_frames {
                        fbank_energy[fr][i - 1] += w * power[fr][b];
                    }
                }
            }
        }

        // Log then orthonormal DCT-II, truncated.
        let n = self.n_filters as f64;
        let mut ceps = Array2::zeros((n_frames, self.n_coeffs));
        for fr in 0..n_frames {
            for k in 0..self.n_coeffs {
                let scale = if k == 0 { (1.0 / n).sqrt() } else { (2.0 / n).sqrt() };
                let mut acc = 0.0;
                for (j, &e) in fbank_energy[fr].iter().enumerate() {
                    acc += (e + self.log_floor).ln()
                        * (std::f64::consts::PI * k as f64 * (2 * j + 1) as f64 / (2.0 * n)).cos();
                }
                ceps[[fr, k]] = scale * acc;
            }
        }

        if !self.with_deltas {
            return ceps;
        }

        // Regression deltas, +/-2 frame window, replicated edges.
        let delta_of = |m: &Array2<f64>| -> Array2<f64> {
            let frames = m.dim().0;
            let clampi = |t: isize| t.clamp(0, frames as isize - 1) as usize;
            let mut d = Array2::zeros(m.dim());
            for t in 0..frames {
                for c in 0..m.dim().1 {
                    let mut acc = 0.0;
                    for n in 1..=2isize {
                        acc += n as f64
                            * (m[[clampi(t as isize + n), c]] - m[[clampi(t as isize - n), c]]);
                    }
                    d[[t, c]] = acc / 10.0;
                }
            }
            d
        };
        let d1 = delta_of(&ceps);
        let d2 = delta_of(&d1);
        let mut out = Array2::zeros((n_frames, self.n_coeffs * 3));
        for fr in 0..n_frames {
            for c in 0..self.n_coeffs {
                out[[fr, c]] = ceps[[fr, c]];
                out[[fr, self.n_coeffs + c]] = d1[[fr, c]];
                out[[fr, 2 * self.n_coeffs + c]] = d2[[fr, c]];
            }
        }
        out
    }
}

/// Brute-force EER: tries a threshold at every midpoint between adjacent
/// distinct scores (plus outer sentinels), finds where FAR crosses FRR,
/// and linearly interpolates between the two bracketing operating points.
/// Returns (eer, threshold).
pub fn brute_force_eer(pos: &[f64], neg: &[f64]) -> (f64, f64) {
    assert!(!pos.is_empty() && !neg.is_empty());
    let far_frr = |t: f64| -> (f64, f64) {
        let far = neg.iter().filter(|&&s| s >= t).count() as f64 / neg.len() as f64;
        let frr = pos.iter().filter(|&&s| s < t).count() as f64 / pos.len() as f64;
        (far, frr)
    };
    // Candidate thresholds: every distinct score (where the step functions
    // jump), sorted ascending.
    let mut cands: Vec<f64> = pos.iter().chain(neg.iter()).cloned().collect();
    cands.sort_by(|a, b| a.partial_cmp(b).expect("finite scores"));
    cands.dedup();

    // d(t) = FAR(t) - FRR(t) is non-increasing...wrong way: FAR decreases,
    // FRR increases with t, so d decreases. Walk candidates until d < 0,
    // then interpolate between the bracketing operating points.
    let mut prev_t = f64::NEG_INFINITY;
    let (mut prev_far, mut prev_frr) = far_frr(prev_t); // (1, 0)
    for &t in &cands {
        let (far, frr) = far_frr(t);
        if far <= frr {
            if (far - frr).abs() < 1e-15 {
                return (far, t);
            }
            // Crossing happened between prev and here.
            let d0 = prev_far - prev_frr;
            let d1 = far - frr;
            let alpha = d0 / (d0 - d1);
            let eer = prev_far + alpha * (far - prev_far);
            let thr = if prev_t.is_finite() { prev_t } else { t };
            return (eer, thr);
        }
        prev_t = t;
        prev_far = far;
        prev_frr = frr;
    }
    // FAR stayed above FRR for all finite thresholds; the crossing sits
    // past the top score where FAR drops to 0.
    let top = *cands.last().expect("nonempty") + 1.0;
    let (far, frr) = far_frr(top); // (0, 1)
    let d0 = prev_far - prev_frr;
    let d1 = far - frr;
    let alpha = d0 / (d0 - d1);
    let eer = prev_far + alpha * (far - prev_far);
    (eer, prev_t)
}

/// Deterministic xorshift for test data, independent of the library RNG.
pub struct TestRng(u64);

impl TestRng {
    pub fn new(seed: u64) -> Self {
        TestRng(seed.wrapping_mul(0x9E3779B97F4A7C15) | 1)
    }

    pub fn next_u64(&mut self) -> u64 {
        self.0 ^= self.0 << 13;
        self.0 ^= self.0 >> 7;
        self.0 ^= self.0 << 17;
        self.0
    }

    /// Uniform in [0, 1).
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 / (1u64 << 53) as f64
    }

    /// Uniform in [lo, hi).
    pub fn range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }
}
