//! 1-D convolution kernels shared by forward and backward passes.
//!
//! Layout: signals are (channels, time); conv weights are
//! (out_ch, in_ch * k) row-major in k; transposed-conv weights are
//! (in_ch, out_ch * k). The three kernels below cover conv1d and
//! conv_transpose1d in both directions through role swaps:
//!
//!   convt_fwd(x, w)  = conv_dx(dy = x, w)
//!   convt_dx(dy, w)  = conv_fwd(x = dy, w)
//!   convt_dw(x, dy)  = conv_dw(x = dy, dy = x)

use ndarray::Array2;

/// Geometry of a 1-D convolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeom {
    pub kernel: usize,
    pub stride: usize,
    pub dilation: usize,
    pub padding: usize,
}

impl ConvGeom {
    pub fn new(kernel: usize, stride: usize, dilation: usize, padding: usize) -> Self {
        assert!(kernel > 0 && stride > 0 && dilation > 0);
        ConvGeom {
            kernel,
            stride,
            dilation,
            padding,
        }
    }

    /// Output length of a forward convolution over `t` input steps.
    pub fn conv_out_len(&self, t: usize) -> usize {
        let span = self.dilation * (self.kernel - 1) + 1;
        let padded = t + 2 * self.padding;
        assert!(padded >= span, "input too short for kernel span");
        (padded - span) / self.stride + 1
    }

    /// Output length of a transposed convolution over `t` input steps.
    pub fn convt_out_len(&self, t: usize) -> usize {
        assert!(t > 0);
        let grown = (t - 1) * self.stride + self.dilation * (self.kernel - 1) + 1;
        assert!(grown >= 2 * self.padding, "padding exceeds output");
        grown - 2 * self.padding
    }
}

/// Forward convolution: y[o, t] = Σ_{i,k} w[o, i*K+k] · x[i, t·s + k·d − p].
pub fn conv_fwd(x: &Array2<f64>, w: &Array2<f64>, g: ConvGeom) -> Array2<f64> {
    let (c_in, t_in) = x.dim();
    let (c_out, wk) = w.dim();
    assert_eq!(wk, c_in * g.kernel, "weight columns must be in_ch * kernel");
    let t_out = g.conv_out_len(t_in);
    let mut y = Array2::zeros((c_out, t_out));
    for o in 0..c_out {
        for i in 0..c_in {
            for k in 0..g.kernel {
                let wv = w[[o, i * g.kernel + k]];
                if wv == 0.0 {
                    continue;
                }
                let off = (k * g.dilation) as isize - g.padding as isize;
                for t in 0..t_out {
                    let src = (t * g.stride) as isize + off;
                    if src >= 0 && (src as usize) < t_in {
                        y[[o, t]] += wv * x[[i, src as usize]];
                    }
                }
            }
        }
    }
    y
}

/// Gradient of a forward convolution w.r.t. its input.
///
/// Scatters dy back: dx[i, t·s + k·d − p] += w[o, i*K+k] · dy[o, t].
pub fn conv_dx(dy: &Array2<f64>, w: &Array2<f64>, g: ConvGeom, t_in: usize) -> Array2<f64> {
    let (c_out, t_out) = dy.dim();
    let (wc_out, wk) = w.dim();
    assert_eq!(c_out, wc_out);
    let c_in = wk / g.kernel;
    assert_eq!(wk, c_in * g.kernel);
    let mut dx = Array2::zeros((c_in, t_in));
    for o in 0..c_out {
        for i in 0..c_in {
            for k in 0..g.kernel {
                let wv = w[[o, i * g.kernel + k]];
                if wv == 0.0 {
                    continue;
                }
                let off = (k * g.dilation) as isize - g.padding as isize;
                for t in 0..t_out {
                    let dst = (t * g.stride) as isize + off;
                    if dst >= 0 && (dst as usize) < t_in {
                        dx[[i, dst as usize]] += wv * dy[[o, t]];
                    }
                }
            }
        }
    }
    dx
}

/// Gradient of a forward convolution w.r.t. its weights:
/// dw[o, i*K+k] = Σ_t dy[o, t] · x[i, t·s + k·d − p].
pub fn conv_dw(x: &Array2<f64>, dy: &Array2<f64>, g: ConvGeom) -> Array2<f64> {
    let (c_in, t_in) = x.dim();
    let (c_out, t_out) = dy.dim();
    let mut dw = Array2::zeros((c_out, c_in * g.kernel));
    for o in 0..c_out {
        for i in 0..c_in {
            for k in 0..g.kernel {
                let off = (k * g.dilation) as isize - g.padding as isize;
                let mut acc = 0.0;
                for t in 0..t_out {
                    let src = (t * g.stride) as isize + off;
                    if src >= 0 && (src as usize) < t_in {
                        acc += dy[[o, t]] * x[[i, src as usize]];
                    }
                }
                dw[[o, i * g.kernel + k]] = acc;
            }
        }
    }
    dw
}

/// Transposed convolution forward, weight layout (in_ch, out_ch * k):
/// y[o, u] = Σ_{i,t,k : u = t·s + k·d − p} w[i, o*K+k] · x[i, t].
pub fn convt_fwd(x: &Array2<f64>, w: &Array2<f64>, g: ConvGeom) -> Array2<f64> {
    let t_out = g.convt_out_len(x.dim().1);
    conv_dx(x, w, g, t_out)
}

/// Gradient of transposed convolution w.r.t. its input.
pub fn convt_dx(dy: &Array2<f64>, w: &Array2<f64>, g: ConvGeom) -> Array2<f64> {
    conv_fwd(dy, w, g)
}

/// Gradient of transposed convolution w.r.t. its weights,
/// returned in (in_ch, out_ch * k) layout.
pub fn convt_dw(x: &Array2<f64>, dy: &Array2<f64>, g: ConvGeom) -> Array2<f64> {
    conv_dw(dy, x, g)
}
