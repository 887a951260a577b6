//! Dense CHW activations and the convolution kernels used by the network.
//!
//! 3x3 convolutions use one pixel of mirrored padding; 1x1 convolutions use
//! none. Work is split across output (or input) channels so results do not
//! depend on the thread count.

use rayon::prelude::*;

use crate::image::reflect_index;

/// Channel-major activation map.
#[derive(Clone, Debug, PartialEq)]
pub struct Act {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<f64>,
}

impl Act {
    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        Self { channels, height, width, data: vec![0.0; channels * height * width] }
    }

    #[inline]
    pub fn plane(&self, c: usize) -> &[f64] {
        let n = self.height * self.width;
        &self.data[c * n..(c + 1) * n]
    }

    pub fn same_shape(&self) -> Self {
        Self::zeros(self.channels, self.height, self.width)
    }

    pub fn add_assign(&mut self, other: &Act) {
        debug_assert_eq!(self.data.len(), other.data.len());
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }
}

/// Geometry of one convolution layer.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvShape {
    pub cin: usize,
    pub cout: usize,
    pub kernel: usize,
    pub stride: usize,
}

impl ConvShape {
    pub fn weight_len(&self) -> usize {
        self.cout * self.cin * self.kernel * self.kernel
    }

    fn pad(&self) -> usize {
        self.kernel / 2
    }

    pub fn output_dims(&self, h: usize, w: usize) -> (usize, usize) {
        let p = self.pad();
        ((h + 2 * p - self.kernel) / self.stride + 1, (w + 2 * p - self.kernel) / self.stride + 1)
    }
}

/// Mirror-pads every channel by `pad` pixels.
fn pad_reflect(x: &Act, pad: usize) -> (Vec<f64>, usize, usize) {
    if pad == 0 {
        return (x.data.clone(), x.height, x.width);
    }
    let (ph, pw) = (x.height + 2 * pad, x.width + 2 * pad);
    let mut out = vec![0.0; x.channels * ph * pw];
    for c in 0..x.channels {
        let src = x.plane(c);
        let dst = &mut out[c * ph * pw..(c + 1) * ph * pw];
        for r in 0..ph {
            let sr = reflect_index(r as isize - pad as isize, x.height);
            let srow = &src[sr * x.width..(sr + 1) * x.width];
            let drow = &mut dst[r * pw..(r + 1) * pw];
            drow[pad..pad + x.width].copy_from_slice(srow);
            for k in 0..pad {
                drow[k] = srow[reflect_index(k as isize - pad as isize, x.width)];
                drow[pad + x.width + k] = srow[reflect_index((x.width + k) as isize, x.width)];
            }
        }
    }
    (out, ph, pw)
}

/// Adds a padded gradient plane back onto the unpadded positions it mirrors.
fn unpad_reflect_add(gpad: &[f64], ph: usize, pw: usize, pad: usize, h: usize, w: usize, out: &mut [f64]) {
    for r in 0..ph {
        let sr = reflect_index(r as isize - pad as isize, h);
        for c in 0..pw {
            let sc = reflect_index(c as isize - pad as isize, w);
            out[sr * w + sc] += gpad[r * pw + c];
        }
    }
}

pub fn conv_forward(x: &Act, shape: ConvShape, weight: &[f64], bias: &[f64]) -> Act {
    debug_assert_eq!(x.channels, shape.cin);
    let k = shape.kernel;
    let s = shape.stride;
    let (padded, ph, pw) = pad_reflect(x, shape.pad());
    let (oh, ow) = shape.output_dims(x.height, x.width);
    let plane = oh * ow;
    let mut data = vec![0.0; shape.cout * plane];
    data.par_chunks_mut(plane).enumerate().for_each(|(co, out)| {
        out.fill(bias[co]);
        for ci in 0..shape.cin {
            let src = &padded[ci * ph * pw..(ci + 1) * ph * pw];
            let wk = &weight[(co * shape.cin + ci) * k * k..(co * shape.cin + ci + 1) * k * k];
            for oy in 0..oh {
                let orow = &mut out[oy * ow..(oy + 1) * ow];
                for ky in 0..k {
                    let prow = &src[(oy * s + ky) * pw..(oy * s + ky + 1) * pw];
                    for kx in 0..k {
                        let wv = wk[ky * k + kx];
                        if s == 1 {
                            for (o, &v) in orow.iter_mut().zip(&prow[kx..kx + ow]) {
                                *o += wv * v;
                            }
                        } else {
                            for (ox, o) in orow.iter_mut().enumerate() {
                                *o += wv * prow[ox * s + kx];
                            }
                        }
                    }
                }
            }
        }
    });
    Act { channels: shape.cout, height: oh, width: ow, data }
}

/// Gradients of a convolution given the upstream gradient `g`.
/// Returns (d input, d weight, d bias).
pub fn conv_backward(
    x: &Act,
    shape: ConvShape,
    weight: &[f64],
    g: &Act,
) -> (Act, Vec<f64>, Vec<f64>) {
    let k = shape.kernel;
    let s = shape.stride;
    let pad = shape.pad();
    let (padded, ph, pw) = pad_reflect(x, pad);
    let (oh, ow) = (g.height, g.width);

    let gb: Vec<f64> = (0..shape.cout).map(|co| g.plane(co).iter().sum()).collect();

    let kk = k * k;
    let mut gw = vec![0.0; shape.weight_len()];
    gw.par_chunks_mut(shape.cin * kk).enumerate().for_each(|(co, gw_co)| {
        let gp = g.plane(co);
        for ci in 0..shape.cin {
            let src = &padded[ci * ph * pw..(ci + 1) * ph * pw];
            for ky in 0..k {
                for kx in 0..k {
                    let mut acc = 0.0;
                    for oy in 0..oh {
                        let grow = &gp[oy * ow..(oy + 1) * ow];
                        let prow = &src[(oy * s + ky) * pw..(oy * s + ky + 1) * pw];
                        if s == 1 {
                            acc += grow.iter().zip(&prow[kx..kx + ow]).map(|(a, b)| a * b).sum::<f64>();
                        } else {
                            for (ox, &gv) in grow.iter().enumerate() {
                                acc += gv * prow[ox * s + kx];
                            }
                        }
                    }
                    gw_co[ci * kk + ky * k + kx] = acc;
                }
            }
        }
    });

    let mut gx = Act::zeros(x.channels, x.height, x.width);
    let in_plane = x.height * x.width;
    gx.data.par_chunks_mut(in_plane).enumerate().for_each(|(ci, gx_ci)| {
        let mut gpad = vec![0.0; ph * pw];
        for co in 0..shape.cout {
            let gp = g.plane(co);
            let wk = &weight[(co * shape.cin + ci) * kk..(co * shape.cin + ci + 1) * kk];
            for oy in 0..oh {
                let grow = &gp[oy * ow..(oy + 1) * ow];
                for ky in 0..k {
                    let drow = &mut gpad[(oy * s + ky) * pw..(oy * s + ky + 1) * pw];
                    for kx in 0..k {
                        let wv = wk[ky * k + kx];
                        if s == 1 {
                            for (d, &gv) in drow[kx..kx + ow].iter_mut().zip(grow) {
                                *d += wv * gv;
                            }
                        } else {
                            for (ox, &gv) in grow.iter().enumerate() {
                                drow[ox * s + kx] += wv * gv;
                            }
                        }
                    }
                }
            }
        }
        if pad == 0 {
            gx_ci.copy_from_slice(&gpad);
        } else {
            unpad_reflect_add(&gpad, ph, pw, pad, x.height, x.width, gx_ci);
        }
    });
    (gx, gw, gb)
}

pub fn leaky_relu(z: &Act, slope: f64) -> Act {
    Act {
        channels: z.channels,
        height: z.height,
        width: z.width,
        data: z.data.iter().map(|&v| if v > 0.0 { v } else { slope * v }).collect(),
    }
}

/// `g * d leaky_relu(z) / dz`
pub fn leaky_relu_backward(z: &Act, g: &Act, slope: f64) -> Act {
    Act {
        channels: z.channels,
        height: z.height,
        width: z.width,
        data: z.data.iter().zip(&g.data).map(|(&v, &gv)| if v > 0.0 { gv } else { slope * gv }).collect(),
    }
}

pub fn upsample_nearest2(x: &Act) -> Act {
    let (h, w) = (x.height * 2, x.width * 2);
    let mut out = Act::zeros(x.channels, h, w);
    for c in 0..x.channels {
        let src = x.plane(c);
        let dst = &mut out.data[c * h * w..(c + 1) * h * w];
        for r in 0..h {
            let srow = &src[(r / 2) * x.width..(r / 2 + 1) * x.width];
            for (col, d) in dst[r * w..(r + 1) * w].iter_mut().enumerate() {
                *d = srow[col / 2];
            }
        }
    }
    out
}

pub fn upsample_nearest2_backward(g: &Act) -> Act {
    let (h, w) = (g.height / 2, g.width / 2);
    let mut out = Act::zeros(g.channels, h, w);
    for c in 0..g.channels {
        let src = g.plane(c);
        let dst = &mut out.data[c * h * w..(c + 1) * h * w];
        for r in 0..g.height {
            for col in 0..g.width {
                dst[(r / 2) * w + col / 2] += src[r * g.width + col];
            }
        }
    }
    out
}

/// Stacks `a` then `b` along the channel axis.
pub fn concat(a: &Act, b: &Act) -> Act {
    debug_assert_eq!((a.height, a.width), (b.height, b.width));
    let mut data = Vec::with_capacity(a.data.len() + b.data.len());
    data.extend_from_slice(&a.data);
    data.extend_from_slice(&b.data);
    Act { channels: a.channels + b.channels, height: a.height, width: a.width, data }
}

pub fn split(g: &Act, first_channels: usize) -> (Act, Act) {
    let n = first_channels * g.height * g.width;
    (
        Act { channels: first_channels, height: g.height, width: g.width, data: g.data[..n].to_vec() },
        Act {
            channels: g.channels - first_channels,
            height: g.height,
            width: g.width,
            data: g.data[n..].to_vec(),
        },
    )
}
