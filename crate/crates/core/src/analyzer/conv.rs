//! Dense 2D convolution over channel-major `[C][H][W]` buffers with optional
//! raster-order causal masks, plus the matching backward pass.
//!
//! Every output element accumulates `bias`, then taps in `(in_channel, tap)`
//! order. The row range only bounds the loops, so running the same layer on
//! the top `r` rows of an image produces bit-identical values for those rows
//! whenever the mask hides everything below the current row.

/// Which kernel taps are visible.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mask {
    /// All taps.
    Full,
    /// Strictly earlier pixels in raster order (first causal layer).
    Causal,
    /// Earlier pixels plus the centre (subsequent causal layers).
    CausalWithCentre,
}

impl Mask {
    pub fn allows(self, dy: isize, dx: isize) -> bool {
        match self {
            Mask::Full => true,
            Mask::Causal => dy < 0 || (dy == 0 && dx < 0),
            Mask::CausalWithCentre => dy < 0 || (dy == 0 && dx <= 0),
        }
    }

    /// True when no visible tap reaches a later row.
    pub fn is_causal(self) -> bool {
        !matches!(self, Mask::Full)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConvLayer {
    pub cin: usize,
    pub cout: usize,
    pub kernel: usize,
    pub mask: Mask,
    taps: Vec<(usize, isize, isize)>,
}

impl ConvLayer {
    pub fn new(cin: usize, cout: usize, kernel: usize, mask: Mask) -> Self {
        assert!(kernel % 2 == 1, "kernel size must be odd");
        let half = (kernel / 2) as isize;
        let mut taps = Vec::new();
        for ky in 0..kernel {
            for kx in 0..kernel {
                let (dy, dx) = (ky as isize - half, kx as isize - half);
                if mask.allows(dy, dx) {
                    taps.push((ky * kernel + kx, dy, dx));
                }
            }
        }
        Self {
            cin,
            cout,
            kernel,
            mask,
            taps,
        }
    }

    pub fn weight_len(&self) -> usize {
        self.cout * self.cin * self.kernel * self.kernel
    }

    pub fn weight_shape(&self) -> Vec<usize> {
        vec![self.cout, self.cin, self.kernel, self.kernel]
    }

    /// Number of visible inputs feeding one output (for initialization).
    pub fn fan_in(&self) -> usize {
        self.cin * self.taps.len()
    }

    pub fn is_tap_visible(&self, tap: usize) -> bool {
        self.taps.iter().any(|&(t, _, _)| t == tap)
    }

    #[inline]
    fn widx(&self, o: usize, c: usize, tap: usize) -> usize {
        (o * self.cin + c) * self.kernel * self.kernel + tap
    }

    pub fn forward(
        &self,
        weights: &[f64],
        bias: &[f64],
        input: &[f64],
        height: usize,
        width: usize,
        out: &mut [f64],
    ) {
        let plane = height * width;
        debug_assert_eq!(input.len(), self.cin * plane);
        debug_assert_eq!(out.len(), self.cout * plane);
        for o in 0..self.cout {
            let dst = &mut out[o * plane..(o + 1) * plane];
            dst.fill(bias[o]);
            for c in 0..self.cin {
                let src = &input[c * plane..(c + 1) * plane];
                for &(tap, dy, dx) in &self.taps {
                    let w = weights[self.widx(o, c, tap)];
                    let (y0, y1) = span(height, dy);
                    let (x0, x1) = span(width, dx);
                    for y in y0..y1 {
                        let sy = (y as isize + dy) as usize;
                        let d = &mut dst[y * width + x0..y * width + x1];
                        let sx0 = (x0 as isize + dx) as usize;
                        let s = &src[sy * width + sx0..sy * width + sx0 + (x1 - x0)];
                        for (dv, sv) in d.iter_mut().zip(s) {
                            *dv += w * sv;
                        }
                    }
                }
            }
        }
    }

    /// Accumulates parameter gradients and (optionally) the input gradient.
    #[allow(clippy::too_many_arguments)]
    pub fn backward(
        &self,
        weights: &[f64],
        input: &[f64],
        grad_out: &[f64],
        height: usize,
        width: usize,
        grad_w: &mut [f64],
        grad_b: &mut [f64],
        mut grad_in: Option<&mut [f64]>,
    ) {
        let plane = height * width;
        for o in 0..self.cout {
            let g = &grad_out[o * plane..(o + 1) * plane];
            grad_b[o] += g.iter().sum::<f64>();
            for c in 0..self.cin {
                let src = &input[c * plane..(c + 1) * plane];
                for &(tap, dy, dx) in &self.taps {
                    let wi = self.widx(o, c, tap);
                    let w = weights[wi];
                    let (y0, y1) = span(height, dy);
                    let (x0, x1) = span(width, dx);
                    let n = x1 - x0;
                    let mut acc = 0.0;
                    for y in y0..y1 {
                        let sy = (y as isize + dy) as usize;
                        let sx0 = (x0 as isize + dx) as usize;
                        let gr = &g[y * width + x0..y * width + x1];
                        let s = &src[sy * width + sx0..sy * width + sx0 + n];
                        acc += gr.iter().zip(s).map(|(a, b)| a * b).sum::<f64>();
                        if let Some(gi) = grad_in.as_deref_mut() {
                            let gi = &mut gi[c * plane + sy * width + sx0..c * plane + sy * width + sx0 + n];
                            for (d, gv) in gi.iter_mut().zip(gr) {
                                *d += w * gv;
                            }
                        }
                    }
                    grad_w[wi] += acc;
                }
            }
        }
    }
}

/// Output index range `[lo, hi)` along one axis for which `i + d` is in bounds.
#[inline]
fn span(len: usize, d: isize) -> (usize, usize) {
    let lo = (-d).max(0) as usize;
    let hi = (len as isize - d.max(0)).max(lo as isize) as usize;
    (lo.min(len), hi.min(len))
}

#[inline]
pub fn elu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        x.exp_m1()
    }
}

#[inline]
pub fn elu_grad(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else {
        x.exp()
    }
}
