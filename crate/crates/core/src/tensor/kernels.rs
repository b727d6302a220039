//! Raw numeric kernels shared by the graph ops.

/// `c = alpha * op(a) * op(b) + beta * c` on row-major buffers, where the
/// transposes are expressed through strides.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    a_trans: bool,
    b: &[f64],
    b_trans: bool,
    c: &mut [f64],
    beta: f64,
) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    // a is stored as (m, k) or, when transposed, as (k, m)
    let (rsa, csa) = if a_trans { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if b_trans { (1, k as isize) } else { (n as isize, 1) };
    // SAFETY: the slices have exactly the lengths the strides address
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct ConvGeom {
    pub batch: usize,
    pub cin: usize,
    pub h: usize,
    pub w: usize,
    pub cout: usize,
    pub kh: usize,
    pub kw: usize,
    pub stride: usize,
    pub pad: usize,
    pub ho: usize,
    pub wo: usize,
}

impl ConvGeom {
    pub fn patch(&self) -> usize {
        self.cin * self.kh * self.kw
    }

    pub fn positions(&self) -> usize {
        self.batch * self.ho * self.wo
    }
}

/// Unfold `x` (B, Cin, H, W) into a (Cin*kh*kw, B*Ho*Wo) column matrix.
pub(crate) fn im2col(x: &[f64], g: &ConvGeom) -> Vec<f64> {
    let npos = g.positions();
    let plane = g.ho * g.wo;
    let mut cols = vec![0.0; g.patch() * npos];
    for c in 0..g.cin {
        for ki in 0..g.kh {
            for kj in 0..g.kw {
                let row = (c * g.kh + ki) * g.kw + kj;
                let dst_row = &mut cols[row * npos..(row + 1) * npos];
                for b in 0..g.batch {
                    let src = &x[(b * g.cin + c) * g.h * g.w..(b * g.cin + c + 1) * g.h * g.w];
                    let dst = &mut dst_row[b * plane..(b + 1) * plane];
                    for oi in 0..g.ho {
                        let ii = (oi * g.stride + ki) as isize - g.pad as isize;
                        if ii < 0 || ii >= g.h as isize {
                            continue;
                        }
                        let src_row = &src[ii as usize * g.w..(ii as usize + 1) * g.w];
                        for oj in 0..g.wo {
                            let jj = (oj * g.stride + kj) as isize - g.pad as isize;
                            if jj >= 0 && jj < g.w as isize {
                                dst[oi * g.wo + oj] = src_row[jj as usize];
                            }
                        }
                    }
                }
            }
        }
    }
    cols
}

/// Adjoint of [`im2col`]: scatter-add columns back into an image gradient.
pub(crate) fn col2im(cols: &[f64], g: &ConvGeom, dx: &mut [f64]) {
    let npos = g.positions();
    let plane = g.ho * g.wo;
    for c in 0..g.cin {
        for ki in 0..g.kh {
            for kj in 0..g.kw {
                let row = (c * g.kh + ki) * g.kw + kj;
                let src_row = &cols[row * npos..(row + 1) * npos];
                for b in 0..g.batch {
                    let dst = &mut dx[(b * g.cin + c) * g.h * g.w..(b * g.cin + c + 1) * g.h * g.w];
                    let src = &src_row[b * plane..(b + 1) * plane];
                    for oi in 0..g.ho {
                        let ii = (oi * g.stride + ki) as isize - g.pad as isize;
                        if ii < 0 || ii >= g.h as isize {
                            continue;
                        }
                        for oj in 0..g.wo {
                            let jj = (oj * g.stride + kj) as isize - g.pad as isize;
                            if jj >= 0 && jj < g.w as isize {
                                dst[ii as usize * g.w + jj as usize] += src[oi * g.wo + oj];
                            }
                        }
                    }
                }
            }
        }
    }
}

/// 2x2 stride-2 max pooling over (B, C, H, W); returns values and the flat
/// input index of each window's maximum (first maximum on ties).
pub(crate) fn maxpool2(x: &[f64], bc: usize, h: usize, w: usize) -> (Vec<f64>, Vec<usize>) {
    let (ho, wo) = (h / 2, w / 2);
    let mut out = Vec::with_capacity(bc * ho * wo);
    let mut arg = Vec::with_capacity(bc * ho * wo);
    for p in 0..bc {
        let base = p * h * w;
        for i in 0..ho {
            for j in 0..wo {
                let mut best = base + 2 * i * w + 2 * j;
                for (di, dj) in [(0, 1), (1, 0), (1, 1)] {
                    let idx = base + (2 * i + di) * w + 2 * j + dj;
                    if x[idx] > x[best] {
                        best = idx;
                    }
                }
                out.push(x[best]);
                arg.push(best);
            }
        }
    }
    (out, arg)
}
