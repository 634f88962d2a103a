//! Forward and analytic backward passes for the layer family.
//!
//! Conventions: batches are the leading axis, conv layers use stride 1 with
//! zero padding that preserves the spatial size (odd kernels only), and every
//! backward consumes the cached forward input.

use crate::error::{CtaError, Result};
use crate::numerics::tensor::Tensor;

// ── dense ───────────────────────────────────────────────────────────────

/// `y[n][o] = b[o] + Σ_i w[o][i] x[n][i]`
pub fn dense_forward(x: &Tensor, w: &Tensor, b: &Tensor) -> Result<Tensor> {
    let [n, inputs] = *x.shape() else {
        return Err(CtaError::shape("dense input", "rank 2 (N×I)", format!("{:?}", x.shape())));
    };
    let [outputs, w_in] = *w.shape() else {
        return Err(CtaError::shape("dense weight", "rank 2 (O×I)", format!("{:?}", w.shape())));
    };
    if w_in != inputs || b.len() != outputs {
        return Err(CtaError::shape(
            "dense",
            format!("weight O×{inputs}, bias len O"),
            format!("weight {:?}, bias len {}", w.shape(), b.len()),
        ));
    }
    let (xd, wd, bd) = (x.data(), w.data(), b.data());
    let mut y = vec![0.0; n * outputs];
    for row in 0..n {
        let xr = &xd[row * inputs..(row + 1) * inputs];
        for o in 0..outputs {
            let wr = &wd[o * inputs..(o + 1) * inputs];
            let mut acc = bd[o];
            for i in 0..inputs {
                acc += wr[i] * xr[i];
            }
            y[row * outputs + o] = acc;
        }
    }
    Tensor::from_vec(&[n, outputs], y)
}

pub fn dense_backward(x: &Tensor, w: &Tensor, dy: &Tensor) -> Result<(Tensor, Tensor, Tensor)> {
    let [n, inputs] = *x.shape() else {
        return Err(CtaError::shape("dense input", "rank 2", format!("{:?}", x.shape())));
    };
    let [outputs, _] = *w.shape() else {
        return Err(CtaError::shape("dense weight", "rank 2", format!("{:?}", w.shape())));
    };
    if dy.shape() != [n, outputs] {
        return Err(CtaError::shape("dense grad", format!("[{n}, {outputs}]"), format!("{:?}", dy.shape())));
    }
    let (xd, wd, gd) = (x.data(), w.data(), dy.data());
    let mut dx = vec![0.0; n * inputs];
    let mut dw = vec![0.0; outputs * inputs];
    let mut db = vec![0.0; outputs];
    for row in 0..n {
        let xr = &xd[row * inputs..(row + 1) * inputs];
        let dxr = &mut dx[row * inputs..(row + 1) * inputs];
        for o in 0..outputs {
            let g = gd[row * outputs + o];
            db[o] += g;
            let wr = &wd[o * inputs..(o + 1) * inputs];
            let dwr = &mut dw[o * inputs..(o + 1) * inputs];
            for i in 0..inputs {
                dxr[i] += g * wr[i];
                dwr[i] += g * xr[i];
            }
        }
    }
    Ok((
        Tensor::from_vec(&[n, inputs], dx)?,
        Tensor::from_vec(&[outputs, inputs], dw)?,
        Tensor::from_vec(&[outputs], db)?,
    ))
}

// ── conv2d ──────────────────────────────────────────────────────────────

fn conv_dims(x: &Tensor, w: &Tensor, b: &Tensor) -> Result<(usize, usize, usize, usize, usize, usize)> {
    let [n, c_in, h, width] = *x.shape() else {
        return Err(CtaError::shape("conv2d input", "rank 4 (N×C×H×W)", format!("{:?}", x.shape())));
    };
    let [c_out, wc_in, kh, kw] = *w.shape() else {
        return Err(CtaError::shape("conv2d kernel", "rank 4 (O×C×K×K)", format!("{:?}", w.shape())));
    };
    if wc_in != c_in {
        return Err(CtaError::shape("conv2d channels", c_in, wc_in));
    }
    if kh != kw || kh % 2 == 0 {
        return Err(CtaError::invalid("conv2d kernel", format!("kernel must be square and odd, got {kh}×{kw}")));
    }
    if b.len() != c_out {
        return Err(CtaError::shape("conv2d bias", c_out, b.len()));
    }
    Ok((n, c_in, h, width, c_out, kh))
}

/// Stride-1, same-padding 2-D convolution.
pub fn conv2d_forward(x: &Tensor, w: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (n, c_in, h, width, c_out, k) = conv_dims(x, w, b)?;
    let pad = k / 2;
    let (xd, wd, bd) = (x.data(), w.data(), b.data());
    let mut y = vec![0.0; n * c_out * h * width];
    let in_plane = h * width;
    for s in 0..n {
        let xs = &xd[s * c_in * in_plane..(s + 1) * c_in * in_plane];
        let ys = &mut y[s * c_out * in_plane..(s + 1) * c_out * in_plane];
        for o in 0..c_out {
            let wo = &wd[o * c_in * k * k..(o + 1) * c_in * k * k];
            let yplane = &mut ys[o * in_plane..(o + 1) * in_plane];
            yplane.fill(bd[o]);
            for oy in 0..h {
                let yrow = &mut yplane[oy * width..(oy + 1) * width];
                for c in 0..c_in {
                    let wc = &wo[c * k * k..(c + 1) * k * k];
                    for ky in 0..k {
                        let iy = oy + ky;
                        if iy < pad || iy >= h + pad {
                            continue;
                        }
                        let iy = iy - pad;
                        let xrow = &xs[c * in_plane + iy * width..c * in_plane + (iy + 1) * width];
                        for kx in 0..k {
                            let wv = wc[ky * k + kx];
                            let x0 = pad.saturating_sub(kx);
                            let x1 = (width + pad - kx).min(width);
                            for ox in x0..x1 {
                                yrow[ox] += wv * xrow[ox + kx - pad];
                            }
                        }
                    }
                }
            }
        }
    }
    Tensor::from_vec(&[n, c_out, h, width], y)
}

pub fn conv2d_backward(x: &Tensor, w: &Tensor, b: &Tensor, dy: &Tensor) -> Result<(Tensor, Tensor, Tensor)> {
    let (n, c_in, h, width, c_out, k) = conv_dims(x, w, b)?;
    if dy.shape() != [n, c_out, h, width] {
        return Err(CtaError::shape(
            "conv2d grad",
            format!("[{n}, {c_out}, {h}, {width}]"),
            format!("{:?}", dy.shape()),
        ));
    }
    let pad = k / 2;
    let (xd, wd, gd) = (x.data(), w.data(), dy.data());
    let in_plane = h * width;
    let mut dx = vec![0.0; xd.len()];
    let mut dw = vec![0.0; wd.len()];
    let mut db = vec![0.0; c_out];
    for s in 0..n {
        let xs = &xd[s * c_in * in_plane..(s + 1) * c_in * in_plane];
        let dxs = &mut dx[s * c_in * in_plane..(s + 1) * c_in * in_plane];
        let gs = &gd[s * c_out * in_plane..(s + 1) * c_out * in_plane];
        for o in 0..c_out {
            let gplane = &gs[o * in_plane..(o + 1) * in_plane];
            db[o] += gplane.iter().sum::<f64>();
            let wo = &wd[o * c_in * k * k..(o + 1) * c_in * k * k];
            let dwo = &mut dw[o * c_in * k * k..(o + 1) * c_in * k * k];
            for oy in 0..h {
                let grow = &gplane[oy * width..(oy + 1) * width];
                for c in 0..c_in {
                    let wc = &wo[c * k * k..(c + 1) * k * k];
                    let dwc = &mut dwo[c * k * k..(c + 1) * k * k];
                    for ky in 0..k {
                        let iy = oy + ky;
                        if iy < pad || iy >= h + pad {
                            continue;
                        }
                        let iy = iy - pad;
                        let xrow = &xs[c * in_plane + iy * width..c * in_plane + (iy + 1) * width];
                        let dxrow = &mut dxs[c * in_plane + iy * width..c * in_plane + (iy + 1) * width];
                        for kx in 0..k {
                            let wv = wc[ky * k + kx];
                            let x0 = pad.saturating_sub(kx);
                            let x1 = (width + pad - kx).min(width);
                            let mut wacc = 0.0;
                            for ox in x0..x1 {
                                let g = grow[ox];
                                wacc += g * xrow[ox + kx - pad];
                                dxrow[ox + kx - pad] += wv * g;
                            }
                            dwc[ky * k + kx] += wacc;
                        }
                    }
                }
            }
        }
    }
    Ok((
        Tensor::from_vec(x.shape(), dx)?,
        Tensor::from_vec(w.shape(), dw)?,
        Tensor::from_vec(&[c_out], db)?,
    ))
}

// ── relu ────────────────────────────────────────────────────────────────

pub fn relu_forward(x: &Tensor) -> Tensor {
    let mut y = x.clone();
    for v in y.data_mut() {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
    y
}

/// Passes gradient where the forward input was strictly positive.
pub fn relu_backward(x: &Tensor, dy: &Tensor) -> Result<Tensor> {
    if x.shape() != dy.shape() {
        return Err(CtaError::shape("relu grad", format!("{:?}", x.shape()), format!("{:?}", dy.shape())));
    }
    let mut dx = dy.clone();
    for (d, &v) in dx.data_mut().iter_mut().zip(x.data()) {
        if v <= 0.0 {
            *d = 0.0;
        }
    }
    Ok(dx)
}

// ── average pooling ─────────────────────────────────────────────────────

pub fn avgpool_forward(x: &Tensor, k: usize) -> Result<Tensor> {
    let [n, c, h, w] = *x.shape() else {
        return Err(CtaError::shape("avgpool input", "rank 4", format!("{:?}", x.shape())));
    };
    if k == 0 || h % k != 0 || w % k != 0 {
        return Err(CtaError::invalid(
            "avgpool",
            format!("window {k} must divide spatial dims {h}×{w}"),
        ));
    }
    let (oh, ow) = (h / k, w / k);
    let xd = x.data();
    let mut y = vec![0.0; n * c * oh * ow];
    let scale = 1.0 / (k * k) as f64;
    for img in 0..n * c {
        let xp = &xd[img * h * w..(img + 1) * h * w];
        let yp = &mut y[img * oh * ow..(img + 1) * oh * ow];
        for oy in 0..oh {
            for ox in 0..ow {
                let mut acc = 0.0;
                for dy in 0..k {
                    for dxx in 0..k {
                        acc += xp[(oy * k + dy) * w + ox * k + dxx];
                    }
                }
                yp[oy * ow + ox] = acc * scale;
            }
        }
    }
    Tensor::from_vec(&[n, c, oh, ow], y)
}

pub fn avgpool_backward(x_shape: &[usize], k: usize, dy: &Tensor) -> Result<Tensor> {
    let [n, c, h, w] = *x_shape else {
        return Err(CtaError::shape("avgpool input", "rank 4", format!("{x_shape:?}")));
    };
    let (oh, ow) = (h / k, w / k);
    if dy.shape() != [n, c, oh, ow] {
        return Err(CtaError::shape(
            "avgpool grad",
            format!("[{n}, {c}, {oh}, {ow}]"),
            format!("{:?}", dy.shape()),
        ));
    }
    let gd = dy.data();
    let mut dx = vec![0.0; n * c * h * w];
    let scale = 1.0 / (k * k) as f64;
    for img in 0..n * c {
        let gp = &gd[img * oh * ow..(img + 1) * oh * ow];
        let dxp = &mut dx[img * h * w..(img + 1) * h * w];
        for oy in 0..oh {
            for ox in 0..ow {
                let g = gp[oy * ow + ox] * scale;
                for dyy in 0..k {
                    for dxx in 0..k {
                        dxp[(oy * k + dyy) * w + ox * k + dxx] = g;
                    }
                }
            }
        }
    }
    Tensor::from_vec(x_shape, dx)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relu_clamps_negatives() {
        let x = Tensor::from_vec(&[1, 3], vec![-1.0, 0.0, 2.0]).unwrap();
        assert_eq!(relu_forward(&x).data(), &[0.0, 0.0, 2.0]);
    }

    #[test]
    fn conv_all_ones_has_known_border_sums() {
        // 1×1×3×3 ones input, single 3×3 ones kernel: center 9, corners 4, edges 6.
        let x = Tensor::filled(&[1, 1, 3, 3], 1.0);
        let w = Tensor::filled(&[1, 1, 3, 3], 1.0);
        let b = Tensor::zeros(&[1]);
        let y = conv2d_forward(&x, &w, &b).unwrap();
        let d = y.data();
        assert_eq!(d[4], 9.0);
        for corner in [0, 2, 6, 8] {
            assert_eq!(d[corner], 4.0);
        }
        for edge in [1, 3, 5, 7] {
            assert_eq!(d[edge], 6.0);
        }
    }

    #[test]
    fn conv_bias_is_added_per_output_channel() {
        let x = Tensor::zeros(&[1, 1, 2, 2]);
        let w = Tensor::zeros(&[2, 1, 3, 3]);
        let b = Tensor::from_vec(&[2], vec![0.5, -1.0]).unwrap();
        let y = conv2d_forward(&x, &w, &b).unwrap();
        assert_eq!(&y.data()[..4], &[0.5; 4]);
        assert_eq!(&y.data()[4..], &[-1.0; 4]);
    }

    #[test]
    fn dense_matches_hand_computation() {
        let x = Tensor::from_vec(&[1, 2], vec![2.0, -1.0]).unwrap();
        let w = Tensor::from_vec(&[2, 2], vec![1.0, 0.5, -2.0, 3.0]).unwrap();
        let b = Tensor::from_vec(&[2], vec![0.1, 0.2]).unwrap();
        let y = dense_forward(&x, &w, &b).unwrap();
        assert!((y.data()[0] - (2.0 - 0.5 + 0.1)).abs() < 1e-12);
        assert!((y.data()[1] - (-4.0 - 3.0 + 0.2)).abs() < 1e-12);
    }

    #[test]
    fn avgpool_halves_spatial_dims() {
        let x = Tensor::from_vec(&[1, 1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let y = avgpool_forward(&x, 2).unwrap();
        assert_eq!(y.shape(), &[1, 1, 1, 1]);
        assert_eq!(y.data(), &[2.5]);
        let dx = avgpool_backward(&[1, 1, 2, 2], 2, &Tensor::filled(&[1, 1, 1, 1], 1.0)).unwrap();
        assert_eq!(dx.data(), &[0.25; 4]);
    }

    #[test]
    fn shape_mismatches_are_structured_errors() {
        let x = Tensor::zeros(&[1, 3]);
        let w = Tensor::zeros(&[2, 4]);
        let b = Tensor::zeros(&[2]);
        assert!(dense_forward(&x, &w, &b).is_err());
        let x4 = Tensor::zeros(&[1, 2, 4, 4]);
        let wk = Tensor::zeros(&[1, 3, 3, 3]);
        assert!(conv2d_forward(&x4, &wk, &Tensor::zeros(&[1])).is_err());
        assert!(avgpool_forward(&x4, 3).is_err());
    }
}
