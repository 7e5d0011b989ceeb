//! Forward and backward passes of the individual layer types.
//!
//! Activations are `[batch, channels, height, width]`, row-major. All
//! arithmetic is `f64` and loops run in a fixed order, so results are
//! reproducible bit for bit.

/// Dense NCHW activation tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor4 {
    pub n: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub data: Vec<f64>,
}

impl Tensor4 {
    pub fn zeros(n: usize, c: usize, h: usize, w: usize) -> Self {
        Tensor4 {
            n,
            c,
            h,
            w,
            data: vec![0.0; n * c * h * w],
        }
    }

    pub fn from_data(n: usize, c: usize, h: usize, w: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), n * c * h * w, "tensor data length");
        Tensor4 { n, c, h, w, data }
    }

    pub fn plane(&self) -> usize {
        self.h * self.w
    }

    pub fn sample_len(&self) -> usize {
        self.c * self.h * self.w
    }

    pub fn same_shape(&self) -> Tensor4 {
        Tensor4::zeros(self.n, self.c, self.h, self.w)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeometry {
    pub in_c: usize,
    pub out_c: usize,
    pub kernel: usize,
    pub stride: usize,
}

impl ConvGeometry {
    pub fn pad(&self) -> usize {
        self.kernel / 2
    }

    pub fn out_size(&self, size: usize) -> usize {
        (size + 2 * self.pad() - self.kernel) / self.stride + 1
    }

    pub fn weight_len(&self) -> usize {
        self.out_c * self.in_c * self.kernel * self.kernel
    }

    pub fn fan_in(&self) -> usize {
        self.in_c * self.kernel * self.kernel
    }

    /// Output columns `ox` whose input column `ox * stride + k - pad` is in range.
    fn valid_range(&self, k: usize, in_size: usize, out_size: usize) -> (usize, usize) {
        let pad = self.pad() as i64;
        let s = self.stride as i64;
        let off = k as i64 - pad;
        // ox * s + off >= 0  and  ox * s + off <= in_size - 1
        let lo = if off >= 0 { 0 } else { ((-off) + s - 1) / s };
        let hi_excl = {
            let max_in = in_size as i64 - 1 - off;
            if max_in < 0 {
                0
            } else {
                (max_in / s + 1).min(out_size as i64)
            }
        };
        (lo as usize, (hi_excl.max(lo)) as usize)
    }
}

/// Zero-padded ("same" for odd kernels at stride 1) 2-D convolution.
pub fn conv_forward(x: &Tensor4, weight: &[f64], bias: &[f64], g: &ConvGeometry) -> Tensor4 {
    assert_eq!(x.c, g.in_c, "conv input channels");
    let (oh, ow) = (g.out_size(x.h), g.out_size(x.w));
    let mut out = Tensor4::zeros(x.n, g.out_c, oh, ow);
    let k = g.kernel;
    let pad = g.pad();
    for b in 0..x.n {
        let xin = &x.data[b * x.sample_len()..(b + 1) * x.sample_len()];
        let ylen = g.out_c * oh * ow;
        let yout = &mut out.data[b * ylen..(b + 1) * ylen];
        for o in 0..g.out_c {
            let yplane = &mut yout[o * oh * ow..(o + 1) * oh * ow];
            yplane.iter_mut().for_each(|v| *v = bias[o]);
            for i in 0..g.in_c {
                let xplane = &xin[i * x.plane()..(i + 1) * x.plane()];
                for ky in 0..k {
                    let (y0, y1) = g.valid_range(ky, x.h, oh);
                    for kx in 0..k {
                        let wv = weight[((o * g.in_c + i) * k + ky) * k + kx];
                        let (x0, x1) = g.valid_range(kx, x.w, ow);
                        for oy in y0..y1 {
                            let iy = oy * g.stride + ky - pad;
                            let xrow = &xplane[iy * x.w..(iy + 1) * x.w];
                            let yrow = &mut yplane[oy * ow..(oy + 1) * ow];
                            if g.stride == 1 {
                                let ix0 = x0 + kx - pad;
                                for (yv, xv) in yrow[x0..x1].iter_mut().zip(&xrow[ix0..ix0 + (x1 - x0)]) {
                                    *yv += wv * xv;
                                }
                            } else {
                                for ox in x0..x1 {
                                    yrow[ox] += wv * xrow[ox * g.stride + kx - pad];
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    out
}

pub struct ConvGrads {
    pub input: Tensor4,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

pub fn conv_backward(x: &Tensor4, weight: &[f64], gout: &Tensor4, g: &ConvGeometry) -> ConvGrads {
    let (oh, ow) = (gout.h, gout.w);
    let k = g.kernel;
    let pad = g.pad();
    let mut gx = x.same_shape();
    let mut gw = vec![0.0; g.weight_len()];
    let mut gb = vec![0.0; g.out_c];
    for b in 0..x.n {
        let xin = &x.data[b * x.sample_len()..(b + 1) * x.sample_len()];
        let gxin = &mut gx.data[b * x.sample_len()..(b + 1) * x.sample_len()];
        let gy = &gout.data[b * gout.sample_len()..(b + 1) * gout.sample_len()];
        for o in 0..g.out_c {
            let gplane = &gy[o * oh * ow..(o + 1) * oh * ow];
            gb[o] += gplane.iter().sum::<f64>();
            for i in 0..g.in_c {
                let xplane = &xin[i * x.plane()..(i + 1) * x.plane()];
                let gxplane = &mut gxin[i * x.plane()..(i + 1) * x.plane()];
                for ky in 0..k {
                    let (y0, y1) = g.valid_range(ky, x.h, oh);
                    for kx in 0..k {
                        let widx = ((o * g.in_c + i) * k + ky) * k + kx;
                        let wv = weight[widx];
                        let (x0, x1) = g.valid_range(kx, x.w, ow);
                        let mut acc = 0.0;
                        for oy in y0..y1 {
                            let iy = oy * g.stride + ky - pad;
                            let grow = &gplane[oy * ow..(oy + 1) * ow];
                            if g.stride == 1 {
                                let ix0 = x0 + kx - pad;
                                let n = x1 - x0;
                                let xrow = &xplane[iy * x.w + ix0..iy * x.w + ix0 + n];
                                let gxrow = &mut gxplane[iy * x.w + ix0..iy * x.w + ix0 + n];
                                for ((gv, xv), gxv) in grow[x0..x1].iter().zip(xrow).zip(gxrow) {
                                    acc += gv * xv;
                                    *gxv += wv * gv;
                                }
                            } else {
                                for ox in x0..x1 {
                                    let ix = iy * x.w + ox * g.stride + kx - pad;
                                    acc += grow[ox] * xplane[ix];
                                    gxplane[ix] += wv * grow[ox];
                                }
                            }
                        }
                        gw[widx] += acc;
                    }
                }
            }
        }
    }
    ConvGrads {
        input: gx,
        weight: gw,
        bias: gb,
    }
}

pub fn relu_forward(x: &Tensor4) -> Tensor4 {
    Tensor4 {
        data: x.data.iter().map(|&v| v.max(0.0)).collect(),
        ..*x
    }
}

/// Gradient through ReLU given the pre-activation input.
pub fn relu_backward(pre: &Tensor4, gout: &Tensor4) -> Tensor4 {
    Tensor4 {
        data: pre
            .data
            .iter()
            .zip(&gout.data)
            .map(|(&p, &g)| if p > 0.0 { g } else { 0.0 })
            .collect(),
        ..*pre
    }
}

/// Non-overlapping `size × size` average pooling; trailing rows/columns that
/// do not fill a window are dropped.
pub fn avgpool_forward(x: &Tensor4, size: usize) -> Tensor4 {
    let (oh, ow) = (x.h / size, x.w / size);
    let mut out = Tensor4::zeros(x.n, x.c, oh, ow);
    let norm = 1.0 / (size * size) as f64;
    for nc in 0..x.n * x.c {
        let xp = &x.data[nc * x.plane()..(nc + 1) * x.plane()];
        let yp = &mut out.data[nc * oh * ow..(nc + 1) * oh * ow];
        for oy in 0..oh {
            for dy in 0..size {
                let row = &xp[(oy * size + dy) * x.w..];
                for ox in 0..ow {
                    let mut s = 0.0;
                    for dx in 0..size {
                        s += row[ox * size + dx];
                    }
                    yp[oy * ow + ox] += s;
                }
            }
        }
        yp.iter_mut().for_each(|v| *v *= norm);
    }
    out
}

pub fn avgpool_backward(input_shape: (usize, usize, usize, usize), gout: &Tensor4, size: usize) -> Tensor4 {
    let (n, c, h, w) = input_shape;
    let mut gx = Tensor4::zeros(n, c, h, w);
    let norm = 1.0 / (size * size) as f64;
    let (oh, ow) = (gout.h, gout.w);
    for nc in 0..n * c {
        let gp = &gout.data[nc * oh * ow..(nc + 1) * oh * ow];
        let xp = &mut gx.data[nc * h * w..(nc + 1) * h * w];
        for oy in 0..oh {
            for dy in 0..size {
                let row = &mut xp[(oy * size + dy) * w..];
                for ox in 0..ow {
                    let g = gp[oy * ow + ox] * norm;
                    for dx in 0..size {
                        row[ox * size + dx] = g;
                    }
                }
            }
        }
    }
    gx
}

/// Per-channel statistics of a batch-norm forward pass in training mode.
#[derive(Debug, Clone)]
pub struct BnCache {
    pub x_hat: Tensor4,
    pub inv_std: Vec<f64>,
    pub mean: Vec<f64>,
    /// Biased batch variance.
    pub var: Vec<f64>,
    pub count: usize,
}

pub fn bn_forward_train(x: &Tensor4, gamma: &[f64], beta: &[f64], eps: f64) -> (Tensor4, BnCache) {
    let plane = x.plane();
    let count = x.n * plane;
    let mut mean = vec![0.0; x.c];
    let mut var = vec![0.0; x.c];
    for c in 0..x.c {
        let mut s = 0.0;
        for b in 0..x.n {
            let p = &x.data[(b * x.c + c) * plane..(b * x.c + c + 1) * plane];
            s += p.iter().sum::<f64>();
        }
        let m = s / count as f64;
        let mut v = 0.0;
        for b in 0..x.n {
            let p = &x.data[(b * x.c + c) * plane..(b * x.c + c + 1) * plane];
            v += p.iter().map(|&t| (t - m) * (t - m)).sum::<f64>();
        }
        mean[c] = m;
        var[c] = v / count as f64;
    }
    let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + eps).sqrt()).collect();
    let mut x_hat = x.same_shape();
    let mut y = x.same_shape();
    for b in 0..x.n {
        for c in 0..x.c {
            let r = (b * x.c + c) * plane..(b * x.c + c + 1) * plane;
            for ((xh, yv), &xv) in x_hat.data[r.clone()]
                .iter_mut()
                .zip(&mut y.data[r.clone()])
                .zip(&x.data[r])
            {
                *xh = (xv - mean[c]) * inv_std[c];
                *yv = gamma[c] * *xh + beta[c];
            }
        }
    }
    (
        y,
        BnCache {
            x_hat,
            inv_std,
            mean,
            var,
            count,
        },
    )
}

pub fn bn_forward_infer(
    x: &Tensor4,
    gamma: &[f64],
    beta: &[f64],
    running_mean: &[f64],
    running_var: &[f64],
    eps: f64,
) -> Tensor4 {
    let plane = x.plane();
    let mut y = x.same_shape();
    for b in 0..x.n {
        for c in 0..x.c {
            let scale = gamma[c] / (running_var[c] + eps).sqrt();
            let shift = beta[c] - running_mean[c] * scale;
            let r = (b * x.c + c) * plane..(b * x.c + c + 1) * plane;
            for (yv, &xv) in y.data[r.clone()].iter_mut().zip(&x.data[r]) {
                *yv = xv * scale + shift;
            }
        }
    }
    y
}

pub struct BnGrads {
    pub input: Tensor4,
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
}

pub fn bn_backward(gout: &Tensor4, cache: &BnCache, gamma: &[f64]) -> BnGrads {
    let plane = gout.plane();
    let n = cache.count as f64;
    let mut gx = gout.same_shape();
    let mut ggamma = vec![0.0; gout.c];
    let mut gbeta = vec![0.0; gout.c];
    for c in 0..gout.c {
        let (mut sum_g, mut sum_gx) = (0.0, 0.0);
        for b in 0..gout.n {
            let r = (b * gout.c + c) * plane..(b * gout.c + c + 1) * plane;
            for (&g, &xh) in gout.data[r.clone()].iter().zip(&cache.x_hat.data[r]) {
                sum_g += g;
                sum_gx += g * xh;
            }
        }
        ggamma[c] = sum_gx;
        gbeta[c] = sum_g;
        let k = gamma[c] * cache.inv_std[c] / n;
        for b in 0..gout.n {
            let r = (b * gout.c + c) * plane..(b * gout.c + c + 1) * plane;
            for ((gxv, &g), &xh) in gx.data[r.clone()]
                .iter_mut()
                .zip(&gout.data[r.clone()])
                .zip(&cache.x_hat.data[r])
            {
                *gxv = k * (n * g - sum_g - xh * sum_gx);
            }
        }
    }
    BnGrads {
        input: gx,
        gamma: ggamma,
        beta: gbeta,
    }
}

/// `y = x Wᵀ + b` for `x: [batch, inputs]`, `W: [outputs, inputs]`.
pub fn dense_forward(x: &[f64], batch: usize, weight: &[f64], bias: &[f64], outputs: usize) -> Vec<f64> {
    let inputs = x.len() / batch;
    let mut y = vec![0.0; batch * outputs];
    for b in 0..batch {
        let xr = &x[b * inputs..(b + 1) * inputs];
        for o in 0..outputs {
            let wr = &weight[o * inputs..(o + 1) * inputs];
            y[b * outputs + o] = bias[o] + wr.iter().zip(xr).map(|(w, v)| w * v).sum::<f64>();
        }
    }
    y
}

pub struct DenseGrads {
    pub input: Vec<f64>,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

pub fn dense_backward(x: &[f64], batch: usize, weight: &[f64], gout: &[f64], outputs: usize) -> DenseGrads {
    let inputs = x.len() / batch;
    let mut gx = vec![0.0; x.len()];
    let mut gw = vec![0.0; weight.len()];
    let mut gb = vec![0.0; outputs];
    for b in 0..batch {
        let xr = &x[b * inputs..(b + 1) * inputs];
        let gxr = &mut gx[b * inputs..(b + 1) * inputs];
        for o in 0..outputs {
            let g = gout[b * outputs + o];
            gb[o] += g;
            let wr = &weight[o * inputs..(o + 1) * inputs];
            let gwr = &mut gw[o * inputs..(o + 1) * inputs];
            for ((gwv, gxv), (&wv, &xv)) in gwr.iter_mut().zip(gxr.iter_mut()).zip(wr.iter().zip(xr)) {
                *gwv += g * xv;
                *gxv += g * wv;
            }
        }
    }
    DenseGrads {
        input: gx,
        weight: gw,
        bias: gb,
    }
}

/// Row-wise softmax of `[batch, classes]` logits.
pub fn softmax(logits: &[f64], classes: usize) -> Vec<f64> {
    let mut out = vec![0.0; logits.len()];
    for (row, dst) in logits.chunks_exact(classes).zip(out.chunks_exact_mut(classes)) {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for (d, &z) in dst.iter_mut().zip(row) {
            *d = (z - max).exp();
            sum += *d;
        }
        dst.iter_mut().for_each(|d| *d /= sum);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::rng_from;
    use rand::Rng;

    fn random(len: usize, seed: u64) -> Vec<f64> {
        let mut rng = rng_from(seed);
        (0..len).map(|_| rng.random_range(-1.0..1.0)).collect()
    }

    /// Central finite difference of `f` along every coordinate of `x`.
    fn numeric_grad(x: &[f64], f: &dyn Fn(&[f64]) -> f64) -> Vec<f64> {
        let h = 1e-4;
        let mut probe = x.to_vec();
        (0..x.len())
            .map(|i| {
                let orig = probe[i];
                probe[i] = orig + h;
                let up = f(&probe);
                probe[i] = orig - h;
                let down = f(&probe);
                probe[i] = orig;
                (up - down) / (2.0 * h)
            })
            .collect()
    }

    fn assert_close(analytic: &[f64], numeric: &[f64]) {
        let diff: f64 = analytic.iter().zip(numeric).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let scale: f64 = analytic.iter().map(|a| a * a).sum::<f64>().sqrt()
            + numeric.iter().map(|a| a * a).sum::<f64>().sqrt();
        assert!(diff / scale.max(1e-12) < 1e-4, "relative error {}", diff / scale);
    }

    #[test]
    fn conv_gradients_match_finite_differences() {
        for (stride, k) in [(1, 3), (2, 3), (1, 1), (2, 5)] {
            let g = ConvGeometry { in_c: 2, out_c: 3, kernel: k, stride };
            let x = Tensor4::from_data(2, 2, 6, 7, random(2 * 2 * 42, 1));
            let w = random(g.weight_len(), 2);
            let bias = random(3, 3);
            let y = conv_forward(&x, &w, &bias, &g);
            let gy = random(y.data.len(), 4);
            let loss = |out: &Tensor4| out.data.iter().zip(&gy).map(|(a, b)| a * b).sum::<f64>();
            let grads = conv_backward(&x, &w, &Tensor4 { data: gy.clone(), ..y.clone() }, &g);

            let nx = numeric_grad(&x.data, &|d| loss(&conv_forward(&Tensor4 { data: d.to_vec(), ..x.clone() }, &w, &bias, &g)));
            assert_close(&grads.input.data, &nx);
            let nw = numeric_grad(&w, &|d| loss(&conv_forward(&x, d, &bias, &g)));
            assert_close(&grads.weight, &nw);
            let nb = numeric_grad(&bias, &|d| loss(&conv_forward(&x, &w, d, &g)));
            assert_close(&grads.bias, &nb);
        }
    }

    #[test]
    fn conv_matches_direct_definition() {
        let g = ConvGeometry { in_c: 1, out_c: 1, kernel: 3, stride: 1 };
        let x = Tensor4::from_data(1, 1, 3, 3, (1..=9).map(f64::from).collect());
        let mut w = vec![0.0; 9];
        w[4] = 1.0; // centre tap
        w[5] = 1.0; // right neighbour
        let y = conv_forward(&x, &w, &[0.5], &g);
        assert_eq!(y.data, vec![3.5, 5.5, 3.5, 9.5, 11.5, 6.5, 15.5, 17.5, 9.5]);
    }

    #[test]
    fn relu_and_pool_gradients() {
        let x = Tensor4::from_data(2, 2, 4, 6, random(96, 7));
        let gy = random(96, 8);
        let r = relu_backward(&x, &Tensor4 { data: gy.clone(), ..x.clone() });
        let nr = numeric_grad(&x.data, &|d| {
            relu_forward(&Tensor4 { data: d.to_vec(), ..x.clone() }).data.iter().zip(&gy).map(|(a, b)| a * b).sum()
        });
        assert_close(&r.data, &nr);

        let p = avgpool_forward(&x, 2);
        assert_eq!((p.h, p.w), (2, 3));
        let gp = random(p.data.len(), 9);
        let gx = avgpool_backward((2, 2, 4, 6), &Tensor4 { data: gp.clone(), ..p.clone() }, 2);
        let np = numeric_grad(&x.data, &|d| {
            avgpool_forward(&Tensor4 { data: d.to_vec(), ..x.clone() }, 2).data.iter().zip(&gp).map(|(a, b)| a * b).sum()
        });
        assert_close(&gx.data, &np);
    }

    #[test]
    fn batchnorm_gradients_match_finite_differences() {
        let x = Tensor4::from_data(3, 2, 3, 3, random(54, 10));
        let gamma = vec![1.3, 0.7];
        let beta = vec![0.1, -0.2];
        let gy = random(54, 11);
        let loss = |x: &Tensor4, gm: &[f64], bt: &[f64]| {
            bn_forward_train(x, gm, bt, 1e-5).0.data.iter().zip(&gy).map(|(a, b)| a * b).sum::<f64>()
        };
        let (y, cache) = bn_forward_train(&x, &gamma, &beta, 1e-5);
        let grads = bn_backward(&Tensor4 { data: gy.clone(), ..y }, &cache, &gamma);
        assert_close(&grads.input.data, &numeric_grad(&x.data, &|d| loss(&Tensor4 { data: d.to_vec(), ..x.clone() }, &gamma, &beta)));
        assert_close(&grads.gamma, &numeric_grad(&gamma, &|d| loss(&x, d, &beta)));
        assert_close(&grads.beta, &numeric_grad(&beta, &|d| loss(&x, &gamma, d)));
    }

    #[test]
    fn batchnorm_infer_with_batch_stats_equals_train() {
        let x = Tensor4::from_data(4, 2, 2, 2, random(32, 12));
        let (y, cache) = bn_forward_train(&x, &[1.0, 2.0], &[0.0, 1.0], 1e-5);
        let yi = bn_forward_infer(&x, &[1.0, 2.0], &[0.0, 1.0], &cache.mean, &cache.var, 1e-5);
        for (a, b) in y.data.iter().zip(&yi.data) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn dense_gradients_match_finite_differences() {
        let (batch, inputs, outputs) = (3, 5, 4);
        let x = random(batch * inputs, 13);
        let w = random(outputs * inputs, 14);
        let b = random(outputs, 15);
        let gy = random(batch * outputs, 16);
        let loss = |x: &[f64], w: &[f64], b: &[f64]| {
            dense_forward(x, batch, w, b, outputs).iter().zip(&gy).map(|(a, c)| a * c).sum::<f64>()
        };
        let g = dense_backward(&x, batch, &w, &gy, outputs);
        assert_close(&g.input, &numeric_grad(&x, &|d| loss(d, &w, &b)));
        assert_close(&g.weight, &numeric_grad(&w, &|d| loss(&x, d, &b)));
        assert_close(&g.bias, &numeric_grad(&b, &|d| loss(&x, &w, d)));
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let p = softmax(&random(30, 17).iter().map(|v| v * 50.0).collect::<Vec<_>>(), 3);
        for row in p.chunks(3) {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }
}
