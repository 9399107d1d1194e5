//! 2-D convolution via im2col + matmul, data-parallel over the batch.
//!
//! Per-sample results are collected in batch order and reduced
//! sequentially, so parallel and sequential execution produce bit-identical
//! gradients.

use ndarray::{Array1, Array2, Array3, Array4, Axis, Ix1};
use rand_chacha::ChaCha8Rng;

use super::{fan_in_uniform, Feat, Layer, Param};
use crate::parallel;

pub struct Conv2d {
    id: String,
    weight: Param, // (out, in, k, k)
    bias: Param,   // (out,)
    in_ch: usize,
    out_ch: usize,
    kernel: usize,
    stride: usize,
    pad: usize,
    cache: Option<Feat>,
}

impl Conv2d {
    pub fn new(
        id: impl Into<String>,
        in_ch: usize,
        out_ch: usize,
        kernel: usize,
        stride: usize,
        pad: usize,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let id = id.into();
        let fan_in = in_ch * kernel * kernel;
        let weight = Param::new(
            format!("{id}.weight"),
            fan_in_uniform(rng, fan_in, &[out_ch, in_ch, kernel, kernel]),
        );
        let bias = Param::new(
            format!("{id}.bias"),
            ndarray::ArrayD::zeros(ndarray::IxDyn(&[out_ch])),
        );
        Self {
            id,
            weight,
            bias,
            in_ch,
            out_ch,
            kernel,
            stride,
            pad,
            cache: None,
        }
    }

    pub fn out_size(&self, side: usize) -> usize {
        (side + 2 * self.pad - self.kernel) / self.stride + 1
    }

    fn im2col(&self, x: &ndarray::ArrayView3<'_, f32>, oh: usize, ow: usize) -> Array2<f32> {
        let (c, h, w) = x.dim();
        let k = self.kernel;
        let mut cols = Array2::zeros((c * k * k, oh * ow));
        for ci in 0..c {
            for ky in 0..k {
                for kx in 0..k {
                    let row = (ci * k + ky) * k + kx;
                    for oy in 0..oh {
                        let iy = (oy * self.stride + ky) as isize - self.pad as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        for ox in 0..ow {
                            let ix = (ox * self.stride + kx) as isize - self.pad as isize;
                            if ix < 0 || ix >= w as isize {
                                continue;
                            }
                            cols[[row, oy * ow + ox]] = x[[ci, iy as usize, ix as usize]];
                        }
                    }
                }
            }
        }
        cols
    }

    fn col2im(&self, dcols: &Array2<f32>, c: usize, h: usize, w: usize, oh: usize, ow: usize) -> Array3<f32> {
        let k = self.kernel;
        let mut dx = Array3::zeros((c, h, w));
        for ci in 0..c {
            for ky in 0..k {
                for kx in 0..k {
                    let row = (ci * k + ky) * k + kx;
                    for oy in 0..oh {
                        let iy = (oy * self.stride + ky) as isize - self.pad as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        for ox in 0..ow {
                            let ix = (ox * self.stride + kx) as isize - self.pad as isize;
                            if ix < 0 || ix >= w as isize {
                                continue;
                            }
                            dx[[ci, iy as usize, ix as usize]] += dcols[[row, oy * ow + ox]];
                        }
                    }
                }
            }
        }
        dx
    }
}

impl Layer for Conv2d {
    fn id(&self) -> &str {
        &self.id
    }

    fn forward(&mut self, x: Feat, _train: bool) -> Feat {
        let (n, c, h, w) = x.dim();
        assert_eq!(c, self.in_ch, "conv {} channel mismatch", self.id);
        let (oh, ow) = (self.out_size(h), self.out_size(w));
        let w2_owned = self
            .weight
            .value
            .view()
            .into_shape_with_order((self.out_ch, self.in_ch * self.kernel * self.kernel))
            .unwrap();
        let bias = self.bias.value.view().into_dimensionality::<Ix1>().unwrap();

        let per_sample = parallel::map_indexed(n, |ni| {
            let cols = self.im2col(&x.index_axis(Axis(0), ni), oh, ow);
            let mut y = w2_owned.dot(&cols); // (out, oh*ow)
            for (mut row, &b) in y.rows_mut().into_iter().zip(bias.iter()) {
                row.mapv_inplace(|v| v + b);
            }
            y
        });

        let mut out = Array4::zeros((n, self.out_ch, oh, ow));
        for (ni, y) in per_sample.into_iter().enumerate() {
            out.index_axis_mut(Axis(0), ni)
                .assign(&y.into_shape_with_order((self.out_ch, oh, ow)).unwrap());
        }
        self.cache = Some(x);
        out
    }

    fn backward(&mut self, dy: Feat) -> Feat {
        let x = self.cache.take().expect("backward before forward");
        let (n, c, h, w) = x.dim();
        let (_, _, oh, ow) = dy.dim();
        let kk = self.in_ch * self.kernel * self.kernel;
        let w2 = self
            .weight
            .value
            .view()
            .into_shape_with_order((self.out_ch, kk))
            .unwrap();

        // (dW_n, db_n, dx_n) per sample, reduced in batch order
        let per_sample = parallel::map_indexed(n, |ni| {
            let cols = self.im2col(&x.index_axis(Axis(0), ni), oh, ow);
            let dy2 = dy
                .index_axis(Axis(0), ni)
                .into_shape_with_order((self.out_ch, oh * ow))
                .unwrap();
            let dw = dy2.dot(&cols.t()); // (out, kk)
            let db: Array1<f32> = dy2.sum_axis(Axis(1));
            let dcols = w2.t().dot(&dy2); // (kk, oh*ow)
            let dx = self.col2im(&dcols, c, h, w, oh, ow);
            (dw, db, dx)
        });

        let mut dx_all = Array4::zeros((n, c, h, w));
        {
            let mut gw = self
                .weight
                .grad
                .view_mut()
                .into_shape_with_order((self.out_ch, kk))
                .unwrap();
            let mut gb = self
                .bias
                .grad
                .view_mut()
                .into_dimensionality::<Ix1>()
                .unwrap();
            for (ni, (dw, db, dx)) in per_sample.into_iter().enumerate() {
                if self.weight.trainable {
                    gw += &dw;
                    gb += &db;
                }
                dx_all.index_axis_mut(Axis(0), ni).assign(&dx);
            }
        }
        dx_all
    }

    fn params(&self) -> Vec<&Param> {
        vec![&self.weight, &self.bias]
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![&mut self.weight, &mut self.bias]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(11)
    }

    /// Direct nested-loop convolution, the oracle for the im2col path.
    fn conv_naive(x: &Feat, w: &Array4<f32>, b: &Array1<f32>, stride: usize, pad: usize) -> Feat {
        let (n, c, h, wd) = x.dim();
        let (oc, _, k, _) = w.dim();
        let oh = (h + 2 * pad - k) / stride + 1;
        let ow = (wd + 2 * pad - k) / stride + 1;
        let mut y = Array4::zeros((n, oc, oh, ow));
        for ni in 0..n {
            for oci in 0..oc {
                for oy in 0..oh {
                    for ox in 0..ow {
                        let mut acc = b[oci];
                        for ci in 0..c {
                            for ky in 0..k {
                                for kx in 0..k {
                                    let iy = (oy * stride + ky) as isize - pad as isize;
                                    let ix = (ox * stride + kx) as isize - pad as isize;
                                    if iy >= 0 && ix >= 0 && (iy as usize) < h && (ix as usize) < wd
                                    {
                                        acc += x[[ni, ci, iy as usize, ix as usize]]
                                            * w[[oci, ci, ky, kx]];
                                    }
                                }
                            }
                        }
                        y[[ni, oci, oy, ox]] = acc;
                    }
                }
            }
        }
        y
    }

    #[test]
    fn matches_naive_convolution() {
        let mut rng = rng();
        for (stride, pad) in [(1usize, 1usize), (2, 1), (1, 0)] {
            let mut conv = Conv2d::new("c", 3, 5, 3, stride, pad, &mut rng);
            let x = Array4::from_shape_fn((2, 3, 8, 8), |(a, b, c, d)| {
                ((a * 7 + b * 3 + c * 5 + d) % 13) as f32 * 0.1 - 0.6
            });
            let y = conv.forward(x.clone(), true);
            let wv = conv.weight.value.view().into_dimensionality::<ndarray::Ix4>().unwrap();
            let bv = conv.bias.value.view().into_dimensionality::<Ix1>().unwrap();
            let expect = conv_naive(&x, &wv.to_owned(), &bv.to_owned(), stride, pad);
            let max_err = (&y - &expect)
                .iter()
                .map(|v| v.abs())
                .fold(0.0f32, f32::max);
            assert!(max_err < 1e-4, "stride {stride} pad {pad}: {max_err}");
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = rng();
        let mut conv = Conv2d::new("c", 2, 3, 3, 1, 1, &mut rng);
        let x = Array4::from_shape_fn((1, 2, 5, 5), |(_, b, c, d)| {
            ((b * 3 + c * 5 + d) % 7) as f32 * 0.2 - 0.5
        });

        // loss = sum(forward(x))
        let y = conv.forward(x.clone(), true);
        let dy = Array4::ones(y.dim());
        let dx = conv.backward(dy);

        let eps = 1e-3f32;
        // input gradient, a few probes
        for probe in [(0, 0, 0, 0), (0, 1, 2, 3), (0, 0, 4, 4)] {
            let mut xp = x.clone();
            xp[probe] += eps;
            let mut xm = x.clone();
            xm[probe] -= eps;
            let fp: f32 = conv.forward(xp, true).sum();
            conv.cache = None;
            let fm: f32 = conv.forward(xm, true).sum();
            conv.cache = None;
            let fd = (fp - fm) / (2.0 * eps);
            let an = dx[probe];
            assert!(
                (fd - an).abs() / fd.abs().max(1.0) < 1e-2,
                "input grad probe {probe:?}: fd {fd} vs analytic {an}"
            );
        }

        // weight gradient probes
        for flat in [0usize, 10, 25] {
            let mut wp = conv.weight.value.clone();
            wp.as_slice_mut().unwrap()[flat] += eps;
            let orig = conv.weight.value.clone();
            conv.weight.value = wp;
            let fp: f32 = conv.forward(x.clone(), true).sum();
            conv.cache = None;
            let mut wm = orig.clone();
            wm.as_slice_mut().unwrap()[flat] -= eps;
            conv.weight.value = wm;
            let fm: f32 = conv.forward(x.clone(), true).sum();
            conv.cache = None;
            conv.weight.value = orig;
            let fd = (fp - fm) / (2.0 * eps);
            let an = conv.weight.grad.as_slice().unwrap()[flat];
            assert!(
                (fd - an).abs() / fd.abs().max(1.0) < 1e-2,
                "weight grad probe {flat}: fd {fd} vs analytic {an}"
            );
        }
    }

    #[test]
    fn parallel_and_sequential_agree_bitwise() {
        let mut rng = rng();
        let mut conv = Conv2d::new("c", 3, 4, 3, 1, 1, &mut rng);
        let x = Array4::from_shape_fn((4, 3, 6, 6), |(a, b, c, d)| {
            ((a + b + c + d) as f32).sin()
        });
        let y_par = conv.forward(x.clone(), true);
        let g_par = conv.backward(Array4::ones(y_par.dim()));
        let w_grad_par = conv.weight.grad.clone();

        conv.zero_grads();
        crate::parallel::set_sequential(true);
        let y_seq = conv.forward(x, true);
        let g_seq = conv.backward(Array4::ones(y_seq.dim()));
        crate::parallel::set_sequential(false);

        assert_eq!(y_par, y_seq);
        assert_eq!(g_par, g_seq);
        assert_eq!(w_grad_par, conv.weight.grad);
    }
}
