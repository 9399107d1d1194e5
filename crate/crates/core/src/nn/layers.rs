//! Pointwise, pooling, normalization, and dense layers.

use ndarray::{Array1, Array2, Array4, Axis, Ix1, Ix2};
use rand_chacha::ChaCha8Rng;

use super::{fan_in_uniform, Feat, Layer, Param};

/// Fixed per-channel input normalization: (x - mean) / std.
pub struct Normalize {
    id: String,
    mean: [f32; 3],
    std: [f32; 3],
}

impl Normalize {
    pub fn new(id: impl Into<String>, mean: [f32; 3], std: [f32; 3]) -> Self {
        assert!(std.iter().all(|&s| s > 0.0));
        Self {
            id: id.into(),
            mean,
            std,
        }
    }
}

impl Layer for Normalize {
    fn id(&self) -> &str {
        &self.id
    }

    fn forward(&mut self, mut x: Feat, _train: bool) -> Feat {
        for c in 0..x.shape()[1] {
            let (m, s) = (self.mean[c], self.std[c]);
            x.index_axis_mut(Axis(1), c).mapv_inplace(|v| (v - m) / s);
        }
        x
    }

    fn backward(&mut self, mut dy: Feat) -> Feat {
        for c in 0..dy.shape()[1] {
            let s = self.std[c];
            dy.index_axis_mut(Axis(1), c).mapv_inplace(|v| v / s);
        }
        dy
    }
}

pub struct Relu {
    id: String,
    mask: Option<Array4<bool>>,
}

impl Relu {
    pub fn new(id: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            mask: None,
        }
    }
}

impl Layer for Relu {
    fn id(&self) -> &str {
        &self.id
    }

    fn forward(&mut self, mut x: Feat, _train: bool) -> Feat {
        self.mask = Some(x.mapv(|v| v > 0.0));
        x.mapv_inplace(|v| v.max(0.0));
        x
    }

    fn backward(&mut self, mut dy: Feat) -> Feat {
        let mask = self.mask.take().expect("backward before forward");
        ndarray::Zip::from(&mut dy).and(&mask).for_each(|d, &m| {
            if !m {
                *d = 0.0;
            }
        });
        dy
    }
}

/// 2×2 max pooling with stride 2 (window max).
pub struct MaxPool2 {
    id: String,
    // flat argmax per output cell, plus the input shape
    cache: Option<(Vec<usize>, (usize, usize, usize, usize))>,
}

impl MaxPool2 {
    pub fn new(id: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            cache: None,
        }
    }
}

impl Layer for MaxPool2 {
    fn id(&self) -> &str {
        &self.id
    }

    fn forward(&mut self, x: Feat, _train: bool) -> Feat {
        let (n, c, h, w) = x.dim();
        assert!(h >= 2 && w >= 2, "maxpool input too small: {h}x{w}");
        let (oh, ow) = (h / 2, w / 2);
        let mut out = Array4::zeros((n, c, oh, ow));
        let mut argmax = vec![0usize; n * c * oh * ow];
        let xs = x.as_slice().expect("contiguous");
        let mut idx = 0usize;
        for ni in 0..n {
            for ci in 0..c {
                let base = (ni * c + ci) * h * w;
                for oy in 0..oh {
                    for ox in 0..ow {
                        let mut best_i = base + (2 * oy) * w + 2 * ox;
                        let mut best = xs[best_i];
                        for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                            let i = base + (2 * oy + dy) * w + 2 * ox + dx;
                            if xs[i] > best {
                                best = xs[i];
                                best_i = i;
                            }
                        }
                        out[[ni, ci, oy, ox]] = best;
                        argmax[idx] = best_i;
                        idx += 1;
                    }
                }
            }
        }
        self.cache = Some((argmax, (n, c, h, w)));
        out
    }

    fn backward(&mut self, dy: Feat) -> Feat {
        let (argmax, (n, c, h, w)) = self.cache.take().expect("backward before forward");
        let mut dx = Array4::zeros((n, c, h, w));
        let dxs = dx.as_slice_mut().unwrap();
        for (cell, &src) in dy.iter().zip(argmax.iter()) {
            dxs[src] += cell;
        }
        dx
    }
}

/// Spatial mean over each channel, `(N,C,H,W)` → `(N,C,1,1)`.
pub struct GlobalAvgPool {
    id: String,
    in_hw: Option<(usize, usize)>,
}

impl GlobalAvgPool {
    pub fn new(id: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            in_hw: None,
        }
    }
}

impl Layer for GlobalAvgPool {
    fn id(&self) -> &str {
        &self.id
    }

    fn forward(&mut self, x: Feat, _train: bool) -> Feat {
        let (n, c, h, w) = x.dim();
        self.in_hw = Some((h, w));
        let mean = x.mean_axis(Axis(3)).unwrap().mean_axis(Axis(2)).unwrap();
        mean.into_shape_with_order((n, c, 1, 1)).unwrap()
    }

    fn backward(&mut self, dy: Feat) -> Feat {
        let (h, w) = self.in_hw.take().expect("backward before forward");
        let (n, c, _, _) = dy.dim();
        let scale = 1.0 / (h * w) as f32;
        let mut dx = Array4::zeros((n, c, h, w));
        for ni in 0..n {
            for ci in 0..c {
                let g = dy[[ni, ci, 0, 0]] * scale;
                dx.index_axis_mut(Axis(0), ni)
                    .index_axis_mut(Axis(0), ci)
                    .fill(g);
            }
        }
        dx
    }
}

/// Identity marker between the conv stack and the dense head; dense layers
/// flatten on their own.
pub struct Flatten {
    id: String,
}

impl Flatten {
    pub fn new(id: impl Into<String>) -> Self {
        Self { id: id.into() }
    }
}

impl Layer for Flatten {
    fn id(&self) -> &str {
        &self.id
    }

    fn forward(&mut self, x: Feat, _train: bool) -> Feat {
        x
    }

    fn backward(&mut self, dy: Feat) -> Feat {
        dy
    }
}

/// Fully connected layer over the flattened input.
pub struct Dense {
    id: String,
    weight: Param, // (out, in)
    bias: Param,   // (out,)
    cache: Option<(Array2<f32>, (usize, usize, usize, usize))>,
}

impl Dense {
    pub fn new(id: impl Into<String>, in_dim: usize, out_dim: usize, rng: &mut ChaCha8Rng) -> Self {
        let id = id.into();
        let weight = Param::new(
            format!("{id}.weight"),
            fan_in_uniform(rng, in_dim, &[out_dim, in_dim]),
        );
        let bias = Param::new(
            format!("{id}.bias"),
            ndarray::ArrayD::zeros(ndarray::IxDyn(&[out_dim])),
        );
        Self {
            id,
            weight,
            bias,
            cache: None,
        }
    }

    pub fn in_dim(&self) -> usize {
        self.weight.value.shape()[1]
    }

    pub fn out_dim(&self) -> usize {
        self.weight.value.shape()[0]
    }
}

impl Layer for Dense {
    fn id(&self) -> &str {
        &self.id
    }

    fn forward(&mut self, x: Feat, _train: bool) -> Feat {
        let (n, c, h, w) = x.dim();
        let in_dim = c * h * w;
        assert_eq!(in_dim, self.in_dim(), "dense {} input mismatch", self.id);
        let x2 = x.into_shape_with_order((n, in_dim)).unwrap();
        let wv = self.weight.value.view().into_dimensionality::<Ix2>().unwrap();
        let bv = self.bias.value.view().into_dimensionality::<Ix1>().unwrap();
        let mut y = x2.dot(&wv.t());
        y += &bv;
        self.cache = Some((x2, (n, c, h, w)));
        let out = self.out_dim();
        y.into_shape_with_order((n, out, 1, 1)).unwrap()
    }

    fn backward(&mut self, dy: Feat) -> Feat {
        let (x2, (n, c, h, w)) = self.cache.take().expect("backward before forward");
        let dy2 = dy.into_shape_with_order((n, self.out_dim())).unwrap();
        {
            let dw = dy2.t().dot(&x2);
            let mut gw = self
                .weight
                .grad
                .view_mut()
                .into_dimensionality::<Ix2>()
                .unwrap();
            gw += &dw;
            let db = dy2.sum_axis(Axis(0));
            let mut gb = self
                .bias
                .grad
                .view_mut()
                .into_dimensionality::<Ix1>()
                .unwrap();
            gb += &db;
        }
        let wv = self.weight.value.view().into_dimensionality::<Ix2>().unwrap();
        let dx2 = dy2.dot(&wv);
        dx2.into_shape_with_order((n, c, h, w)).unwrap()
    }

    fn params(&self) -> Vec<&Param> {
        vec![&self.weight, &self.bias]
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![&mut self.weight, &mut self.bias]
    }
}

/// Per-channel batch normalization.
///
/// In training mode it normalizes with batch statistics and maintains
/// running statistics; in inference mode (or when frozen) it uses the
/// running statistics and leaves them untouched.
pub struct BatchNorm2d {
    id: String,
    gamma: Param,
    beta: Param,
    running_mean: Param,
    running_var: Param,
    momentum: f32,
    eps: f32,
    frozen: bool,
    cache: Option<BnCache>,
}

struct BnCache {
    xhat: Array4<f32>,
    invstd: Array1<f32>,
    train_mode: bool,
}

impl BatchNorm2d {
    pub fn new(id: impl Into<String>, channels: usize) -> Self {
        let id = id.into();
        let ones = ndarray::ArrayD::ones(ndarray::IxDyn(&[channels]));
        let zeros = ndarray::ArrayD::zeros(ndarray::IxDyn(&[channels]));
        Self {
            gamma: Param::new(format!("{id}.gamma"), ones.clone()),
            beta: Param::new(format!("{id}.beta"), zeros.clone()),
            running_mean: Param::buffer(format!("{id}.running_mean"), zeros),
            running_var: Param::buffer(format!("{id}.running_var"), ones),
            momentum: 0.1,
            eps: 1e-5,
            frozen: false,
            cache: None,
            id,
        }
    }
}

impl Layer for BatchNorm2d {
    fn id(&self) -> &str {
        &self.id
    }

    fn forward(&mut self, x: Feat, train: bool) -> Feat {
        let (n, c, h, w) = x.dim();
        let count = (n * h * w) as f32;
        let train_mode = train && !self.frozen;
        let gamma = self.gamma.value.view().into_dimensionality::<Ix1>().unwrap();
        let beta = self.beta.value.view().into_dimensionality::<Ix1>().unwrap();

        let (mean, var) = if train_mode {
            let mut mean = Array1::zeros(c);
            let mut var = Array1::zeros(c);
            for ci in 0..c {
                let ch = x.index_axis(Axis(1), ci);
                let m = ch.sum() / count;
                let v = ch.mapv(|e| (e - m) * (e - m)).sum() / count;
                mean[ci] = m;
                var[ci] = v;
            }
            {
                let mut rm = self
                    .running_mean
                    .value
                    .view_mut()
                    .into_dimensionality::<Ix1>()
                    .unwrap();
                let mut rv = self
                    .running_var
                    .value
                    .view_mut()
                    .into_dimensionality::<Ix1>()
                    .unwrap();
                let mom = self.momentum;
                for ci in 0..c {
                    rm[ci] = (1.0 - mom) * rm[ci] + mom * mean[ci];
                    rv[ci] = (1.0 - mom) * rv[ci] + mom * var[ci];
                }
            }
            (mean, var)
        } else {
            (
                self.running_mean
                    .value
                    .view()
                    .into_dimensionality::<Ix1>()
                    .unwrap()
                    .to_owned(),
                self.running_var
                    .value
                    .view()
                    .into_dimensionality::<Ix1>()
                    .unwrap()
                    .to_owned(),
            )
        };

        let invstd = var.mapv(|v| 1.0 / (v + self.eps).sqrt());
        let mut xhat = x;
        for ci in 0..c {
            let (m, is) = (mean[ci], invstd[ci]);
            xhat.index_axis_mut(Axis(1), ci)
                .mapv_inplace(|v| (v - m) * is);
        }
        let mut y = xhat.clone();
        for ci in 0..c {
            let (g, b) = (gamma[ci], beta[ci]);
            y.index_axis_mut(Axis(1), ci).mapv_inplace(|v| g * v + b);
        }
        self.cache = Some(BnCache {
            xhat,
            invstd,
            train_mode,
        });
        y
    }

    fn backward(&mut self, dy: Feat) -> Feat {
        let BnCache {
            xhat,
            invstd,
            train_mode,
        } = self.cache.take().expect("backward before forward");
        let (n, c, h, w) = dy.dim();
        let count = (n * h * w) as f32;
        let gamma = self.gamma.value.view().into_dimensionality::<Ix1>().unwrap();

        let mut dgamma = Array1::<f32>::zeros(c);
        let mut dbeta = Array1::<f32>::zeros(c);
        for ci in 0..c {
            let d = dy.index_axis(Axis(1), ci);
            let xh = xhat.index_axis(Axis(1), ci);
            dgamma[ci] = (&d * &xh).sum();
            dbeta[ci] = d.sum();
        }

        let mut dx = dy;
        if train_mode {
            for ci in 0..c {
                let g = gamma[ci];
                let is = invstd[ci];
                let sum_dy = dbeta[ci];
                let sum_dy_xhat = dgamma[ci];
                let xh = xhat.index_axis(Axis(1), ci).to_owned();
                let mut d = dx.index_axis_mut(Axis(1), ci);
                ndarray::Zip::from(&mut d).and(&xh).for_each(|dv, &xhv| {
                    *dv = g * is / count * (count * *dv - sum_dy - xhv * sum_dy_xhat);
                });
            }
        } else {
            for ci in 0..c {
                let scale = gamma[ci] * invstd[ci];
                dx.index_axis_mut(Axis(1), ci).mapv_inplace(|v| v * scale);
            }
        }

        if self.gamma.trainable {
            let mut gg = self
                .gamma
                .grad
                .view_mut()
                .into_dimensionality::<Ix1>()
                .unwrap();
            gg += &dgamma;
            let mut gb = self
                .beta
                .grad
                .view_mut()
                .into_dimensionality::<Ix1>()
                .unwrap();
            gb += &dbeta;
        }
        dx
    }

    fn params(&self) -> Vec<&Param> {
        vec![&self.gamma, &self.beta, &self.running_mean, &self.running_var]
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![
            &mut self.gamma,
            &mut self.beta,
            &mut self.running_mean,
            &mut self.running_var,
        ]
    }

    fn set_trainable(&mut self, trainable: bool) {
        self.gamma.trainable = trainable;
        self.beta.trainable = trainable;
        // frozen batch norm runs in inference mode so its running
        // statistics stay bit-identical
        self.frozen = !trainable;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(7)
    }

    #[test]
    fn relu_clamps_and_masks_backward() {
        let mut relu = Relu::new("r");
        let x = Array4::from_shape_fn((1, 1, 2, 2), |(_, _, y, x)| {
            [[-1.0f32, 2.0], [0.0, -3.0]][y][x]
        });
        let y = relu.forward(x, true);
        assert!(y.iter().all(|&v| v >= 0.0));
        assert_eq!(y[[0, 0, 0, 1]], 2.0);
        let dy = Array4::ones((1, 1, 2, 2));
        let dx = relu.backward(dy);
        assert_eq!(dx[[0, 0, 0, 0]], 0.0);
        assert_eq!(dx[[0, 0, 0, 1]], 1.0);
        assert_eq!(dx[[0, 0, 1, 0]], 0.0); // zero is not > 0
    }

    #[test]
    fn maxpool_takes_window_max_and_routes_gradient() {
        let mut pool = MaxPool2::new("p");
        let x = Array4::from_shape_fn((1, 1, 2, 2), |(_, _, y, x)| (y * 2 + x) as f32);
        let y = pool.forward(x, true);
        assert_eq!(y[[0, 0, 0, 0]], 3.0);
        let dx = pool.backward(Array4::ones((1, 1, 1, 1)));
        assert_eq!(dx[[0, 0, 1, 1]], 1.0);
        assert_eq!(dx.sum(), 1.0);
    }

    #[test]
    fn global_avg_pool_means_and_spreads() {
        let mut gap = GlobalAvgPool::new("g");
        let x = Array4::from_elem((2, 3, 4, 4), 2.0f32);
        let y = gap.forward(x, true);
        assert_eq!(y.dim(), (2, 3, 1, 1));
        assert_eq!(y[[0, 0, 0, 0]], 2.0);
        let dx = gap.backward(Array4::ones((2, 3, 1, 1)));
        assert!((dx[[0, 0, 3, 3]] - 1.0 / 16.0).abs() < 1e-7);
    }

    #[test]
    fn dense_shapes_and_param_names() {
        let mut rng = rng();
        let mut d = Dense::new("head", 12, 4, &mut rng);
        assert_eq!(d.params()[0].name, "head.weight");
        let x = Array4::ones((2, 3, 2, 2));
        let y = d.forward(x, true);
        assert_eq!(y.dim(), (2, 4, 1, 1));
        let dx = d.backward(Array4::ones((2, 4, 1, 1)));
        assert_eq!(dx.dim(), (2, 3, 2, 2));
        assert!(d.params()[0].grad.iter().any(|&g| g != 0.0));
    }

    #[test]
    fn batchnorm_train_normalizes_batch() {
        let mut bn = BatchNorm2d::new("bn", 2);
        let x = Array4::from_shape_fn((4, 2, 3, 3), |(n, c, h, w)| {
            (n + c * 2 + h + w) as f32 * 0.5
        });
        let y = bn.forward(x, true);
        for c in 0..2 {
            let ch = y.index_axis(Axis(1), c);
            let mean = ch.sum() / ch.len() as f32;
            assert!(mean.abs() < 1e-5);
        }
    }

    #[test]
    fn frozen_batchnorm_keeps_running_stats() {
        let mut bn = BatchNorm2d::new("bn", 1);
        bn.set_trainable(false);
        let before = bn.running_mean.value.clone();
        let x = Array4::from_elem((2, 1, 2, 2), 5.0f32);
        let _ = bn.forward(x, true);
        assert_eq!(bn.running_mean.value, before);
    }

    #[test]
    fn normalize_applies_fixed_stats() {
        let mut norm = Normalize::new("in", [0.5, 0.5, 0.5], [0.25, 0.25, 0.25]);
        let x = Array4::from_elem((1, 3, 2, 2), 1.0f32);
        let y = norm.forward(x, false);
        assert!((y[[0, 0, 0, 0]] - 2.0).abs() < 1e-7);
    }
}
