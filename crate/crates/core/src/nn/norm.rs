use super::{join, Param, ParamKind, Tensor, Visit};

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

#[derive(Debug, Clone, PartialEq)]
pub struct BatchNorm2d {
    pub weight: Param,
    pub bias: Param,
    pub running_mean: Param,
    pub running_var: Param,
}

pub struct BnCache {
    xhat: Tensor,
    inv_std: Vec<f64>,
    batch_stats: bool,
}

impl BatchNorm2d {
    pub fn new(c: usize) -> Self {
        BatchNorm2d {
            weight: Param::filled(vec![c], 1.0),
            bias: Param::filled(vec![c], 0.0),
            running_mean: Param::filled(vec![c], 0.0),
            running_var: Param::filled(vec![c], 1.0),
        }
    }

    pub fn channels(&self) -> usize {
        self.weight.value.len()
    }

    /// Normalizes with batch statistics and updates the running ones.
    pub fn forward_train(&mut self, x: &Tensor) -> (Tensor, BnCache) {
        let c = self.channels();
        assert_eq!(x.c(), c, "batch-norm channels");
        let (n, plane) = (x.n(), x.plane());
        let m = (n * plane) as f64;
        let mut mean = vec![0.0; c];
        let mut inv_std = vec![0.0; c];
        for ch in 0..c {
            let mut s = 0.0;
            for i in 0..n {
                s += x.item(i)[ch * plane..(ch + 1) * plane].iter().sum::<f64>();
            }
            let mu = s / m;
            let mut ss = 0.0;
            for i in 0..n {
                ss += x.item(i)[ch * plane..(ch + 1) * plane]
                    .iter()
                    .map(|v| (v - mu) * (v - mu))
                    .sum::<f64>();
            }
            let unbiased = if m > 1.0 { ss / (m - 1.0) } else { ss / m };
            let rm = &mut self.running_mean.value[ch];
            *rm = (1.0 - BN_MOMENTUM) * *rm + BN_MOMENTUM * mu;
            let rv = &mut self.running_var.value[ch];
            *rv = (1.0 - BN_MOMENTUM) * *rv + BN_MOMENTUM * unbiased;
            mean[ch] = mu;
            inv_std[ch] = 1.0 / (ss / m + BN_EPS).sqrt();
        }
        self.normalize(x, &mean, inv_std, true)
    }

    /// Normalizes with the running statistics.
    pub fn forward_eval(&self, x: &Tensor) -> (Tensor, BnCache) {
        assert_eq!(x.c(), self.channels(), "batch-norm channels");
        let inv_std = self
            .running_var
            .value
            .iter()
            .map(|v| 1.0 / (v + BN_EPS).sqrt())
            .collect();
        self.normalize(x, &self.running_mean.value, inv_std, false)
    }

    fn normalize(&self, x: &Tensor, mean: &[f64], inv_std: Vec<f64>, batch_stats: bool) -> (Tensor, BnCache) {
        let c = self.channels();
        let plane = x.plane();
        let mut xhat = Tensor::zeros(x.shape);
        let mut y = Tensor::zeros(x.shape);
        for ((src, xh), out) in x
            .data
            .chunks(c * plane)
            .zip(xhat.data.chunks_mut(c * plane))
            .zip(y.data.chunks_mut(c * plane))
        {
            for ch in 0..c {
                let (g, b) = (self.weight.value[ch], self.bias.value[ch]);
                for p in ch * plane..(ch + 1) * plane {
                    let h = (src[p] - mean[ch]) * inv_std[ch];
                    xh[p] = h;
                    out[p] = g * h + b;
                }
            }
        }
        (
            y,
            BnCache {
                xhat,
                inv_std,
                batch_stats,
            },
        )
    }

    pub fn backward(&mut self, cache: &BnCache, dy: &Tensor) -> Tensor {
        let c = self.channels();
        let (n, plane) = (dy.n(), dy.plane());
        let m = (n * plane) as f64;
        let mut dx = Tensor::zeros(dy.shape);
        for ch in 0..c {
            let (mut sum_dy, mut sum_dy_xhat) = (0.0, 0.0);
            for i in 0..n {
                let off = i * c * plane + ch * plane;
                for p in off..off + plane {
                    sum_dy += dy.data[p];
                    sum_dy_xhat += dy.data[p] * cache.xhat.data[p];
                }
            }
            self.bias.grad[ch] += sum_dy;
            self.weight.grad[ch] += sum_dy_xhat;
            let g = self.weight.value[ch] * cache.inv_std[ch];
            for i in 0..n {
                let off = i * c * plane + ch * plane;
                for p in off..off + plane {
                    dx.data[p] = if cache.batch_stats {
                        g * (dy.data[p] - sum_dy / m - cache.xhat.data[p] * sum_dy_xhat / m)
                    } else {
                        g * dy.data[p]
                    };
                }
            }
        }
        dx
    }
}

impl Visit for BatchNorm2d {
    fn visit(&mut self, prefix: &str, f: &mut dyn FnMut(&str, ParamKind, &mut Param)) {
        f(&join(prefix, "weight"), ParamKind::Trainable, &mut self.weight);
        f(&join(prefix, "bias"), ParamKind::Trainable, &mut self.bias);
        f(&join(prefix, "running_mean"), ParamKind::Buffer, &mut self.running_mean);
        f(&join(prefix, "running_var"), ParamKind::Buffer, &mut self.running_var);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::gradcheck::{rel_error, numeric_grad};

    fn data(n: usize) -> Vec<f64> {
        (0..n).map(|i| ((i * 37 % 23) as f64 - 11.0) / 7.0 + (i % 3) as f64).collect()
    }

    #[test]
    fn train_mode_normalizes_and_tracks_statistics() {
        let mut bn = BatchNorm2d::new(2);
        let x = Tensor::from_vec([3, 2, 2, 2], data(24));
        let (y, _) = bn.forward_train(&x);
        for ch in 0..2 {
            let vals: Vec<f64> = (0..3).flat_map(|i| y.item(i)[ch * 4..ch * 4 + 4].to_vec()).collect();
            let mean = vals.iter().sum::<f64>() / 12.0;
            let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 12.0;
            assert!(mean.abs() < 1e-12);
            assert!((var - 1.0).abs() < 1e-3);
        }
        assert!(bn.running_mean.value.iter().any(|&v| v != 0.0));
    }

    #[test]
    fn gradients_match_finite_differences() {
        for train in [true, false] {
            let mut bn = BatchNorm2d::new(3);
            bn.weight.value = vec![0.7, 1.3, -0.4];
            bn.bias.value = vec![0.1, -0.2, 0.3];
            bn.running_mean.value = vec![0.2, 0.1, -0.3];
            bn.running_var.value = vec![1.5, 0.6, 2.0];
            let shape = [2, 3, 3, 2];
            let mut xv = data(36);
            let probe: Vec<f64> = data(36).iter().map(|v| v.sin()).collect();
            let bn0 = bn.clone();
            let loss = |b: &BatchNorm2d, x: &[f64]| -> f64 {
                let mut b = b.clone();
                let x = Tensor::from_vec(shape, x.to_vec());
                let (y, _) = if train { b.forward_train(&x) } else { b.forward_eval(&x) };
                y.data.iter().zip(&probe).map(|(a, p)| a * p).sum()
            };
            let x = Tensor::from_vec(shape, xv.clone());
            let (_, cache) = if train { bn.forward_train(&x) } else { bn.clone().forward_eval(&x) };
            let dx = bn.backward(&cache, &Tensor::from_vec(shape, probe.clone()));
            let nx = numeric_grad(&mut xv, |x| loss(&bn0, x));
            assert!(rel_error(&dx.data, &nx) < 1e-5, "dx train={train}");
            let mut gv = bn0.weight.value.clone();
            let ng = numeric_grad(&mut gv, |g| {
                let mut b = bn0.clone();
                b.weight.value = g.to_vec();
                loss(&b, &xv)
            });
            assert!(rel_error(&bn.weight.grad, &ng) < 1e-5);
        }
    }
}
