use serde::{Deserialize, Serialize};

use super::Tensor;

pub fn relu(x: &Tensor) -> Tensor {
    Tensor::from_vec(x.shape, x.data.iter().map(|&v| v.max(0.0)).collect())
}

/// Gradient of ReLU given its output.
pub fn relu_backward(y: &Tensor, dy: &Tensor) -> Tensor {
    Tensor::from_vec(
        dy.shape,
        y.data
            .iter()
            .zip(&dy.data)
            .map(|(&o, &g)| if o > 0.0 { g } else { 0.0 })
            .collect(),
    )
}

pub struct MaxPoolCache {
    in_shape: [usize; 4],
    argmax: Vec<usize>,
}

/// 3×3 max pooling, stride 2, padding 1.
pub fn max_pool_3x3s2(x: &Tensor) -> (Tensor, MaxPoolCache) {
    let [n, c, h, w] = x.shape;
    let (oh, ow) = ((h + 2 - 3) / 2 + 1, (w + 2 - 3) / 2 + 1);
    let mut y = Tensor::zeros([n, c, oh, ow]);
    let mut argmax = vec![0; y.data.len()];
    for nc in 0..n * c {
        let base = nc * h * w;
        for oy in 0..oh {
            for ox in 0..ow {
                let (mut best, mut at) = (f64::NEG_INFINITY, base);
                for ky in 0..3 {
                    let iy = (oy * 2 + ky) as isize - 1;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    for kx in 0..3 {
                        let ix = (ox * 2 + kx) as isize - 1;
                        if ix < 0 || ix >= w as isize {
                            continue;
                        }
                        let idx = base + iy as usize * w + ix as usize;
                        if x.data[idx] > best {
                            best = x.data[idx];
                            at = idx;
                        }
                    }
                }
                let o = (nc * oh + oy) * ow + ox;
                y.data[o] = best;
                argmax[o] = at;
            }
        }
    }
    (
        y,
        MaxPoolCache {
            in_shape: x.shape,
            argmax,
        },
    )
}

pub fn max_pool_backward(cache: &MaxPoolCache, dy: &Tensor) -> Tensor {
    let mut dx = Tensor::zeros(cache.in_shape);
    for (o, &i) in cache.argmax.iter().enumerate() {
        dx.data[i] += dy.data[o];
    }
    dx
}

/// Per-channel spatial reduction to one value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpatialPool {
    #[default]
    Average,
    Max,
}

pub struct GlobalPoolCache {
    in_shape: [usize; 4],
    mode: SpatialPool,
    argmax: Vec<usize>,
}

/// Returns an (n, c) row-major feature matrix.
pub fn global_pool(x: &Tensor, mode: SpatialPool) -> (Vec<f64>, GlobalPoolCache) {
    let plane = x.plane();
    let rows = x.n() * x.c();
    let mut out = Vec::with_capacity(rows);
    let mut argmax = Vec::new();
    for r in 0..rows {
        let v = &x.data[r * plane..(r + 1) * plane];
        match mode {
            SpatialPool::Average => out.push(v.iter().sum::<f64>() / plane as f64),
            SpatialPool::Max => {
                let mut at = 0;
                for (i, &e) in v.iter().enumerate() {
                    if e > v[at] {
                        at = i;
                    }
                }
                out.push(v[at]);
                argmax.push(r * plane + at);
            }
        }
    }
    (
        out,
        GlobalPoolCache {
            in_shape: x.shape,
            mode,
            argmax,
        },
    )
}

pub fn global_pool_backward(cache: &GlobalPoolCache, dfeat: &[f64]) -> Tensor {
    let mut dx = Tensor::zeros(cache.in_shape);
    let plane = dx.plane();
    match cache.mode {
        SpatialPool::Average => {
            for (r, &g) in dfeat.iter().enumerate() {
                let share = g / plane as f64;
                dx.data[r * plane..(r + 1) * plane].iter_mut().for_each(|v| *v = share);
            }
        }
        SpatialPool::Max => {
            for (&i, &g) in cache.argmax.iter().zip(dfeat) {
                dx.data[i] = g;
            }
        }
    }
    dx
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn max_pool_shapes_and_routing() {
        let x = Tensor::from_vec([1, 1, 4, 4], (0..16).map(|v| v as f64).collect());
        let (y, cache) = max_pool_3x3s2(&x);
        assert_eq!(y.shape, [1, 1, 2, 2]);
        assert_eq!(y.data, vec![5.0, 7.0, 13.0, 15.0]);
        let dx = max_pool_backward(&cache, &Tensor::from_vec([1, 1, 2, 2], vec![1.0; 4]));
        assert_eq!(dx.data.iter().sum::<f64>(), 4.0);
        assert_eq!(dx.data[15], 1.0);
    }

    #[test]
    fn global_pools() {
        let x = Tensor::from_vec([1, 2, 1, 3], vec![1.0, 2.0, 6.0, -1.0, 4.0, 0.0]);
        let (avg, c) = global_pool(&x, SpatialPool::Average);
        assert_eq!(avg, vec![3.0, 1.0]);
        let d = global_pool_backward(&c, &[3.0, 6.0]);
        assert_eq!(d.data, vec![1.0, 1.0, 1.0, 2.0, 2.0, 2.0]);
        let (mx, c) = global_pool(&x, SpatialPool::Max);
        assert_eq!(mx, vec![6.0, 4.0]);
        let d = global_pool_backward(&c, &[1.0, 1.0]);
        assert_eq!(d.data, vec![0.0, 0.0, 1.0, 0.0, 1.0, 0.0]);
    }
}
