use super::{gemm, join, Param, ParamKind, Tensor, Visit};

/// Bias-free 2-D convolution computed as im2col followed by one GEMM per
/// batch item.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv2d {
    pub in_c: usize,
    pub out_c: usize,
    pub k: usize,
    pub stride: usize,
    pub pad: usize,
    /// (out_c, in_c, k, k)
    pub weight: Param,
}

impl Conv2d {
    pub fn new(in_c: usize, out_c: usize, k: usize, stride: usize, pad: usize) -> Self {
        Conv2d {
            in_c,
            out_c,
            k,
            stride,
            pad,
            weight: Param::filled(vec![out_c, in_c, k, k], 0.0),
        }
    }

    pub fn out_hw(&self, h: usize, w: usize) -> (usize, usize) {
        (
            (h + 2 * self.pad - self.k) / self.stride + 1,
            (w + 2 * self.pad - self.k) / self.stride + 1,
        )
    }

    fn im2col(&self, x: &[f64], h: usize, w: usize, cols: &mut [f64]) {
        let (oh, ow) = self.out_hw(h, w);
        let p = oh * ow;
        let k = self.k;
        for c in 0..self.in_c {
            let plane = &x[c * h * w..(c + 1) * h * w];
            for ki in 0..k {
                for kj in 0..k {
                    let row = &mut cols[((c * k + ki) * k + kj) * p..][..p];
                    for oy in 0..oh {
                        let iy = (oy * self.stride + ki) as isize - self.pad as isize;
                        let dst = &mut row[oy * ow..(oy + 1) * ow];
                        if iy < 0 || iy >= h as isize {
                            dst.iter_mut().for_each(|v| *v = 0.0);
                            continue;
                        }
                        let src = &plane[iy as usize * w..(iy as usize + 1) * w];
                        for (ox, d) in dst.iter_mut().enumerate() {
                            let ix = (ox * self.stride + kj) as isize - self.pad as isize;
                            *d = if ix < 0 || ix >= w as isize { 0.0 } else { src[ix as usize] };
                        }
                    }
                }
            }
        }
    }

    fn col2im(&self, cols: &[f64], h: usize, w: usize, dx: &mut [f64]) {
        let (oh, ow) = self.out_hw(h, w);
        let p = oh * ow;
        let k = self.k;
        for c in 0..self.in_c {
            let plane = &mut dx[c * h * w..(c + 1) * h * w];
            for ki in 0..k {
                for kj in 0..k {
                    let row = &cols[((c * k + ki) * k + kj) * p..][..p];
                    for oy in 0..oh {
                        let iy = (oy * self.stride + ki) as isize - self.pad as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        let dst = &mut plane[iy as usize * w..(iy as usize + 1) * w];
                        for ox in 0..ow {
                            let ix = (ox * self.stride + kj) as isize - self.pad as isize;
                            if ix >= 0 && ix < w as isize {
                                dst[ix as usize] += row[oy * ow + ox];
                            }
                        }
                    }
                }
            }
        }
    }

    fn is_pointwise(&self) -> bool {
        self.k == 1 && self.stride == 1 && self.pad == 0
    }

    pub fn forward(&self, x: &Tensor) -> Tensor {
        let [n, c, h, w] = x.shape;
        assert_eq!(c, self.in_c, "conv input channels");
        let (oh, ow) = self.out_hw(h, w);
        let p = oh * ow;
        let kk = self.in_c * self.k * self.k;
        let mut y = Tensor::zeros([n, self.out_c, oh, ow]);
        let mut cols = vec![0.0; kk * p];
        for i in 0..n {
            let src: &[f64] = if self.is_pointwise() {
                x.item(i)
            } else {
                self.im2col(x.item(i), h, w, &mut cols);
                &cols
            };
            gemm(self.out_c, kk, p, &self.weight.value, false, src, false, 0.0, y.item_mut(i));
        }
        y
    }

    /// Accumulates the weight gradient and returns the input gradient.
    pub fn backward(&mut self, x: &Tensor, dy: &Tensor) -> Tensor {
        let [n, _, h, w] = x.shape;
        let (oh, ow) = self.out_hw(h, w);
        let p = oh * ow;
        let kk = self.in_c * self.k * self.k;
        let mut dx = Tensor::zeros(x.shape);
        let mut cols = vec![0.0; kk * p];
        let mut dcols = vec![0.0; kk * p];
        for i in 0..n {
            let src: &[f64] = if self.is_pointwise() {
                x.item(i)
            } else {
                self.im2col(x.item(i), h, w, &mut cols);
                &cols
            };
            let g = dy.item(i);
            gemm(self.out_c, p, kk, g, false, src, true, 1.0, &mut self.weight.grad);
            if self.is_pointwise() {
                gemm(kk, self.out_c, p, &self.weight.value, true, g, false, 0.0, dx.item_mut(i));
            } else {
                gemm(kk, self.out_c, p, &self.weight.value, true, g, false, 0.0, &mut dcols);
                self.col2im(&dcols, h, w, dx.item_mut(i));
            }
        }
        dx
    }
}

impl Visit for Conv2d {
    fn visit(&mut self, prefix: &str, f: &mut dyn FnMut(&str, ParamKind, &mut Param)) {
        f(&join(prefix, "weight"), ParamKind::Trainable, &mut self.weight);
    }
}
