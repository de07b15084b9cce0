//! Elementwise, reduction, shape and matrix ops.

use ndarray::{concatenate, ArrayD, Axis, Ix1, Ix2, IxDyn, Slice};

use super::{scalar_array, Tape, TensorId};

fn as2(v: &ArrayD<f64>) -> ndarray::ArrayView2<'_, f64> {
    v.view().into_dimensionality::<Ix2>().expect("2-d tensor")
}

fn as1(v: &ArrayD<f64>) -> ndarray::ArrayView1<'_, f64> {
    v.view().into_dimensionality::<Ix1>().expect("1-d tensor")
}

impl Tape {
    fn assert_same_shape(&self, a: TensorId, b: TensorId, op: &str) {
        assert_eq!(
            self.shape(a),
            self.shape(b),
            "{op}: shape mismatch {:?} vs {:?}",
            self.shape(a),
            self.shape(b)
        );
    }

    pub fn add(&mut self, a: TensorId, b: TensorId) -> TensorId {
        self.assert_same_shape(a, b, "add");
        let v = self.value(a) + self.value(b);
        self.push(
            "add",
            v,
            vec![a.0, b.0],
            Some(Box::new(|_, _, g| vec![g.clone(), g.clone()])),
        )
    }

    pub fn sub(&mut self, a: TensorId, b: TensorId) -> TensorId {
        self.assert_same_shape(a, b, "sub");
        let v = self.value(a) - self.value(b);
        self.push(
            "sub",
            v,
            vec![a.0, b.0],
            Some(Box::new(|_, _, g| vec![g.clone(), g.mapv(|x| -x)])),
        )
    }

    pub fn mul(&mut self, a: TensorId, b: TensorId) -> TensorId {
        self.assert_same_shape(a, b, "mul");
        let v = self.value(a) * self.value(b);
        self.push(
            "mul",
            v,
            vec![a.0, b.0],
            Some(Box::new(|p, _, g| vec![g * p[1], g * p[0]])),
        )
    }

    pub fn neg(&mut self, a: TensorId) -> TensorId {
        let v = self.value(a).mapv(|x| -x);
        self.push(
            "neg",
            v,
            vec![a.0],
            Some(Box::new(|_, _, g| vec![g.mapv(|x| -x)])),
        )
    }

    pub fn scale(&mut self, a: TensorId, c: f64) -> TensorId {
        let v = self.value(a).mapv(|x| c * x);
        self.push(
            "scale",
            v,
            vec![a.0],
            Some(Box::new(move |_, _, g| vec![g.mapv(|x| c * x)])),
        )
    }

    pub fn add_scalar(&mut self, a: TensorId, c: f64) -> TensorId {
        let v = self.value(a).mapv(|x| x + c);
        self.push(
            "add_scalar",
            v,
            vec![a.0],
            Some(Box::new(|_, _, g| vec![g.clone()])),
        )
    }

    pub fn exp(&mut self, a: TensorId) -> TensorId {
        let v = self.value(a).mapv(f64::exp);
        self.push(
            "exp",
            v,
            vec![a.0],
            Some(Box::new(|_, out, g| vec![g * out])),
        )
    }

    pub fn tanh(&mut self, a: TensorId) -> TensorId {
        let v = self.value(a).mapv(f64::tanh);
        self.push(
            "tanh",
            v,
            vec![a.0],
            Some(Box::new(|_, out, g| {
                let mut d = out.mapv(|y| 1.0 - y * y);
                d *= g;
                vec![d]
            })),
        )
    }

    pub fn sigmoid(&mut self, a: TensorId) -> TensorId {
        let v = self.value(a).mapv(|x| 1.0 / (1.0 + (-x).exp()));
        self.push(
            "sigmoid",
            v,
            vec![a.0],
            Some(Box::new(|_, out, g| {
                let mut d = out.mapv(|y| y * (1.0 - y));
                d *= g;
                vec![d]
            })),
        )
    }

    pub fn leaky_relu(&mut self, a: TensorId, slope: f64) -> TensorId {
        let v = self.value(a).mapv(|x| if x >= 0.0 { x } else { slope * x });
        self.push(
            "leaky_relu",
            v,
            vec![a.0],
            Some(Box::new(move |p, _, g| {
                let mut d = p[0].mapv(|x| if x >= 0.0 { 1.0 } else { slope });
                d *= g;
                vec![d]
            })),
        )
    }

    pub fn relu(&mut self, a: TensorId) -> TensorId {
        self.leaky_relu(a, 0.0)
    }

    pub fn abs(&mut self, a: TensorId) -> TensorId {
        let v = self.value(a).mapv(f64::abs);
        self.push(
            "abs",
            v,
            vec![a.0],
            Some(Box::new(|p, _, g| {
                let mut d = p[0].mapv(|x| {
                    if x > 0.0 {
                        1.0
                    } else if x < 0.0 {
                        -1.0
                    } else {
                        0.0
                    }
                });
                d *= g;
                vec![d]
            })),
        )
    }

    pub fn square(&mut self, a: TensorId) -> TensorId {
        let v = self.value(a).mapv(|x| x * x);
        self.push(
            "square",
            v,
            vec![a.0],
            Some(Box::new(|p, _, g| {
                let mut d = p[0].mapv(|x| 2.0 * x);
                d *= g;
                vec![d]
            })),
        )
    }

    /// sqrt with zero-safe backward: derivative is taken as 0 where the
    /// output is 0, so silent spectrogram bins do not produce NaNs.
    pub fn sqrt_guarded(&mut self, a: TensorId) -> TensorId {
        let v = self.value(a).mapv(|x| x.max(0.0).sqrt());
        self.push(
            "sqrt_guarded",
            v,
            vec![a.0],
            Some(Box::new(|_, out, g| {
                let d = ndarray::Zip::from(out)
                    .and(g)
                    .map_collect(|&y, &gi| if y > 0.0 { 0.5 * gi / y } else { 0.0 });
                vec![d]
            })),
        )
    }

    pub fn recip(&mut self, a: TensorId) -> TensorId {
        let v = self.value(a).mapv(|x| 1.0 / x);
        self.push(
            "recip",
            v,
            vec![a.0],
            Some(Box::new(|_, out, g| {
                let d = ndarray::Zip::from(out)
                    .and(g)
                    .map_collect(|&y, &gi| -gi * y * y);
                vec![d]
            })),
        )
    }

    /// log(max(x, floor)); gradient is 1/x above the floor, 0 below it.
    pub fn log_floor(&mut self, a: TensorId, floor: f64) -> TensorId {
        assert!(floor > 0.0);
        let v = self.value(a).mapv(|x| x.max(floor).ln());
        self.push(
            "log_floor",
            v,
            vec![a.0],
            Some(Box::new(move |p, _, g| {
                let d = ndarray::Zip::from(p[0])
                    .and(g)
                    .map_collect(|&x, &gi| if x > floor { gi / x } else { 0.0 });
                vec![d]
            })),
        )
    }

    /// Hard clamp; gradient passes through strictly inside the range.
    pub fn clamp(&mut self, a: TensorId, lo: f64, hi: f64) -> TensorId {
        let v = self.value(a).mapv(|x| x.clamp(lo, hi));
        self.push(
            "clamp",
            v,
            vec![a.0],
            Some(Box::new(move |p, _, g| {
                let d = ndarray::Zip::from(p[0])
                    .and(g)
                    .map_collect(|&x, &gi| if x > lo && x < hi { gi } else { 0.0 });
                vec![d]
            })),
        )
    }

    /// Multiply a tensor by a scalar-valued node (0-dim).
    pub fn mul_scalar_tensor(&mut self, a: TensorId, s: TensorId) -> TensorId {
        assert_eq!(self.value(s).len(), 1, "mul_scalar_tensor: s must be scalar");
        let sv = self.scalar(s);
        let v = self.value(a).mapv(|x| x * sv);
        self.push(
            "mul_scalar_tensor",
            v,
            vec![a.0, s.0],
            Some(Box::new(|p, _, g| {
                let sv = *p[1].iter().next().expect("scalar");
                let ga = g.mapv(|x| x * sv);
                let gs = scalar_array((g * p[0]).sum());
                vec![ga, gs]
            })),
        )
    }

    pub fn mean_all(&mut self, a: TensorId) -> TensorId {
        let n = self.value(a).len() as f64;
        let v = scalar_array(self.value(a).sum() / n);
        self.push(
            "mean_all",
            v,
            vec![a.0],
            Some(Box::new(move |p, _, g| {
                let gi = *g.iter().next().expect("scalar") / n;
                vec![ArrayD::from_elem(p[0].raw_dim(), gi)]
            })),
        )
    }

    pub fn sum_all(&mut self, a: TensorId) -> TensorId {
        let v = scalar_array(self.value(a).sum());
        self.push(
            "sum_all",
            v,
            vec![a.0],
            Some(Box::new(|p, _, g| {
                let gi = *g.iter().next().expect("scalar");
                vec![ArrayD::from_elem(p[0].raw_dim(), gi)]
            })),
        )
    }

    pub fn reshape(&mut self, a: TensorId, shape: &[usize]) -> TensorId {
        let v = self
            .value(a)
            .clone()
            .into_shape(IxDyn(shape))
            .expect("reshape: element count must match");
        self.push(
            "reshape",
            v,
            vec![a.0],
            Some(Box::new(|p, _, g| {
                vec![g
                    .clone()
                    .into_shape(p[0].raw_dim())
                    .expect("reshape backward")]
            })),
        )
    }

    /// 2-D transpose.
    pub fn transpose2(&mut self, a: TensorId) -> TensorId {
        let v = as2(self.value(a)).t().to_owned().into_dyn();
        self.push(
            "transpose2",
            v,
            vec![a.0],
            Some(Box::new(|_, _, g| {
                vec![as2(g).t().to_owned().into_dyn()]
            })),
        )
    }

    /// Concatenate two tensors of equal rank along `axis`.
    pub fn concat(&mut self, axis: usize, a: TensorId, b: TensorId) -> TensorId {
        let va = self.value(a).view();
        let vb = self.value(b).view();
        let v = concatenate(Axis(axis), &[va, vb]).expect("concat shapes");
        let split = self.shape(a)[axis];
        self.push(
            "concat",
            v,
            vec![a.0, b.0],
            Some(Box::new(move |p, _, g| {
                let ga = g
                    .slice_axis(Axis(axis), Slice::from(0..split))
                    .to_owned();
                let total = p[0].shape()[axis] + p[1].shape()[axis];
                let gb = g
                    .slice_axis(Axis(axis), Slice::from(split..total))
                    .to_owned();
                vec![ga, gb]
            })),
        )
    }

    /// Slice `len` entries starting at `start` along `axis`.
    pub fn slice_ax(&mut self, a: TensorId, axis: usize, start: usize, len: usize) -> TensorId {
        let v = self
            .value(a)
            .slice_axis(Axis(axis), Slice::from(start..start + len))
            .to_owned();
        self.push(
            "slice_ax",
            v,
            vec![a.0],
            Some(Box::new(move |p, _, g| {
                let mut ga = ArrayD::zeros(p[0].raw_dim());
                ga.slice_axis_mut(Axis(axis), Slice::from(start..start + len))
                    .assign(g);
                vec![ga]
            })),
        )
    }

    /// Repeat a row vector `[D]` into `[rows, D]`.
    pub fn broadcast_row(&mut self, v: TensorId, rows: usize) -> TensorId {
        let row = as1(self.value(v)).to_owned();
        let d = row.len();
        let out = ndarray::Array2::from_shape_fn((rows, d), |(_, j)| row[j]).into_dyn();
        self.push(
            "broadcast_row",
            out,
            vec![v.0],
            Some(Box::new(|_, _, g| {
                vec![as2(g).sum_axis(Axis(0)).into_dyn()]
            })),
        )
    }

    /// Select one row of a `[N, D]` matrix (embedding lookup).
    pub fn select_row(&mut self, m: TensorId, idx: usize) -> TensorId {
        let v = as2(self.value(m)).row(idx).to_owned().into_dyn();
        self.push(
            "select_row",
            v,
            vec![m.0],
            Some(Box::new(move |p, _, g| {
                let mut gm = ArrayD::zeros(p[0].raw_dim());
                let mut gm2 = gm.view_mut().into_dimensionality::<Ix2>().expect("2-d");
                gm2.row_mut(idx).assign(&as1(g));
                vec![gm]
            })),
        )
    }

    /// `[T, D] + [D]` broadcast along rows.
    pub fn add_rowvec(&mut self, x: TensorId, v: TensorId) -> TensorId {
        let xs = as2(self.value(x));
        let vs = as1(self.value(v));
        assert_eq!(xs.ncols(), vs.len(), "add_rowvec width mismatch");
        let out = (&xs + &vs).into_dyn();
        self.push(
            "add_rowvec",
            out,
            vec![x.0, v.0],
            Some(Box::new(|_, _, g| {
                let g2 = as2(g);
                vec![g.clone(), g2.sum_axis(Axis(0)).into_dyn()]
            })),
        )
    }

    /// `[T, D] * [D]` broadcast along rows (window application).
    pub fn mul_rowvec(&mut self, x: TensorId, v: TensorId) -> TensorId {
        let xs = as2(self.value(x));
        let vs = as1(self.value(v));
        assert_eq!(xs.ncols(), vs.len(), "mul_rowvec width mismatch");
        let out = (&xs * &vs).into_dyn();
        self.push(
            "mul_rowvec",
            out,
            vec![x.0, v.0],
            Some(Box::new(|p, _, g| {
                let g2 = as2(g);
                let x2 = as2(p[0]);
                let v1 = as1(p[1]);
                let gx = (&g2 * &v1).into_dyn();
                let gv = (&g2 * &x2).sum_axis(Axis(0)).into_dyn();
                vec![gx, gv]
            })),
        )
    }

    /// `[B, C, T] + [C]` broadcast over batch and time (channel bias).
    pub fn add_chan(&mut self, x: TensorId, v: TensorId) -> TensorId {
        let shape = self.shape(x).to_vec();
        assert_eq!(shape.len(), 3, "add_chan expects [B, C, T]");
        let c = shape[1];
        assert_eq!(self.value(v).len(), c, "add_chan channel mismatch");
        let vv = as1(self.value(v)).to_owned();
        let mut out = self.value(x).clone();
        for mut batch in out.axis_iter_mut(Axis(0)) {
            for (ci, mut lane) in batch.axis_iter_mut(Axis(0)).enumerate() {
                lane += vv[ci];
            }
        }
        self.push(
            "add_chan",
            out,
            vec![x.0, v.0],
            Some(Box::new(move |_, _, g| {
                let mut gv = ndarray::Array1::zeros(c);
                for batch in g.axis_iter(Axis(0)) {
                    for (ci, lane) in batch.axis_iter(Axis(0)).enumerate() {
                        gv[ci] += lane.sum();
                    }
                }
                vec![g.clone(), gv.into_dyn()]
            })),
        )
    }

    /// Multiply along the first axis by a vector: out[i, ...] = x[i, ...] * f[i].
    pub fn mul_chan0(&mut self, x: TensorId, f: TensorId) -> TensorId {
        let n = self.shape(x)[0];
        assert_eq!(self.value(f).len(), n, "mul_chan0 length mismatch");
        let fv = as1(self.value(f)).to_owned();
        let mut out = self.value(x).clone();
        for (i, mut sub) in out.axis_iter_mut(Axis(0)).enumerate() {
            sub *= fv[i];
        }
        self.push(
            "mul_chan0",
            out,
            vec![x.0, f.0],
            Some(Box::new(move |p, _, g| {
                let fv = as1(p[1]);
                let mut gx = g.clone();
                for (i, mut sub) in gx.axis_iter_mut(Axis(0)).enumerate() {
                    sub *= fv[i];
                }
                let mut gf = ndarray::Array1::zeros(n);
                for (i, (gs, xs)) in g
                    .axis_iter(Axis(0))
                    .zip(p[0].axis_iter(Axis(0)))
                    .enumerate()
                {
                    gf[i] = (&gs * &xs).sum();
                }
                vec![gx, gf.into_dyn()]
            })),
        )
    }

    /// Sum over every axis except the first: `[C, ...] -> [C]`.
    pub fn sum_chan0(&mut self, x: TensorId) -> TensorId {
        let n = self.shape(x)[0];
        let mut out = ndarray::Array1::zeros(n);
        for (i, sub) in self.value(x).axis_iter(Axis(0)).enumerate() {
            out[i] = sub.sum();
        }
        self.push(
            "sum_chan0",
            out.into_dyn(),
            vec![x.0],
            Some(Box::new(|p, _, g| {
                let g1 = as1(g);
                let mut gx = ArrayD::zeros(p[0].raw_dim());
                for (i, mut sub) in gx.axis_iter_mut(Axis(0)).enumerate() {
                    sub.fill(g1[i]);
                }
                vec![gx]
            })),
        )
    }

    /// Matrix product `[m, k] x [k, n] -> [m, n]`.
    pub fn matmul(&mut self, a: TensorId, b: TensorId) -> TensorId {
        let av = as2(self.value(a));
        let bv = as2(self.value(b));
        assert_eq!(av.ncols(), bv.nrows(), "matmul inner dims");
        let v = av.dot(&bv).into_dyn();
        self.push(
            "matmul",
            v,
            vec![a.0, b.0],
            Some(Box::new(|p, _, g| {
                let g2 = as2(g);
                let a2 = as2(p[0]);
                let b2 = as2(p[1]);
                let ga = g2.dot(&b2.t()).into_dyn();
                let gb = a2.t().dot(&g2).into_dyn();
                vec![ga, gb]
            })),
        )
    }

    /// Row-wise softmax on `[T, N]`.
    pub fn softmax_rows(&mut self, x: TensorId) -> TensorId {
        let xs = as2(self.value(x));
        let mut out = xs.to_owned();
        for mut row in out.rows_mut() {
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            row.mapv_inplace(|v| (v - max).exp());
            let sum = row.sum();
            row.mapv_inplace(|v| v / sum);
        }
        self.push(
            "softmax_rows",
            out.into_dyn(),
            vec![x.0],
            Some(Box::new(|_, out, g| {
                let y = as2(out);
                let g2 = as2(g);
                let mut gx = (&g2 * &y).to_owned();
                for (mut grow, yrow) in gx.rows_mut().into_iter().zip(y.rows()) {
                    let dot: f64 = grow.sum();
                    ndarray::Zip::from(&mut grow).and(yrow).for_each(|gv, &yv| {
                        *gv -= dot * yv;
                    });
                }
                vec![gx.into_dyn()]
            })),
        )
    }

    /// Layer normalization over the last axis of `[T, D]` with affine params.
    pub fn layer_norm(
        &mut self,
        x: TensorId,
        gamma: TensorId,
        beta: TensorId,
        eps: f64,
    ) -> TensorId {
        let xs = as2(self.value(x));
        let gm = as1(self.value(gamma)).to_owned();
        let bt = as1(self.value(beta)).to_owned();
        let d = xs.ncols();
        assert_eq!(gm.len(), d);
        assert_eq!(bt.len(), d);
        let mut out = xs.to_owned();
        for mut row in out.rows_mut() {
            let mean = row.sum() / d as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
            let inv = 1.0 / (var + eps).sqrt();
            for (j, v) in row.iter_mut().enumerate() {
                *v = (*v - mean) * inv * gm[j] + bt[j];
            }
        }
        self.push(
            "layer_norm",
            out.into_dyn(),
            vec![x.0, gamma.0, beta.0],
            Some(Box::new(move |p, _, g| {
                let xs = as2(p[0]);
                let gm = as1(p[1]);
                let g2 = as2(g);
                let d = xs.ncols();
                let df = d as f64;
                let mut gx = ndarray::Array2::zeros(xs.raw_dim());
                let mut ggamma = ndarray::Array1::zeros(d);
                let mut gbeta = ndarray::Array1::zeros(d);
                for (i, xrow) in xs.rows().into_iter().enumerate() {
                    let mean = xrow.sum() / df;
                    let var =
                        xrow.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / df;
                    let inv = 1.0 / (var + eps).sqrt();
                    // xhat = (x - mean) * inv
                    let grow = g2.row(i);
                    let mut dy_g_sum = 0.0; // sum of gamma*dy
                    let mut dy_g_xhat_sum = 0.0; // sum of gamma*dy*xhat
                    for j in 0..d {
                        let xhat = (xrow[j] - mean) * inv;
                        ggamma[j] += grow[j] * xhat;
                        gbeta[j] += grow[j];
                        dy_g_sum += grow[j] * gm[j];
                        dy_g_xhat_sum += grow[j] * gm[j] * xhat;
                    }
                    for j in 0..d {
                        let xhat = (xrow[j] - mean) * inv;
                        gx[[i, j]] = inv
                            * (grow[j] * gm[j]
                                - dy_g_sum / df
                                - xhat * dy_g_xhat_sum / df);
                    }
                }
                vec![gx.into_dyn(), ggamma.into_dyn(), gbeta.into_dyn()]
            })),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::check::{finite_difference, relative_error};
    use ndarray::{arr1, arr2};
    use rand::{Rng, SeedableRng};

    fn rand_arr(shape: &[usize], rng: &mut impl Rng) -> ArrayD<f64> {
        ArrayD::from_shape_fn(IxDyn(shape), |_| rng.gen_range(-1.0..1.0))
    }

    /// Generic gradient check: loss = weighted sum of op output.
    fn check_unary<F>(shape: &[usize], f: F)
    where
        F: Fn(&mut Tape, TensorId) -> TensorId,
    {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(42);
        let x0 = rand_arr(shape, &mut rng);
        let w = rand_arr(shape, &mut rng);
        let run = |x: &ArrayD<f64>| -> f64 {
            let mut t = Tape::new();
            let xi = t.param(x.clone());
            let y = f(&mut t, xi);
            let wc = t.constant(w.clone());
            let p = t.mul(y, wc);
            let l = t.sum_all(p);
            t.scalar(l)
        };
        let mut t = Tape::new();
        let xi = t.param(x0.clone());
        let y = f(&mut t, xi);
        let wc = t.constant(w.clone());
        let p = t.mul(y, wc);
        let l = t.sum_all(p);
        let grads = t.backward(l);
        let analytic = grads.get(xi).unwrap();
        let numeric = finite_difference(run, &x0, 1e-6);
        assert!(
            relative_error(analytic, &numeric) < 1e-7,
            "gradient mismatch: {:?} vs {:?}",
            analytic,
            numeric
        );
    }

    #[test]
    fn unary_op_gradients_match_finite_differences() {
        check_unary(&[3, 4], |t, x| t.tanh(x));
        check_unary(&[3, 4], |t, x| t.sigmoid(x));
        check_unary(&[3, 4], |t, x| t.exp(x));
        check_unary(&[3, 4], |t, x| t.square(x));
        check_unary(&[3, 4], |t, x| t.leaky_relu(x, 0.1));
        check_unary(&[5], |t, x| t.scale(x, -2.5));
        check_unary(&[2, 3], |t, x| {
            let y = t.softmax_rows(x);
            y
        });
    }

    #[test]
    fn matmul_gradients_match_finite_differences() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let a0 = rand_arr(&[3, 4], &mut rng);
        let b0 = rand_arr(&[4, 2], &mut rng);
        let run = |a: &ArrayD<f64>, b: &ArrayD<f64>| {
            let mut t = Tape::new();
            let ai = t.param(a.clone());
            let bi = t.param(b.clone());
            let y = t.matmul(ai, bi);
            let l = t.mean_all(y);
            (t, ai, bi, l)
        };
        let (t, ai, bi, l) = run(&a0, &b0);
        let grads = t.backward(l);
        let fa = finite_difference(
            |a| {
                let (t, _, _, l) = run(a, &b0);
                t.scalar(l)
            },
            &a0,
            1e-6,
        );
        let fb = finite_difference(
            |b| {
                let (t, _, _, l) = run(&a0, b);
                t.scalar(l)
            },
            &b0,
            1e-6,
        );
        assert!(relative_error(grads.get(ai).unwrap(), &fa) < 1e-8);
        assert!(relative_error(grads.get(bi).unwrap(), &fb) < 1e-8);
    }

    #[test]
    fn layer_norm_gradients_match_finite_differences() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let x0 = rand_arr(&[4, 6], &mut rng);
        let g0 = rand_arr(&[6], &mut rng);
        let b0 = rand_arr(&[6], &mut rng);
        let w = rand_arr(&[4, 6], &mut rng);
        let run = |x: &ArrayD<f64>, gm: &ArrayD<f64>, bt: &ArrayD<f64>| {
            let mut t = Tape::new();
            let xi = t.param(x.clone());
            let gi = t.param(gm.clone());
            let bi = t.param(bt.clone());
            let y = t.layer_norm(xi, gi, bi, 1e-5);
            let wc = t.constant(w.clone());
            let p = t.mul(y, wc);
            let l = t.sum_all(p);
            (t, xi, gi, bi, l)
        };
        let (t, xi, gi, bi, l) = run(&x0, &g0, &b0);
        let grads = t.backward(l);
        let fx = finite_difference(
            |x| {
                let (t, _, _, _, l) = run(x, &g0, &b0);
                t.scalar(l)
            },
            &x0,
            1e-6,
        );
        let fg = finite_difference(
            |g| {
                let (t, _, _, _, l) = run(&x0, g, &b0);
                t.scalar(l)
            },
            &g0,
            1e-6,
        );
        let fb = finite_difference(
            |b| {
                let (t, _, _, _, l) = run(&x0, &g0, b);
                t.scalar(l)
            },
            &b0,
            1e-6,
        );
        assert!(relative_error(grads.get(xi).unwrap(), &fx) < 1e-6);
        assert!(relative_error(grads.get(gi).unwrap(), &fg) < 1e-8);
        assert!(relative_error(grads.get(bi).unwrap(), &fb) < 1e-8);
    }

    #[test]
    fn broadcast_and_select_ops_route_gradients() {
        let mut t = Tape::new();
        let table = t.param(arr2(&[[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]]).into_dyn());
        let row = t.select_row(table, 1);
        let wide = t.broadcast_row(row, 4);
        let l = t.sum_all(wide);
        let grads = t.backward(l);
        let gt = grads.get(table).unwrap();
        assert_eq!(gt[[0, 0]], 0.0);
        assert_eq!(gt[[1, 0]], 4.0);
        assert_eq!(gt[[1, 1]], 4.0);
        assert_eq!(gt[[2, 1]], 0.0);
    }

    #[test]
    fn concat_and_slice_are_inverse_for_gradients() {
        let mut t = Tape::new();
        let a = t.param(arr2(&[[1.0, 2.0], [3.0, 4.0]]).into_dyn());
        let b = t.param(arr2(&[[5.0], [6.0]]).into_dyn());
        let c = t.concat(1, a, b);
        let sl = t.slice_ax(c, 1, 2, 1); // selects the b part
        let l = t.sum_all(sl);
        let grads = t.backward(l);
        assert!(grads.get(a).unwrap().iter().all(|&g| g == 0.0));
        assert!(grads.get(b).unwrap().iter().all(|&g| g == 1.0));
    }

    #[test]
    fn clamp_blocks_gradient_outside_range() {
        let mut t = Tape::new();
        let x = t.param(arr1(&[-31.0, 0.0, 25.0]).into_dyn());
        let y = t.clamp(x, -30.0, 20.0);
        let l = t.sum_all(y);
        let grads = t.backward(l);
        let gx = grads.get(x).unwrap();
        assert_eq!(gx.as_slice().unwrap(), &[0.0, 1.0, 0.0]);
    }
}
