//! Convolution, pooling, upsampling and signal-framing ops.
//!
//! Convolutions run as im2col + matrix product. Layout convention is
//! `[batch, channels, time]`; the multi-period discriminator reuses the
//! batch axis for period phases.

use ndarray::{Array2, Array3, ArrayD, Ix1, Ix3};

use crate::audio::FrameLayout;

use super::{Tape, TensorId};

fn as3(v: &ArrayD<f64>) -> ndarray::ArrayView3<'_, f64> {
    v.view().into_dimensionality::<Ix3>().expect("3-d tensor")
}

pub(crate) fn conv_out_len(t: usize, k: usize, stride: usize, dilation: usize, pad: usize) -> usize {
    let span = dilation * (k - 1) + 1;
    assert!(
        t + 2 * pad >= span,
        "conv input too short: T={t}, kernel span {span}, pad {pad}"
    );
    (t + 2 * pad - span) / stride + 1
}

fn im2col(
    x: &ndarray::ArrayView3<'_, f64>,
    b: usize,
    k: usize,
    stride: usize,
    dilation: usize,
    pad: usize,
    t_out: usize,
) -> Array2<f64> {
    let (_, c_in, t) = x.dim();
    let mut col = Array2::zeros((c_in * k, t_out));
    for ci in 0..c_in {
        for kk in 0..k {
            let row = ci * k + kk;
            for to in 0..t_out {
                let ti = (to * stride + kk * dilation) as isize - pad as isize;
                if ti >= 0 && (ti as usize) < t {
                    col[[row, to]] = x[[b, ci, ti as usize]];
                }
            }
        }
    }
    col
}

impl Tape {
    /// 1-D convolution: `[B, Cin, T] * [Cout, Cin, K] -> [B, Cout, T']`
    /// with symmetric zero padding. Bias is applied separately (`add_chan`).
    pub fn conv1d(
        &mut self,
        x: TensorId,
        w: TensorId,
        stride: usize,
        dilation: usize,
        pad: usize,
    ) -> TensorId {
        let xv = as3(self.value(x));
        let wv = as3(self.value(w));
        let (batch, c_in, t) = xv.dim();
        let (c_out, wc_in, k) = wv.dim();
        assert_eq!(c_in, wc_in, "conv1d channel mismatch");
        let t_out = conv_out_len(t, k, stride, dilation, pad);
        let w2 = wv
            .to_shape((c_out, c_in * k))
            .expect("contiguous weight")
            .to_owned();
        let mut out = Array3::zeros((batch, c_out, t_out));
        for b in 0..batch {
            let col = im2col(&xv, b, k, stride, dilation, pad, t_out);
            out.index_axis_mut(ndarray::Axis(0), b)
                .assign(&w2.dot(&col));
        }
        self.push(
            "conv1d",
            out.into_dyn(),
            vec![x.0, w.0],
            Some(Box::new(move |p, _, g| {
                let xv = as3(p[0]);
                let wv = as3(p[1]);
                let gv = as3(g);
                let (batch, c_in, t) = xv.dim();
                let (c_out, _, k) = wv.dim();
                let t_out = gv.dim().2;
                let w2 = wv
                    .to_shape((c_out, c_in * k))
                    .expect("contiguous weight")
                    .to_owned();
                let mut gw2 = Array2::<f64>::zeros((c_out, c_in * k));
                let mut gx = Array3::<f64>::zeros((batch, c_in, t));
                for b in 0..batch {
                    let col = im2col(&xv, b, k, stride, dilation, pad, t_out);
                    let gb = gv.index_axis(ndarray::Axis(0), b);
                    gw2 = gw2 + gb.dot(&col.t());
                    let gcol = w2.t().dot(&gb); // [Cin*K, T_out]
                    for ci in 0..c_in {
                        for kk in 0..k {
                            let row = ci * k + kk;
                            for to in 0..t_out {
                                let ti =
                                    (to * stride + kk * dilation) as isize - pad as isize;
                                if ti >= 0 && (ti as usize) < t {
                                    gx[[b, ci, ti as usize]] += gcol[[row, to]];
                                }
                            }
                        }
                    }
                }
                let gw = gw2
                    .into_shape((c_out, c_in, k))
                    .expect("weight grad reshape")
                    .into_dyn();
                vec![gx.into_dyn(), gw]
            })),
        )
    }

    /// Depthwise 1-D convolution (stride 1): `[B, C, T] * [C, K] -> [B, C, T']`.
    pub fn conv1d_depthwise(
        &mut self,
        x: TensorId,
        w: TensorId,
        dilation: usize,
        pad: usize,
    ) -> TensorId {
        let xv = as3(self.value(x));
        let wv = self
            .value(w)
            .view()
            .into_dimensionality::<ndarray::Ix2>()
            .expect("depthwise weight [C, K]");
        let (batch, c, t) = xv.dim();
        let (wc, k) = wv.dim();
        assert_eq!(c, wc, "depthwise channel mismatch");
        let t_out = conv_out_len(t, k, 1, dilation, pad);
        let mut out = Array3::zeros((batch, c, t_out));
        for b in 0..batch {
            for ci in 0..c {
                for to in 0..t_out {
                    let mut acc = 0.0;
                    for kk in 0..k {
                        let ti = (to + kk * dilation) as isize - pad as isize;
                        if ti >= 0 && (ti as usize) < t {
                            acc += xv[[b, ci, ti as usize]] * wv[[ci, kk]];
                        }
                    }
                    out[[b, ci, to]] = acc;
                }
            }
        }
        self.push(
            "conv1d_depthwise",
            out.into_dyn(),
            vec![x.0, w.0],
            Some(Box::new(move |p, _, g| {
                let xv = as3(p[0]);
                let wv = p[1]
                    .view()
                    .into_dimensionality::<ndarray::Ix2>()
                    .expect("2-d");
                let gv = as3(g);
                let (batch, c, t) = xv.dim();
                let (_, k) = wv.dim();
                let t_out = gv.dim().2;
                let mut gx = Array3::<f64>::zeros((batch, c, t));
                let mut gw = Array2::<f64>::zeros(wv.raw_dim());
                for b in 0..batch {
                    for ci in 0..c {
                        for to in 0..t_out {
                            let go = gv[[b, ci, to]];
                            for kk in 0..k {
                                let ti = (to + kk * dilation) as isize - pad as isize;
                                if ti >= 0 && (ti as usize) < t {
                                    gx[[b, ci, ti as usize]] += go * wv[[ci, kk]];
                                    gw[[ci, kk]] += go * xv[[b, ci, ti as usize]];
                                }
                            }
                        }
                    }
                }
                vec![gx.into_dyn(), gw.into_dyn()]
            })),
        )
    }

    /// Average pooling with zero padding (padded positions count toward the
    /// mean): `[B, C, T] -> [B, C, T']`.
    pub fn avg_pool1d(&mut self, x: TensorId, k: usize, stride: usize, pad: usize) -> TensorId {
        let xv = as3(self.value(x));
        let (batch, c, t) = xv.dim();
        let t_out = conv_out_len(t, k, stride, 1, pad);
        let mut out = Array3::zeros((batch, c, t_out));
        for b in 0..batch {
            for ci in 0..c {
                for to in 0..t_out {
                    let mut acc = 0.0;
                    for kk in 0..k {
                        let ti = (to * stride + kk) as isize - pad as isize;
                        if ti >= 0 && (ti as usize) < t {
                            acc += xv[[b, ci, ti as usize]];
                        }
                    }
                    out[[b, ci, to]] = acc / k as f64;
                }
            }
        }
        self.push(
            "avg_pool1d",
            out.into_dyn(),
            vec![x.0],
            Some(Box::new(move |p, _, g| {
                let gv = as3(g);
                let (batch, c, t) = as3(p[0]).dim();
                let t_out = gv.dim().2;
                let mut gx = Array3::<f64>::zeros((batch, c, t));
                for b in 0..batch {
                    for ci in 0..c {
                        for to in 0..t_out {
                            let go = gv[[b, ci, to]] / k as f64;
                            for kk in 0..k {
                                let ti = (to * stride + kk) as isize - pad as isize;
                                if ti >= 0 && (ti as usize) < t {
                                    gx[[b, ci, ti as usize]] += go;
                                }
                            }
                        }
                    }
                }
                vec![gx.into_dyn()]
            })),
        )
    }

    /// Temporal nearest-neighbor upsampling: each step repeated `factor` times.
    pub fn nearest_upsample(&mut self, x: TensorId, factor: usize) -> TensorId {
        assert!(factor >= 1);
        let xv = as3(self.value(x));
        let (batch, c, t) = xv.dim();
        let out = Array3::from_shape_fn((batch, c, t * factor), |(b, ci, ti)| {
            xv[[b, ci, ti / factor]]
        });
        self.push(
            "nearest_upsample",
            out.into_dyn(),
            vec![x.0],
            Some(Box::new(move |p, _, g| {
                let gv = as3(g);
                let (batch, c, t) = as3(p[0]).dim();
                let mut gx = Array3::<f64>::zeros((batch, c, t));
                for b in 0..batch {
                    for ci in 0..c {
                        for ti in 0..t * factor {
                            gx[[b, ci, ti / factor]] += gv[[b, ci, ti]];
                        }
                    }
                }
                vec![gx.into_dyn()]
            })),
        )
    }

    /// Reflect-pad the end of the time axis by `n` samples (no edge repeat).
    pub fn pad_reflect_end(&mut self, x: TensorId, n: usize) -> TensorId {
        let xv = as3(self.value(x));
        let (batch, c, t) = xv.dim();
        assert!(n < t, "reflect pad must be shorter than the signal");
        let out = Array3::from_shape_fn((batch, c, t + n), |(b, ci, ti)| {
            let src = if ti < t { ti } else { 2 * t - 2 - ti };
            xv[[b, ci, src]]
        });
        self.push(
            "pad_reflect_end",
            out.into_dyn(),
            vec![x.0],
            Some(Box::new(move |p, _, g| {
                let gv = as3(g);
                let (batch, c, t) = as3(p[0]).dim();
                let mut gx = Array3::<f64>::zeros((batch, c, t));
                for b in 0..batch {
                    for ci in 0..c {
                        for ti in 0..t + n {
                            let src = if ti < t { ti } else { 2 * t - 2 - ti };
                            gx[[b, ci, src]] += gv[[b, ci, ti]];
                        }
                    }
                }
                vec![gx.into_dyn()]
            })),
        )
    }

    /// Fold `[1, C, T]` (T divisible by p) into phase-major `[p, C, T/p]`:
    /// row j holds samples j, j+p, j+2p, ...
    pub fn deinterleave(&mut self, x: TensorId, p: usize) -> TensorId {
        let xv = as3(self.value(x));
        let (batch, c, t) = xv.dim();
        assert_eq!(batch, 1, "deinterleave expects batch 1");
        assert_eq!(t % p, 0, "length must be divisible by the period");
        let tp = t / p;
        let out =
            Array3::from_shape_fn((p, c, tp), |(j, ci, ti)| xv[[0, ci, ti * p + j]]);
        self.push(
            "deinterleave",
            out.into_dyn(),
            vec![x.0],
            Some(Box::new(move |p_vals, _, g| {
                let gv = as3(g);
                let (_, c, t) = as3(p_vals[0]).dim();
                let tp = t / p;
                let mut gx = Array3::<f64>::zeros((1, c, t));
                for j in 0..p {
                    for ci in 0..c {
                        for ti in 0..tp {
                            gx[[0, ci, ti * p + j]] = gv[[j, ci, ti]];
                        }
                    }
                }
                vec![gx.into_dyn()]
            })),
        )
    }

    /// Cut a 1-D signal into overlapping frames `[frames, frame_length]`
    /// using the reflect-padded layout shared with plain feature extraction.
    pub fn frame_signal(&mut self, x: TensorId, layout: FrameLayout) -> TensorId {
        let xv = self
            .value(x)
            .view()
            .into_dimensionality::<Ix1>()
            .expect("frame_signal expects a 1-d signal");
        assert_eq!(xv.len(), layout.len, "layout/signal length mismatch");
        let mut out = Array2::zeros((layout.frames, layout.frame_length));
        for f in 0..layout.frames {
            for i in 0..layout.frame_length {
                out[[f, i]] = xv[layout.source_index(f * layout.hop + i)];
            }
        }
        self.push(
            "frame_signal",
            out.into_dyn(),
            vec![x.0],
            Some(Box::new(move |p, _, g| {
                let g2 = g
                    .view()
                    .into_dimensionality::<ndarray::Ix2>()
                    .expect("2-d");
                let mut gx = ndarray::Array1::<f64>::zeros(p[0].len());
                for f in 0..layout.frames {
                    for i in 0..layout.frame_length {
                        gx[layout.source_index(f * layout.hop + i)] += g2[[f, i]];
                    }
                }
                vec![gx.into_dyn()]
            })),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::check::{finite_difference, relative_error};
    use ndarray::IxDyn;
    use rand::{Rng, SeedableRng};

    fn rand_arr(shape: &[usize], rng: &mut impl Rng) -> ArrayD<f64> {
        ArrayD::from_shape_fn(IxDyn(shape), |_| rng.gen_range(-1.0..1.0))
    }

    /// Direct triple-loop convolution oracle.
    fn conv_oracle(
        x: &ArrayD<f64>,
        w: &ArrayD<f64>,
        stride: usize,
        dilation: usize,
        pad: usize,
    ) -> Array3<f64> {
        let xv = as3(x);
        let wv = as3(w);
        let (batch, c_in, t) = xv.dim();
        let (c_out, _, k) = wv.dim();
        let t_out = conv_out_len(t, k, stride, dilation, pad);
        let mut out = Array3::zeros((batch, c_out, t_out));
        for b in 0..batch {
            for co in 0..c_out {
                for to in 0..t_out {
                    let mut acc = 0.0;
                    for ci in 0..c_in {
                        for kk in 0..k {
                            let ti = (to * stride + kk * dilation) as isize - pad as isize;
                            if ti >= 0 && (ti as usize) < t {
                                acc += xv[[b, ci, ti as usize]] * wv[[co, ci, kk]];
                            }
                        }
                    }
                    out[[b, co, to]] = acc;
                }
            }
        }
        out
    }

    #[test]
    fn conv1d_matches_direct_loop_oracle() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for (stride, dilation, pad) in [(1, 1, 2), (3, 1, 2), (1, 3, 3), (2, 2, 1)] {
            let x = rand_arr(&[2, 3, 17], &mut rng);
            let w = rand_arr(&[4, 3, 3], &mut rng);
            let mut t = Tape::no_grad();
            let xi = t.constant(x.clone());
            let wi = t.constant(w.clone());
            let y = t.conv1d(xi, wi, stride, dilation, pad);
            let oracle = conv_oracle(&x, &w, stride, dilation, pad).into_dyn();
            assert!(
                relative_error(t.value(y), &oracle) < 1e-12,
                "stride={stride} dilation={dilation} pad={pad}"
            );
        }
    }

    #[test]
    fn conv1d_gradients_match_finite_differences() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(6);
        let x0 = rand_arr(&[1, 2, 9], &mut rng);
        let w0 = rand_arr(&[3, 2, 3], &mut rng);
        let run = |x: &ArrayD<f64>, w: &ArrayD<f64>| {
            let mut t = Tape::new();
            let xi = t.param(x.clone());
            let wi = t.param(w.clone());
            let y = t.conv1d(xi, wi, 2, 1, 1);
            let sq = t.square(y);
            let l = t.mean_all(sq);
            (t, xi, wi, l)
        };
        let (t, xi, wi, l) = run(&x0, &w0);
        let grads = t.backward(l);
        let fx = finite_difference(
            |x| {
                let (t, _, _, l) = run(x, &w0);
                t.scalar(l)
            },
            &x0,
            1e-6,
        );
        let fw = finite_difference(
            |w| {
                let (t, _, _, l) = run(&x0, w);
                t.scalar(l)
            },
            &w0,
            1e-6,
        );
        assert!(relative_error(grads.get(xi).unwrap(), &fx) < 1e-7);
        assert!(relative_error(grads.get(wi).unwrap(), &fw) < 1e-7);
    }

    #[test]
    fn depthwise_and_pool_gradients_match_finite_differences() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let x0 = rand_arr(&[1, 3, 11], &mut rng);
        let w0 = rand_arr(&[3, 5], &mut rng);
        let run = |x: &ArrayD<f64>, w: &ArrayD<f64>| {
            let mut t = Tape::new();
            let xi = t.param(x.clone());
            let wi = t.param(w.clone());
            let y = t.conv1d_depthwise(xi, wi, 1, 2);
            let y = t.avg_pool1d(y, 4, 2, 2);
            let sq = t.square(y);
            let l = t.sum_all(sq);
            (t, xi, wi, l)
        };
        let (t, xi, wi, l) = run(&x0, &w0);
        let grads = t.backward(l);
        let fx = finite_difference(
            |x| {
                let (t, _, _, l) = run(x, &w0);
                t.scalar(l)
            },
            &x0,
            1e-6,
        );
        let fw = finite_difference(
            |w| {
                let (t, _, _, l) = run(&x0, w);
                t.scalar(l)
            },
            &w0,
            1e-6,
        );
        assert!(relative_error(grads.get(xi).unwrap(), &fx) < 1e-7);
        assert!(relative_error(grads.get(wi).unwrap(), &fw) < 1e-7);
    }

    #[test]
    fn nearest_upsample_repeats_and_routes_gradient() {
        let mut t = Tape::new();
        let x = t.param(
            Array3::from_shape_vec((1, 1, 3), vec![1.0, 2.0, 3.0])
                .unwrap()
                .into_dyn(),
        );
        let y = t.nearest_upsample(x, 4);
        assert_eq!(t.shape(y), &[1, 1, 12]);
        assert_eq!(t.value(y).as_slice().unwrap()[..5], [1.0, 1.0, 1.0, 1.0, 2.0]);
        let l = t.sum_all(y);
        let grads = t.backward(l);
        assert!(grads.get(x).unwrap().iter().all(|&g| g == 4.0));
    }

    #[test]
    fn deinterleave_folds_phases() {
        // length 6, period 3 -> rows are strided subsequences
        let mut t = Tape::no_grad();
        let x = t.constant(
            Array3::from_shape_vec((1, 1, 6), vec![0.0, 1.0, 2.0, 3.0, 4.0, 5.0])
                .unwrap()
                .into_dyn(),
        );
        let y = t.deinterleave(x, 3);
        assert_eq!(t.shape(y), &[3, 1, 2]);
        let v = as3(t.value(y));
        assert_eq!(v[[0, 0, 0]], 0.0);
        assert_eq!(v[[0, 0, 1]], 3.0);
        assert_eq!(v[[1, 0, 0]], 1.0);
        assert_eq!(v[[2, 0, 1]], 5.0);
    }

    #[test]
    fn frame_signal_gradient_matches_finite_differences() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(8);
        let x0 = rand_arr(&[40], &mut rng);
        let layout = FrameLayout::new(40, 8, 4).unwrap();
        let w = rand_arr(&[layout.frames, 8], &mut rng);
        let run = |x: &ArrayD<f64>| {
            let mut t = Tape::new();
            let xi = t.param(x.clone());
            let y = t.frame_signal(xi, layout);
            let wc = t.constant(w.clone());
            let pr = t.mul(y, wc);
            let l = t.sum_all(pr);
            (t, xi, l)
        };
        let (t, xi, l) = run(&x0);
        let grads = t.backward(l);
        let fx = finite_difference(
            |x| {
                let (t, _, l) = run(x);
                t.scalar(l)
            },
            &x0,
            1e-6,
        );
        assert!(relative_error(grads.get(xi).unwrap(), &fx) < 1e-8);
    }
}
