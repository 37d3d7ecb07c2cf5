//! Primitive differentiable operations.
//!
//! Shape misuse here is a programming error and panics; operations exposed to
//! callers with data-dependent shapes are validated at module level before
//! reaching the tape.

use ndarray::{Array1, Array2, Array3, ArrayView2, ArrayView3, ArrayView4, Axis, IxDyn};

use super::{accumulate, Arr, Graph, Var};

pub(crate) fn as2(a: &Arr) -> ArrayView2<'_, f64> {
    a.view()
        .into_dimensionality()
        .expect("expected a 2-d node")
}

fn as3(a: &Arr) -> ArrayView3<'_, f64> {
    a.view()
        .into_dimensionality()
        .expect("expected a 3-d node")
}

fn as4(a: &Arr) -> ArrayView4<'_, f64> {
    a.view()
        .into_dimensionality()
        .expect("expected a 4-d node")
}

/// One output row formed as a fixed linear combination of input rows.
#[derive(Clone, Debug)]
pub struct RowCombo {
    pub indices: Vec<usize>,
    pub weights: Vec<f64>,
}

impl Graph {
    // ---- elementwise ----

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(self.value(a).shape(), self.value(b).shape());
        let out = self.value(a) + self.value(b);
        let (ai, bi) = (a.0, b.0);
        self.push(
            out,
            Some(Box::new(move |g, _vals, grads| {
                accumulate(&mut grads[ai], g.clone());
                accumulate(&mut grads[bi], g.clone());
            })),
        )
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(self.value(a).shape(), self.value(b).shape());
        let out = self.value(a) - self.value(b);
        let (ai, bi) = (a.0, b.0);
        self.push(
            out,
            Some(Box::new(move |g, _vals, grads| {
                accumulate(&mut grads[ai], g.clone());
                accumulate(&mut grads[bi], g.mapv(|x| -x));
            })),
        )
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(self.value(a).shape(), self.value(b).shape());
        let out = self.value(a) * self.value(b);
        let (ai, bi) = (a.0, b.0);
        self.push(
            out,
            Some(Box::new(move |g, vals, grads| {
                accumulate(&mut grads[ai], g * &vals[bi]);
                accumulate(&mut grads[bi], g * &vals[ai]);
            })),
        )
    }

    pub fn div(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(self.value(a).shape(), self.value(b).shape());
        let out = self.value(a) / self.value(b);
        let (ai, bi) = (a.0, b.0);
        self.push(
            out,
            Some(Box::new(move |g, vals, grads| {
                accumulate(&mut grads[ai], g / &vals[bi]);
                let db = g * &vals[ai] / (&vals[bi] * &vals[bi]);
                accumulate(&mut grads[bi], db.mapv(|x| -x));
            })),
        )
    }

    /// `scale * a + shift`, elementwise.
    pub fn affine(&mut self, a: Var, scale: f64, shift: f64) -> Var {
        let out = self.value(a).mapv(|x| scale * x + shift);
        let ai = a.0;
        self.push(
            out,
            Some(Box::new(move |g, _vals, grads| {
                accumulate(&mut grads[ai], g.mapv(|x| scale * x));
            })),
        )
    }

    /// Elementwise product with a constant array.
    pub fn mul_const(&mut self, a: Var, c: &Arr) -> Var {
        assert_eq!(self.value(a).shape(), c.shape());
        let out = self.value(a) * c;
        let ai = a.0;
        let c = c.clone();
        self.push(
            out,
            Some(Box::new(move |g, _vals, grads| {
                accumulate(&mut grads[ai], g * &c);
            })),
        )
    }

    /// Multiply every element of `a` by a single-element node `s`.
    pub fn mul_scalar_var(&mut self, a: Var, s: Var) -> Var {
        assert_eq!(self.value(s).len(), 1);
        let sv = self.scalar(s);
        let out = self.value(a).mapv(|x| x * sv);
        let (ai, si) = (a.0, s.0);
        self.push(
            out,
            Some(Box::new(move |g, vals, grads| {
                let sv = *vals[si].iter().next().unwrap();
                accumulate(&mut grads[ai], g.mapv(|x| x * sv));
                let ds = (g * &vals[ai]).sum();
                accumulate(
                    &mut grads[si],
                    Arr::from_elem(IxDyn(&[1]), ds),
                );
            })),
        )
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let out = self.value(a).mapv(|x| x.max(0.0));
        let ai = a.0;
        self.push(
            out,
            Some(Box::new(move |g, vals, grads| {
                let mask = vals[ai].mapv(|x| if x > 0.0 { 1.0 } else { 0.0 });
                accumulate(&mut grads[ai], g * &mask);
            })),
        )
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let out = self.value(a).mapv(|x| 1.0 / (1.0 + (-x).exp()));
        let ai = a.0;
        let oi = self.values.len();
        self.push(
            out,
            Some(Box::new(move |g, vals, grads| {
                let y = &vals[oi];
                accumulate(&mut grads[ai], g * &(y * &y.mapv(|v| 1.0 - v)));
            })),
        )
    }

    pub fn ln(&mut self, a: Var) -> Var {
        let out = self.value(a).mapv(f64::ln);
        let ai = a.0;
        self.push(
            out,
            Some(Box::new(move |g, vals, grads| {
                accumulate(&mut grads[ai], g / &vals[ai]);
            })),
        )
    }

    /// Clamp to `[lo, hi]`; gradient passes only where the clamp is inactive.
    pub fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Var {
        let out = self.value(a).mapv(|x| x.clamp(lo, hi));
        let ai = a.0;
        self.push(
            out,
            Some(Box::new(move |g, vals, grads| {
                let mask = vals[ai].mapv(|x| if x > lo && x < hi { 1.0 } else { 0.0 });
                accumulate(&mut grads[ai], g * &mask);
            })),
        )
    }

    // ---- shape ----

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Var {
        let orig: Vec<usize> = self.value(a).shape().to_vec();
        let out = self
            .value(a)
            .clone()
            .into_shape_with_order(IxDyn(shape))
            .expect("reshape: element count mismatch");
        let ai = a.0;
        self.push(
            out,
            Some(Box::new(move |g, _vals, grads| {
                let back = g
                    .clone()
                    .into_shape_with_order(IxDyn(&orig))
                    .expect("reshape backward");
                accumulate(&mut grads[ai], back);
            })),
        )
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let out = as2(self.value(a)).t().to_owned().into_dyn();
        let ai = a.0;
        self.push(
            out,
            Some(Box::new(move |g, _vals, grads| {
                accumulate(&mut grads[ai], as2(g).t().to_owned().into_dyn());
            })),
        )
    }

    pub fn slice_rows(&mut self, a: Var, lo: usize, hi: usize) -> Var {
        let av = as2(self.value(a));
        let (rows, cols) = (av.nrows(), av.ncols());
        assert!(lo < hi && hi <= rows);
        let out = av.slice(ndarray::s![lo..hi, ..]).to_owned().into_dyn();
        let ai = a.0;
        self.push(
            out,
            Some(Box::new(move |g, _vals, grads| {
                let mut back = Array2::<f64>::zeros((rows, cols));
                back.slice_mut(ndarray::s![lo..hi, ..]).assign(&as2(g));
                accumulate(&mut grads[ai], back.into_dyn());
            })),
        )
    }

    pub fn slice_cols(&mut self, a: Var, lo: usize, hi: usize) -> Var {
        let av = as2(self.value(a));
        let (rows, cols) = (av.nrows(), av.ncols());
        assert!(lo < hi && hi <= cols);
        let out = av.slice(ndarray::s![.., lo..hi]).to_owned().into_dyn();
        let ai = a.0;
        self.push(
            out,
            Some(Box::new(move |g, _vals, grads| {
                let mut back = Array2::<f64>::zeros((rows, cols));
                back.slice_mut(ndarray::s![.., lo..hi]).assign(&as2(g));
                accumulate(&mut grads[ai], back.into_dyn());
            })),
        )
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty());
        let views: Vec<ArrayView2<f64>> = parts.iter().map(|p| as2(self.value(*p))).collect();
        let out = ndarray::concatenate(Axis(0), &views)
            .expect("concat_rows: column mismatch")
            .into_dyn();
        let row_counts: Vec<usize> = views.iter().map(|v| v.nrows()).collect();
        let ids: Vec<usize> = parts.iter().map(|p| p.0).collect();
        self.push(
            out,
            Some(Box::new(move |g, _vals, grads| {
                let g2 = as2(g);
                let mut offset = 0;
                for (idx, &n) in ids.iter().zip(row_counts.iter()) {
                    let piece = g2.slice(ndarray::s![offset..offset + n, ..]).to_owned();
                    accumulate(&mut grads[*idx], piece.into_dyn());
                    offset += n;
                }
            })),
        )
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty());
        let views: Vec<ArrayView2<f64>> = parts.iter().map(|p| as2(self.value(*p))).collect();
        let out = ndarray::concatenate(Axis(1), &views)
            .expect("concat_cols: row mismatch")
            .into_dyn();
        let col_counts: Vec<usize> = views.iter().map(|v| v.ncols()).collect();
        let ids: Vec<usize> = parts.iter().map(|p| p.0).collect();
        self.push(
            out,
            Some(Box::new(move |g, _vals, grads| {
                let g2 = as2(g);
                let mut offset = 0;
                for (idx, &n) in ids.iter().zip(col_counts.iter()) {
                    let piece = g2.slice(ndarray::s![.., offset..offset + n]).to_owned();
                    accumulate(&mut grads[*idx], piece.into_dyn());
                    offset += n;
                }
            })),
        )
    }

    /// Select rows of a 2-d node by index (duplicates allowed).
    pub fn gather_rows(&mut self, a: Var, idx: &[usize]) -> Var {
        let av = as2(self.value(a));
        let (rows, cols) = (av.nrows(), av.ncols());
        let mut out = Array2::<f64>::zeros((idx.len(), cols));
        for (r, &i) in idx.iter().enumerate() {
            assert!(i < rows, "gather_rows index {i} >= {rows}");
            out.row_mut(r).assign(&av.row(i));
        }
        let ai = a.0;
        let idx = idx.to_vec();
        self.push(
            out.into_dyn(),
            Some(Box::new(move |g, _vals, grads| {
                let g2 = as2(g);
                let mut back = Array2::<f64>::zeros((rows, cols));
                for (r, &i) in idx.iter().enumerate() {
                    let mut dst = back.row_mut(i);
                    dst += &g2.row(r);
                }
                accumulate(&mut grads[ai], back.into_dyn());
            })),
        )
    }

    /// Each output row is a fixed linear combination of rows of `a`.
    /// Used for inverse-distance interpolation, pooling, and resampling.
    pub fn weighted_rows(&mut self, a: Var, combos: Vec<RowCombo>) -> Var {
        let av = as2(self.value(a));
        let (rows, cols) = (av.nrows(), av.ncols());
        let mut out = Array2::<f64>::zeros((combos.len(), cols));
        for (r, combo) in combos.iter().enumerate() {
            assert_eq!(combo.indices.len(), combo.weights.len());
            for (&i, &w) in combo.indices.iter().zip(combo.weights.iter()) {
                assert!(i < rows);
                let mut dst = out.row_mut(r);
                dst.scaled_add(w, &av.row(i));
            }
        }
        let ai = a.0;
        self.push(
            out.into_dyn(),
            Some(Box::new(move |g, _vals, grads| {
                let g2 = as2(g);
                let mut back = Array2::<f64>::zeros((rows, cols));
                for (r, combo) in combos.iter().enumerate() {
                    for (&i, &w) in combo.indices.iter().zip(combo.weights.iter()) {
                        let mut dst = back.row_mut(i);
                        dst.scaled_add(w, &g2.row(r));
                    }
                }
                accumulate(&mut grads[ai], back.into_dyn());
            })),
        )
    }

    /// Max over consecutive groups of `k` rows: `(g*k) x c -> g x c`.
    /// Ties route the gradient to the first maximal row.
    pub fn group_max_rows(&mut self, a: Var, k: usize) -> Var {
        let av = as2(self.value(a));
        let (rows, cols) = (av.nrows(), av.ncols());
        assert!(k >= 1 && rows % k == 0, "group_max_rows: {rows} rows, k={k}");
        let groups = rows / k;
        let mut out = Array2::<f64>::zeros((groups, cols));
        let mut argmax = vec![0usize; groups * cols];
        for gi in 0..groups {
            for c in 0..cols {
                let mut best = f64::NEG_INFINITY;
                let mut best_r = gi * k;
                for r in gi * k..(gi + 1) * k {
                    let v = av[(r, c)];
                    if v > best {
                        best = v;
                        best_r = r;
                    }
                }
                out[(gi, c)] = best;
                argmax[gi * cols + c] = best_r;
            }
        }
        let ai = a.0;
        self.push(
            out.into_dyn(),
            Some(Box::new(move |g, _vals, grads| {
                let g2 = as2(g);
                let mut back = Array2::<f64>::zeros((rows, cols));
                for gi in 0..groups {
                    for c in 0..cols {
                        back[(argmax[gi * cols + c], c)] += g2[(gi, c)];
                    }
                }
                accumulate(&mut grads[ai], back.into_dyn());
            })),
        )
    }

    /// Column-wise max over all rows: `n x c -> 1 x c`.
    pub fn max_over_rows(&mut self, a: Var) -> Var {
        let n = as2(self.value(a)).nrows();
        self.group_max_rows(a, n)
    }

    /// Column-wise mean over all rows: `n x c -> 1 x c`.
    pub fn mean_rows(&mut self, a: Var) -> Var {
        let av = as2(self.value(a));
        let (rows, cols) = (av.nrows(), av.ncols());
        let out = av
            .mean_axis(Axis(0))
            .expect("mean_rows on empty node")
            .insert_axis(Axis(0))
            .into_dyn();
        let ai = a.0;
        self.push(
            out,
            Some(Box::new(move |g, _vals, grads| {
                let g2 = as2(g);
                let mut back = Array2::<f64>::zeros((rows, cols));
                for mut row in back.rows_mut() {
                    row.scaled_add(1.0 / rows as f64, &g2.row(0));
                }
                accumulate(&mut grads[ai], back.into_dyn());
            })),
        )
    }

    pub fn sum_all(&mut self, a: Var) -> Var {
        let s = self.value(a).sum();
        let shape: Vec<usize> = self.value(a).shape().to_vec();
        let ai = a.0;
        self.push(
            Arr::from_elem(IxDyn(&[1]), s),
            Some(Box::new(move |g, _vals, grads| {
                let gv = *g.iter().next().unwrap();
                accumulate(&mut grads[ai], Arr::from_elem(IxDyn(&shape), gv));
            })),
        )
    }

    pub fn mean_all(&mut self, a: Var) -> Var {
        let n = self.value(a).len() as f64;
        let s = self.value(a).sum() / n;
        let shape: Vec<usize> = self.value(a).shape().to_vec();
        let ai = a.0;
        self.push(
            Arr::from_elem(IxDyn(&[1]), s),
            Some(Box::new(move |g, _vals, grads| {
                let gv = *g.iter().next().unwrap() / n;
                accumulate(&mut grads[ai], Arr::from_elem(IxDyn(&shape), gv));
            })),
        )
    }

    // ---- linear algebra ----

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let av = as2(self.value(a));
        let bv = as2(self.value(b));
        assert_eq!(av.ncols(), bv.nrows(), "matmul inner dims");
        let out = av.dot(&bv).into_dyn();
        let (ai, bi) = (a.0, b.0);
        self.push(
            out,
            Some(Box::new(move |g, vals, grads| {
                let g2 = as2(g);
                let av = as2(&vals[ai]);
                let bv = as2(&vals[bi]);
                accumulate(&mut grads[ai], g2.dot(&bv.t()).into_dyn());
                accumulate(&mut grads[bi], av.t().dot(&g2).into_dyn());
            })),
        )
    }

    /// `m x n` plus a `1 x n` row vector broadcast over rows.
    pub fn add_rowvec(&mut self, a: Var, rv: Var) -> Var {
        let av = as2(self.value(a));
        let rvv = as2(self.value(rv));
        assert_eq!(rvv.nrows(), 1);
        assert_eq!(av.ncols(), rvv.ncols());
        let out = (&av + &rvv.row(0)).into_dyn();
        let (ai, ri) = (a.0, rv.0);
        self.push(
            out,
            Some(Box::new(move |g, _vals, grads| {
                let g2 = as2(g);
                accumulate(&mut grads[ai], g.clone());
                let col_sum = g2.sum_axis(Axis(0)).insert_axis(Axis(0));
                accumulate(&mut grads[ri], col_sum.into_dyn());
            })),
        )
    }

    /// `m x n` times a `1 x n` row vector broadcast over rows.
    pub fn mul_rowvec(&mut self, a: Var, rv: Var) -> Var {
        let av = as2(self.value(a));
        let rvv = as2(self.value(rv));
        assert_eq!(rvv.nrows(), 1);
        assert_eq!(av.ncols(), rvv.ncols());
        let out = (&av * &rvv.row(0)).into_dyn();
        let (ai, ri) = (a.0, rv.0);
        self.push(
            out,
            Some(Box::new(move |g, vals, grads| {
                let g2 = as2(g);
                let av = as2(&vals[ai]);
                let rvv = as2(&vals[ri]);
                accumulate(&mut grads[ai], (&g2 * &rvv.row(0)).into_dyn());
                let dr = (&g2 * &av).sum_axis(Axis(0)).insert_axis(Axis(0));
                accumulate(&mut grads[ri], dr.into_dyn());
            })),
        )
    }

    /// Row-wise softmax of a 2-d node.
    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let av = as2(self.value(a));
        let mut out = av.to_owned();
        for mut row in out.rows_mut() {
            let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            row.mapv_inplace(|x| (x - m).exp());
            let s = row.sum();
            row.mapv_inplace(|x| x / s);
        }
        let ai = a.0;
        let oi = self.values.len();
        self.push(
            out.into_dyn(),
            Some(Box::new(move |g, vals, grads| {
                let g2 = as2(g);
                let y = as2(&vals[oi]);
                let mut back = Array2::<f64>::zeros(g2.raw_dim());
                for r in 0..g2.nrows() {
                    let dot: f64 = g2.row(r).dot(&y.row(r));
                    for c in 0..g2.ncols() {
                        back[(r, c)] = y[(r, c)] * (g2[(r, c)] - dot);
                    }
                }
                accumulate(&mut grads[ai], back.into_dyn());
            })),
        )
    }

    /// Row-wise layer normalization with learnable `1 x n` gain and bias.
    pub fn layer_norm_rows(&mut self, x: Var, gain: Var, bias: Var, eps: f64) -> Var {
        let xv = as2(self.value(x));
        let gv = as2(self.value(gain));
        let bv = as2(self.value(bias));
        let n = xv.ncols();
        assert_eq!(gv.ncols(), n);
        assert_eq!(bv.ncols(), n);
        let mut out = Array2::<f64>::zeros(xv.raw_dim());
        for (r, row) in xv.rows().into_iter().enumerate() {
            let mu = row.mean().unwrap();
            let var = row.mapv(|v| (v - mu) * (v - mu)).mean().unwrap();
            let inv = 1.0 / (var + eps).sqrt();
            for c in 0..n {
                let xhat = (row[c] - mu) * inv;
                out[(r, c)] = xhat * gv[(0, c)] + bv[(0, c)];
            }
        }
        let (xi, gi, bi) = (x.0, gain.0, bias.0);
        self.push(
            out.into_dyn(),
            Some(Box::new(move |g, vals, grads| {
                let g2 = as2(g);
                let xv = as2(&vals[xi]);
                let gv = as2(&vals[gi]);
                let n = xv.ncols();
                let nf = n as f64;
                let mut dx = Array2::<f64>::zeros(xv.raw_dim());
                let mut dgain = Array2::<f64>::zeros((1, n));
                let mut dbias = Array2::<f64>::zeros((1, n));
                for r in 0..xv.nrows() {
                    let row = xv.row(r);
                    let mu = row.mean().unwrap();
                    let var = row.mapv(|v| (v - mu) * (v - mu)).mean().unwrap();
                    let inv = 1.0 / (var + eps).sqrt();
                    let mut m1 = 0.0;
                    let mut m2 = 0.0;
                    for c in 0..n {
                        let xhat = (row[c] - mu) * inv;
                        let dxhat = g2[(r, c)] * gv[(0, c)];
                        m1 += dxhat;
                        m2 += dxhat * xhat;
                        dgain[(0, c)] += g2[(r, c)] * xhat;
                        dbias[(0, c)] += g2[(r, c)];
                    }
                    m1 /= nf;
                    m2 /= nf;
                    for c in 0..n {
                        let xhat = (row[c] - mu) * inv;
                        let dxhat = g2[(r, c)] * gv[(0, c)];
                        dx[(r, c)] = (dxhat - m1 - xhat * m2) * inv;
                    }
                }
                accumulate(&mut grads[xi], dx.into_dyn());
                accumulate(&mut grads[gi], dgain.into_dyn());
                accumulate(&mut grads[bi], dbias.into_dyn());
            })),
        )
    }

    // ---- spatial (3-d nodes, channels x height x width) ----

    /// Direct 2-d convolution with zero padding.
    pub fn conv2d(&mut self, x: Var, w: Var, b: Var, stride: usize, pad: usize) -> Var {
        let xv = as3(self.value(x));
        let wv = as4(self.value(w));
        let bv = self.value(b);
        let (cin, h, wd) = xv.dim();
        let (cout, wcin, kh, kw) = wv.dim();
        assert_eq!(cin, wcin, "conv2d channel mismatch");
        assert_eq!(bv.len(), cout);
        assert!(h + 2 * pad >= kh && wd + 2 * pad >= kw);
        let oh = (h + 2 * pad - kh) / stride + 1;
        let ow = (wd + 2 * pad - kw) / stride + 1;
        let mut out = Array3::<f64>::zeros((cout, oh, ow));
        for co in 0..cout {
            let bias = bv[co];
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut acc = bias;
                    for ci in 0..cin {
                        for ky in 0..kh {
                            let iy = (oy * stride + ky) as isize - pad as isize;
                            if iy < 0 || iy >= h as isize {
                                continue;
                            }
                            for kx in 0..kw {
                                let ix = (ox * stride + kx) as isize - pad as isize;
                                if ix < 0 || ix >= wd as isize {
                                    continue;
                                }
                                acc += wv[(co, ci, ky, kx)] * xv[(ci, iy as usize, ix as usize)];
                            }
                        }
                    }
                    out[(co, oy, ox)] = acc;
                }
            }
        }
        let (xi, wi, bi) = (x.0, w.0, b.0);
        self.push(
            out.into_dyn(),
            Some(Box::new(move |g, vals, grads| {
                let g3 = as3(g);
                let xv = as3(&vals[xi]);
                let wv = as4(&vals[wi]);
                let mut dx = Array3::<f64>::zeros((cin, h, wd));
                let mut dw = ndarray::Array4::<f64>::zeros((cout, cin, kh, kw));
                let mut db = Array1::<f64>::zeros(cout);
                for co in 0..cout {
                    for oy in 0..oh {
                        for ox in 0..ow {
                            let go = g3[(co, oy, ox)];
                            db[co] += go;
                            for ci in 0..cin {
                                for ky in 0..kh {
                                    let iy = (oy * stride + ky) as isize - pad as isize;
                                    if iy < 0 || iy >= h as isize {
                                        continue;
                                    }
                                    for kx in 0..kw {
                                        let ix = (ox * stride + kx) as isize - pad as isize;
                                        if ix < 0 || ix >= wd as isize {
                                            continue;
                                        }
                                        let (iy, ix) = (iy as usize, ix as usize);
                                        dx[(ci, iy, ix)] += go * wv[(co, ci, ky, kx)];
                                        dw[(co, ci, ky, kx)] += go * xv[(ci, iy, ix)];
                                    }
                                }
                            }
                        }
                    }
                }
                accumulate(&mut grads[xi], dx.into_dyn());
                accumulate(&mut grads[wi], dw.into_dyn());
                accumulate(&mut grads[bi], db.into_dyn());
            })),
        )
    }

    /// Bilinear resize of a `c x h x w` node (half-pixel centers).
    pub fn bilinear_resize(&mut self, x: Var, out_h: usize, out_w: usize) -> Var {
        let xv = as3(self.value(x));
        let (c, h, w) = xv.dim();
        assert!(out_h >= 1 && out_w >= 1);
        let taps_y = resize_taps(h, out_h);
        let taps_x = resize_taps(w, out_w);
        let mut out = Array3::<f64>::zeros((c, out_h, out_w));
        for ch in 0..c {
            for oy in 0..out_h {
                let (y0, y1, fy) = taps_y[oy];
                for ox in 0..out_w {
                    let (x0, x1, fx) = taps_x[ox];
                    let top = xv[(ch, y0, x0)] * (1.0 - fx) + xv[(ch, y0, x1)] * fx;
                    let bot = xv[(ch, y1, x0)] * (1.0 - fx) + xv[(ch, y1, x1)] * fx;
                    out[(ch, oy, ox)] = top * (1.0 - fy) + bot * fy;
                }
            }
        }
        let xi = x.0;
        self.push(
            out.into_dyn(),
            Some(Box::new(move |g, _vals, grads| {
                let g3 = as3(g);
                let mut dx = Array3::<f64>::zeros((c, h, w));
                for ch in 0..c {
                    for oy in 0..out_h {
                        let (y0, y1, fy) = taps_y[oy];
                        for ox in 0..out_w {
                            let (x0, x1, fx) = taps_x[ox];
                            let go = g3[(ch, oy, ox)];
                            dx[(ch, y0, x0)] += go * (1.0 - fy) * (1.0 - fx);
                            dx[(ch, y0, x1)] += go * (1.0 - fy) * fx;
                            dx[(ch, y1, x0)] += go * fy * (1.0 - fx);
                            dx[(ch, y1, x1)] += go * fy * fx;
                        }
                    }
                }
                accumulate(&mut grads[xi], dx.into_dyn());
            })),
        )
    }
}

/// Source taps and fraction for one output coordinate (half-pixel centers,
/// clamped to the source extent).
fn resize_taps(src: usize, dst: usize) -> Vec<(usize, usize, f64)> {
    let scale = src as f64 / dst as f64;
    (0..dst)
        .map(|o| {
            let s = ((o as f64 + 0.5) * scale - 0.5).clamp(0.0, (src - 1) as f64);
            let lo = s.floor() as usize;
            let hi = (lo + 1).min(src - 1);
            (lo, hi, s - lo as f64)
        })
        .collect()
}
