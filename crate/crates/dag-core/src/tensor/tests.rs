use ndarray::{array, Array1, Array2, Array3, Array4, IxDyn};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::tensor::ops::RowCombo;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn rand_arr(shape: &[usize], seed: u64) -> Arr {
    let mut r = rng(seed);
    Arr::from_shape_fn(IxDyn(shape), |_| nn::gaussian(&mut r))
}

/// Reduce any output to a scalar through a fixed random projection so a
/// gradient check exercises every output element.
fn project(g: &mut Graph, v: Var, seed: u64) -> Var {
    let w = rand_arr(g.value(v).shape(), seed);
    let prod = g.mul_const(v, &w);
    g.sum_all(prod)
}

fn check(f: impl Fn(&mut Graph, &[Var]) -> Var, inputs: &[Arr]) {
    check_gradients(&f, inputs, 1e-5, 1e-6).unwrap();
}

#[test]
fn elementwise_grads() {
    let a = rand_arr(&[3, 4], 1);
    let b = rand_arr(&[3, 4], 2);
    check(
        |g, v| {
            let s = g.add(v[0], v[1]);
            let m = g.mul(s, v[0]);
            let d = g.div(m, v[1]);
            project(g, d, 7)
        },
        &[a, b.mapv(|x| x + 3.0)],
    );
}

#[test]
fn unary_grads() {
    let a = rand_arr(&[2, 5], 3);
    check(
        |g, v| {
            let r = g.relu(v[0]);
            let s = g.sigmoid(r);
            let aff = g.affine(s, 2.0, 0.5);
            let l = g.ln(aff);
            project(g, l, 8)
        },
        &[a],
    );
}

#[test]
fn clamp_passes_gradient_only_inside() {
    let a = array![[0.5, 2.0, -1.0]].into_dyn();
    let mut g = Graph::new();
    let v = g.leaf(a);
    let c = g.clamp(v, 0.0, 1.0);
    let s = g.sum_all(c);
    let grads = g.backward(s);
    let got = grads.get(v).unwrap();
    assert_eq!(got.as_slice().unwrap(), &[1.0, 0.0, 0.0]);
}

#[test]
fn matmul_grads() {
    let a = rand_arr(&[3, 4], 4);
    let b = rand_arr(&[4, 2], 5);
    check(
        |g, v| {
            let m = g.matmul(v[0], v[1]);
            project(g, m, 9)
        },
        &[a, b],
    );
}

#[test]
fn rowvec_grads() {
    let a = rand_arr(&[4, 3], 6);
    let rv = rand_arr(&[1, 3], 7);
    check(
        |g, v| {
            let x = g.add_rowvec(v[0], v[1]);
            let y = g.mul_rowvec(x, v[1]);
            project(g, y, 10)
        },
        &[a, rv],
    );
}

#[test]
fn softmax_rows_grads_and_normalization() {
    let a = rand_arr(&[3, 5], 8);
    let mut g = Graph::new();
    let v = g.leaf(a.clone());
    let y = g.softmax_rows(v);
    for row in ops::as2(g.value(y)).rows() {
        assert!((row.sum() - 1.0).abs() < 1e-12);
    }
    check(
        |g, v| {
            let y = g.softmax_rows(v[0]);
            project(g, y, 11)
        },
        &[a],
    );
}

#[test]
fn layer_norm_grads() {
    let x = rand_arr(&[3, 6], 9);
    let gain = rand_arr(&[1, 6], 10).mapv(|v| v + 1.5);
    let bias = rand_arr(&[1, 6], 11);
    check(
        |g, v| {
            let y = g.layer_norm_rows(v[0], v[1], v[2], 1e-5);
            project(g, y, 12)
        },
        &[x, gain, bias],
    );
}

#[test]
fn shape_op_grads() {
    let a = rand_arr(&[4, 6], 13);
    check(
        |g, v| {
            let t = g.transpose(v[0]);
            let r = g.reshape(t, &[3, 8]);
            let s = g.slice_rows(r, 1, 3);
            let c = g.slice_cols(s, 2, 7);
            project(g, c, 14)
        },
        &[a],
    );
}

#[test]
fn concat_grads() {
    let a = rand_arr(&[2, 3], 15);
    let b = rand_arr(&[4, 3], 16);
    let c = rand_arr(&[2, 5], 17);
    check(
        |g, v| {
            let rows = g.concat_rows(&[v[0], v[1]]);
            let cut = g.slice_rows(rows, 0, 2);
            let cols = g.concat_cols(&[cut, v[2]]);
            project(g, cols, 18)
        },
        &[a, b, c],
    );
}

#[test]
fn gather_and_weighted_rows_grads() {
    let a = rand_arr(&[5, 3], 19);
    check(
        |g, v| {
            let picked = g.gather_rows(v[0], &[0, 2, 2, 4]);
            let combos = vec![
                RowCombo {
                    indices: vec![0, 1],
                    weights: vec![0.25, 0.75],
                },
                RowCombo {
                    indices: vec![2, 3],
                    weights: vec![0.5, 0.5],
                },
            ];
            let mixed = g.weighted_rows(picked, combos);
            project(g, mixed, 20)
        },
        &[a],
    );
}

#[test]
fn group_max_grads() {
    let a = rand_arr(&[6, 4], 21);
    check(
        |g, v| {
            let m = g.group_max_rows(v[0], 3);
            project(g, m, 22)
        },
        &[a],
    );
}

#[test]
fn reductions_grads() {
    let a = rand_arr(&[3, 4], 23);
    check(
        |g, v| {
            let mr = g.mean_rows(v[0]);
            let mx = g.max_over_rows(v[0]);
            let joined = g.concat_rows(&[mr, mx]);
            let m = g.mean_all(joined);
            let s = g.sum_all(v[0]);
            let total = g.add(m, s);
            g.mul_scalar_var(total, total)
        },
        &[a],
    );
}

#[test]
fn conv2d_forward_known_value() {
    // 1x1 input channel, 2x2 image, identity-ish kernel.
    let x = Array3::from_shape_vec((1, 2, 2), vec![1.0, 2.0, 3.0, 4.0])
        .unwrap()
        .into_dyn();
    let w = Array4::from_shape_vec((1, 1, 1, 1), vec![2.0]).unwrap().into_dyn();
    let b = Array1::from_vec(vec![0.5]).into_dyn();
    let mut g = Graph::new();
    let (xv, wv, bv) = (g.leaf(x), g.leaf(w), g.leaf(b));
    let y = g.conv2d(xv, wv, bv, 1, 0);
    let out = g.value(y);
    assert_eq!(out.shape(), &[1, 2, 2]);
    assert_eq!(out.iter().cloned().collect::<Vec<_>>(), vec![2.5, 4.5, 6.5, 8.5]);
}

#[test]
fn conv2d_grads() {
    let x = rand_arr(&[2, 6, 6], 24);
    let w = rand_arr(&[3, 2, 3, 3], 25);
    let b = rand_arr(&[3], 26);
    check(
        |g, v| {
            let y = g.conv2d(v[0], v[1], v[2], 2, 1);
            project(g, y, 27)
        },
        &[x, w, b],
    );
}

#[test]
fn bilinear_resize_grads_and_identity() {
    let x = rand_arr(&[2, 4, 4], 28);
    let mut g = Graph::new();
    let v = g.leaf(x.clone());
    let same = g.bilinear_resize(v, 4, 4);
    assert!(g
        .value(same)
        .iter()
        .zip(x.iter())
        .all(|(a, b)| (a - b).abs() < 1e-12));
    check(
        |g, v| {
            let y = g.bilinear_resize(v[0], 3, 5);
            project(g, y, 29)
        },
        &[x],
    );
}

#[test]
fn attention_single_key_returns_value_row() {
    let mut g = Graph::new();
    let q = g.leaf(rand_arr(&[3, 4], 30));
    let k = g.leaf(rand_arr(&[1, 4], 31));
    let vv = rand_arr(&[1, 4], 32);
    let v = g.leaf(vv.clone());
    let att = nn::attention(&mut g, q, k, v, 1);
    for row in ops::as2(g.value(att.out)).rows() {
        for (a, b) in row.iter().zip(vv.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}

#[test]
fn attention_grads_multihead() {
    let q = rand_arr(&[3, 4], 33);
    let k = rand_arr(&[5, 4], 34);
    let v = rand_arr(&[5, 4], 35);
    for heads in [1, 2] {
        check(
            |g, vars| {
                let att = nn::attention(g, vars[0], vars[1], vars[2], heads);
                project(g, att.out, 36)
            },
            &[q.clone(), k.clone(), v.clone()],
        );
    }
}

#[test]
fn linear_and_mlp_grads_through_params() {
    use crate::params::ParamStore;
    let mut store = ParamStore::new();
    let mut r = rng(40);
    let lin = nn::Linear::new(&mut store, "t.lin", 3, 4, nn::InitKind::Xavier, true, false, &mut r);
    let mlp = nn::Mlp::new(&mut store, "t.mlp", 4, 8, 2, nn::InitKind::Xavier, false, &mut r);
    let ln = nn::LayerNorm::new(&mut store, "t.ln", 2, false);
    let x = rand_arr(&[5, 3], 41);

    let mut g = Graph::new();
    let bound = store.bind(&mut g);
    let xv = g.leaf(x.clone());
    let h = lin.forward(&mut g, &bound, xv);
    let h = mlp.forward(&mut g, &bound, h);
    let h = ln.forward(&mut g, &bound, h);
    let loss = project(&mut g, h, 42);
    let grads = g.backward(loss);
    // every trainable parameter that participated received a gradient
    for (name, _) in store.iter() {
        assert!(
            grads.get(bound.var(name)).is_some(),
            "missing grad for {name}"
        );
    }

    // and the analytic gradient w.r.t. x matches finite differences
    check(
        |g, v| {
            let bound = store.bind(g);
            let h = lin.forward(g, &bound, v[0]);
            let h = mlp.forward(g, &bound, h);
            let h = ln.forward(g, &bound, h);
            project(g, h, 42)
        },
        &[x],
    );
}

#[test]
fn inference_graph_skips_backward() {
    let mut g = Graph::inference();
    let a = g.leaf(rand_arr(&[2, 2], 50));
    let b = g.leaf(rand_arr(&[2, 2], 51));
    let c = g.mul(a, b);
    let s = g.sum_all(c);
    let grads = g.backward(s);
    assert!(grads.get(a).is_none());
}
