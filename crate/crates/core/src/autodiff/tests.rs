use std::sync::Arc;

use ndarray::Array2;

use super::*;
use crate::numerics::{finite_diff_grad, max_relative_error, mmd_biased, RngStream};

/// Check the tape gradient of `build` against central differences.
fn check<F>(params: &ParamSet, build: F)
where
    F: Fn(&mut Graph, &[Var]) -> Var,
{
    let mut g = Graph::new();
    let vars = params.attach(&mut g);
    let out = build(&mut g, &vars);
    let grads = g.backward(out);
    let analytic = flatten_grads(&params.collect_grads(&grads, &vars));

    let mut probe = params.clone();
    let numeric = finite_diff_grad(
        |x| {
            probe.set_flat(x).unwrap();
            let mut g = Graph::new();
            let vars = probe.attach(&mut g);
            let out = build(&mut g, &vars);
            g.scalar(out)
        },
        &params.flatten(),
        1e-6,
    )
    .unwrap();
    let err = max_relative_error(&analytic, &numeric, 1e-6);
    assert!(err < 1e-5, "relative error {err}\n{analytic:?}\n{numeric:?}");
}

fn random_params(shapes: &[(usize, usize)], seed: u64) -> ParamSet {
    let mut rng = RngStream::new(seed);
    let mut ps = ParamSet::new();
    for (i, s) in shapes.iter().enumerate() {
        ps.add_uniform(format!("p{i}"), *s, 1.0, &mut rng);
    }
    ps
}

#[test]
fn elementwise_and_matmul_ops() {
    let ps = random_params(&[(3, 4), (4, 2), (1, 2), (3, 2)], 1);
    check(&ps, |g, v| {
        let a = g.matmul(v[0], v[1]);
        let a = g.add_row(a, v[2]);
        let s = g.sigmoid(a);
        let t = g.tanh(v[3]);
        let m = g.mul(s, t);
        let d = g.sub(m, v[3]);
        let e = g.add(d, s);
        let k = g.scale(e, 0.7);
        let r = g.row_scale(k, Arc::new(vec![0.5, -1.0, 2.0]));
        g.sum(r)
    });
}

#[test]
fn slicing_concat_and_const() {
    let ps = random_params(&[(2, 5), (2, 3)], 2);
    let c = Array2::from_elem((2, 4), 0.3);
    check(&ps, |g, v| {
        let a = g.slice_cols(v[0], 1, 4);
        let b = g.concat_cols(&[a, v[1], a]);
        let b = g.slice_cols(b, 2, 6);
        let b = g.add_const(b, &c);
        let sq = g.mul(b, b);
        g.sum(sq)
    });
}

#[test]
fn clamp_and_exp() {
    let ps = random_params(&[(3, 3)], 3);
    check(&ps, |g, v| {
        let c = g.clamp(v[0], -10.0, 10.0);
        let t = g.tanh(c);
        let e = g.exp(t);
        g.sum(e)
    });
}

#[test]
fn gru_cell_gradient() {
    let ps = random_params(&[(4, 9), (4, 9), (4, 3)], 4);
    check(&ps, |g, v| {
        let h = g.tanh(v[2]);
        let h2 = g.gru_cell(v[0], v[1], h);
        let h3 = g.gru_cell(v[1], v[0], h2);
        let t = g.mul(h3, h3);
        g.sum(t)
    });
}

#[test]
fn loss_ops_gradients() {
    let ps = random_params(&[(3, 4), (3, 4), (3, 4)], 5);
    let target = Array2::from_shape_fn((3, 4), |(i, j)| (i as f64 - j as f64) * 0.3);
    let labels = Array2::from_shape_fn((3, 4), |(i, j)| ((i + j) % 2) as f64);
    check(&ps, |g, v| {
        let a = g.sq_err_sum(v[0], target.clone());
        let b = g.sq_diff_sum(v[0], v[1]);
        let c = g.bce_sum(v[2], labels.clone(), 1e-6);
        let d = g.kld_sum(v[1], v[2]);
        let ab = g.add(a, b);
        let cd = g.add(c, d);
        g.add(ab, cd)
    });
}

#[test]
fn mmd_gradient_and_value() {
    let ps = random_params(&[(5, 3), (5, 3)], 6);
    check(&ps, |g, v| g.mmd(v[0], v[1], 0.9));

    let mut g = Graph::new();
    let vars = ps.attach(&mut g);
    let m = g.mmd(vars[0], vars[1], 0.9);
    let xs: Vec<Vec<f64>> = ps.get(0).rows().into_iter().map(|r| r.to_vec()).collect();
    let ys: Vec<Vec<f64>> = ps.get(1).rows().into_iter().map(|r| r.to_vec()).collect();
    assert_eq!(g.scalar(m), mmd_biased(&xs, &ys, 0.9).unwrap());
}

#[test]
fn gru_layer_sequence_gradient() {
    let mut rng = RngStream::new(9);
    let mut ps = ParamSet::new();
    let gru = Gru::new(&mut ps, "gru", 2, 3, &mut rng);
    let head = Linear::new(&mut ps, "head", 3, 1, &mut rng);
    let inputs: Vec<Array2<f64>> = (0..3).map(|_| rng.normal_matrix(2, 2)).collect();
    check(&ps, |g, v| {
        let xs: Vec<Var> = inputs.iter().map(|x| g.constant(x.clone())).collect();
        let hs = gru.run(g, v, &xs, true);
        let o = head.forward(g, v, hs[0]);
        let o2 = g.mul(o, o);
        g.sum(o2)
    });
}

#[test]
fn constants_receive_no_gradient() {
    let mut g = Graph::new();
    let c = g.constant(Array2::ones((2, 2)));
    let p = g.param(Array2::ones((2, 2)));
    let m = g.mul(c, p);
    let s = g.sum(m);
    let grads = g.backward(s);
    assert!(grads.get(c).is_none());
    assert_eq!(grads.get(p).unwrap(), &Array2::<f64>::ones((2, 2)));
}

#[test]
fn adam_minimizes_quadratic() {
    let mut ps = ParamSet::new();
    ps.add("x", Array2::from_elem((1, 2), 3.0));
    let mut opt = Adam::new(&ps, 0.1, None);
    for _ in 0..500 {
        let mut g = Graph::new();
        let v = ps.attach(&mut g);
        let l = g.sq_err_sum(v[0], Array2::from_elem((1, 2), -1.0));
        let grads = g.backward(l);
        let gs = ps.collect_grads(&grads, &v);
        opt.step(&mut ps, &gs);
    }
    assert!(ps.get(0).iter().all(|x| (x + 1.0).abs() < 1e-2));
}

#[test]
fn param_set_json_round_trip() {
    let ps = random_params(&[(2, 3), (1, 4)], 12);
    let s = serde_json::to_string(&ps).unwrap();
    let back: ParamSet = serde_json::from_str(&s).unwrap();
    assert_eq!(back, ps);
}
