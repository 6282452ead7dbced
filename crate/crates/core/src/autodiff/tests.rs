use super::*;
use crate::gradcheck::{max_rel_err_vs_fd, rel_err};
use crate::rng::SeededRng;

fn t64(shape: Vec<usize>, data: Vec<f64>) -> Tensor<f64> {
    Tensor::new(shape, data).unwrap()
}

fn random_tensor(rng: &mut SeededRng, shape: Vec<usize>) -> Tensor<f64> {
    let n = numel(&shape);
    let data = (0..n).map(|_| rng.uniform_symmetric(1.0)).collect();
    Tensor::new(shape, data).unwrap()
}

#[test]
fn matmul_identity() {
    let mut tape = Tape::new();
    let i2 = tape.leaf(&t64(vec![2, 2], vec![1.0, 0.0, 0.0, 1.0]));
    let a = tape.leaf(&t64(vec![2, 2], vec![1.0, 2.0, 3.0, 4.0]));
    let out = tape.matmul(&i2, &a).unwrap();
    assert_eq!(out.data(), &[1.0, 2.0, 3.0, 4.0]);
}

#[test]
fn matmul_selector_row() {
    let mut tape = Tape::new();
    let sel = tape.leaf(&t64(vec![1, 2], vec![1.0, 0.0]));
    let col = tape.leaf(&t64(vec![2, 1], vec![5.0, 7.0]));
    let out = tape.matmul(&sel, &col).unwrap();
    assert_eq!(out.shape(), &[1, 1]);
    assert_eq!(out.data(), &[5.0]);
}

#[test]
fn matmul_shape_mismatch_names_both_shapes() {
    let mut tape: Tape<f64> = Tape::new();
    let a = tape.leaf(&Tensor::zeros(vec![2, 3]));
    let b = tape.leaf(&Tensor::zeros(vec![2, 3]));
    let err = tape.matmul(&a, &b).unwrap_err();
    let msg = err.to_string();
    assert!(msg.contains("[2, 3]"), "{msg}");
}

#[test]
fn matmul_gradients_match_finite_differences() {
    let mut rng = SeededRng::new(11);
    let a0 = random_tensor(&mut rng, vec![3, 4]);
    let b0 = random_tensor(&mut rng, vec![4, 2]);

    // Scalar objective: mean of the product entries.
    let eval = |av: &[f64], bv: &[f64]| -> (f64, Vec<f64>, Vec<f64>) {
        let mut tape = Tape::new();
        let a = tape.leaf(&t64(vec![3, 4], av.to_vec()));
        let b = tape.leaf(&t64(vec![4, 2], bv.to_vec()));
        let p = tape.matmul(&a, &b).unwrap();
        let m = tape.mean(&p).unwrap();
        tape.backward(&m).unwrap();
        (
            m.item(),
            tape.grad(&a).unwrap().data().to_vec(),
            tape.grad(&b).unwrap().data().to_vec(),
        )
    };
    let (_, ga, gb) = eval(a0.data(), b0.data());

    let err_a = max_rel_err_vs_fd(
        |av| eval(av, b0.data()).0,
        a0.data(),
        &ga,
        1e-6,
    );
    let err_b = max_rel_err_vs_fd(
        |bv| eval(a0.data(), bv).0,
        b0.data(),
        &gb,
        1e-6,
    );
    assert!(err_a < 1e-6, "a grad err {err_a}");
    assert!(err_b < 1e-6, "b grad err {err_b}");
}

#[test]
fn mean_and_sub_basics() {
    let mut tape = Tape::new();
    let x = tape.leaf(&t64(vec![3], vec![1.0, 2.0, 3.0]));
    let m = tape.mean(&x).unwrap();
    assert_eq!(m.item(), 2.0);

    let z = tape.sub(&x, &x).unwrap();
    assert_eq!(z.data(), &[0.0, 0.0, 0.0]);
}

#[test]
fn mean_gradient_is_one_over_n() {
    let mut tape = Tape::new();
    let x = tape.leaf(&t64(vec![4], vec![1.0, 2.0, 3.0, 4.0]));
    let m = tape.mean(&x).unwrap();
    tape.backward(&m).unwrap();
    assert_eq!(tape.grad(&x).unwrap().data(), &[0.25; 4]);
}

#[test]
fn elementwise_shape_mismatch_is_an_error() {
    let mut tape: Tape<f64> = Tape::new();
    let a = tape.leaf(&Tensor::zeros(vec![2, 3]));
    let b = tape.leaf(&Tensor::zeros(vec![3, 2]));
    assert!(tape.add(&a, &b).is_err());
    assert!(tape.sub(&a, &b).is_err());
    assert!(tape.sq_l2(&a, &b).is_err());
}

#[test]
fn bias_broadcast_adds_row() {
    let mut tape = Tape::new();
    let a = tape.leaf(&t64(vec![2, 3], vec![0.0, 1.0, 2.0, 3.0, 4.0, 5.0]));
    let b = tape.leaf(&t64(vec![3], vec![10.0, 20.0, 30.0]));
    let out = tape.add_bias(&a, &b).unwrap();
    assert_eq!(out.data(), &[10.0, 21.0, 32.0, 13.0, 24.0, 35.0]);

    let s = tape.sum(&out).unwrap();
    tape.backward(&s).unwrap();
    // Bias gradient is the column count of rows.
    assert_eq!(tape.grad(&b).unwrap().data(), &[2.0, 2.0, 2.0]);
}

#[test]
fn lrelu_values() {
    let mut tape = Tape::new();
    let x = tape.leaf(&t64(vec![3], vec![2.0, -1.0, 0.0]));
    let y = tape.lrelu(&x, 0.2).unwrap();
    assert_eq!(y.data(), &[2.0, -0.2, 0.0]);

    // Subgradient at 0 is 1.
    let s = tape.sum(&y).unwrap();
    tape.backward(&s).unwrap();
    assert_eq!(tape.grad(&x).unwrap().data(), &[1.0, 0.2, 1.0]);
}

#[test]
fn tanh_sigmoid_values() {
    let mut tape = Tape::new();
    let x = tape.leaf(&t64(vec![2], vec![0.0, 50.0]));
    let t = tape.tanh(&x).unwrap();
    let s = tape.sigmoid(&x).unwrap();
    assert_eq!(t.data()[0], 0.0);
    assert_eq!(s.data()[0], 0.5);
    assert!((s.data()[1] - 1.0).abs() < 1e-15, "sigmoid saturation");
}

#[test]
fn activation_gradients_match_finite_differences() {
    let mut rng = SeededRng::new(5);
    let x0: Vec<f64> = (0..12).map(|_| rng.uniform_symmetric(2.0)).collect();

    for act in ["tanh", "sigmoid", "exp", "lrelu"] {
        let eval = |xv: &[f64]| -> (f64, Vec<f64>) {
            let mut tape = Tape::new();
            let x = tape.leaf(&t64(vec![3, 4], xv.to_vec()));
            let y = match act {
                "tanh" => tape.tanh(&x).unwrap(),
                "sigmoid" => tape.sigmoid(&x).unwrap(),
                "exp" => tape.exp(&x).unwrap(),
                _ => tape.lrelu(&x, 0.2).unwrap(),
            };
            let m = tape.mean(&y).unwrap();
            tape.backward(&m).unwrap();
            (m.item(), tape.grad(&x).unwrap().data().to_vec())
        };
        let (_, g) = eval(&x0);
        let err = max_rel_err_vs_fd(|xv| eval(xv).0, &x0, &g, 1e-6);
        assert!(err < 1e-6, "{act} grad err {err}");
    }
}

#[test]
fn log_values_and_floor() {
    let mut tape = Tape::new();
    let x = tape.leaf(&t64(vec![3], vec![1.0, std::f64::consts::E, 0.0]));
    let y = tape.log_eps(&x, 1e-12).unwrap();
    assert_eq!(y.data()[0], 0.0);
    assert!((y.data()[1] - 1.0).abs() < 1e-9);
    assert!((y.data()[2] - 1e-12f64.ln()).abs() < 1e-9);
    assert!((y.data()[2] + 27.631).abs() < 1e-2);
}

#[test]
fn log_negative_input_is_domain_error() {
    let mut tape = Tape::new();
    let x = tape.leaf(&t64(vec![1], vec![-0.5]));
    assert!(matches!(
        tape.log_eps(&x, 1e-12),
        Err(Error::Domain { .. })
    ));
}

#[test]
fn sq_l2_values() {
    let mut tape = Tape::new();
    let a = tape.leaf(&t64(vec![2], vec![1.0, 0.0]));
    let b = tape.leaf(&t64(vec![2], vec![0.0, 0.0]));
    assert_eq!(tape.sq_l2(&a, &b).unwrap().item(), 1.0);
    assert_eq!(tape.sq_l2(&a, &a).unwrap().item(), 0.0);

    // Two rows with squared norms 4 and 16 average to 10.
    let x = tape.leaf(&t64(vec![2, 1], vec![2.0, 4.0]));
    let z = tape.leaf(&Tensor::zeros(vec![2, 1]));
    assert_eq!(tape.sq_l2(&x, &z).unwrap().item(), 10.0);
}

#[test]
fn backward_analytic_one_parameter() {
    // loss = ‖w·x - t‖² with scalar shapes: d/dw = 2x(wx - t).
    let (x, t, w) = (3.0, 1.0, 0.5);
    let mut tape = Tape::new();
    let wt = tape.leaf(&t64(vec![1, 1], vec![w]));
    let xt = tape.leaf(&t64(vec![1, 1], vec![x]));
    let tt = tape.leaf(&t64(vec![1, 1], vec![t]));
    let y = tape.matmul(&xt, &wt).unwrap();
    let loss = tape.sq_l2(&y, &tt).unwrap();
    tape.backward(&loss).unwrap();
    let g = tape.grad(&wt).unwrap().item();
    assert!((g - 2.0 * x * (w * x - t)).abs() < 1e-12);
}

#[test]
fn gradient_of_constant_wrt_parameter_is_zero() {
    let mut tape = Tape::new();
    let w = tape.leaf(&t64(vec![1], vec![3.0]));
    let c = tape.leaf(&t64(vec![1], vec![5.0]));
    let m = tape.mean(&c).unwrap();
    tape.backward(&m).unwrap();
    assert_eq!(tape.grad(&w).unwrap().data(), &[0.0]);
}

#[test]
fn backward_rejects_non_scalar_and_detached_roots() {
    let mut tape = Tape::new();
    let v = tape.leaf(&t64(vec![2], vec![1.0, 2.0]));
    assert!(tape.backward(&v).is_err());

    let detached = Tensor::scalar(1.0f64);
    assert!(tape.backward(&detached).is_err());
}

#[test]
fn slice_cols_roundtrip_and_gradient() {
    let mut tape = Tape::new();
    let a = tape.leaf(&t64(vec![2, 4], (0..8).map(f64::from).collect()));
    let left = tape.slice_cols(&a, 0, 2).unwrap();
    let right = tape.slice_cols(&a, 2, 4).unwrap();
    assert_eq!(left.data(), &[0.0, 1.0, 4.0, 5.0]);
    assert_eq!(right.data(), &[2.0, 3.0, 6.0, 7.0]);

    let s = tape.sum(&left).unwrap();
    tape.backward(&s).unwrap();
    assert_eq!(
        tape.grad(&a).unwrap().data(),
        &[1.0, 1.0, 0.0, 0.0, 1.0, 1.0, 0.0, 0.0]
    );
}

#[test]
fn mmd_identical_sets_is_exactly_zero() {
    let mut rng = SeededRng::new(9);
    let z = random_tensor(&mut rng, vec![8, 3]);
    let mut tape = Tape::new();
    let a = tape.leaf(&z);
    let b = tape.leaf(&z);
    let v = tape.mmd_imq(&a, &b, 6.0).unwrap();
    assert_eq!(v.item(), 0.0);
}

#[test]
fn mmd_gradients_match_finite_differences() {
    let mut rng = SeededRng::new(13);
    let a0 = random_tensor(&mut rng, vec![5, 3]);
    let b0 = random_tensor(&mut rng, vec![5, 3]);
    let c = 2.0 * 3.0;

    let eval = |av: &[f64], bv: &[f64]| -> (f64, Vec<f64>, Vec<f64>) {
        let mut tape = Tape::new();
        let a = tape.leaf(&t64(vec![5, 3], av.to_vec()));
        let b = tape.leaf(&t64(vec![5, 3], bv.to_vec()));
        let v = tape.mmd_imq(&a, &b, c).unwrap();
        tape.backward(&v).unwrap();
        (
            v.item(),
            tape.grad(&a).unwrap().data().to_vec(),
            tape.grad(&b).unwrap().data().to_vec(),
        )
    };
    let (_, ga, gb) = eval(a0.data(), b0.data());
    let err_a = max_rel_err_vs_fd(|av| eval(av, b0.data()).0, a0.data(), &ga, 1e-5);
    let err_b = max_rel_err_vs_fd(|bv| eval(a0.data(), bv).0, b0.data(), &gb, 1e-5);
    assert!(err_a < 1e-6, "a grad err {err_a}");
    assert!(err_b < 1e-6, "b grad err {err_b}");
}

#[test]
fn three_layer_net_gradients_match_finite_differences() {
    // Random 3-layer composite touching matmul, bias, activations and
    // the reconstruction cost.
    let mut rng = SeededRng::new(21);
    let dims = [(5usize, 7usize), (7, 4), (4, 5)];
    let x = random_tensor(&mut rng, vec![3, 5]);
    let target = random_tensor(&mut rng, vec![3, 5]);

    let mut params: Vec<f64> = Vec::new();
    for &(i, o) in &dims {
        for _ in 0..i * o + o {
            params.push(rng.uniform_symmetric(0.5));
        }
    }

    let eval = |p: &[f64]| -> (f64, Vec<f64>) {
        let mut tape = Tape::new();
        let mut h = tape.leaf(&x);
        let mut handles = Vec::new();
        let mut off = 0;
        for (li, &(i, o)) in dims.iter().enumerate() {
            let w = tape.leaf(&t64(vec![i, o], p[off..off + i * o].to_vec()));
            off += i * o;
            let b = tape.leaf(&t64(vec![o], p[off..off + o].to_vec()));
            off += o;
            let z = tape.matmul(&h, &w).unwrap();
            let z = tape.add_bias(&z, &b).unwrap();
            h = match li {
                0 => tape.lrelu(&z, 0.2).unwrap(),
                1 => tape.sigmoid(&z).unwrap(),
                _ => tape.tanh(&z).unwrap(),
            };
            handles.push((w, b));
        }
        let t = tape.leaf(&target);
        let loss = tape.sq_l2(&h, &t).unwrap();
        tape.backward(&loss).unwrap();
        let mut grads = Vec::new();
        for (w, b) in &handles {
            grads.extend_from_slice(tape.grad(w).unwrap().data());
            grads.extend_from_slice(tape.grad(b).unwrap().data());
        }
        (loss.item(), grads)
    };

    let (_, analytic) = eval(&params);
    let err = max_rel_err_vs_fd(|p| eval(p).0, &params, &analytic, 1e-5);
    assert!(err < 1e-4, "3-layer net grad err {err}");
}

#[test]
fn forward_is_deterministic_and_replay_gives_identical_gradients() {
    let mut rng = SeededRng::new(33);
    let a0 = random_tensor(&mut rng, vec![4, 4]);
    let b0 = random_tensor(&mut rng, vec![4, 4]);

    let run = || -> (Vec<f64>, Vec<f64>) {
        let mut tape = Tape::new();
        let a = tape.leaf(&a0);
        let b = tape.leaf(&b0);
        let p = tape.matmul(&a, &b).unwrap();
        let t = tape.tanh(&p).unwrap();
        let loss = tape.sq_l2(&t, &b).unwrap();
        tape.backward(&loss).unwrap();
        (
            t.data().to_vec(),
            tape.grad(&a).unwrap().data().to_vec(),
        )
    };
    let (v1, g1) = run();
    let (v2, g2) = run();
    assert!(v1.iter().zip(&v2).all(|(a, b)| a.to_bits() == b.to_bits()));
    assert!(g1.iter().zip(&g2).all(|(a, b)| a.to_bits() == b.to_bits()));
}

#[test]
fn forward_keeps_values_finite_on_finite_inputs() {
    let mut rng = SeededRng::new(40);
    for trial in 0..20 {
        let a = random_tensor(&mut rng, vec![3, 6]);
        let b = random_tensor(&mut rng, vec![6, 3]);
        let mut tape = Tape::new();
        let ta = tape.leaf(&a);
        let tb = tape.leaf(&b);
        let p = tape.matmul(&ta, &tb).unwrap();
        let s = tape.sigmoid(&p).unwrap();
        let l = tape.log_eps(&s, 1e-12).unwrap();
        let m = tape.mean(&l).unwrap();
        assert!(m.item().is_finite(), "trial {trial}");
    }
}

#[test]
fn randomized_gradient_sweep_under_1e4() {
    // Mixed-op graphs over 100 random trials, tape vs central
    // differences.
    let mut rng = SeededRng::new(77);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let x = random_tensor(&mut rng, vec![2, 3]);
        let w0: Vec<f64> = (0..12).map(|_| rng.uniform_symmetric(0.8)).collect();

        let eval = |p: &[f64]| -> (f64, Vec<f64>) {
            let mut tape = Tape::new();
            let xi = tape.leaf(&x);
            let w = tape.leaf(&t64(vec![3, 4], p.to_vec()));
            let h = tape.matmul(&xi, &w).unwrap();
            let a = tape.lrelu(&h, 0.2).unwrap();
            let s = tape.sigmoid(&a).unwrap();
            let l = tape.log_eps(&s, 1e-12).unwrap();
            let e = tape.exp(&l).unwrap();
            let m = tape.mean(&e).unwrap();
            tape.backward(&m).unwrap();
            (m.item(), tape.grad(&w).unwrap().data().to_vec())
        };
        let (_, g) = eval(&w0);
        let err = max_rel_err_vs_fd(|p| eval(p).0, &w0, &g, 1e-5);
        worst = worst.max(err);
    }
    assert!(worst < 1e-4, "worst rel err {worst}");
    // Sanity on the helper itself.
    assert_eq!(rel_err(1.0, 1.0), 0.0);
}
