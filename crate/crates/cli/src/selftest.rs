//! Built-in verification suite: tape gradients against central finite
//! differences, metric oracles, optimizer and wiring identities.
//! Everything runs in a few seconds and prints one line per check.

use std::str::FromStr;

use cdae_core::autodiff::{Tape, Tensor};
use cdae_core::cascade::{forward_cascade, Arch, CascadeModel};
use cdae_core::data::{denormalize, normalize};
use cdae_core::gradcheck::max_rel_err_vs_fd;
use cdae_core::metrics::{ssim, SsimParams};
use cdae_core::nn::{forward, NetworkState};
use cdae_core::objectives::{
    adversarial_g_loss, kl_gauss, loss_ae, mmd_regularizer, reparameterize,
};
use cdae_core::rng::SeededRng;
use cdae_core::sample;
use cdae_core::train::{train, Optimizer, TrainConfig};

pub fn run() -> usize {
    let checks: &[(&str, fn() -> Result<(), String>)] = &[
        ("reconstruction gradient vs finite differences", grad_reconstruction),
        ("adversarial gradient vs finite differences", grad_adversarial),
        ("variational gradient vs finite differences", grad_variational),
        ("latent-regularizer gradient vs finite differences", grad_mmd),
        ("ssim self-identity and closed form", ssim_oracles),
        ("adam single-step oracle", adam_oracle),
        ("residual telescoping identity", residual_wiring),
        ("pixel normalization round trip", normalization_roundtrip),
        ("single-stage cascade matches the classical run", collapse_identity),
    ];
    let mut failures = 0;
    for (name, check) in checks {
        match check() {
            Ok(()) => println!("selftest {name}: PASS"),
            Err(msg) => {
                failures += 1;
                println!("selftest {name}: FAIL ({msg})");
            }
        }
    }
    failures
}

fn expect(cond: bool, msg: &str) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.to_string())
    }
}

/// One-layer sigmoid toy net; tiny so finite differences stay fast.
fn small_net(seed: u64, dims: (usize, usize)) -> NetworkState<f64> {
    let mut rng = SeededRng::new(seed);
    let (i, o) = dims;
    let w: Vec<f64> = (0..i * o).map(|_| rng.uniform_symmetric(0.6)).collect();
    NetworkState {
        layers: vec![cdae_core::nn::Layer {
            weight: Tensor::matrix(i, o, w).unwrap(),
            bias: Tensor::zeros(vec![o]),
            activation: cdae_core::nn::Activation::Sigmoid,
        }],
        role: cdae_core::nn::Role::Discriminator,
    }
}

fn pack(net: &NetworkState<f64>) -> Vec<f64> {
    let mut p = Vec::new();
    for l in &net.layers {
        p.extend_from_slice(l.weight.data());
        p.extend_from_slice(l.bias.data());
    }
    p
}

fn unpack(net: &mut NetworkState<f64>, p: &[f64]) {
    let mut off = 0;
    for l in &mut net.layers {
        let wn = l.weight.len();
        l.weight.data_mut().copy_from_slice(&p[off..off + wn]);
        off += wn;
        let bn = l.bias.len();
        l.bias.data_mut().copy_from_slice(&p[off..off + bn]);
        off += bn;
    }
}

fn grads_of(tape: &Tape<f64>, handles: &cdae_core::nn::ParamHandles<f64>) -> Vec<f64> {
    let mut g = Vec::new();
    for (w, b) in &handles.layers {
        g.extend_from_slice(tape.grad(w).unwrap().data());
        g.extend_from_slice(tape.grad(b).unwrap().data());
    }
    g
}

fn random_matrix(rng: &mut SeededRng, rows: usize, cols: usize) -> Tensor<f64> {
    Tensor::matrix(
        rows,
        cols,
        (0..rows * cols).map(|_| rng.uniform_symmetric(0.9)).collect(),
    )
    .unwrap()
}

fn grad_reconstruction() -> Result<(), String> {
    let mut rng = SeededRng::new(1);
    let x = random_matrix(&mut rng, 3, 6);
    let mut net = small_net(2, (6, 6));
    let base = pack(&net);
    let eval = |p: &[f64], net: &mut NetworkState<f64>| {
        unpack(net, p);
        let mut tape = Tape::new();
        let xl = tape.leaf(&x);
        let (y, h) = forward(net, &mut tape, &xl).unwrap();
        let loss = loss_ae(&mut tape, &xl, &y).unwrap();
        tape.backward(&loss).unwrap();
        (loss.item(), grads_of(&tape, &h))
    };
    let (_, analytic) = eval(&base, &mut net);
    let err = max_rel_err_vs_fd(|p| eval(p, &mut net).0, &base, &analytic, 1e-5);
    expect(err < 1e-4, &format!("rel err {err}"))
}

fn grad_adversarial() -> Result<(), String> {
    let mut rng = SeededRng::new(3);
    let fake = random_matrix(&mut rng, 4, 5);
    let mut dc = small_net(4, (5, 1));
    let base = pack(&dc);
    let eval = |p: &[f64], dc: &mut NetworkState<f64>| {
        unpack(dc, p);
        let mut tape = Tape::new();
        let f = tape.leaf(&fake);
        let (score, h) = forward(dc, &mut tape, &f).unwrap();
        let g = adversarial_g_loss(&mut tape, &score, 1.0).unwrap();
        tape.backward(&g).unwrap();
        (g.item(), grads_of(&tape, &h))
    };
    let (_, analytic) = eval(&base, &mut dc);
    let err = max_rel_err_vs_fd(|p| eval(p, &mut dc).0, &base, &analytic, 1e-5);
    expect(err < 1e-4, &format!("rel err {err}"))
}

fn grad_variational() -> Result<(), String> {
    let mut rng = SeededRng::new(5);
    let mu0 = random_matrix(&mut rng, 3, 4);
    let lv0 = random_matrix(&mut rng, 3, 4);
    let eta = random_matrix(&mut rng, 3, 4);
    let target = random_matrix(&mut rng, 3, 4);
    let mut packed: Vec<f64> = mu0.data().to_vec();
    packed.extend_from_slice(lv0.data());

    let eval = |p: &[f64]| {
        let mut tape = Tape::new();
        let mu = tape.leaf(&Tensor::matrix(3, 4, p[..12].to_vec()).unwrap());
        let lv = tape.leaf(&Tensor::matrix(3, 4, p[12..].to_vec()).unwrap());
        let e = tape.leaf(&eta);
        let t = tape.leaf(&target);
        let z = reparameterize(&mut tape, &mu, &lv, &e).unwrap();
        let kl = kl_gauss(&mut tape, &mu, &lv).unwrap();
        let recon = tape.sq_l2(&z, &t).unwrap();
        let loss = tape.add(&kl, &recon).unwrap();
        tape.backward(&loss).unwrap();
        let mut g = tape.grad(&mu).unwrap().data().to_vec();
        g.extend_from_slice(tape.grad(&lv).unwrap().data());
        (loss.item(), g)
    };
    let (_, analytic) = eval(&packed);
    let err = max_rel_err_vs_fd(|p| eval(p).0, &packed, &analytic, 1e-5);
    expect(err < 1e-4, &format!("rel err {err}"))
}

fn grad_mmd() -> Result<(), String> {
    let mut rng = SeededRng::new(7);
    let z0 = random_matrix(&mut rng, 5, 3);
    let zh = random_matrix(&mut rng, 5, 3);
    let eval = |p: &[f64]| {
        let mut tape = Tape::new();
        let z = tape.leaf(&Tensor::matrix(5, 3, p.to_vec()).unwrap());
        let h = tape.leaf(&zh);
        let m = mmd_regularizer(&mut tape, &z, &h).unwrap();
        tape.backward(&m).unwrap();
        (m.item(), tape.grad(&z).unwrap().data().to_vec())
    };
    let (_, analytic) = eval(z0.data());
    let err = max_rel_err_vs_fd(|p| eval(p).0, z0.data(), &analytic, 1e-5);
    expect(err < 1e-4, &format!("rel err {err}"))
}

fn ssim_oracles() -> Result<(), String> {
    let p = SsimParams::default();
    let mut rng = SeededRng::new(11);
    let img: Vec<u8> = (0..784).map(|_| (rng.next_u64() % 256) as u8).collect();
    let s = ssim(&img, &img, 28, 28, &p).map_err(|e| e.to_string())?;
    expect(s == 1.0, &format!("self-ssim {s}"))?;

    let zeros = vec![0u8; 784];
    let full = vec![255u8; 784];
    let s = ssim(&zeros, &full, 28, 28, &p).map_err(|e| e.to_string())?;
    let closed = p.c1() / (255.0 * 255.0 + p.c1());
    expect((s - closed).abs() < 1e-12, &format!("{s} vs {closed}"))
}

fn adam_oracle() -> Result<(), String> {
    let mut opt: Optimizer<f64> = Optimizer::new(0.1);
    let mut p = vec![0.0];
    opt.adam_step(
        (cdae_core::cascade::NetRef::Encoder, 0, false),
        &mut p,
        &[1.0],
    )
    .map_err(|e| e.to_string())?;
    expect(
        (p[0] + 0.1 / (1.0 + 1e-8)).abs() < 1e-15,
        &format!("step landed at {}", p[0]),
    )
}

fn residual_wiring() -> Result<(), String> {
    let model: CascadeModel<f64> =
        CascadeModel::build(Arch::from_str("RCDAE").unwrap(), 3, 5, 16, 13).unwrap();
    let mut rng = SeededRng::new(17);
    let x = random_matrix(&mut rng, 4, 16);
    let mut tape = Tape::new();
    let xl = tape.leaf(&x);
    let out = forward_cascade(&mut tape, &model, &xl, None).map_err(|e| e.to_string())?;
    let mut acc = vec![0.0f64; x.len()];
    for r in &out.residuals {
        for (a, &b) in acc.iter_mut().zip(r.data()) {
            *a += b;
        }
    }
    expect(
        out.y.data().iter().zip(&acc).all(|(a, b)| a - b == 0.0),
        "y_N != sum of residuals",
    )
}

fn normalization_roundtrip() -> Result<(), String> {
    for v in 0..=255u8 {
        if denormalize(normalize::<f64>(v)) != v {
            return Err(format!("byte {v} does not round-trip"));
        }
    }
    Ok(())
}

fn collapse_identity() -> Result<(), String> {
    let train_set = sample::train().truncated(200);
    let config = TrainConfig {
        epochs: 2,
        stages: 1,
        batch_size: 50,
        latent_dim: 8,
        seed: 21,
        ..TrainConfig::default()
    };
    let histories: Vec<Vec<u64>> = [Arch::Ae, Arch::Gcdae]
        .iter()
        .map(|&arch| {
            let mut model: CascadeModel<f64> =
                CascadeModel::build(arch, 1, config.latent_dim, 784, config.seed).unwrap();
            train(&mut model, &train_set, &config)
                .unwrap()
                .records
                .iter()
                .map(|r| r.loss.to_bits())
                .collect()
        })
        .collect();
    expect(histories[0] == histories[1], "loss histories differ")
}
