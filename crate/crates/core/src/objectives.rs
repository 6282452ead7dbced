//! Training objectives for every architecture family.
//!
//! All losses are differentiable scalars built on the tape. Serial
//! stage training treats the previous stage's output as a constant, so
//! each function takes whatever tensors the caller already placed on
//! the tape and never decides freezing policy itself; the trainer does
//! that by choosing which parameters the optimizer updates.
//!
//! Adversarial objectives follow the min-max value
//! `V = α·M(ln DC(real)) + β·M(ln(1 - DC(fake)))`: the discriminator
//! step minimizes `-V`, the generator step minimizes the
//! non-saturating surrogate `-β·M(ln DC(fake))`. The hard
//! reconstruction constraints of the adversarial formulations are
//! folded in as a penalty `λ·‖·‖²`.

use crate::autodiff::{Tape, Tensor};
use crate::error::{Error, Result};
use crate::nn::{forward, NetworkState};
use crate::real::Real;
use crate::rng::SeededRng;

/// Floor applied inside logarithms so adversarial losses stay finite.
pub const LOG_EPS: f64 = 1e-12;

/// Weights of the adversarial objectives: `alpha`/`beta` scale the
/// discriminator value terms (uniform across stages), `lambda` weighs
/// the reconstruction penalty that stands in for the hard constraint.
#[derive(Clone, Copy, Debug, serde::Serialize, serde::Deserialize)]
pub struct AdvWeights<T> {
    pub alpha: T,
    pub beta: T,
    pub lambda: T,
}

impl<T: Real> Default for AdvWeights<T> {
    fn default() -> Self {
        AdvWeights {
            alpha: T::ONE,
            beta: T::ONE,
            lambda: T::from_f64(10.0),
        }
    }
}

/// Prior over the latent space that encoders are pushed to match.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PriorKind {
    StandardNormal,
}

#[derive(Clone, Copy, Debug)]
pub struct PriorSpec {
    pub kind: PriorKind,
    pub dim: usize,
}

impl PriorSpec {
    pub fn standard_normal(dim: usize) -> Self {
        PriorSpec {
            kind: PriorKind::StandardNormal,
            dim,
        }
    }

    /// Draws a `batch × dim` sample.
    pub fn sample<T: Real>(&self, rng: &mut SeededRng, batch: usize) -> Tensor<T> {
        let data = (0..batch * self.dim)
            .map(|_| T::from_f64(rng.normal()))
            .collect();
        Tensor::matrix(batch, self.dim, data).unwrap()
    }
}

fn check_stage(stage: usize, n_stages: usize) -> Result<()> {
    if stage == 0 || stage > n_stages {
        return Err(Error::Config(format!(
            "stage {stage} out of range 1..={n_stages}"
        )));
    }
    Ok(())
}

/// Plain reconstruction cost `‖y - x‖²` (row-averaged).
pub fn loss_ae<T: Real>(tape: &mut Tape<T>, x: &Tensor<T>, y: &Tensor<T>) -> Result<Tensor<T>> {
    tape.sq_l2(y, x)
}

/// Stage objective of the direct cascade: `‖y_n - x‖²`. With one stage
/// this is exactly [`loss_ae`]. Gradient flow into earlier stages is
/// cut by the trainer, which feeds `y_{n-1}` in detached.
pub fn loss_cascade_stage<T: Real>(
    tape: &mut Tape<T>,
    stage: usize,
    n_stages: usize,
    x: &Tensor<T>,
    y_n: &Tensor<T>,
) -> Result<Tensor<T>> {
    check_stage(stage, n_stages)?;
    tape.sq_l2(y_n, x)
}

/// Stage objective of the residual cascade: `‖(x - y_{n-1}) - r_n‖²`
/// with `y_0 = 0`.
pub fn loss_residual_stage<T: Real>(
    tape: &mut Tape<T>,
    x: &Tensor<T>,
    y_prev: &Tensor<T>,
    r_n: &Tensor<T>,
) -> Result<Tensor<T>> {
    let target = tape.sub(x, y_prev)?;
    tape.sq_l2(&target, r_n)
}

/// Discriminator half of the min-max: minimizes
/// `-(α·M(ln DC(real)) + β·M(ln(1 - DC(fake))))`.
pub fn adversarial_d_loss<T: Real>(
    tape: &mut Tape<T>,
    dc_real: &Tensor<T>,
    dc_fake: &Tensor<T>,
    alpha: T,
    beta: T,
) -> Result<Tensor<T>> {
    let eps = T::from_f64(LOG_EPS);
    let ln_real = tape.log_eps(dc_real, eps)?;
    let one_minus_fake = tape.affine(dc_fake, -T::ONE, T::ONE)?;
    let ln_fake = tape.log_eps(&one_minus_fake, eps)?;
    let m_real = tape.mean(&ln_real)?;
    let m_fake = tape.mean(&ln_fake)?;
    let a = tape.scale(&m_real, alpha)?;
    let b = tape.scale(&m_fake, beta)?;
    let v = tape.add(&a, &b)?;
    tape.scale(&v, -T::ONE)
}

/// Non-saturating generator half: minimizes `-β·M(ln DC(fake))`.
pub fn adversarial_g_loss<T: Real>(
    tape: &mut Tape<T>,
    dc_fake: &Tensor<T>,
    beta: T,
) -> Result<Tensor<T>> {
    let eps = T::from_f64(LOG_EPS);
    let ln_fake = tape.log_eps(dc_fake, eps)?;
    let m = tape.mean(&ln_fake)?;
    tape.scale(&m, -beta)
}

fn check_unit_interval<T: Real>(what: &'static str, t: &Tensor<T>) -> Result<()> {
    if t.data().iter().any(|&v| v < T::ZERO || v > T::ONE) {
        return Err(Error::domain(
            "adversarial",
            format!("{what} outside (0,1)"),
        ));
    }
    Ok(())
}

/// Both halves of the adversarial pair over precomputed discriminator
/// outputs.
pub fn loss_adversarial_pair<T: Real>(
    tape: &mut Tape<T>,
    dc_real: &Tensor<T>,
    dc_fake: &Tensor<T>,
    alpha: T,
    beta: T,
) -> Result<(Tensor<T>, Tensor<T>)> {
    check_unit_interval("discriminator output", dc_real)?;
    check_unit_interval("discriminator output", dc_fake)?;
    let d = adversarial_d_loss(tape, dc_real, dc_fake, alpha, beta)?;
    let g = adversarial_g_loss(tape, dc_fake, beta)?;
    Ok((d, g))
}

/// Adversarial and generator losses of one direct-cascade stage with an
/// image-space discriminator: the discriminator separates `x` from
/// `y_n`, the generator minimizes the non-saturating term plus
/// `λ·‖y_n - x‖²`. The fake is detached on the discriminator side so a
/// discriminator step never perturbs the generator.
pub fn loss_acdae_stage<T: Real>(
    tape: &mut Tape<T>,
    stage: usize,
    n_stages: usize,
    x: &Tensor<T>,
    y_n: &Tensor<T>,
    dc: &NetworkState<T>,
    w: &AdvWeights<T>,
) -> Result<(Tensor<T>, Tensor<T>)> {
    check_stage(stage, n_stages)?;
    let (dc_real, _) = forward(dc, tape, x)?;
    let y_const = {
        let d = y_n.detach();
        tape.leaf(&d)
    };
    let (dc_fake_d, _) = forward(dc, tape, &y_const)?;
    let d_loss = adversarial_d_loss(tape, &dc_real, &dc_fake_d, w.alpha, w.beta)?;

    let (dc_fake_g, _) = forward(dc, tape, y_n)?;
    let g_adv = adversarial_g_loss(tape, &dc_fake_g, w.beta)?;
    let recon = tape.sq_l2(y_n, x)?;
    let penalty = tape.scale(&recon, w.lambda)?;
    let g_loss = tape.add(&g_adv, &penalty)?;
    Ok((d_loss, g_loss))
}

/// Residual-space variant: the discriminator separates the true
/// residual `x - y_{n-1}` from the predicted residual `r_n`; the
/// reconstruction penalty is the residual stage cost.
pub fn loss_racdae_stage<T: Real>(
    tape: &mut Tape<T>,
    stage: usize,
    n_stages: usize,
    x: &Tensor<T>,
    y_prev: &Tensor<T>,
    r_n: &Tensor<T>,
    dc: &NetworkState<T>,
    w: &AdvWeights<T>,
) -> Result<(Tensor<T>, Tensor<T>)> {
    check_stage(stage, n_stages)?;
    let true_residual = tape.sub(x, y_prev)?;
    let (dc_real, _) = forward(dc, tape, &true_residual)?;
    let r_const = {
        let d = r_n.detach();
        tape.leaf(&d)
    };
    let (dc_fake_d, _) = forward(dc, tape, &r_const)?;
    let d_loss = adversarial_d_loss(tape, &dc_real, &dc_fake_d, w.alpha, w.beta)?;

    let (dc_fake_g, _) = forward(dc, tape, r_n)?;
    let g_adv = adversarial_g_loss(tape, &dc_fake_g, w.beta)?;
    let recon = tape.sq_l2(&true_residual, r_n)?;
    let penalty = tape.scale(&recon, w.lambda)?;
    let g_loss = tape.add(&g_adv, &penalty)?;
    Ok((d_loss, g_loss))
}

/// Latent-prior matching: the discriminator scores prior samples `z_h`
/// as real and encodings `z` as fake; encoder and decoder jointly
/// minimize the non-saturating term plus `λ·‖y - x‖²`.
pub fn loss_aae<T: Real>(
    tape: &mut Tape<T>,
    x: &Tensor<T>,
    y: &Tensor<T>,
    z: &Tensor<T>,
    z_h: &Tensor<T>,
    dc: &NetworkState<T>,
    w: &AdvWeights<T>,
) -> Result<(Tensor<T>, Tensor<T>)> {
    let (dc_real, _) = forward(dc, tape, z_h)?;
    let z_const = {
        let d = z.detach();
        tape.leaf(&d)
    };
    let (dc_fake_d, _) = forward(dc, tape, &z_const)?;
    let d_loss = adversarial_d_loss(tape, &dc_real, &dc_fake_d, w.alpha, w.beta)?;

    let (dc_fake_g, _) = forward(dc, tape, z)?;
    let g_adv = adversarial_g_loss(tape, &dc_fake_g, w.beta)?;
    let recon = tape.sq_l2(y, x)?;
    let penalty = tape.scale(&recon, w.lambda)?;
    let eg_loss = tape.add(&g_adv, &penalty)?;
    Ok((d_loss, eg_loss))
}

/// Stage objective of the latent-adversarial cascade: stage 1 is the
/// latent min-max with the reconstruction penalty; later stages are
/// pure reconstruction. Returns `(d_loss, g_loss)` with `d_loss`
/// absent beyond stage 1.
#[allow(clippy::too_many_arguments)]
pub fn loss_cdaae_stage<T: Real>(
    tape: &mut Tape<T>,
    stage: usize,
    n_stages: usize,
    x: &Tensor<T>,
    y_n: &Tensor<T>,
    z: Option<&Tensor<T>>,
    z_h: Option<&Tensor<T>>,
    latent_dc: Option<&NetworkState<T>>,
    w: &AdvWeights<T>,
) -> Result<(Option<Tensor<T>>, Tensor<T>)> {
    check_stage(stage, n_stages)?;
    if stage == 1 {
        let (z, z_h, dc) = match (z, z_h, latent_dc) {
            (Some(z), Some(zh), Some(dc)) => (z, zh, dc),
            _ => {
                return Err(Error::Config(
                    "stage 1 needs the latent code, prior sample and latent discriminator".into(),
                ))
            }
        };
        let (d, eg) = loss_aae(tape, x, y_n, z, z_h, dc, w)?;
        Ok((Some(d), eg))
    } else {
        Ok((None, tape.sq_l2(y_n, x)?))
    }
}

/// KL divergence of `N(μ, e^{logvar})` from the standard normal,
/// summed over dimensions and averaged over the batch:
/// `mean_i 0.5·Σ_j (μ² + e^{logvar} - logvar - 1)`.
pub fn kl_gauss<T: Real>(
    tape: &mut Tape<T>,
    mu: &Tensor<T>,
    logvar: &Tensor<T>,
) -> Result<Tensor<T>> {
    let mu2 = tape.mul(mu, mu)?;
    let var = tape.exp(logvar)?;
    let s = tape.add(&mu2, &var)?;
    let s = tape.sub(&s, logvar)?;
    let s = tape.affine(&s, T::ONE, -T::ONE)?;
    let total = tape.sum(&s)?;
    tape.scale(&total, T::from_f64(0.5 / mu.rows() as f64))
}

/// Reparameterized latent sample `z = μ + e^{logvar/2} ⊙ η` with the
/// noise supplied as a constant, so gradients reach `μ` and `logvar`.
pub fn reparameterize<T: Real>(
    tape: &mut Tape<T>,
    mu: &Tensor<T>,
    logvar: &Tensor<T>,
    eta: &Tensor<T>,
) -> Result<Tensor<T>> {
    let half = tape.affine(logvar, T::from_f64(0.5), T::ZERO)?;
    let sigma = tape.exp(&half)?;
    let scaled = tape.mul(&sigma, eta)?;
    tape.add(mu, &scaled)
}

/// Stage objective of the variational cascade: stage 1 is
/// `α·KL + β·‖y_1 - x‖²`, later stages are pure reconstruction.
#[allow(clippy::too_many_arguments)]
pub fn loss_cdvae_stage<T: Real>(
    tape: &mut Tape<T>,
    stage: usize,
    n_stages: usize,
    x: &Tensor<T>,
    y_n: &Tensor<T>,
    mu: Option<&Tensor<T>>,
    logvar: Option<&Tensor<T>>,
    alpha: T,
    beta: T,
) -> Result<Tensor<T>> {
    check_stage(stage, n_stages)?;
    let recon = tape.sq_l2(y_n, x)?;
    if stage == 1 {
        let (mu, logvar) = match (mu, logvar) {
            (Some(m), Some(l)) => (m, l),
            _ => return Err(Error::Config("stage 1 needs (μ, logvar)".into())),
        };
        let kl = kl_gauss(tape, mu, logvar)?;
        let a = tape.scale(&kl, alpha)?;
        let b = tape.scale(&recon, beta)?;
        tape.add(&a, &b)
    } else {
        Ok(recon)
    }
}

/// Latent-distribution regularizer: biased squared MMD between the
/// encoded batch and a prior batch under the inverse-multiquadric
/// kernel with `C = 2·dim`.
pub fn mmd_regularizer<T: Real>(
    tape: &mut Tape<T>,
    z: &Tensor<T>,
    z_h: &Tensor<T>,
) -> Result<Tensor<T>> {
    let dim = z.cols();
    tape.mmd_imq(z, z_h, T::from_f64(2.0 * dim as f64))
}

/// Stage objective of the MMD-regularized cascade: stage 1 is
/// `α·MMD²(z, z_h) + β·‖y_1 - x‖²`, later stages are pure
/// reconstruction.
#[allow(clippy::too_many_arguments)]
pub fn loss_cdwae_stage<T: Real>(
    tape: &mut Tape<T>,
    stage: usize,
    n_stages: usize,
    x: &Tensor<T>,
    y_n: &Tensor<T>,
    z: Option<&Tensor<T>>,
    z_h: Option<&Tensor<T>>,
    alpha: T,
    beta: T,
) -> Result<Tensor<T>> {
    check_stage(stage, n_stages)?;
    let recon = tape.sq_l2(y_n, x)?;
    if stage == 1 {
        let (z, z_h) = match (z, z_h) {
            (Some(z), Some(zh)) => (z, zh),
            _ => return Err(Error::Config("stage 1 needs (z, z_h)".into())),
        };
        let reg = mmd_regularizer(tape, z, z_h)?;
        let a = tape.scale(&reg, alpha)?;
        let b = tape.scale(&recon, beta)?;
        tape.add(&a, &b)
    } else {
        Ok(recon)
    }
}
