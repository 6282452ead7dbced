//! Browser demo bindings.
//!
//! Three interactive surfaces over the bundled sample images, all
//! running in the page at 32-bit precision:
//!
//! - [`Demo`]: build any of the twelve architectures and train it one
//!   epoch at a time, watching per-stage losses, test SSIM and
//!   reconstruction pairs evolve;
//! - [`ssim_of`] + [`add_noise`]: a structural-similarity explorer
//!   over noise amplitude;
//! - [`Demo::decode_latent`] / [`Demo::encode_image`]: drive the
//!   decoder cascade from a hand-edited latent vector.
//!
//! The API sticks to scalars, strings and typed arrays so the same
//! methods compile and test natively.

use std::str::FromStr;

use wasm_bindgen::prelude::*;

use cdae_core::autodiff::Tensor;
use cdae_core::cascade::{reconstruct, Arch, CascadeModel, Composition};
use cdae_core::data::{denormalize, normalize, Dataset};
use cdae_core::metrics::{ssim, SsimParams};
use cdae_core::nn::forward_value;
use cdae_core::rng::SeededRng;
use cdae_core::sample;
use cdae_core::train::{evaluate, train_one_epoch, Optimizer, TrainConfig};

const IMAGE_DIM: usize = 784;

fn err_string(e: cdae_core::Error) -> String {
    e.to_string()
}

/// Names of the selectable architectures, comma separated (handy for
/// building the page's dropdown without duplicating the list in JS).
#[wasm_bindgen]
pub fn arch_names() -> String {
    Arch::ALL
        .iter()
        .map(|a| a.name())
        .collect::<Vec<_>>()
        .join(",")
}

/// Number of bundled demo images (test split).
#[wasm_bindgen]
pub fn sample_count() -> u32 {
    sample::test().count as u32
}

/// One bundled test image as 784 grayscale bytes.
#[wasm_bindgen]
pub fn sample_image(index: u32) -> Result<Vec<u8>, String> {
    let test = sample::test();
    let i = index as usize;
    if i >= test.count {
        return Err(format!("index {i} out of range 0..{}", test.count));
    }
    Ok(test.image(i).to_vec())
}

/// Windowed SSIM between two 28x28 byte images.
#[wasm_bindgen]
pub fn ssim_of(a: &[u8], b: &[u8]) -> Result<f64, String> {
    ssim(a, b, 28, 28, &SsimParams::default()).map_err(err_string)
}

/// Adds seeded Gaussian pixel noise of the given amplitude.
#[wasm_bindgen]
pub fn add_noise(image: &[u8], amplitude: f64, seed: u32) -> Vec<u8> {
    let mut rng = SeededRng::new(u64::from(seed));
    image
        .iter()
        .map(|&v| (f64::from(v) + amplitude * rng.normal()).clamp(0.0, 255.0).round() as u8)
        .collect()
}

/// An interactive training session over the bundled sample set.
#[wasm_bindgen]
pub struct Demo {
    model: CascadeModel<f32>,
    opt: Optimizer<f32>,
    config: TrainConfig,
    train_set: Dataset,
    test_set: Dataset,
    epoch: usize,
}

#[wasm_bindgen]
impl Demo {
    /// Builds a fresh model. `stages` is ignored for the single-stage
    /// architectures.
    #[wasm_bindgen(constructor)]
    pub fn new(arch: &str, stages: u32, latent_dim: u32, seed: u32) -> Result<Demo, String> {
        let arch = Arch::from_str(arch).map_err(err_string)?;
        let stages = if arch.forces_single_stage() {
            1
        } else {
            (stages as usize).max(1)
        };
        let config = TrainConfig {
            epochs: 1,
            stages,
            batch_size: 50,
            learning_rate: 1e-3,
            latent_dim: latent_dim.max(1) as usize,
            seed: u64::from(seed),
            ..TrainConfig::default()
        };
        let model = CascadeModel::build(
            arch,
            stages,
            config.latent_dim,
            IMAGE_DIM,
            config.seed,
        )
        .map_err(err_string)?;
        Ok(Demo {
            model,
            opt: Optimizer::new(config.learning_rate),
            config,
            train_set: sample::train(),
            test_set: sample::test(),
            epoch: 0,
        })
    }

    pub fn arch(&self) -> String {
        self.model.arch.name().to_string()
    }

    pub fn epoch(&self) -> u32 {
        self.epoch as u32
    }

    pub fn stages(&self) -> u32 {
        self.model.n_stages() as u32
    }

    pub fn latent_dim(&self) -> u32 {
        self.model.latent_dim as u32
    }

    /// Runs one epoch and returns the per-stage mean losses.
    pub fn train_epoch(&mut self) -> Result<Vec<f64>, String> {
        self.epoch += 1;
        let records = train_one_epoch(
            &mut self.model,
            &mut self.opt,
            &self.train_set,
            &self.config,
            self.epoch,
        )
        .map_err(err_string)?;
        Ok(records.iter().map(|r| r.loss).collect())
    }

    /// Mean SSIM over the bundled test split.
    pub fn test_ssim(&self) -> Result<f64, String> {
        evaluate(&self.model, &self.test_set).map_err(err_string)
    }

    /// The first `count` test images followed by their current
    /// reconstructions, 784 bytes per image.
    pub fn reconstruction_pairs(&self, count: u32) -> Result<Vec<u8>, String> {
        let count = (count as usize).min(self.test_set.count);
        let mut data = Vec::with_capacity(count * IMAGE_DIM);
        for i in 0..count {
            data.extend(
                self.test_set
                    .image(i)
                    .iter()
                    .map(|&b| normalize::<f32>(b)),
            );
        }
        let x = Tensor::matrix(count, IMAGE_DIM, data).map_err(err_string)?;
        let y = reconstruct(&self.model, &x).map_err(err_string)?;
        let mut out = Vec::with_capacity(2 * count * IMAGE_DIM);
        for i in 0..count {
            out.extend_from_slice(self.test_set.image(i));
        }
        out.extend(y.data().iter().map(|&v| denormalize(v)));
        Ok(out)
    }

    /// Latent code of a test image (the variational form reports μ).
    pub fn encode_image(&self, index: u32) -> Result<Vec<f32>, String> {
        let i = index as usize;
        if i >= self.test_set.count {
            return Err(format!("index {i} out of range 0..{}", self.test_set.count));
        }
        let x = Tensor::matrix(
            1,
            IMAGE_DIM,
            self.test_set
                .image(i)
                .iter()
                .map(|&b| normalize::<f32>(b))
                .collect(),
        )
        .map_err(err_string)?;
        let enc_out = forward_value(&self.model.encoder, &x).map_err(err_string)?;
        Ok(enc_out.data()[..self.model.latent_dim].to_vec())
    }

    /// Decodes a latent vector through the whole cascade and returns
    /// the 784-byte image.
    pub fn decode_latent(&self, z: &[f32]) -> Result<Vec<u8>, String> {
        if z.len() != self.model.latent_dim {
            return Err(format!(
                "latent vector has {} values, expected {}",
                z.len(),
                self.model.latent_dim
            ));
        }
        let mut h = Tensor::matrix(1, z.len(), z.to_vec()).map_err(err_string)?;
        let y = match self.model.arch.composition() {
            Composition::Direct => {
                for dec in &self.model.decoders {
                    h = forward_value(dec, &h).map_err(err_string)?;
                }
                h
            }
            Composition::Residual => {
                let mut y = vec![0.0f32; IMAGE_DIM];
                let mut input = h;
                for (k, dec) in self.model.decoders.iter().enumerate() {
                    let r = forward_value(dec, &input).map_err(err_string)?;
                    for (a, &b) in y.iter_mut().zip(r.data()) {
                        *a += b;
                    }
                    if k + 1 < self.model.decoders.len() {
                        input = Tensor::matrix(1, IMAGE_DIM, y.clone()).map_err(err_string)?;
                    }
                }
                Tensor::matrix(1, IMAGE_DIM, y).map_err(err_string)?
            }
        };
        Ok(y.data().iter().map(|&v| denormalize(v)).collect())
    }
}
