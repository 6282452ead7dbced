//! Fully-connected network compositions.
//!
//! Three roles exist: encoders map images to a latent code through two
//! LReLU hidden layers and an unactivated final layer; decoders mirror
//! them and finish with Tanh so outputs stay in (-1,1); discriminators
//! end in a single Sigmoid unit. Hidden widths follow the symmetric
//! 512/256 hourglass.

use std::io::{Read, Write};
use std::path::Path;

use crate::autodiff::{matmul_into, matmul_shape, Tape, Tensor};
use crate::error::{Error, Result};
use crate::real::Real;
use crate::rng::SeededRng;

/// LReLU negative-side slope used everywhere.
pub const LRELU_SLOPE: f64 = 0.2;

/// Hidden widths for the encoder (decoders mirror them).
const HIDDEN_WIDE: usize = 512;
const HIDDEN_NARROW: usize = 256;

const CHECKPOINT_MAGIC: &[u8; 4] = b"CDAE";
const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Activation {
    LRelu,
    Tanh,
    Sigmoid,
    Linear,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Role {
    Encoder,
    Decoder,
    Discriminator,
}

impl Role {
    fn tag(self) -> u8 {
        match self {
            Role::Encoder => 0,
            Role::Decoder => 1,
            Role::Discriminator => 2,
        }
    }

    fn from_tag(tag: u8) -> Result<Self> {
        match tag {
            0 => Ok(Role::Encoder),
            1 => Ok(Role::Decoder),
            2 => Ok(Role::Discriminator),
            other => Err(Error::Checkpoint(format!("unknown role tag {other}"))),
        }
    }

    /// Activation of the last layer for this role.
    fn final_activation(self) -> Activation {
        match self {
            Role::Encoder => Activation::Linear,
            Role::Decoder => Activation::Tanh,
            Role::Discriminator => Activation::Sigmoid,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LayerSpec {
    pub fan_in: usize,
    pub fan_out: usize,
    pub activation: Activation,
}

/// Layer composition of one network.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NetworkSpec {
    pub layers: Vec<LayerSpec>,
    pub role: Role,
}

impl NetworkSpec {
    fn new(role: Role, dims: &[usize]) -> Self {
        let last = dims.len() - 2;
        let layers = dims
            .windows(2)
            .enumerate()
            .map(|(i, w)| LayerSpec {
                fan_in: w[0],
                fan_out: w[1],
                activation: if i == last {
                    role.final_activation()
                } else {
                    Activation::LRelu
                },
            })
            .collect();
        NetworkSpec { layers, role }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].fan_in
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().unwrap().fan_out
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.fan_in * l.fan_out + l.fan_out)
            .sum()
    }

    /// Checks width chaining and the role's final activation.
    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::Spec("network has no layers".into()));
        }
        for pair in self.layers.windows(2) {
            if pair[0].fan_out != pair[1].fan_in {
                return Err(Error::Spec(format!(
                    "layer widths do not chain: {} -> {}",
                    pair[0].fan_out, pair[1].fan_in
                )));
            }
        }
        let last = self.layers.last().unwrap();
        if last.activation != self.role.final_activation() {
            return Err(Error::Spec(format!(
                "{:?} must end with {:?}",
                self.role,
                self.role.final_activation()
            )));
        }
        Ok(())
    }
}

fn check_dims(dims: &[usize]) -> Result<()> {
    if dims.iter().any(|&d| d == 0) {
        return Err(Error::Spec("network dimensions must be positive".into()));
    }
    Ok(())
}

/// Encoder: `input → 512 → 256 → latent`, hidden layers LReLU, latent
/// unactivated so it can match an unbounded prior.
pub fn make_encoder(input_dim: usize, latent_dim: usize) -> Result<NetworkSpec> {
    check_dims(&[input_dim, latent_dim])?;
    Ok(NetworkSpec::new(
        Role::Encoder,
        &[input_dim, HIDDEN_WIDE, HIDDEN_NARROW, latent_dim],
    ))
}

/// Decoder: `input → 256 → 512 → output`, final Tanh. The first
/// decoder of a cascade consumes the latent code; later decoders
/// consume the previous reconstruction.
pub fn make_decoder(input_dim: usize, output_dim: usize) -> Result<NetworkSpec> {
    check_dims(&[input_dim, output_dim])?;
    Ok(NetworkSpec::new(
        Role::Decoder,
        &[input_dim, HIDDEN_NARROW, HIDDEN_WIDE, output_dim],
    ))
}

/// Discriminator: `input → 512 → 256 → 1`, final Sigmoid. The input
/// may be a latent code, an image, or a residual.
pub fn make_discriminator(input_dim: usize) -> Result<NetworkSpec> {
    check_dims(&[input_dim])?;
    Ok(NetworkSpec::new(
        Role::Discriminator,
        &[input_dim, HIDDEN_WIDE, HIDDEN_NARROW, 1],
    ))
}

#[derive(Clone, Debug)]
pub struct Layer<T> {
    /// `fan_in × fan_out`, row-major.
    pub weight: Tensor<T>,
    /// Length `fan_out`.
    pub bias: Tensor<T>,
    pub activation: Activation,
}

/// Learnable parameters of one network.
#[derive(Clone, Debug)]
pub struct NetworkState<T> {
    pub layers: Vec<Layer<T>>,
    pub role: Role,
}

/// Glorot-uniform initialization: weights from
/// `U(-√(6/(fan_in+fan_out)), +√(6/(fan_in+fan_out)))`, zero biases.
/// Deterministic for a given seed.
pub fn init_params<T: Real>(spec: &NetworkSpec, seed: u64) -> Result<NetworkState<T>> {
    spec.validate()?;
    let mut rng = SeededRng::new(seed);
    let layers = spec
        .layers
        .iter()
        .map(|l| {
            let bound = (6.0 / (l.fan_in + l.fan_out) as f64).sqrt();
            let data: Vec<T> = (0..l.fan_in * l.fan_out)
                .map(|_| T::from_f64(rng.uniform_symmetric(bound)))
                .collect();
            Layer {
                weight: Tensor::matrix(l.fan_in, l.fan_out, data).unwrap(),
                bias: Tensor::zeros(vec![l.fan_out]),
                activation: l.activation,
            }
        })
        .collect();
    Ok(NetworkState {
        layers,
        role: spec.role,
    })
}

impl<T: Real> NetworkState<T> {
    pub fn input_dim(&self) -> usize {
        self.layers[0].weight.shape()[0]
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().unwrap().weight.shape()[1]
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weight.len() + l.bias.len())
            .sum()
    }

    /// Spec this state conforms to.
    pub fn spec(&self) -> NetworkSpec {
        NetworkSpec {
            role: self.role,
            layers: self
                .layers
                .iter()
                .map(|l| LayerSpec {
                    fan_in: l.weight.shape()[0],
                    fan_out: l.weight.shape()[1],
                    activation: l.activation,
                })
                .collect(),
        }
    }
}

/// Handles to the parameters of one network registered on a tape, in
/// layer order. Used to pull gradients after backward.
pub struct ParamHandles<T> {
    pub layers: Vec<(Tensor<T>, Tensor<T>)>,
}

/// Runs the network on the tape, recording every op so gradients can
/// flow into both the input and the parameters.
pub fn forward<T: Real>(
    state: &NetworkState<T>,
    tape: &mut Tape<T>,
    input: &Tensor<T>,
) -> Result<(Tensor<T>, ParamHandles<T>)> {
    if input.cols() != state.input_dim() {
        return Err(Error::ShapeMismatch {
            op: "forward",
            lhs: input.shape().to_vec(),
            rhs: vec![input.rows(), state.input_dim()],
        });
    }
    let mut h = input.clone();
    let mut handles = Vec::with_capacity(state.layers.len());
    for layer in &state.layers {
        let w = tape.leaf(&layer.weight);
        let b = tape.leaf(&layer.bias);
        let z = tape.matmul(&h, &w)?;
        let z = tape.add_bias(&z, &b)?;
        h = apply_activation(tape, &z, layer.activation)?;
        handles.push((w, b));
    }
    Ok((h, ParamHandles { layers: handles }))
}

fn apply_activation<T: Real>(
    tape: &mut Tape<T>,
    z: &Tensor<T>,
    act: Activation,
) -> Result<Tensor<T>> {
    Ok(match act {
        Activation::LRelu => tape.lrelu(z, T::from_f64(LRELU_SLOPE))?,
        Activation::Tanh => tape.tanh(z)?,
        Activation::Sigmoid => tape.sigmoid(z)?,
        Activation::Linear => z.clone(),
    })
}

/// Inference forward pass: same arithmetic as [`forward`] but nothing
/// is recorded, for frozen-parameter evaluation and detached stage
/// inputs.
pub fn forward_value<T: Real>(state: &NetworkState<T>, input: &Tensor<T>) -> Result<Tensor<T>> {
    if input.cols() != state.input_dim() {
        return Err(Error::ShapeMismatch {
            op: "forward",
            lhs: input.shape().to_vec(),
            rhs: vec![input.rows(), state.input_dim()],
        });
    }
    let rows = input.rows();
    let mut h = input.detach();
    for layer in &state.layers {
        let (fan_in, fan_out) = (layer.weight.shape()[0], layer.weight.shape()[1]);
        matmul_shape(&[rows, h.cols()], &[fan_in, fan_out])?;
        let mut out = vec![T::ZERO; rows * fan_out];
        matmul_into(
            h.data(),
            &[rows, fan_in],
            layer.weight.data(),
            &[fan_in, fan_out],
            &mut out,
        );
        let bias = layer.bias.data();
        for row in out.chunks_exact_mut(fan_out) {
            for (v, &b) in row.iter_mut().zip(bias) {
                *v += b;
            }
        }
        let slope = T::from_f64(LRELU_SLOPE);
        match layer.activation {
            Activation::LRelu => out
                .iter_mut()
                .for_each(|v| *v = if *v >= T::ZERO { *v } else { *v * slope }),
            Activation::Tanh => out.iter_mut().for_each(|v| *v = v.tanh()),
            Activation::Sigmoid => out
                .iter_mut()
                .for_each(|v| *v = T::ONE / (T::ONE + (-*v).exp())),
            Activation::Linear => {}
        }
        h = Tensor::matrix(rows, fan_out, out)?;
    }
    Ok(h)
}

// ---- checkpoint format -------------------------------------------------
//
// Little-endian binary: magic "CDAE", format version u32, role tag u8,
// layer count u32, then per layer fan_in u32, fan_out u32, row-major
// weights as f64, biases as f64.

pub fn save_checkpoint<T: Real>(state: &NetworkState<T>, path: &Path) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    w.write_all(CHECKPOINT_MAGIC)?;
    w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
    w.write_all(&[state.role.tag()])?;
    w.write_all(&(state.layers.len() as u32).to_le_bytes())?;
    for layer in &state.layers {
        let (fan_in, fan_out) = (layer.weight.shape()[0], layer.weight.shape()[1]);
        w.write_all(&(fan_in as u32).to_le_bytes())?;
        w.write_all(&(fan_out as u32).to_le_bytes())?;
        for v in layer.weight.data() {
            w.write_all(&v.to_f64().to_le_bytes())?;
        }
        for v in layer.bias.data() {
            w.write_all(&v.to_f64().to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn load_checkpoint<T: Real>(path: &Path) -> Result<NetworkState<T>> {
    let mut r = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(Error::Checkpoint(format!("bad magic {magic:?}")));
    }
    let version = read_u32(&mut r)?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported format version {version}"
        )));
    }
    let mut tag = [0u8; 1];
    r.read_exact(&mut tag)?;
    let role = Role::from_tag(tag[0])?;
    let n_layers = read_u32(&mut r)? as usize;
    if n_layers == 0 || n_layers > 64 {
        return Err(Error::Checkpoint(format!(
            "implausible layer count {n_layers}"
        )));
    }
    let mut layers = Vec::with_capacity(n_layers);
    for li in 0..n_layers {
        let fan_in = read_u32(&mut r)? as usize;
        let fan_out = read_u32(&mut r)? as usize;
        if fan_in == 0 || fan_out == 0 {
            return Err(Error::Checkpoint(format!("zero width in layer {li}")));
        }
        let weight = read_f64s(&mut r, fan_in * fan_out)?;
        let bias = read_f64s(&mut r, fan_out)?;
        let activation = if li + 1 == n_layers {
            role.final_activation()
        } else {
            Activation::LRelu
        };
        layers.push(Layer {
            weight: Tensor::matrix(fan_in, fan_out, weight)?,
            bias: Tensor::new(vec![fan_out], bias)?,
            activation,
        });
    }
    let state = NetworkState { layers, role };
    state.spec().validate()?;
    Ok(state)
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_f64s<T: Real>(r: &mut impl Read, n: usize) -> Result<Vec<T>> {
    let mut bytes = vec![0u8; n * 8];
    r.read_exact(&mut bytes)?;
    Ok(bytes
        .chunks_exact(8)
        .map(|c| T::from_f64(f64::from_le_bytes(c.try_into().unwrap())))
        .collect())
}
