//! Variational autoencoder over one-hot address grids.
//!
//! Encoder: two gated convolutional layers with an additive skip around the
//! second, mean-pooled over positions into channel space, then two dense
//! heads for the posterior mean and log variance. Decoder: dense expansion
//! back to a position×symbol grid, one gated convolutional layer, a
//! per-position dense map, and row-wise softmax.
//!
//! Candidate generation samples the latent directly from the standard
//! normal prior and decodes each draw to the row-wise argmax symbols.

use indexmap::IndexSet;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::addr6::{encode_onehot, NybbleSeq, OneHotGrid, SeedSet, ALPHABET, NYBBLES};
use crate::neuralcore::{
    gated_conv, AdamConfig, NeuralError, OptimizerState, Real, Tape, Tensor2, Var,
};
use crate::seeding::mix64;

const MODEL_MAGIC: [u8; 4] = *b"V6FM";
const MODEL_VERSION: u16 = 1;

#[derive(Debug, Error)]
pub enum VaeError {
    #[error("cannot train on an empty seed set")]
    EmptySeedSet,
    #[error("invalid training configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Neural(#[from] NeuralError),
    #[error("corrupt model file: {0}")]
    CorruptModel(String),
    #[error("model file version {found} unsupported (expected {expected})")]
    VersionMismatch { found: u16, expected: u16 },
}

/// Architecture dimensions. The gate channel count must equal the alphabet
/// size: the encoder's residual add and the decoder's per-position head both
/// require convolution outputs in symbol space.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ModelShape {
    pub seq_len: usize,
    pub alphabet: usize,
    pub gate_channels: usize,
    pub latent: usize,
}

impl ModelShape {
    /// Full-size model: 32 positions over 16 symbols, 16 gate channels,
    /// 16 latent dimensions.
    pub fn standard() -> Self {
        ModelShape {
            seq_len: NYBBLES,
            alphabet: ALPHABET,
            gate_channels: ALPHABET,
            latent: 16,
        }
    }

    /// Scaled-down shape for gradient verification; well under 500
    /// parameters so coordinate-wise finite differences stay cheap.
    pub fn reduced() -> Self {
        ModelShape {
            seq_len: 4,
            alphabet: 4,
            gate_channels: 4,
            latent: 4,
        }
    }

    pub fn validate(&self) -> Result<(), VaeError> {
        if self.seq_len == 0 || self.alphabet == 0 || self.latent == 0 {
            return Err(VaeError::InvalidConfig("zero model dimension".into()));
        }
        if self.gate_channels != self.alphabet {
            return Err(VaeError::InvalidConfig(format!(
                "gate channels {} must equal alphabet {}",
                self.gate_channels, self.alphabet
            )));
        }
        Ok(())
    }

    /// Shapes of the trainable tensors in canonical order.
    fn tensor_shapes(&self) -> [(usize, usize); 14] {
        let (l, a, g, d) = (self.seq_len, self.alphabet, self.gate_channels, self.latent);
        [
            (3 * a, 2 * g), // encoder conv 1 kernels
            (1, 2 * g),     // encoder conv 1 bias
            (3 * g, 2 * g), // encoder conv 2 kernels
            (1, 2 * g),     // encoder conv 2 bias
            (g, d),         // mu head weights
            (1, d),         // mu head bias
            (g, d),         // log-var head weights
            (1, d),         // log-var head bias
            (d, l * a),     // decoder expansion weights
            (1, l * a),     // decoder expansion bias
            (3 * a, 2 * g), // decoder conv kernels
            (1, 2 * g),     // decoder conv bias
            (g, a),         // output head weights
            (1, a),         // output head bias
        ]
    }

    pub fn param_count(&self) -> usize {
        self.tensor_shapes().iter().map(|(r, c)| r * c).sum()
    }
}

/// All trainable tensors of one model.
#[derive(Clone, Debug, PartialEq)]
pub struct VaeParams<F> {
    pub shape: ModelShape,
    /// 14 tensors in the canonical order of `ModelShape::tensor_shapes`.
    tensors: Vec<Tensor2<F>>,
}

impl<F: Real> VaeParams<F> {
    /// Seeded scaled-uniform initialization for the convolutional stacks;
    /// biases and the whole latent pathway (posterior heads, decoder
    /// expansion) start at zero. The posterior therefore begins exactly on
    /// the prior and the decoder begins z-independent, so latent usage
    /// grows only where reconstruction demands it instead of having to
    /// unlearn noise injected at init.
    pub fn init(shape: ModelShape, rng_seed: u64) -> Result<Self, VaeError> {
        shape.validate()?;
        const LATENT_PATHWAY: [usize; 3] = [4, 6, 8]; // mu, log-var, expansion weights
        let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
        let tensors = shape
            .tensor_shapes()
            .iter()
            .enumerate()
            .map(|(i, &(r, c))| {
                if r == 1 || LATENT_PATHWAY.contains(&i) {
                    Tensor2::zeros(r, c)
                } else {
                    crate::neuralcore::glorot_uniform(r, c, &mut rng)
                }
            })
            .collect();
        Ok(VaeParams { shape, tensors })
    }

    pub fn zeros(shape: ModelShape) -> Result<Self, VaeError> {
        shape.validate()?;
        let tensors = shape
            .tensor_shapes()
            .iter()
            .map(|&(r, c)| Tensor2::zeros(r, c))
            .collect();
        Ok(VaeParams { shape, tensors })
    }

    pub fn tensors(&self) -> &[Tensor2<F>] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor2<F>] {
        &mut self.tensors
    }

    pub fn from_tensors(shape: ModelShape, tensors: Vec<Tensor2<F>>) -> Result<Self, VaeError> {
        shape.validate()?;
        let expected = shape.tensor_shapes();
        if tensors.len() != expected.len() {
            return Err(VaeError::InvalidConfig(format!(
                "expected {} tensors, got {}",
                expected.len(),
                tensors.len()
            )));
        }
        for (t, &(r, c)) in tensors.iter().zip(expected.iter()) {
            if t.shape() != (r, c) {
                return Err(VaeError::InvalidConfig(format!(
                    "tensor shape {:?} does not match expected {:?}",
                    t.shape(),
                    (r, c)
                )));
            }
        }
        Ok(VaeParams { shape, tensors })
    }

    pub fn param_count(&self) -> usize {
        self.shape.param_count()
    }

    pub fn convert<G: Real>(&self) -> VaeParams<G> {
        VaeParams {
            shape: self.shape,
            tensors: self.tensors.iter().map(Tensor2::convert).collect(),
        }
    }

}

/// Staged parameter leaves on a tape, in canonical order.
struct ParamVars {
    vars: Vec<Var>,
}

impl ParamVars {
    fn stage<F: Real>(tape: &mut Tape<F>, params: &VaeParams<F>) -> Self {
        ParamVars {
            vars: params.tensors.iter().map(|t| tape.leaf(t.clone())).collect(),
        }
    }

    fn from_vars(vars: &[Var]) -> Self {
        ParamVars {
            vars: vars.to_vec(),
        }
    }
}

fn dense<F: Real>(tape: &mut Tape<F>, x: Var, w: Var, b: Var) -> Result<Var, NeuralError> {
    let prod = tape.matmul(x, w)?;
    tape.add_row_broadcast(prod, b)
}

/// Encoder pipeline: gated conv, gated conv with skip, mean pool, heads.
fn build_encoder<F: Real>(
    tape: &mut Tape<F>,
    pv: &ParamVars,
    x: Var,
) -> Result<(Var, Var), NeuralError> {
    let h1 = gated_conv(tape, pv.vars[0], pv.vars[1], x)?;
    let h2_conv = gated_conv(tape, pv.vars[2], pv.vars[3], h1)?;
    let h2 = tape.add(h2_conv, h1)?;
    let pooled = tape.mean_rows(h2);
    let mu = dense(tape, pooled, pv.vars[4], pv.vars[5])?;
    let log_var = dense(tape, pooled, pv.vars[6], pv.vars[7])?;
    Ok((mu, log_var))
}

/// Decoder pipeline: dense expansion, reshape to a grid, gated conv,
/// per-position head, row softmax.
fn build_decoder<F: Real>(
    tape: &mut Tape<F>,
    pv: &ParamVars,
    shape: ModelShape,
    z: Var,
) -> Result<Var, NeuralError> {
    let expanded = dense(tape, z, pv.vars[8], pv.vars[9])?;
    let grid = tape.reshape(expanded, shape.seq_len, shape.alphabet)?;
    let h = gated_conv(tape, pv.vars[10], pv.vars[11], grid)?;
    let logits = dense(tape, h, pv.vars[12], pv.vars[13])?;
    Ok(tape.softmax_rows(logits))
}

/// Latent draw: z = μ + ε·exp(½·logσ²) recorded on the tape.
fn build_reparameterize<F: Real>(
    tape: &mut Tape<F>,
    mu: Var,
    log_var: Var,
    eps: Var,
) -> Result<Var, NeuralError> {
    let half = tape.scale(log_var, 0.5);
    let sigma = tape.exp(half);
    let scaled = tape.mul(eps, sigma)?;
    tape.add(mu, scaled)
}

struct ExampleGraph {
    j_xent: Var,
    j_kl: Var,
    j_vae: Var,
}

/// Full per-example objective: reconstruction cross-entropy summed over the
/// grid plus the KL of the posterior from the prior.
fn build_example_loss<F: Real>(
    tape: &mut Tape<F>,
    pv: &ParamVars,
    shape: ModelShape,
    x: &Tensor2<F>,
    eps: &Tensor2<F>,
) -> Result<ExampleGraph, NeuralError> {
    let xv = tape.leaf(x.clone());
    let ev = tape.leaf(eps.clone());
    let (mu, log_var) = build_encoder(tape, pv, xv)?;
    let z = build_reparameterize(tape, mu, log_var, ev)?;
    let y = build_decoder(tape, pv, shape, z)?;
    let j_xent = tape.bce_sum(y, x)?;
    let j_kl = tape.kl_sum(mu, log_var)?;
    let j_vae = tape.add(j_xent, j_kl)?;
    Ok(ExampleGraph {
        j_xent,
        j_kl,
        j_vae,
    })
}

/// Builds the mean loss of a batch on one tape from pre-staged parameter
/// leaves; exposed shape for gradient verification harnesses.
pub fn build_batch_loss<F: Real>(
    tape: &mut Tape<F>,
    param_vars: &[Var],
    shape: ModelShape,
    batch: &[(Tensor2<F>, Tensor2<F>)],
) -> Result<Var, NeuralError> {
    assert!(!batch.is_empty(), "batch must be non-empty");
    let pv = ParamVars::from_vars(param_vars);
    let mut total: Option<Var> = None;
    for (x, eps) in batch {
        let g = build_example_loss(tape, &pv, shape, x, eps)?;
        total = Some(match total {
            None => g.j_vae,
            Some(t) => tape.add(t, g.j_vae)?,
        });
    }
    Ok(tape.scale(total.unwrap(), 1.0 / batch.len() as f64))
}

/// One-hot grid as a numeric tensor.
pub fn grid_to_tensor<F: Real>(grid: &OneHotGrid) -> Tensor2<F> {
    let mut t = Tensor2::zeros(NYBBLES, ALPHABET);
    for r in 0..NYBBLES {
        for c in 0..ALPHABET {
            if grid.get(r, c) != 0 {
                t.set(r, c, F::one());
            }
        }
    }
    t
}

/// Posterior parameters for one input grid.
pub fn encode<F: Real>(
    params: &VaeParams<F>,
    grid: &OneHotGrid,
) -> Result<(Tensor2<F>, Tensor2<F>), VaeError> {
    let mut tape = Tape::new();
    let pv = ParamVars::stage(&mut tape, params);
    let x = grid_to_tensor::<F>(grid);
    let xv = tape.leaf(x);
    let (mu, log_var) = build_encoder(&mut tape, &pv, xv)?;
    Ok((tape.value(mu).clone(), tape.value(log_var).clone()))
}

/// μ, logσ², the prior draw, and the resulting z.
#[derive(Clone, Debug, PartialEq)]
pub struct LatentSample<F> {
    pub mu: Tensor2<F>,
    pub log_var: Tensor2<F>,
    pub eps: Tensor2<F>,
    pub z: Tensor2<F>,
}

impl<F: Real> LatentSample<F> {
    pub fn new(mu: Tensor2<F>, log_var: Tensor2<F>, eps: Tensor2<F>) -> Result<Self, VaeError> {
        let z = reparameterize(&mu, &log_var, &eps)?;
        Ok(LatentSample {
            mu,
            log_var,
            eps,
            z,
        })
    }
}

/// z = μ + ε·σ with σ = exp(½·logσ²), elementwise.
pub fn reparameterize<F: Real>(
    mu: &Tensor2<F>,
    log_var: &Tensor2<F>,
    eps: &Tensor2<F>,
) -> Result<Tensor2<F>, VaeError> {
    if mu.shape() != log_var.shape() || mu.shape() != eps.shape() {
        return Err(NeuralError::ShapeMismatch {
            op: "reparameterize",
            left: mu.shape(),
            right: eps.shape(),
        }
        .into());
    }
    let half = F::from_f64(0.5);
    let mut z = mu.clone();
    for ((zv, &lv), &ev) in z
        .data_mut()
        .iter_mut()
        .zip(log_var.data())
        .zip(eps.data())
    {
        *zv += ev * (half * lv).exp();
    }
    Ok(z)
}

/// Decodes one latent vector to a row-stochastic grid.
pub fn decode<F: Real>(params: &VaeParams<F>, z: &Tensor2<F>) -> Result<Tensor2<F>, VaeError> {
    if z.shape() != (1, params.shape.latent) {
        return Err(NeuralError::ShapeMismatch {
            op: "decode",
            left: z.shape(),
            right: (1, params.shape.latent),
        }
        .into());
    }
    let mut tape = Tape::new();
    let pv = ParamVars::stage(&mut tape, params);
    let zv = tape.leaf(z.clone());
    let y = build_decoder(&mut tape, &pv, params.shape, zv)?;
    Ok(tape.value(y).clone())
}

/// Reconstruction, divergence, and total objective values.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossBreakdown {
    pub j_xent: f64,
    pub j_kl: f64,
    pub j_vae: f64,
}

/// Evaluates the objective for one example.
pub fn loss<F: Real>(
    x: &OneHotGrid,
    y: &Tensor2<F>,
    mu: &Tensor2<F>,
    log_var: &Tensor2<F>,
) -> Result<LossBreakdown, VaeError> {
    let target = grid_to_tensor::<F>(x);
    let mut tape = Tape::new();
    let yv = tape.leaf(y.clone());
    let mv = tape.leaf(mu.clone());
    let lv = tape.leaf(log_var.clone());
    let j_xent = tape.bce_sum(yv, &target)?;
    let j_kl = tape.kl_sum(mv, lv)?;
    let j_vae = tape.add(j_xent, j_kl)?;
    Ok(LossBreakdown {
        j_xent: tape.scalar(j_xent)?,
        j_kl: tape.scalar(j_kl)?,
        j_vae: tape.scalar(j_vae)?,
    })
}

/// Training hyperparameters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub rng_seed: u64,
    /// Stop after this many epochs without total-loss improvement.
    pub patience: Option<usize>,
    /// Prior-noise draws averaged per example visit. One draw is the plain
    /// stochastic objective; more draws estimate the same expectation with
    /// less gradient noise, which tiny seed sets need to anneal the
    /// posterior all the way onto the prior.
    pub latent_draws: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 128,
            epochs: 20,
            learning_rate: 1e-3,
            rng_seed: 0,
            patience: None,
            latent_draws: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), VaeError> {
        if self.batch_size == 0 {
            return Err(VaeError::InvalidConfig("batch_size must be positive".into()));
        }
        if self.latent_draws == 0 {
            return Err(VaeError::InvalidConfig(
                "latent_draws must be positive".into(),
            ));
        }
        if self.learning_rate <= 0.0 || !self.learning_rate.is_finite() {
            return Err(VaeError::InvalidConfig(format!(
                "learning_rate {} must be positive",
                self.learning_rate
            )));
        }
        if let Some(0) = self.patience {
            return Err(VaeError::InvalidConfig("patience must be positive".into()));
        }
        Ok(())
    }
}

/// Per-example gradient work item: averages the objective over the given
/// prior draws on one tape, then returns gradients in canonical tensor
/// order plus the averaged loss values.
fn example_grads(
    params: &VaeParams<f32>,
    x: &Tensor2<f32>,
    draws: &[Tensor2<f32>],
) -> Result<(Vec<Tensor2<f32>>, LossBreakdown), VaeError> {
    let mut tape = Tape::new();
    let pv = ParamVars::stage(&mut tape, params);
    let mut breakdown = LossBreakdown {
        j_xent: 0.0,
        j_kl: 0.0,
        j_vae: 0.0,
    };
    let mut total: Option<Var> = None;
    for eps in draws {
        let g = build_example_loss(&mut tape, &pv, params.shape, x, eps)?;
        breakdown.j_xent += tape.scalar(g.j_xent)?;
        breakdown.j_kl += tape.scalar(g.j_kl)?;
        breakdown.j_vae += tape.scalar(g.j_vae)?;
        total = Some(match total {
            None => g.j_vae,
            Some(t) => tape.add(t, g.j_vae)?,
        });
    }
    let k = draws.len() as f64;
    breakdown.j_xent /= k;
    breakdown.j_kl /= k;
    breakdown.j_vae /= k;
    let mean = tape.scale(total.expect("at least one draw"), 1.0 / k);
    let mut grads = tape.backward(mean)?;
    let out = pv
        .vars
        .iter()
        .zip(params.tensors())
        .map(|(v, t)| {
            grads
                .take(*v)
                .unwrap_or_else(|| Tensor2::zeros(t.rows(), t.cols()))
        })
        .collect();
    Ok((out, breakdown))
}

fn normal_tensor(rows: usize, cols: usize, seed: u64) -> Tensor2<f32> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = (0..rows * cols)
        .map(|_| {
            let v: f64 = rng.sample(StandardNormal);
            v as f32
        })
        .collect();
    Tensor2::new(rows, cols, data).expect("shape fixed")
}

/// Trains a standard-shape model with shuffled mini-batches and the
/// adaptive-moment optimizer. Deterministic for a given seed: batch order,
/// prior draws, and the gradient reduction order are all fixed, and
/// per-example work parallelizes without affecting the result.
pub fn train(
    seeds: &SeedSet,
    cfg: &TrainConfig,
) -> Result<(VaeParams<f32>, Vec<LossBreakdown>), VaeError> {
    cfg.validate()?;
    if seeds.is_empty() {
        return Err(VaeError::EmptySeedSet);
    }
    let shape = ModelShape::standard();
    let mut params = VaeParams::<f32>::init(shape, mix64(&[cfg.rng_seed, 0x1417]))?;
    let mut optimizer = OptimizerState::new(
        AdamConfig {
            learning_rate: cfg.learning_rate,
            ..AdamConfig::default()
        },
        params.tensors(),
    );

    let inputs: Vec<Tensor2<f32>> = seeds
        .iter()
        .map(|s| grid_to_tensor(&encode_onehot(s)))
        .collect();
    let mut order: Vec<usize> = (0..inputs.len()).collect();
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(mix64(&[cfg.rng_seed, 0x5f17]));

    let mut history = Vec::with_capacity(cfg.epochs);
    let mut best = f64::INFINITY;
    let mut stale = 0usize;

    for epoch in 0..cfg.epochs {
        use rand::seq::SliceRandom;
        order.shuffle(&mut shuffle_rng);

        let mut epoch_sum = LossBreakdown {
            j_xent: 0.0,
            j_kl: 0.0,
            j_vae: 0.0,
        };
        for (batch_no, batch) in order.chunks(cfg.batch_size).enumerate() {
            let results: Vec<(Vec<Tensor2<f32>>, LossBreakdown)> = batch
                .par_iter()
                .enumerate()
                .map(|(slot, &idx)| {
                    let draws: Vec<Tensor2<f32>> = (0..cfg.latent_draws)
                        .map(|draw| {
                            let eps_seed = mix64(&[
                                cfg.rng_seed,
                                0xe95,
                                epoch as u64,
                                batch_no as u64,
                                slot as u64,
                                draw as u64,
                            ]);
                            normal_tensor(1, shape.latent, eps_seed)
                        })
                        .collect();
                    example_grads(&params, &inputs[idx], &draws)
                })
                .collect::<Result<_, _>>()?;

            let mut mean_grads: Vec<Tensor2<f32>> = params
                .tensors()
                .iter()
                .map(|t| Tensor2::zeros(t.rows(), t.cols()))
                .collect();
            for (grads, breakdown) in &results {
                for (acc, g) in mean_grads.iter_mut().zip(grads) {
                    acc.add_assign(g)?;
                }
                epoch_sum.j_xent += breakdown.j_xent;
                epoch_sum.j_kl += breakdown.j_kl;
                epoch_sum.j_vae += breakdown.j_vae;
            }
            let inv = 1.0 / batch.len() as f32;
            for g in &mut mean_grads {
                g.scale_assign(inv);
            }
            optimizer.step(params.tensors_mut(), &mean_grads)?;
        }

        let n = inputs.len() as f64;
        let epoch_mean = LossBreakdown {
            j_xent: epoch_sum.j_xent / n,
            j_kl: epoch_sum.j_kl / n,
            j_vae: epoch_sum.j_vae / n,
        };
        history.push(epoch_mean);

        if let Some(patience) = cfg.patience {
            if epoch_mean.j_vae < best {
                best = epoch_mean.j_vae;
                stale = 0;
            } else {
                stale += 1;
                if stale >= patience {
                    let _ = epoch;
                    break;
                }
            }
        }
    }
    Ok((params, history))
}

/// Draws `n` latent vectors from the prior, decodes each to its argmax
/// symbols, and returns the distinct candidates in draw order.
pub fn generate(
    params: &VaeParams<f32>,
    n: usize,
    rng_seed: u64,
) -> Result<Vec<NybbleSeq>, VaeError> {
    assert!(n >= 1, "sampling count must be at least 1");
    let shape = params.shape;
    if shape.seq_len != NYBBLES || shape.alphabet != ALPHABET {
        return Err(VaeError::InvalidConfig(format!(
            "generation needs the standard {NYBBLES}x{ALPHABET} shape, got {}x{}",
            shape.seq_len, shape.alphabet
        )));
    }
    let candidates: Vec<NybbleSeq> = (0..n)
        .into_par_iter()
        .map(|draw| {
            let eps = normal_tensor(1, shape.latent, mix64(&[rng_seed, 0x9e4, draw as u64]));
            let y = decode(params, &eps)?;
            let mut symbols = [0u8; NYBBLES];
            for (r, slot) in symbols.iter_mut().enumerate() {
                *slot = y.argmax_row(r) as u8;
            }
            Ok(NybbleSeq::new(symbols).expect("argmax indices are valid symbols"))
        })
        .collect::<Result<_, VaeError>>()?;
    let distinct: IndexSet<NybbleSeq> = candidates.into_iter().collect();
    Ok(distinct.into_iter().collect())
}

/// Serializes parameters: magic, version, dimensions, per-tensor shape
/// table, 32-bit little-endian values, trailing content digest.
pub fn save_params(params: &VaeParams<f32>) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(&MODEL_MAGIC);
    out.extend_from_slice(&MODEL_VERSION.to_le_bytes());
    for dim in [
        params.shape.seq_len,
        params.shape.alphabet,
        params.shape.gate_channels,
        params.shape.latent,
    ] {
        out.extend_from_slice(&(dim as u32).to_le_bytes());
    }
    out.extend_from_slice(&(params.tensors().len() as u32).to_le_bytes());
    for t in params.tensors() {
        out.extend_from_slice(&(t.rows() as u32).to_le_bytes());
        out.extend_from_slice(&(t.cols() as u32).to_le_bytes());
    }
    for t in params.tensors() {
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    let digest = Sha256::digest(&out);
    out.extend_from_slice(&digest);
    out
}

struct ByteReader<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl<'a> ByteReader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], VaeError> {
        if self.at + n > self.bytes.len() {
            return Err(VaeError::CorruptModel(format!(
                "truncated at byte {} (wanted {n} more)",
                self.at
            )));
        }
        let s = &self.bytes[self.at..self.at + n];
        self.at += n;
        Ok(s)
    }

    fn u16(&mut self) -> Result<u16, VaeError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32, VaeError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f32(&mut self) -> Result<f32, VaeError> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

/// Parses and checksum-validates a serialized model.
pub fn load_params(bytes: &[u8]) -> Result<VaeParams<f32>, VaeError> {
    const DIGEST_LEN: usize = 32;
    if bytes.len() < DIGEST_LEN {
        return Err(VaeError::CorruptModel("shorter than a digest".into()));
    }
    let (body, stored_digest) = bytes.split_at(bytes.len() - DIGEST_LEN);
    let digest = Sha256::digest(body);
    if digest.as_slice() != stored_digest {
        return Err(VaeError::CorruptModel("content digest mismatch".into()));
    }

    let mut r = ByteReader { bytes: body, at: 0 };
    if r.take(4)? != MODEL_MAGIC {
        return Err(VaeError::CorruptModel("bad magic bytes".into()));
    }
    let version = r.u16()?;
    if version != MODEL_VERSION {
        return Err(VaeError::VersionMismatch {
            found: version,
            expected: MODEL_VERSION,
        });
    }
    let shape = ModelShape {
        seq_len: r.u32()? as usize,
        alphabet: r.u32()? as usize,
        gate_channels: r.u32()? as usize,
        latent: r.u32()? as usize,
    };
    shape
        .validate()
        .map_err(|e| VaeError::CorruptModel(format!("bad dimensions: {e}")))?;
    let count = r.u32()? as usize;
    let expected = shape.tensor_shapes();
    if count != expected.len() {
        return Err(VaeError::CorruptModel(format!(
            "tensor count {count} does not match architecture"
        )));
    }
    let mut shapes = Vec::with_capacity(count);
    for &(er, ec) in &expected {
        let rows = r.u32()? as usize;
        let cols = r.u32()? as usize;
        if (rows, cols) != (er, ec) {
            return Err(VaeError::CorruptModel(format!(
                "tensor shape {rows}x{cols} does not match architecture {er}x{ec}"
            )));
        }
        shapes.push((rows, cols));
    }
    let mut tensors = Vec::with_capacity(count);
    for (rows, cols) in shapes {
        let mut data = Vec::with_capacity(rows * cols);
        for _ in 0..rows * cols {
            data.push(r.f32()?);
        }
        tensors.push(Tensor2::new(rows, cols, data).expect("validated shape"));
    }
    if r.at != body.len() {
        return Err(VaeError::CorruptModel(format!(
            "{} trailing bytes",
            body.len() - r.at
        )));
    }
    VaeParams::from_tensors(shape, tensors)
        .map_err(|e| VaeError::CorruptModel(format!("inconsistent tensors: {e}")))
}
