//! Tanh MLP generator and a shared-trunk discriminator with method-specific
//! heads, built on the tape.
//!
//! Each network keeps its parameters in one flat vector so that optimiser
//! updates are a single slice operation. A forward pass binds every weight
//! tensor as a fresh tape leaf; [`Bound::grads`] reads the gradients back in
//! the same flat order.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::{AutodiffError, Tape, Tensor, Var};
use crate::method::Method;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("hidden width must be at least 1")]
    ZeroWidth,
    #[error("input has {got} features, network expects {expected}")]
    InputDim { expected: usize, got: usize },
    #[error("parameter vector has {got} entries, network expects {expected}")]
    ParamCount { expected: usize, got: usize },
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
}

pub type Result<T> = std::result::Result<T, ModelError>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub hidden: usize,
    /// Number of hidden layers.
    pub depth: usize,
    pub latent_dim: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            hidden: 10,
            depth: 2,
            latent_dim: 4,
        }
    }
}

/// Output layout of a discriminator head.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeadKind {
    Binary,
    Kway,
    Kplus1,
    MultiDisc,
    LabelAug,
    BinaryPlusLabelAug,
}

impl HeadKind {
    /// Widths of the linear output layers this kind contributes.
    pub fn head_widths(self, k: usize) -> Vec<usize> {
        match self {
            HeadKind::Binary => vec![1],
            HeadKind::Kway => vec![k],
            HeadKind::Kplus1 => vec![k + 1],
            HeadKind::MultiDisc => vec![1; k],
            HeadKind::LabelAug => vec![2 * k],
            HeadKind::BinaryPlusLabelAug => vec![1, 2 * k],
        }
    }

    pub fn output_width(self, k: usize) -> usize {
        self.head_widths(k).iter().sum()
    }
}

/// Head kinds each method's discriminator carries, in output order.
pub fn heads_for(method: Method) -> Vec<HeadKind> {
    match method {
        Method::Gan | Method::Dagan | Method::DaganPlus => vec![HeadKind::Binary],
        Method::Ssgan => vec![HeadKind::Binary, HeadKind::Kway],
        Method::SsganMs => vec![HeadKind::Binary, HeadKind::Kplus1],
        Method::DaganMd => vec![HeadKind::MultiDisc],
        Method::SsganLa => vec![HeadKind::LabelAug],
        Method::SsganLaPlus => vec![HeadKind::BinaryPlusLabelAug],
    }
}

/// Dense layers `widths[i] -> widths[i+1]` at a fixed offset of a flat
/// parameter vector; weights row-major `[in, out]` then bias `[out]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Stack {
    widths: Vec<usize>,
    offset: usize,
    activate_output: bool,
}

impl Stack {
    fn len(&self) -> usize {
        self.widths.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    fn init<R: Rng + ?Sized>(&self, params: &mut [f64], rng: &mut R) {
        let mut at = self.offset;
        for w in self.widths.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            for p in &mut params[at..at + fan_in * fan_out] {
                *p = rng.random_range(-limit..=limit);
            }
            at += fan_in * fan_out;
            params[at..at + fan_out].fill(0.0);
            at += fan_out;
        }
    }

    fn forward(&self, tape: &mut Tape, leaves: &[Var], mut x: Var) -> Result<Var> {
        let n = tape.shape(x)[0];
        let ones = tape.constant(Tensor::filled(vec![n, 1], 1.0));
        let layers = self.widths.len() - 1;
        for (i, pair) in leaves.chunks_exact(2).enumerate() {
            let xw = tape.matmul(x, pair[0])?;
            let bias = tape.matmul(ones, pair[1])?;
            x = tape.add(xw, bias)?;
            if i + 1 < layers || self.activate_output {
                x = tape.tanh(x)?;
            }
        }
        Ok(x)
    }

    fn shapes(&self) -> impl Iterator<Item = [usize; 2]> + '_ {
        self.widths.windows(2).flat_map(|w| [[w[0], w[1]], [1, w[1]]])
    }
}

/// Parameters bound to a tape for one forward/backward pass.
#[derive(Debug, Clone)]
pub struct Bound {
    leaves: Vec<Var>,
}

impl Bound {
    /// Gradients of all parameters in flat order.
    pub fn grads(&self, tape: &Tape) -> Vec<f64> {
        self.leaves.iter().flat_map(|&v| tape.grad(v).iter().copied()).collect()
    }
}

fn bind(tape: &mut Tape, params: &[f64], shapes: impl Iterator<Item = [usize; 2]>, trainable: bool) -> Bound {
    let mut at = 0;
    let leaves = shapes
        .map(|[r, c]| {
            let vals = params[at..at + r * c].to_vec();
            at += r * c;
            let t = Tensor::matrix(r, c, vals).expect("layout matches");
            if trainable {
                tape.leaf(t)
            } else {
                tape.constant(t)
            }
        })
        .collect();
    Bound { leaves }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorNet {
    latent_dim: usize,
    stack: Stack,
    params: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscriminatorNet {
    kinds: Vec<HeadKind>,
    k: usize,
    trunk: Stack,
    heads: Vec<Stack>,
    params: Vec<f64>,
}

fn hidden_widths(input: usize, cfg: &ModelConfig) -> Result<Vec<usize>> {
    if cfg.hidden == 0 {
        return Err(ModelError::ZeroWidth);
    }
    let mut w = vec![input];
    w.extend(std::iter::repeat_n(cfg.hidden, cfg.depth));
    Ok(w)
}

/// Generator `latent_dim -> hidden^depth -> data_dim`, linear output.
pub fn build_generator<R: Rng + ?Sized>(data_dim: usize, cfg: &ModelConfig, rng: &mut R) -> Result<GeneratorNet> {
    let mut widths = hidden_widths(cfg.latent_dim, cfg)?;
    widths.push(data_dim);
    let stack = Stack {
        widths,
        offset: 0,
        activate_output: false,
    };
    let mut params = vec![0.0; stack.len()];
    stack.init(&mut params, rng);
    Ok(GeneratorNet {
        latent_dim: cfg.latent_dim,
        stack,
        params,
    })
}

/// Discriminator with a tanh trunk `data_dim -> hidden^depth` shared by
/// linear heads.
pub fn build_discriminator<R: Rng + ?Sized>(
    kinds: &[HeadKind],
    k: usize,
    data_dim: usize,
    cfg: &ModelConfig,
    rng: &mut R,
) -> Result<DiscriminatorNet> {
    let widths = hidden_widths(data_dim, cfg)?;
    let top = *widths.last().expect("input width present");
    let trunk = Stack {
        widths,
        offset: 0,
        activate_output: true,
    };
    let mut offset = trunk.len();
    let mut heads = Vec::new();
    for kind in kinds {
        for w in kind.head_widths(k) {
            let s = Stack {
                widths: vec![top, w],
                offset,
                activate_output: false,
            };
            offset += s.len();
            heads.push(s);
        }
    }
    let mut params = vec![0.0; offset];
    trunk.init(&mut params, rng);
    for h in &heads {
        h.init(&mut params, rng);
    }
    Ok(DiscriminatorNet {
        kinds: kinds.to_vec(),
        k,
        trunk,
        heads,
        params,
    })
}

fn check_input(tape: &Tape, x: Var, expected: usize) -> Result<()> {
    let shape = tape.shape(x);
    let got = shape.get(1).copied().unwrap_or(0);
    if shape.len() != 2 || got != expected {
        return Err(ModelError::InputDim { expected, got });
    }
    Ok(())
}

fn set_params(dst: &mut Vec<f64>, src: Vec<f64>) -> Result<()> {
    if src.len() != dst.len() {
        return Err(ModelError::ParamCount {
            expected: dst.len(),
            got: src.len(),
        });
    }
    *dst = src;
    Ok(())
}

impl GeneratorNet {
    pub fn latent_dim(&self) -> usize {
        self.latent_dim
    }

    pub fn data_dim(&self) -> usize {
        *self.stack.widths.last().expect("non-empty")
    }

    pub fn widths(&self) -> &[usize] {
        &self.stack.widths
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn set_params(&mut self, params: Vec<f64>) -> Result<()> {
        set_params(&mut self.params, params)
    }

    pub fn bind(&self, tape: &mut Tape) -> Bound {
        bind(tape, &self.params, self.stack.shapes(), true)
    }

    /// Maps latent codes `[n, latent_dim]` to samples `[n, data_dim]`.
    pub fn forward(&self, tape: &mut Tape, bound: &Bound, z: Var) -> Result<Var> {
        check_input(tape, z, self.latent_dim)?;
        self.stack.forward(tape, &bound.leaves, z)
    }

    /// `n` standard-normal latent codes as a constant leaf.
    pub fn sample_latent<R: Rng + ?Sized>(&self, tape: &mut Tape, n: usize, rng: &mut R) -> Var {
        let vals = (0..n * self.latent_dim).map(|_| StandardNormal.sample(rng)).collect();
        tape.constant(Tensor::matrix(n, self.latent_dim, vals).expect("shape matches"))
    }

    /// Draws `n` samples on the tape, differentiable w.r.t. the bound
    /// parameters.
    pub fn generate<R: Rng + ?Sized>(&self, tape: &mut Tape, bound: &Bound, n: usize, rng: &mut R) -> Result<Var> {
        let z = self.sample_latent(tape, n, rng);
        self.forward(tape, bound, z)
    }

    /// `n` samples as a flat row-major buffer, off any training tape.
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<Vec<f64>> {
        let mut tape = Tape::new();
        let bound = self.bind(&mut tape);
        let x = self.generate(&mut tape, &bound, n, rng)?;
        Ok(tape.value(x).to_vec())
    }
}

impl DiscriminatorNet {
    pub fn kinds(&self) -> &[HeadKind] {
        &self.kinds
    }

    pub fn n_transforms(&self) -> usize {
        self.k
    }

    pub fn head_widths(&self) -> Vec<usize> {
        self.heads.iter().map(|h| h.widths[1]).collect()
    }

    pub fn output_width(&self) -> usize {
        self.head_widths().iter().sum()
    }

    pub fn data_dim(&self) -> usize {
        self.trunk.widths[0]
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn set_params(&mut self, params: Vec<f64>) -> Result<()> {
        set_params(&mut self.params, params)
    }

    pub fn bind(&self, tape: &mut Tape) -> Bound {
        let shapes = self
            .trunk
            .shapes()
            .chain(self.heads.iter().flat_map(Stack::shapes))
            .collect::<Vec<_>>();
        bind(tape, &self.params, shapes.into_iter(), true)
    }

    /// Binds the parameters as constants: gradients still flow through the
    /// network to its input, but none are kept for the parameters.
    pub fn bind_frozen(&self, tape: &mut Tape) -> Bound {
        let shapes = self
            .trunk
            .shapes()
            .chain(self.heads.iter().flat_map(Stack::shapes))
            .collect::<Vec<_>>();
        bind(tape, &self.params, shapes.into_iter(), false)
    }

    /// Logits of every head for a batch `[n, data_dim]`, one `[n, width]`
    /// tensor per head in construction order.
    pub fn discriminate(&self, tape: &mut Tape, bound: &Bound, x: Var) -> Result<Vec<Var>> {
        check_input(tape, x, self.data_dim())?;
        let trunk_leaves = 2 * (self.trunk.widths.len() - 1);
        let h = self.trunk.forward(tape, &bound.leaves[..trunk_leaves], x)?;
        self.heads
            .iter()
            .enumerate()
            .map(|(i, head)| {
                let at = trunk_leaves + 2 * i;
                head.forward(tape, &bound.leaves[at..at + 2], h)
            })
            .collect()
    }
}
