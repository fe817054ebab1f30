//! CBOW with negative sampling: loss, analytic gradient and the SGD step.
//!
//! For context ids `C`, target `t` and negatives `N`, with
//! `h = mean(in[c] for c in C)`:
//!
//! ```text
//! loss = -ln σ(out[t]·h) - Σ_{n∈N} ln σ(-out[n]·h)
//! ```
//!
//! The kernel is generic over [`Weights`] so the same code runs on plain
//! matrices (`[Cell<F>]`, any float width) and on the shared atomic storage
//! used by lock-free multi-worker training.

use std::cell::Cell;
use std::sync::atomic::{AtomicU32, Ordering};

use num_traits::{Float, NumCast, One, Zero};

/// Row-major parameter storage addressed by flat index.
pub trait Weights {
    type Real: Float;
    fn get(&self, i: usize) -> Self::Real;
    fn set(&self, i: usize, v: Self::Real);
}

impl<F: Float> Weights for [Cell<F>] {
    type Real = F;

    #[inline]
    fn get(&self, i: usize) -> F {
        self[i].get()
    }

    #[inline]
    fn set(&self, i: usize, v: F) {
        self[i].set(v)
    }
}

/// `f32` cell shared between training threads. Relaxed loads and stores;
/// concurrent updates may overwrite each other.
#[derive(Debug, Default)]
#[repr(transparent)]
pub struct AtomicF32(AtomicU32);

impl AtomicF32 {
    pub fn new(v: f32) -> Self {
        Self(AtomicU32::new(v.to_bits()))
    }

    pub fn into_inner(self) -> f32 {
        f32::from_bits(self.0.into_inner())
    }
}

impl Weights for [AtomicF32] {
    type Real = f32;

    #[inline]
    fn get(&self, i: usize) -> f32 {
        f32::from_bits(self[i].0.load(Ordering::Relaxed))
    }

    #[inline]
    fn set(&self, i: usize, v: f32) {
        self[i].0.store(v.to_bits(), Ordering::Relaxed)
    }
}

/// One training example.
#[derive(Debug, Clone, Copy)]
pub struct CbowExample<'a> {
    pub context: &'a [u32],
    pub target: u32,
    pub negatives: &'a [u32],
}

impl CbowExample<'_> {
    /// `(id, label)` pairs: the target with label 1, then each negative with 0.
    fn samples(&self) -> impl Iterator<Item = (u32, bool)> + '_ {
        std::iter::once((self.target, true)).chain(self.negatives.iter().map(|&n| (n, false)))
    }
}

pub fn sigmoid<F: Float>(x: F) -> F {
    if x >= F::zero() {
        F::one() / (F::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (F::one() + e)
    }
}

/// `ln(1 + e^x)` without overflow.
pub fn softplus<F: Float>(x: F) -> F {
    x.max(F::zero()) + (-x.abs()).exp().ln_1p()
}

fn mean_context<W: Weights + ?Sized>(input: &W, dim: usize, context: &[u32], h: &mut [W::Real]) {
    h.iter_mut().for_each(|x| *x = W::Real::zero());
    for &c in context {
        let row = c as usize * dim;
        for (k, x) in h.iter_mut().enumerate() {
            *x = *x + input.get(row + k);
        }
    }
    let n = <W::Real as NumCast>::from(context.len()).unwrap();
    h.iter_mut().for_each(|x| *x = *x / n);
}

fn dot_row<W: Weights + ?Sized>(m: &W, row: usize, v: &[W::Real]) -> W::Real {
    v.iter()
        .enumerate()
        .fold(W::Real::zero(), |acc, (k, &x)| acc + m.get(row + k) * x)
}

pub fn cbow_loss<W: Weights + ?Sized>(
    input: &W,
    output: &W,
    dim: usize,
    ex: CbowExample<'_>,
) -> W::Real {
    assert!(!ex.context.is_empty(), "CBOW context must be non-empty");
    let mut h = vec![W::Real::zero(); dim];
    mean_context(input, dim, ex.context, &mut h);
    ex.samples().fold(W::Real::zero(), |loss, (id, positive)| {
        let s = dot_row(output, id as usize * dim, &h);
        loss + if positive { softplus(-s) } else { softplus(s) }
    })
}

/// Analytic gradient of [`cbow_loss`].
#[derive(Debug, Clone, PartialEq)]
pub struct CbowGradient<F> {
    pub loss: F,
    /// dL/dh. Each context occurrence receives `hidden / |context|`.
    pub hidden: Vec<F>,
    /// dL/d out[id] for the target and each negative, in sample order.
    pub outputs: Vec<(u32, Vec<F>)>,
}

impl<F: Float> CbowGradient<F> {
    /// Dense `(d input, d output)` matrices of shape `vocab_size × dim`.
    pub fn to_dense(&self, context: &[u32], vocab_size: usize, dim: usize) -> (Vec<F>, Vec<F>) {
        let mut d_in = vec![F::zero(); vocab_size * dim];
        let mut d_out = vec![F::zero(); vocab_size * dim];
        let n = <F as NumCast>::from(context.len()).unwrap();
        for &c in context {
            for k in 0..dim {
                let i = c as usize * dim + k;
                d_in[i] = d_in[i] + self.hidden[k] / n;
            }
        }
        for (id, g) in &self.outputs {
            let row = *id as usize * dim;
            for (d, &x) in d_out[row..row + dim].iter_mut().zip(g) {
                *d = *d + x;
            }
        }
        (d_in, d_out)
    }
}

pub fn cbow_gradient<W: Weights + ?Sized>(
    input: &W,
    output: &W,
    dim: usize,
    ex: CbowExample<'_>,
) -> CbowGradient<W::Real> {
    assert!(!ex.context.is_empty(), "CBOW context must be non-empty");
    let mut h = vec![W::Real::zero(); dim];
    mean_context(input, dim, ex.context, &mut h);
    let mut hidden = vec![W::Real::zero(); dim];
    let mut outputs = Vec::with_capacity(1 + ex.negatives.len());
    let mut loss = W::Real::zero();
    for (id, positive) in ex.samples() {
        let row = id as usize * dim;
        let s = dot_row(output, row, &h);
        let label = if positive { W::Real::one() } else { W::Real::zero() };
        loss = loss + if positive { softplus(-s) } else { softplus(s) };
        let g = sigmoid(s) - label;
        for (k, x) in hidden.iter_mut().enumerate() {
            *x = *x + g * output.get(row + k);
        }
        outputs.push((id, h.iter().map(|&x| g * x).collect()));
    }
    CbowGradient {
        loss,
        hidden,
        outputs,
    }
}

/// Reusable buffers for [`cbow_step_with`].
#[derive(Debug, Clone)]
pub struct Scratch<F> {
    h: Vec<F>,
    grad_h: Vec<F>,
    coeffs: Vec<F>,
}

impl<F: Float> Scratch<F> {
    pub fn new(dim: usize) -> Self {
        Self {
            h: vec![F::zero(); dim],
            grad_h: vec![F::zero(); dim],
            coeffs: Vec::new(),
        }
    }
}

/// One gradient-descent step on a single example. Returns the loss before the
/// update.
pub fn cbow_step<W: Weights + ?Sized>(
    input: &W,
    output: &W,
    dim: usize,
    ex: CbowExample<'_>,
    lr: W::Real,
) -> W::Real {
    cbow_step_with(input, output, dim, ex, lr, &mut Scratch::new(dim))
}

/// [`cbow_step`] with caller-provided buffers.
///
/// The whole gradient is formed from pre-update parameters before anything is
/// written, so repeated ids (a negative equal to the target, a context id
/// listed twice) receive the exact summed gradient.
pub fn cbow_step_with<W: Weights + ?Sized>(
    input: &W,
    output: &W,
    dim: usize,
    ex: CbowExample<'_>,
    lr: W::Real,
    scratch: &mut Scratch<W::Real>,
) -> W::Real {
    debug_assert!(!ex.context.is_empty());
    let Scratch { h, grad_h, coeffs } = scratch;
    mean_context(input, dim, ex.context, h);
    grad_h.iter_mut().for_each(|x| *x = W::Real::zero());
    coeffs.clear();

    let mut loss = W::Real::zero();
    for (id, positive) in ex.samples() {
        let row = id as usize * dim;
        let s = dot_row(output, row, h);
        let label = if positive { W::Real::one() } else { W::Real::zero() };
        loss = loss + if positive { softplus(-s) } else { softplus(s) };
        let g = sigmoid(s) - label;
        for (k, x) in grad_h.iter_mut().enumerate() {
            *x = *x + g * output.get(row + k);
        }
        coeffs.push(g);
    }

    for ((id, _), &g) in ex.samples().zip(coeffs.iter()) {
        let row = id as usize * dim;
        let scale = lr * g;
        for (k, &x) in h.iter().enumerate() {
            output.set(row + k, output.get(row + k) - scale * x);
        }
    }

    let scale = lr / <W::Real as NumCast>::from(ex.context.len()).unwrap();
    for &c in ex.context {
        let row = c as usize * dim;
        for (k, &g) in grad_h.iter().enumerate() {
            input.set(row + k, input.get(row + k) - scale * g);
        }
    }
    loss
}
