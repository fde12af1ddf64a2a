//! A small fully connected network with hand-written backpropagation.
//!
//! The first layer takes a dense block (pose and timestep features) and a
//! sparse block (taxel activations, mostly zero) and treats them as one
//! concatenated input. All weights live in one flat vector, which keeps the
//! optimizer and the checkpoint format trivial.

use rand::Rng;
use serde::{Deserialize, Serialize};

/// Scalar type the network can run in.
pub trait Real:
    Copy
    + Default
    + PartialOrd
    + std::fmt::Debug
    + std::ops::Add<Output = Self>
    + std::ops::Sub<Output = Self>
    + std::ops::Mul<Output = Self>
    + std::ops::AddAssign
    + Send
    + Sync
    + 'static
{
    const ZERO: Self;
    fn from_f64(v: f64) -> Self;
    fn to_f64(self) -> f64;

    /// `C ← A·B + beta·C` with arbitrary strides (`m×k` times `k×n`).
    #[allow(clippy::too_many_arguments)]
    fn gemm(m: usize, k: usize, n: usize, a: &[Self], a_strides: (isize, isize), b: &[Self], b_strides: (isize, isize), beta: Self, c: &mut [Self]);
}

macro_rules! impl_real {
    ($t:ty, $gemm:path) => {
        impl Real for $t {
            const ZERO: Self = 0.0;
            fn from_f64(v: f64) -> Self {
                v as $t
            }
            fn to_f64(self) -> f64 {
                self as f64
            }
            fn gemm(m: usize, k: usize, n: usize, a: &[Self], (rsa, csa): (isize, isize), b: &[Self], (rsb, csb): (isize, isize), beta: Self, c: &mut [Self]) {
                if m == 0 || n == 0 {
                    return;
                }
                assert!(c.len() >= m * n);
                assert!(k == 0 || (a.len() as isize) > (m as isize - 1) * rsa + (k as isize - 1) * csa);
                assert!(k == 0 || (b.len() as isize) > (k as isize - 1) * rsb + (n as isize - 1) * csb);
                // SAFETY: the asserts above bound every index the kernel touches.
                unsafe {
                    $gemm(m, k, n, 1.0, a.as_ptr(), rsa, csa, b.as_ptr(), rsb, csb, beta, c.as_mut_ptr(), n as isize, 1);
                }
            }
        }
    };
}

impl_real!(f32, matrixmultiply::sgemm);
impl_real!(f64, matrixmultiply::dgemm);

/// Layer sizes of the network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpShape {
    pub dense_in: usize,
    pub sparse_in: usize,
    pub hidden: usize,
    /// Number of hidden layers.
    pub depth: usize,
    pub out: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Layer {
    inputs: usize,
    outputs: usize,
    w: usize,
    b: usize,
}

impl MlpShape {
    fn layers(&self) -> Vec<Layer> {
        let mut sizes = vec![self.dense_in + self.sparse_in];
        sizes.extend(std::iter::repeat_n(self.hidden, self.depth));
        sizes.push(self.out);
        let mut off = 0;
        sizes
            .windows(2)
            .map(|w| {
                let l = Layer { inputs: w[0], outputs: w[1], w: off, b: off + w[0] * w[1] };
                off += w[0] * w[1] + w[1];
                l
            })
            .collect()
    }

    pub fn num_params(&self) -> usize {
        self.layers().iter().map(|l| l.inputs * l.outputs + l.outputs).sum()
    }
}

/// Sparse input row: `(index, value)` pairs into the sparse block.
pub type SparseRow<R> = [(u32, R)];

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp<R: Real> {
    shape: MlpShape,
    layers: Vec<Layer>,
    pub params: Vec<R>,
}

/// Intermediate activations kept for the backward pass.
pub struct Activations<R> {
    /// Post-ReLU output of each hidden layer.
    hidden: Vec<Vec<R>>,
    pub output: Vec<R>,
}

impl<R: Real> Mlp<R> {
    /// Uniform initialization in `±1/√fan_in`.
    pub fn new<G: Rng + ?Sized>(shape: MlpShape, rng: &mut G) -> Self {
        let layers = shape.layers();
        let mut params = vec![R::ZERO; shape.num_params()];
        for l in &layers {
            let bound = 1.0 / (l.inputs as f64).sqrt();
            for p in &mut params[l.w..l.b + l.outputs] {
                *p = R::from_f64(rng.random_range(-bound..bound));
            }
        }
        Self { shape, layers, params }
    }

    pub fn from_params(shape: MlpShape, params: Vec<R>) -> Self {
        assert_eq!(params.len(), shape.num_params(), "parameter count does not match the shape");
        Self { shape, layers: shape.layers(), params }
    }

    pub fn shape(&self) -> MlpShape {
        self.shape
    }

    pub fn cast<S: Real>(&self) -> Mlp<S> {
        Mlp::from_params(self.shape, self.params.iter().map(|p| S::from_f64(p.to_f64())).collect())
    }

    /// First-layer pre-activation contribution of a sparse row plus the bias.
    pub fn sparse_bias(&self, row: &SparseRow<R>) -> Vec<R> {
        let l = self.layers[0];
        let h = l.outputs;
        let mut out = self.params[l.b..l.b + h].to_vec();
        for &(idx, v) in row {
            let w = &self.params[l.w + (self.shape.dense_in + idx as usize) * h..][..h];
            for (o, &wi) in out.iter_mut().zip(w) {
                *o += v * wi;
            }
        }
        out
    }

    /// Forward pass for a batch of `n` rows.
    pub fn forward(&self, n: usize, dense: &[R], sparse: &[&SparseRow<R>]) -> Activations<R> {
        debug_assert_eq!(dense.len(), n * self.shape.dense_in);
        debug_assert_eq!(sparse.len(), n);
        let first = self.layers[0];
        let h = first.outputs;
        let mut z = vec![R::ZERO; n * h];
        for (b, row) in sparse.iter().enumerate() {
            z[b * h..(b + 1) * h].copy_from_slice(&self.sparse_bias(row));
        }
        self.first_dense(n, dense, &mut z);
        self.finish(n, z)
    }

    /// Forward pass where every row shares the same first-layer offset
    /// (observation and bias folded in by the caller).
    pub fn forward_shared(&self, n: usize, dense: &[R], offset: &[R]) -> Activations<R> {
        let h = self.layers[0].outputs;
        let mut z = Vec::with_capacity(n * h);
        for _ in 0..n {
            z.extend_from_slice(offset);
        }
        self.first_dense(n, dense, &mut z);
        self.finish(n, z)
    }

    fn first_dense(&self, n: usize, dense: &[R], z: &mut [R]) {
        let l = self.layers[0];
        let d = self.shape.dense_in;
        let h = l.outputs;
        R::gemm(n, d, h, dense, (d as isize, 1), &self.params[l.w..l.w + d * h], (h as isize, 1), R::from_f64(1.0), z);
    }

    fn finish(&self, n: usize, mut z: Vec<R>) -> Activations<R> {
        let mut hidden = Vec::with_capacity(self.layers.len() - 1);
        for l in &self.layers[1..] {
            relu(&mut z);
            let mut next = Vec::with_capacity(n * l.outputs);
            for _ in 0..n {
                next.extend_from_slice(&self.params[l.b..l.b + l.outputs]);
            }
            R::gemm(
                n,
                l.inputs,
                l.outputs,
                &z,
                (l.inputs as isize, 1),
                &self.params[l.w..l.b],
                (l.outputs as isize, 1),
                R::from_f64(1.0),
                &mut next,
            );
            hidden.push(std::mem::replace(&mut z, next));
        }
        Activations { hidden, output: z }
    }

    /// Accumulates `∂loss/∂params` into `grads` given `∂loss/∂output`.
    pub fn backward(&self, n: usize, dense: &[R], sparse: &[&SparseRow<R>], acts: &Activations<R>, grad_out: &[R], grads: &mut [R]) {
        let mut g = grad_out.to_vec();
        for (li, l) in self.layers.iter().enumerate().rev() {
            let (ni, no) = (l.inputs, l.outputs);
            // Bias gradient: column sums.
            for row in g.chunks_exact(no) {
                for (gb, &v) in grads[l.b..l.b + no].iter_mut().zip(row) {
                    *gb += v;
                }
            }
            if li == 0 {
                let d = self.shape.dense_in;
                // Dense block: Xᵀ·G.
                R::gemm(d, n, no, dense, (1, d as isize), &g, (no as isize, 1), R::from_f64(1.0), &mut grads[l.w..l.w + d * no]);
                for (b, row) in sparse.iter().enumerate() {
                    let gr = &g[b * no..(b + 1) * no];
                    for &(idx, v) in row.iter() {
                        let w = &mut grads[l.w + (d + idx as usize) * no..][..no];
                        for (gw, &gv) in w.iter_mut().zip(gr) {
                            *gw += v * gv;
                        }
                    }
                }
                break;
            }
            let input = &acts.hidden[li - 1];
            R::gemm(ni, n, no, input, (1, ni as isize), &g, (no as isize, 1), R::from_f64(1.0), &mut grads[l.w..l.b]);
            // Propagate: G·Wᵀ, masked by the ReLU of the layer input.
            let mut prev = vec![R::ZERO; n * ni];
            R::gemm(n, no, ni, &g, (no as isize, 1), &self.params[l.w..l.b], (1, no as isize), R::ZERO, &mut prev);
            for (p, &a) in prev.iter_mut().zip(input) {
                if !(a > R::ZERO) {
                    *p = R::ZERO;
                }
            }
            g = prev;
        }
    }
}

fn relu<R: Real>(v: &mut [R]) {
    for x in v {
        if !(*x > R::ZERO) {
            *x = R::ZERO;
        }
    }
}

/// Adam with bias correction.
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<f32>,
    v: Vec<f32>,
    t: i32,
}

impl Adam {
    pub fn new(n: usize, lr: f64) -> Self {
        Self { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, m: vec![0.0; n], v: vec![0.0; n], t: 0 }
    }

    pub fn step(&mut self, params: &mut [f32], grads: &[f32]) {
        self.t += 1;
        let (b1, b2) = (self.beta1 as f32, self.beta2 as f32);
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        let step = (self.lr * c2.sqrt() / c1) as f32;
        let eps = (self.eps * c2.sqrt()) as f32;
        for (((p, &g), m), v) in params.iter_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            *p -= step * *m / (v.sqrt() + eps);
        }
    }
}
