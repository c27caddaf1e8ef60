//! The closed set of loss problems the simulator trains.
//!
//! Three kinds: a deterministic quadratic with optional additive Gaussian
//! gradient noise, binary logistic regression, and an affine-softmax
//! classifier (one linear layer into softmax cross-entropy). Each exposes
//! the same surface: batch loss and gradient, full-dataset loss and
//! gradient, the dense Hessian of the full objective, and Hessian-vector
//! products that avoid materializing the matrix.
//!
//! Softmax parameter layout: the weight rows of all classes first, then the
//! bias of every class, so dimension is `classes * features + classes`.

use ndarray::{Array1, Array2, ArrayView1};
use rand_distr::{Distribution, Normal};
use std::ops::Range;
use std::sync::Arc;

use crate::data::{Dataset, RngStream};
use crate::error::{Error, Result};
use crate::par;

/// Default cap on the dimension for which a dense Hessian may be formed.
pub const DEFAULT_HESSIAN_BUDGET: usize = 4096;

/// A parameter vector with all-finite entries.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamVector(Array1<f64>);

impl ParamVector {
    pub fn new(values: Array1<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteInput);
        }
        Ok(ParamVector(values))
    }

    pub fn zeros(dim: usize) -> Self {
        ParamVector(Array1::zeros(dim))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_array(&self) -> &Array1<f64> {
        &self.0
    }

    pub fn into_array(self) -> Array1<f64> {
        self.0
    }
}

/// One stochastic gradient evaluation together with the batch that produced
/// it.
#[derive(Clone, Debug)]
pub struct GradientSample {
    pub gradient: Array1<f64>,
    pub batch: Vec<usize>,
}

#[derive(Clone, Debug)]
enum ProblemKind {
    Quadratic {
        a: Array2<f64>,
        b: Array1<f64>,
        noise_std: f64,
        virtual_len: usize,
    },
    Logistic {
        data: Arc<Dataset>,
    },
    Softmax {
        data: Arc<Dataset>,
    },
}

/// A loss problem plus its dense-Hessian budget.
#[derive(Clone, Debug)]
pub struct LossProblem {
    kind: ProblemKind,
    hessian_budget: usize,
}

impl LossProblem {
    /// Quadratic objective `x'Ax/2 - b'x`. `a` must be square, finite, and
    /// symmetric; it is symmetrized exactly on entry.
    pub fn quadratic(a: Array2<f64>, b: Array1<f64>) -> Result<Self> {
        let d = a.nrows();
        if a.ncols() != d {
            return Err(Error::DimensionMismatch {
                context: "quadratic matrix",
                expected: d,
                actual: a.ncols(),
            });
        }
        if b.len() != d {
            return Err(Error::DimensionMismatch {
                context: "quadratic linear term",
                expected: d,
                actual: b.len(),
            });
        }
        if a.iter().any(|v| !v.is_finite()) || b.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteInput);
        }
        let scale = a.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
        let mut sym = a;
        for i in 0..d {
            for j in (i + 1)..d {
                let (upper, lower) = (sym[[i, j]], sym[[j, i]]);
                if (upper - lower).abs() > 1e-10 * scale {
                    return Err(Error::InvalidArgument(format!(
                        "quadratic matrix is not symmetric at ({i},{j}): {upper} vs {lower}"
                    )));
                }
                let avg = 0.5 * (upper + lower);
                sym[[i, j]] = avg;
                sym[[j, i]] = avg;
            }
        }
        Ok(LossProblem {
            kind: ProblemKind::Quadratic {
                a: sym,
                b,
                noise_std: 0.0,
                virtual_len: 1,
            },
            hessian_budget: DEFAULT_HESSIAN_BUDGET,
        })
    }

    /// Binary logistic regression over a two-class dataset.
    pub fn logistic(data: Arc<Dataset>) -> Result<Self> {
        if data.classes() != 2 {
            return Err(Error::InvalidArgument(format!(
                "logistic regression needs exactly 2 classes, got {}",
                data.classes()
            )));
        }
        Ok(LossProblem {
            kind: ProblemKind::Logistic { data },
            hessian_budget: DEFAULT_HESSIAN_BUDGET,
        })
    }

    /// Affine-softmax classifier over a multi-class dataset.
    pub fn softmax_linear(data: Arc<Dataset>) -> Result<Self> {
        if data.classes() < 2 {
            return Err(Error::InvalidArgument(
                "softmax classifier needs at least 2 classes".into(),
            ));
        }
        Ok(LossProblem {
            kind: ProblemKind::Softmax { data },
            hessian_budget: DEFAULT_HESSIAN_BUDGET,
        })
    }

    /// Sets the additive gradient-noise standard deviation. Only the
    /// quadratic kind is deterministic enough for injected noise; the
    /// dataset-backed kinds get their stochasticity from batching.
    pub fn with_gradient_noise(mut self, std: f64) -> Result<Self> {
        if !std.is_finite() || std < 0.0 {
            return Err(Error::InvalidArgument(format!(
                "gradient noise std must be finite and nonnegative, got {std}"
            )));
        }
        match &mut self.kind {
            ProblemKind::Quadratic { noise_std, .. } => {
                *noise_std = std;
                Ok(self)
            }
            _ => Err(Error::InvalidArgument(
                "gradient noise applies only to the quadratic kind".into(),
            )),
        }
    }

    /// Sets the size of the virtual index space a quadratic problem exposes
    /// for shard and batch plumbing.
    pub fn with_virtual_len(mut self, n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidArgument("virtual length must be positive".into()));
        }
        match &mut self.kind {
            ProblemKind::Quadratic { virtual_len, .. } => {
                *virtual_len = n;
                Ok(self)
            }
            _ => Err(Error::InvalidArgument(
                "virtual length applies only to the quadratic kind".into(),
            )),
        }
    }

    pub fn with_hessian_budget(mut self, budget: usize) -> Self {
        self.hessian_budget = budget;
        self
    }

    pub fn dim(&self) -> usize {
        match &self.kind {
            ProblemKind::Quadratic { a, .. } => a.nrows(),
            ProblemKind::Logistic { data } => data.feature_dim(),
            ProblemKind::Softmax { data } => (data.feature_dim() + 1) * data.classes(),
        }
    }

    /// Number of samples the batch index space refers to.
    pub fn n_samples(&self) -> usize {
        match &self.kind {
            ProblemKind::Quadratic { virtual_len, .. } => *virtual_len,
            ProblemKind::Logistic { data } | ProblemKind::Softmax { data } => data.len(),
        }
    }

    pub fn hessian_budget(&self) -> usize {
        self.hessian_budget
    }

    pub fn gradient_noise_std(&self) -> f64 {
        match &self.kind {
            ProblemKind::Quadratic { noise_std, .. } => *noise_std,
            _ => 0.0,
        }
    }

    pub fn dataset(&self) -> Option<&Arc<Dataset>> {
        match &self.kind {
            ProblemKind::Quadratic { .. } => None,
            ProblemKind::Logistic { data } | ProblemKind::Softmax { data } => Some(data),
        }
    }

    fn validate_x(&self, x: &Array1<f64>) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                context: "parameter vector",
                expected: self.dim(),
                actual: x.len(),
            });
        }
        Ok(())
    }

    fn validate_batch(&self, batch: &[usize]) -> Result<()> {
        if batch.is_empty() {
            return Err(Error::InvalidArgument("empty batch".into()));
        }
        let len = self.n_samples();
        for &index in batch {
            if index >= len {
                return Err(Error::SampleIndexOutOfRange { index, len });
            }
        }
        Ok(())
    }

    /// Mean loss over the batch. The quadratic kind evaluates its closed
    /// form independent of the batch contents.
    pub fn loss(&self, x: &Array1<f64>, batch: &[usize]) -> Result<f64> {
        self.validate_x(x)?;
        self.validate_batch(batch)?;
        match &self.kind {
            ProblemKind::Quadratic { a, b, .. } => Ok(0.5 * x.dot(&a.dot(x)) - b.dot(x)),
            ProblemKind::Logistic { data } => {
                let sum: f64 = batch
                    .iter()
                    .map(|&i| logistic_sample_loss(data, x, i))
                    .sum();
                Ok(sum / batch.len() as f64)
            }
            ProblemKind::Softmax { data } => {
                let mut scratch = SoftmaxScratch::new(data.classes());
                let sum: f64 = batch
                    .iter()
                    .map(|&i| softmax_sample_loss(data, x, i, &mut scratch))
                    .sum();
                Ok(sum / batch.len() as f64)
            }
        }
    }

    /// Loss of the full (non-stochastic) objective.
    pub fn full_loss(&self, x: &Array1<f64>) -> Result<f64> {
        self.validate_x(x)?;
        match &self.kind {
            ProblemKind::Quadratic { a, b, .. } => Ok(0.5 * x.dot(&a.dot(x)) - b.dot(x)),
            ProblemKind::Logistic { data } => {
                let partials = par::map_chunks(data.len(), par::DEFAULT_CHUNK, |r: Range<usize>| {
                    r.map(|i| logistic_sample_loss(data, x, i)).sum::<f64>()
                });
                Ok(partials.iter().sum::<f64>() / data.len() as f64)
            }
            ProblemKind::Softmax { data } => {
                let partials = par::map_chunks(data.len(), par::DEFAULT_CHUNK, |r: Range<usize>| {
                    let mut scratch = SoftmaxScratch::new(data.classes());
                    r.map(|i| softmax_sample_loss(data, x, i, &mut scratch))
                        .sum::<f64>()
                });
                Ok(partials.iter().sum::<f64>() / data.len() as f64)
            }
        }
    }

    /// Mean gradient over the batch, without injected noise.
    pub fn grad(&self, x: &Array1<f64>, batch: &[usize]) -> Result<Array1<f64>> {
        self.validate_x(x)?;
        self.validate_batch(batch)?;
        match &self.kind {
            ProblemKind::Quadratic { a, b, .. } => Ok(a.dot(x) - b),
            ProblemKind::Logistic { data } => {
                let mut g = Array1::zeros(x.len());
                for &i in batch {
                    logistic_sample_grad(data, x, i, &mut g);
                }
                g /= batch.len() as f64;
                Ok(g)
            }
            ProblemKind::Softmax { data } => {
                let mut g = Array1::zeros(x.len());
                let mut scratch = SoftmaxScratch::new(data.classes());
                for &i in batch {
                    softmax_sample_grad(data, x, i, &mut scratch, &mut g);
                }
                g /= batch.len() as f64;
                Ok(g)
            }
        }
    }

    /// Gradient of the full objective.
    pub fn full_grad(&self, x: &Array1<f64>) -> Result<Array1<f64>> {
        self.validate_x(x)?;
        match &self.kind {
            ProblemKind::Quadratic { a, b, .. } => Ok(a.dot(x) - b),
            ProblemKind::Logistic { data } => {
                let partials = par::map_chunks(data.len(), par::DEFAULT_CHUNK, |r: Range<usize>| {
                    let mut g = Array1::zeros(x.len());
                    for i in r {
                        logistic_sample_grad(data, x, i, &mut g);
                    }
                    g
                });
                let mut g = Array1::zeros(x.len());
                for p in partials {
                    g += &p;
                }
                g /= data.len() as f64;
                Ok(g)
            }
            ProblemKind::Softmax { data } => {
                let partials = par::map_chunks(data.len(), par::DEFAULT_CHUNK, |r: Range<usize>| {
                    let mut g = Array1::zeros(x.len());
                    let mut scratch = SoftmaxScratch::new(data.classes());
                    for i in r {
                        softmax_sample_grad(data, x, i, &mut scratch, &mut g);
                    }
                    g
                });
                let mut g = Array1::zeros(x.len());
                for p in partials {
                    g += &p;
                }
                g /= data.len() as f64;
                Ok(g)
            }
        }
    }

    /// Batch gradient plus, for the quadratic kind, additive Gaussian noise
    /// drawn entirely from `noise`.
    pub fn stochastic_grad(
        &self,
        x: &Array1<f64>,
        batch: &[usize],
        noise: RngStream,
    ) -> Result<Array1<f64>> {
        let mut g = self.grad(x, batch)?;
        let std = self.gradient_noise_std();
        if std > 0.0 {
            let normal = Normal::new(0.0, std).expect("validated std");
            let mut rng = noise.rng();
            for v in g.iter_mut() {
                *v += normal.sample(&mut rng);
            }
        }
        Ok(g)
    }

    /// Dense Hessian of the full objective. Refuses dimensions above the
    /// budget since the matrix is materialized.
    pub fn hessian(&self, x: &Array1<f64>) -> Result<Array2<f64>> {
        self.validate_x(x)?;
        let d = self.dim();
        if d > self.hessian_budget {
            return Err(Error::HessianBudget {
                dim: d,
                budget: self.hessian_budget,
            });
        }
        match &self.kind {
            ProblemKind::Quadratic { a, .. } => Ok(a.clone()),
            ProblemKind::Logistic { data } => {
                let partials = par::map_chunks(data.len(), par::DEFAULT_CHUNK, |r: Range<usize>| {
                    let mut h = Array2::zeros((d, d));
                    for i in r {
                        let u = data.feature_row(i);
                        let s = sigmoid(u.dot(x));
                        let w = s * (1.0 - s);
                        for (p, &up) in u.iter().enumerate() {
                            let wu = w * up;
                            for (q, &uq) in u.iter().enumerate() {
                                h[[p, q]] += wu * uq;
                            }
                        }
                    }
                    h
                });
                let mut h = Array2::zeros((d, d));
                for p in partials {
                    h += &p;
                }
                h /= data.len() as f64;
                Ok(h)
            }
            ProblemKind::Softmax { data } => softmax_hessian(data, x),
        }
    }

    /// Hessian-vector product of the full objective; never materializes the
    /// matrix.
    pub fn hvp(&self, x: &Array1<f64>, v: &Array1<f64>) -> Result<Array1<f64>> {
        self.validate_x(x)?;
        if v.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                context: "hvp direction",
                expected: self.dim(),
                actual: v.len(),
            });
        }
        match &self.kind {
            ProblemKind::Quadratic { a, .. } => Ok(a.dot(v)),
            ProblemKind::Logistic { data } => {
                let partials = par::map_chunks(data.len(), par::DEFAULT_CHUNK, |r: Range<usize>| {
                    let mut out = Array1::zeros(v.len());
                    for i in r {
                        let u = data.feature_row(i);
                        let s = sigmoid(u.dot(x));
                        let w = s * (1.0 - s) * u.dot(v);
                        out.scaled_add(w, &u);
                    }
                    out
                });
                let mut out = Array1::zeros(v.len());
                for p in partials {
                    out += &p;
                }
                out /= data.len() as f64;
                Ok(out)
            }
            ProblemKind::Softmax { data } => {
                let classes = data.classes();
                let p_feat = data.feature_dim();
                let partials = par::map_chunks(data.len(), par::DEFAULT_CHUNK, |r: Range<usize>| {
                    let mut out = Array1::zeros(v.len());
                    let mut scratch = SoftmaxScratch::new(classes);
                    let mut t = vec![0.0; classes];
                    for i in r {
                        let u = data.feature_row(i);
                        softmax_probs(data, x, i, &mut scratch);
                        let probs = &scratch.probs;
                        let mut mean_t = 0.0;
                        for (j, tj) in t.iter_mut().enumerate() {
                            *tj = v.slice(ndarray::s![j * p_feat..(j + 1) * p_feat]).dot(&u)
                                + v[classes * p_feat + j];
                            mean_t += probs[j] * *tj;
                        }
                        for j in 0..classes {
                            let q = probs[j] * (t[j] - mean_t);
                            out.slice_mut(ndarray::s![j * p_feat..(j + 1) * p_feat])
                                .scaled_add(q, &u);
                            out[classes * p_feat + j] += q;
                        }
                    }
                    out
                });
                let mut out = Array1::zeros(v.len());
                for p in partials {
                    out += &p;
                }
                out /= data.len() as f64;
                Ok(out)
            }
        }
    }

    /// Classification accuracy of the iterate on a dataset, with argmax ties
    /// broken toward the lower class index.
    pub fn accuracy(&self, x: &Array1<f64>, eval: &Dataset) -> Result<f64> {
        self.validate_x(x)?;
        match &self.kind {
            ProblemKind::Quadratic { .. } => Err(Error::InvalidArgument(
                "accuracy is undefined for the quadratic kind".into(),
            )),
            ProblemKind::Logistic { data } => {
                if eval.feature_dim() != data.feature_dim() {
                    return Err(Error::DimensionMismatch {
                        context: "accuracy dataset",
                        expected: data.feature_dim(),
                        actual: eval.feature_dim(),
                    });
                }
                let hits = (0..eval.len())
                    .filter(|&i| {
                        let pred = usize::from(eval.feature_row(i).dot(x) > 0.0);
                        pred == eval.label(i)
                    })
                    .count();
                Ok(hits as f64 / eval.len().max(1) as f64)
            }
            ProblemKind::Softmax { data } => {
                if eval.feature_dim() != data.feature_dim() || eval.classes() > data.classes() {
                    return Err(Error::InvalidArgument(
                        "accuracy dataset is incompatible with the model shape".into(),
                    ));
                }
                let classes = data.classes();
                let p_feat = data.feature_dim();
                let hits = (0..eval.len())
                    .filter(|&i| {
                        let u = eval.feature_row(i);
                        let mut best = (0usize, f64::NEG_INFINITY);
                        for j in 0..classes {
                            let logit = x.slice(ndarray::s![j * p_feat..(j + 1) * p_feat]).dot(&u)
                                + x[classes * p_feat + j];
                            if logit > best.1 {
                                best = (j, logit);
                            }
                        }
                        best.0 == eval.label(i)
                    })
                    .count();
                Ok(hits as f64 / eval.len().max(1) as f64)
            }
        }
    }
}

/// Numerically stable logistic function.
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn logistic_sample_loss(data: &Dataset, x: &Array1<f64>, i: usize) -> f64 {
    let z = data.feature_row(i).dot(x);
    let y = data.label(i) as f64;
    // softplus(z) - y*z, stable in both tails
    let softplus = if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    };
    softplus - y * z
}

fn logistic_sample_grad(data: &Dataset, x: &Array1<f64>, i: usize, out: &mut Array1<f64>) {
    let u = data.feature_row(i);
    let coeff = sigmoid(u.dot(x)) - data.label(i) as f64;
    out.scaled_add(coeff, &u);
}

struct SoftmaxScratch {
    logits: Vec<f64>,
    probs: Vec<f64>,
}

impl SoftmaxScratch {
    fn new(classes: usize) -> Self {
        SoftmaxScratch {
            logits: vec![0.0; classes],
            probs: vec![0.0; classes],
        }
    }
}

fn softmax_logits(data: &Dataset, x: &Array1<f64>, u: ArrayView1<f64>, out: &mut [f64]) {
    let classes = data.classes();
    let p_feat = data.feature_dim();
    for (j, o) in out.iter_mut().enumerate() {
        *o = x.slice(ndarray::s![j * p_feat..(j + 1) * p_feat]).dot(&u) + x[classes * p_feat + j];
    }
}

/// Fills `scratch.probs` with the softmax of the sample's logits and returns
/// the log-sum-exp.
fn softmax_probs(data: &Dataset, x: &Array1<f64>, i: usize, scratch: &mut SoftmaxScratch) -> f64 {
    let u = data.feature_row(i);
    softmax_logits(data, x, u, &mut scratch.logits);
    let max = scratch
        .logits
        .iter()
        .fold(f64::NEG_INFINITY, |m, &v| m.max(v));
    let mut sum = 0.0;
    for (p, &l) in scratch.probs.iter_mut().zip(&scratch.logits) {
        *p = (l - max).exp();
        sum += *p;
    }
    for p in scratch.probs.iter_mut() {
        *p /= sum;
    }
    max + sum.ln()
}

fn softmax_sample_loss(data: &Dataset, x: &Array1<f64>, i: usize, scratch: &mut SoftmaxScratch) -> f64 {
    let lse = softmax_probs(data, x, i, scratch);
    lse - scratch.logits[data.label(i)]
}

fn softmax_sample_grad(
    data: &Dataset,
    x: &Array1<f64>,
    i: usize,
    scratch: &mut SoftmaxScratch,
    out: &mut Array1<f64>,
) {
    softmax_probs(data, x, i, scratch);
    let u = data.feature_row(i);
    let classes = data.classes();
    let p_feat = data.feature_dim();
    let y = data.label(i);
    for j in 0..classes {
        let coeff = scratch.probs[j] - f64::from(j == y) as f64;
        out.slice_mut(ndarray::s![j * p_feat..(j + 1) * p_feat])
            .scaled_add(coeff, &u);
        out[classes * p_feat + j] += coeff;
    }
}

/// Assembles the softmax Hessian blockwise. For classes j <= j' the block
/// over augmented features (u, 1) is the Gram of the samples weighted by
/// p_j (delta_jj' - p_j'), accumulated chunk by chunk in fixed order through
/// one GEMM per chunk. Pairs run in parallel; each writes disjoint blocks.
fn softmax_hessian(data: &Arc<Dataset>, x: &Array1<f64>) -> Result<Array2<f64>> {
    let n = data.len();
    let classes = data.classes();
    let p_feat = data.feature_dim();
    let aug = p_feat + 1;
    let d = classes * aug;

    let mut probs = Array2::zeros((n, classes));
    {
        let rows = par::map_chunks(n, par::DEFAULT_CHUNK, |r: Range<usize>| {
            let mut scratch = SoftmaxScratch::new(classes);
            let mut block = Vec::with_capacity(r.len() * classes);
            for i in r {
                softmax_probs(data, x, i, &mut scratch);
                block.extend_from_slice(&scratch.probs);
            }
            block
        });
        let mut cursor = 0;
        for block in rows {
            for v in block {
                probs.as_slice_mut().unwrap()[cursor] = v;
                cursor += 1;
            }
        }
    }

    let mut u_aug = Array2::zeros((n, aug));
    u_aug
        .slice_mut(ndarray::s![.., ..p_feat])
        .assign(data.features());
    u_aug.slice_mut(ndarray::s![.., p_feat..]).fill(1.0);

    let pairs: Vec<(usize, usize)> = (0..classes)
        .flat_map(|j| (j..classes).map(move |j2| (j, j2)))
        .collect();

    const GEMM_CHUNK: usize = 4096;
    let blocks = par::map_indices(pairs.len(), |pair_index| {
        let (j, j2) = pairs[pair_index];
        let mut block = Array2::zeros((aug, aug));
        let mut scaled = Array2::zeros((GEMM_CHUNK, aug));
        for range in par::chunk_ranges(n, GEMM_CHUNK) {
            let len = range.len();
            let u_chunk = u_aug.slice(ndarray::s![range.clone(), ..]);
            let mut v_chunk = scaled.slice_mut(ndarray::s![..len, ..]);
            v_chunk.assign(&u_chunk);
            for (row, i) in range.clone().enumerate() {
                let w = if j == j2 {
                    probs[[i, j]] * (1.0 - probs[[i, j]])
                } else {
                    -probs[[i, j]] * probs[[i, j2]]
                };
                v_chunk.row_mut(row).mapv_inplace(|v| v * w);
            }
            ndarray::linalg::general_mat_mul(
                1.0,
                &u_chunk.t(),
                &scaled.slice(ndarray::s![..len, ..]),
                1.0,
                &mut block,
            );
        }
        (j, j2, block)
    });

    let mut h = Array2::zeros((d, d));
    let index_of = |class: usize, a: usize| {
        if a < p_feat {
            class * p_feat + a
        } else {
            classes * p_feat + class
        }
    };
    for (j, j2, block) in blocks {
        for a in 0..aug {
            let row = index_of(j, a);
            for a2 in 0..aug {
                let col = index_of(j2, a2);
                let v = block[[a, a2]] / n as f64;
                h[[row, col]] = v;
                h[[col, row]] = v;
            }
        }
    }
    Ok(h)
}

/// Central-difference gradient of the full objective. Test oracle; the step
/// scales with the iterate's magnitude.
pub fn finite_difference_gradient(problem: &LossProblem, x: &Array1<f64>) -> Result<Array1<f64>> {
    let h = 1e-6 * (1.0 + x.iter().fold(0.0f64, |m, v| m.max(v.abs())));
    let mut g = Array1::zeros(x.len());
    let mut probe = x.clone();
    for i in 0..x.len() {
        probe[i] = x[i] + h;
        let plus = problem.full_loss(&probe)?;
        probe[i] = x[i] - h;
        let minus = problem.full_loss(&probe)?;
        probe[i] = x[i];
        g[i] = (plus - minus) / (2.0 * h);
    }
    Ok(g)
}

/// Central-difference Hessian-vector product of the full objective. Test
/// oracle for both `hvp` and dense Hessian columns.
pub fn finite_difference_hvp(
    problem: &LossProblem,
    x: &Array1<f64>,
    v: &Array1<f64>,
) -> Result<Array1<f64>> {
    let h = 1e-6 * (1.0 + x.iter().fold(0.0f64, |m, v| m.max(v.abs())));
    let norm = v.dot(v).sqrt();
    if norm == 0.0 {
        return Ok(Array1::zeros(x.len()));
    }
    let step = h / norm;
    let plus = problem.full_grad(&(x + &(v * step)))?;
    let minus = problem.full_grad(&(x - &(v * step)))?;
    Ok((plus - minus) / (2.0 * step))
}
