//! Dense feed-forward classifier with hand-written backpropagation.
//!
//! Parameters and gradients are flat vectors so the mixing strategies can
//! treat them as plain points in `R^d`. The layout is, in order:
//!
//! - for every trunk layer: weight matrix (`out × in`, row-major), then bias
//! - for every head: weight matrix (`classes × last_hidden`), then bias
//!
//! A batch is routed through exactly one head; the gradient entries of every
//! other head are left at exactly zero.

use std::ops::{Deref, DerefMut};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::scalar::{vec, Scalar};
use crate::stream::Example;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Activation {
    #[default]
    Relu,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NetworkSpec {
    pub input_dim: usize,
    pub hidden_dims: Vec<usize>,
    pub heads: usize,
    pub classes_per_head: usize,
    pub activation: Activation,
}

/// Offsets of one dense layer inside the flat parameter vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerSlot {
    pub fan_in: usize,
    pub fan_out: usize,
    pub weights: usize,
    pub bias: usize,
}

impl LayerSlot {
    fn end(&self) -> usize {
        self.bias + self.fan_out
    }
}

impl NetworkSpec {
    pub fn new(
        input_dim: usize,
        hidden_dims: Vec<usize>,
        heads: usize,
        classes_per_head: usize,
    ) -> Result<Self> {
        let spec = Self {
            input_dim,
            hidden_dims,
            heads,
            classes_per_head,
            activation: Activation::Relu,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 {
            return Err(Error::InvalidSpec("input_dim must be positive".into()));
        }
        if let Some(pos) = self.hidden_dims.iter().position(|&h| h == 0) {
            return Err(Error::InvalidSpec(format!("hidden layer {pos} has zero width")));
        }
        if self.heads == 0 {
            return Err(Error::InvalidSpec("at least one head is required".into()));
        }
        if self.classes_per_head == 0 {
            return Err(Error::InvalidSpec("classes_per_head must be positive".into()));
        }
        Ok(())
    }

    fn last_width(&self) -> usize {
        self.hidden_dims.last().copied().unwrap_or(self.input_dim)
    }

    pub fn trunk_slots(&self) -> Vec<LayerSlot> {
        let mut slots = Vec::with_capacity(self.hidden_dims.len());
        let mut offset = 0;
        let mut fan_in = self.input_dim;
        for &fan_out in &self.hidden_dims {
            let slot = LayerSlot {
                fan_in,
                fan_out,
                weights: offset,
                bias: offset + fan_in * fan_out,
            };
            offset = slot.end();
            fan_in = fan_out;
            slots.push(slot);
        }
        slots
    }

    fn trunk_len(&self) -> usize {
        self.trunk_slots().last().map_or(0, |s| s.end())
    }

    pub fn head_slot(&self, head: usize) -> LayerSlot {
        let fan_in = self.last_width();
        let fan_out = self.classes_per_head;
        let per_head = fan_in * fan_out + fan_out;
        let start = self.trunk_len() + head * per_head;
        LayerSlot {
            fan_in,
            fan_out,
            weights: start,
            bias: start + fan_in * fan_out,
        }
    }

    /// Total number of parameters `d`.
    pub fn param_count(&self) -> usize {
        self.head_slot(self.heads - 1).end()
    }
}

/// Network weights `w` as one flat vector.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector<T>(pub Vec<T>);

/// Gradients share the parameter layout.
pub type GradVector<T> = Vec<T>;

impl<T> Deref for ParamVector<T> {
    type Target = [T];
    fn deref(&self) -> &[T] {
        &self.0
    }
}

impl<T> DerefMut for ParamVector<T> {
    fn deref_mut(&mut self) -> &mut [T] {
        &mut self.0
    }
}

impl<T> From<Vec<T>> for ParamVector<T> {
    fn from(v: Vec<T>) -> Self {
        Self(v)
    }
}

impl<T: Scalar> ParamVector<T> {
    pub fn zeros(spec: &NetworkSpec) -> Self {
        Self(vec![T::zero(); spec.param_count()])
    }

    pub fn into_inner(self) -> Vec<T> {
        self.0
    }
}

/// Row-major `n × input_dim` inputs with labels, all routed through one head.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch<T> {
    pub inputs: Vec<T>,
    pub labels: Vec<usize>,
    pub head: usize,
}

impl<T: Scalar> Batch<T> {
    pub fn new(inputs: Vec<T>, labels: Vec<usize>, head: usize) -> Self {
        Self {
            inputs,
            labels,
            head,
        }
    }

    pub fn from_examples<'a, I>(examples: I, head: usize) -> Self
    where
        I: IntoIterator<Item = &'a Example<T>>,
    {
        let mut inputs = Vec::new();
        let mut labels = Vec::new();
        for ex in examples {
            inputs.extend_from_slice(&ex.input);
            labels.push(ex.label);
        }
        Self {
            inputs,
            labels,
            head,
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    fn row(&self, i: usize, dim: usize) -> &[T] {
        &self.inputs[i * dim..(i + 1) * dim]
    }

    fn check(&self, spec: &NetworkSpec) -> Result<()> {
        if self.labels.is_empty() {
            return Err(Error::ShapeMismatch {
                what: "batch size",
                expected: 1,
                found: 0,
            });
        }
        if self.inputs.len() != self.labels.len() * spec.input_dim {
            return Err(Error::ShapeMismatch {
                what: "batch inputs",
                expected: self.labels.len() * spec.input_dim,
                found: self.inputs.len(),
            });
        }
        if self.head >= spec.heads {
            return Err(Error::ShapeMismatch {
                what: "head index bound",
                expected: spec.heads,
                found: self.head,
            });
        }
        if let Some(&bad) = self.labels.iter().find(|&&y| y >= spec.classes_per_head) {
            return Err(Error::ShapeMismatch {
                what: "label bound",
                expected: spec.classes_per_head,
                found: bad,
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossGrad<T> {
    /// Mean cross-entropy in nats.
    pub loss: T,
    pub grad: GradVector<T>,
}

/// Glorot-uniform weights, zero biases. Deterministic in `(spec, seed)`.
pub fn init_params<T: Scalar>(spec: &NetworkSpec, seed: u64) -> ParamVector<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut w = ParamVector::zeros(spec);
    let slots = spec
        .trunk_slots()
        .into_iter()
        .chain((0..spec.heads).map(|h| spec.head_slot(h)));
    for slot in slots {
        let limit = (6.0 / (slot.fan_in + slot.fan_out) as f64).sqrt();
        for v in &mut w[slot.weights..slot.bias] {
            *v = T::of(rng.random_range(-limit..=limit));
        }
    }
    w
}

fn check_params<T>(spec: &NetworkSpec, w: &[T]) -> Result<()> {
    if w.len() != spec.param_count() {
        return Err(Error::ShapeMismatch {
            what: "parameter vector",
            expected: spec.param_count(),
            found: w.len(),
        });
    }
    Ok(())
}

/// `out = W x + b` for one layer.
fn affine<T: Scalar>(w: &[T], slot: &LayerSlot, x: &[T], out: &mut Vec<T>) {
    out.clear();
    let weights = &w[slot.weights..slot.bias];
    let bias = &w[slot.bias..slot.bias + slot.fan_out];
    for (row, &b) in weights.chunks_exact(slot.fan_in).zip(bias) {
        out.push(vec::dot(row, x) + b);
    }
}

struct Forward<T> {
    /// Inputs to each trunk layer followed by the head input.
    activations: Vec<Vec<T>>,
    /// Trunk pre-activations, for the ReLU mask.
    pre: Vec<Vec<T>>,
    logits: Vec<T>,
}

fn forward<T: Scalar>(spec: &NetworkSpec, w: &[T], x: &[T], head: usize) -> Forward<T> {
    let slots = spec.trunk_slots();
    let mut activations = Vec::with_capacity(slots.len() + 1);
    let mut pre = Vec::with_capacity(slots.len());
    activations.push(x.to_vec());
    for slot in &slots {
        let mut z = Vec::with_capacity(slot.fan_out);
        affine(w, slot, activations.last().expect("nonempty"), &mut z);
        let a = z.iter().map(|&v| v.max(T::zero())).collect();
        pre.push(z);
        activations.push(a);
    }
    let mut logits = Vec::with_capacity(spec.classes_per_head);
    affine(
        w,
        &spec.head_slot(head),
        activations.last().expect("nonempty"),
        &mut logits,
    );
    Forward {
        activations,
        pre,
        logits,
    }
}

/// Stable softmax; returns probabilities and `log Σ exp(z)`.
fn softmax<T: Scalar>(logits: &[T]) -> (Vec<T>, T) {
    let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let exps: Vec<T> = logits.iter().map(|&z| (z - max).exp()).collect();
    let total: T = exps.iter().copied().sum();
    let lse = max + total.ln();
    (exps.into_iter().map(|e| e / total).collect(), lse)
}

/// Accumulates `upstream ⊗ input` into the weight block and `upstream` into the
/// bias block, then returns `Wᵀ upstream`.
fn backprop_layer<T: Scalar>(
    w: &[T],
    grad: &mut [T],
    slot: &LayerSlot,
    input: &[T],
    upstream: &[T],
    need_downstream: bool,
) -> Vec<T> {
    let mut down = if need_downstream {
        vec![T::zero(); slot.fan_in]
    } else {
        Vec::new()
    };
    for (o, &u) in upstream.iter().enumerate() {
        if u.is_zero() {
            continue;
        }
        let row = slot.weights + o * slot.fan_in;
        vec::axpy(u, input, &mut grad[row..row + slot.fan_in]);
        grad[slot.bias + o] = grad[slot.bias + o] + u;
        if need_downstream {
            vec::axpy(u, &w[row..row + slot.fan_in], &mut down);
        }
    }
    down
}

/// Sum (not mean) of the per-example losses, accumulating summed gradients.
fn accumulate<T: Scalar>(
    spec: &NetworkSpec,
    w: &[T],
    batch: &Batch<T>,
    grad: &mut [T],
) -> Result<T> {
    let slots = spec.trunk_slots();
    let head_slot = spec.head_slot(batch.head);
    let mut total = T::zero();
    for (i, &label) in batch.labels.iter().enumerate() {
        let fwd = forward(spec, w, batch.row(i, spec.input_dim), batch.head);
        if !vec::all_finite(&fwd.logits) {
            return Err(Error::NumericOverflow("forward pass"));
        }
        let (mut delta, lse) = softmax(&fwd.logits);
        total = total + (lse - fwd.logits[label]);
        delta[label] = delta[label] - T::one();

        let mut upstream = backprop_layer(
            w,
            grad,
            &head_slot,
            fwd.activations.last().expect("nonempty"),
            &delta,
            !slots.is_empty(),
        );
        for (l, slot) in slots.iter().enumerate().rev() {
            for (u, &z) in upstream.iter_mut().zip(&fwd.pre[l]) {
                if z <= T::zero() {
                    *u = T::zero();
                }
            }
            upstream = backprop_layer(w, grad, slot, &fwd.activations[l], &upstream, l > 0);
        }
    }
    Ok(total)
}

/// Mean cross-entropy over the batch and its exact gradient.
pub fn loss_and_grad<T: Scalar>(
    spec: &NetworkSpec,
    w: &[T],
    batch: &Batch<T>,
) -> Result<LossGrad<T>> {
    loss_and_grad_multi(spec, w, std::slice::from_ref(batch))
}

/// Mean loss and gradient over the union of several batches, each routed
/// through its own head. Every example carries equal weight.
pub fn loss_and_grad_multi<T: Scalar>(
    spec: &NetworkSpec,
    w: &[T],
    batches: &[Batch<T>],
) -> Result<LossGrad<T>> {
    check_params(spec, w)?;
    let mut grad = vec![T::zero(); w.len()];
    let mut total = T::zero();
    let mut n = 0;
    for batch in batches {
        batch.check(spec)?;
        total = total + accumulate(spec, w, batch, &mut grad)?;
        n += batch.len();
    }
    if n == 0 {
        return Err(Error::ShapeMismatch {
            what: "batch size",
            expected: 1,
            found: 0,
        });
    }
    let inv = T::one() / T::of_usize(n);
    for g in &mut grad {
        *g = *g * inv;
    }
    let loss = (total * inv).max(T::zero());
    if !loss.is_finite() || !vec::all_finite(&grad) {
        return Err(Error::NumericOverflow("loss gradient"));
    }
    Ok(LossGrad { loss, grad })
}

/// `w - lr * grad`
pub fn sgd_step<T: Scalar>(w: &ParamVector<T>, grad: &[T], lr: T) -> ParamVector<T> {
    debug_assert_eq!(w.len(), grad.len());
    ParamVector(w.iter().zip(grad).map(|(&wi, &gi)| wi - lr * gi).collect())
}

/// Argmax class per example; ties go to the lowest index.
pub fn predict<T: Scalar>(spec: &NetworkSpec, w: &[T], batch: &Batch<T>) -> Result<Vec<usize>> {
    check_params(spec, w)?;
    batch.check(spec)?;
    Ok((0..batch.len())
        .map(|i| {
            let fwd = forward(spec, w, batch.row(i, spec.input_dim), batch.head);
            let mut best = 0;
            for (c, &z) in fwd.logits.iter().enumerate() {
                if z > fwd.logits[best] {
                    best = c;
                }
            }
            best
        })
        .collect())
}

/// Fraction of correct argmax predictions over all batches (one shared head).
pub fn evaluate<T: Scalar>(spec: &NetworkSpec, w: &[T], batches: &[Batch<T>]) -> Result<T> {
    let total: usize = batches.iter().map(Batch::len).sum();
    if total == 0 {
        return Err(Error::EmptyTestSet);
    }
    let head = batches[0].head;
    if batches.iter().any(|b| b.head != head) {
        return Err(Error::InvalidConfig(
            "evaluation batches must share one task head".into(),
        ));
    }
    let mut correct = 0;
    for batch in batches.iter().filter(|b| !b.is_empty()) {
        let preds = predict(spec, w, batch)?;
        correct += preds.iter().zip(&batch.labels).filter(|(p, y)| p == y).count();
    }
    Ok(T::of_usize(correct) / T::of_usize(total))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> NetworkSpec {
        NetworkSpec::new(4, vec![3], 1, 2).unwrap()
    }

    #[test]
    fn mnist_mlp_parameter_count() {
        let spec = NetworkSpec::new(784, vec![256, 256], 1, 10).unwrap();
        assert_eq!(spec.param_count(), 269_322);
    }

    #[test]
    fn rejects_zero_dims() {
        assert!(NetworkSpec::new(0, vec![3], 1, 2).is_err());
        assert!(NetworkSpec::new(4, vec![3, 0], 1, 2).is_err());
        assert!(NetworkSpec::new(4, vec![3], 0, 2).is_err());
        assert!(NetworkSpec::new(4, vec![3], 1, 0).is_err());
    }

    #[test]
    fn init_is_deterministic_and_centered() {
        let spec = tiny();
        let a: ParamVector<f64> = init_params(&spec, 7);
        let b: ParamVector<f64> = init_params(&spec, 7);
        assert_eq!(a, b);
        assert_ne!(a, init_params(&spec, 8));

        let big = NetworkSpec::new(50, vec![40, 30], 2, 10).unwrap();
        let w: ParamVector<f64> = init_params(&big, 1);
        let weights: Vec<f64> = big
            .trunk_slots()
            .into_iter()
            .chain((0..big.heads).map(|h| big.head_slot(h)))
            .flat_map(|s| w[s.weights..s.bias].to_vec())
            .collect();
        let n = weights.len() as f64;
        let mean = weights.iter().sum::<f64>() / n;
        let var = weights.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
        assert!(mean.abs() < 3.0 * (var / n).sqrt(), "mean {mean}");
    }

    #[test]
    fn biases_start_at_zero() {
        let spec = tiny();
        let w: ParamVector<f64> = init_params(&spec, 3);
        let s = spec.trunk_slots()[0];
        assert!(w[s.bias..s.bias + s.fan_out].iter().all(|&b| b == 0.0));
    }

    #[test]
    fn zero_weights_give_uniform_loss() {
        let spec = NetworkSpec::new(3, vec![4], 1, 7).unwrap();
        let w = ParamVector::<f64>::zeros(&spec);
        let batch = Batch::new(vec![0.3, -1.0, 2.0, 1.0, 1.0, 1.0], vec![2, 6], 0);
        let lg = loss_and_grad(&spec, &w, &batch).unwrap();
        assert!((lg.loss - 7f64.ln()).abs() < 1e-14);
    }

    #[test]
    fn replicated_batch_has_same_loss_and_grad() {
        let spec = tiny();
        let w: ParamVector<f64> = init_params(&spec, 11);
        let one = Batch::new(vec![0.1, 0.2, -0.3, 0.4, 1.0, -1.0, 0.5, 0.0], vec![0, 1], 0);
        let mut two = one.clone();
        two.inputs.extend(one.inputs.clone());
        two.labels.extend(one.labels.clone());
        let a = loss_and_grad(&spec, &w, &one).unwrap();
        let b = loss_and_grad(&spec, &w, &two).unwrap();
        assert!((a.loss - b.loss).abs() < 1e-15);
        for (x, y) in a.grad.iter().zip(&b.grad) {
            assert!((x - y).abs() < 1e-15);
        }
    }

    #[test]
    fn other_heads_get_exactly_zero_gradient() {
        let spec = NetworkSpec::new(3, vec![5], 3, 2).unwrap();
        let w: ParamVector<f64> = init_params(&spec, 5);
        let batch = Batch::new(vec![1.0, -2.0, 0.5], vec![1], 1);
        let lg = loss_and_grad(&spec, &w, &batch).unwrap();
        for h in [0, 2] {
            let s = spec.head_slot(h);
            assert!(lg.grad[s.weights..s.bias + s.fan_out].iter().all(|&g| g == 0.0));
        }
        let s = spec.head_slot(1);
        assert!(lg.grad[s.weights..s.bias + s.fan_out].iter().any(|&g| g != 0.0));
    }

    #[test]
    fn rejects_bad_batches() {
        let spec = tiny();
        let w: ParamVector<f64> = init_params(&spec, 0);
        let short = Batch::new(vec![1.0; 3], vec![0], 0);
        assert!(matches!(loss_and_grad(&spec, &w, &short), Err(Error::ShapeMismatch { .. })));
        let bad_label = Batch::new(vec![1.0; 4], vec![2], 0);
        assert!(loss_and_grad(&spec, &w, &bad_label).is_err());
        let bad_head = Batch::new(vec![1.0; 4], vec![0], 1);
        assert!(loss_and_grad(&spec, &w, &bad_head).is_err());
        let empty = Batch::new(vec![], vec![], 0);
        assert!(loss_and_grad(&spec, &w, &empty).is_err());
    }

    #[test]
    fn overflow_is_reported() {
        let spec = tiny();
        let mut w: ParamVector<f64> = init_params(&spec, 0);
        w[0] = f64::MAX;
        w[1] = f64::MAX;
        let batch = Batch::new(vec![1e308, 1e308, 1.0, 1.0], vec![0], 0);
        assert!(matches!(
            loss_and_grad(&spec, &w, &batch),
            Err(Error::NumericOverflow(_))
        ));
    }

    #[test]
    fn sgd_step_arithmetic() {
        let w = ParamVector(vec![1.0_f64, 1.0]);
        assert_eq!(sgd_step(&w, &[10.0, -10.0], 0.1).0, vec![0.0, 2.0]);
        assert_eq!(sgd_step(&w, &[0.0, 0.0], 0.1), w);
    }

    #[test]
    fn evaluate_edge_cases() {
        let spec = NetworkSpec::new(2, vec![], 1, 3).unwrap();
        // Logit c = x · e_c with identity-like weights; inputs pick a class.
        let mut w = ParamVector::<f64>::zeros(&spec);
        let s = spec.head_slot(0);
        w[s.weights] = 1.0; // class 0 reads x0
        w[s.weights + 3] = 1.0; // class 1 reads x1
        let batch = Batch::new(vec![1.0, 0.0, 0.0, 1.0], vec![0, 1], 0);
        assert_eq!(evaluate(&spec, &w, &[batch]).unwrap(), 1.0);
        let wrong = Batch::new(vec![1.0, 0.0], vec![2], 0);
        assert_eq!(evaluate(&spec, &w, &[wrong]).unwrap(), 0.0);
        assert!(matches!(evaluate::<f64>(&spec, &w, &[]), Err(Error::EmptyTestSet)));
    }

    #[test]
    fn ties_break_to_lowest_class() {
        let spec = NetworkSpec::new(2, vec![], 1, 4).unwrap();
        let w = ParamVector::<f64>::zeros(&spec);
        let batch = Batch::new(vec![0.5, 0.5], vec![0], 0);
        assert_eq!(predict(&spec, &w, &batch).unwrap(), vec![0]);
    }
}
