//! Minimal reverse-mode differentiation: the tensor ops the review model
//! needs, a finite-difference gradient checker, Adam, and a checkpoint
//! container.

mod checkpoint;
mod graph;
mod optim;
mod tensor;

pub use checkpoint::Checkpoint;
pub use graph::{Gradients, Graph, Var};
pub use optim::{adam_step, AdamConfig, AdamState};
pub use tensor::Tensor;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Identifier of a tensor inside a [`ParamSet`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ParamId(pub usize);

/// Ordered collection of named trainable tensors.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct ParamSet<T> {
    names: Vec<String>,
    tensors: Vec<Tensor<T>>,
}

impl<T: Scalar> ParamSet<T> {
    pub fn new() -> Self {
        ParamSet {
            names: Vec::new(),
            tensors: Vec::new(),
        }
    }

    pub fn insert(&mut self, name: impl Into<String>, t: Tensor<T>) -> ParamId {
        self.names.push(name.into());
        self.tensors.push(t);
        ParamId(self.tensors.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Tensor<T> {
        &self.tensors[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor<T> {
        &mut self.tensors[id.0]
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.names.iter().position(|n| n == name).map(ParamId)
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn tensors(&self) -> &[Tensor<T>] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor<T>] {
        &mut self.tensors
    }

    /// Total number of scalar entries.
    pub fn num_values(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.tensors.iter().all(Tensor::all_finite)
    }

    pub fn cast<U: Scalar>(&self) -> ParamSet<U> {
        ParamSet {
            names: self.names.clone(),
            tensors: self.tensors.iter().map(Tensor::cast).collect(),
        }
    }
}

/// Outcome of [`grad_check`].
#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// Parameter name and flat index of the worst entry.
    pub worst: Option<(String, usize)>,
    pub analytic: f64,
    pub numeric: f64,
    pub checked: usize,
}

/// Compares reverse-mode gradients against central differences.
///
/// `f` receives a fresh graph plus one leaf per parameter (in `params`
/// order) and must return a single-element output. The relative error for
/// each entry is `|a - n| / max(|a|, |n|, 1e-10)`.
pub fn grad_check<T, F>(params: &ParamSet<T>, h: f64, f: F) -> Result<GradCheckReport>
where
    T: Scalar,
    F: for<'g> Fn(&mut Graph<'g, T>, &[Var]) -> Result<Var>,
{
    if !(h > 0.0) {
        return Err(Error::InvalidArgument(format!("perturbation must be positive, got {h}")));
    }
    let eval = |p: &ParamSet<T>| -> Result<f64> {
        let mut g = Graph::new();
        let leaves: Vec<Var> = p.tensors().iter().map(|t| g.leaf(t)).collect();
        let out = f(&mut g, &leaves)?;
        let v = g.value(out);
        if v.len() != 1 {
            return Err(Error::InvalidShape(format!("grad_check output must be scalar, got {:?}", v.shape())));
        }
        let y = v.item().as_f64();
        if !y.is_finite() {
            return Err(Error::NumericFailure(format!("function value {y} is not finite")));
        }
        Ok(y)
    };

    let analytic: Vec<Tensor<T>> = {
        let mut g = Graph::new();
        let leaves: Vec<Var> = params.tensors().iter().map(|t| g.leaf(t)).collect();
        let out = f(&mut g, &leaves)?;
        if g.value(out).len() != 1 {
            return Err(Error::InvalidShape("grad_check output must be scalar".into()));
        }
        let grads = g.backward(out);
        leaves
            .iter()
            .zip(params.tensors())
            .map(|(&v, t)| grads.get_or_zeros(v, t.shape()))
            .collect()
    };

    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: None,
        analytic: 0.0,
        numeric: 0.0,
        checked: 0,
    };
    let mut work = params.clone();
    for (pi, grad) in analytic.iter().enumerate() {
        for idx in 0..grad.len() {
            let orig = work.tensors()[pi].data()[idx];
            work.tensors_mut()[pi].data_mut()[idx] = T::lit(orig.as_f64() + h);
            let plus = eval(&work)?;
            work.tensors_mut()[pi].data_mut()[idx] = T::lit(orig.as_f64() - h);
            let minus = eval(&work)?;
            work.tensors_mut()[pi].data_mut()[idx] = orig;

            let numeric = (plus - minus) / (2.0 * h);
            let a = grad.data()[idx].as_f64();
            if !a.is_finite() || !numeric.is_finite() {
                return Err(Error::NumericFailure(format!(
                    "non-finite gradient for {}[{idx}]",
                    params.names()[pi]
                )));
            }
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-10);
            report.checked += 1;
            if rel > report.max_rel_error || report.worst.is_none() {
                report.max_rel_error = rel;
                report.worst = Some((params.names()[pi].clone(), idx));
                report.analytic = a;
                report.numeric = numeric;
            }
        }
    }
    Ok(report)
}
