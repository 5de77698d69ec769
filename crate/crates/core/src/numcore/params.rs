use crate::numcore::{Gradients, Matrix, Real, Tape, Var};

/// Index of a trainable matrix inside a [`ParamStore`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub usize);

/// Named trainable matrices, in registration order.
#[derive(Clone, Debug, Default)]
pub struct ParamStore<T> {
    names: Vec<String>,
    values: Vec<Matrix<T>>,
}

impl<T: Real> ParamStore<T> {
    pub fn new() -> Self {
        Self {
            names: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn add(&mut self, name: impl Into<String>, value: Matrix<T>) -> ParamId {
        let name = name.into();
        assert!(
            !self.names.contains(&name),
            "duplicate parameter name {name}"
        );
        self.names.push(name);
        self.values.push(value);
        ParamId(self.values.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Matrix<T> {
        &self.values[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Matrix<T> {
        &mut self.values[id.0]
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.names.iter().position(|n| n == name).map(ParamId)
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.values.len()).map(ParamId)
    }

    pub fn values(&self) -> &[Matrix<T>] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Matrix<T>] {
        &mut self.values
    }

    pub fn num_scalars(&self) -> usize {
        self.values.iter().map(Matrix::len).sum()
    }

    /// Puts parameter `id` on the tape as a differentiable leaf.
    pub fn bind(&self, tape: &mut Tape<T>, id: ParamId) -> Var {
        tape.param(id, self.values[id.0].clone())
    }

    /// Per-parameter gradients aligned with the store; zero for parameters
    /// that did not reach the loss. A parameter bound more than once sums
    /// the gradients of all its bindings.
    pub fn collect_gradients(&self, tape: &Tape<T>, grads: &mut Gradients<T>) -> Vec<Matrix<T>> {
        let mut out: Vec<Matrix<T>> = self
            .values
            .iter()
            .map(|m| Matrix::zeros(m.rows(), m.cols()))
            .collect();
        for &(id, var) in tape.registered_params() {
            let g = grads.take(var);
            out[id.0].axpy(T::one(), &g);
        }
        out
    }
}
