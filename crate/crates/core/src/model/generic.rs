use super::VectorField;
use nalgebra::{DMatrix, DVector};
use std::fmt;
use std::sync::Arc;

type Rhs = Arc<dyn Fn(&DVector<f64>, &DVector<f64>) -> DVector<f64> + Send + Sync>;
type Jac = Arc<dyn Fn(&DVector<f64>, &DVector<f64>) -> DMatrix<f64> + Send + Sync>;

/// A vector field given by closures `(x, u) -> x'`, with an optional
/// analytic Jacobian. Time enters only through the input schedule.
#[derive(Clone)]
pub struct GenericSystem {
    dim: usize,
    n_inputs: usize,
    rhs: Rhs,
    jacobian: Option<Jac>,
}

impl fmt::Debug for GenericSystem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GenericSystem")
            .field("dim", &self.dim)
            .field("n_inputs", &self.n_inputs)
            .field("analytic_jacobian", &self.jacobian.is_some())
            .finish()
    }
}

impl GenericSystem {
    pub fn new<F>(dim: usize, n_inputs: usize, rhs: F) -> Self
    where
        F: Fn(&DVector<f64>, &DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
    {
        Self {
            dim,
            n_inputs,
            rhs: Arc::new(rhs),
            jacobian: None,
        }
    }

    pub fn with_jacobian<J>(mut self, jac: J) -> Self
    where
        J: Fn(&DVector<f64>, &DVector<f64>) -> DMatrix<f64> + Send + Sync + 'static,
    {
        self.jacobian = Some(Arc::new(jac));
        self
    }
}

impl VectorField for GenericSystem {
    fn dim(&self) -> usize {
        self.dim
    }

    fn n_inputs(&self) -> usize {
        self.n_inputs
    }

    fn eval(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        (self.rhs)(x, u)
    }

    fn eval_jacobian(&self, x: &DVector<f64>, u: &DVector<f64>) -> DMatrix<f64> {
        match &self.jacobian {
            Some(j) => j(x, u),
            None => super::fd_jacobian(self, x, u),
        }
    }
}
