//! System families and the vector-field abstraction shared by every analysis.
//!
//! A [`VectorField`] is an autonomous field `x' = f(x, u)` with a frozen
//! input/parameter vector `u`. Time-dependent inputs are expressed through an
//! [`InputSchedule`](crate::simulate::InputSchedule) of piecewise-constant
//! segments, so every field seen by the analysis code is autonomous.

mod embed;
mod generic;
mod poly;
mod rnn;

pub use embed::Embedded;
pub use generic::GenericSystem;
pub use poly::{PolyTerm, PolynomialSystem};
pub use rnn::{Activation, DiagTensor2, DiagTensor3, ReadoutConvention, RnnModel, Variant};

use crate::tps::{Tps, TpsSpace};
use nalgebra::{DMatrix, DVector};

pub trait VectorField: Send + Sync {
    fn dim(&self) -> usize;

    fn n_inputs(&self) -> usize {
        0
    }

    fn eval(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64>;

    /// Jacobian in `x`. Defaults to central finite differences.
    fn eval_jacobian(&self, x: &DVector<f64>, u: &DVector<f64>) -> DMatrix<f64> {
        fd_jacobian(self, x, u)
    }

    /// Factor applied to additive noise samples before they enter `x'`.
    fn forcing_gain(&self) -> f64 {
        1.0
    }

    /// Evaluates the field on power-series arguments, if the field is analytic
    /// in closed form. `x` carries the expansion point in its constant terms.
    fn taylor(&self, _x: &[Tps], _u: &DVector<f64>) -> Option<Vec<Tps>> {
        None
    }

    /// Symmetric bilinear contraction `D^2 f(x)[a, b]`.
    fn second_derivative(
        &self,
        x: &DVector<f64>,
        u: &DVector<f64>,
        a: &DVector<f64>,
        b: &DVector<f64>,
    ) -> Option<DVector<f64>> {
        let f = directional_taylor(self, x, u, &[a, b], 2)?;
        Some(DVector::from_iterator(
            f.len(),
            f.iter().map(|t| t.coeff(&[1, 1])),
        ))
    }

    /// Symmetric trilinear contraction `D^3 f(x)[a, b, c]`.
    fn third_derivative(
        &self,
        x: &DVector<f64>,
        u: &DVector<f64>,
        a: &DVector<f64>,
        b: &DVector<f64>,
        c: &DVector<f64>,
    ) -> Option<DVector<f64>> {
        let f = directional_taylor(self, x, u, &[a, b, c], 3)?;
        Some(DVector::from_iterator(
            f.len(),
            f.iter().map(|t| t.coeff(&[1, 1, 1])),
        ))
    }
}

/// `f(x + sum_k s_k dirs[k])` as power series in the `s_k`.
fn directional_taylor<F: VectorField + ?Sized>(
    field: &F,
    x: &DVector<f64>,
    u: &DVector<f64>,
    dirs: &[&DVector<f64>],
    degree: u32,
) -> Option<Vec<Tps>> {
    let space = TpsSpace::new(dirs.len(), degree);
    let args: Vec<Tps> = (0..x.len())
        .map(|i| {
            let mut t = Tps::constant(&space, x[i]);
            for (k, d) in dirs.iter().enumerate() {
                t.axpy(d[i], &Tps::variable(&space, k, 0.0));
            }
            t
        })
        .collect();
    field.taylor(&args, u)
}

/// Central-difference Jacobian.
pub fn fd_jacobian<F: VectorField + ?Sized>(
    field: &F,
    x: &DVector<f64>,
    u: &DVector<f64>,
) -> DMatrix<f64> {
    let n = x.len();
    let mut jac = DMatrix::zeros(field.dim(), n);
    let mut xp = x.clone();
    for j in 0..n {
        let h = 1e-6 * x[j].abs().max(1.0);
        xp[j] = x[j] + h;
        let fp = field.eval(&xp, u);
        xp[j] = x[j] - h;
        let fm = field.eval(&xp, u);
        xp[j] = x[j];
        jac.set_column(j, &((fp - fm) / (2.0 * h)));
    }
    jac
}

impl<T: VectorField + ?Sized> VectorField for &T {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn n_inputs(&self) -> usize {
        (**self).n_inputs()
    }
    fn eval(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        (**self).eval(x, u)
    }
    fn eval_jacobian(&self, x: &DVector<f64>, u: &DVector<f64>) -> DMatrix<f64> {
        (**self).eval_jacobian(x, u)
    }
    fn forcing_gain(&self) -> f64 {
        (**self).forcing_gain()
    }
    fn taylor(&self, x: &[Tps], u: &DVector<f64>) -> Option<Vec<Tps>> {
        (**self).taylor(x, u)
    }
    fn second_derivative(
        &self,
        x: &DVector<f64>,
        u: &DVector<f64>,
        a: &DVector<f64>,
        b: &DVector<f64>,
    ) -> Option<DVector<f64>> {
        (**self).second_derivative(x, u, a, b)
    }
    fn third_derivative(
        &self,
        x: &DVector<f64>,
        u: &DVector<f64>,
        a: &DVector<f64>,
        b: &DVector<f64>,
        c: &DVector<f64>,
    ) -> Option<DVector<f64>> {
        (**self).third_derivative(x, u, a, b, c)
    }
}

impl<T: VectorField + ?Sized> VectorField for Box<T> {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn n_inputs(&self) -> usize {
        (**self).n_inputs()
    }
    fn eval(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        (**self).eval(x, u)
    }
    fn eval_jacobian(&self, x: &DVector<f64>, u: &DVector<f64>) -> DMatrix<f64> {
        (**self).eval_jacobian(x, u)
    }
    fn forcing_gain(&self) -> f64 {
        (**self).forcing_gain()
    }
    fn taylor(&self, x: &[Tps], u: &DVector<f64>) -> Option<Vec<Tps>> {
        (**self).taylor(x, u)
    }
    fn second_derivative(
        &self,
        x: &DVector<f64>,
        u: &DVector<f64>,
        a: &DVector<f64>,
        b: &DVector<f64>,
    ) -> Option<DVector<f64>> {
        (**self).second_derivative(x, u, a, b)
    }
    fn third_derivative(
        &self,
        x: &DVector<f64>,
        u: &DVector<f64>,
        a: &DVector<f64>,
        b: &DVector<f64>,
        c: &DVector<f64>,
    ) -> Option<DVector<f64>> {
        (**self).third_derivative(x, u, a, b, c)
    }
}

/// A field with its input frozen, seen as an input-free field.
pub struct Frozen<'a, F: VectorField + ?Sized> {
    pub field: &'a F,
    pub u: DVector<f64>,
}

impl<'a, F: VectorField + ?Sized> Frozen<'a, F> {
    pub fn new(field: &'a F, u: DVector<f64>) -> Self {
        Self { field, u }
    }
}

impl<F: VectorField + ?Sized> VectorField for Frozen<'_, F> {
    fn dim(&self) -> usize {
        self.field.dim()
    }
    fn eval(&self, x: &DVector<f64>, _u: &DVector<f64>) -> DVector<f64> {
        self.field.eval(x, &self.u)
    }
    fn eval_jacobian(&self, x: &DVector<f64>, _u: &DVector<f64>) -> DMatrix<f64> {
        self.field.eval_jacobian(x, &self.u)
    }
    fn forcing_gain(&self) -> f64 {
        self.field.forcing_gain()
    }
    fn taylor(&self, x: &[Tps], _u: &DVector<f64>) -> Option<Vec<Tps>> {
        self.field.taylor(x, &self.u)
    }
    fn second_derivative(
        &self,
        x: &DVector<f64>,
        _u: &DVector<f64>,
        a: &DVector<f64>,
        b: &DVector<f64>,
    ) -> Option<DVector<f64>> {
        self.field.second_derivative(x, &self.u, a, b)
    }
    fn third_derivative(
        &self,
        x: &DVector<f64>,
        _u: &DVector<f64>,
        a: &DVector<f64>,
        b: &DVector<f64>,
        c: &DVector<f64>,
    ) -> Option<DVector<f64>> {
        self.field.third_derivative(x, &self.u, a, b, c)
    }
}
