//! Continuous-time recurrent networks.
//!
//! Vanilla: `tau x' = -x + W r(x) + B u + bias`.
//! Gated:   `tau x' = -x + r(W x + B u + bias)`, with `W`, `B` read as the
//! recurrent and input weights of the multitask variant.
//!
//! Times are in the model's physical units, so every derivative carries the
//! factor `1 / tau`. [`RnnModel::rescaled`] returns the same network in the
//! rescaled time `t / tau`, where `tau = 1`.

use super::VectorField;
use crate::error::{Error, Result};
use crate::tps::Tps;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use std::path::Path;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Vanilla,
    Gated,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
}

impl Activation {
    pub fn value(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => x.tanh(),
        }
    }

    pub fn d1(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 / x.cosh().powi(2),
        }
    }

    pub fn d2(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => -2.0 * x.sinh() / x.cosh().powi(3),
        }
    }

    pub fn d3(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => (4.0 * x.sinh().powi(2) - 2.0) / x.cosh().powi(4),
        }
    }

    pub fn apply_series(self, t: &Tps) -> Tps {
        match self {
            Activation::Tanh => t.tanh(),
        }
    }

    /// Supremum of `|r|`.
    pub fn bound(self) -> f64 {
        match self {
            Activation::Tanh => 1.0,
        }
    }
}

/// Whether the readout sees the activated state `r(x)` or the raw state.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReadoutConvention {
    #[default]
    Activated,
    Linear,
}

/// Order-3 tensor that is diagonal in its trailing pair: entry `(i, j, j)`
/// is `coeffs[(i, j)]`, all others vanish.
#[derive(Clone, Debug, PartialEq)]
pub struct DiagTensor2 {
    pub coeffs: DMatrix<f64>,
}

impl DiagTensor2 {
    pub fn entry(&self, i: usize, j: usize, k: usize) -> f64 {
        if j == k {
            self.coeffs[(i, j)]
        } else {
            0.0
        }
    }

    pub fn contract(&self, a: &DVector<f64>, b: &DVector<f64>) -> DVector<f64> {
        &self.coeffs * a.component_mul(b)
    }
}

/// Order-4 tensor diagonal in its trailing triple: entry `(i, j, j, j)` is
/// `coeffs[(i, j)]`.
#[derive(Clone, Debug, PartialEq)]
pub struct DiagTensor3 {
    pub coeffs: DMatrix<f64>,
}

impl DiagTensor3 {
    pub fn entry(&self, i: usize, j: usize, k: usize, l: usize) -> f64 {
        if j == k && k == l {
            self.coeffs[(i, j)]
        } else {
            0.0
        }
    }

    pub fn contract(&self, a: &DVector<f64>, b: &DVector<f64>, c: &DVector<f64>) -> DVector<f64> {
        &self.coeffs * a.component_mul(b).component_mul(c)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RnnModel {
    pub n_units: usize,
    pub n_inputs: usize,
    pub n_outputs: usize,
    pub tau: f64,
    pub variant: Variant,
    pub activation: Activation,
    pub readout_convention: ReadoutConvention,
    pub w: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub y: DMatrix<f64>,
    pub bias: DVector<f64>,
}

impl RnnModel {
    pub fn new(
        variant: Variant,
        tau: f64,
        w: DMatrix<f64>,
        b: DMatrix<f64>,
        y: DMatrix<f64>,
    ) -> Result<Self> {
        let n = w.nrows();
        let model = Self {
            n_units: n,
            n_inputs: b.ncols(),
            n_outputs: y.nrows(),
            tau,
            variant,
            activation: Activation::Tanh,
            readout_convention: ReadoutConvention::Activated,
            w,
            b,
            y,
            bias: DVector::zeros(n),
        };
        model.validate()?;
        Ok(model)
    }

    pub fn vanilla(tau: f64, w: DMatrix<f64>, b: DMatrix<f64>, y: DMatrix<f64>) -> Result<Self> {
        Self::new(Variant::Vanilla, tau, w, b, y)
    }

    pub fn with_bias(mut self, bias: DVector<f64>) -> Result<Self> {
        self.bias = bias;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n_units;
        if n == 0 {
            return Err(Error::Validation("n_units must be positive".into()));
        }
        if self.n_inputs == 0 || self.n_outputs == 0 {
            return Err(Error::Validation(
                "n_inputs and n_outputs must be positive".into(),
            ));
        }
        if !(self.tau.is_finite() && self.tau > 0.0) {
            return Err(Error::Validation(format!(
                "tau must be positive and finite, got {}",
                self.tau
            )));
        }
        let shape = |name: &str, m: &DMatrix<f64>, r: usize, c: usize| -> Result<()> {
            if m.nrows() != r || m.ncols() != c {
                return Err(Error::Validation(format!(
                    "{name} must be {r}x{c}, got {}x{}",
                    m.nrows(),
                    m.ncols()
                )));
            }
            if m.iter().any(|v| !v.is_finite()) {
                return Err(Error::Validation(format!("{name} has non-finite entries")));
            }
            Ok(())
        };
        shape("W", &self.w, n, n)?;
        shape("B", &self.b, n, self.n_inputs)?;
        shape("Y", &self.y, self.n_outputs, n)?;
        if self.bias.len() != n || self.bias.iter().any(|v| !v.is_finite()) {
            return Err(Error::Validation(format!(
                "bias must be a finite {n}-vector"
            )));
        }
        Ok(())
    }

    /// Same network in rescaled time `t / tau`.
    pub fn rescaled(&self) -> Self {
        Self {
            tau: 1.0,
            ..self.clone()
        }
    }

    fn check_x(&self, x: &DVector<f64>) -> Result<()> {
        if x.len() != self.n_units {
            return Err(Error::dims("state", self.n_units, x.len()));
        }
        Ok(())
    }

    fn check_u(&self, u: &DVector<f64>) -> Result<()> {
        if u.len() != self.n_inputs {
            return Err(Error::dims("input", self.n_inputs, u.len()));
        }
        Ok(())
    }

    fn pre_activation(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        &self.w * x + &self.b * u + &self.bias
    }

    fn eval_unchecked(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        let act = self.activation;
        match self.variant {
            Variant::Vanilla => {
                let r = x.map(|v| act.value(v));
                (-x + &self.w * r + &self.b * u + &self.bias) / self.tau
            }
            Variant::Gated => {
                let a = self.pre_activation(x, u);
                (-x + a.map(|v| act.value(v))) / self.tau
            }
        }
    }

    fn jacobian_unchecked(&self, x: &DVector<f64>, u: &DVector<f64>) -> DMatrix<f64> {
        let n = self.n_units;
        let act = self.activation;
        let mut jac = match self.variant {
            Variant::Vanilla => {
                let mut j = self.w.clone();
                for (col, &xj) in x.iter().enumerate() {
                    let s = act.d1(xj);
                    j.column_mut(col).scale_mut(s);
                }
                j
            }
            Variant::Gated => {
                let a = self.pre_activation(x, u);
                let mut j = self.w.clone();
                for (row, &ai) in a.iter().enumerate() {
                    let s = act.d1(ai);
                    j.row_mut(row).scale_mut(s);
                }
                j
            }
        };
        for i in 0..n {
            jac[(i, i)] -= 1.0;
        }
        jac / self.tau
    }

    /// `(-x + W r(x) + B u) / tau` (vanilla) or the gated analogue.
    pub fn rhs(&self, x: &DVector<f64>, u: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_x(x)?;
        self.check_u(u)?;
        Ok(self.eval_unchecked(x, u))
    }

    /// Exact Jacobian of [`rhs`](Self::rhs).
    pub fn jacobian(&self, x: &DVector<f64>, u: &DVector<f64>) -> Result<DMatrix<f64>> {
        self.check_x(x)?;
        self.check_u(u)?;
        Ok(self.jacobian_unchecked(x, u))
    }

    fn require_vanilla(&self, what: &str) -> Result<()> {
        if self.variant != Variant::Vanilla {
            return Err(Error::Unsupported(format!(
                "{what} is only available for the vanilla variant"
            )));
        }
        Ok(())
    }

    /// Second derivative of the vanilla field, entries `W_ij r''(x_j) / tau`
    /// on the diagonal slice.
    pub fn derivative_tensor_2(&self, x: &DVector<f64>) -> Result<DiagTensor2> {
        self.require_vanilla("derivative_tensor_2")?;
        self.check_x(x)?;
        Ok(DiagTensor2 {
            coeffs: self.scaled_columns(x, |v| self.activation.d2(v)),
        })
    }

    /// Third derivative of the vanilla field, entries `W_ij r'''(x_j) / tau`.
    pub fn derivative_tensor_3(&self, x: &DVector<f64>) -> Result<DiagTensor3> {
        self.require_vanilla("derivative_tensor_3")?;
        self.check_x(x)?;
        Ok(DiagTensor3 {
            coeffs: self.scaled_columns(x, |v| self.activation.d3(v)),
        })
    }

    fn scaled_columns(&self, x: &DVector<f64>, g: impl Fn(f64) -> f64) -> DMatrix<f64> {
        let mut m = self.w.clone();
        for (col, &xj) in x.iter().enumerate() {
            m.column_mut(col).scale_mut(g(xj) / self.tau);
        }
        m
    }

    /// `z = Y r(x)`, or `z = Y x` under the linear readout convention.
    pub fn readout(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_x(x)?;
        Ok(match self.readout_convention {
            ReadoutConvention::Activated => &self.y * x.map(|v| self.activation.value(v)),
            ReadoutConvention::Linear => &self.y * x,
        })
    }

    pub fn to_json(&self) -> Value {
        let mat = |m: &DMatrix<f64>| -> Value {
            Value::Array(
                (0..m.nrows())
                    .map(|r| Value::Array(m.row(r).iter().map(|&v| Value::from(v)).collect()))
                    .collect(),
            )
        };
        let mut obj = Map::new();
        obj.insert("n_units".into(), self.n_units.into());
        obj.insert("n_inputs".into(), self.n_inputs.into());
        obj.insert("n_outputs".into(), self.n_outputs.into());
        obj.insert("tau".into(), self.tau.into());
        obj.insert("variant".into(), serde_json::to_value(self.variant).unwrap());
        obj.insert(
            "activation".into(),
            serde_json::to_value(self.activation).unwrap(),
        );
        obj.insert("W".into(), mat(&self.w));
        obj.insert("B".into(), mat(&self.b));
        obj.insert("Y".into(), mat(&self.y));
        if self.bias.iter().any(|&v| v != 0.0) {
            obj.insert(
                "bias".into(),
                Value::Array(self.bias.iter().map(|&v| Value::from(v)).collect()),
            );
        }
        if self.readout_convention != ReadoutConvention::Activated {
            obj.insert(
                "readout".into(),
                serde_json::to_value(self.readout_convention).unwrap(),
            );
        }
        Value::Object(obj)
    }

    pub fn from_json(value: &Value) -> Result<Self> {
        let obj = value.as_object().ok_or_else(|| Error::Parse {
            field: "<root>".into(),
            message: "model file must be a JSON object".into(),
        })?;
        let get = |field: &str| -> Result<&Value> {
            obj.get(field).ok_or_else(|| Error::Parse {
                field: field.into(),
                message: "missing field".into(),
            })
        };
        let count = |field: &str| -> Result<usize> {
            get(field)?
                .as_u64()
                .filter(|&v| v > 0)
                .map(|v| v as usize)
                .ok_or_else(|| Error::Parse {
                    field: field.into(),
                    message: "expected a positive integer".into(),
                })
        };
        let n_units = count("n_units")?;
        let n_inputs = count("n_inputs")?;
        let n_outputs = count("n_outputs")?;
        let tau = get("tau")?.as_f64().ok_or_else(|| Error::Parse {
            field: "tau".into(),
            message: "expected a number".into(),
        })?;
        let enum_field = |field: &str| -> Result<Value> {
            let v = get(field)?;
            if !v.is_string() {
                return Err(Error::Parse {
                    field: field.into(),
                    message: "expected a string".into(),
                });
            }
            Ok(v.clone())
        };
        let variant: Variant =
            serde_json::from_value(enum_field("variant")?).map_err(|e| Error::Parse {
                field: "variant".into(),
                message: e.to_string(),
            })?;
        let activation: Activation =
            serde_json::from_value(enum_field("activation")?).map_err(|e| Error::Parse {
                field: "activation".into(),
                message: e.to_string(),
            })?;
        let w = parse_matrix(get("W")?, "W", n_units, n_units)?;
        let b = parse_matrix(get("B")?, "B", n_units, n_inputs)?;
        let y = parse_matrix(get("Y")?, "Y", n_outputs, n_units)?;
        let bias = match obj.get("bias") {
            None => DVector::zeros(n_units),
            Some(v) => {
                let m = parse_matrix(&Value::Array(vec![v.clone()]), "bias", 1, n_units)?;
                DVector::from_iterator(n_units, m.row(0).iter().copied())
            }
        };
        let readout_convention = match obj.get("readout") {
            None => ReadoutConvention::Activated,
            Some(v) => serde_json::from_value(v.clone()).map_err(|e| Error::Parse {
                field: "readout".into(),
                message: e.to_string(),
            })?,
        };
        let model = Self {
            n_units,
            n_inputs,
            n_outputs,
            tau,
            variant,
            activation,
            readout_convention,
            w,
            b,
            y,
            bias,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let value: Value = serde_json::from_str(&text).map_err(|e| Error::Parse {
            field: "<root>".into(),
            message: format!("{}: {e}", path.display()),
        })?;
        Self::from_json(&value)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(&self.to_json()).expect("model serializes");
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}

fn parse_matrix(v: &Value, field: &str, rows: usize, cols: usize) -> Result<DMatrix<f64>> {
    let err = |message: String| Error::Parse {
        field: field.into(),
        message,
    };
    let outer = v
        .as_array()
        .ok_or_else(|| err("expected an array of rows".into()))?;
    if outer.len() != rows {
        return Err(err(format!("expected {rows} rows, got {}", outer.len())));
    }
    let mut m = DMatrix::zeros(rows, cols);
    for (r, row) in outer.iter().enumerate() {
        let row = row
            .as_array()
            .ok_or_else(|| err(format!("row {r} is not an array")))?;
        if row.len() != cols {
            return Err(err(format!(
                "row {r}: expected {cols} entries, got {}",
                row.len()
            )));
        }
        for (c, x) in row.iter().enumerate() {
            let x = x
                .as_f64()
                .ok_or_else(|| err(format!("entry ({r}, {c}) is not a number")))?;
            if !x.is_finite() {
                return Err(err(format!("entry ({r}, {c}) is not finite")));
            }
            m[(r, c)] = x;
        }
    }
    Ok(m)
}

impl VectorField for RnnModel {
    fn dim(&self) -> usize {
        self.n_units
    }

    fn n_inputs(&self) -> usize {
        self.n_inputs
    }

    fn eval(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        debug_assert_eq!(x.len(), self.n_units);
        debug_assert_eq!(u.len(), self.n_inputs);
        self.eval_unchecked(x, u)
    }

    fn eval_jacobian(&self, x: &DVector<f64>, u: &DVector<f64>) -> DMatrix<f64> {
        self.jacobian_unchecked(x, u)
    }

    fn forcing_gain(&self) -> f64 {
        1.0 / self.tau
    }

    fn taylor(&self, x: &[Tps], u: &DVector<f64>) -> Option<Vec<Tps>> {
        let n = self.n_units;
        let space = x.first()?.space().clone();
        let drive = &self.b * u + &self.bias;
        let act = self.activation;
        let out = match self.variant {
            Variant::Vanilla => {
                let r: Vec<Tps> = x.iter().map(|t| act.apply_series(t)).collect();
                (0..n)
                    .map(|i| {
                        let mut fi = x[i].scale(-1.0);
                        fi.add_constant(drive[i]);
                        for (j, rj) in r.iter().enumerate() {
                            let wij = self.w[(i, j)];
                            if wij != 0.0 {
                                fi.axpy(wij, rj);
                            }
                        }
                        fi.scale(1.0 / self.tau)
                    })
                    .collect()
            }
            Variant::Gated => (0..n)
                .map(|i| {
                    let mut a = Tps::constant(&space, drive[i]);
                    for (j, xj) in x.iter().enumerate() {
                        let wij = self.w[(i, j)];
                        if wij != 0.0 {
                            a.axpy(wij, xj);
                        }
                    }
                    let mut fi = act.apply_series(&a);
                    fi.axpy(-1.0, &x[i]);
                    fi.scale(1.0 / self.tau)
                })
                .collect(),
        };
        Some(out)
    }

    fn second_derivative(
        &self,
        x: &DVector<f64>,
        u: &DVector<f64>,
        a: &DVector<f64>,
        b: &DVector<f64>,
    ) -> Option<DVector<f64>> {
        match self.variant {
            Variant::Vanilla => Some(self.derivative_tensor_2(x).ok()?.contract(a, b)),
            Variant::Gated => {
                let pre = self.pre_activation(x, u);
                let wa = &self.w * a;
                let wb = &self.w * b;
                let act = self.activation;
                Some(DVector::from_iterator(
                    self.n_units,
                    (0..self.n_units).map(|i| act.d2(pre[i]) * wa[i] * wb[i] / self.tau),
                ))
            }
        }
    }

    fn third_derivative(
        &self,
        x: &DVector<f64>,
        u: &DVector<f64>,
        a: &DVector<f64>,
        b: &DVector<f64>,
        c: &DVector<f64>,
    ) -> Option<DVector<f64>> {
        match self.variant {
            Variant::Vanilla => Some(self.derivative_tensor_3(x).ok()?.contract(a, b, c)),
            Variant::Gated => {
                let pre = self.pre_activation(x, u);
                let (wa, wb, wc) = (&self.w * a, &self.w * b, &self.w * c);
                let act = self.activation;
                Some(DVector::from_iterator(
                    self.n_units,
                    (0..self.n_units)
                        .map(|i| act.d3(pre[i]) * wa[i] * wb[i] * wc[i] / self.tau),
                ))
            }
        }
    }
}
