use super::chart::{ChartDiagnostics, SsmChart};
use crate::error::{Error, Result};
use crate::linalg::eigen;
use crate::model::VectorField;
use crate::monomials::{homogeneous_exponents, MonomialBasis};
use crate::steady::RESONANCE_TOL;
use crate::tps::{Tps, TpsSpace};
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::sync::Arc;

/// Equation-driven chart together with the reduced vector field
/// `eta' = r(eta)` on the chart, as coefficients over degrees `1..=M`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaylorSsm {
    pub chart: SsmChart,
    pub reduced_basis: MonomialBasis,
    #[serde(with = "crate::io::row_major")]
    pub reduced_coeffs: DMatrix<f64>,
}

impl TaylorSsm {
    pub fn reduced_rhs(&self, eta: &DVector<f64>) -> DVector<f64> {
        &self.reduced_coeffs * self.reduced_basis.eval(eta.as_slice())
    }
}

/// Orthonormal basis of the orthogonal complement of the columns of `v`.
pub fn orthogonal_complement(v: &DMatrix<f64>) -> DMatrix<f64> {
    let (n, d) = v.shape();
    let mut full = DMatrix::zeros(n, n);
    full.columns_mut(0, d).copy_from(v);
    let mut filled = d;
    for k in 0..n {
        if filled == n {
            break;
        }
        let mut e = DVector::zeros(n);
        e[k] = 1.0;
        for _ in 0..2 {
            let basis = full.columns(0, filled);
            let coeffs = basis.transpose() * &e;
            e -= basis * coeffs;
        }
        let norm = e.norm();
        if norm > 1e-6 {
            full.set_column(filled, &(e / norm));
            filled += 1;
        }
    }
    full.columns(d, n - d).into_owned()
}

/// Resonances `sum_j m_j lambda_j = lambda_k` between the spectrum of the
/// restricted block and the complement block, for orders `2..=max_order`.
fn complex_resonance(
    inside: &[Complex64],
    outside: &[Complex64],
    max_order: u32,
) -> Option<(Vec<usize>, Complex64, Complex64)> {
    let mut best: Option<(f64, Vec<usize>, Complex64, Complex64)> = None;
    for order in 2..=max_order {
        for m in homogeneous_exponents(inside.len(), order) {
            let comb: Complex64 = m.iter().zip(inside).map(|(&k, &l)| l * k as f64).sum();
            for &l in outside {
                let rel = (comb - l).norm() / l.norm().max(comb.norm()).max(f64::MIN_POSITIVE);
                if rel <= RESONANCE_TOL && best.as_ref().is_none_or(|b| rel < b.0) {
                    best = Some((rel, m.iter().map(|&k| k as usize).collect(), comb, l));
                }
            }
        }
    }
    best.map(|(_, m, c, l)| (m, c, l))
}

fn tps_vec_from_matrix(space: &Arc<TpsSpace>, coeffs: &DMatrix<f64>, basis_index: &[usize]) -> Vec<Tps> {
    (0..coeffs.nrows())
        .map(|r| {
            let mut c = vec![0.0; space.len()];
            for (col, &idx) in basis_index.iter().enumerate() {
                c[idx] = coeffs[(r, col)];
            }
            Tps::from_coeffs(space, c)
        })
        .collect()
}

fn mat_times_tps(m: &DMatrix<f64>, v: &[Tps], space: &Arc<TpsSpace>) -> Vec<Tps> {
    (0..m.nrows())
        .map(|r| {
            let mut acc = Tps::zero(space);
            for (c, t) in v.iter().enumerate() {
                let a = m[(r, c)];
                if a != 0.0 {
                    acc.axpy(a, t);
                }
            }
            acc
        })
        .collect()
}

/// Solves the invariance equation order by order for the graph
/// `xi = g(eta)` over the span of `v_e` at the fixed point `x0`.
///
/// At degree `m` the coefficients `C` of `g_m` satisfy
/// `C K - A22 C = R_m`, where `K` represents `eta -> D phi_m(eta) A11 eta`
/// on the degree-`m` monomials and `R_m` collects all lower-order terms.
pub fn ssm_taylor<F: VectorField + ?Sized>(
    field: &F,
    x0: &DVector<f64>,
    u: &DVector<f64>,
    v_e: &DMatrix<f64>,
    m_max: u32,
) -> Result<TaylorSsm> {
    let n = field.dim();
    if x0.len() != n {
        return Err(Error::dims("anchor", n, x0.len()));
    }
    if v_e.nrows() != n {
        return Err(Error::dims("chart basis rows", n, v_e.nrows()));
    }
    if m_max < 2 {
        return Err(Error::Validation("chart order must be at least 2".into()));
    }
    let d = v_e.ncols();
    if d == 0 || d >= n {
        return Err(Error::Validation(format!("subspace dimension {d} out of range 1..{n}")));
    }
    let gram_err = (v_e.transpose() * v_e - DMatrix::<f64>::identity(d, d)).amax();
    if gram_err > 1e-8 {
        return Err(Error::Validation(format!(
            "V_E must have orthonormal columns (error {gram_err:e})"
        )));
    }
    let q = orthogonal_complement(v_e);
    let a = field.eval_jacobian(x0, u);
    let a11 = v_e.transpose() * &a * v_e;
    let a21 = q.transpose() * &a * v_e;
    let a22 = q.transpose() * &a * &q;
    if a21.amax() > 1e-8 * a.amax().max(1.0) {
        return Err(Error::Validation(format!(
            "span of V_E is not invariant under the linearization (leak {:e})",
            a21.amax()
        )));
    }
    let (lam_in, _) = eigen(&a11)?;
    let (lam_out, _) = eigen(&a22)?;
    if let Some((mi, comb, l)) = complex_resonance(&lam_in, &lam_out, m_max) {
        return Err(Error::Resonance {
            multi_index: mi,
            combination: comb.re,
            eigenvalue: l.re,
        });
    }

    let space = TpsSpace::new(d, m_max);
    let graph_basis = MonomialBasis::new(d, 2, m_max);
    let graph_index: Vec<usize> = graph_basis
        .exponents()
        .iter()
        .map(|e| space.index_of(e).expect("basis exponent within space"))
        .collect();
    let nq = n - d;
    let mut g_coeffs = DMatrix::<f64>::zeros(nq, graph_basis.len());
    let eta_vars: Vec<Tps> = (0..d).map(|i| Tps::variable(&space, i, 0.0)).collect();

    let reduced_and_normal = |g: &[Tps]| -> Result<(Vec<Tps>, Vec<Tps>)> {
        let lin_eta = mat_times_tps(v_e, &eta_vars, &space);
        let lin_xi = mat_times_tps(&q, g, &space);
        let args: Vec<Tps> = (0..n)
            .map(|i| {
                let mut t = &lin_eta[i] + &lin_xi[i];
                t.add_constant(x0[i]);
                t
            })
            .collect();
        let f = field.taylor(&args, u).ok_or_else(|| {
            Error::Unsupported("equation-driven fit needs a field with closed-form Taylor expansion".into())
        })?;
        Ok((
            mat_times_tps(&v_e.transpose(), &f, &space),
            mat_times_tps(&q.transpose(), &f, &space),
        ))
    };

    let mut col = 0;
    for order in 2..=m_max {
        let exps = homogeneous_exponents(d, order);
        let nm = exps.len();
        let g = tps_vec_from_matrix(&space, &g_coeffs, &graph_index);
        let (f1, f2) = reduced_and_normal(&g)?;
        // Dg . F1
        let mut dg_f1: Vec<Tps> = (0..nq).map(|_| Tps::zero(&space)).collect();
        for (r, gr) in g.iter().enumerate() {
            for (i, f1i) in f1.iter().enumerate() {
                let prod = &gr.derivative(i) * f1i;
                dg_f1[r].axpy(1.0, &prod);
            }
        }
        let local: HashMap<&[u32], usize> = exps.iter().enumerate().map(|(k, e)| (e.as_slice(), k)).collect();
        let mut rhs = DMatrix::<f64>::zeros(nq, nm);
        for (k, e) in exps.iter().enumerate() {
            let idx = space.index_of(e).expect("exponent within space");
            for r in 0..nq {
                rhs[(r, k)] = f2[r].coeffs()[idx] - dg_f1[r].coeffs()[idx];
            }
        }
        let mut kmat = DMatrix::<f64>::zeros(nm, nm);
        for (ai, alpha) in exps.iter().enumerate() {
            for i in 0..d {
                if alpha[i] == 0 {
                    continue;
                }
                for j in 0..d {
                    let w = alpha[i] as f64 * a11[(i, j)];
                    if w == 0.0 {
                        continue;
                    }
                    let mut beta = alpha.clone();
                    beta[i] -= 1;
                    beta[j] += 1;
                    kmat[(ai, local[beta.as_slice()])] += w;
                }
            }
        }
        // vec(C K - A22 C) = (K^T kron I - I kron A22) vec(C)
        let size = nq * nm;
        let mut sys = DMatrix::<f64>::zeros(size, size);
        for p in 0..nm {
            for s in 0..nm {
                let kv = kmat[(s, p)];
                if kv != 0.0 {
                    for r in 0..nq {
                        sys[(p * nq + r, s * nq + r)] += kv;
                    }
                }
            }
            for r in 0..nq {
                for r2 in 0..nq {
                    sys[(p * nq + r, p * nq + r2)] -= a22[(r, r2)];
                }
            }
        }
        let b = DVector::from_column_slice(rhs.as_slice());
        let sol = sys.lu().solve(&b).ok_or_else(|| Error::Resonance {
            multi_index: exps[0].iter().map(|&k| k as usize).collect(),
            combination: f64::NAN,
            eigenvalue: f64::NAN,
        })?;
        if !sol.iter().all(|v| v.is_finite()) {
            return Err(Error::Resonance {
                multi_index: exps[0].iter().map(|&k| k as usize).collect(),
                combination: f64::NAN,
                eigenvalue: f64::NAN,
            });
        }
        let c = DMatrix::from_column_slice(nq, nm, sol.as_slice());
        g_coeffs.columns_mut(col, nm).copy_from(&c);
        col += nm;
    }

    let g = tps_vec_from_matrix(&space, &g_coeffs, &graph_index);
    let (f1, _) = reduced_and_normal(&g)?;
    let reduced_basis = MonomialBasis::new(d, 1, m_max);
    let mut reduced_coeffs = DMatrix::zeros(d, reduced_basis.len());
    for (k, e) in reduced_basis.exponents().iter().enumerate() {
        let idx = space.index_of(e).expect("exponent within space");
        for i in 0..d {
            reduced_coeffs[(i, k)] = f1[i].coeffs()[idx];
        }
    }
    let mut chart = SsmChart::new(x0.clone(), v_e.clone(), graph_basis, &q * g_coeffs)?;
    chart.diagnostics = ChartDiagnostics {
        method: "equation-driven".into(),
        ..Default::default()
    };
    Ok(TaylorSsm {
        chart,
        reduced_basis,
        reduced_coeffs,
    })
}
