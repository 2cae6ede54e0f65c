use crate::error::{Error, Result};
use crate::linalg::orthonormalize;
use crate::model::VectorField;
use crate::steady::{linearize, BifurcationDiagram, SpectralDecomposition};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RhoBound {
    Finite(u64),
    /// Tangential expansion: normal attraction dominates at every order.
    Unbounded,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TypeNumbers {
    /// `exp` of the largest normal real part.
    pub nu: f64,
    /// Strongest tangential rate over the largest normal rate.
    pub sigma: f64,
    /// Declared only when `nu < 1`.
    pub rho: Option<RhoBound>,
    pub normally_attracting: bool,
    /// `1 - nu`; negative when normal attraction fails.
    pub margin: f64,
    pub lambda_tangent: f64,
    pub lambda_normal: f64,
}

/// Type numbers of a limit set from the real parts of the full spectrum and
/// the indices of the directions tangent to the manifold.
pub fn lyapunov_type_numbers(real_parts: &[f64], tangent: &[usize]) -> Result<TypeNumbers> {
    let n = real_parts.len();
    if tangent.is_empty() || tangent.len() >= n {
        return Err(Error::Validation(
            "type numbers need a nonempty, proper set of tangent directions".into(),
        ));
    }
    if let Some(&i) = tangent.iter().find(|&&i| i >= n) {
        return Err(Error::Validation(format!("tangent index {i} out of range")));
    }
    let lambda_normal = (0..n)
        .filter(|i| !tangent.contains(i))
        .map(|i| real_parts[i])
        .fold(f64::NEG_INFINITY, f64::max);
    let lambda_tangent = tangent.iter().map(|&i| real_parts[i]).fold(f64::INFINITY, f64::min);
    let nu = lambda_normal.exp();
    let sigma = lambda_tangent / lambda_normal;
    let normally_attracting = nu < 1.0;
    let rho = normally_attracting.then(|| {
        if sigma > 0.0 {
            RhoBound::Finite((1.0 / sigma * (1.0 + 1e-12)).floor() as u64)
        } else {
            RhoBound::Unbounded
        }
    });
    Ok(TypeNumbers {
        nu,
        sigma,
        rho,
        normally_attracting,
        margin: 1.0 - nu,
        lambda_tangent,
        lambda_normal,
    })
}

/// Eigen-directions best aligned with the columns of `tangent` (one per
/// column). A tie at the cut is an error.
pub fn identify_tangent(spec: &SpectralDecomposition, tangent: &DMatrix<f64>) -> Result<Vec<usize>> {
    let k = tangent.ncols();
    let n = spec.dim();
    if tangent.nrows() != n {
        return Err(Error::dims("tangent basis rows", n, tangent.nrows()));
    }
    if k == 0 || k >= n {
        return Err(Error::Validation("tangent basis must span a proper subspace".into()));
    }
    let t = orthonormalize(tangent);
    let mut scored: Vec<(usize, f64)> = spec
        .eigenvectors
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let re = v.map(|z| z.re);
            let im = v.map(|z| z.im);
            let total = re.norm_squared() + im.norm_squared();
            let proj = (t.transpose() * &re).norm_squared() + (t.transpose() * &im).norm_squared();
            (i, (proj / total).sqrt())
        })
        .collect();
    scored.sort_by(|a, b| b.1.total_cmp(&a.1));
    if (scored[k - 1].1 - scored[k].1).abs() < 1e-6 {
        return Err(Error::Validation(format!(
            "ambiguous tangent direction: alignments {} and {} tie",
            scored[k - 1].1,
            scored[k].1
        )));
    }
    let mut idx: Vec<usize> = scored[..k].iter().map(|s| s.0).collect();
    idx.sort_unstable();
    Ok(idx)
}

/// Indices of the `d` largest real parts.
pub fn slowest_indices(real_parts: &[f64], d: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..real_parts.len()).collect();
    order.sort_by(|&a, &b| real_parts[b].total_cmp(&real_parts[a]));
    let mut idx = order[..d.min(order.len())].to_vec();
    idx.sort_unstable();
    idx
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TypeNumberRow {
    pub mu: f64,
    pub n_points: usize,
    pub sup_nu: Option<f64>,
    pub sup_sigma: Option<f64>,
    /// Filled by linear interpolation across a step without fixed points.
    pub interpolated: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TypeNumberScan {
    pub rows: Vec<TypeNumberRow>,
    pub sup_nu: f64,
    pub sup_sigma: f64,
}

/// Supremum of the type numbers over all fixed points at each parameter
/// step of a continuation diagram, with the `d` slowest directions taken
/// as tangent to the tracked manifold.
pub fn type_number_scan<F: VectorField + ?Sized>(
    field: &F,
    diagram: &BifurcationDiagram,
    d: usize,
) -> Result<TypeNumberScan> {
    let mut rows = Vec::with_capacity(diagram.mus.len());
    for (step, &mu) in diagram.mus.iter().enumerate() {
        let pts = diagram.at_step(step);
        let mut sup_nu: Option<f64> = None;
        let mut sup_sigma: Option<f64> = None;
        for p in &pts {
            let spec = linearize(field, &p.fixed_point)?;
            let re = spec.real_parts();
            let tn = lyapunov_type_numbers(&re, &slowest_indices(&re, d))?;
            sup_nu = Some(sup_nu.map_or(tn.nu, |v| v.max(tn.nu)));
            sup_sigma = Some(sup_sigma.map_or(tn.sigma, |v| v.max(tn.sigma)));
        }
        rows.push(TypeNumberRow {
            mu,
            n_points: pts.len(),
            sup_nu,
            sup_sigma,
            interpolated: false,
        });
    }
    let filled: Vec<usize> = (0..rows.len()).filter(|&i| rows[i].sup_nu.is_some()).collect();
    for w in filled.windows(2) {
        let (a, b) = (w[0], w[1]);
        for i in a + 1..b {
            let s = (rows[i].mu - rows[a].mu) / (rows[b].mu - rows[a].mu);
            let lerp = |x: f64, y: f64| x + s * (y - x);
            rows[i].sup_nu = Some(lerp(rows[a].sup_nu.unwrap(), rows[b].sup_nu.unwrap()));
            rows[i].sup_sigma = Some(lerp(rows[a].sup_sigma.unwrap(), rows[b].sup_sigma.unwrap()));
            rows[i].interpolated = true;
        }
    }
    let sup_nu = rows.iter().filter_map(|r| r.sup_nu).fold(f64::NEG_INFINITY, f64::max);
    let sup_sigma = rows.iter().filter_map(|r| r.sup_sigma).fold(f64::NEG_INFINITY, f64::max);
    Ok(TypeNumberScan { rows, sup_nu, sup_sigma })
}
