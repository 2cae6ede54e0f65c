use super::FixedPoint;
use crate::error::{Error, Result};
use crate::linalg::{eigen, orthonormalize};
use crate::model::VectorField;
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

/// Relative size below which an imaginary part is treated as zero.
const REAL_TOL: f64 = 1e-10;

/// Sorted spectrum with a real block-diagonalizing basis.
///
/// Eigenvalues are sorted by descending real part; a conjugate pair is kept
/// adjacent with the positive imaginary part first. Column `j` of the
/// realizer `T` belongs to eigenvalue `j`: a real eigenvector, or the real
/// and imaginary parts `[p, q]` of `v = p + i q` for a pair, so that
/// `T^-1 A T` carries the block `(a, b; -b, a)` for `a + i b`.
#[derive(Clone, Debug)]
pub struct SpectralDecomposition {
    pub matrix: DMatrix<f64>,
    pub eigenvalues: Vec<Complex64>,
    pub eigenvectors: Vec<DVector<Complex64>>,
    pub realizer: DMatrix<f64>,
    pub realizer_inverse: DMatrix<f64>,
    /// 2-norm condition number of the realizer.
    pub realizer_condition: f64,
}

fn normalize_phase(v: &DVector<Complex64>) -> DVector<Complex64> {
    let (imax, _) = v
        .iter()
        .enumerate()
        .fold((0, -1.0), |acc, (i, z)| {
            if z.norm() > acc.1 + 1e-12 {
                (i, z.norm())
            } else {
                acc
            }
        });
    let pivot = v[imax];
    let phase = if pivot.norm() > 0.0 {
        pivot.conj() / pivot.norm()
    } else {
        Complex64::new(1.0, 0.0)
    };
    let w = v * phase;
    let norm = w.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    w / Complex64::new(norm, 0.0)
}

impl SpectralDecomposition {
    pub fn new(a: &DMatrix<f64>) -> Result<Self> {
        let n = a.nrows();
        let (values, vectors) = eigen(a)?;
        let scale = a.amax().max(1.0);
        let mut units: Vec<(Complex64, DVector<Complex64>, bool)> = Vec::new();
        for (l, v) in values.into_iter().zip(vectors) {
            if l.im.abs() <= REAL_TOL * scale {
                let re = DVector::from_iterator(n, v.iter().map(|z| z.re));
                let im = DVector::from_iterator(n, v.iter().map(|z| z.im));
                let real = if re.norm() >= im.norm() { re } else { im };
                let real = real.map(|x| Complex64::new(x, 0.0));
                units.push((Complex64::new(l.re, 0.0), normalize_phase(&real), false));
            } else if l.im > 0.0 {
                units.push((l, normalize_phase(&v), true));
            }
        }
        units.sort_by(|a, b| b.0.re.total_cmp(&a.0.re).then(b.0.im.total_cmp(&a.0.im)));

        let mut eigenvalues = Vec::with_capacity(n);
        let mut eigenvectors = Vec::with_capacity(n);
        for (l, v, pair) in units {
            if pair {
                eigenvalues.push(l);
                eigenvectors.push(v.clone());
                eigenvalues.push(l.conj());
                eigenvectors.push(v.map(|z| z.conj()));
            } else {
                eigenvalues.push(l);
                eigenvectors.push(v);
            }
        }
        if eigenvalues.len() != n {
            return Err(Error::Eigen(format!(
                "could not pair complex eigenvalues ({} of {n} recovered); max |A| = {:e}",
                eigenvalues.len(),
                a.amax()
            )));
        }

        let mut realizer = DMatrix::zeros(n, n);
        let mut j = 0;
        while j < n {
            let v = &eigenvectors[j];
            if eigenvalues[j].im == 0.0 {
                realizer.set_column(j, &v.map(|z| z.re));
                j += 1;
            } else {
                realizer.set_column(j, &v.map(|z| z.re));
                realizer.set_column(j + 1, &v.map(|z| z.im));
                j += 2;
            }
        }
        let sv = realizer.clone().svd(false, false).singular_values;
        let realizer_condition = sv.max() / sv.min();
        let realizer_inverse = realizer
            .clone()
            .try_inverse()
            .filter(|_| realizer_condition.is_finite() && realizer_condition < 1e14)
            .ok_or_else(|| {
                Error::Eigen(format!(
                    "eigenvector basis is singular or defective (condition {realizer_condition:e})"
                ))
            })?;
        Ok(Self {
            matrix: a.clone(),
            eigenvalues,
            eigenvectors,
            realizer,
            realizer_inverse,
            realizer_condition,
        })
    }

    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn real_parts(&self) -> Vec<f64> {
        self.eigenvalues.iter().map(|l| l.re).collect()
    }

    /// `T^-1 A T`.
    pub fn block_diagonal(&self) -> DMatrix<f64> {
        &self.realizer_inverse * &self.matrix * &self.realizer
    }

    /// Is eigenvalue `j` the first member of a conjugate pair?
    pub fn pair_starts_at(&self, j: usize) -> bool {
        self.eigenvalues[j].im > 0.0
    }

    pub fn max_residual(&self) -> f64 {
        let ac = self.matrix.map(|v| Complex64::new(v, 0.0));
        self.eigenvalues
            .iter()
            .zip(&self.eigenvectors)
            .map(|(l, v)| {
                (&ac * v - v * *l)
                    .iter()
                    .map(|z| z.norm())
                    .fold(0.0, f64::max)
            })
            .fold(0.0, f64::max)
    }
}

/// Spectrum of the Jacobian at a fixed point.
pub fn linearize<F: VectorField + ?Sized>(field: &F, fp: &FixedPoint) -> Result<SpectralDecomposition> {
    SpectralDecomposition::new(&field.eval_jacobian(&fp.x0, &fp.u))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpectralQuotient {
    Value(i64),
    /// Some inside eigenvalue has positive real part.
    UnstableCase,
}

impl SpectralQuotient {
    pub fn value(self) -> Option<i64> {
        match self {
            SpectralQuotient::Value(v) => Some(v),
            SpectralQuotient::UnstableCase => None,
        }
    }
}

fn check_indices(n: usize, indices: &[usize]) -> Result<()> {
    if indices.is_empty() {
        return Err(Error::Validation("empty spectral subset".into()));
    }
    if indices.len() >= n {
        return Err(Error::Validation(
            "spectral subset is the whole space; the quotient is undefined".into(),
        ));
    }
    let mut seen = vec![false; n];
    for &i in indices {
        if i >= n || seen[i] {
            return Err(Error::Validation(format!("invalid spectral index {i}")));
        }
        seen[i] = true;
    }
    Ok(())
}

/// `Int[ max_{outside} Re / min_{inside} Re ]`.
pub fn spectral_quotient(spec: &SpectralDecomposition, indices: &[usize]) -> Result<SpectralQuotient> {
    let n = spec.dim();
    check_indices(n, indices)?;
    let re = spec.real_parts();
    let inside: Vec<f64> = indices.iter().map(|&i| re[i]).collect();
    if inside.iter().any(|&r| r == 0.0) {
        return Err(Error::Validation("inside eigenvalue with zero real part".into()));
    }
    if inside.iter().any(|&r| r > 0.0) {
        return Ok(SpectralQuotient::UnstableCase);
    }
    let max_out = (0..n)
        .filter(|i| !indices.contains(i))
        .map(|i| re[i])
        .fold(f64::NEG_INFINITY, f64::max);
    let min_in = inside.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(SpectralQuotient::Value((max_out / min_in).floor() as i64))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResonanceHit {
    /// Multiplicity of each inside eigenvalue, in the order of the indices.
    pub multi_index: Vec<u32>,
    pub combination: f64,
    pub outside_index: usize,
    pub eigenvalue: f64,
    pub margin: f64,
}

pub const RESONANCE_TOL: f64 = 1e-6;

/// Enumerates `sum_j m_j Re(lambda_j)` over inside eigenvalues with
/// `2 <= |m| <= max_order` and reports matches with outside real parts
/// within the relative tolerance.
pub fn check_nonresonance(
    spec: &SpectralDecomposition,
    indices: &[usize],
    max_order: u32,
    rel_tol: f64,
) -> Result<Vec<ResonanceHit>> {
    let n = spec.dim();
    check_indices(n, indices)?;
    if max_order < 2 {
        return Err(Error::Validation("max_order must be at least 2".into()));
    }
    let re = spec.real_parts();
    let inside: Vec<f64> = indices.iter().map(|&i| re[i]).collect();
    let outside: Vec<usize> = (0..n).filter(|i| !indices.contains(i)).collect();
    let mut hits = Vec::new();
    for order in 2..=max_order {
        for m in crate::monomials::homogeneous_exponents(inside.len(), order) {
            let comb: f64 = m.iter().zip(&inside).map(|(&k, &r)| k as f64 * r).sum();
            for &k in &outside {
                let margin = (comb - re[k]).abs();
                if margin <= rel_tol * re[k].abs().max(f64::MIN_POSITIVE) {
                    hits.push(ResonanceHit {
                        multi_index: m.clone(),
                        combination: comb,
                        outside_index: k,
                        eigenvalue: re[k],
                        margin,
                    });
                }
            }
        }
    }
    Ok(hits)
}

/// Order bound for the nonresonance check: quotient + 1 for stable subsets,
/// otherwise the ratio of the extreme outside rate to the smallest inside
/// rate (plus one), capped at 30.
pub fn default_resonance_order(spec: &SpectralDecomposition, indices: &[usize]) -> Result<u32> {
    match spectral_quotient(spec, indices)? {
        SpectralQuotient::Value(q) => Ok((q + 1).clamp(2, 30) as u32),
        SpectralQuotient::UnstableCase => {
            let re = spec.real_parts();
            let min_in = indices
                .iter()
                .map(|&i| re[i].abs())
                .fold(f64::INFINITY, f64::min);
            let max_out = (0..spec.dim())
                .filter(|i| !indices.contains(i))
                .map(|i| re[i].abs())
                .fold(0.0, f64::max);
            Ok(((max_out / min_in).ceil() as i64 + 1).clamp(2, 30) as u32)
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SubspaceSelection {
    pub indices: Vec<usize>,
    #[serde(with = "crate::io::row_major")]
    pub v_e: DMatrix<f64>,
    pub inside_eigenvalues: Vec<(f64, f64)>,
    pub spectral_gap: f64,
    pub spectral_quotient: SpectralQuotient,
    pub nonresonance_report: Vec<ResonanceHit>,
    pub warnings: Vec<String>,
}

impl SubspaceSelection {
    pub fn d(&self) -> usize {
        self.indices.len()
    }
}

pub const GAP_TOL: f64 = 1e-8;

/// Picks the `d` slowest realified directions (or the cut at the largest
/// spectral gap when `d` is `None`).
pub fn select_slow_subspace(
    spec: &SpectralDecomposition,
    d: Option<usize>,
    strict: bool,
) -> Result<SubspaceSelection> {
    let n = spec.dim();
    let re = spec.real_parts();
    let mut warnings = Vec::new();
    let d = match d {
        Some(d) => {
            if d == 0 || d >= n {
                return Err(Error::Validation(format!("subspace dimension {d} out of range 1..{n}")));
            }
            if spec.pair_starts_at(d - 1) {
                if strict {
                    return Err(Error::DegenerateCut(format!(
                        "d = {d} would split a conjugate pair"
                    )));
                }
                warnings.push(format!(
                    "d = {d} would split a conjugate pair; using d = {}",
                    d + 1
                ));
                d + 1
            } else {
                d
            }
        }
        None => {
            let mut best = (0, f64::NEG_INFINITY);
            for k in 1..n {
                if spec.pair_starts_at(k - 1) {
                    continue;
                }
                let gap = re[k - 1] - re[k];
                if gap > best.1 + 1e-12 {
                    best = (k, gap);
                }
            }
            if best.0 == 0 {
                return Err(Error::DegenerateCut("no admissible cut".into()));
            }
            best.0
        }
    };
    if d >= n {
        return Err(Error::DegenerateCut("the slow subspace would be the whole space".into()));
    }
    let gap = re[d - 1] - re[d];
    if gap <= GAP_TOL {
        return Err(Error::DegenerateCut(format!(
            "spectral gap {gap:e} at the cut d = {d} is below {GAP_TOL:e}"
        )));
    }
    let indices: Vec<usize> = (0..d).collect();
    let v_e = orthonormalize(&spec.realizer.columns(0, d).into_owned());
    let quotient = spectral_quotient(spec, &indices)?;
    let order = default_resonance_order(spec, &indices)?;
    let report = check_nonresonance(spec, &indices, order, RESONANCE_TOL)?;
    Ok(SubspaceSelection {
        inside_eigenvalues: indices
            .iter()
            .map(|&i| (spec.eigenvalues[i].re, spec.eigenvalues[i].im))
            .collect(),
        indices,
        v_e,
        spectral_gap: gap,
        spectral_quotient: quotient,
        nonresonance_report: report,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn diag(values: &[f64]) -> SpectralDecomposition {
        SpectralDecomposition::new(&DMatrix::from_diagonal(&DVector::from_row_slice(values))).unwrap()
    }

    fn with_pair(a: f64, b: f64, rest: &[f64]) -> SpectralDecomposition {
        let n = 2 + rest.len();
        let mut m = DMatrix::zeros(n, n);
        m[(0, 0)] = a;
        m[(1, 1)] = a;
        m[(0, 1)] = b;
        m[(1, 0)] = -b;
        for (i, r) in rest.iter().enumerate() {
            m[(2 + i, 2 + i)] = *r;
        }
        SpectralDecomposition::new(&m).unwrap()
    }

    #[test]
    fn sorted_and_paired() {
        let s = with_pair(-0.1, 2.0, &[-5.0, 0.3]);
        let re = s.real_parts();
        assert_eq!(re, vec![0.3, -0.1, -0.1, -5.0]);
        assert!(s.eigenvalues[1].im > 0.0 && s.eigenvalues[2].im < 0.0);
        let b = s.block_diagonal();
        assert!((b[(1, 1)] + 0.1).abs() < 1e-12 && (b[(1, 2)].abs() - 2.0).abs() < 1e-12);
        assert!((b[(1, 2)] + b[(2, 1)]).abs() < 1e-12);
        assert!(s.max_residual() < 1e-12);
    }

    #[test]
    fn block_convention() {
        let s = with_pair(-1.0, 3.0, &[-4.0]);
        let b = s.block_diagonal();
        assert!((b[(0, 1)] - 3.0).abs() < 1e-12 && (b[(1, 0)] + 3.0).abs() < 1e-12);
    }

    #[test]
    fn quotient_examples() {
        assert_eq!(spectral_quotient(&diag(&[-1.0, -2.0, -10.0]), &[0, 1]).unwrap(), SpectralQuotient::Value(5));
        assert_eq!(spectral_quotient(&diag(&[-1.0, -10.0]), &[0]).unwrap(), SpectralQuotient::Value(10));
        assert_eq!(
            spectral_quotient(&diag(&[1.0, -5.0, -6.0]), &[0]).unwrap(),
            SpectralQuotient::UnstableCase
        );
        assert!(spectral_quotient(&diag(&[-1.0, -2.0]), &[0, 1]).is_err());
    }

    #[test]
    fn resonance_examples() {
        let hits = check_nonresonance(&diag(&[-1.0, -10.0]), &[0], 10, RESONANCE_TOL).unwrap();
        assert_eq!(hits.len(), 1);
        assert_eq!(hits[0].multi_index, vec![10]);
        assert!(check_nonresonance(&diag(&[-1.0, -2.5]), &[0], 3, RESONANCE_TOL).unwrap().is_empty());
        let s = with_pair(-1.0, 2.0, &[-7.0]);
        assert!(check_nonresonance(&s, &[0, 1], 3, RESONANCE_TOL).unwrap().is_empty());
    }

    #[test]
    fn selection_examples() {
        let s = diag(&[0.5, -3.0, -3.1, -3.3]);
        let sel = select_slow_subspace(&s, None, false).unwrap();
        assert_eq!(sel.d(), 1);
        assert!((sel.spectral_gap - 3.5).abs() < 1e-12);

        let s = with_pair(-0.1, 2.0, &[-5.0, -6.0]);
        let sel = select_slow_subspace(&s, Some(1), false).unwrap();
        assert_eq!(sel.d(), 2);
        assert_eq!(sel.warnings.len(), 1);
        assert!(select_slow_subspace(&s, Some(1), true).is_err());

        let s = with_pair(0.4, 12.0, &[-8.0, -9.0, -10.0]);
        let sel = select_slow_subspace(&s, None, false).unwrap();
        assert_eq!(sel.d(), 2);
        let g = sel.v_e.transpose() * &sel.v_e;
        assert!((g - DMatrix::<f64>::identity(2, 2)).amax() < 1e-12);
    }

    #[test]
    fn degenerate_cut_rejected() {
        assert!(matches!(
            select_slow_subspace(&diag(&[-1.0, -1.0, -1.0]), Some(1), false),
            Err(Error::DegenerateCut(_))
        ));
    }
}
