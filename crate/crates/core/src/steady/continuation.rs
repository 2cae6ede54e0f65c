use super::{find_fixed_points, FixedPoint, NewtonOptions, Stability};
use crate::error::{Error, Result};
use crate::io::Table;
use crate::model::VectorField;
use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContinuationOptions {
    /// Fresh random seeds per parameter value.
    pub n_random_seeds: usize,
    /// Half-width of the box the random seeds are drawn from, around the
    /// first supplied seed.
    pub seed_radius: f64,
    pub seed: u64,
    pub newton: NewtonOptions,
    pub branch_match_tol: f64,
    pub sn_tol: f64,
}

impl Default for ContinuationOptions {
    fn default() -> Self {
        Self {
            n_random_seeds: 50,
            seed_radius: 2.0,
            seed: 0,
            newton: NewtonOptions::default(),
            branch_match_tol: 0.5,
            sn_tol: 1e-3,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BranchPoint {
    pub mu: f64,
    pub step: usize,
    pub branch_id: usize,
    pub fixed_point: FixedPoint,
    pub readout_z0: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EventKind {
    SaddleNode,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BifurcationEvent {
    pub mu_lo: f64,
    pub mu_hi: f64,
    #[serde(rename = "type")]
    pub kind: EventKind,
    pub branch_ids: Vec<usize>,
    /// Real part closest to zero on the surviving endpoints.
    pub re_lambda_nearest_zero: f64,
    /// Whether that real part is below `sn_tol`.
    pub eigenvalue_confirmed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UnmatchedBranchEnd {
    pub mu_lo: f64,
    pub mu_hi: f64,
    pub branch_id: usize,
    pub appeared: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BifurcationDiagram {
    pub mus: Vec<f64>,
    pub points: Vec<BranchPoint>,
    pub events: Vec<BifurcationEvent>,
    pub unmatched: Vec<UnmatchedBranchEnd>,
    pub n_branches: usize,
}

impl BifurcationDiagram {
    pub fn at_step(&self, step: usize) -> Vec<&BranchPoint> {
        self.points.iter().filter(|p| p.step == step).collect()
    }

    pub fn count_at_step(&self, step: usize) -> usize {
        self.points.iter().filter(|p| p.step == step).count()
    }

    pub fn branch(&self, id: usize) -> Vec<&BranchPoint> {
        self.points.iter().filter(|p| p.branch_id == id).collect()
    }

    /// `mu,branch_id,readout_z0,re_lambda_max,stability`, with stability coded
    /// 0 = stable, 1 = unstable, 2 = nonhyperbolic.
    pub fn to_table(&self) -> Table {
        let mut t = Table::new(["mu", "branch_id", "readout_z0", "re_lambda_max", "stability"]);
        for p in &self.points {
            let code = match p.fixed_point.stability {
                Stability::Stable => 0.0,
                Stability::Unstable => 1.0,
                Stability::Nonhyperbolic => 2.0,
            };
            t.push(vec![
                p.mu,
                p.branch_id as f64,
                p.readout_z0,
                p.fixed_point.re_lambda_max,
                code,
            ]);
        }
        t
    }
}

/// Greedy nearest-neighbour matching of two point sets, closest pairs first.
fn match_points(prev: &[DVector<f64>], next: &[DVector<f64>], tol: f64) -> Vec<Option<usize>> {
    let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
    for (i, p) in prev.iter().enumerate() {
        for (j, q) in next.iter().enumerate() {
            let d = (p - q).norm();
            if d < tol {
                pairs.push((d, i, j));
            }
        }
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut used_prev = vec![false; prev.len()];
    let mut assign = vec![None; next.len()];
    for (_, i, j) in pairs {
        if !used_prev[i] && assign[j].is_none() {
            used_prev[i] = true;
            assign[j] = Some(i);
        }
    }
    assign
}

/// Grid scan of `u = u_base + mu * direction` with warm-started Newton,
/// branch matching and saddle-node event detection.
#[allow(clippy::too_many_arguments)]
pub fn continuation_scan<F, R>(
    field: &F,
    u_base: &DVector<f64>,
    direction: &DVector<f64>,
    mu_range: (f64, f64),
    n_steps: usize,
    seeds: &[DVector<f64>],
    readout: R,
    opts: &ContinuationOptions,
) -> Result<BifurcationDiagram>
where
    F: VectorField + ?Sized,
    R: Fn(&DVector<f64>) -> f64,
{
    if n_steps < 2 {
        return Err(Error::Validation("continuation needs n_steps >= 2".into()));
    }
    if seeds.is_empty() {
        return Err(Error::Validation("continuation needs at least one seed".into()));
    }
    if u_base.len() != field.n_inputs() || direction.len() != field.n_inputs() {
        return Err(Error::dims("continuation input", field.n_inputs(), direction.len()));
    }
    let n = field.dim();
    let center = seeds[0].clone();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mus: Vec<f64> = (0..n_steps)
        .map(|k| mu_range.0 + (mu_range.1 - mu_range.0) * k as f64 / (n_steps - 1) as f64)
        .collect();

    let mut points: Vec<BranchPoint> = Vec::new();
    let mut prev: Vec<(usize, FixedPoint)> = Vec::new();
    let mut prev_folds: Vec<BranchPoint> = Vec::new();
    let mut next_id = 0;
    let mut events = Vec::new();
    let mut unmatched = Vec::new();

    for (step, &mu) in mus.iter().enumerate() {
        let u = u_base + direction * mu;
        let mut all_seeds: Vec<DVector<f64>> = prev.iter().map(|(_, p)| p.x0.clone()).collect();
        all_seeds.extend(seeds.iter().cloned());
        for _ in 0..opts.n_random_seeds {
            all_seeds.push(DVector::from_fn(n, |i, _| {
                center[i] + rng.random_range(-opts.seed_radius..=opts.seed_radius)
            }));
        }
        let (found, folds): (Vec<FixedPoint>, Vec<FixedPoint>) =
            find_fixed_points(field, &u, &all_seeds, &opts.newton)?
                .points
                .into_iter()
                .partition(|p| p.stability != Stability::Nonhyperbolic);
        // Nonhyperbolic roots sit on the fold itself: they join the nearest
        // branch of the previous step and take no part in matching.
        let mut fold_points = Vec::new();
        for fp in folds {
            let nearest = prev
                .iter()
                .map(|(id, p)| ((&p.x0 - &fp.x0).norm(), *id))
                .filter(|(dist, _)| *dist <= opts.branch_match_tol)
                .min_by(|a, b| a.0.total_cmp(&b.0));
            let branch_id = match nearest {
                Some((_, id)) => id,
                None => {
                    next_id += 1;
                    next_id - 1
                }
            };
            fold_points.push(BranchPoint {
                mu,
                step,
                branch_id,
                readout_z0: readout(&fp.x0),
                fixed_point: fp,
            });
        }
        let fold_near = fold_points
            .iter()
            .chain(prev_folds.iter())
            .map(|p| p.fixed_point.re_lambda_nearest_zero)
            .min_by(|x, y| x.abs().total_cmp(&y.abs()));

        let prev_x: Vec<DVector<f64>> = prev.iter().map(|(_, p)| p.x0.clone()).collect();
        let next_x: Vec<DVector<f64>> = found.iter().map(|p| p.x0.clone()).collect();
        let assign = match_points(&prev_x, &next_x, opts.branch_match_tol);

        let mut current: Vec<(usize, FixedPoint)> = Vec::new();
        let mut appeared: Vec<usize> = Vec::new();
        for (j, fp) in found.into_iter().enumerate() {
            let id = match assign[j] {
                Some(i) => prev[i].0,
                None => {
                    next_id += 1;
                    appeared.push(j);
                    next_id - 1
                }
            };
            current.push((id, fp));
        }
        let vanished: Vec<usize> = (0..prev.len())
            .filter(|i| !assign.contains(&Some(*i)))
            .collect();

        if step > 0 {
            let mu_lo = mus[step - 1];
            let pair_up = |ends: Vec<(usize, &FixedPoint)>, appeared: bool,
                           events: &mut Vec<BifurcationEvent>,
                           unmatched: &mut Vec<UnmatchedBranchEnd>| {
                let mut used = vec![false; ends.len()];
                let mut candidates: Vec<(f64, usize, usize)> = Vec::new();
                for a in 0..ends.len() {
                    for b in (a + 1)..ends.len() {
                        let sa = ends[a].1.stability;
                        let sb = ends[b].1.stability;
                        if sa != sb {
                            candidates.push(((&ends[a].1.x0 - &ends[b].1.x0).norm(), a, b));
                        }
                    }
                }
                candidates.sort_by(|x, y| x.0.total_cmp(&y.0));
                for (_, a, b) in candidates {
                    if used[a] || used[b] {
                        continue;
                    }
                    used[a] = true;
                    used[b] = true;
                    let near = [ends[a].1, ends[b].1]
                        .iter()
                        .map(|p| p.re_lambda_nearest_zero)
                        .chain(fold_near)
                        .min_by(|x, y| x.abs().total_cmp(&y.abs()))
                        .unwrap();
                    let mut ids = vec![ends[a].0, ends[b].0];
                    ids.sort_unstable();
                    events.push(BifurcationEvent {
                        mu_lo,
                        mu_hi: mu,
                        kind: EventKind::SaddleNode,
                        branch_ids: ids,
                        re_lambda_nearest_zero: near,
                        eigenvalue_confirmed: near.abs() < opts.sn_tol,
                    });
                }
                for (k, (id, _)) in ends.iter().enumerate() {
                    if !used[k] {
                        unmatched.push(UnmatchedBranchEnd {
                            mu_lo,
                            mu_hi: mu,
                            branch_id: *id,
                            appeared,
                        });
                    }
                }
            };
            pair_up(
                vanished.iter().map(|&i| (prev[i].0, &prev[i].1)).collect(),
                false,
                &mut events,
                &mut unmatched,
            );
            pair_up(
                appeared.iter().map(|&j| (current[j].0, &current[j].1)).collect(),
                true,
                &mut events,
                &mut unmatched,
            );
        }

        points.extend(fold_points.iter().cloned());
        current.sort_by_key(|(id, _)| *id);
        for (id, fp) in &current {
            points.push(BranchPoint {
                mu,
                step,
                branch_id: *id,
                readout_z0: readout(&fp.x0),
                fixed_point: fp.clone(),
            });
        }
        prev = current;
        prev_folds = fold_points;
    }
    Ok(BifurcationDiagram {
        mus,
        points,
        events,
        unmatched,
        n_branches: next_id,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{PolynomialSystem, RnnModel};
    use nalgebra::DMatrix;

    fn saddle_node() -> PolynomialSystem {
        // x1' = mu + x1^2, x2' = -x2
        PolynomialSystem::builder(2, 1)
            .term(0, 1.0, &[0, 0, 1])
            .term(0, 1.0, &[2, 0, 0])
            .term(1, -1.0, &[0, 1, 0])
            .build()
            .unwrap()
    }

    #[test]
    fn normal_form_event_at_zero() {
        let opts = ContinuationOptions {
            n_random_seeds: 10,
            ..Default::default()
        };
        let d = continuation_scan(
            &saddle_node(),
            &DVector::zeros(1),
            &DVector::from_element(1, 1.0),
            (-1.0, 1.0),
            41,
            &[DVector::zeros(2)],
            |x| x[0],
            &opts,
        )
        .unwrap();
        for (k, &mu) in d.mus.iter().enumerate() {
            let expected = if mu < -1e-12 { 2 } else if mu > 1e-12 { 0 } else { 1 };
            if mu.abs() > 1e-12 {
                assert_eq!(d.count_at_step(k), expected, "mu = {mu}");
            }
        }
        assert_eq!(d.events.len(), 1, "{:#?} {:#?}", d.events, d.unmatched);
        assert_eq!(d.n_branches, 2);
        let e = &d.events[0];
        assert!(e.mu_lo <= 0.0 + 1e-12 && e.mu_hi >= -1e-12 && e.mu_hi - e.mu_lo <= 0.05 + 1e-12);
    }

    #[test]
    fn monotone_system_single_branch() {
        let m = RnnModel::vanilla(
            1.0,
            DMatrix::zeros(2, 2),
            DMatrix::from_row_slice(2, 1, &[1.0, 0.5]),
            DMatrix::from_row_slice(1, 2, &[1.0, 1.0]),
        )
        .unwrap();
        let opts = ContinuationOptions {
            n_random_seeds: 5,
            ..Default::default()
        };
        let d = continuation_scan(
            &m,
            &DVector::zeros(1),
            &DVector::from_element(1, 1.0),
            (-1.0, 1.0),
            11,
            &[DVector::zeros(2)],
            |x| x.sum(),
            &opts,
        )
        .unwrap();
        assert_eq!(d.n_branches, 1);
        assert!(d.events.is_empty());
        for p in &d.points {
            assert!((p.fixed_point.x0[0] - p.mu).abs() < 1e-10);
        }
    }
}
