//! Classical two-factor AMMI: least-squares main effects, then an SVD of
//! the double-centred residual table.
//!
//! This is the frequentist baseline; it needs a complete table of cell
//! means and has no way to impute missing combinations.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Dataset;

const ZERO_SINGULAR: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AmmiFit {
    pub grand_mean: f64,
    pub row_effects: Vec<f64>,
    pub col_effects: Vec<f64>,
    /// Singular values, nonincreasing.
    pub lambda: Vec<f64>,
    /// `row_scores[q][i]`: component q, row i.
    pub row_scores: Vec<Vec<f64>>,
    pub col_scores: Vec<Vec<f64>>,
    /// Double-centred residuals, `residual_table[i][j]`.
    pub residual_table: Vec<Vec<f64>>,
}

impl AmmiFit {
    pub fn n_rows(&self) -> usize {
        self.row_effects.len()
    }

    pub fn n_cols(&self) -> usize {
        self.col_effects.len()
    }

    pub fn n_components(&self) -> usize {
        self.lambda.len()
    }

    /// Σ_q λ_q u_iq v_jq.
    pub fn interaction(&self, i: usize, j: usize) -> f64 {
        self.lambda
            .iter()
            .zip(self.row_scores.iter().zip(&self.col_scores))
            .map(|(l, (u, v))| l * u[i] * v[j])
            .sum()
    }

    /// Residual sum of squares of the fitted table against the input.
    pub fn residual_ss(&self) -> f64 {
        let mut ss = 0.0;
        for (i, row) in self.residual_table.iter().enumerate() {
            for (j, r) in row.iter().enumerate() {
                ss += (r - self.interaction(i, j)).powi(2);
            }
        }
        ss
    }
}

/// Fits AMMI with `q` components to a complete table of cell means.
pub fn fit_ammi_classical(table: &DMatrix<f64>, q: usize) -> Result<AmmiFit> {
    let (rows, cols) = table.shape();
    if rows < 2 || cols < 2 {
        return Err(Error::arg(format!("AMMI needs at least a 2×2 table, got {rows}×{cols}")));
    }
    let max_q = (rows - 1).min(cols - 1);
    if q == 0 || q > max_q {
        return Err(Error::arg(format!("Q must be in 1..={max_q} for a {rows}×{cols} table, got {q}")));
    }
    let missing = table.iter().filter(|x| !x.is_finite()).count();
    if missing > 0 {
        return Err(Error::IncompleteTable {
            missing,
            total: rows * cols,
        });
    }

    let grand_mean = table.mean();
    let row_effects: Vec<f64> = (0..rows).map(|i| table.row(i).mean() - grand_mean).collect();
    let col_effects: Vec<f64> = (0..cols).map(|j| table.column(j).mean() - grand_mean).collect();
    let residual = DMatrix::from_fn(rows, cols, |i, j| {
        table[(i, j)] - grand_mean - row_effects[i] - col_effects[j]
    });

    // SVD in zero-sum coordinates: the centred table always has an exact
    // null direction, and nalgebra's SVD can lose accuracy on it
    let (hr, hc) = (zero_sum_basis(rows), zero_sum_basis(cols));
    let svd = (hr.transpose() * &residual * &hc).svd(true, true);
    let u = &hr * svd.u.as_ref().expect("requested U");
    let v_t = svd.v_t.as_ref().expect("requested Vᵀ") * hc.transpose();
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));

    let mut lambda = Vec::with_capacity(q);
    let mut row_scores: Vec<Vec<f64>> = Vec::with_capacity(q);
    let mut col_scores: Vec<Vec<f64>> = Vec::with_capacity(q);
    for &k in order.iter().take(q) {
        let s = svd.singular_values[k];
        let mut uk: Vec<f64> = u.column(k).iter().copied().collect();
        let mut vk: Vec<f64> = v_t.row(k).iter().copied().collect();
        if s <= ZERO_SINGULAR {
            // null directions: any orthonormal zero-sum completion will do
            uk = orthonormal_completion(uk, &row_scores);
            vk = orthonormal_completion(vk, &col_scores);
        }
        // sign convention: largest-magnitude row score positive
        let pivot = uk.iter().copied().fold(0.0f64, |m, x| if x.abs() > m.abs() { x } else { m });
        if pivot < 0.0 {
            uk.iter_mut().for_each(|x| *x = -*x);
            vk.iter_mut().for_each(|x| *x = -*x);
        }
        lambda.push(s.max(0.0));
        row_scores.push(uk);
        col_scores.push(vk);
    }

    Ok(AmmiFit {
        grand_mean,
        row_effects,
        col_effects,
        lambda,
        row_scores,
        col_scores,
        residual_table: (0..rows).map(|i| residual.row(i).iter().copied().collect()).collect(),
    })
}

/// Orthonormal basis of the zero-sum subspace of R^n, as n × (n − 1) columns.
fn zero_sum_basis(n: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n, n - 1, |i, k| {
        let k = k + 1;
        let c = ((k * (k + 1)) as f64).sqrt();
        match i.cmp(&k) {
            std::cmp::Ordering::Less => 1.0 / c,
            std::cmp::Ordering::Equal => -(k as f64) / c,
            std::cmp::Ordering::Greater => 0.0,
        }
    })
}

/// Gram–Schmidt of `x` against the constant vector and `basis`, falling back
/// to coordinate vectors when `x` lies in their span.
fn orthonormal_completion(x: Vec<f64>, basis: &[Vec<f64>]) -> Vec<f64> {
    let n = x.len();
    let project = |mut y: Vec<f64>| -> Option<Vec<f64>> {
        for _ in 0..2 {
            let mean = y.iter().sum::<f64>() / n as f64;
            y.iter_mut().for_each(|t| *t -= mean);
            for b in basis {
                let d: f64 = y.iter().zip(b).map(|(a, c)| a * c).sum();
                y.iter_mut().zip(b).for_each(|(t, c)| *t -= d * c);
            }
        }
        let norm = y.iter().map(|t| t * t).sum::<f64>().sqrt();
        (norm > 1e-6).then(|| y.into_iter().map(|t| t / norm).collect())
    };
    project(x)
        .or_else(|| {
            (0..n).find_map(|k| {
                let mut e = vec![0.0; n];
                e[k] = 1.0;
                project(e)
            })
        })
        .expect("a zero-sum complement exists while Q ≤ n − 1")
}

/// Point prediction for cell (i, j).
pub fn predict_ammi(fit: &AmmiFit, i: usize, j: usize) -> Result<f64> {
    if i >= fit.n_rows() {
        return Err(Error::Index {
            factor: 0,
            index: i,
            levels: fit.n_rows(),
        });
    }
    if j >= fit.n_cols() {
        return Err(Error::Index {
            factor: 1,
            index: j,
            levels: fit.n_cols(),
        });
    }
    Ok(fit.grand_mean + fit.row_effects[i] + fit.col_effects[j] + fit.interaction(i, j))
}

/// Table of cell means over two factors, averaging replicates and ignoring
/// every other factor. Empty cells are NaN.
pub fn cell_mean_table(data: &Dataset, row_factor: usize, col_factor: usize) -> Result<DMatrix<f64>> {
    let v = data.layout.n_factors();
    if row_factor >= v || col_factor >= v || row_factor == col_factor {
        return Err(Error::arg(format!(
            "row/column factors ({row_factor}, {col_factor}) must be distinct indices below {v}"
        )));
    }
    let rows = data.layout.levels(row_factor);
    let cols = data.layout.levels(col_factor);
    let mut sum = DMatrix::<f64>::zeros(rows, cols);
    let mut count = DMatrix::<f64>::zeros(rows, cols);
    for r in &data.records {
        let (i, j) = (r.cell[row_factor], r.cell[col_factor]);
        sum[(i, j)] += r.y;
        count[(i, j)] += 1.0;
    }
    Ok(sum.zip_map(&count, |s, c| if c > 0.0 { s / c } else { f64::NAN }))
}

/// A fitted AMMI baseline with the level labels needed to score new data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwoWayAmmi {
    pub response_name: String,
    pub row_factor: String,
    pub col_factor: String,
    pub row_levels: Vec<String>,
    pub col_levels: Vec<String>,
    pub fit: AmmiFit,
}

impl TwoWayAmmi {
    /// Averages `data` over the two named factors and fits `q` components.
    pub fn fit(data: &Dataset, row_factor: usize, col_factor: usize, q: usize) -> Result<Self> {
        let table = cell_mean_table(data, row_factor, col_factor)?;
        Ok(Self {
            response_name: data.response_name.clone(),
            row_factor: data.layout.factor_names()[row_factor].clone(),
            col_factor: data.layout.factor_names()[col_factor].clone(),
            row_levels: data.layout.level_names()[row_factor].clone(),
            col_levels: data.layout.level_names()[col_factor].clone(),
            fit: fit_ammi_classical(&table, q)?,
        })
    }

    /// Prediction by level labels; `None` for labels the fit never saw.
    pub fn predict_labels(&self, row: &str, col: &str) -> Option<f64> {
        let i = self.row_levels.iter().position(|l| l == row)?;
        let j = self.col_levels.iter().position(|l| l == col)?;
        predict_ammi(&self.fit, i, j).ok()
    }

    /// Predictions for every record of `data`, matched on factor and level
    /// names.
    pub fn predict_dataset(&self, data: &Dataset) -> Result<Vec<Option<f64>>> {
        let find = |name: &str| {
            data.layout
                .factor_index(name)
                .ok_or_else(|| Error::MissingColumn(name.to_string()))
        };
        let (rf, cf) = (find(&self.row_factor)?, find(&self.col_factor)?);
        let names = data.layout.level_names();
        Ok(data
            .records
            .iter()
            .map(|r| self.predict_labels(&names[rf][r.cell[rf]], &names[cf][r.cell[cf]]))
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::FactorLayout;
    use crate::model::Record;

    fn lcg_table(rows: usize, cols: usize, seed: u64) -> DMatrix<f64> {
        let mut s = seed;
        DMatrix::from_fn(rows, cols, |_, _| {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (s >> 11) as f64 / (1u64 << 53) as f64 * 10.0 - 5.0
        })
    }

    fn zero_sum_unit(x: &[f64]) -> Vec<f64> {
        let m = x.iter().sum::<f64>() / x.len() as f64;
        let c: Vec<f64> = x.iter().map(|t| t - m).collect();
        let n = c.iter().map(|t| t * t).sum::<f64>().sqrt();
        c.into_iter().map(|t| t / n).collect()
    }

    fn check_invariants(fit: &AmmiFit) {
        assert!(fit.row_effects.iter().sum::<f64>().abs() < 1e-10);
        assert!(fit.col_effects.iter().sum::<f64>().abs() < 1e-10);
        assert!(fit.lambda.windows(2).all(|w| w[0] >= w[1]));
        assert!(fit.lambda.iter().all(|&l| l >= 0.0));
        for scores in [&fit.row_scores, &fit.col_scores] {
            for (a, sa) in scores.iter().enumerate() {
                assert!(sa.iter().sum::<f64>().abs() < 1e-8);
                for (b, sb) in scores.iter().enumerate() {
                    let d: f64 = sa.iter().zip(sb).map(|(x, y)| x * y).sum();
                    let expect = if a == b { 1.0 } else { 0.0 };
                    assert!((d - expect).abs() < 1e-8, "inner[{a}][{b}] = {d}");
                }
            }
        }
    }

    #[test]
    fn additive_table_has_no_interaction() {
        let r = [1.0, -2.0, 0.5, 0.5];
        let c = [3.0, -1.0, -2.0];
        let t = DMatrix::from_fn(4, 3, |i, j| 5.0 + r[i] + c[j]);
        let fit = fit_ammi_classical(&t, 2).unwrap();
        assert!(fit.lambda.iter().all(|&l| l < 1e-10));
        check_invariants(&fit);
        for i in 0..4 {
            for j in 0..3 {
                let p = predict_ammi(&fit, i, j).unwrap();
                assert!((p - t[(i, j)]).abs() < 1e-10);
                assert!((p - (fit.grand_mean + fit.row_effects[i] + fit.col_effects[j])).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn rank_one_interaction_recovers_its_strength() {
        let u = zero_sum_unit(&[1.0, 3.0, -2.0, 0.0, 4.0]);
        let v = zero_sum_unit(&[2.0, -1.0, 0.5, 0.0]);
        let t = DMatrix::from_fn(5, 4, |i, j| i as f64 - 0.3 * j as f64 + 3.0 * u[i] * v[j]);
        let fit = fit_ammi_classical(&t, 2).unwrap();
        assert!((fit.lambda[0] - 3.0).abs() < 1e-10);
        assert!(fit.lambda[1] < 1e-10);
        check_invariants(&fit);
        // oracle: |⟨u, û⟩| = 1
        let d: f64 = u.iter().zip(&fit.row_scores[0]).map(|(a, b)| a * b).sum();
        assert!((d.abs() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn full_rank_reconstructs_the_table() {
        let t = lcg_table(7, 5, 3);
        let fit = fit_ammi_classical(&t, 4).unwrap();
        check_invariants(&fit);
        for i in 0..7 {
            for j in 0..5 {
                assert!((predict_ammi(&fit, i, j).unwrap() - t[(i, j)]).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn full_rank_reconstructs_wide_and_tall_tables() {
        // 3×8 once broke a plain SVD of the centred table
        for (k, (rows, cols)) in [(3, 8), (8, 3), (2, 9), (5, 7), (10, 4), (6, 6)].into_iter().enumerate() {
            let t = lcg_table(rows, cols, 11 + k as u64);
            let fit = fit_ammi_classical(&t, rows.min(cols) - 1).unwrap();
            check_invariants(&fit);
            for i in 0..rows {
                for j in 0..cols {
                    assert!((predict_ammi(&fit, i, j).unwrap() - t[(i, j)]).abs() < 1e-8, "{rows}×{cols}");
                }
            }
        }
    }

    #[test]
    fn eckart_young_residual_identity() {
        for seed in 0..20 {
            let t = lcg_table(8, 6, seed);
            let full = fit_ammi_classical(&t, 5).unwrap();
            for q in 1..=5 {
                let fit = fit_ammi_classical(&t, q).unwrap();
                let discarded: f64 = full.lambda[q..].iter().map(|l| l * l).sum();
                assert!((fit.residual_ss() - discarded).abs() < 1e-9, "seed {seed} q {q}");
            }
        }
    }

    #[test]
    fn truncation_error_matches_svd_oracle() {
        // rank-2 residual: Q = 1 leaves exactly the second component
        let u1 = zero_sum_unit(&[1.0, -1.0, 0.0, 0.0]);
        let u2 = zero_sum_unit(&[1.0, 1.0, -1.0, -1.0]);
        let v1 = zero_sum_unit(&[1.0, 0.0, -1.0]);
        let v2 = zero_sum_unit(&[1.0, -2.0, 1.0]);
        let t = DMatrix::from_fn(4, 3, |i, j| 5.0 * u1[i] * v1[j] + 2.0 * u2[i] * v2[j]);
        let fit = fit_ammi_classical(&t, 1).unwrap();
        for i in 0..4 {
            for j in 0..3 {
                let err = t[(i, j)] - predict_ammi(&fit, i, j).unwrap();
                assert!((err - 2.0 * u2[i] * v2[j]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn sign_convention_is_deterministic() {
        let t = lcg_table(6, 5, 11);
        let fit = fit_ammi_classical(&t, 3).unwrap();
        for u in &fit.row_scores {
            let pivot = u.iter().copied().fold(0.0f64, |m, x| if x.abs() > m.abs() { x } else { m });
            assert!(pivot > 0.0);
        }
        assert_eq!(fit, fit_ammi_classical(&t, 3).unwrap());
    }

    #[test]
    fn argument_and_completeness_errors() {
        let mut t = lcg_table(4, 3, 1);
        assert!(matches!(fit_ammi_classical(&t, 3), Err(Error::Argument(_))));
        assert!(matches!(fit_ammi_classical(&t, 0), Err(Error::Argument(_))));
        t[(1, 2)] = f64::NAN;
        assert!(matches!(
            fit_ammi_classical(&t, 1),
            Err(Error::IncompleteTable { missing: 1, total: 12 })
        ));
        let fit = fit_ammi_classical(&lcg_table(4, 3, 1), 1).unwrap();
        assert!(matches!(predict_ammi(&fit, 4, 0), Err(Error::Index { factor: 0, .. })));
        assert!(matches!(predict_ammi(&fit, 0, 3), Err(Error::Index { factor: 1, .. })));
    }

    #[test]
    fn replicates_are_averaged_over_ignored_factors() {
        let layout = FactorLayout::from_dims(&[2, 2, 2]).unwrap();
        let records = layout
            .cells()
            .map(|c| Record {
                y: 10.0 * c[0] as f64 + c[1] as f64 + if c[2] == 0 { -1.0 } else { 1.0 },
                cell: c,
            })
            .collect();
        let data = Dataset::new(layout, records, "y").unwrap();
        let t = cell_mean_table(&data, 0, 1).unwrap();
        assert_eq!(t, DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 10.0, 11.0]));
        let m = TwoWayAmmi::fit(&data, 0, 1, 1).unwrap();
        assert!((m.predict_labels("f1_2", "f2_1").unwrap() - 10.0).abs() < 1e-10);
        assert_eq!(m.predict_labels("nope", "f2_1"), None);
    }
}
