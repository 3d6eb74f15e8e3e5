//! Factor layouts and the two cumulative vectorization operators.
//!
//! Every grid cell is a tuple of per-factor level indices. Cells are laid
//! out row-major with factor 1 varying slowest and factor V fastest, so for
//! `a = (a1, a2)` and `b = (b1, b2, b3)` the cumulative direct sum is
//!
//! ```text
//! (a1+b1, a1+b2, a1+b3, a2+b1, a2+b2, a2+b3)
//! ```
//!
//! and the cumulative Kronecker product follows the same ordering. All code
//! that walks the grid goes through [`FactorLayout::flatten_index`] or
//! [`FactorLayout::cells`] so there is one definition of that ordering.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest grid that may be materialized as a dense vector.
pub const DENSE_LIMIT: usize = 1_000_000;

/// Factor dimensions and level labels of a V-way layout.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FactorLayout {
    factor_names: Vec<String>,
    level_names: Vec<Vec<String>>,
}

impl FactorLayout {
    /// Builds a layout from factor names and their level labels.
    pub fn new(factor_names: Vec<String>, level_names: Vec<Vec<String>>) -> Result<Self> {
        if factor_names.len() != level_names.len() {
            return Err(Error::arg(format!(
                "{} factor names but {} level lists",
                factor_names.len(),
                level_names.len()
            )));
        }
        if factor_names.len() < 2 {
            return Err(Error::arg("a layout needs at least two factors"));
        }
        for (v, levels) in level_names.iter().enumerate() {
            if levels.len() < 2 {
                return Err(Error::arg(format!(
                    "factor `{}` has {} level(s); at least 2 are required",
                    factor_names[v],
                    levels.len()
                )));
            }
            let mut sorted: Vec<&String> = levels.iter().collect();
            sorted.sort();
            sorted.dedup();
            if sorted.len() != levels.len() {
                return Err(Error::arg(format!(
                    "factor `{}` has duplicate level names",
                    factor_names[v]
                )));
            }
        }
        let mut names: Vec<&String> = factor_names.iter().collect();
        names.sort();
        names.dedup();
        if names.len() != factor_names.len() {
            return Err(Error::arg("duplicate factor names"));
        }
        Ok(Self {
            factor_names,
            level_names,
        })
    }

    /// Layout with generated names: factors `f1..fV`, levels `f{v}_{i}`.
    pub fn from_dims(dims: &[usize]) -> Result<Self> {
        let factor_names: Vec<String> = (1..=dims.len()).map(|v| format!("f{v}")).collect();
        let level_names = dims
            .iter()
            .enumerate()
            .map(|(v, &b)| (1..=b).map(|i| format!("f{}_{}", v + 1, i)).collect())
            .collect();
        Self::new(factor_names, level_names)
    }

    /// Number of factors V.
    pub fn n_factors(&self) -> usize {
        self.level_names.len()
    }

    /// Level counts (B_1, ..., B_V).
    pub fn dims(&self) -> Vec<usize> {
        self.level_names.iter().map(Vec::len).collect()
    }

    pub fn levels(&self, factor: usize) -> usize {
        self.level_names[factor].len()
    }

    pub fn factor_names(&self) -> &[String] {
        &self.factor_names
    }

    pub fn level_names(&self) -> &[Vec<String>] {
        &self.level_names
    }

    pub fn factor_index(&self, name: &str) -> Option<usize> {
        self.factor_names.iter().position(|n| n == name)
    }

    pub fn level_index(&self, factor: usize, name: &str) -> Option<usize> {
        self.level_names[factor].iter().position(|n| n == name)
    }

    /// Number of cells in the full grid, ∏ B_v.
    pub fn grid_size(&self) -> usize {
        self.level_names.iter().map(Vec::len).product()
    }

    /// Checks that `cell` has one in-range index per factor.
    pub fn check_cell(&self, cell: &[usize]) -> Result<()> {
        if cell.len() != self.n_factors() {
            return Err(Error::layout(format!(
                "cell has {} indices, layout has {} factors",
                cell.len(),
                self.n_factors()
            )));
        }
        for (factor, (&index, levels)) in cell.iter().zip(&self.level_names).enumerate() {
            if index >= levels.len() {
                return Err(Error::Index {
                    factor,
                    index,
                    levels: levels.len(),
                });
            }
        }
        Ok(())
    }

    /// Row-major linear index of `cell`, factor 1 slowest-varying.
    pub fn flatten_index(&self, cell: &[usize]) -> Result<usize> {
        self.check_cell(cell)?;
        Ok(cell
            .iter()
            .zip(&self.level_names)
            .fold(0, |acc, (&i, levels)| acc * levels.len() + i))
    }

    /// Inverse of [`flatten_index`](Self::flatten_index).
    pub fn unflatten_index(&self, mut index: usize) -> Result<Vec<usize>> {
        let n = self.grid_size();
        if index >= n {
            return Err(Error::arg(format!("linear index {index} >= grid size {n}")));
        }
        let mut cell = vec![0; self.n_factors()];
        for (slot, levels) in cell.iter_mut().zip(&self.level_names).rev() {
            *slot = index % levels.len();
            index /= levels.len();
        }
        Ok(cell)
    }

    /// Iterates every cell of the full grid in linear-index order.
    pub fn cells(&self) -> Cells {
        Cells {
            dims: self.dims(),
            next: Some(vec![0; self.n_factors()]),
        }
    }
}

/// Iterator over all cells of a grid in linear-index order.
#[derive(Debug, Clone)]
pub struct Cells {
    dims: Vec<usize>,
    next: Option<Vec<usize>>,
}

impl Cells {
    fn for_dims(dims: Vec<usize>) -> Self {
        let next = if dims.iter().all(|&d| d > 0) {
            Some(vec![0; dims.len()])
        } else {
            None
        };
        Self { dims, next }
    }
}

impl Iterator for Cells {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        let current = self.next.take()?;
        let mut succ = current.clone();
        let mut carry = true;
        for (slot, &d) in succ.iter_mut().zip(&self.dims).rev() {
            *slot += 1;
            if *slot < d {
                carry = false;
                break;
            }
            *slot = 0;
        }
        if !carry {
            self.next = Some(succ);
        }
        Some(current)
    }
}

fn check_operands(vectors: &[&[f64]]) -> Result<usize> {
    if vectors.is_empty() {
        return Err(Error::arg("cumulative operator needs at least one vector"));
    }
    let n: usize = vectors.iter().map(|v| v.len()).product();
    if n > DENSE_LIMIT {
        return Err(Error::arg(format!(
            "dense result of {n} entries exceeds {DENSE_LIMIT}; evaluate per cell instead"
        )));
    }
    Ok(n)
}

/// Cumulative direct sum: entry at cell `c` is `Σ_v vectors[v][c[v]]`.
pub fn direct_sum_cumulative(vectors: &[&[f64]]) -> Result<Vec<f64>> {
    let n = check_operands(vectors)?;
    let mut out = Vec::with_capacity(n);
    out.push(0.0);
    for v in vectors {
        out = out
            .iter()
            .flat_map(|&acc| v.iter().map(move |&x| acc + x))
            .collect();
    }
    Ok(out)
}

/// Cumulative Kronecker product: entry at cell `c` is `∏_v vectors[v][c[v]]`.
pub fn kronecker_cumulative(vectors: &[&[f64]]) -> Result<Vec<f64>> {
    let n = check_operands(vectors)?;
    let mut out = Vec::with_capacity(n);
    out.push(1.0);
    for v in vectors {
        out = out
            .iter()
            .flat_map(|&acc| v.iter().map(move |&x| acc * x))
            .collect();
    }
    Ok(out)
}

/// Iterates the grid spanned by `dims` without building a layout.
pub fn grid_cells(dims: &[usize]) -> impl Iterator<Item = Vec<usize>> {
    Cells::for_dims(dims.to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn layout(dims: &[usize]) -> FactorLayout {
        FactorLayout::from_dims(dims).unwrap()
    }

    #[test]
    fn flatten_examples() {
        let l = layout(&[2, 3]);
        assert_eq!(l.flatten_index(&[0, 0]).unwrap(), 0);
        assert_eq!(l.flatten_index(&[0, 2]).unwrap(), 2);
        assert_eq!(l.flatten_index(&[1, 0]).unwrap(), 3);
    }

    #[test]
    fn flatten_three_factors_matches_enumeration() {
        let l = layout(&[2, 3, 4]);
        // enumerate in the declared order: last factor fastest
        let mut position = None;
        let mut k = 0;
        for i in 0..2 {
            for j in 0..3 {
                for m in 0..4 {
                    if (i, j, m) == (1, 2, 3) {
                        position = Some(k);
                    }
                    k += 1;
                }
            }
        }
        assert_eq!(position, Some(23));
        assert_eq!(l.flatten_index(&[1, 2, 3]).unwrap(), 23);
    }

    #[test]
    fn flatten_rejects_out_of_range_naming_factor() {
        let l = layout(&[2, 3]);
        match l.flatten_index(&[1, 3]) {
            Err(Error::Index {
                factor,
                index,
                levels,
            }) => {
                assert_eq!((factor, index, levels), (1, 3, 3));
            }
            other => panic!("expected index error, got {other:?}"),
        }
        assert!(matches!(
            l.flatten_index(&[1]),
            Err(Error::LayoutMismatch(_))
        ));
    }

    #[test]
    fn layout_validation() {
        assert!(FactorLayout::from_dims(&[3]).is_err());
        assert!(FactorLayout::from_dims(&[3, 1]).is_err());
        let dup = FactorLayout::new(
            vec!["g".into(), "e".into()],
            vec![vec!["a".into(), "a".into()], vec!["x".into(), "y".into()]],
        );
        assert!(dup.is_err());
        assert_eq!(layout(&[12, 10, 4]).grid_size(), 480);
    }

    #[test]
    fn direct_sum_examples() {
        let out = direct_sum_cumulative(&[&[1.0, 2.0], &[10.0, 20.0, 30.0]]).unwrap();
        assert_eq!(out, vec![11.0, 21.0, 31.0, 12.0, 22.0, 32.0]);
        assert_eq!(
            direct_sum_cumulative(&[&[5.0, 7.0]]).unwrap(),
            vec![5.0, 7.0]
        );
        assert!(matches!(
            direct_sum_cumulative(&[]),
            Err(Error::Argument(_))
        ));
    }

    #[test]
    fn kronecker_examples() {
        assert_eq!(
            kronecker_cumulative(&[&[1.0, 2.0], &[3.0, 4.0]]).unwrap(),
            vec![3.0, 4.0, 6.0, 8.0]
        );
        assert_eq!(
            kronecker_cumulative(&[&[1.0, 0.0], &[5.0, 6.0, 7.0]]).unwrap(),
            vec![5.0, 6.0, 7.0, 0.0, 0.0, 0.0]
        );
        assert_eq!(
            kronecker_cumulative(&[&[2.0, 3.0], &[1.0, 1.0], &[4.0]]).unwrap(),
            vec![8.0, 8.0, 12.0, 12.0]
        );
        assert!(matches!(kronecker_cumulative(&[]), Err(Error::Argument(_))));
    }

    #[test]
    fn cells_iterate_in_linear_order() {
        let l = layout(&[3, 2, 2]);
        for (k, cell) in l.cells().enumerate() {
            assert_eq!(l.flatten_index(&cell).unwrap(), k);
            assert_eq!(l.unflatten_index(k).unwrap(), cell);
        }
        assert_eq!(l.cells().count(), 12);
    }

    proptest! {
        #[test]
        fn flatten_is_bijective(dims in proptest::collection::vec(2usize..6, 2..5)) {
            let l = layout(&dims);
            let mut seen: Vec<usize> = l.cells().map(|c| l.flatten_index(&c).unwrap()).collect();
            seen.sort_unstable();
            let expected: Vec<usize> = (0..l.grid_size()).collect();
            prop_assert_eq!(seen, expected);
        }

        #[test]
        fn kronecker_norm_is_product_of_norms(
            vectors in proptest::collection::vec(proptest::collection::vec(-3.0f64..3.0, 1..6), 1..4)
        ) {
            let refs: Vec<&[f64]> = vectors.iter().map(Vec::as_slice).collect();
            let k = kronecker_cumulative(&refs).unwrap();
            let lhs = k.iter().map(|x| x * x).sum::<f64>().sqrt();
            let rhs: f64 = vectors.iter().map(|v| v.iter().map(|x| x * x).sum::<f64>().sqrt()).product();
            prop_assert!((lhs - rhs).abs() <= 1e-12 * rhs.max(1e-300));
        }
    }
}
