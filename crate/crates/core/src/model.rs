//! Parameters, priors and the BAMMIT predictor
//!
//! ```text
//! y = μ + ⊕_v b^(v) + Σ_q λ_q ⊗_v β_q^(v) + ε
//! ```
//!
//! The score columns `β_q^(v)` are never free parameters. Each one is the
//! centred, unit-norm image of an auxiliary column `θ_q^(v)` that carries a
//! standard normal prior; [`normalize_column`] is that map.

use serde::{Deserialize, Serialize};

use crate::ar::ArParams;
use crate::error::{Error, Result};
use crate::tensor::{direct_sum_cumulative, kronecker_cumulative, FactorLayout};

/// Tolerance used by [`ConstraintReport::passes`].
pub const CONSTRAINT_TOLERANCE: f64 = 1e-8;

/// Hyperparameters of the prior hierarchy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PriorConfig {
    /// Mean of the normal prior on μ.
    pub mu_mean: f64,
    /// Variance of the normal prior on μ.
    pub mu_var: f64,
    /// Gamma shape for the residual precision.
    pub a0: f64,
    /// Gamma rate for the residual precision.
    pub a1: f64,
    /// Scale of the half-t prior on each main-effect SD.
    pub a2: f64,
    /// Scale of the half-t prior on σ_λ.
    pub a3: f64,
    /// Degrees of freedom for every half-t prior.
    pub half_t_df: f64,
    /// Variance of the normal prior on the AR intercepts.
    pub ar_alpha_var: f64,
    /// Scale of the half-t prior on the AR innovation SDs.
    pub ar_innovation_scale: f64,
}

impl Default for PriorConfig {
    /// The settings used for the simulation experiments.
    fn default() -> Self {
        Self {
            mu_mean: 100.0,
            mu_var: 10.0,
            a0: 0.1,
            a1: 0.1,
            a2: 1.0,
            a3: 1.0,
            half_t_df: 3.0,
            ar_alpha_var: 100.0,
            ar_innovation_scale: 1.0,
        }
    }
}

impl PriorConfig {
    /// Default priors with the grand-mean prior centred on the data.
    pub fn for_response(mean: f64, var: f64) -> Self {
        Self {
            mu_mean: mean,
            mu_var: var,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("mu_var", self.mu_var),
            ("a0", self.a0),
            ("a1", self.a1),
            ("a2", self.a2),
            ("a3", self.a3),
            ("half_t_df", self.half_t_df),
            ("ar_alpha_var", self.ar_alpha_var),
            ("ar_innovation_scale", self.ar_innovation_scale),
        ];
        for (name, value) in positive {
            if !(value > 0.0 && value.is_finite()) {
                return Err(Error::Config(format!(
                    "prior `{name}` must be positive, got {value}"
                )));
            }
        }
        if !self.mu_mean.is_finite() {
            return Err(Error::Config("prior `mu_mean` must be finite".into()));
        }
        Ok(())
    }
}

/// Centres a column and scales it to unit Euclidean norm.
pub fn normalize_column(theta: &[f64]) -> Result<Vec<f64>> {
    if theta.len() < 2 {
        return Err(Error::DegenerateInput(format!(
            "score column needs at least 2 entries, got {}",
            theta.len()
        )));
    }
    let n = theta.len() as f64;
    let mean = theta.iter().sum::<f64>() / n;
    let mut centred: Vec<f64> = theta.iter().map(|t| t - mean).collect();
    // second pass removes the rounding left by a large common offset
    let residual_mean = centred.iter().sum::<f64>() / n;
    centred.iter_mut().for_each(|x| *x -= residual_mean);
    let norm = centred.iter().map(|x| x * x).sum::<f64>().sqrt();
    if !(norm > 0.0 && norm.is_finite()) {
        return Err(Error::DegenerateInput(
            "auxiliary column is constant; its normalization is undefined".into(),
        ));
    }
    Ok(centred.into_iter().map(|x| x / norm).collect())
}

/// Auxiliary θ columns of one factor together with their normalized β columns.
///
/// β is cached and only changes through [`set_theta_column`](Self::set_theta_column).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorScores {
    theta: Vec<Vec<f64>>,
    beta: Vec<Vec<f64>>,
}

impl FactorScores {
    /// Builds scores from Q auxiliary columns of equal length.
    pub fn from_theta(theta: Vec<Vec<f64>>) -> Result<Self> {
        if let Some(first) = theta.first() {
            if theta.iter().any(|c| c.len() != first.len()) {
                return Err(Error::arg("auxiliary columns differ in length"));
            }
        }
        let beta = theta
            .iter()
            .map(|c| normalize_column(c))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { theta, beta })
    }

    pub fn theta(&self) -> &[Vec<f64>] {
        &self.theta
    }

    pub fn beta(&self) -> &[Vec<f64>] {
        &self.beta
    }

    /// Replaces θ column `q` and refreshes its β column.
    pub fn set_theta_column(&mut self, q: usize, column: Vec<f64>) -> Result<()> {
        let beta = normalize_column(&column)?;
        self.theta[q] = column;
        self.beta[q] = beta;
        Ok(())
    }

    /// Installs a column whose normalization has already been computed.
    pub(crate) fn set_column_unchecked(&mut self, q: usize, theta: Vec<f64>, beta: Vec<f64>) {
        self.theta[q] = theta;
        self.beta[q] = beta;
    }

    pub fn n_levels(&self) -> usize {
        self.theta.first().map_or(0, Vec::len)
    }
}

/// One complete draw of the model parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterState {
    pub mu: f64,
    pub main_effects: Vec<Vec<f64>>,
    pub sigma_b: Vec<f64>,
    pub lambda: Vec<f64>,
    pub sigma_lambda: f64,
    pub scores: Vec<FactorScores>,
    pub sigma2_y: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ar: Option<ArParams>,
}

impl ParameterState {
    pub fn n_components(&self) -> usize {
        self.lambda.len()
    }

    pub fn n_factors(&self) -> usize {
        self.main_effects.len()
    }

    pub fn beta(&self, factor: usize) -> &[Vec<f64>] {
        self.scores[factor].beta()
    }

    pub fn theta(&self, factor: usize) -> &[Vec<f64>] {
        self.scores[factor].theta()
    }

    /// Checks that every parameter block has the shape implied by `layout`.
    pub fn check_layout(&self, layout: &FactorLayout) -> Result<()> {
        let dims = layout.dims();
        if self.main_effects.len() != dims.len()
            || self.scores.len() != dims.len()
            || self.sigma_b.len() != dims.len()
        {
            return Err(Error::layout(format!(
                "state has {} factors, layout has {}",
                self.main_effects.len(),
                dims.len()
            )));
        }
        for (v, &b) in dims.iter().enumerate() {
            if self.main_effects[v].len() != b || self.scores[v].n_levels() != b {
                return Err(Error::layout(format!(
                    "factor {v}: state has {} levels, layout has {b}",
                    self.main_effects[v].len()
                )));
            }
            if self.scores[v].theta().len() != self.lambda.len() {
                return Err(Error::layout(format!(
                    "factor {v}: {} score columns for {} components",
                    self.scores[v].theta().len(),
                    self.lambda.len()
                )));
            }
        }
        Ok(())
    }

    /// Predictor at a cell assumed valid for this state.
    pub(crate) fn predict_unchecked(&self, cell: &[usize]) -> f64 {
        self.additive_unchecked(cell) + self.interaction_unchecked(cell)
    }

    pub(crate) fn additive_unchecked(&self, cell: &[usize]) -> f64 {
        self.mu
            + cell
                .iter()
                .zip(&self.main_effects)
                .map(|(&i, b)| b[i])
                .sum::<f64>()
    }

    pub(crate) fn interaction_unchecked(&self, cell: &[usize]) -> f64 {
        self.lambda
            .iter()
            .enumerate()
            .map(|(q, &lambda)| {
                lambda
                    * cell
                        .iter()
                        .zip(&self.scores)
                        .map(|(&i, s)| s.beta()[q][i])
                        .product::<f64>()
            })
            .sum()
    }

    /// Multiplicative term `Σ_q λ_q ∏_v β^(v)_{cell[v],q}` at a cell.
    pub fn interaction(&self, layout: &FactorLayout, cell: &[usize]) -> Result<f64> {
        self.check_layout(layout)?;
        layout.check_cell(cell)?;
        Ok(self.interaction_unchecked(cell))
    }

    pub fn is_finite(&self) -> Option<&'static str> {
        if !self.mu.is_finite() {
            return Some("mu");
        }
        if !self.sigma2_y.is_finite() || self.sigma2_y <= 0.0 {
            return Some("sigma2_y");
        }
        if !self.sigma_lambda.is_finite() {
            return Some("sigma_lambda");
        }
        if self.lambda.iter().any(|x| !x.is_finite()) {
            return Some("lambda");
        }
        if self.main_effects.iter().flatten().any(|x| !x.is_finite()) {
            return Some("main_effects");
        }
        if self.sigma_b.iter().any(|x| !x.is_finite()) {
            return Some("sigma_b");
        }
        if self
            .scores
            .iter()
            .flat_map(|s| s.theta().iter().chain(s.beta()))
            .flatten()
            .any(|x| !x.is_finite())
        {
            return Some("theta");
        }
        None
    }
}

/// Predictor `μ + Σ_v b^(v) + Σ_q λ_q ∏_v β^(v)_q` at one cell.
pub fn linear_predictor(
    state: &ParameterState,
    layout: &FactorLayout,
    cell: &[usize],
) -> Result<f64> {
    state.check_layout(layout)?;
    layout.check_cell(cell)?;
    Ok(state.predict_unchecked(cell))
}

/// Dense predictor over the whole grid built from the cumulative operators.
pub fn dense_predictor(state: &ParameterState, layout: &FactorLayout) -> Result<Vec<f64>> {
    state.check_layout(layout)?;
    let mains: Vec<&[f64]> = state.main_effects.iter().map(Vec::as_slice).collect();
    let mut out = direct_sum_cumulative(&mains)?;
    for x in &mut out {
        *x += state.mu;
    }
    for (q, &lambda) in state.lambda.iter().enumerate() {
        let cols: Vec<&[f64]> = state
            .scores
            .iter()
            .map(|s| s.beta()[q].as_slice())
            .collect();
        for (o, k) in out.iter_mut().zip(kronecker_cumulative(&cols)?) {
            *o += lambda * k;
        }
    }
    Ok(out)
}

/// Maximum absolute violation of each identifiability constraint.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintReport {
    /// max_v |Σ_i b^(v)_i|
    pub main_effect_sum: f64,
    /// max_{v,q} |Σ_i β^(v)_iq|
    pub score_sum: f64,
    /// max_{v,q} |Σ_i (β^(v)_iq)² − 1|
    pub score_norm: f64,
    /// Largest ordering violation: max(λ_{q+1} − λ_q, −λ_Q, 0).
    pub lambda_order: f64,
    /// max_{v,q≠q'} |Σ_i β^(v)_iq β^(v)_iq'|; reported, not enforced.
    pub cross_column_inner: f64,
}

impl ConstraintReport {
    pub fn passes(&self) -> bool {
        self.passes_at(CONSTRAINT_TOLERANCE)
    }

    pub fn passes_at(&self, tol: f64) -> bool {
        self.main_effect_sum <= tol
            && self.score_sum <= tol
            && self.score_norm <= tol
            && self.lambda_order <= tol
    }
}

/// Measures constraints (1)-(4) on a state. Never fails.
pub fn validate_constraints(state: &ParameterState) -> ConstraintReport {
    let main_effect_sum = state
        .main_effects
        .iter()
        .map(|b| b.iter().sum::<f64>().abs())
        .fold(0.0, f64::max);
    let mut score_sum: f64 = 0.0;
    let mut score_norm: f64 = 0.0;
    let mut cross: f64 = 0.0;
    for s in &state.scores {
        let beta = s.beta();
        for (q, col) in beta.iter().enumerate() {
            score_sum = score_sum.max(col.iter().sum::<f64>().abs());
            score_norm = score_norm.max((col.iter().map(|x| x * x).sum::<f64>() - 1.0).abs());
            for other in &beta[q + 1..] {
                let inner: f64 = col.iter().zip(other).map(|(a, b)| a * b).sum();
                cross = cross.max(inner.abs());
            }
        }
    }
    let mut lambda_order: f64 = 0.0;
    for w in state.lambda.windows(2) {
        lambda_order = lambda_order.max(w[1] - w[0]);
    }
    if let Some(&last) = state.lambda.last() {
        lambda_order = lambda_order.max(-last);
    }
    if state.lambda.iter().any(|x| x.is_nan())
        || state.main_effects.iter().flatten().any(|x| x.is_nan())
    {
        lambda_order = f64::INFINITY;
    }
    ConstraintReport {
        main_effect_sum,
        score_sum,
        score_norm,
        lambda_order,
        cross_column_inner: cross,
    }
}

/// One observed cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub cell: Vec<usize>,
    pub y: f64,
}

/// Observations over a factor layout; cells may repeat or be missing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub layout: FactorLayout,
    pub records: Vec<Record>,
    pub response_name: String,
}

impl Dataset {
    pub fn new(
        layout: FactorLayout,
        records: Vec<Record>,
        response_name: impl Into<String>,
    ) -> Result<Self> {
        for r in &records {
            layout.check_cell(&r.cell)?;
            if !r.y.is_finite() {
                return Err(Error::arg(format!(
                    "non-finite response at cell {:?}",
                    r.cell
                )));
            }
        }
        Ok(Self {
            layout,
            records,
            response_name: response_name.into(),
        })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn responses(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.y).collect()
    }

    /// Sample mean and (n−1) variance of the response.
    pub fn response_moments(&self) -> (f64, f64) {
        let n = self.records.len() as f64;
        if n == 0.0 {
            return (0.0, 1.0);
        }
        let mean = self.records.iter().map(|r| r.y).sum::<f64>() / n;
        let var = if n > 1.0 {
            self.records
                .iter()
                .map(|r| (r.y - mean).powi(2))
                .sum::<f64>()
                / (n - 1.0)
        } else {
            0.0
        };
        (mean, var)
    }

    /// Splits records by a predicate into (kept, removed); both share the layout.
    pub fn partition(&self, mut keep: impl FnMut(usize, &Record) -> bool) -> (Dataset, Dataset) {
        let mut kept = Vec::new();
        let mut removed = Vec::new();
        for (k, r) in self.records.iter().enumerate() {
            if keep(k, r) {
                kept.push(r.clone());
            } else {
                removed.push(r.clone());
            }
        }
        let make = |records| Dataset {
            layout: self.layout.clone(),
            records,
            response_name: self.response_name.clone(),
        };
        (make(kept), make(removed))
    }

    /// Reorders the levels of one factor by `cmp` on their names, remapping records.
    pub fn sort_levels_by(
        &mut self,
        factor: usize,
        cmp: impl Fn(&str, &str) -> std::cmp::Ordering,
    ) -> Result<()> {
        let names = &self.layout.level_names()[factor];
        let mut order: Vec<usize> = (0..names.len()).collect();
        order.sort_by(|&a, &b| cmp(&names[a], &names[b]));
        let mut remap = vec![0; order.len()];
        for (new, &old) in order.iter().enumerate() {
            remap[old] = new;
        }
        let mut level_names = self.layout.level_names().to_vec();
        level_names[factor] = order.iter().map(|&i| names[i].clone()).collect();
        self.layout = FactorLayout::new(self.layout.factor_names().to_vec(), level_names)?;
        for r in &mut self.records {
            r.cell[factor] = remap[r.cell[factor]];
        }
        Ok(())
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use proptest::prelude::*;

    pub(crate) fn small_state(dims: &[usize], q: usize, seed: u64) -> ParameterState {
        // tiny LCG keeps this fixture independent of the simulator
        let mut s = seed
            .wrapping_mul(6364136223846793005)
            .wrapping_add(1442695040888963407);
        let mut next = move || {
            s = s
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            ((s >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
        };
        let main_effects: Vec<Vec<f64>> = dims
            .iter()
            .map(|&b| {
                let raw: Vec<f64> = (0..b).map(|_| next()).collect();
                let m = raw.iter().sum::<f64>() / b as f64;
                raw.iter().map(|x| x - m).collect()
            })
            .collect();
        let scores = dims
            .iter()
            .map(|&b| {
                FactorScores::from_theta((0..q).map(|_| (0..b).map(|_| next()).collect()).collect())
                    .unwrap()
            })
            .collect();
        let mut lambda: Vec<f64> = (0..q).map(|_| 5.0 + 5.0 * next()).collect();
        lambda.sort_by(|a, b| b.partial_cmp(a).unwrap());
        ParameterState {
            mu: 3.0,
            main_effects,
            sigma_b: vec![1.0; dims.len()],
            lambda,
            sigma_lambda: 1.0,
            scores,
            sigma2_y: 1.0,
            ar: None,
        }
    }

    #[test]
    fn normalize_examples() {
        let out = normalize_column(&[1.0, 2.0, 3.0]).unwrap();
        let h = std::f64::consts::FRAC_1_SQRT_2;
        for (a, b) in out.iter().zip([-h, 0.0, h]) {
            assert!((a - b).abs() < 1e-15);
        }
        assert!(matches!(
            normalize_column(&[4.0, 4.0, 4.0]),
            Err(Error::DegenerateInput(_))
        ));
        let out = normalize_column(&[0.3, -1.2, 0.9, 0.0]).unwrap();
        assert!(out.iter().sum::<f64>().abs() <= 1e-10);
        assert!((out.iter().map(|x| x * x).sum::<f64>() - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn constraint_report_flags_violations() {
        let mut state = small_state(&[2, 3], 2, 1);
        assert!(validate_constraints(&state).passes());
        state.main_effects[0] = vec![1.0, 1.0];
        let report = validate_constraints(&state);
        assert!((report.main_effect_sum - 2.0).abs() < 1e-15);
        assert!(!report.passes());

        let mut state = small_state(&[2, 3], 2, 1);
        state.lambda = vec![8.0, 10.0];
        let report = validate_constraints(&state);
        assert!((report.lambda_order - 2.0).abs() < 1e-15);
        assert!(!report.passes());

        state.lambda = vec![1.0, -0.5];
        assert!(!validate_constraints(&state).passes());
    }

    #[test]
    fn null_effects_predict_grand_mean() {
        let layout = FactorLayout::from_dims(&[3, 4]).unwrap();
        let mut state = small_state(&[3, 4], 1, 2);
        state.mu = 100.0;
        for b in &mut state.main_effects {
            b.iter_mut().for_each(|x| *x = 0.0);
        }
        state.lambda = vec![0.0];
        for cell in layout.cells() {
            assert_eq!(linear_predictor(&state, &layout, &cell).unwrap(), 100.0);
        }
    }

    #[test]
    fn two_factor_predictor_is_ammi() {
        let layout = FactorLayout::from_dims(&[4, 3]).unwrap();
        let state = small_state(&[4, 3], 1, 3);
        for cell in layout.cells() {
            let (i, j) = (cell[0], cell[1]);
            let ammi = state.mu
                + state.main_effects[0][i]
                + state.main_effects[1][j]
                + state.lambda[0] * state.beta(0)[0][i] * state.beta(1)[0][j];
            let got = linear_predictor(&state, &layout, &cell).unwrap();
            assert!((got - ammi).abs() < 1e-12);
        }
    }

    #[test]
    fn predictor_matches_dense_operators() {
        let layout = FactorLayout::from_dims(&[3, 2, 2]).unwrap();
        let state = small_state(&[3, 2, 2], 2, 4);
        let dense = dense_predictor(&state, &layout).unwrap();
        for cell in layout.cells() {
            let k = layout.flatten_index(&cell).unwrap();
            let got = linear_predictor(&state, &layout, &cell).unwrap();
            assert!((got - dense[k]).abs() <= 1e-12 * dense[k].abs().max(1.0));
        }
    }

    #[test]
    fn predictor_rejects_mismatched_layout() {
        let layout = FactorLayout::from_dims(&[3, 3]).unwrap();
        let state = small_state(&[3, 2], 1, 5);
        assert!(matches!(
            linear_predictor(&state, &layout, &[0, 0]),
            Err(Error::LayoutMismatch(_))
        ));
    }

    #[test]
    fn sort_levels_remaps_records() {
        let layout = FactorLayout::new(
            vec!["g".into(), "year".into()],
            vec![
                vec!["a".into(), "b".into()],
                vec!["2012".into(), "2010".into(), "2011".into()],
            ],
        )
        .unwrap();
        let records = vec![
            Record {
                cell: vec![0, 0],
                y: 1.0,
            },
            Record {
                cell: vec![1, 1],
                y: 2.0,
            },
        ];
        let mut data = Dataset::new(layout, records, "y").unwrap();
        data.sort_levels_by(1, |a, b| a.cmp(b)).unwrap();
        assert_eq!(data.layout.level_names()[1], vec!["2010", "2011", "2012"]);
        assert_eq!(data.records[0].cell, vec![0, 2]);
        assert_eq!(data.records[1].cell, vec![1, 0]);
    }

    proptest! {
        #[test]
        fn normalize_is_affine_invariant(
            theta in proptest::collection::vec(-5.0f64..5.0, 2..30),
            a in prop_oneof![-10.0f64..-0.1, 0.1f64..10.0],
            c in -10.0f64..10.0,
        ) {
            prop_assume!(theta.iter().any(|&t| (t - theta[0]).abs() > 0.5));
            let base = normalize_column(&theta).unwrap();
            let moved: Vec<f64> = theta.iter().map(|t| a * t + c).collect();
            let out = normalize_column(&moved).unwrap();
            for (x, y) in base.iter().zip(&out) {
                prop_assert!((a.signum() * x - y).abs() <= 1e-12);
            }
        }
    }
}
