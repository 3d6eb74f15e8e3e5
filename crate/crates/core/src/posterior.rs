//! Summaries of posterior draws, predictions and fit metrics.
//!
//! All summaries pool the chains. Intervals are 90% equal-tailed, with
//! percentiles from linear interpolation between order statistics
//! (position `(n − 1)·p` in the sorted sample).

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ParameterState;
use crate::sampler::PosteriorDraws;
use crate::tensor::FactorLayout;

/// Percentile `p` ∈ [0, 1] of an ascending sample.
pub fn percentile_sorted(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty(), "percentile of an empty sample");
    let h = (sorted.len() - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub sd: f64,
    pub q05: f64,
    pub q50: f64,
    pub q95: f64,
}

impl Summary {
    /// Summary of a nonempty sample; the SD uses n − 1 (0 for one value).
    pub fn of(values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptyData);
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let sd = if values.len() > 1 {
            (values.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        Ok(Self {
            mean,
            sd,
            q05: percentile_sorted(&sorted, 0.05),
            q50: percentile_sorted(&sorted, 0.5),
            q95: percentile_sorted(&sorted, 0.95),
        })
    }

    pub fn width(&self) -> f64 {
        self.q95 - self.q05
    }
}

/// Which parameters [`summarize`] reports.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Selector {
    Mu,
    /// Residual SD σ.
    Sigma,
    /// Main effects of one factor, or all of them.
    MainEffects(Option<usize>),
    Lambda,
    /// Score columns β of one factor, or all of them.
    Beta(Option<usize>),
    SigmaB,
    SigmaLambda,
    Ar,
}

impl FromStr for Selector {
    type Err = Error;

    /// Accepts `mu`, `sigma`, `b`, `b:<factor>`, `lambda`, `beta`,
    /// `beta:<factor>`, `sigma_b`, `sigma_lambda` and `ar`; a factor is
    /// given by index. Use [`Selector::parse_with`] to allow names.
    fn from_str(s: &str) -> Result<Self> {
        Self::parse_with(s, None)
    }
}

impl Selector {
    pub fn parse_with(s: &str, layout: Option<&FactorLayout>) -> Result<Self> {
        let (head, factor) = match s.split_once(':') {
            Some((h, f)) => (h, Some(f)),
            None => (s, None),
        };
        let factor = factor
            .map(|f| {
                f.parse::<usize>()
                    .ok()
                    .or_else(|| layout.and_then(|l| l.factor_index(f)))
                    .ok_or_else(|| Error::arg(format!("unknown factor `{f}` in selector `{s}`")))
            })
            .transpose()?;
        let sel = match head {
            "mu" => Selector::Mu,
            "sigma" => Selector::Sigma,
            "b" => Selector::MainEffects(factor),
            "lambda" => Selector::Lambda,
            "beta" => Selector::Beta(factor),
            "sigma_b" => Selector::SigmaB,
            "sigma_lambda" => Selector::SigmaLambda,
            "ar" => Selector::Ar,
            _ => return Err(Error::arg(format!("unknown selector `{s}`"))),
        };
        if factor.is_some() && !matches!(sel, Selector::MainEffects(_) | Selector::Beta(_)) {
            return Err(Error::arg(format!("selector `{head}` takes no factor")));
        }
        Ok(sel)
    }
}

impl fmt::Display for Selector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let with = |f: &mut fmt::Formatter<'_>, head: &str, v: &Option<usize>| match v {
            Some(v) => write!(f, "{head}:{v}"),
            None => f.write_str(head),
        };
        match self {
            Selector::Mu => f.write_str("mu"),
            Selector::Sigma => f.write_str("sigma"),
            Selector::MainEffects(v) => with(f, "b", v),
            Selector::Lambda => f.write_str("lambda"),
            Selector::Beta(v) => with(f, "beta", v),
            Selector::SigmaB => f.write_str("sigma_b"),
            Selector::SigmaLambda => f.write_str("sigma_lambda"),
            Selector::Ar => f.write_str("ar"),
        }
    }
}

/// Summary of one scalar element, e.g. `b[genotype][g3]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElementSummary {
    pub name: String,
    #[serde(flatten)]
    pub summary: Summary,
}

type Extractor = Box<dyn Fn(&ParameterState) -> f64 + Sync>;

fn extractors(draws: &PosteriorDraws, selector: &Selector) -> Result<Vec<(String, Extractor)>> {
    let layout = &draws.layout;
    let v_all = layout.n_factors();
    let q_all = draws.iter().next().map_or(0, ParameterState::n_components);
    let factors = |f: &Option<usize>| -> Result<Vec<usize>> {
        match *f {
            Some(v) if v >= v_all => Err(Error::arg(format!("factor index {v} out of range"))),
            Some(v) => Ok(vec![v]),
            None => Ok((0..v_all).collect()),
        }
    };
    let fname = |v: usize| layout.factor_names()[v].clone();
    let mut out: Vec<(String, Extractor)> = Vec::new();
    match selector {
        Selector::Mu => out.push(("mu".into(), Box::new(|s| s.mu))),
        Selector::Sigma => out.push(("sigma".into(), Box::new(|s| s.sigma2_y.sqrt()))),
        Selector::Lambda => {
            for q in 0..q_all {
                out.push((format!("lambda[{}]", q + 1), Box::new(move |s| s.lambda[q])));
            }
        }
        Selector::SigmaLambda => out.push(("sigma_lambda".into(), Box::new(|s| s.sigma_lambda))),
        Selector::SigmaB => {
            for v in 0..v_all {
                out.push((format!("sigma_b[{}]", fname(v)), Box::new(move |s| s.sigma_b[v])));
            }
        }
        Selector::MainEffects(f) => {
            for v in factors(f)? {
                for (i, level) in layout.level_names()[v].iter().enumerate() {
                    out.push((
                        format!("b[{}][{level}]", fname(v)),
                        Box::new(move |s| s.main_effects[v][i]),
                    ));
                }
            }
        }
        Selector::Beta(f) => {
            for v in factors(f)? {
                for q in 0..q_all {
                    for (i, level) in layout.level_names()[v].iter().enumerate() {
                        out.push((
                            format!("beta[{}][{}][{level}]", fname(v), q + 1),
                            Box::new(move |s| s.beta(v)[q][i]),
                        ));
                    }
                }
            }
        }
        Selector::Ar => {
            if draws.iter().next().is_some_and(|s| s.ar.is_none()) {
                return Err(Error::arg("draws carry no AR block"));
            }
            let field = |f: fn(&crate::ar::ArParams) -> f64| -> Extractor {
                Box::new(move |s| s.ar.as_ref().map_or(f64::NAN, f))
            };
            out.push(("phi_b".into(), field(|a| a.phi_b)));
            out.push(("phi_theta".into(), field(|a| a.phi_theta)));
            out.push(("alpha_b".into(), field(|a| a.alpha_b)));
            out.push(("alpha_theta".into(), field(|a| a.alpha_theta)));
            out.push(("sigma_eta".into(), field(|a| a.sigma_eta)));
            out.push(("sigma_omega".into(), field(|a| a.sigma_omega)));
        }
    }
    Ok(out)
}

/// Per-element summaries of the selected parameters.
pub fn summarize(draws: &PosteriorDraws, selector: &Selector) -> Result<Vec<ElementSummary>> {
    if draws.n_draws() == 0 {
        return Err(Error::EmptyData);
    }
    extractors(draws, selector)?
        .par_iter()
        .map(|(name, f)| {
            let values: Vec<f64> = draws.iter().map(f).collect();
            Ok(ElementSummary {
                name: name.clone(),
                summary: Summary::of(&values)?,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionSummary {
    pub cell: Vec<usize>,
    pub median: f64,
    pub mean: f64,
    pub sd: f64,
    pub q05: f64,
    pub q95: f64,
}

impl PredictionSummary {
    fn new(cell: Vec<usize>, s: Summary) -> Self {
        Self {
            cell,
            median: s.q50,
            mean: s.mean,
            sd: s.sd,
            q05: s.q05,
            q95: s.q95,
        }
    }
}

fn check_cells(layout: &FactorLayout, cells: &[Vec<usize>]) -> Result<()> {
    for cell in cells {
        layout
            .check_cell(cell)
            .map_err(|e| Error::layout(format!("cell {cell:?}: {e}")))?;
    }
    Ok(())
}

/// Posterior (predictive) summaries at `cells`.
///
/// With `include_noise`, each draw's predictor gets an independent
/// N(0, σ²) perturbation. The noise stream of a cell depends only on
/// `seed` and the cell's grid position, so results do not depend on the
/// order or batching of `cells`.
pub fn predict_cells(
    draws: &PosteriorDraws,
    cells: &[Vec<usize>],
    include_noise: bool,
    seed: u64,
) -> Result<Vec<PredictionSummary>> {
    if draws.n_draws() == 0 {
        return Err(Error::EmptyData);
    }
    let layout = &draws.layout;
    check_cells(layout, cells)?;
    for s in draws.iter() {
        s.check_layout(layout)?;
    }
    cells
        .par_iter()
        .map(|cell| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(layout.flatten_index(cell)? as u64);
            let values: Vec<f64> = draws
                .iter()
                .map(|s| {
                    let mut y = s.predict_unchecked(cell);
                    if include_noise {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        y += s.sigma2_y.sqrt() * z;
                    }
                    y
                })
                .collect();
            Ok(PredictionSummary::new(cell.clone(), Summary::of(&values)?))
        })
        .collect()
}

/// Posterior mean of the predictor at every cell (no noise).
pub fn posterior_mean_predictor(draws: &PosteriorDraws, cells: &[Vec<usize>]) -> Result<Vec<f64>> {
    check_cells(&draws.layout, cells)?;
    let n = draws.n_draws();
    if n == 0 {
        return Err(Error::EmptyData);
    }
    Ok(cells
        .par_iter()
        .map(|c| draws.iter().map(|s| s.predict_unchecked(c)).sum::<f64>() / n as f64)
        .collect())
}

fn check_pair(y: &[f64], yhat: &[f64]) -> Result<()> {
    if y.len() != yhat.len() {
        return Err(Error::arg(format!(
            "length mismatch: {} observations, {} predictions",
            y.len(),
            yhat.len()
        )));
    }
    if y.is_empty() {
        return Err(Error::arg("metrics need at least one observation"));
    }
    Ok(())
}

pub fn rmse(y: &[f64], yhat: &[f64]) -> Result<f64> {
    check_pair(y, yhat)?;
    let sse: f64 = y.iter().zip(yhat).map(|(a, b)| (a - b).powi(2)).sum();
    Ok((sse / y.len() as f64).sqrt())
}

/// 1 − SSE/SST with SST centred at the mean of `y` (which may be a test set).
pub fn r_squared(y: &[f64], yhat: &[f64]) -> Result<f64> {
    check_pair(y, yhat)?;
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    let sst: f64 = y.iter().map(|a| (a - mean).powi(2)).sum();
    if !(sst > 0.0) {
        return Err(Error::arg("R² is undefined when y has zero variance"));
    }
    let sse: f64 = y.iter().zip(yhat).map(|(a, b)| (a - b).powi(2)).sum();
    Ok(1.0 - sse / sst)
}

/// Summaries over a two-factor grid with every other factor held fixed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InteractionGrid {
    pub row_factor: usize,
    pub col_factor: usize,
    /// The full cell used for entry (0, 0); rows/cols vary the pair.
    pub fixed: Vec<usize>,
    /// `b^(row)_i + Σ_q λ_q ∏_v β` per (i, j).
    pub with_main: Vec<Vec<Summary>>,
    /// The multiplicative term alone per (i, j).
    pub pure: Vec<Vec<Summary>>,
}

/// Row-factor effect plus interaction at every (i, j) of a factor pair.
///
/// `fixed` must assign a level to every factor outside the pair, and to
/// nothing else.
pub fn interaction_effect(
    draws: &PosteriorDraws,
    pair: (usize, usize),
    fixed: &BTreeMap<usize, usize>,
) -> Result<InteractionGrid> {
    let layout = &draws.layout;
    let v = layout.n_factors();
    let (r, c) = pair;
    if r >= v || c >= v || r == c {
        return Err(Error::arg(format!("invalid factor pair ({r}, {c})")));
    }
    let mut base = vec![0usize; v];
    for f in (0..v).filter(|&f| f != r && f != c) {
        let Some(&level) = fixed.get(&f) else {
            return Err(Error::arg(format!(
                "no level fixed for factor `{}`",
                layout.factor_names()[f]
            )));
        };
        base[f] = level;
    }
    if let Some(f) = fixed.keys().find(|&&f| f == r || f == c || f >= v) {
        return Err(Error::arg(format!("factor {f} cannot be fixed here")));
    }
    layout.check_cell(&base)?;
    if draws.n_draws() == 0 {
        return Err(Error::EmptyData);
    }
    let (rows, cols) = (layout.levels(r), layout.levels(c));
    let cells: Vec<(usize, usize)> = (0..rows).flat_map(|i| (0..cols).map(move |j| (i, j))).collect();
    let summaries: Vec<(Summary, Summary)> = cells
        .par_iter()
        .map(|&(i, j)| {
            let mut cell = base.clone();
            cell[r] = i;
            cell[c] = j;
            let pure: Vec<f64> = draws.iter().map(|s| s.interaction_unchecked(&cell)).collect();
            let with: Vec<f64> = draws
                .iter()
                .zip(&pure)
                .map(|(s, p)| s.main_effects[r][i] + p)
                .collect();
            Ok((Summary::of(&with)?, Summary::of(&pure)?))
        })
        .collect::<Result<_>>()?;
    let grid = |pick: fn(&(Summary, Summary)) -> Summary| {
        summaries.chunks(cols).map(|row| row.iter().map(pick).collect()).collect()
    };
    Ok(InteractionGrid {
        row_factor: r,
        col_factor: c,
        fixed: base,
        with_main: grid(|p| p.0),
        pure: grid(|p| p.1),
    })
}

/// Posterior mean of the multiplicative term at each cell.
pub fn posterior_mean_interaction(draws: &PosteriorDraws, cells: &[Vec<usize>]) -> Result<Vec<f64>> {
    check_cells(&draws.layout, cells)?;
    let n = draws.n_draws();
    if n == 0 {
        return Err(Error::EmptyData);
    }
    Ok(cells
        .par_iter()
        .map(|c| draws.iter().map(|s| s.interaction_unchecked(c)).sum::<f64>() / n as f64)
        .collect())
}

/// RMSE between the posterior-mean and true multiplicative terms over the
/// full grid.
pub fn interaction_recovery_rmse(draws: &PosteriorDraws, truth: &ParameterState) -> Result<f64> {
    truth.check_layout(&draws.layout)?;
    let cells: Vec<Vec<usize>> = draws.layout.cells().collect();
    let est = posterior_mean_interaction(draws, &cells)?;
    let tru: Vec<f64> = cells.iter().map(|c| truth.interaction_unchecked(c)).collect();
    rmse(&tru, &est)
}

/// Posterior summary of each level's mean response over the full grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelSummary {
    pub level: String,
    pub median: f64,
    pub sd: f64,
    pub lower: f64,
    pub upper: f64,
}

/// Per level of `factor`: the grid-averaged predictor μ + b_i of each draw
/// (the other main effects and all interaction terms average to zero over
/// the grid). Its median is reported with bounds median ± 2·sd, where sd is
/// the posterior SD of the level mean plus, with `include_noise`, the mean
/// residual variance.
pub fn level_summaries(draws: &PosteriorDraws, factor: usize, include_noise: bool) -> Result<Vec<LevelSummary>> {
    let layout = &draws.layout;
    if factor >= layout.n_factors() {
        return Err(Error::arg(format!("factor index {factor} out of range")));
    }
    let n = draws.n_draws();
    if n == 0 {
        return Err(Error::EmptyData);
    }
    let noise = if include_noise {
        draws.iter().map(|s| s.sigma2_y).sum::<f64>() / n as f64
    } else {
        0.0
    };
    layout.level_names()[factor]
        .iter()
        .enumerate()
        .map(|(i, level)| {
            let m: Vec<f64> = draws.iter().map(|s| s.mu + s.main_effects[factor][i]).collect();
            let s = Summary::of(&m)?;
            // population variance so a single draw gives exactly zero
            let var = m.iter().map(|x| (x - s.mean).powi(2)).sum::<f64>() / n as f64;
            let sd = (var + noise).sqrt();
            Ok(LevelSummary {
                level: level.clone(),
                median: s.q50,
                sd,
                lower: s.q50 - 2.0 * sd,
                upper: s.q50 + 2.0 * sd,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::linear_predictor;
    use crate::model::tests::small_state;

    fn draws_of(dims: &[usize], states: Vec<ParameterState>) -> PosteriorDraws {
        PosteriorDraws::from_chains(FactorLayout::from_dims(dims).unwrap(), "y", vec![states]).unwrap()
    }

    #[test]
    fn percentiles_follow_linear_interpolation() {
        let v: Vec<f64> = (1..=100).map(f64::from).collect();
        let s = Summary::of(&v).unwrap();
        assert!((s.q05 - 5.95).abs() < 1e-12);
        assert!((s.q95 - 95.05).abs() < 1e-12);
        assert!((s.q50 - 50.5).abs() < 1e-12);
        let c = Summary::of(&[2.5; 7]).unwrap();
        assert_eq!((c.sd, c.q05, c.q50, c.q95), (0.0, 2.5, 2.5, 2.5));
        assert!(matches!(Summary::of(&[]), Err(Error::EmptyData)));
    }

    #[test]
    fn identical_draws_have_degenerate_summaries() {
        let s = small_state(&[3, 2], 1, 4);
        let d = draws_of(&[3, 2], vec![s.clone(); 5]);
        for e in summarize(&d, &Selector::MainEffects(None)).unwrap() {
            assert_eq!(e.summary.sd, 0.0);
            assert_eq!(e.summary.q05, e.summary.q95);
        }
        let names: Vec<String> = summarize(&d, &Selector::Beta(Some(1)))
            .unwrap()
            .into_iter()
            .map(|e| e.name)
            .collect();
        assert_eq!(names, ["beta[f2][1][f2_1]", "beta[f2][1][f2_2]"]);
    }

    #[test]
    fn selectors_parse_and_reject() {
        let layout = FactorLayout::from_dims(&[2, 2]).unwrap();
        assert_eq!("mu".parse::<Selector>().unwrap(), Selector::Mu);
        assert_eq!("b:1".parse::<Selector>().unwrap(), Selector::MainEffects(Some(1)));
        assert_eq!(Selector::parse_with("beta:f1", Some(&layout)).unwrap(), Selector::Beta(Some(0)));
        for bad in ["nu", "lambda:0", "b:zzz"] {
            assert!(matches!(Selector::parse_with(bad, Some(&layout)), Err(Error::Argument(_))));
        }
        for s in ["mu", "b", "b:1", "beta:0", "ar", "sigma_lambda"] {
            assert_eq!(s.parse::<Selector>().unwrap().to_string(), s);
        }
        let d = draws_of(&[2, 2], vec![small_state(&[2, 2], 1, 1)]);
        assert!(matches!(summarize(&d, &Selector::Ar), Err(Error::Argument(_))));
        assert!(matches!(summarize(&d, &Selector::MainEffects(Some(5))), Err(Error::Argument(_))));
    }

    #[test]
    fn single_draw_prediction_equals_linear_predictor() {
        let s = small_state(&[3, 4, 2], 2, 9);
        let d = draws_of(&[3, 4, 2], vec![s.clone()]);
        let cells: Vec<Vec<usize>> = d.layout.cells().collect();
        let p = predict_cells(&d, &cells, false, 1).unwrap();
        for (ps, c) in p.iter().zip(&cells) {
            let lp = linear_predictor(&s, &d.layout, c).unwrap();
            assert_eq!(ps.median, lp);
            assert_eq!(ps.mean, lp);
            assert_eq!(ps.sd, 0.0);
        }
        assert!(matches!(
            predict_cells(&d, &[vec![0, 9, 0]], false, 1),
            Err(Error::LayoutMismatch(_))
        ));
    }

    #[test]
    fn noise_widens_every_interval_and_is_order_independent() {
        let states: Vec<ParameterState> = (0..400).map(|k| small_state(&[3, 3], 1, k)).collect();
        let d = draws_of(&[3, 3], states);
        let cells: Vec<Vec<usize>> = d.layout.cells().collect();
        let plain = predict_cells(&d, &cells, false, 7).unwrap();
        let noisy = predict_cells(&d, &cells, true, 7).unwrap();
        for (a, b) in plain.iter().zip(&noisy) {
            assert!(b.q95 - b.q05 > a.q95 - a.q05);
            assert!(b.q05 <= b.median && b.median <= b.q95);
        }
        let reversed: Vec<Vec<usize>> = cells.iter().rev().cloned().collect();
        let mut again = predict_cells(&d, &reversed, true, 7).unwrap();
        again.reverse();
        assert_eq!(again, noisy);
    }

    // spreadsheet-style: expand the formulas term by term
    #[test]
    fn metrics_match_explicit_recomputation() {
        let mut s = 12345u64;
        let mut next = || {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (s >> 11) as f64 / (1u64 << 53) as f64
        };
        for _ in 0..3 {
            let y: Vec<f64> = (0..10).map(|_| 10.0 * next()).collect();
            let yhat: Vec<f64> = y.iter().map(|v| v + next() - 0.5).collect();
            let mut sse = 0.0;
            let mut total = 0.0;
            for k in 0..10 {
                sse += (y[k] - yhat[k]) * (y[k] - yhat[k]);
                total += y[k];
            }
            let ybar = total / 10.0;
            let mut sst = 0.0;
            for v in &y {
                sst += (v - ybar) * (v - ybar);
            }
            assert!((rmse(&y, &yhat).unwrap() - (sse / 10.0).sqrt()).abs() < 1e-12);
            assert!((r_squared(&y, &yhat).unwrap() - (1.0 - sse / sst)).abs() < 1e-12);
        }
        let y = [1.0, 2.0, 6.0];
        assert_eq!(rmse(&y, &y).unwrap(), 0.0);
        assert_eq!(r_squared(&y, &y).unwrap(), 1.0);
        assert!(r_squared(&y, &[3.0; 3]).unwrap().abs() < 1e-15);
        assert!(matches!(rmse(&y, &[1.0]), Err(Error::Argument(_))));
        assert!(matches!(r_squared(&[2.0; 3], &y), Err(Error::Argument(_))));
    }

    #[test]
    fn interaction_without_lambda_is_the_main_effect() {
        let states: Vec<ParameterState> = (0..50)
            .map(|k| {
                let mut s = small_state(&[3, 2, 2], 2, k);
                s.lambda = vec![0.0, 0.0];
                s
            })
            .collect();
        let d = draws_of(&[3, 2, 2], states);
        let grid = interaction_effect(&d, (0, 1), &BTreeMap::from([(2, 1)])).unwrap();
        let b = summarize(&d, &Selector::MainEffects(Some(0))).unwrap();
        for (i, row) in grid.with_main.iter().enumerate() {
            for cell in row {
                assert_eq!(*cell, b[i].summary);
            }
        }
        assert!(grid.pure.iter().flatten().all(|s| s.mean == 0.0 && s.sd == 0.0));
        assert!(matches!(
            interaction_effect(&d, (0, 1), &BTreeMap::new()),
            Err(Error::Argument(_))
        ));
        assert!(matches!(
            interaction_effect(&d, (0, 1), &BTreeMap::from([(2, 0), (0, 0)])),
            Err(Error::Argument(_))
        ));
    }

    #[test]
    fn interval_width_tracks_sd() {
        // per-cell spread grows with the cell index; 3000 draws
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let base = small_state(&[6, 5], 1, 1);
        let states: Vec<ParameterState> = (0..3000)
            .map(|_| {
                let mut s = base.clone();
                for (i, b) in s.main_effects[0].iter_mut().enumerate() {
                    *b += (i + 1) as f64 * rng.random_range(-1.0..1.0);
                }
                for (j, b) in s.main_effects[1].iter_mut().enumerate() {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    *b += 0.3 * (j + 1) as f64 * z;
                }
                s
            })
            .collect();
        let d = draws_of(&[6, 5], states);
        let cells: Vec<Vec<usize>> = d.layout.cells().collect();
        let p = predict_cells(&d, &cells, false, 0).unwrap();
        let rank = |xs: Vec<f64>| -> Vec<f64> {
            let mut idx: Vec<usize> = (0..xs.len()).collect();
            idx.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
            let mut r = vec![0.0; xs.len()];
            for (k, &i) in idx.iter().enumerate() {
                r[i] = k as f64;
            }
            r
        };
        let rs = rank(p.iter().map(|c| c.sd).collect());
        let rw = rank(p.iter().map(|c| c.q95 - c.q05).collect());
        let n = rs.len() as f64;
        let d2: f64 = rs.iter().zip(&rw).map(|(a, b)| (a - b).powi(2)).sum();
        let spearman = 1.0 - 6.0 * d2 / (n * (n * n - 1.0));
        assert!(spearman > 0.95, "rank correlation {spearman}");
    }

    #[test]
    fn level_summary_orders_and_collapses() {
        let mut s = small_state(&[3, 2], 1, 3);
        s.main_effects[0] = vec![2.0, 0.0, -2.0];
        s.sigma2_y = 0.25;
        let d = draws_of(&[3, 2], vec![s]);
        let plain = level_summaries(&d, 0, false).unwrap();
        assert_eq!(plain.iter().map(|l| l.median).collect::<Vec<_>>(), [5.0, 3.0, 1.0]);
        assert!(plain.iter().all(|l| l.lower == l.median && l.upper == l.median));
        let noisy = level_summaries(&d, 0, true).unwrap();
        assert!(noisy.iter().all(|l| (l.upper - l.median - 1.0).abs() < 1e-12));
    }
}
