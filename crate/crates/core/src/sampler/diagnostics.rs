//! Split-chain potential scale reduction and effective sample size.
//!
//! Both follow the conventions of the Stan reference manual: chains are
//! trimmed to the shortest length, R̂ is computed on half-chains, and ESS
//! uses Geyer's initial monotone sequence on the multi-chain
//! autocorrelation estimate.

use crate::error::{Error, Result};

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

fn sample_var(x: &[f64]) -> f64 {
    let m = mean(x);
    x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (x.len() as f64 - 1.0)
}

/// Split-R̂ over per-chain traces of one scalar.
///
/// Returns 1 when every draw is identical and `+∞` when chains are
/// internally constant but disagree.
pub fn rhat(chains: &[Vec<f64>]) -> Result<f64> {
    if chains.len() < 2 {
        return Err(Error::arg("rhat needs at least 2 chains"));
    }
    let n = chains.iter().map(Vec::len).min().unwrap_or(0);
    if n < 4 {
        return Err(Error::arg("rhat needs at least 4 draws per chain"));
    }
    let half = n / 2;
    let mut split: Vec<&[f64]> = Vec::with_capacity(2 * chains.len());
    for c in chains {
        split.push(&c[..half]);
        split.push(&c[n - half..n]);
    }
    let means: Vec<f64> = split.iter().map(|c| mean(c)).collect();
    let within = split.iter().map(|c| sample_var(c)).sum::<f64>() / split.len() as f64;
    let between = half as f64 * sample_var(&means);
    if within <= 0.0 {
        return Ok(if between <= 0.0 { 1.0 } else { f64::INFINITY });
    }
    let nf = half as f64;
    let var_plus = (nf - 1.0) / nf * within + between / nf;
    Ok((var_plus / within).sqrt())
}

fn centred(x: &[f64]) -> Vec<f64> {
    let m = mean(x);
    x.iter().map(|v| v - m).collect()
}

/// Biased autocovariance (divides by n) of a centred trace at one lag.
fn autocovariance_at(centred: &[f64], lag: usize) -> f64 {
    let n = centred.len();
    centred[..n - lag]
        .iter()
        .zip(&centred[lag..])
        .map(|(a, b)| a * b)
        .sum::<f64>()
        / n as f64
}

/// Effective sample size across chains, capped at the total draw count.
pub fn ess(chains: &[Vec<f64>]) -> Result<f64> {
    if chains.is_empty() {
        return Err(Error::arg("ess needs at least one chain"));
    }
    let n = chains.iter().map(Vec::len).min().unwrap_or(0);
    if n < 4 {
        return Err(Error::arg("ess needs at least 4 draws per chain"));
    }
    let m = chains.len();
    let total = (m * n) as f64;
    let trimmed: Vec<&[f64]> = chains.iter().map(|c| &c[..n]).collect();
    let centred: Vec<Vec<f64>> = trimmed.iter().map(|c| centred(c)).collect();
    let mean_acov = |lag: usize| -> f64 {
        centred
            .iter()
            .map(|c| autocovariance_at(c, lag))
            .sum::<f64>()
            / m as f64
    };
    let nf = n as f64;
    let chain_means: Vec<f64> = trimmed.iter().map(|c| mean(c)).collect();
    let within = mean_acov(0) * nf / (nf - 1.0);
    let var_plus = if m > 1 {
        within * (nf - 1.0) / nf + sample_var(&chain_means)
    } else {
        within * (nf - 1.0) / nf
    };
    if var_plus <= 0.0 {
        return Ok(total);
    }
    let rho = |lag: usize| -> f64 { 1.0 - (within - mean_acov(lag)) / var_plus };

    // Geyer: sum adjacent pairs while positive, enforcing monotonicity.
    let mut pair_sums = Vec::new();
    let mut lag = 0;
    while lag + 1 < n {
        let p = rho(lag) + rho(lag + 1);
        if p < 0.0 {
            break;
        }
        pair_sums.push(p);
        lag += 2;
    }
    for k in 1..pair_sums.len() {
        if pair_sums[k] > pair_sums[k - 1] {
            pair_sums[k] = pair_sums[k - 1];
        }
    }
    let tau = -1.0 + 2.0 * pair_sums.iter().sum::<f64>();
    let tau = tau.max(1.0 / total.log10().max(1.0));
    Ok((total / tau).min(total))
}
