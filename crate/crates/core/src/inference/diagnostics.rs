//! Split-chain scale reduction and effective sample size, following the
//! rank-free formulas used by Stan (Gelman et al., BDA3 ch. 11).

use serde::{Deserialize, Serialize};

use super::draws::PosteriorDraws;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterDiagnostics {
    pub name: String,
    /// `None` for single-chain draws.
    pub rhat: Option<f64>,
    pub ess: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsReport {
    pub chains: usize,
    pub draws_per_chain: usize,
    pub parameters: Vec<ParameterDiagnostics>,
    pub acceptance: Vec<f64>,
    pub warnings: Vec<String>,
}

pub fn mcmc_diagnostics(draws: &PosteriorDraws) -> DiagnosticsReport {
    let mut warnings = draws.warnings().to_vec();
    if draws.chains() < 2 {
        warnings.push("single chain: scale reduction unavailable".into());
    }
    let parameters = draws
        .names()
        .iter()
        .zip(draws.columns())
        .map(|(name, col)| {
            let chains: Vec<&[f64]> = col.chunks(draws.per_chain()).collect();
            ParameterDiagnostics {
                name: name.clone(),
                rhat: (draws.chains() >= 2).then(|| split_rhat_of(&chains)),
                ess: ess_of(&chains),
            }
        })
        .collect();
    DiagnosticsReport {
        chains: draws.chains(),
        draws_per_chain: draws.per_chain(),
        parameters,
        acceptance: draws.acceptance().to_vec(),
        warnings,
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn var(v: &[f64]) -> f64 {
    let m = mean(v);
    v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() as f64 - 1.0)
}

/// Within-chain variance, and the pooled estimate of the marginal variance.
fn variance_components(chains: &[&[f64]]) -> (f64, f64) {
    let n = chains[0].len() as f64;
    let w = chains.iter().map(|c| var(c)).sum::<f64>() / chains.len() as f64;
    let means: Vec<f64> = chains.iter().map(|c| mean(c)).collect();
    let b = if chains.len() > 1 { n * var(&means) } else { 0.0 };
    (w, (n - 1.0) / n * w + b / n)
}

/// Split-R-hat: each chain is halved and the halves are compared.
pub fn split_rhat_of(chains: &[&[f64]]) -> f64 {
    let half = chains[0].len() / 2;
    if half < 2 {
        return f64::NAN;
    }
    let halves: Vec<&[f64]> = chains
        .iter()
        .flat_map(|c| [&c[..half], &c[half..2 * half]])
        .collect();
    let (w, var_plus) = variance_components(&halves);
    if w == 0.0 {
        return if var_plus == 0.0 { 1.0 } else { f64::INFINITY };
    }
    (var_plus / w).sqrt()
}

fn autocovariance(c: &[f64], max_lag: usize) -> Vec<f64> {
    let n = c.len();
    let m = mean(c);
    let centered: Vec<f64> = c.iter().map(|x| x - m).collect();
    (0..=max_lag)
        .map(|t| {
            centered[..n - t]
                .iter()
                .zip(&centered[t..])
                .map(|(a, b)| a * b)
                .sum::<f64>()
                / n as f64
        })
        .collect()
}

/// Effective sample size with Geyer's initial monotone sequence estimator.
pub fn ess_of(chains: &[&[f64]]) -> f64 {
    let m = chains.len();
    let n = chains[0].len();
    let total = (m * n) as f64;
    if n < 4 {
        return total;
    }
    let (w, var_plus) = variance_components(chains);
    if var_plus == 0.0 || w == 0.0 {
        return total;
    }
    let max_lag = n - 1;
    // computed lazily in blocks so short autocorrelations stay cheap
    let mut block = 64.min(max_lag);
    let mut acovs: Vec<Vec<f64>> = chains.iter().map(|c| autocovariance(c, block)).collect();
    let rho = |acovs: &Vec<Vec<f64>>, t: usize| {
        let mean_acov = acovs.iter().map(|a| a[t]).sum::<f64>() / m as f64;
        1.0 - (w - mean_acov) / var_plus
    };

    let mut sum_pairs = 0.0;
    let mut prev_pair = f64::INFINITY;
    let mut t = 0;
    loop {
        if t + 1 > max_lag {
            break;
        }
        if t + 1 > block {
            block = (block * 2).min(max_lag);
            acovs = chains.iter().map(|c| autocovariance(c, block)).collect();
        }
        let pair = rho(&acovs, t) + rho(&acovs, t + 1);
        if pair <= 0.0 {
            break;
        }
        let pair = pair.min(prev_pair);
        sum_pairs += pair;
        prev_pair = pair;
        t += 2;
    }
    let tau = -1.0 + 2.0 * sum_pairs;
    total / tau.max(1.0 / total.log10().max(1.0))
}
