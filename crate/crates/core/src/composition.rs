//! Log-ratio parameterization of the cluster motifs and its samplers.
//!
//! Motifs are anchored at the reference cluster: eta_i0 = 0 and
//! q*_iu = exp(eta_iu) / D_i with D_i = sum_u m_u exp(eta_iu), so each row
//! satisfies sum_u m_u q*_iu = 1 exactly. The eta full conditional couples
//! the multinomial counts with a Gaussian regression prior; it is strictly
//! log-concave and sampled by adaptive rejection.

use rand::Rng;
use rand_distr::{Distribution, Gamma};

use crate::ars;
use crate::data::AbundanceData;
use crate::error::{Error, Result};
use crate::math;
use crate::state::ModelState;

/// Map one sample's log-ratio row to its motif row under the row-stochastic
/// constraint. `eta_row[0]` must be 0; `m` holds the cluster sizes.
pub fn qstar_from_eta(eta_row: &[f64], m: &[usize]) -> Vec<f64> {
    assert_eq!(eta_row.len(), m.len());
    assert!(!eta_row.is_empty());
    debug_assert_eq!(eta_row[0], 0.0);
    // ln D via shifted log-sum-exp to survive extreme eta
    let terms: Vec<f64> = eta_row
        .iter()
        .zip(m)
        .map(|(&e, &mu)| (mu as f64).ln() + e)
        .collect();
    let ln_d = math::log_sum_exp(&terms);
    eta_row.iter().map(|&e| (e - ln_d).exp()).collect()
}

/// Unnormalized log full conditional of eta_iu evaluated at `value`,
/// for a non-reference cluster u.
pub fn eta_logdensity(
    state: &ModelState,
    data: &AbundanceData,
    i: usize,
    u: usize,
    value: f64,
) -> f64 {
    debug_assert!(u >= 1);
    let m_u = state.sizes[u] as f64;
    let d_rest = state.denom[i] - m_u * state.exp_eta.get(i, u);
    let ltilde = state.ltilde[i] as f64;
    let y_iu = state.y[i][u] as f64;
    let k = data.groups[i];
    let mean = math::dot(data.xdag_row(i), state.beta(k, u));
    let resid = value - mean;
    y_iu * value
        - ltilde * (d_rest + m_u * value.exp()).ln()
        - resid * resid / (2.0 * state.sigma_e2)
}

/// Replace eta_iu with an exact draw from its full conditional and refresh
/// the row's caches.
pub fn ars_sample_eta<R: Rng>(
    state: &mut ModelState,
    data: &AbundanceData,
    i: usize,
    u: usize,
    rng: &mut R,
) -> Result<f64> {
    let k = data.groups[i];
    let prior_mean = math::dot(data.xdag_row(i), state.beta(k, u));
    let prior_sd = state.sigma_e2.sqrt();
    let m_u = state.sizes[u] as f64;
    let d_rest = state.denom[i] - m_u * state.exp_eta.get(i, u);
    let ltilde = state.ltilde[i] as f64;
    let y_iu = state.y[i][u] as f64;
    let sigma_e2 = state.sigma_e2;
    let target = |v: f64| {
        let resid = v - prior_mean;
        y_iu * v - ltilde * (d_rest + m_u * v.exp()).ln() - resid * resid / (2.0 * sigma_e2)
    };
    let draw = ars::sample_log_concave(target, prior_mean, prior_sd, rng).map_err(|e| {
        Error::Model(format!(
            "eta sampler failed for sample {i}, cluster {u}: {e}"
        ))
    })?;
    state.eta.set(i, u, draw);
    state.exp_eta.set(i, u, draw.exp());
    state.rebuild_denom_row(i);
    Ok(draw)
}

/// One full pass of eta updates over samples and non-reference clusters.
pub fn update_eta_sweep<R: Rng>(
    state: &mut ModelState,
    data: &AbundanceData,
    rng: &mut R,
) -> Result<()> {
    for i in 0..state.n {
        for u in 1..state.n_clusters() {
            ars_sample_eta(state, data, i, u, rng)?;
        }
    }
    Ok(())
}

/// Conjugate inverse-gamma update of the log-ratio residual variance.
pub fn update_sigma_e2<R: Rng>(
    state: &mut ModelState,
    data: &AbundanceData,
    a_e: f64,
    b_e: f64,
    rng: &mut R,
) -> f64 {
    let mut ssr = 0.0;
    let mut count = 0usize;
    for i in 0..state.n {
        let k = data.groups[i];
        for u in 1..state.n_clusters() {
            let r = state.eta.get(i, u) - math::dot(data.xdag_row(i), state.beta(k, u));
            ssr += r * r;
            count += 1;
        }
    }
    let shape = a_e + count as f64 / 2.0;
    let rate = b_e + ssr / 2.0;
    let draw = sample_inv_gamma(shape, rate, rng);
    state.sigma_e2 = draw;
    draw
}

/// Inverse-gamma(shape, rate) draw via a gamma reciprocal.
pub fn sample_inv_gamma<R: Rng>(shape: f64, rate: f64, rng: &mut R) -> f64 {
    let g = Gamma::new(shape, 1.0 / rate).expect("inverse-gamma parameters");
    1.0 / g.sample(rng)
}
