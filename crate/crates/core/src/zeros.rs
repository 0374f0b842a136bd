//! Technical-zero model and latent-count reconstruction.
//!
//! Every observed zero is either a technical zero (the latent count was
//! censored) or a sampling zero. Censoring indicators are swept with the
//! latent counts collapsed out, then the row's censored block is redrawn in
//! one shot: the latent extra depth is negative binomial in the observed
//! depth and the censored mass, and the censored counts are multinomial
//! within it.

use rand::Rng;
use rand_distr::{Binomial, Distribution, Gamma, Poisson};

use crate::composition::sample_inv_gamma;
use crate::data::AbundanceData;
use crate::error::{Error, Result};
use crate::math::{self, Mat};
use crate::state::ModelState;

/// Technical-zero probabilities for one cluster's coefficient matrix:
/// r*_iu = logistic(lambda_0 + sum_t lambda_t x_it + lambda_{T+1} ln L_i).
pub fn compute_rstar(lambda_u: &Mat, x: &[f64], t: usize, l: &[u64]) -> Vec<f64> {
    let n = l.len();
    assert_eq!(lambda_u.rows(), n);
    assert_eq!(lambda_u.cols(), t + 2);
    (0..n)
        .map(|i| {
            let row = lambda_u.row(i);
            let mut z = row[0];
            for c in 0..t {
                z += row[1 + c] * x[i * t + c];
            }
            z += row[t + 1] * (l[i] as f64).ln();
            math::logistic(z)
        })
        .collect()
}

/// Negative binomial draw with mass C(s + r - 1, s) q^s (1 - q)^r, sampled
/// as a gamma-mixed Poisson. `r` may be any positive real.
pub fn sample_negative_binomial<R: Rng>(r: f64, q: f64, rng: &mut R) -> Result<u64> {
    if q < 0.0 || q >= 1.0 {
        return Err(Error::Model(format!(
            "negative binomial censored mass out of range: q = {q}"
        )));
    }
    if q == 0.0 || r == 0.0 {
        return Ok(0);
    }
    let g = Gamma::new(r, q / (1.0 - q))
        .map_err(|e| Error::Model(format!("negative binomial shape {r}: {e}")))?
        .sample(rng);
    if g == 0.0 {
        return Ok(0);
    }
    let draw = Poisson::new(g)
        .map_err(|e| Error::Model(format!("negative binomial mean {g}: {e}")))?
        .sample(rng);
    Ok(draw as u64)
}

/// Multinomial draw via sequential binomials; `weights` need not be
/// normalized.
pub fn sample_multinomial<R: Rng>(total: u64, weights: &[f64], rng: &mut R) -> Vec<u64> {
    let mut out = vec![0u64; weights.len()];
    let mut remaining = total;
    let mut wsum: f64 = weights.iter().sum();
    for (j, &w) in weights.iter().enumerate() {
        if remaining == 0 {
            break;
        }
        if j + 1 == weights.len() {
            out[j] = remaining;
            break;
        }
        let prob = (w / wsum).clamp(0.0, 1.0);
        let draw = if prob >= 1.0 {
            remaining
        } else if prob <= 0.0 {
            0
        } else {
            Binomial::new(remaining, prob).unwrap().sample(rng)
        };
        out[j] = draw;
        remaining -= draw;
        wsum -= w;
    }
    out
}

/// Probability that an observed zero is a technical zero, given the censored
/// mass of the row's other cells. With no other censored mass this is the
/// plain two-branch rule r / (r + (1-r)(1-q)^L).
pub fn technical_zero_probability(rstar: f64, qstar: f64, other_censored_mass: f64, l: u64) -> f64 {
    let avail = 1.0 - other_censored_mass;
    debug_assert!(avail > 0.0 && qstar < avail);
    let ratio = (avail - qstar) / avail;
    let logit = rstar.ln() - (-rstar).ln_1p() - l as f64 * ratio.ln();
    math::logistic(logit)
}

/// Sweep the censoring indicators over every observed-zero cell, latent
/// counts collapsed out. Leaves `ztilde` for censored cells stale; callers
/// follow with [`impute_latent_row`] for each sample.
pub fn sample_censoring_indicators<R: Rng>(
    state: &mut ModelState,
    data: &AbundanceData,
    rng: &mut R,
) {
    for i in 0..state.n {
        // censored motif mass of the row, maintained as cells flip
        let mut qcens = state.censored_mass(i);
        for j in 1..state.p {
            let idx = i * state.p + j;
            if data.count(i, j) > 0 {
                debug_assert!(state.delta[idx]);
                continue;
            }
            let u = state.alloc[j];
            let q = state.qstar(i, u);
            let q_other = qcens - if state.delta[idx] { 0.0 } else { q };
            let p_censor = technical_zero_probability(state.rstar.get(i, u), q, q_other, data.l[i]);
            let censored = rng.random::<f64>() < p_censor;
            state.delta[idx] = !censored;
            qcens = q_other + if censored { q } else { 0.0 };
        }
    }
}

/// Latent extra depth for one sample given its censored set.
pub fn sample_latent_depth<R: Rng>(
    state: &ModelState,
    data: &AbundanceData,
    i: usize,
    rng: &mut R,
) -> Result<u64> {
    let qcens = state.censored_mass(i);
    if qcens == 0.0 {
        return Ok(0);
    }
    if qcens >= 1.0 {
        return Err(Error::Model(format!(
            "censored mass {qcens} >= 1 for sample {i}; model inconsistent"
        )));
    }
    sample_negative_binomial(data.l[i] as f64, qcens, rng)
}

/// Redraw the censored block of one row: latent depth, then a multinomial
/// split over the censored cells. Refreshes stilde/ltilde/y for the row.
pub fn impute_latent_row<R: Rng>(
    state: &mut ModelState,
    data: &AbundanceData,
    i: usize,
    rng: &mut R,
) -> Result<()> {
    let p = state.p;
    let censored: Vec<usize> = (0..p).filter(|&j| !state.delta[i * p + j]).collect();
    // zero out observed-zero cells that are currently uncensored
    for j in 0..p {
        let idx = i * p + j;
        if state.delta[idx] && data.count(i, j) == 0 {
            state.ztilde[idx] = 0;
        }
    }
    if censored.is_empty() {
        state.stilde[i] = 0;
        state.ltilde[i] = data.l[i];
        rebuild_y_row(state, i);
        return Ok(());
    }
    let s = sample_latent_depth(state, data, i, rng)?;
    let weights: Vec<f64> = censored
        .iter()
        .map(|&j| state.qstar(i, state.alloc[j]))
        .collect();
    let counts = sample_multinomial(s, &weights, rng);
    for (&j, &cnt) in censored.iter().zip(&counts) {
        state.ztilde[i * p + j] = cnt;
    }
    state.stilde[i] = s;
    state.ltilde[i] = data.l[i] + s;
    rebuild_y_row(state, i);
    Ok(())
}

fn rebuild_y_row(state: &mut ModelState, i: usize) {
    let c = state.n_clusters();
    state.y[i].clear();
    state.y[i].resize(c, 0);
    for j in 0..state.p {
        state.y[i][state.alloc[j]] += state.ztilde[i * state.p + j];
    }
}

/// Per-(sample, cluster) tallies of uncensored cells, the sufficient
/// statistic for the zero-model coefficients.
pub fn uncensored_tallies(state: &ModelState) -> Vec<Vec<u32>> {
    let c = state.n_clusters();
    let mut acc = vec![vec![0u32; c]; state.n];
    for i in 0..state.n {
        for j in 0..state.p {
            if state.delta[i * state.p + j] {
                acc[i][state.alloc[j]] += 1;
            }
        }
    }
    acc
}

/// Log posterior (up to a constant) for one coefficient row of one cluster:
/// binomial likelihood over the cluster's cells plus the Gaussian prior.
pub fn lambda_row_log_target(
    coeffs: &[f64],
    zpred: &[f64],
    uncensored: f64,
    member_count: f64,
    tau_lambda2: f64,
) -> f64 {
    let z = math::dot(coeffs, zpred);
    // ln r = z - softplus(z); ln(1-r) = -softplus(z)
    let censored = member_count - uncensored;
    let quad: f64 = coeffs.iter().map(|&l| l * l).sum();
    censored * z - member_count * math::softplus(z) - quad / (2.0 * tau_lambda2)
}

/// Adaptive random-walk Metropolis update of every zero-model coefficient
/// row, followed by the conjugate tau_lambda^2 draw. The reference cluster's
/// coefficients carry no likelihood and are refreshed from the prior.
pub fn update_lambda<R: Rng>(
    state: &mut ModelState,
    priors_a: f64,
    priors_b: f64,
    adapt: bool,
    rng: &mut R,
) {
    let c = state.n_clusters();
    let t2 = state.t + 2;
    let tallies = uncensored_tallies(state);
    let scale = state.rw_log_scale.exp();
    let step = rand_distr::Normal::new(0.0, scale).unwrap();
    let mut accepts = 0u64;
    let mut proposals = 0u64;

    // reference cluster: pure prior refresh
    let prior_sd = state.tau_lambda2.sqrt();
    let prior = rand_distr::Normal::new(0.0, prior_sd).unwrap();
    for i in 0..state.n {
        for col in 0..t2 {
            let v = prior.sample(rng);
            state.lambda[0].set(i, col, v);
        }
    }
    state.refresh_rstar_col(0);

    for u in 1..c {
        let m_u = state.sizes[u] as f64;
        for i in 0..state.n {
            let zpred: Vec<f64> = state.zpred_row(i).to_vec();
            let current: Vec<f64> = state.lambda[u].row(i).to_vec();
            let proposal: Vec<f64> = current.iter().map(|&v| v + step.sample(rng)).collect();
            let a = tallies[i][u] as f64;
            let cur_lp = lambda_row_log_target(&current, &zpred, a, m_u, state.tau_lambda2);
            let prop_lp = lambda_row_log_target(&proposal, &zpred, a, m_u, state.tau_lambda2);
            proposals += 1;
            if (rng.random::<f64>().max(1e-300)).ln() < prop_lp - cur_lp {
                accepts += 1;
                for (col, &v) in proposal.iter().enumerate() {
                    state.lambda[u].set(i, col, v);
                }
                state.refresh_rstar_cell(i, u);
            }
        }
    }
    state.rw_accepts += accepts;
    state.rw_proposals += proposals;
    if adapt && proposals > 0 {
        // Robbins-Monro drift toward a 0.35 acceptance rate
        let rate = accepts as f64 / proposals as f64;
        state.rw_log_scale += 0.1 * (rate - 0.35);
        state.rw_log_scale = state.rw_log_scale.clamp(-8.0, 4.0);
    }

    // conjugate variance update over all coefficient entries
    let mut quad = 0.0;
    let mut count = 0usize;
    for u in 0..c {
        for i in 0..state.n {
            for &v in state.lambda[u].row(i) {
                quad += v * v;
                count += 1;
            }
        }
    }
    state.tau_lambda2 = sample_inv_gamma(priors_a + count as f64 / 2.0, priors_b + quad / 2.0, rng);
}
