//! Taxon-to-cluster allocations under the CRP prior.
//!
//! The Gibbs step for one taxon marginalizes that column's censoring
//! indicator and latent count on every observed zero, so the candidate
//! weight for cluster u collapses to
//!
//!   positive cell:  -(Lt_i + z_ij) ln D_i(u) + z_ij eta_iu + ln(1 - r*_iu)
//!   zero cell:      lse( ln r*_iu - Lt_i ln D_i^-,  ln(1-r*_iu) - Lt_i ln D_i(u) )
//!
//! where D_i^- is the row normalizer with taxon j removed, D_i(u) adds the
//! candidate cluster's exp(eta), and Lt_i is the row's actual depth without
//! column j. Candidate-independent terms cancel in the normalization. New
//! clusters are proposed through a single auxiliary component carrying fresh
//! prior draws; a taxon currently alone in its cluster reuses that cluster's
//! parameters as the auxiliary.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::data::AbundanceData;
use crate::error::Result;
use crate::math::{self, Mat};
use crate::state::{ModelState, Priors};
use crate::zeros;

/// Log CRP partition density: ln[ Gamma(a) a^C / Gamma(a + p) prod_u Gamma(m_u) ].
pub fn crp_log_partition_density(sizes: &[usize], alpha: f64) -> f64 {
    assert!(alpha > 0.0);
    let p: usize = sizes.iter().sum();
    let c = sizes.len();
    math::ln_gamma(alpha) + c as f64 * alpha.ln() - math::ln_gamma(alpha + p as f64)
        + sizes.iter().map(|&m| math::ln_gamma(m as f64)).sum::<f64>()
}

/// Draw a partition of `p` items from the sequential CRP; returns labels.
pub fn crp_prior_draw<R: Rng>(p: usize, alpha: f64, rng: &mut R) -> Vec<usize> {
    let mut labels = Vec::with_capacity(p);
    let mut sizes: Vec<usize> = Vec::new();
    for i in 0..p {
        let total = i as f64 + alpha;
        let u: f64 = rng.random::<f64>() * total;
        let mut acc = 0.0;
        let mut chosen = sizes.len();
        for (c, &m) in sizes.iter().enumerate() {
            acc += m as f64;
            if u < acc {
                chosen = c;
                break;
            }
        }
        if chosen == sizes.len() {
            sizes.push(1);
        } else {
            sizes[chosen] += 1;
        }
        labels.push(chosen);
    }
    labels
}

/// Parameters standing in for the "new cluster" candidate.
pub enum AuxParams {
    /// The taxon is currently a singleton; its own cluster plays the
    /// auxiliary role with its existing parameters.
    Own(usize),
    Fresh {
        eta_col: Vec<f64>,
        exp_eta_col: Vec<f64>,
        lambda: Mat,
        ln_r: Vec<f64>,
        ln_1mr: Vec<f64>,
        memberships: Vec<usize>,
    },
}

/// Candidate targets for a taxon move, parallel to the weight vector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Target {
    Existing(usize),
    Aux,
}

pub struct Candidates {
    pub targets: Vec<Target>,
    pub log_weights: Vec<f64>,
}

/// Draw auxiliary-cluster parameters for updating taxon `j`.
pub fn draw_aux<R: Rng>(
    state: &ModelState,
    data: &AbundanceData,
    j: usize,
    rng: &mut R,
) -> AuxParams {
    let u0 = state.alloc[j];
    if state.sizes[u0] == 1 {
        return AuxParams::Own(u0);
    }
    fresh_aux(state, data, rng)
}

/// Fresh prior draws for an auxiliary cluster.
pub fn fresh_aux<R: Rng>(state: &ModelState, data: &AbundanceData, rng: &mut R) -> AuxParams {
    let memberships: Vec<usize> = (0..state.k)
        .map(|_| {
            math::sample_log_categorical(&state.pi.iter().map(|p| p.ln()).collect::<Vec<_>>(), rng)
        })
        .collect();
    let noise = Normal::new(0.0, state.sigma_e2.sqrt()).unwrap();
    let mut eta_col = Vec::with_capacity(state.n);
    for i in 0..state.n {
        let k = data.groups[i];
        let mean = math::dot(data.xdag_row(i), &state.atoms[memberships[k]]);
        eta_col.push(mean + noise.sample(rng));
    }
    let lam_noise = Normal::new(0.0, state.tau_lambda2.sqrt()).unwrap();
    let mut lambda = Mat::zeros(state.n, state.t + 2);
    for i in 0..state.n {
        for c in 0..state.t + 2 {
            lambda.set(i, c, lam_noise.sample(rng));
        }
    }
    let (_, ln_r, ln_1mr) = state.rstar_for(&lambda);
    let exp_eta_col = eta_col.iter().map(|e| e.exp()).collect();
    AuxParams::Fresh {
        eta_col,
        exp_eta_col,
        lambda,
        ln_r,
        ln_1mr,
        memberships,
    }
}

/// Unnormalized log weights for re-allocating taxon `j`, computed without
/// mutating state. Candidates are every non-reference cluster that would
/// remain nonempty after removing `j`, plus the auxiliary.
pub fn candidates_with_aux(
    state: &ModelState,
    data: &AbundanceData,
    priors: &Priors,
    j: usize,
    aux: &AuxParams,
) -> Candidates {
    debug_assert!(j >= 1, "reference taxon is never re-allocated");
    let n = state.n;
    let c = state.n_clusters();
    let u0 = state.alloc[j];

    // row context with taxon j removed
    let mut d_minus = Vec::with_capacity(n);
    let mut ln_d_minus = Vec::with_capacity(n);
    let mut lmj = Vec::with_capacity(n);
    for i in 0..n {
        let d = state.denom[i] - state.exp_eta.get(i, u0);
        d_minus.push(d);
        ln_d_minus.push(d.ln());
        lmj.push((state.ltilde[i] - state.ztilde_at(i, j)) as f64);
    }

    let mut targets = Vec::new();
    let mut log_weights = Vec::new();
    for u in 1..c {
        let m_eff = state.sizes[u] - usize::from(u == u0);
        if m_eff == 0 {
            continue;
        }
        let mut w = (m_eff as f64).ln();
        for i in 0..n {
            w += row_term(
                data.count(i, j),
                d_minus[i],
                ln_d_minus[i],
                lmj[i],
                state.exp_eta.get(i, u),
                state.eta.get(i, u),
                state.ln_r.get(i, u),
                state.ln_1mr.get(i, u),
            );
        }
        targets.push(Target::Existing(u));
        log_weights.push(w);
    }

    let mut w = priors.alpha_c.ln();
    match aux {
        AuxParams::Own(own) => {
            for i in 0..n {
                w += row_term(
                    data.count(i, j),
                    d_minus[i],
                    ln_d_minus[i],
                    lmj[i],
                    state.exp_eta.get(i, *own),
                    state.eta.get(i, *own),
                    state.ln_r.get(i, *own),
                    state.ln_1mr.get(i, *own),
                );
            }
        }
        AuxParams::Fresh {
            eta_col,
            exp_eta_col,
            ln_r,
            ln_1mr,
            ..
        } => {
            for i in 0..n {
                w += row_term(
                    data.count(i, j),
                    d_minus[i],
                    ln_d_minus[i],
                    lmj[i],
                    exp_eta_col[i],
                    eta_col[i],
                    ln_r[i],
                    ln_1mr[i],
                );
            }
        }
    }
    targets.push(Target::Aux);
    log_weights.push(w);

    Candidates {
        targets,
        log_weights,
    }
}

#[allow(clippy::too_many_arguments)]
#[inline]
fn row_term(
    z: u64,
    d_minus: f64,
    ln_d_minus: f64,
    lmj: f64,
    cand_exp_eta: f64,
    cand_eta: f64,
    cand_ln_r: f64,
    cand_ln_1mr: f64,
) -> f64 {
    let ln_d_cand = (d_minus + cand_exp_eta).ln();
    if z > 0 {
        -(lmj + z as f64) * ln_d_cand + z as f64 * cand_eta + cand_ln_1mr
    } else {
        math::log_add_exp(cand_ln_r - lmj * ln_d_minus, cand_ln_1mr - lmj * ln_d_cand)
    }
}

/// Move taxon `j` to the sampled candidate, handling cluster birth/death and
/// re-imputing the column's censoring indicators and latent counts.
fn move_taxon<R: Rng>(
    state: &mut ModelState,
    data: &AbundanceData,
    j: usize,
    choice: Target,
    aux: AuxParams,
    rng: &mut R,
) -> Result<()> {
    let u0 = state.alloc[j];
    // detach the column's latent counts
    for i in 0..state.n {
        let idx = i * state.p + j;
        let zt = state.ztilde[idx];
        state.y[i][u0] -= zt;
        if !state.delta[idx] {
            state.stilde[i] -= zt;
            state.ltilde[i] -= zt;
            state.ztilde[idx] = 0;
        }
    }
    state.sizes[u0] -= 1;

    let target = match (choice, aux) {
        (Target::Existing(mut u), _) => {
            if state.sizes[u0] == 0 {
                state.remove_cluster(u0);
                if u > u0 {
                    u -= 1;
                }
            }
            u
        }
        (Target::Aux, AuxParams::Own(own)) => own,
        (
            Target::Aux,
            AuxParams::Fresh {
                eta_col,
                lambda,
                memberships,
                ..
            },
        ) => {
            debug_assert!(state.sizes[u0] > 0);
            state.add_cluster(&eta_col, lambda, &memberships)
        }
    };
    state.sizes[target] += 1;
    state.alloc[j] = target;
    state.rebuild_denoms();

    // re-attach / re-impute the column
    for i in 0..state.n {
        let idx = i * state.p + j;
        let z = data.count(i, j);
        if z > 0 {
            state.y[i][target] += z;
            continue;
        }
        let d = state.denom[i];
        let exp_eta = state.exp_eta.get(i, target);
        let d_minus = d - exp_eta;
        let lmj = state.ltilde[i] as f64;
        let logit_censored =
            state.ln_r.get(i, target) - state.ln_1mr.get(i, target) + lmj * (d.ln() - d_minus.ln());
        let censored = rng.random::<f64>() < math::logistic(logit_censored);
        if censored {
            let q = exp_eta / d;
            let s = zeros::sample_negative_binomial(lmj, q, rng)?;
            state.delta[idx] = false;
            state.ztilde[idx] = s;
            state.stilde[i] += s;
            state.ltilde[i] += s;
            state.y[i][target] += s;
        } else {
            state.delta[idx] = true;
            state.ztilde[idx] = 0;
        }
    }
    Ok(())
}

/// One random-scan Gibbs sweep over all non-reference taxa.
pub fn gibbs_update_allocations<R: Rng>(
    state: &mut ModelState,
    data: &AbundanceData,
    priors: &Priors,
    rng: &mut R,
) -> Result<()> {
    let mut order: Vec<usize> = (1..state.p).collect();
    order.shuffle(rng);
    for j in order {
        let aux = draw_aux(state, data, j, rng);
        let cands = candidates_with_aux(state, data, priors, j, &aux);
        let pick = math::sample_log_categorical(&cands.log_weights, rng);
        move_taxon(state, data, j, cands.targets[pick], aux, rng)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_pcg::Pcg64Mcg;

    /// Enumerate all set partitions of n items (restricted growth strings).
    pub fn all_partitions(n: usize) -> Vec<Vec<usize>> {
        let mut out = Vec::new();
        let mut current = vec![0usize; n];
        fn rec(
            i: usize,
            n: usize,
            maxlabel: usize,
            current: &mut Vec<usize>,
            out: &mut Vec<Vec<usize>>,
        ) {
            if i == n {
                out.push(current.clone());
                return;
            }
            for label in 0..=maxlabel + 1 {
                current[i] = label;
                rec(i + 1, n, maxlabel.max(label), current, out);
            }
        }
        if n == 0 {
            return vec![vec![]];
        }
        current[0] = 0;
        rec(1, n, 0, &mut current, &mut out);
        out
    }

    fn sizes_of(labels: &[usize]) -> Vec<usize> {
        let c = labels.iter().max().map_or(0, |&m| m + 1);
        let mut sizes = vec![0usize; c];
        for &l in labels {
            sizes[l] += 1;
        }
        sizes
    }

    #[test]
    fn crp_density_hand_values() {
        // p=3, alpha=1: single cluster prob 1/3, all singletons 1/6
        assert!((crp_log_partition_density(&[3], 1.0) - (1.0f64 / 3.0).ln()).abs() < 1e-12);
        assert!((crp_log_partition_density(&[1, 1, 1], 1.0) - (1.0f64 / 6.0).ln()).abs() < 1e-12);
        // single item: probability one
        assert!(crp_log_partition_density(&[1], 0.7).abs() < 1e-12);
    }

    #[test]
    fn crp_density_normalizes() {
        for &alpha in &[0.5, 1.0, 3.0] {
            for n in 1..=5 {
                let total: f64 = all_partitions(n)
                    .iter()
                    .map(|labels| crp_log_partition_density(&sizes_of(labels), alpha).exp())
                    .sum();
                assert!(
                    (total - 1.0).abs() <= 1e-12,
                    "alpha={alpha} n={n} total={total}"
                );
            }
        }
    }

    #[test]
    fn crp_prior_matches_density() {
        // empirical frequency of the all-together partition of 3 items
        let mut rng = Pcg64Mcg::seed_from_u64(77);
        let reps = 100_000;
        let mut together = 0;
        for _ in 0..reps {
            let labels = crp_prior_draw(3, 1.0, &mut rng);
            if labels.iter().all(|&l| l == labels[0]) {
                together += 1;
            }
        }
        let freq = together as f64 / reps as f64;
        assert!((freq - 1.0 / 3.0).abs() < 0.006, "freq {freq}");
    }

    #[test]
    fn expected_cluster_count_grows_log_p() {
        // prior E[C] for p = 10^4, alpha = 1 is within 10% of alpha ln p
        let mut rng = Pcg64Mcg::seed_from_u64(3);
        let p = 10_000;
        let reps = 2_000;
        let mut acc = 0usize;
        for _ in 0..reps {
            let labels = crp_prior_draw(p, 1.0, &mut rng);
            acc += labels.iter().max().unwrap() + 1;
        }
        let mean = acc as f64 / reps as f64;
        let target = (p as f64).ln();
        assert!(
            (mean / target - 1.0).abs() <= 0.10,
            "mean {mean} vs alpha ln p {target}"
        );
    }
}
