//! Finite-mixture prior on the group/cluster regression vectors and the
//! differential-status rule derived from it.
//!
//! Each non-reference cluster u carries one regression vector per group,
//! beta_ku = mu_{v_ku}, with the atoms mu_m shared across groups and
//! clusters. A cluster is non-differential exactly when all K of its
//! membership indices coincide; the comparison is on the integer memberships,
//! never on floating-point coefficient values.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::composition::sample_inv_gamma;
use crate::data::AbundanceData;
use crate::math;
use crate::state::ModelState;

/// Differential status of one cluster: 1 (non-DA) iff the group memberships
/// tie, or the cluster is the reference.
pub fn cluster_status(memberships: &[Vec<usize>], u: usize) -> u8 {
    if u == 0 {
        return 1;
    }
    let first = memberships[0][u];
    if memberships.iter().all(|row| row[u] == first) {
        1
    } else {
        2
    }
}

/// Unnormalized log weights over mixture components for one (group, cluster)
/// membership, combining the mixture weight with the Gaussian likelihood of
/// the group's log ratios.
pub fn membership_log_weights(
    state: &ModelState,
    data: &AbundanceData,
    k: usize,
    u: usize,
) -> Vec<f64> {
    debug_assert!(u >= 1);
    let m = state.pi.len();
    let inv2s = 1.0 / (2.0 * state.sigma_e2);
    (0..m)
        .map(|comp| {
            let mut lw = state.pi[comp].ln();
            for i in 0..state.n {
                if data.groups[i] != k {
                    continue;
                }
                let resid = state.eta.get(i, u) - math::dot(data.xdag_row(i), &state.atoms[comp]);
                lw -= resid * resid * inv2s;
            }
            lw
        })
        .collect()
}

/// Collapsed Gibbs sweep over every (group, non-reference cluster)
/// membership with the atoms integrated out, so a block can bind to a
/// component whose atom has not yet moved near its profile. Atoms must be
/// redrawn afterwards; together the two calls form one blocked draw of
/// (v, mu).
pub fn update_memberships<R: Rng>(state: &mut ModelState, data: &AbundanceData, rng: &mut R) {
    let d = state.t + 1;
    let m = state.pi.len();
    let c = state.n_clusters();
    let ln2pi = (2.0 * std::f64::consts::PI).ln();

    // per-(k,u) sufficient statistics of the attached block
    let mut cross = vec![vec![0.0; d]; state.k * c];
    let mut ysq = vec![0.0; state.k * c];
    for i in 0..state.n {
        let k = data.groups[i];
        let xi = data.xdag_row(i);
        for u in 1..c {
            let e = state.eta.get(i, u);
            let row = &mut cross[k * c + u];
            for a in 0..d {
                row[a] += xi[a] * e;
            }
            ysq[k * c + u] += e * e;
        }
    }

    // running posterior natural parameters per component: precision and
    // precision-weighted mean, maintained as memberships move
    let mut prec: Vec<Vec<f64>> = (0..m)
        .map(|_| state.gram.iter().map(|g| g / state.tau2).collect())
        .collect();
    let mut shift: Vec<Vec<f64>> = vec![vec![0.0; d]; m];
    for u in 1..c {
        for k in 0..state.k {
            let comp = state.memberships[k][u];
            for a in 0..d * d {
                prec[comp][a] += state.group_gram[k][a] / state.sigma_e2;
            }
            for a in 0..d {
                shift[comp][a] += cross[k * c + u][a] / state.sigma_e2;
            }
        }
    }

    // ln int N(y; X mu, s2 I) dPost(mu) =
    //   -n_k/2 ln(2 pi s2) - y'y/(2 s2)
    //   + 1/2 [ ln det P - ln det P' + b'^T P'^-1 b' - b^T P^-1 b ]
    // with (P, b) the component's posterior without the block and (P', b')
    // with it.
    let block_evidence =
        |p0: &[f64], b0: &[f64], gg: &[f64], cr: &[f64], yy: f64, nk: f64, s2: f64| -> f64 {
            let chol0 = math::cholesky(p0, d).expect("component precision not PD");
            let half0 = math::solve_lower(&chol0, d, b0);
            let quad0: f64 = half0.iter().map(|v| v * v).sum();
            let lndet0: f64 = 2.0 * (0..d).map(|a| chol0[a * d + a].ln()).sum::<f64>();
            let mut p1 = p0.to_vec();
            let mut b1 = b0.to_vec();
            for a in 0..d * d {
                p1[a] += gg[a] / s2;
            }
            for a in 0..d {
                b1[a] += cr[a] / s2;
            }
            let chol1 = math::cholesky(&p1, d).expect("component precision not PD");
            let half1 = math::solve_lower(&chol1, d, &b1);
            let quad1: f64 = half1.iter().map(|v| v * v).sum();
            let lndet1: f64 = 2.0 * (0..d).map(|a| chol1[a * d + a].ln()).sum::<f64>();
            -0.5 * nk * (ln2pi + s2.ln()) - yy / (2.0 * s2)
                + 0.5 * (lndet0 - lndet1 + quad1 - quad0)
        };

    for u in 1..c {
        for k in 0..state.k {
            let old = state.memberships[k][u];
            // detach the block from its component
            for a in 0..d * d {
                prec[old][a] -= state.group_gram[k][a] / state.sigma_e2;
            }
            for a in 0..d {
                shift[old][a] -= cross[k * c + u][a] / state.sigma_e2;
            }
            let nk = data.group_sizes[k] as f64;
            let lw: Vec<f64> = (0..m)
                .map(|comp| {
                    state.pi[comp].ln()
                        + block_evidence(
                            &prec[comp],
                            &shift[comp],
                            &state.group_gram[k],
                            &cross[k * c + u],
                            ysq[k * c + u],
                            nk,
                            state.sigma_e2,
                        )
                })
                .collect();
            let pick = math::sample_log_categorical(&lw, rng);
            state.memberships[k][u] = pick;
            for a in 0..d * d {
                prec[pick][a] += state.group_gram[k][a] / state.sigma_e2;
            }
            for a in 0..d {
                shift[pick][a] += cross[k * c + u][a] / state.sigma_e2;
            }
        }
    }
}

/// Conjugate multivariate-normal update of every mixture atom. Components
/// with no attached (group, cluster) pairs draw from the prior.
pub fn update_atoms<R: Rng>(state: &mut ModelState, data: &AbundanceData, rng: &mut R) {
    let d = state.t + 1;
    let m = state.pi.len();
    // per-(k,u) cross products sum_{i in k} x_i eta_iu
    let c = state.n_clusters();
    let mut cross = vec![vec![0.0; d]; state.k * c];
    for i in 0..state.n {
        let k = data.groups[i];
        let xi = data.xdag_row(i);
        for u in 1..c {
            let e = state.eta.get(i, u);
            let row = &mut cross[k * c + u];
            for a in 0..d {
                row[a] += xi[a] * e;
            }
        }
    }
    for comp in 0..m {
        // precision = gram / tau2 + sum over attached pairs of group gram / sigma_e2
        let mut prec: Vec<f64> = state.gram.iter().map(|g| g / state.tau2).collect();
        let mut rhs = vec![0.0; d];
        for u in 1..c {
            for k in 0..state.k {
                if state.memberships[k][u] != comp {
                    continue;
                }
                for a in 0..d * d {
                    prec[a] += state.group_gram[k][a] / state.sigma_e2;
                }
                for a in 0..d {
                    rhs[a] += cross[k * c + u][a] / state.sigma_e2;
                }
            }
        }
        let chol = math::cholesky(&prec, d).expect("posterior precision not PD");
        let mean = math::solve_spd(&chol, d, &rhs);
        // mu = mean + L^-T z
        let z: Vec<f64> = (0..d).map(|_| StandardNormal.sample(rng)).collect();
        let dev = math::solve_lower_t(&chol, d, &z);
        state.atoms[comp] = mean.iter().zip(&dev).map(|(m, e)| m + e).collect();
    }
}

/// Dirichlet update of the mixture weights from membership counts over
/// non-reference clusters.
pub fn update_pi<R: Rng>(state: &mut ModelState, alpha0: f64, rng: &mut R) {
    let m = state.pi.len();
    let mut counts = vec![0usize; m];
    for k in 0..state.k {
        for u in 1..state.n_clusters() {
            counts[state.memberships[k][u]] += 1;
        }
    }
    let mut draws = Vec::with_capacity(m);
    let mut total = 0.0;
    for &cnt in &counts {
        let shape = alpha0 / m as f64 + cnt as f64;
        let g = rand_distr::Gamma::new(shape, 1.0).unwrap().sample(rng);
        total += g;
        draws.push(g);
    }
    for (p, g) in state.pi.iter_mut().zip(draws) {
        *p = g / total;
    }
}

/// Inverse-gamma update of the atom prior scale.
pub fn update_tau2<R: Rng>(state: &mut ModelState, a_tau: f64, b_tau: f64, rng: &mut R) {
    let d = state.t + 1;
    let m = state.pi.len();
    let mut quad = 0.0;
    for atom in &state.atoms {
        for a in 0..d {
            for b in 0..d {
                quad += atom[a] * state.gram[a * d + b] * atom[b];
            }
        }
    }
    state.tau2 = sample_inv_gamma(a_tau + (m * d) as f64 / 2.0, b_tau + quad / 2.0, rng);
}

/// Draw one atom from its prior N(0, tau2 Gram^-1).
pub fn sample_atom_prior<R: Rng>(gram_chol: &[f64], d: usize, tau2: f64, rng: &mut R) -> Vec<f64> {
    // precision Gram / tau2 has Cholesky factor gram_chol / sqrt(tau2)
    let z: Vec<f64> = (0..d).map(|_| StandardNormal.sample(rng)).collect();
    let dev = math::solve_lower_t(gram_chol, d, &z);
    dev.iter().map(|v| v * tau2.sqrt()).collect()
}

/// Gaussian log density with the given mean and variance.
pub fn normal_logpdf(x: f64, mean: f64, var: f64) -> f64 {
    let r = x - mean;
    -0.5 * (2.0 * std::f64::consts::PI * var).ln() - r * r / (2.0 * var)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::{initialize, FitConfig, ReferenceMode};
    use crate::simulate::{write_in_memory, SimConfig};
    use rand::SeedableRng;
    use rand_pcg::Pcg64Mcg;

    fn small_state() -> (ModelState, AbundanceData) {
        let sim = SimConfig {
            n: 10,
            p: 16,
            c_min: 3,
            c_max: 4,
            lambda0: -0.1,
            seed: 2,
            ..SimConfig::default()
        };
        let mut data = write_in_memory(&sim).unwrap();
        crate::data::augment_reference(&mut data).unwrap();
        let cfg = FitConfig {
            iterations: 4,
            burn_in: 2,
            seed: 6,
            reference_mode: ReferenceMode::Augment,
            ..FitConfig::default()
        };
        let mut rng = Pcg64Mcg::seed_from_u64(14);
        let state = initialize(&data, &cfg, &mut rng).unwrap();
        (state, data)
    }

    #[test]
    fn status_rule() {
        let v = vec![vec![0, 3, 1], vec![0, 3, 2]];
        assert_eq!(cluster_status(&v, 1), 1);
        assert_eq!(cluster_status(&v, 2), 2);
        // reference cluster is non-DA regardless
        let v = vec![vec![5, 0, 0], vec![7, 0, 0]];
        assert_eq!(cluster_status(&v, 0), 1);
        // K = 3 with memberships (1,1,2) -> DA
        let v = vec![vec![0, 1], vec![0, 1], vec![0, 2]];
        assert_eq!(cluster_status(&v, 1), 2);
    }

    #[test]
    fn status_rule_random_ties() {
        let mut rng = Pcg64Mcg::seed_from_u64(33);
        for _ in 0..500 {
            let k = 2 + (rng.random::<u64>() % 3) as usize;
            let c = 2 + (rng.random::<u64>() % 4) as usize;
            let v: Vec<Vec<usize>> = (0..k)
                .map(|_| (0..c).map(|_| (rng.random::<u64>() % 3) as usize).collect())
                .collect();
            for u in 1..c {
                let tied = (1..k).all(|kk| v[kk][u] == v[0][u]);
                assert_eq!(cluster_status(&v, u) == 1, tied);
            }
        }
    }

    #[test]
    fn membership_weights_degenerate_pi() {
        let (mut state, data) = small_state();
        let m = state.pi.len();
        state.pi = vec![0.0; m];
        state.pi[0] = 1.0;
        let mut rng = Pcg64Mcg::seed_from_u64(5);
        update_memberships(&mut state, &data, &mut rng);
        for k in 0..state.k {
            for u in 1..state.n_clusters() {
                assert_eq!(state.memberships[k][u], 0);
            }
        }
    }

    #[test]
    fn membership_frequencies_match_hand_weights() {
        // K groups but only group 0 checked; two components with known
        // Gaussian weights; empirical frequency over many draws
        let (mut state, data) = small_state();
        state.pi = vec![0.5, 0.5];
        state.atoms = vec![vec![0.0; state.t + 1], vec![0.0; state.t + 1]];
        state.atoms[1][0] = 0.8; // intercept offset
        state.sigma_e2 = 1.0;
        let lw = membership_log_weights(&state, &data, 0, 1);
        let z = math::log_sum_exp(&lw);
        let p0 = (lw[0] - z).exp();
        let mut rng = Pcg64Mcg::seed_from_u64(99);
        let reps = 20_000;
        let mut hits = 0;
        for _ in 0..reps {
            let pick = math::sample_log_categorical(&lw, &mut rng);
            if pick == 0 {
                hits += 1;
            }
        }
        let freq = hits as f64 / reps as f64;
        let se = (p0 * (1.0 - p0) / reps as f64).sqrt();
        assert!((freq - p0).abs() < 3.5 * se, "freq {freq} vs {p0}");
    }

    #[test]
    fn atoms_prior_draw_covariance() {
        // unattached components draw from N(0, tau2 Gram^-1): check the
        // marginal variance of the first coordinate by Monte Carlo
        let (state, _data) = small_state();
        let d = state.t + 1;
        let mut rng = Pcg64Mcg::seed_from_u64(10);
        let tau2 = 0.9;
        let reps = 30_000;
        let mut acc = 0.0;
        let mut acc2 = 0.0;
        for _ in 0..reps {
            let a = sample_atom_prior(&state.gram_chol, d, tau2, &mut rng);
            acc += a[0];
            acc2 += a[0] * a[0];
        }
        let mean = acc / reps as f64;
        let var = acc2 / reps as f64 - mean * mean;
        // analytic variance: tau2 * (Gram^-1)_{00}
        let chol = math::cholesky(&state.gram, d).unwrap();
        let mut e0 = vec![0.0; d];
        e0[0] = 1.0;
        let inv_col = math::solve_spd(&chol, d, &e0);
        let want = tau2 * inv_col[0];
        assert!((var - want).abs() < 0.1 * want, "{var} vs {want}");
        assert!(mean.abs() < 0.05 * want.sqrt().max(0.05));
    }

    #[test]
    fn atoms_concentrate_on_least_squares() {
        // tiny residual variance pins the attached atom at the least-squares
        // solution of its attached regressions
        let (mut state, data) = small_state();
        state.pi = vec![1.0];
        state.atoms = vec![vec![0.0; state.t + 1]];
        for k in 0..state.k {
            for u in 0..state.n_clusters() {
                state.memberships[k][u] = 0;
            }
        }
        state.sigma_e2 = 1e-6;
        state.tau2 = 1e6;
        let mut rng = Pcg64Mcg::seed_from_u64(31);
        update_atoms(&mut state, &data, &mut rng);
        // least squares over all (i, u >= 1) rows of the design
        let d = state.t + 1;
        let c = state.n_clusters();
        let mut xtx = vec![0.0; d * d];
        let mut xty = vec![0.0; d];
        for i in 0..state.n {
            let xi = data.xdag_row(i);
            for u in 1..c {
                for a in 0..d {
                    for b in 0..d {
                        xtx[a * d + b] += xi[a] * xi[b];
                    }
                    xty[a] += xi[a] * state.eta.get(i, u);
                }
            }
        }
        let chol = math::cholesky(&xtx, d).unwrap();
        let ls = math::solve_spd(&chol, d, &xty);
        for a in 0..d {
            assert!(
                (state.atoms[0][a] - ls[a]).abs() < 1e-3,
                "coef {a}: {} vs {}",
                state.atoms[0][a],
                ls[a]
            );
        }
    }

    #[test]
    fn pi_counts_arithmetic() {
        // counts (3,1) with alpha0 = 2, M = 2 -> Dirichlet(4, 2), mean (2/3, 1/3)
        let (mut state, _data) = small_state();
        state.pi = vec![0.5, 0.5];
        // force memberships: need exactly 4 (k,u>=1) slots -> fabricate
        let c = state.n_clusters();
        let slots: Vec<(usize, usize)> = (0..state.k)
            .flat_map(|k| (1..c).map(move |u| (k, u)))
            .collect();
        assert!(slots.len() >= 4);
        for (idx, &(k, u)) in slots.iter().enumerate() {
            state.memberships[k][u] = if idx < 3 { 0 } else { 1 };
        }
        // keep only 4 slots meaningful: set the rest to component 1 and count
        let mut n0 = 0;
        let mut n1 = 0;
        for &(k, u) in &slots {
            if state.memberships[k][u] == 0 {
                n0 += 1;
            } else {
                n1 += 1;
            }
        }
        let mut rng = Pcg64Mcg::seed_from_u64(55);
        let reps = 20_000;
        let mut acc = 0.0;
        for _ in 0..reps {
            update_pi(&mut state, 2.0, &mut rng);
            acc += state.pi[0];
        }
        let want = (1.0 + n0 as f64) / (2.0 + (n0 + n1) as f64);
        let got = acc / reps as f64;
        assert!((got - want).abs() < 0.01, "{got} vs {want}");
    }

    #[test]
    fn tau2_rate_arithmetic() {
        // all atoms zero -> rate stays at b_tau; posterior mean of tau2 is
        // b / (a + M d / 2 - 1)
        let (mut state, _data) = small_state();
        let d = state.t + 1;
        let m = state.pi.len();
        for atom in state.atoms.iter_mut() {
            for v in atom.iter_mut() {
                *v = 0.0;
            }
        }
        let mut rng = Pcg64Mcg::seed_from_u64(70);
        let reps = 30_000;
        let mut acc = 0.0;
        for _ in 0..reps {
            update_tau2(&mut state, 2.0, 2.0, &mut rng);
            acc += state.tau2;
        }
        let shape = 2.0 + (m * d) as f64 / 2.0;
        let want = 2.0 / (shape - 1.0);
        let got = acc / reps as f64;
        assert!((got - want).abs() < 0.02 * want, "{got} vs {want}");
    }
}
