//! MCMC orchestration: state initialization, the per-iteration update
//! schedule, burn-in/thinning bookkeeping, and the joint log density used
//! for diagnostics.

use rand::Rng;
use rand::SeedableRng;
use rand_distr::{Distribution, Normal};
use rand_pcg::Pcg64Mcg;
use serde::{Deserialize, Serialize};

use crate::clusters;
use crate::composition;
use crate::data::AbundanceData;
use crate::error::{Error, Result};
use crate::inference;
use crate::math::{self, Mat};
use crate::regression;
use crate::state::{ModelState, Priors};
use crate::trace::{Trace, TraceMeta, TraceRecord};
use crate::zeros;

/// How the reference taxon is chosen before fitting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReferenceMode {
    /// Insert an artificial unit-count taxon (the default).
    Augment,
    /// Reorder so the minimum-variance taxon leads.
    MinVariance,
}

/// Everything a fit needs beyond the data itself.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct FitConfig {
    pub iterations: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub seed: u64,
    pub chains: usize,
    pub reference_mode: ReferenceMode,
    pub priors: Priors,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            iterations: 4000,
            burn_in: 2000,
            thin: 2,
            seed: 0,
            chains: 1,
            reference_mode: ReferenceMode::Augment,
            priors: Priors::default(),
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if self.burn_in >= self.iterations {
            return Err(Error::Config(format!(
                "burn_in ({}) must be smaller than iterations ({})",
                self.burn_in, self.iterations
            )));
        }
        if self.thin == 0 {
            return Err(Error::Config("thin must be at least 1".into()));
        }
        if self.chains == 0 {
            return Err(Error::Config("chains must be at least 1".into()));
        }
        self.priors.validate().map_err(Error::Config)
    }

    /// Stored record count implied by the schedule.
    pub fn stored_records(&self) -> usize {
        (self.iterations - self.burn_in) / self.thin
    }
}

/// Fixed seed-splitting rule: chain c of run seed s gets its own stream,
/// independent of how chains are scheduled onto threads.
pub fn chain_rng(seed: u64, chain: u64) -> Pcg64Mcg {
    Pcg64Mcg::seed_from_u64(splitmix64(
        seed ^ splitmix64(chain.wrapping_add(0x9e37_79b9)),
    ))
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Greedy average-linkage agglomeration on a dense distance matrix down to
/// `target` clusters; returns labels in 0..target.
fn average_linkage(dist: &mut [f64], n: usize, target: usize) -> Vec<usize> {
    let target = target.clamp(1, n);
    let mut active: Vec<bool> = vec![true; n];
    let mut sizes = vec![1usize; n];
    let mut parent: Vec<usize> = (0..n).collect();
    let mut remaining = n;
    while remaining > target {
        let (mut bi, mut bj, mut best) = (0, 0, f64::INFINITY);
        for i in 0..n {
            if !active[i] {
                continue;
            }
            for j in i + 1..n {
                if !active[j] {
                    continue;
                }
                let d = dist[i * n + j];
                if d < best {
                    best = d;
                    bi = i;
                    bj = j;
                }
            }
        }
        // merge bj into bi with the average-linkage distance update
        for k in 0..n {
            if !active[k] || k == bi || k == bj {
                continue;
            }
            let d = (sizes[bi] as f64 * dist[bi * n + k] + sizes[bj] as f64 * dist[bj * n + k])
                / (sizes[bi] + sizes[bj]) as f64;
            dist[bi * n + k] = d;
            dist[k * n + bi] = d;
        }
        sizes[bi] += sizes[bj];
        active[bj] = false;
        parent[bj] = bi;
        remaining -= 1;
    }
    // resolve to root labels, then compact
    let mut root = vec![0usize; n];
    for i in 0..n {
        let mut r = i;
        while parent[r] != r {
            r = parent[r];
        }
        root[i] = r;
    }
    let mut label_of = std::collections::HashMap::new();
    let mut labels = Vec::with_capacity(n);
    for &r in &root {
        let next = label_of.len();
        labels.push(*label_of.entry(r).or_insert(next));
    }
    labels
}

/// Correlation distance between log relative-abundance profiles of two taxa.
fn correlation_distance(a: &[f64], b: &[f64]) -> f64 {
    let (ma, va) = math::mean_var(a);
    let (mb, vb) = math::mean_var(b);
    if va < 1e-24 || vb < 1e-24 {
        let equal = a.iter().zip(b).all(|(x, y)| (x - y).abs() < 1e-12);
        return if equal && va < 1e-24 && vb < 1e-24 {
            0.0
        } else {
            1.0
        };
    }
    let n = a.len() as f64;
    let cov = a
        .iter()
        .zip(b)
        .map(|(x, y)| (x - ma) * (y - mb))
        .sum::<f64>()
        / n;
    1.0 - cov / (va.sqrt() * vb.sqrt())
}

/// Build the initial state: taxa clustered by agglomeration on correlation
/// distance of log relative abundances, log ratios from empirical cluster
/// means, zero cells censored with probability one half, latent counts
/// imputed once, and every remaining parameter at its prior center.
pub fn initialize<R: Rng>(
    data: &AbundanceData,
    config: &FitConfig,
    rng: &mut R,
) -> Result<ModelState> {
    config.validate()?;
    if !data.reference_set {
        return Err(Error::Config(
            "reference taxon must be set before initialization".into(),
        ));
    }
    if data.p < 2 {
        return Err(Error::Config(format!(
            "need at least 2 taxa, found {}",
            data.p
        )));
    }
    if data.n < data.k {
        return Err(Error::Config(format!(
            "need at least one sample per group: n = {}, K = {}",
            data.n, data.k
        )));
    }
    if let Some(k) = data.group_sizes.iter().position(|&s| s < 2) {
        return Err(Error::Config(format!(
            "group {:?} has fewer than 2 samples",
            data.group_labels[k]
        )));
    }
    if data.l.iter().any(|&l| l == 0) {
        return Err(Error::Config("every sample needs a positive depth".into()));
    }

    let n = data.n;
    let p = data.p;
    let priors = &config.priors;

    // ---- taxon clustering on log relative abundances (pseudo-count 0.5)
    let profiles: Vec<Vec<f64>> = (0..p)
        .map(|j| {
            (0..n)
                .map(|i| ((data.count(i, j) as f64 + 0.5) / data.l[i] as f64).ln())
                .collect()
        })
        .collect();
    // Over-segment at initialization: dissolving a redundant cluster is a
    // cheap sequence of single-taxon moves, but carving a missing motif out
    // of a merged cluster requires a lucky prior draw for the auxiliary
    // component, which informative depths make astronomically unlikely.
    let nonref = p - 1;
    let target =
        ((4.0 * priors.alpha_c * (p as f64).ln()).ceil() as usize).clamp(1, nonref.min(64));
    let labels = if nonref == 1 {
        vec![0]
    } else {
        let mut dist = vec![0.0; nonref * nonref];
        for a in 0..nonref {
            for b in a + 1..nonref {
                let d = correlation_distance(&profiles[a + 1], &profiles[b + 1]);
                dist[a * nonref + b] = d;
                dist[b * nonref + a] = d;
            }
        }
        average_linkage(&mut dist, nonref, target)
    };
    let c = labels.iter().max().unwrap() + 2; // plus the reference cluster
    let mut alloc = Vec::with_capacity(p);
    alloc.push(0);
    alloc.extend(labels.iter().map(|&l| l + 1));
    let mut sizes = vec![0usize; c];
    for &a in &alloc {
        sizes[a] += 1;
    }

    // ---- log ratios from empirical cluster-mean abundances vs the reference
    let mut eta = Mat::zeros(n, c);
    for i in 0..n {
        let ref_term = (data.count(i, 0) as f64 + 0.5).ln();
        for u in 1..c {
            let members: Vec<usize> = (0..p).filter(|&j| alloc[j] == u).collect();
            let mean = members
                .iter()
                .map(|&j| data.count(i, j) as f64 + 0.5)
                .sum::<f64>()
                / members.len() as f64;
            eta.set(i, u, mean.ln() - ref_term);
        }
    }
    let mut exp_eta = Mat::zeros(n, c);
    for i in 0..n {
        for u in 0..c {
            exp_eta.set(i, u, eta.get(i, u).exp());
        }
    }

    // ---- design caches
    let d = data.t + 1;
    let gram = data.gram();
    let gram_chol = math::cholesky(&gram, d)
        .map_err(|e| Error::Config(format!("design matrix not full rank: {e}")))?;
    let mut group_gram = vec![vec![0.0; d * d]; data.k];
    for i in 0..n {
        let xi = data.xdag_row(i);
        let g = &mut group_gram[data.groups[i]];
        for a in 0..d {
            for b in 0..d {
                g[a * d + b] += xi[a] * xi[b];
            }
        }
    }
    let t2 = data.t + 2;
    let mut zpred = vec![0.0; n * t2];
    for i in 0..n {
        zpred[i * t2] = 1.0;
        for v in 0..data.t {
            zpred[i * t2 + 1 + v] = data.x[i * data.t + v];
        }
        zpred[i * t2 + t2 - 1] = (data.l[i] as f64).ln();
    }

    // ---- regression mixture at prior center
    let m = priors.m_components;
    let tau2 = Priors::ig_mean(priors.a_tau, priors.b_tau);
    let atoms: Vec<Vec<f64>> = (0..m)
        .map(|_| regression::sample_atom_prior(&gram_chol, d, tau2, rng))
        .collect();
    let memberships: Vec<Vec<usize>> = (0..data.k)
        .map(|_| {
            (0..c)
                .map(|u| if u == 0 { 0 } else { rng.random_range(0..m) })
                .collect()
        })
        .collect();

    let mut state = ModelState {
        n,
        p,
        k: data.k,
        t: data.t,
        gram,
        gram_chol,
        group_gram,
        zpred,
        alloc,
        sizes,
        eta,
        exp_eta,
        denom: vec![0.0; n],
        sigma_e2: 0.1,
        pi: vec![1.0 / m as f64; m],
        atoms,
        memberships,
        tau2,
        lambda: (0..c).map(|_| Mat::zeros(n, t2)).collect(),
        tau_lambda2: Priors::ig_mean(priors.a_lambda, priors.b_lambda),
        rstar: Mat::zeros(n, c),
        ln_r: Mat::zeros(n, c),
        ln_1mr: Mat::zeros(n, c),
        rw_log_scale: (2.4 / (t2 as f64).sqrt()).ln(),
        rw_accepts: 0,
        rw_proposals: 0,
        delta: vec![false; n * p],
        ztilde: data.z.clone(),
        stilde: vec![0; n],
        ltilde: data.l.clone(),
        y: vec![vec![0; c]; n],
        max_constraint_residual: 0.0,
    };
    state.rebuild_denoms();
    for u in 0..c {
        state.refresh_rstar_col(u);
    }

    // ---- censoring indicators: observed positives fixed, zeros at even odds
    for i in 0..n {
        for j in 0..p {
            let idx = i * p + j;
            state.delta[idx] = data.count(i, j) > 0 || j == 0 || rng.random::<f64>() < 0.5;
        }
    }
    for i in 0..n {
        zeros::impute_latent_row(&mut state, data, i, rng)?;
    }
    state
        .check_invariants(data)
        .map_err(|e| Error::Model(format!("initialization broke an invariant: {e}")))?;
    Ok(state)
}

/// One full MCMC iteration in the fixed schedule order.
pub fn sweep<R: Rng>(
    state: &mut ModelState,
    data: &AbundanceData,
    priors: &Priors,
    adapt_rw: bool,
    rng: &mut R,
) -> Result<()> {
    zeros::sample_censoring_indicators(state, data, rng);
    for i in 0..state.n {
        zeros::impute_latent_row(state, data, i, rng)?;
    }
    clusters::gibbs_update_allocations(state, data, priors, rng)?;
    composition::update_eta_sweep(state, data, rng)?;
    regression::update_memberships(state, data, rng);
    regression::update_atoms(state, data, rng);
    regression::update_pi(state, priors.alpha0, rng);
    regression::update_tau2(state, priors.a_tau, priors.b_tau, rng);
    composition::update_sigma_e2(state, data, priors.a_e, priors.b_e, rng);
    zeros::update_lambda(state, priors.a_lambda, priors.b_lambda, adapt_rw, rng);
    state.constraint_residual();
    Ok(())
}

fn ig_logpdf(x: f64, a: f64, b: f64) -> f64 {
    a * b.ln() - math::ln_gamma(a) - (a + 1.0) * x.ln() - b / x
}

/// Joint log density of the current state and data under the full model.
pub fn joint_log_density(state: &ModelState, data: &AbundanceData, priors: &Priors) -> f64 {
    let c = state.n_clusters();
    let d = state.t + 1;
    let m = state.pi.len();

    let crp = clusters::crp_log_partition_density(&state.sizes[1..], priors.alpha_c);

    // count likelihood: per row, ln L + ln Gamma(Lt) - sum ln Gamma(zt + 1)
    // + sum_u y ln q*
    let mut counts = 0.0;
    for i in 0..state.n {
        counts += (data.l[i] as f64).ln() + math::ln_gamma(state.ltilde[i] as f64);
        for j in 0..state.p {
            let zt = state.ztilde[i * state.p + j];
            if zt > 1 {
                counts -= math::ln_gamma(zt as f64 + 1.0);
            }
        }
        let ln_d = state.denom[i].ln();
        for u in 0..c {
            let y = state.y[i][u] as f64;
            if y > 0.0 {
                counts += y * (state.eta.get(i, u) - ln_d);
            }
        }
    }

    // censoring indicators over non-reference cells
    let tallies = zeros::uncensored_tallies(state);
    let mut censoring = 0.0;
    for i in 0..state.n {
        for u in 1..c {
            let a = tallies[i][u] as f64;
            let b = state.sizes[u] as f64 - a;
            censoring += a * state.ln_1mr.get(i, u) + b * state.ln_r.get(i, u);
        }
    }

    // log-ratio regression and its mixture prior
    let mut eta_term = 0.0;
    for i in 0..state.n {
        let k = data.groups[i];
        for u in 1..c {
            let mean = math::dot(data.xdag_row(i), state.beta(k, u));
            eta_term += regression::normal_logpdf(state.eta.get(i, u), mean, state.sigma_e2);
        }
    }
    let mut v_term = 0.0;
    for k in 0..state.k {
        for u in 1..c {
            v_term += state.pi[state.memberships[k][u]].max(1e-300).ln();
        }
    }
    let ln_det_gram: f64 = 2.0 * (0..d).map(|a| state.gram_chol[a * d + a].ln()).sum::<f64>();
    let mut atom_term = 0.0;
    for atom in &state.atoms {
        let mut quad = 0.0;
        for a in 0..d {
            for b in 0..d {
                quad += atom[a] * state.gram[a * d + b] * atom[b];
            }
        }
        atom_term += 0.5 * (ln_det_gram - d as f64 * state.tau2.ln())
            - 0.5 * d as f64 * (2.0 * std::f64::consts::PI).ln()
            - quad / (2.0 * state.tau2);
    }
    let pi_term = math::ln_gamma(priors.alpha0)
        - m as f64 * math::ln_gamma(priors.alpha0 / m as f64)
        + state
            .pi
            .iter()
            .map(|&p| (priors.alpha0 / m as f64 - 1.0) * p.max(1e-300).ln())
            .sum::<f64>();

    let mut lambda_term = 0.0;
    for u in 0..c {
        for i in 0..state.n {
            for &v in state.lambda[u].row(i) {
                lambda_term += regression::normal_logpdf(v, 0.0, state.tau_lambda2);
            }
        }
    }

    crp + counts
        + censoring
        + eta_term
        + v_term
        + atom_term
        + pi_term
        + ig_logpdf(state.tau2, priors.a_tau, priors.b_tau)
        + ig_logpdf(state.sigma_e2, priors.a_e, priors.b_e)
        + ig_logpdf(state.tau_lambda2, priors.a_lambda, priors.b_lambda)
        + lambda_term
}

/// Run one chain to completion, recording thinned post-burn-in iterations.
pub fn run_chain(
    data: &AbundanceData,
    config: &FitConfig,
    chain: u64,
    mut progress: Option<&mut dyn FnMut(usize, usize, f64)>,
) -> Result<Trace> {
    config.validate()?;
    let mut rng = chain_rng(config.seed, chain);
    let mut state = initialize(data, config, &mut rng)?;
    let mut records = Vec::with_capacity(config.stored_records());
    for it in 1..=config.iterations {
        let adapt = it <= config.burn_in;
        let before = (state.rw_accepts, state.rw_proposals);
        sweep(&mut state, data, &config.priors, adapt, &mut rng)?;
        if it % 100 == 0 {
            if let Err(e) = state.check_invariants(data) {
                return Err(Error::Model(format!(
                    "iteration {it}: invariant violated: {e}"
                )));
            }
        }
        let log_joint = joint_log_density(&state, data, &config.priors);
        if let Some(cb) = progress.as_mut() {
            cb(it, state.n_clusters(), log_joint);
        }
        let accepted = state.rw_accepts - before.0;
        let proposed = state.rw_proposals - before.1;
        let accept_rate = if proposed > 0 {
            accepted as f64 / proposed as f64
        } else {
            f64::NAN
        };
        if it > config.burn_in && (it - config.burn_in) % config.thin == 0 {
            let cluster_nonda = inference::per_iter_cluster_nonda(&state, data);
            let taxon_nonda = inference::per_iter_taxon_nonda(
                &state,
                data,
                &config.priors,
                &cluster_nonda,
                &mut rng,
            );
            records.push(TraceRecord {
                iteration: it as u64,
                cluster_count: state.n_clusters() as u32,
                log_joint,
                accept_rate,
                alloc: state.alloc.iter().map(|&a| a as u32).collect(),
                cluster_nonda,
                taxon_nonda,
            });
        }
    }
    state
        .check_invariants(data)
        .map_err(|e| Error::Model(format!("final state: {e}")))?;

    let post_rate = if state.rw_proposals > 0 {
        state.rw_accepts as f64 / state.rw_proposals as f64
    } else {
        f64::NAN
    };
    let meta = TraceMeta {
        format_version: 1,
        config: config.clone(),
        chain,
        n: data.n,
        p: data.p,
        k: data.k,
        taxon_names: data.taxon_names.clone(),
        forced_da: vec![],
        dropped: vec![],
        reference_taxon: data.taxon_names[0].clone(),
        rw_accept_rate: post_rate,
        max_constraint_residual: state.max_constraint_residual,
        input_digests: Default::default(),
    };
    Ok(Trace { records, meta })
}

/// Run all configured chains, at most `thread_cap` at a time. Chain RNG
/// streams depend only on (seed, chain index), never on scheduling.
pub fn run_fit(data: &AbundanceData, config: &FitConfig, thread_cap: usize) -> Result<Vec<Trace>> {
    config.validate()?;
    let cap = thread_cap.max(1);
    let mut traces: Vec<Option<Trace>> = (0..config.chains).map(|_| None).collect();
    let mut next = 0usize;
    while next < config.chains {
        let batch_end = (next + cap).min(config.chains);
        let results: Vec<Result<Trace>> = std::thread::scope(|scope| {
            let handles: Vec<_> = (next..batch_end)
                .map(|chain| scope.spawn(move || run_chain(data, config, chain as u64, None)))
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("chain panicked"))
                .collect()
        });
        for (offset, r) in results.into_iter().enumerate() {
            traces[next + offset] = Some(r?);
        }
        next = batch_end;
    }
    Ok(traces.into_iter().map(|t| t.unwrap()).collect())
}

/// Regenerate latent data and observations from the current parameters,
/// overwriting `data`'s counts in place. The observed depths are part of the
/// design and stay fixed; uncensored counts are redrawn conditional on them.
/// Used by the model self-consistency harness.
pub fn regenerate_data<R: Rng>(
    state: &mut ModelState,
    data: &mut AbundanceData,
    rng: &mut R,
) -> Result<()> {
    let n = state.n;
    let p = state.p;
    for i in 0..n {
        // censoring indicators: the reference is structurally uncensored
        // (which also guarantees the observed depth has somewhere to land),
        // everything else is Bernoulli in its cluster's rate
        state.delta[i * p] = true;
        for j in 1..p {
            let u = state.alloc[j];
            state.delta[i * p + j] = rng.random::<f64>() >= state.rstar.get(i, u);
        }
        let mut qcens = 0.0;
        for j in 0..p {
            if !state.delta[i * p + j] {
                qcens += state.qstar(i, state.alloc[j]);
            }
        }
        // uncensored counts: multinomial with the row's observed depth
        let uncensored: Vec<usize> = (0..p).filter(|&j| state.delta[i * p + j]).collect();
        let weights: Vec<f64> = uncensored
            .iter()
            .map(|&j| state.qstar(i, state.alloc[j]))
            .collect();
        let counts = zeros::sample_multinomial(data.l[i], &weights, rng);
        for j in 0..p {
            state.ztilde[i * p + j] = 0;
        }
        for (&j, &cnt) in uncensored.iter().zip(&counts) {
            state.ztilde[i * p + j] = cnt;
        }
        // latent censored block
        let s = if qcens > 0.0 {
            zeros::sample_negative_binomial(data.l[i] as f64, qcens, rng)?
        } else {
            0
        };
        let censored: Vec<usize> = (0..p).filter(|&j| !state.delta[i * p + j]).collect();
        let w: Vec<f64> = censored
            .iter()
            .map(|&j| state.qstar(i, state.alloc[j]))
            .collect();
        let cens_counts = zeros::sample_multinomial(s, &w, rng);
        for (&j, &cnt) in censored.iter().zip(&cens_counts) {
            state.ztilde[i * p + j] = cnt;
        }
        state.stilde[i] = s;
        state.ltilde[i] = data.l[i] + s;
        // observed data: censored cells show zero
        for j in 0..p {
            let idx = i * p + j;
            data.z[idx] = if state.delta[idx] {
                state.ztilde[idx]
            } else {
                0
            };
        }
    }
    state.rebuild_y();
    // depths are unchanged by construction
    debug_assert_eq!(
        data.l,
        (0..n)
            .map(|i| data.z[i * p..(i + 1) * p].iter().sum::<u64>())
            .collect::<Vec<_>>()
    );
    Ok(())
}

/// Draw a complete parameter state from the prior for the given design,
/// then latent data and observations from the model. The entry point for
/// the self-consistency harness.
pub fn prior_state<R: Rng>(
    data: &mut AbundanceData,
    priors: &Priors,
    rng: &mut R,
) -> Result<ModelState> {
    let n = data.n;
    let p = data.p;
    let d = data.t + 1;
    let t2 = data.t + 2;

    // partition of the non-reference taxa
    let labels = clusters::crp_prior_draw(p - 1, priors.alpha_c, rng);
    let c = labels.iter().max().map_or(0, |&l| l + 1) + 1;
    let mut alloc = vec![0usize];
    alloc.extend(labels.iter().map(|&l| l + 1));
    let mut sizes = vec![0usize; c];
    for &a in &alloc {
        sizes[a] += 1;
    }

    let gram = data.gram();
    let gram_chol = math::cholesky(&gram, d).map_err(Error::Config)?;
    let mut group_gram = vec![vec![0.0; d * d]; data.k];
    for i in 0..n {
        let xi = data.xdag_row(i);
        let g = &mut group_gram[data.groups[i]];
        for a in 0..d {
            for b in 0..d {
                g[a * d + b] += xi[a] * xi[b];
            }
        }
    }
    let mut zpred = vec![0.0; n * t2];
    for i in 0..n {
        zpred[i * t2] = 1.0;
        for v in 0..data.t {
            zpred[i * t2 + 1 + v] = data.x[i * data.t + v];
        }
        zpred[i * t2 + t2 - 1] = (data.l[i] as f64).ln();
    }

    let m = priors.m_components;
    let tau2 = composition::sample_inv_gamma(priors.a_tau, priors.b_tau, rng);
    let sigma_e2 = composition::sample_inv_gamma(priors.a_e, priors.b_e, rng);
    let tau_lambda2 = composition::sample_inv_gamma(priors.a_lambda, priors.b_lambda, rng);
    let atoms: Vec<Vec<f64>> = (0..m)
        .map(|_| regression::sample_atom_prior(&gram_chol, d, tau2, rng))
        .collect();
    let mut pi = Vec::with_capacity(m);
    let mut total = 0.0;
    for _ in 0..m {
        let g: f64 = rand_distr::Gamma::new(priors.alpha0 / m as f64, 1.0)
            .unwrap()
            .sample(rng);
        total += g;
        pi.push(g);
    }
    for v in pi.iter_mut() {
        *v /= total;
    }
    let memberships: Vec<Vec<usize>> = (0..data.k)
        .map(|_| {
            (0..c)
                .map(|u| {
                    if u == 0 {
                        0
                    } else {
                        let lw: Vec<f64> = pi.iter().map(|p: &f64| p.ln()).collect();
                        math::sample_log_categorical(&lw, rng)
                    }
                })
                .collect()
        })
        .collect();

    let mut eta = Mat::zeros(n, c);
    let noise = Normal::new(0.0, sigma_e2.sqrt()).unwrap();
    for i in 0..n {
        let k = data.groups[i];
        for u in 1..c {
            let mean = math::dot(data.xdag_row(i), &atoms[memberships[k][u]]);
            eta.set(i, u, mean + noise.sample(rng));
        }
    }
    let mut exp_eta = Mat::zeros(n, c);
    for i in 0..n {
        for u in 0..c {
            exp_eta.set(i, u, eta.get(i, u).exp());
        }
    }
    let lam_noise = Normal::new(0.0, tau_lambda2.sqrt()).unwrap();
    let lambda: Vec<Mat> = (0..c)
        .map(|_| {
            let mut l = Mat::zeros(n, t2);
            for i in 0..n {
                for col in 0..t2 {
                    l.set(i, col, lam_noise.sample(rng));
                }
            }
            l
        })
        .collect();

    let mut state = ModelState {
        n,
        p,
        k: data.k,
        t: data.t,
        gram,
        gram_chol,
        group_gram,
        zpred,
        alloc,
        sizes,
        eta,
        exp_eta,
        denom: vec![0.0; n],
        sigma_e2,
        pi,
        atoms,
        memberships,
        tau2,
        lambda,
        tau_lambda2,
        rstar: Mat::zeros(n, c),
        ln_r: Mat::zeros(n, c),
        ln_1mr: Mat::zeros(n, c),
        rw_log_scale: (2.4 / (t2 as f64).sqrt()).ln(),
        rw_accepts: 0,
        rw_proposals: 0,
        delta: vec![true; n * p],
        ztilde: vec![0; n * p],
        stilde: vec![0; n],
        ltilde: data.l.clone(),
        y: vec![vec![0; c]; n],
        max_constraint_residual: 0.0,
    };
    state.rebuild_denoms();
    for u in 0..c {
        state.refresh_rstar_col(u);
    }
    regenerate_data(&mut state, data, rng)?;
    Ok(state)
}
