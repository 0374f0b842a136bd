//! Full MCMC state for the fitted model, plus the invariant checks that
//! guard every cluster birth/death and imputation sweep.
//!
//! Cluster 0 is always the pinned reference singleton holding taxon 0; its
//! log-ratio column is identically zero and its motif value is 1/D_i where
//! D_i = sum_u m_u exp(eta_iu). Latent counts `ztilde` agree with observed
//! counts wherever `delta` is set, and row sums satisfy
//! sum_j ztilde_ij = l_i + stilde_i.

use serde::{Deserialize, Serialize};

use crate::data::AbundanceData;
use crate::math::{self, Mat};

/// Hyperparameters. Defaults follow the desk-scale configuration; everything
/// is CLI-overridable.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Priors {
    /// CRP mass parameter.
    pub alpha_c: f64,
    /// Number of finite-mixture components for the regression vectors.
    pub m_components: usize,
    /// Dirichlet total mass for the mixture weights.
    pub alpha0: f64,
    /// Inverse-gamma shape/rate for the regression atom scale tau^2.
    pub a_tau: f64,
    pub b_tau: f64,
    /// Inverse-gamma shape/rate for the log-ratio residual variance.
    pub a_e: f64,
    pub b_e: f64,
    /// Inverse-gamma shape/rate for the zero-model coefficient variance.
    pub a_lambda: f64,
    pub b_lambda: f64,
}

impl Default for Priors {
    fn default() -> Self {
        Priors {
            alpha_c: 1.0,
            m_components: 7,
            alpha0: 1.0,
            a_tau: 2.0,
            b_tau: 2.0,
            a_e: 2.0,
            b_e: 0.05,
            a_lambda: 2.0,
            b_lambda: 1.0,
        }
    }
}

impl Priors {
    pub fn validate(&self) -> Result<(), String> {
        if self.alpha_c <= 0.0 {
            return Err(format!("alpha_c must be positive, got {}", self.alpha_c));
        }
        if self.m_components == 0 {
            return Err("m_components must be at least 1".into());
        }
        for (name, v) in [
            ("alpha0", self.alpha0),
            ("a_tau", self.a_tau),
            ("b_tau", self.b_tau),
            ("a_e", self.a_e),
            ("b_e", self.b_e),
            ("a_lambda", self.a_lambda),
            ("b_lambda", self.b_lambda),
        ] {
            if v <= 0.0 || v.is_nan() {
                return Err(format!("{name} must be positive, got {v}"));
            }
        }
        Ok(())
    }

    pub fn ig_mean(a: f64, b: f64) -> f64 {
        if a > 1.0 {
            b / (a - 1.0)
        } else {
            b
        }
    }
}

/// Mutable sampler state. Parallel per-cluster arrays (`sizes`, `eta`
/// columns, `lambda`, `memberships` columns, `y` columns, `rstar` columns)
/// are kept aligned by `add_cluster` / `remove_cluster` only.
#[derive(Debug, Clone)]
pub struct ModelState {
    pub n: usize,
    pub p: usize,
    pub k: usize,
    pub t: usize,

    // design caches, fixed for the whole run
    pub gram: Vec<f64>,
    pub gram_chol: Vec<f64>,
    pub group_gram: Vec<Vec<f64>>,
    /// Zero-model predictor rows (1, x_i, ln l_i), n x (t+2).
    pub zpred: Vec<f64>,

    // clustering
    pub alloc: Vec<usize>,
    pub sizes: Vec<usize>,

    // composition
    pub eta: Mat,
    pub exp_eta: Mat,
    pub denom: Vec<f64>,
    pub sigma_e2: f64,

    // regression mixture
    pub pi: Vec<f64>,
    pub atoms: Vec<Vec<f64>>,
    /// memberships[k][u] in 0..M; column 0 (reference) is unused filler.
    pub memberships: Vec<Vec<usize>>,
    pub tau2: f64,

    // zero model
    pub lambda: Vec<Mat>,
    pub tau_lambda2: f64,
    pub rstar: Mat,
    pub ln_r: Mat,
    pub ln_1mr: Mat,
    pub rw_log_scale: f64,
    pub rw_accepts: u64,
    pub rw_proposals: u64,

    // latent data
    pub delta: Vec<bool>,
    pub ztilde: Vec<u64>,
    pub stilde: Vec<u64>,
    pub ltilde: Vec<u64>,
    /// Cluster-aggregated latent counts, y[i][u] = sum of ztilde over the
    /// cluster's member taxa.
    pub y: Vec<Vec<u64>>,

    /// Largest row-stochastic constraint residual seen at any checkpoint.
    pub max_constraint_residual: f64,
}

impl ModelState {
    #[inline]
    pub fn n_clusters(&self) -> usize {
        self.sizes.len()
    }

    #[inline]
    pub fn qstar(&self, i: usize, u: usize) -> f64 {
        self.exp_eta.get(i, u) / self.denom[i]
    }

    #[inline]
    pub fn zpred_row(&self, i: usize) -> &[f64] {
        &self.zpred[i * (self.t + 2)..(i + 1) * (self.t + 2)]
    }

    #[inline]
    pub fn beta(&self, k: usize, u: usize) -> &[f64] {
        &self.atoms[self.memberships[k][u]]
    }

    #[inline]
    pub fn ztilde_at(&self, i: usize, j: usize) -> u64 {
        self.ztilde[i * self.p + j]
    }

    #[inline]
    pub fn delta_at(&self, i: usize, j: usize) -> bool {
        self.delta[i * self.p + j]
    }

    pub fn rebuild_denom_row(&mut self, i: usize) {
        let mut d = 0.0;
        for u in 0..self.n_clusters() {
            d += self.sizes[u] as f64 * self.exp_eta.get(i, u);
        }
        self.denom[i] = d;
    }

    pub fn rebuild_denoms(&mut self) {
        for i in 0..self.n {
            self.rebuild_denom_row(i);
        }
    }

    pub fn rebuild_y(&mut self) {
        let c = self.n_clusters();
        for i in 0..self.n {
            self.y[i].clear();
            self.y[i].resize(c, 0);
            for j in 0..self.p {
                self.y[i][self.alloc[j]] += self.ztilde[i * self.p + j];
            }
        }
    }

    /// Total latent mass on censored taxa for one sample.
    pub fn censored_mass(&self, i: usize) -> f64 {
        let mut q = 0.0;
        for j in 0..self.p {
            if !self.delta[i * self.p + j] {
                q += self.qstar(i, self.alloc[j]);
            }
        }
        q
    }

    pub fn refresh_rstar_cell(&mut self, i: usize, u: usize) {
        let z = math::dot(self.zpred_row(i), self.lambda[u].row(i));
        let r = math::logistic(z);
        self.rstar.set(i, u, r);
        self.ln_r.set(i, u, -math::softplus(-z));
        self.ln_1mr.set(i, u, -math::softplus(z));
    }

    pub fn refresh_rstar_col(&mut self, u: usize) {
        for i in 0..self.n {
            self.refresh_rstar_cell(i, u);
        }
    }

    /// Evaluate r* and its logs for an arbitrary coefficient matrix without
    /// touching state (used for auxiliary cluster candidates).
    pub fn rstar_for(&self, lambda: &Mat) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let mut r = Vec::with_capacity(self.n);
        let mut lr = Vec::with_capacity(self.n);
        let mut l1r = Vec::with_capacity(self.n);
        for i in 0..self.n {
            let z = math::dot(self.zpred_row(i), lambda.row(i));
            r.push(math::logistic(z));
            lr.push(-math::softplus(-z));
            l1r.push(-math::softplus(z));
        }
        (r, lr, l1r)
    }

    /// Append a cluster with the given parameters; returns its index.
    pub fn add_cluster(
        &mut self,
        eta_col: &[f64],
        lambda: Mat,
        memberships_col: &[usize],
    ) -> usize {
        let u = self.n_clusters();
        self.sizes.push(0);
        self.eta.push_col(eta_col);
        let exp_col: Vec<f64> = eta_col.iter().map(|e| e.exp()).collect();
        self.exp_eta.push_col(&exp_col);
        self.lambda.push(lambda);
        self.rstar.push_col(&vec![0.0; self.n]);
        self.ln_r.push_col(&vec![0.0; self.n]);
        self.ln_1mr.push_col(&vec![0.0; self.n]);
        self.refresh_rstar_col(u);
        for k in 0..self.k {
            self.memberships[k].push(memberships_col[k]);
        }
        for i in 0..self.n {
            self.y[i].push(0);
        }
        u
    }

    /// Remove an empty non-reference cluster, relabeling the allocations
    /// above it to keep labels contiguous. A taxon mid-move may still point
    /// at the removed label; its allocation is about to be overwritten.
    pub fn remove_cluster(&mut self, u: usize) {
        assert!(u > 0, "reference cluster cannot be removed");
        assert_eq!(self.sizes[u], 0, "cluster {u} still has members");
        self.sizes.remove(u);
        self.eta.remove_col(u);
        self.exp_eta.remove_col(u);
        self.lambda.remove(u);
        self.rstar.remove_col(u);
        self.ln_r.remove_col(u);
        self.ln_1mr.remove_col(u);
        for k in 0..self.k {
            self.memberships[k].remove(u);
        }
        for i in 0..self.n {
            self.y[i].remove(u);
        }
        for a in self.alloc.iter_mut() {
            if *a > u {
                *a -= 1;
            }
        }
    }

    /// Largest |sum_u m_u q*_iu - 1| over samples; records the running max.
    pub fn constraint_residual(&mut self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.n {
            let mut s = 0.0;
            for u in 0..self.n_clusters() {
                s += self.sizes[u] as f64 * self.qstar(i, u);
            }
            worst = worst.max((s - 1.0).abs());
        }
        self.max_constraint_residual = self.max_constraint_residual.max(worst);
        worst
    }

    /// Verify every structural invariant; returns a description of the first
    /// violation found.
    pub fn check_invariants(&mut self, data: &AbundanceData) -> Result<(), String> {
        let c = self.n_clusters();
        if self.sizes.iter().sum::<usize>() != self.p {
            return Err("cluster sizes do not sum to p".into());
        }
        if self.sizes.iter().any(|&m| m == 0) {
            return Err("empty cluster present".into());
        }
        if self.alloc[0] != 0 || self.sizes[0] != 1 {
            return Err("reference cluster is not a pinned singleton".into());
        }
        if self.alloc.iter().skip(1).any(|&a| a == 0) {
            return Err("non-reference taxon allocated to the reference cluster".into());
        }
        if self.alloc.iter().any(|&a| a >= c) {
            return Err("allocation label out of range".into());
        }
        for i in 0..self.n {
            if self.eta.get(i, 0) != 0.0 {
                return Err("reference log-ratio column must be zero".into());
            }
        }
        // latent-count accounting
        for i in 0..self.n {
            let mut censored_sum = 0u64;
            let mut observed_sum = 0u64;
            for j in 0..self.p {
                let idx = i * self.p + j;
                let zt = self.ztilde[idx];
                if self.delta[idx] {
                    if zt != data.count(i, j) {
                        return Err(format!(
                            "uncensored latent count differs from observation at ({i},{j})"
                        ));
                    }
                    observed_sum += zt;
                } else {
                    if data.count(i, j) != 0 {
                        return Err(format!("positive count marked censored at ({i},{j})"));
                    }
                    censored_sum += zt;
                }
            }
            if observed_sum != data.l[i] {
                return Err(format!(
                    "uncensored counts do not sum to depth for sample {i}"
                ));
            }
            if censored_sum != self.stilde[i] {
                return Err(format!(
                    "censored counts do not match stilde for sample {i}"
                ));
            }
            if self.ltilde[i] != data.l[i] + self.stilde[i] {
                return Err(format!("ltilde inconsistent for sample {i}"));
            }
            if !self.delta[i * self.p] {
                return Err(format!("reference taxon censored for sample {i}"));
            }
        }
        // y consistency
        for i in 0..self.n {
            let mut fresh = vec![0u64; c];
            for j in 0..self.p {
                fresh[self.alloc[j]] += self.ztilde[i * self.p + j];
            }
            if fresh != self.y[i] {
                return Err(format!("cluster aggregates stale for sample {i}"));
            }
        }
        let resid = self.constraint_residual();
        if resid > 1e-10 {
            return Err(format!("row-stochastic constraint residual {resid:e}"));
        }
        Ok(())
    }
}
