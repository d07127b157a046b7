//! Per-cluster sufficient statistics, stored per (type, warp) hypothesis so
//! that each assignment weight costs O(1) per hypothesis and a full sweep is
//! O(S K R F).

use serde::{Deserialize, Serialize};

use crate::math::{log_sum_exp, LN_2PI};
use crate::model::{GlobalParams, WarpGrid};

/// Log normalizing constant of a Gaussian in information form:
/// `log Z(J, h) = 1/2 log(2 pi) - 1/2 log J + h^2 / (2 J)`.
pub fn log_z(j: f64, h: f64) -> f64 {
    assert!(j > 0.0, "information-form precision must be positive");
    0.5 * LN_2PI - 0.5 * j.ln() + 0.5 * h * h / j
}

/// Evaluation context for one set of global parameters: cached logs of the
/// type and warp probabilities. Rebuilt whenever the parameters change.
pub struct ModelCtx<'a> {
    pub params: &'a GlobalParams,
    pub grid: &'a WarpGrid,
    pub log_type_probs: Vec<f64>,
    pub log_warp_probs: Vec<f64>,
    /// Duration of the interval this state covers (a shard may cover T/P).
    pub duration: f64,
}

impl<'a> ModelCtx<'a> {
    pub fn new(params: &'a GlobalParams, grid: &'a WarpGrid, duration: f64) -> Self {
        ModelCtx {
            params,
            grid,
            log_type_probs: params.type_probs.iter().map(|p| p.ln()).collect(),
            log_warp_probs: grid.log_probs(),
            duration,
        }
    }

    pub fn n_types(&self) -> usize {
        self.params.n_types()
    }

    pub fn n_hypotheses(&self) -> usize {
        self.params.n_types() * self.grid.len()
    }

    /// Per-(type, warp) information-form view of one spike:
    /// `J = 1/(w^2 c)`, `h = (t - w b) J`, flattened as `r * F + f`.
    pub fn spike_hypotheses(&self, t: f64, neuron: usize) -> Vec<SpikeHyp> {
        let f_count = self.grid.len();
        let mut out = Vec::with_capacity(self.n_hypotheses());
        for r in 0..self.params.n_types() {
            let a = self.params.weights[r][neuron];
            let log_a = if a == 0.0 { f64::NEG_INFINITY } else { a.ln() };
            let b = self.params.delays[r][neuron];
            let c = self.params.widths[r][neuron];
            for f in 0..f_count {
                let w = self.grid.values[f];
                let j = 1.0 / (w * w * c);
                let h = (t - w * b) * j;
                out.push(SpikeHyp {
                    log_a,
                    j,
                    h,
                    log_z: log_z(j, h),
                });
            }
        }
        out
    }
}

/// One spike viewed under one (type, warp) hypothesis.
#[derive(Debug, Clone, Copy)]
pub struct SpikeHyp {
    pub log_a: f64,
    pub j: f64,
    pub h: f64,
    pub log_z: f64,
}

/// Accumulators for one hypothesis. Members with zero neuron weight are
/// counted separately so that add/remove stays an exact inverse.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct HypStats {
    pub zero_weight_members: u32,
    pub sum_log_a: f64,
    pub sum_j: f64,
    pub sum_h: f64,
    pub sum_log_j: f64,
    pub sum_h2_over_j: f64,
}

impl HypStats {
    /// `sum_s log Z(J_s, h_s)` recovered from the accumulators.
    fn sum_log_z(&self, size: usize) -> f64 {
        size as f64 * 0.5 * LN_2PI - 0.5 * self.sum_log_j + 0.5 * self.sum_h2_over_j
    }
}

/// Sufficient statistics of one cluster across all (type, warp) hypotheses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterStats {
    pub size: usize,
    pub hyp: Vec<HypStats>,
}

impl ClusterStats {
    pub fn empty(n_hypotheses: usize) -> Self {
        ClusterStats {
            size: 0,
            hyp: vec![HypStats::default(); n_hypotheses],
        }
    }

    pub fn add(&mut self, hyps: &[SpikeHyp]) {
        debug_assert_eq!(hyps.len(), self.hyp.len());
        self.size += 1;
        for (acc, sh) in self.hyp.iter_mut().zip(hyps) {
            if sh.log_a == f64::NEG_INFINITY {
                acc.zero_weight_members += 1;
            } else {
                acc.sum_log_a += sh.log_a;
            }
            acc.sum_j += sh.j;
            acc.sum_h += sh.h;
            acc.sum_log_j += sh.j.ln();
            acc.sum_h2_over_j += sh.h * sh.h / sh.j;
        }
    }

    pub fn remove(&mut self, hyps: &[SpikeHyp]) {
        debug_assert!(self.size > 0);
        self.size -= 1;
        for (acc, sh) in self.hyp.iter_mut().zip(hyps) {
            if sh.log_a == f64::NEG_INFINITY {
                acc.zero_weight_members -= 1;
            } else {
                acc.sum_log_a -= sh.log_a;
            }
            acc.sum_j -= sh.j;
            acc.sum_h -= sh.h;
            acc.sum_log_j -= sh.j.ln();
            acc.sum_h2_over_j -= sh.h * sh.h / sh.j;
        }
    }

    /// Unnormalized log posterior weight of each (type, warp) hypothesis:
    /// `log pi_r + log eta_f + sum log a + log Z(sum J, sum h) - sum log Z`.
    pub fn hypothesis_log_weights(&self, ctx: &ModelCtx) -> Vec<f64> {
        let f_count = ctx.grid.len();
        self.hyp
            .iter()
            .enumerate()
            .map(|(rf, acc)| {
                if acc.zero_weight_members > 0 {
                    return f64::NEG_INFINITY;
                }
                let (r, f) = (rf / f_count, rf % f_count);
                ctx.log_type_probs[r] + ctx.log_warp_probs[f] + acc.sum_log_a
                    + log_z(acc.sum_j, acc.sum_h)
                    - acc.sum_log_z(self.size)
            })
            .collect()
    }

    /// Log marginal evidence of the cluster with the event time, type and
    /// warp integrated out: `log[(1/T) sum_{r,f} ...]`.
    pub fn log_marginal(&self, ctx: &ModelCtx) -> f64 {
        debug_assert!(self.size >= 1);
        log_sum_exp(&self.hypothesis_log_weights(ctx)) - ctx.duration.ln()
    }

    /// Log predictive `log p(x_s | X_k, params)`: the marginal of the cluster
    /// with the spike added minus the marginal without it, computed in one
    /// pass over hypotheses.
    pub fn log_predictive(&self, hyps: &[SpikeHyp], ctx: &ModelCtx) -> f64 {
        let f_count = ctx.grid.len();
        let mut with = Vec::with_capacity(self.hyp.len());
        let mut without = Vec::with_capacity(self.hyp.len());
        for (rf, (acc, sh)) in self.hyp.iter().zip(hyps).enumerate() {
            if acc.zero_weight_members > 0 {
                with.push(f64::NEG_INFINITY);
                without.push(f64::NEG_INFINITY);
                continue;
            }
            let (r, f) = (rf / f_count, rf % f_count);
            let base = ctx.log_type_probs[r] + ctx.log_warp_probs[f] + acc.sum_log_a;
            let old_log_z = acc.sum_log_z(self.size);
            without.push(base + log_z(acc.sum_j, acc.sum_h) - old_log_z);
            if sh.log_a == f64::NEG_INFINITY {
                with.push(f64::NEG_INFINITY);
            } else {
                with.push(
                    base + sh.log_a + log_z(acc.sum_j + sh.j, acc.sum_h + sh.h)
                        - old_log_z
                        - sh.log_z,
                );
            }
        }
        log_sum_exp(&with) - log_sum_exp(&without)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::WarpGrid;

    fn ctx_params() -> GlobalParams {
        GlobalParams {
            bg_rates: vec![0.1, 0.1],
            type_probs: vec![0.6, 0.4],
            weights: vec![vec![0.3, 0.7], vec![0.9, 0.1]],
            delays: vec![vec![0.0, 1.0], vec![-0.5, 0.5]],
            widths: vec![vec![0.2, 0.3], vec![0.1, 0.4]],
        }
    }

    #[test]
    fn log_z_values() {
        // Z(1, 0) = sqrt(2 pi); Z(4, 2) per the direct formula.
        assert!((log_z(1.0, 0.0) - 0.918939).abs() < 1e-6);
        assert!((log_z(4.0, 2.0) - (0.5 * LN_2PI - 0.5 * 4.0f64.ln() + 0.5)).abs() < 1e-14);
        assert!((log_z(4.0, 2.0) - 0.725792).abs() < 1e-6);
    }

    #[test]
    #[should_panic]
    fn log_z_rejects_nonpositive_precision() {
        log_z(0.0, 1.0);
    }

    #[test]
    fn add_remove_is_inverse() {
        let params = ctx_params();
        let grid = WarpGrid::build(3, 2.0, 1.0).unwrap();
        let ctx = ModelCtx::new(&params, &grid, 100.0);
        let mut stats = ClusterStats::empty(ctx.n_hypotheses());
        let spikes = [(3.0, 0), (3.5, 1), (2.8, 0), (4.1, 1)];
        let hyps: Vec<_> = spikes
            .iter()
            .map(|&(t, n)| ctx.spike_hypotheses(t, n))
            .collect();
        for h in &hyps {
            stats.add(h);
        }
        for h in hyps.iter().rev() {
            stats.remove(h);
        }
        assert_eq!(stats.size, 0);
        for acc in &stats.hyp {
            assert_eq!(acc.zero_weight_members, 0);
            for v in [
                acc.sum_log_a,
                acc.sum_j,
                acc.sum_h,
                acc.sum_log_j,
                acc.sum_h2_over_j,
            ] {
                assert!(v.abs() < 1e-9, "residual {v}");
            }
        }
    }

    #[test]
    fn singleton_marginal_reduction() {
        // One spike on neuron n: marginal = log[(1/T) sum_r pi_r a_{nr}].
        let params = ctx_params();
        let grid = WarpGrid::unit();
        let ctx = ModelCtx::new(&params, &grid, 50.0);
        let mut stats = ClusterStats::empty(ctx.n_hypotheses());
        stats.add(&ctx.spike_hypotheses(10.0, 1));
        let expect = ((0.6 * 0.7 + 0.4 * 0.1) / 50.0f64).ln();
        assert!((stats.log_marginal(&ctx) - expect).abs() < 1e-12);
    }

    #[test]
    fn predictive_matches_marginal_ratio() {
        let params = ctx_params();
        let grid = WarpGrid::build(3, 1.5, 4.0).unwrap();
        let ctx = ModelCtx::new(&params, &grid, 100.0);
        let mut stats = ClusterStats::empty(ctx.n_hypotheses());
        for &(t, n) in &[(3.0, 0), (3.4, 1), (2.9, 0)] {
            stats.add(&ctx.spike_hypotheses(t, n));
        }
        let new_hyp = ctx.spike_hypotheses(3.7, 1);
        let pred = stats.log_predictive(&new_hyp, &ctx);
        let before = stats.log_marginal(&ctx);
        stats.add(&new_hyp);
        let after = stats.log_marginal(&ctx);
        assert!((pred - (after - before)).abs() < 1e-11);
    }
}
