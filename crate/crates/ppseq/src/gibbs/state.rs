//! Mutable sampler state: the partition of spikes, per-cluster statistics
//! and latent events, and the current global parameters.

use serde::{Deserialize, Serialize};

use crate::gibbs::stats::{ClusterStats, ModelCtx};
use crate::model::{Dataset, GlobalParams, LatentEvent, Spike};

/// Parent assignment of one spike.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Assignment {
    Background,
    Cluster(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cluster {
    pub stats: ClusterStats,
    pub members: Vec<usize>,
    pub event: LatentEvent,
}

/// State of one MCMC chain. Exclusively owned by a single execution context;
/// serializable so it can be checkpointed or moved between threads.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainState {
    pub spikes: Vec<Spike>,
    /// Spikes `[0, n_train)` are observed; anything beyond is imputed.
    pub n_train: usize,
    pub assignments: Vec<Assignment>,
    pos_in_cluster: Vec<usize>,
    clusters: Vec<Option<Cluster>>,
    free: Vec<usize>,
    live: Vec<usize>,
    live_pos: Vec<usize>,
    pub params: GlobalParams,
    /// Duration of the interval covered by this state (T, or T/P per shard).
    pub duration: f64,
}

impl ChainState {
    /// All spikes start in the background, per the sampler's initialization.
    pub fn new(data: &Dataset, params: GlobalParams) -> Self {
        let spikes = data.spikes().to_vec();
        let s = spikes.len();
        ChainState {
            spikes,
            n_train: s,
            assignments: vec![Assignment::Background; s],
            pos_in_cluster: vec![usize::MAX; s],
            clusters: Vec::new(),
            free: Vec::new(),
            live: Vec::new(),
            live_pos: Vec::new(),
            params,
            duration: data.duration,
        }
    }

    pub fn n_spikes(&self) -> usize {
        self.spikes.len()
    }

    /// Number of live (non-empty) clusters, K*.
    pub fn n_clusters(&self) -> usize {
        self.live.len()
    }

    /// Live cluster ids in iteration order (deterministic given history).
    pub fn live_ids(&self) -> &[usize] {
        &self.live
    }

    pub fn cluster(&self, id: usize) -> &Cluster {
        self.clusters[id].as_ref().expect("dead cluster id")
    }

    pub fn cluster_mut(&mut self, id: usize) -> &mut Cluster {
        self.clusters[id].as_mut().expect("dead cluster id")
    }

    pub fn background_count(&self) -> usize {
        self.assignments
            .iter()
            .filter(|a| matches!(a, Assignment::Background))
            .count()
    }

    /// Latent events of the live clusters, in live order.
    pub fn events(&self) -> Vec<LatentEvent> {
        self.live.iter().map(|&id| self.cluster(id).event).collect()
    }

    fn alloc_cluster(&mut self, cluster: Cluster) -> usize {
        let id = match self.free.pop() {
            Some(id) => {
                self.clusters[id] = Some(cluster);
                id
            }
            None => {
                self.clusters.push(Some(cluster));
                self.clusters.len() - 1
            }
        };
        if self.live_pos.len() <= id {
            self.live_pos.resize(id + 1, usize::MAX);
        }
        self.live_pos[id] = self.live.len();
        self.live.push(id);
        id
    }

    fn release_cluster(&mut self, id: usize) {
        let pos = self.live_pos[id];
        let last = self.live.len() - 1;
        self.live.swap(pos, last);
        let moved = self.live[pos];
        self.live_pos[moved] = pos;
        self.live.pop();
        self.live_pos[id] = usize::MAX;
        self.clusters[id] = None;
        self.free.push(id);
    }

    /// Create a new cluster containing one spike. The caller resamples the
    /// latent event afterwards; a placeholder event is stored meanwhile.
    pub fn create_cluster(&mut self, spike_idx: usize, ctx: &ModelCtx) -> usize {
        let spike = self.spikes[spike_idx];
        let mut stats = ClusterStats::empty(ctx.n_hypotheses());
        stats.add(&ctx.spike_hypotheses(spike.time, spike.neuron));
        let id = self.alloc_cluster(Cluster {
            stats,
            members: vec![spike_idx],
            event: LatentEvent {
                time: spike.time,
                seq_type: 0,
                amplitude: 1.0,
                warp: 0,
            },
        });
        self.assignments[spike_idx] = Assignment::Cluster(id);
        self.pos_in_cluster[spike_idx] = 0;
        id
    }

    pub fn add_to_cluster(&mut self, spike_idx: usize, id: usize, ctx: &ModelCtx) {
        let spike = self.spikes[spike_idx];
        let hyps = ctx.spike_hypotheses(spike.time, spike.neuron);
        let cluster = self.clusters[id].as_mut().expect("dead cluster id");
        cluster.stats.add(&hyps);
        self.pos_in_cluster[spike_idx] = cluster.members.len();
        cluster.members.push(spike_idx);
        self.assignments[spike_idx] = Assignment::Cluster(id);
    }

    /// Remove a spike from its cluster (if any); a cluster emptied by the
    /// removal is deleted immediately. Returns the previous assignment.
    pub fn remove_spike(&mut self, spike_idx: usize, ctx: &ModelCtx) -> Assignment {
        let prev = self.assignments[spike_idx];
        if let Assignment::Cluster(id) = prev {
            let spike = self.spikes[spike_idx];
            let hyps = ctx.spike_hypotheses(spike.time, spike.neuron);
            let cluster = self.clusters[id].as_mut().expect("dead cluster id");
            cluster.stats.remove(&hyps);
            let pos = self.pos_in_cluster[spike_idx];
            let last = cluster.members.len() - 1;
            cluster.members.swap(pos, last);
            let moved = cluster.members[pos];
            self.pos_in_cluster[moved] = pos;
            cluster.members.pop();
            if cluster.members.is_empty() {
                self.release_cluster(id);
            }
            self.assignments[spike_idx] = Assignment::Background;
            self.pos_in_cluster[spike_idx] = usize::MAX;
        }
        prev
    }

    /// Create a cluster from an explicit member set (split-merge moves).
    pub fn create_cluster_from_members(
        &mut self,
        members: Vec<usize>,
        event: LatentEvent,
        ctx: &ModelCtx,
    ) -> usize {
        let mut stats = ClusterStats::empty(ctx.n_hypotheses());
        for &s in &members {
            let spike = self.spikes[s];
            stats.add(&ctx.spike_hypotheses(spike.time, spike.neuron));
        }
        let id = self.alloc_cluster(Cluster {
            stats,
            members,
            event,
        });
        let members = self.cluster(id).members.clone();
        for (pos, &s) in members.iter().enumerate() {
            self.assignments[s] = Assignment::Cluster(id);
            self.pos_in_cluster[s] = pos;
        }
        id
    }

    /// Dissolve a cluster without reassigning its members elsewhere; the
    /// caller must give every member a new home.
    pub fn dissolve_cluster(&mut self, id: usize) -> Vec<usize> {
        let members = std::mem::take(&mut self.cluster_mut(id).members);
        for &s in &members {
            self.assignments[s] = Assignment::Background;
            self.pos_in_cluster[s] = usize::MAX;
        }
        self.release_cluster(id);
        members
    }

    /// Recompute every cluster's accumulators from its member list under the
    /// given parameters. Run at the start of each sweep (the statistics
    /// depend on the global parameters) and to cap floating-point drift.
    pub fn rebuild_stats(&mut self, ctx: &ModelCtx) {
        for &id in &self.live {
            let cluster = self.clusters[id].as_mut().expect("dead cluster id");
            let mut stats = ClusterStats::empty(ctx.n_hypotheses());
            for &s in &cluster.members {
                let spike = self.spikes[s];
                stats.add(&ctx.spike_hypotheses(spike.time, spike.neuron));
            }
            cluster.stats = stats;
        }
    }

    /// Partition invariant: cluster sizes plus background count equal the
    /// number of spikes, and membership bookkeeping is consistent.
    pub fn check_consistency(&self) -> bool {
        let clustered: usize = self.live.iter().map(|&id| self.cluster(id).members.len()).sum();
        if clustered + self.background_count() != self.n_spikes() {
            return false;
        }
        for &id in &self.live {
            for (pos, &s) in self.cluster(id).members.iter().enumerate() {
                if self.assignments[s] != Assignment::Cluster(id) || self.pos_in_cluster[s] != pos {
                    return false;
                }
            }
        }
        true
    }

    /// Remove all imputed spikes (indices >= n_train), truncating the spike
    /// list back to the observed set.
    pub fn clear_imputed(&mut self, ctx: &ModelCtx) {
        for s in self.n_train..self.n_spikes() {
            self.remove_spike(s, ctx);
        }
        self.spikes.truncate(self.n_train);
        self.assignments.truncate(self.n_train);
        self.pos_in_cluster.truncate(self.n_train);
    }

    /// Append an imputed spike assigned to the given parent.
    pub fn push_imputed(&mut self, spike: Spike, parent: Assignment, ctx: &ModelCtx) {
        let idx = self.n_spikes();
        self.spikes.push(spike);
        self.assignments.push(Assignment::Background);
        self.pos_in_cluster.push(usize::MAX);
        if let Assignment::Cluster(id) = parent {
            self.add_to_cluster(idx, id, ctx);
        }
    }
}
