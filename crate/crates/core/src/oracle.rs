//! Sequential max-flow solvers used as ground truth for the distributed
//! protocol and for classifying workload transactions.

use std::collections::VecDeque;

use crate::flow::FlowAssignment;
use crate::graph::{Amount, ChannelGraph, NodeId};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OracleResult {
    pub max_value: Amount,
    pub flow: FlowAssignment,
}

/// Residual arc network. Arc `2k` and `2k + 1` are the two directions of one
/// channel (or one dummy edge), so `arc ^ 1` is the reverse arc.
struct ArcNet {
    adj: Vec<Vec<usize>>,
    to: Vec<usize>,
    residual: Vec<i64>,
    /// Original capacity per arc; flow on an arc is `cap - residual`
    /// relative to the starting balance.
    initial: Vec<i64>,
}

impl ArcNet {
    fn from_graph(g: &ChannelGraph, extra_nodes: usize) -> Self {
        let mut net = ArcNet {
            adj: vec![Vec::new(); g.node_count() + extra_nodes],
            to: Vec::with_capacity(2 * g.channel_count()),
            residual: Vec::with_capacity(2 * g.channel_count()),
            initial: Vec::with_capacity(2 * g.channel_count()),
        };
        for ch in g.channels() {
            net.add_pair(ch.id.lo.index(), ch.id.hi.index(), ch.cap_forward, ch.cap_backward);
        }
        // Scan neighbors in ascending id order.
        let to = net.to.clone();
        for list in &mut net.adj {
            list.sort_by_key(|&a| to[a]);
        }
        net
    }

    fn add_pair(&mut self, u: usize, v: usize, cap_uv: Amount, cap_vu: Amount) -> usize {
        let a = self.to.len();
        self.to.push(v);
        self.residual.push(cap_uv as i64);
        self.initial.push(cap_uv as i64);
        self.adj[u].push(a);
        self.to.push(u);
        self.residual.push(cap_vu as i64);
        self.initial.push(cap_vu as i64);
        self.adj[v].push(a + 1);
        a
    }

    fn push(&mut self, arc: usize, amount: i64) {
        self.residual[arc] -= amount;
        self.residual[arc ^ 1] += amount;
    }

    /// Flow on the channel arcs only (the first `channel_arcs` arcs), as
    /// seen from the endpoint pair of each even arc.
    fn flow(&self, channel_arcs: usize, s: NodeId, r: NodeId) -> FlowAssignment {
        let mut f = FlowAssignment::new(s, r);
        for a in (0..channel_arcs).step_by(2) {
            let sent = self.initial[a] - self.residual[a];
            if sent != 0 {
                let u = self.to[a + 1];
                let v = self.to[a];
                f.add(NodeId::from(u), NodeId::from(v), sent);
            }
        }
        f
    }
}

/// Exact maximum `s -> r` flow by shortest augmenting paths.
pub fn maxflow_augmenting(g: &ChannelGraph, s: NodeId, r: NodeId) -> OracleResult {
    let mut net = ArcNet::from_graph(g, 0);
    let channel_arcs = net.to.len();
    let n = g.node_count();
    let mut total: i64 = 0;
    if s != r && g.contains_node(s) && g.contains_node(r) {
        let (s, r) = (s.index(), r.index());
        let mut pred: Vec<Option<usize>> = vec![None; n];
        loop {
            pred.iter_mut().for_each(|p| *p = None);
            let mut seen = vec![false; n];
            seen[s] = true;
            let mut queue = VecDeque::from([s]);
            'bfs: while let Some(v) = queue.pop_front() {
                for &a in &net.adj[v] {
                    let w = net.to[a];
                    if !seen[w] && net.residual[a] > 0 {
                        seen[w] = true;
                        pred[w] = Some(a);
                        if w == r {
                            break 'bfs;
                        }
                        queue.push_back(w);
                    }
                }
            }
            if !seen[r] {
                break;
            }
            let mut bottleneck = i64::MAX;
            let mut v = r;
            while let Some(a) = pred[v] {
                bottleneck = bottleneck.min(net.residual[a]);
                v = net.to[a ^ 1];
            }
            let mut v = r;
            while let Some(a) = pred[v] {
                net.push(a, bottleneck);
                v = net.to[a ^ 1];
            }
            total += bottleneck;
        }
    }
    OracleResult {
        max_value: total as Amount,
        flow: net.flow(channel_arcs, s, r),
    }
}

/// Sequential FIFO push-relabel on the graph augmented with a dummy source
/// `s'` (edge `s' -> s` of capacity `val`) and dummy sink `r'` (edge
/// `r -> r'` of capacity `val`). Labels start at `d(s') = n + 2` and zero
/// elsewhere. Returns the real-edge flow, which delivers exactly
/// `min(val, maxflow(s, r))`; any surplus drains back to `s'`.
pub fn feasible_flow_sequential(g: &ChannelGraph, s: NodeId, r: NodeId, val: Amount) -> FlowAssignment {
    let n = g.node_count();
    if s == r || val == 0 || !g.contains_node(s) || !g.contains_node(r) {
        return FlowAssignment::new(s, r);
    }
    let mut net = ArcNet::from_graph(g, 2);
    let channel_arcs = net.to.len();
    let (ds, dr) = (n, n + 1);
    let src_arc = net.add_pair(ds, s.index(), val, 0);
    net.add_pair(r.index(), dr, val, 0);

    let total = n + 2;
    let mut label = vec![0usize; total];
    let mut excess = vec![0i64; total];
    label[ds] = n + 2;
    net.push(src_arc, val as i64);
    excess[s.index()] = val as i64;
    excess[ds] = -(val as i64);

    let mut active: VecDeque<usize> = VecDeque::from([s.index()]);
    let mut queued = vec![false; total];
    queued[s.index()] = true;

    while let Some(v) = active.pop_front() {
        queued[v] = false;
        // Discharge v.
        while excess[v] > 0 {
            let mut pushed = false;
            for i in 0..net.adj[v].len() {
                let a = net.adj[v][i];
                let w = net.to[a];
                if net.residual[a] > 0 && label[v] == label[w] + 1 {
                    let delta = excess[v].min(net.residual[a]);
                    net.push(a, delta);
                    excess[v] -= delta;
                    excess[w] += delta;
                    if w != ds && w != dr && !queued[w] {
                        queued[w] = true;
                        active.push_back(w);
                    }
                    pushed = true;
                    if excess[v] == 0 {
                        break;
                    }
                }
            }
            if excess[v] > 0 && !pushed {
                let min = net.adj[v]
                    .iter()
                    .filter(|&&a| net.residual[a] > 0)
                    .map(|&a| label[net.to[a]])
                    .min()
                    .expect("node with excess has a residual arc back towards the source");
                label[v] = min + 1;
            }
        }
    }
    net.flow(channel_arcs, s, r)
}

/// Whether `val` can be routed from `s` to `r`.
pub fn is_feasible(g: &ChannelGraph, s: NodeId, r: NodeId, val: Amount) -> bool {
    val == 0 || val <= maxflow_augmenting(g, s, r).max_value
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::ResidualView;
    use crate::format::example_network;

    fn n(i: u32) -> NodeId {
        NodeId(i)
    }

    #[test]
    fn example_max_flow_is_twenty() {
        let g = example_network().graph;
        let res = maxflow_augmenting(&g, n(0), n(4));
        assert_eq!(res.max_value, 20);
        assert_eq!(res.flow.value(), 20);
        res.flow.validate(&g).unwrap();
        assert!(!ResidualView::new(&g, &res.flow).path_exists(n(0), n(4)));
    }

    #[test]
    fn isolated_source_and_single_channel() {
        let mut g = ChannelGraph::new(3);
        g.open_channel(n(1), n(2), 7, 0).unwrap();
        assert_eq!(maxflow_augmenting(&g, n(0), n(2)).max_value, 0);
        assert_eq!(maxflow_augmenting(&g, n(1), n(2)).max_value, 7);
        assert_eq!(maxflow_augmenting(&g, n(2), n(1)).max_value, 0);
    }

    #[test]
    fn sequential_feasible_flow_on_example() {
        let g = example_network().graph;
        let f = feasible_flow_sequential(&g, n(0), n(4), 15);
        f.validate(&g).unwrap();
        assert_eq!(f.value(), 15);
        assert_eq!(f.get(n(0), n(1)), 10);
        assert_eq!(f.get(n(1), n(3)), 10);
        assert_eq!(f.get(n(0), n(2)), 5);
        assert_eq!(f.get(n(2), n(3)), 5);
        assert_eq!(f.get(n(3), n(4)), 15);

        assert!(feasible_flow_sequential(&g, n(0), n(4), 0).is_empty());
        let over = feasible_flow_sequential(&g, n(0), n(4), 25);
        over.validate(&g).unwrap();
        assert_eq!(over.value(), 20);
    }

    #[test]
    fn feasibility() {
        let g = example_network().graph;
        assert!(is_feasible(&g, n(0), n(4), 15));
        assert!(is_feasible(&g, n(0), n(4), 0));
        assert!(is_feasible(&g, n(0), n(4), 20));
        assert!(!is_feasible(&g, n(0), n(4), 21));
    }
}
