use std::cmp::Reverse;
use std::collections::BinaryHeap;

use super::{GraphError, NodeIdx, WorkloadGraph};

/// Execution order of a graph: a topological permutation of its node indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Schedule {
    pub order: Vec<NodeIdx>,
}

impl Schedule {
    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    /// Inverse permutation: `position()[node]` is the step at which `node` runs.
    pub fn position(&self) -> Vec<usize> {
        let mut pos = vec![usize::MAX; self.order.len()];
        for (step, &n) in self.order.iter().enumerate() {
            pos[n] = step;
        }
        pos
    }
}

/// Kahn's algorithm; among ready nodes the lexicographically smallest id runs first.
pub fn topological_order(graph: &WorkloadGraph) -> Schedule {
    match kahn(graph) {
        Ok(order) => Schedule { order },
        Err(_) => unreachable!("WorkloadGraph is acyclic by construction"),
    }
}

pub(super) fn check_acyclic(graph: &WorkloadGraph) -> Result<(), GraphError> {
    kahn(graph).map(|_| ())
}

fn kahn(graph: &WorkloadGraph) -> Result<Vec<NodeIdx>, GraphError> {
    let n = graph.nodes.len();
    // rank[i] orders nodes by id so the heap key is a plain integer.
    let mut by_id: Vec<NodeIdx> = (0..n).collect();
    by_id.sort_by(|&a, &b| graph.nodes[a].id.cmp(&graph.nodes[b].id));
    let mut rank = vec![0usize; n];
    for (r, &i) in by_id.iter().enumerate() {
        rank[i] = r;
    }

    let mut indegree = vec![0usize; n];
    for (i, node) in graph.nodes.iter().enumerate() {
        let mut preds: Vec<NodeIdx> = node
            .inputs
            .iter()
            .filter_map(|&t| graph.producer(t))
            .collect();
        preds.sort_unstable();
        preds.dedup();
        indegree[i] = preds.len();
    }

    let mut ready: BinaryHeap<Reverse<usize>> = (0..n)
        .filter(|&i| indegree[i] == 0)
        .map(|i| Reverse(rank[i]))
        .collect();
    let mut order = Vec::with_capacity(n);
    let mut released = vec![false; n];
    while let Some(Reverse(r)) = ready.pop() {
        let node = by_id[r];
        order.push(node);
        let mut succ: Vec<NodeIdx> = graph.successors(node).collect();
        succ.sort_unstable();
        succ.dedup();
        for s in succ {
            indegree[s] -= 1;
            if indegree[s] == 0 && !released[s] {
                released[s] = true;
                ready.push(Reverse(rank[s]));
            }
        }
    }

    if order.len() != n {
        let stuck = by_id
            .iter()
            .find(|&&i| indegree[i] > 0)
            .map(|&i| graph.nodes[i].id.clone())
            .unwrap_or_default();
        return Err(GraphError::Cycle(stuck));
    }
    Ok(order)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::parse_workload;

    fn ids(g: &WorkloadGraph, s: &Schedule) -> Vec<String> {
        s.order.iter().map(|&n| g.nodes[n].id.clone()).collect()
    }

    #[test]
    fn chain_order() {
        let g = parse_workload(
            r#"{"name": "chain",
            "tensors": [{"id": "x", "dims": [4], "kind": "input"},
                        {"id": "a", "dims": [4], "kind": "activation"},
                        {"id": "b", "dims": [4], "kind": "activation"},
                        {"id": "c", "dims": [4], "kind": "output"}],
            "nodes": [{"id": "C", "op_class": "Activation", "inputs": ["b"], "outputs": ["c"]},
                      {"id": "A", "op_class": "Activation", "inputs": ["x"], "outputs": ["a"]},
                      {"id": "B", "op_class": "Activation", "inputs": ["a"], "outputs": ["b"]}]}"#,
        )
        .unwrap();
        assert_eq!(ids(&g, &topological_order(&g)), ["A", "B", "C"]);
    }

    #[test]
    fn diamond_tie_break_by_id() {
        let g = parse_workload(
            r#"{"name": "diamond",
            "tensors": [{"id": "x", "dims": [4], "kind": "input"},
                        {"id": "a", "dims": [4], "kind": "activation"},
                        {"id": "b", "dims": [4], "kind": "activation"},
                        {"id": "c", "dims": [4], "kind": "activation"},
                        {"id": "d", "dims": [4], "kind": "output"}],
            "nodes": [{"id": "D", "op_class": "Elementwise", "inputs": ["b", "c"], "outputs": ["d"]},
                      {"id": "C", "op_class": "Activation", "inputs": ["a"], "outputs": ["c"]},
                      {"id": "B", "op_class": "Activation", "inputs": ["a"], "outputs": ["b"]},
                      {"id": "A", "op_class": "Activation", "inputs": ["x"], "outputs": ["a"]}]}"#,
        )
        .unwrap();
        assert_eq!(ids(&g, &topological_order(&g)), ["A", "B", "C", "D"]);
    }

    #[test]
    fn single_node() {
        let g = parse_workload(
            r#"{"name": "one",
            "tensors": [{"id": "x", "dims": [4], "kind": "input"},
                        {"id": "y", "dims": [4], "kind": "output"}],
            "nodes": [{"id": "only", "op_class": "Activation", "inputs": ["x"], "outputs": ["y"]}]}"#,
        )
        .unwrap();
        let s = topological_order(&g);
        assert_eq!(s.order, vec![0]);
        assert_eq!(s.position(), vec![0]);
    }
}
