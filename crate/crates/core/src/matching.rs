//! Pairing needing vehicles with idle helpers.
//!
//! Candidates are screened by V2V range and helper capacity, then a maximum
//! cardinality bipartite matching is found with augmenting paths.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{ChannelParams, Role, SequentialTask, Vehicle, VehicleId};

/// Tolerance for treating a distance as exactly the V2V range, m.
pub const RANGE_EPSILON: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MatchingError {
    #[error("needing vehicle {0} has no task")]
    MissingTask(VehicleId),
    #[error("vehicles {0} and {1} occupy the same position")]
    CoincidentVehicles(VehicleId, VehicleId),
    #[error("edge references unknown vehicle {0}")]
    UnknownVehicle(VehicleId),
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CandidateGraph {
    pub nv_ids: Vec<VehicleId>,
    pub iv_ids: Vec<VehicleId>,
    /// Sorted, duplicate-free helper candidates per needing vehicle.
    pub edges: BTreeMap<VehicleId, Vec<VehicleId>>,
}

impl CandidateGraph {
    /// Builds a graph from explicit edges, normalizing order and duplicates.
    pub fn from_edges(
        nv_ids: Vec<VehicleId>,
        iv_ids: Vec<VehicleId>,
        edges: impl IntoIterator<Item = (VehicleId, VehicleId)>,
    ) -> Result<Self, MatchingError> {
        let mut graph = CandidateGraph {
            nv_ids,
            iv_ids,
            edges: BTreeMap::new(),
        };
        graph.nv_ids.sort_unstable();
        graph.nv_ids.dedup();
        graph.iv_ids.sort_unstable();
        graph.iv_ids.dedup();
        for &nv in &graph.nv_ids {
            graph.edges.insert(nv, Vec::new());
        }
        for (nv, iv) in edges {
            if graph.iv_ids.binary_search(&iv).is_err() {
                return Err(MatchingError::UnknownVehicle(iv));
            }
            graph
                .edges
                .get_mut(&nv)
                .ok_or(MatchingError::UnknownVehicle(nv))?
                .push(iv);
        }
        for list in graph.edges.values_mut() {
            list.sort_unstable();
            list.dedup();
        }
        Ok(graph)
    }

    pub fn edge_count(&self) -> usize {
        self.edges.values().map(Vec::len).sum()
    }

    pub fn has_edge(&self, nv: VehicleId, iv: VehicleId) -> bool {
        self.edges
            .get(&nv)
            .is_some_and(|list| list.binary_search(&iv).is_ok())
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Matching {
    /// `(nv, helper)` pairs in ascending NV order.
    pub pairs: Vec<(VehicleId, VehicleId)>,
    pub unmatched_nvs: Vec<VehicleId>,
}

impl Matching {
    pub fn size(&self) -> usize {
        self.pairs.len()
    }

    pub fn helper_of(&self, nv: VehicleId) -> Option<VehicleId> {
        self.pairs.iter().find(|(n, _)| *n == nv).map(|(_, h)| *h)
    }
}

/// Range test: strictly inside, or exactly at the limit while closing in
/// (the rear vehicle is strictly faster than the front one).
pub fn within_v2v_range(a: &Vehicle, b: &Vehicle, d_max: f64) -> Result<bool, MatchingError> {
    let d = a.position.distance(&b.position);
    if d == 0.0 {
        return Err(MatchingError::CoincidentVehicles(a.id, b.id));
    }
    if d < d_max - RANGE_EPSILON {
        return Ok(true);
    }
    if (d - d_max).abs() > RANGE_EPSILON {
        return Ok(false);
    }
    let (rear, front) = if a.position.x < b.position.x {
        (a, b)
    } else if b.position.x < a.position.x {
        (b, a)
    } else {
        // side by side: purely lateral separation
        return Ok(true);
    };
    Ok(rear.velocity > front.velocity)
}

/// Capacity test: the helper finishes the whole task at full speed strictly
/// before the deadline.
pub fn helper_can_finish(task: &SequentialTask, helper: &Vehicle) -> bool {
    task.total_workload() / helper.max_cpu < task.deadline
}

pub fn build_candidates(
    nvs: &[Vehicle],
    tasks: &BTreeMap<VehicleId, SequentialTask>,
    ivs: &[Vehicle],
    params: &ChannelParams,
) -> Result<CandidateGraph, MatchingError> {
    let mut edges = Vec::new();
    for nv in nvs {
        let task = tasks.get(&nv.id).ok_or(MatchingError::MissingTask(nv.id))?;
        for iv in ivs {
            if within_v2v_range(nv, iv, params.d_v2v_max)? && helper_can_finish(task, iv) {
                edges.push((nv.id, iv.id));
            }
        }
    }
    CandidateGraph::from_edges(
        nvs.iter().map(|v| v.id).collect(),
        ivs.iter().map(|v| v.id).collect(),
        edges,
    )
}

/// Maximum cardinality matching by augmenting paths (Kuhn's algorithm).
///
/// NVs are inserted in ascending id order and each search tries helpers in
/// ascending id order, so the result is a pure function of the graph.
pub fn max_match(graph: &CandidateGraph) -> Matching {
    let iv_index: BTreeMap<VehicleId, usize> =
        graph.iv_ids.iter().enumerate().map(|(i, &id)| (id, i)).collect();
    let adjacency: Vec<Vec<usize>> = graph
        .nv_ids
        .iter()
        .map(|nv| {
            graph
                .edges
                .get(nv)
                .map(|list| list.iter().filter_map(|iv| iv_index.get(iv).copied()).collect())
                .unwrap_or_default()
        })
        .collect();

    let mut owner_of_iv: Vec<Option<usize>> = vec![None; graph.iv_ids.len()];
    for nv in 0..adjacency.len() {
        let mut visited = vec![false; graph.iv_ids.len()];
        augment(nv, &adjacency, &mut owner_of_iv, &mut visited);
    }

    let mut helper_of_nv: Vec<Option<usize>> = vec![None; adjacency.len()];
    for (iv, owner) in owner_of_iv.iter().enumerate() {
        if let Some(nv) = owner {
            helper_of_nv[*nv] = Some(iv);
        }
    }
    let mut matching = Matching::default();
    for (nv, helper) in helper_of_nv.into_iter().enumerate() {
        let nv_id = graph.nv_ids[nv];
        match helper {
            Some(iv) => matching.pairs.push((nv_id, graph.iv_ids[iv])),
            None => matching.unmatched_nvs.push(nv_id),
        }
    }
    matching
}

fn augment(nv: usize, adjacency: &[Vec<usize>], owner: &mut [Option<usize>], visited: &mut [bool]) -> bool {
    for &iv in &adjacency[nv] {
        if visited[iv] {
            continue;
        }
        visited[iv] = true;
        let free = match owner[iv] {
            None => true,
            Some(other) => augment(other, adjacency, owner, visited),
        };
        if free {
            owner[iv] = Some(nv);
            return true;
        }
    }
    false
}

/// Marks matched idle vehicles as helpers.
pub fn promote_helpers(vehicles: &mut [Vehicle], matching: &Matching) {
    for v in vehicles.iter_mut() {
        if v.role == Role::Iv && matching.pairs.iter().any(|(_, h)| *h == v.id) {
            v.role = Role::Hv;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Position, Subtask};

    fn vehicle(id: VehicleId, x: f64, y: f64, v: f64, cpu: f64, role: Role) -> Vehicle {
        Vehicle {
            id,
            position: Position::new(x, y),
            velocity: v,
            max_cpu: cpu,
            kappa: 1e-23,
            weight: 1.0,
            role,
        }
    }

    fn task(owner: VehicleId, total: f64, deadline: f64) -> SequentialTask {
        SequentialTask {
            owner,
            input_size: 1e6,
            subtasks: vec![Subtask { workload: total, output_size: 0.0 }],
            deadline,
        }
    }

    #[test]
    fn boundary_distance_needs_closing_speed() {
        let rear = vehicle(1, 0.0, 0.0, 30.0, 1e10, Role::Nv);
        let front = vehicle(2, 70.0, 0.0, 25.0, 1e10, Role::Iv);
        assert!(within_v2v_range(&rear, &front, 70.0).unwrap());
        assert!(within_v2v_range(&front, &rear, 70.0).unwrap());
        let same = vehicle(2, 70.0, 0.0, 30.0, 1e10, Role::Iv);
        assert!(!within_v2v_range(&rear, &same, 70.0).unwrap());
        let pulling_away = vehicle(2, 70.0, 0.0, 35.0, 1e10, Role::Iv);
        assert!(!within_v2v_range(&rear, &pulling_away, 70.0).unwrap());
        let far = vehicle(2, 70.5, 0.0, 10.0, 1e10, Role::Iv);
        assert!(!within_v2v_range(&rear, &far, 70.0).unwrap());
        let coincident = vehicle(2, 0.0, 0.0, 10.0, 1e10, Role::Iv);
        assert!(within_v2v_range(&rear, &coincident, 70.0).is_err());
    }

    #[test]
    fn capacity_boundary_is_rejected() {
        let iv = vehicle(2, 10.0, 0.0, 30.0, 1e10, Role::Iv);
        assert!(!helper_can_finish(&task(1, 2e9, 0.2), &iv));
        assert!(helper_can_finish(&task(1, 1.9e9, 0.2), &iv));
    }

    #[test]
    fn candidates_from_vehicles() {
        let nvs = vec![vehicle(1, 0.0, 0.0, 30.0, 1e9, Role::Nv)];
        let ivs = vec![
            vehicle(10, 20.0, 3.75, 30.0, 1e10, Role::Iv),
            vehicle(11, 20.0, 0.0, 30.0, 1e9, Role::Iv),
            vehicle(12, 200.0, 0.0, 30.0, 1e10, Role::Iv),
        ];
        let tasks = BTreeMap::from([(1, task(1, 1e9, 0.2))]);
        let g = build_candidates(&nvs, &tasks, &ivs, &ChannelParams::default()).unwrap();
        assert_eq!(g.edges[&1], vec![10]);
        assert_eq!(
            build_candidates(&nvs, &BTreeMap::new(), &ivs, &ChannelParams::default()),
            Err(MatchingError::MissingTask(1))
        );
    }

    #[test]
    fn small_matchings() {
        let g = CandidateGraph::from_edges(vec![1, 2], vec![1, 2], [(1, 1), (2, 1), (2, 2)]).unwrap();
        let m = max_match(&g);
        assert_eq!(m.pairs, vec![(1, 1), (2, 2)]);

        let g = CandidateGraph::from_edges(vec![1, 2, 3], vec![4, 5], []).unwrap();
        let m = max_match(&g);
        assert_eq!(m.size(), 0);
        assert_eq!(m.unmatched_nvs, vec![1, 2, 3]);

        let all = (1..=3).flat_map(|n| (1..=3).map(move |i| (n, i)));
        let g = CandidateGraph::from_edges(vec![1, 2, 3], vec![1, 2, 3], all).unwrap();
        assert_eq!(max_match(&g).size(), 3);
    }

    #[test]
    fn augmenting_path_reassigns() {
        // NV1 grabs IV1 first; NV2 can only use IV1, so NV1 must move to IV2.
        let g = CandidateGraph::from_edges(vec![1, 2], vec![1, 2], [(1, 1), (1, 2), (2, 1)]).unwrap();
        let m = max_match(&g);
        assert_eq!(m.pairs, vec![(1, 2), (2, 1)]);
    }

    #[test]
    fn duplicate_edges_collapse_and_unknowns_fail() {
        let g = CandidateGraph::from_edges(vec![1], vec![2], [(1, 2), (1, 2)]).unwrap();
        assert_eq!(g.edge_count(), 1);
        assert!(CandidateGraph::from_edges(vec![1], vec![2], [(1, 3)]).is_err());
        assert!(CandidateGraph::from_edges(vec![1], vec![2], [(4, 2)]).is_err());
    }

    #[test]
    fn promotion_marks_helpers() {
        let mut vs = vec![
            vehicle(1, 0.0, 0.0, 30.0, 1e9, Role::Nv),
            vehicle(2, 10.0, 0.0, 30.0, 1e10, Role::Iv),
            vehicle(3, 20.0, 0.0, 30.0, 1e10, Role::Iv),
        ];
        let m = Matching { pairs: vec![(1, 3)], unmatched_nvs: vec![] };
        promote_helpers(&mut vs, &m);
        assert_eq!(vs[1].role, Role::Iv);
        assert_eq!(vs[2].role, Role::Hv);
    }
}
