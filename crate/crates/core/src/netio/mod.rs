//! Traffic networks, problem files and trace export.

mod file;
mod trace;

pub use file::{
    load_problem, save_problem, FamilyDoc, FeasibleDoc, LqrDoc, MediatorDoc, Problem, ProblemFile, FORMAT_VERSION,
};
pub use trace::{export_trace, TraceFormat};

use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    CostFamily, Params, ProblemSpec, TrafficFamily, TrafficParameterization, DEFAULT_MEDIATOR_BOUND,
};
use crate::polyhedra::Polyhedron;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Arc {
    pub from: usize,
    pub to: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OdPair {
    pub origin: usize,
    pub dest: usize,
}

/// Directed network with nodes `1..=nodes` and one origin–destination pair
/// per member.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TrafficNetwork {
    pub nodes: usize,
    pub arcs: Vec<Arc>,
    pub members: Vec<OdPair>,
}

impl TrafficNetwork {
    pub fn new(nodes: usize, arcs: Vec<Arc>, members: Vec<OdPair>) -> Result<Self> {
        let net = Self { nodes, arcs, members };
        net.validate()?;
        Ok(net)
    }

    pub fn validate(&self) -> Result<()> {
        if self.arcs.is_empty() {
            return Err(Error::Network("network has no arcs".into()));
        }
        for (k, a) in self.arcs.iter().enumerate() {
            for (end, node) in [("from", a.from), ("to", a.to)] {
                if node == 0 || node > self.nodes {
                    return Err(Error::Schema {
                        location: format!("network.arcs[{k}].{end}"),
                        message: format!("node {node} outside 1..={}", self.nodes),
                    });
                }
            }
            if a.from == a.to {
                return Err(Error::Schema {
                    location: format!("network.arcs[{k}]"),
                    message: "self-loop".into(),
                });
            }
        }
        if !self.is_connected() {
            return Err(Error::Network("network is not connected".into()));
        }
        for (i, od) in self.members.iter().enumerate() {
            for (end, node) in [("origin", od.origin), ("dest", od.dest)] {
                if node == 0 || node > self.nodes {
                    return Err(Error::Schema {
                        location: format!("members[{i}].{end}"),
                        message: format!("node {node} outside 1..={}", self.nodes),
                    });
                }
            }
            if od.origin == od.dest {
                return Err(Error::Schema {
                    location: format!("members[{i}]"),
                    message: "origin equals destination".into(),
                });
            }
            if !self.reachable(od.origin, od.dest) {
                return Err(Error::Network(format!(
                    "member {i}: no directed path from node {} to node {}",
                    od.origin, od.dest
                )));
            }
        }
        Ok(())
    }

    fn is_connected(&self) -> bool {
        let mut adj = vec![Vec::new(); self.nodes + 1];
        for a in &self.arcs {
            adj[a.from].push(a.to);
            adj[a.to].push(a.from);
        }
        let mut seen = vec![false; self.nodes + 1];
        let mut queue = VecDeque::from([1]);
        seen[1] = true;
        while let Some(x) = queue.pop_front() {
            for &y in &adj[x] {
                if !seen[y] {
                    seen[y] = true;
                    queue.push_back(y);
                }
            }
        }
        seen[1..].iter().all(|&s| s)
    }

    pub fn reachable(&self, from: usize, to: usize) -> bool {
        self.shortest_path(from, to).is_some()
    }

    /// Arc indices of a fewest-arc directed path.
    pub fn shortest_path(&self, from: usize, to: usize) -> Option<Vec<usize>> {
        let mut prev: Vec<Option<usize>> = vec![None; self.nodes + 1];
        let mut seen = vec![false; self.nodes + 1];
        let mut queue = VecDeque::from([from]);
        seen[from] = true;
        while let Some(x) = queue.pop_front() {
            if x == to {
                let mut path = Vec::new();
                let mut node = to;
                while let Some(k) = prev[node] {
                    path.push(k);
                    node = self.arcs[k].from;
                }
                path.reverse();
                return Some(path);
            }
            for (k, a) in self.arcs.iter().enumerate() {
                if a.from == x && !seen[a.to] {
                    seen[a.to] = true;
                    prev[a.to] = Some(k);
                    queue.push_back(a.to);
                }
            }
        }
        None
    }

    pub fn total_demand(&self) -> f64 {
        self.members.len() as f64
    }
}

/// Node–arc incidence: `−1` at the tail, `+1` at the head of each arc.
pub fn build_incidence(net: &TrafficNetwork) -> Result<DMatrix<f64>> {
    let mut h = DMatrix::zeros(net.nodes, net.arcs.len());
    for (k, a) in net.arcs.iter().enumerate() {
        if a.from == 0 || a.from > net.nodes || a.to == 0 || a.to > net.nodes {
            return Err(Error::Schema {
                location: format!("network.arcs[{k}]"),
                message: format!("endpoint outside 1..={}", net.nodes),
            });
        }
        h[(a.from - 1, k)] = -1.0;
        h[(a.to - 1, k)] = 1.0;
    }
    Ok(h)
}

/// `−1` at the origin, `+1` at the destination (nodes are 1-based).
pub fn build_od_vector(net: &TrafficNetwork, origin: usize, dest: usize) -> Result<DVector<f64>> {
    if origin == dest {
        return Err(Error::InvalidParams("origin equals destination".into()));
    }
    for node in [origin, dest] {
        if node == 0 || node > net.nodes {
            return Err(Error::InvalidParams(format!("node {node} outside 1..={}", net.nodes)));
        }
    }
    let mut m = DVector::zeros(net.nodes);
    m[origin - 1] = -1.0;
    m[dest - 1] = 1.0;
    Ok(m)
}

/// Per-arc capacity used to keep traffic strategy sets compact.
pub fn default_capacity(net: &TrafficNetwork) -> f64 {
    10.0 * net.total_demand()
}

/// Traffic problem with `Ξ_i = {0 ≤ u_i ≤ u_cap, H u_i = m_i}`. One row of the
/// incidence matrix is dropped since the rows of a connected network sum to
/// zero.
pub fn build_traffic_problem(
    net: &TrafficNetwork,
    parameterization: TrafficParameterization,
    team: Params,
    members: Vec<Params>,
    capacity: Option<f64>,
) -> Result<ProblemSpec> {
    net.validate()?;
    let h = build_incidence(net)?;
    let reduced = h.rows(0, net.nodes - 1).into_owned();
    let n = net.arcs.len();
    let cap = capacity.unwrap_or_else(|| default_capacity(net));
    let feasible = net
        .members
        .iter()
        .map(|od| {
            let m = build_od_vector(net, od.origin, od.dest)?;
            Polyhedron::bounds_and_equalities(
                DVector::zeros(n),
                DVector::from_element(n, cap),
                reduced.clone(),
                m.rows(0, net.nodes - 1).into_owned(),
            )
        })
        .collect::<Result<Vec<_>>>()?;
    let fam = TrafficFamily::new(n, net.members.len(), parameterization)?;
    let d = fam.as_quadratic().dims().total() * net.members.len();
    ProblemSpec::new(
        CostFamily::Traffic(fam),
        team,
        members,
        feasible,
        Polyhedron::uniform_box(d, -DEFAULT_MEDIATOR_BOUND, DEFAULT_MEDIATOR_BOUND),
    )
}

/// Bundled 24-node, 31-arc network with four members. Nodes form a 4 × 6
/// grid numbered row by row. A directed cycle snakes through every node (24
/// arcs), and seven downward chords give each member shortcuts of different
/// lengths. The cycle makes the graph strongly connected, so every member's
/// strategy set has a strictly positive flow.
pub fn bundled_network() -> TrafficNetwork {
    let node = |r: usize, c: usize| r * 6 + c + 1;
    let mut arcs = Vec::with_capacity(31);
    for r in 0..4 {
        let cols: Vec<usize> = if r % 2 == 0 { (0..6).collect() } else { (0..6).rev().collect() };
        for w in cols.windows(2) {
            arcs.push(Arc {
                from: node(r, w[0]),
                to: node(r, w[1]),
            });
        }
        let end = *cols.last().unwrap();
        let next = if r < 3 { node(r + 1, end) } else { node(0, 0) };
        arcs.push(Arc {
            from: node(r, end),
            to: next,
        });
    }
    for (r, c) in [(0, 1), (0, 4), (1, 1), (1, 3), (1, 4), (2, 2), (2, 4)] {
        arcs.push(Arc {
            from: node(r, c),
            to: node(r + 1, c),
        });
    }
    let members = vec![
        OdPair { origin: 3, dest: 18 },
        OdPair { origin: 1, dest: 21 },
        OdPair { origin: 2, dest: 23 },
        OdPair { origin: 5, dest: 16 },
    ];
    TrafficNetwork::new(24, arcs, members).expect("bundled network is valid")
}

/// Team parameters `α = 2, β = 0.3, γ = 10` of the bundled instance.
pub fn bundled_team_params() -> Params {
    Params::new(&[2.0], &[0.3], &[10.0])
}

/// The bundled instance as a problem file with the given member parameters
/// (the same for every member). The mediator box keeps every adjusted member
/// at `α_i + θ_α ≥ α_i/2` and `β_i + θ_β ∈ [0, β_i + 1]`, where the members'
/// game stays strongly monotone.
pub fn bundled_problem_file(member: &Params) -> ProblemFile {
    let net = bundled_network();
    let members = net.members.len();
    let mut file = ProblemFile::traffic(
        &net,
        TrafficParameterization::Scalar,
        &bundled_team_params(),
        &vec![member.clone(); members],
    );
    let (a, b, g) = (member.alpha[0], member.beta[0], member.gamma[0]);
    let lower = [-0.5 * a, -b, -0.5 * g.abs()];
    let upper = [a, 1.0, 0.5 * g.abs()];
    file.mediator_set = Some(MediatorDoc::Box {
        lower: lower.repeat(members),
        upper: upper.repeat(members),
    });
    file
}

#[cfg(test)]
mod tests;
