//! Directed interconnection graphs for networked control systems.
//!
//! A topology has *state* vertices, whose components evolve in time, and
//! *input* vertices, which only drive others. An edge `w → v` means the
//! next value of `v` depends on the current value of `w`. A vertex always
//! depends on itself, so self-loops are never stored as edges.
//!
//! Declaration order of the vertex lists fixes every block ordering
//! downstream (row offsets in data matrices, block positions in models).

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vertex {
    pub id: String,
    pub dim: usize,
}

impl Vertex {
    pub fn new(id: impl Into<String>, dim: usize) -> Self {
        Vertex { id: id.into(), dim }
    }
}

/// Position of a vertex in one of the two declaration lists.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum VertexRef {
    State(usize),
    Input(usize),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    InputVertexHasInEdge {
        vertex: String,
        source: String,
    },
    SelfLoop {
        vertex: String,
    },
    DuplicateEdge {
        source: String,
        target: String,
    },
    UnknownEdgeEndpoint {
        source: String,
        target: String,
        missing: String,
    },
    ZeroDimension {
        vertex: String,
    },
    DuplicateVertexId {
        vertex: String,
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::InputVertexHasInEdge { vertex, source } => {
                write!(f, "input vertex `{vertex}` has an in-edge from `{source}`")
            }
            Violation::SelfLoop { vertex } => write!(f, "self-loop on `{vertex}`"),
            Violation::DuplicateEdge { source, target } => {
                write!(f, "duplicate edge `{source}` -> `{target}`")
            }
            Violation::UnknownEdgeEndpoint {
                source,
                target,
                missing,
            } => write!(
                f,
                "edge `{source}` -> `{target}` names unknown vertex `{missing}`"
            ),
            Violation::ZeroDimension { vertex } => write!(f, "vertex `{vertex}` has dimension 0"),
            Violation::DuplicateVertexId { vertex } => {
                write!(f, "vertex id `{vertex}` declared twice")
            }
        }
    }
}

/// Wire form of a topology.
#[derive(Serialize, Deserialize)]
struct TopologyDoc {
    state_vertices: Vec<Vertex>,
    input_vertices: Vec<Vertex>,
    edges: Vec<(String, String)>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(from = "TopologyDoc", into = "TopologyDoc")]
pub struct NetworkTopology {
    state_vertices: Vec<Vertex>,
    input_vertices: Vec<Vertex>,
    edges: Vec<(String, String)>,
    index: HashMap<String, VertexRef>,
    // Parents of each state vertex, sorted by declaration order. Built from
    // the well-formed edges only; `validate` reports the rest.
    state_parents: Vec<Vec<usize>>,
    input_parents: Vec<Vec<usize>>,
    // (source, target state index) -> position in `edges`
    edge_lookup: HashMap<(VertexRef, usize), usize>,
}

impl PartialEq for NetworkTopology {
    fn eq(&self, other: &Self) -> bool {
        self.state_vertices == other.state_vertices
            && self.input_vertices == other.input_vertices
            && self.edges == other.edges
    }
}

impl From<TopologyDoc> for NetworkTopology {
    fn from(doc: TopologyDoc) -> Self {
        NetworkTopology::new(doc.state_vertices, doc.input_vertices, doc.edges)
    }
}

impl From<NetworkTopology> for TopologyDoc {
    fn from(t: NetworkTopology) -> Self {
        TopologyDoc {
            state_vertices: t.state_vertices,
            input_vertices: t.input_vertices,
            edges: t.edges,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LocalSubsystem {
    /// Index of the center in the state vertex list.
    pub center: usize,
    /// State vertices with an edge into the center, in declaration order.
    pub state_parents: Vec<usize>,
    /// Input vertices with an edge into the center, in declaration order.
    pub input_parents: Vec<usize>,
    /// Center dimension plus all parent dimensions.
    pub local_dim: usize,
}

impl LocalSubsystem {
    pub fn state_parent_ids<'a>(&self, t: &'a NetworkTopology) -> Vec<&'a str> {
        self.state_parents
            .iter()
            .map(|&i| t.state_vertices[i].id.as_str())
            .collect()
    }

    pub fn input_parent_ids<'a>(&self, t: &'a NetworkTopology) -> Vec<&'a str> {
        self.input_parents
            .iter()
            .map(|&i| t.input_vertices[i].id.as_str())
            .collect()
    }

    /// Parents in the order their rows are stacked: state parents, then inputs.
    pub fn parents(&self) -> impl Iterator<Item = VertexRef> + '_ {
        self.state_parents
            .iter()
            .map(|&i| VertexRef::State(i))
            .chain(self.input_parents.iter().map(|&i| VertexRef::Input(i)))
    }
}

impl NetworkTopology {
    /// Builds a topology without validating it; see [`NetworkTopology::validate`].
    pub fn new(
        state_vertices: Vec<Vertex>,
        input_vertices: Vec<Vertex>,
        edges: Vec<(String, String)>,
    ) -> Self {
        let mut index = HashMap::new();
        for (i, v) in state_vertices.iter().enumerate() {
            index.entry(v.id.clone()).or_insert(VertexRef::State(i));
        }
        for (i, v) in input_vertices.iter().enumerate() {
            index.entry(v.id.clone()).or_insert(VertexRef::Input(i));
        }

        let mut state_parents = vec![Vec::new(); state_vertices.len()];
        let mut input_parents = vec![Vec::new(); state_vertices.len()];
        let mut edge_lookup = HashMap::new();
        for (k, (src, dst)) in edges.iter().enumerate() {
            let (Some(&s), Some(&VertexRef::State(d))) = (index.get(src), index.get(dst)) else {
                continue;
            };
            if s == VertexRef::State(d) || edge_lookup.contains_key(&(s, d)) {
                continue;
            }
            edge_lookup.insert((s, d), k);
            match s {
                VertexRef::State(i) => state_parents[d].push(i),
                VertexRef::Input(i) => input_parents[d].push(i),
            }
        }
        for p in state_parents.iter_mut().chain(input_parents.iter_mut()) {
            p.sort_unstable();
        }

        NetworkTopology {
            state_vertices,
            input_vertices,
            edges,
            index,
            state_parents,
            input_parents,
            edge_lookup,
        }
    }

    /// Parses and validates, failing on the first batch of violations.
    pub fn from_json(text: &str) -> Result<Self> {
        let t: NetworkTopology = serde_json::from_str(text)?;
        t.ensure_valid()?;
        Ok(t)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("topology serializes")
    }

    pub fn ensure_valid(&self) -> Result<()> {
        let violations = self.validate();
        if violations.is_empty() {
            return Ok(());
        }
        let msg = violations
            .iter()
            .map(ToString::to_string)
            .collect::<Vec<_>>()
            .join("; ");
        Err(Error::InvalidTopology(msg))
    }

    pub fn state_vertices(&self) -> &[Vertex] {
        &self.state_vertices
    }

    pub fn input_vertices(&self) -> &[Vertex] {
        &self.input_vertices
    }

    pub fn edges(&self) -> &[(String, String)] {
        &self.edges
    }

    pub fn lookup(&self, id: &str) -> Option<VertexRef> {
        self.index.get(id).copied()
    }

    pub fn state_index(&self, id: &str) -> Result<usize> {
        match self.lookup(id) {
            Some(VertexRef::State(i)) => Ok(i),
            Some(VertexRef::Input(_)) => Err(Error::NotAStateVertex(id.to_string())),
            None => Err(Error::UnknownVertex(id.to_string())),
        }
    }

    pub fn vertex(&self, r: VertexRef) -> &Vertex {
        match r {
            VertexRef::State(i) => &self.state_vertices[i],
            VertexRef::Input(i) => &self.input_vertices[i],
        }
    }

    /// Position in [`NetworkTopology::edges`] of the edge `source → target`.
    pub fn edge_position(&self, source: VertexRef, target: usize) -> Option<usize> {
        self.edge_lookup.get(&(source, target)).copied()
    }

    /// Total state dimension `n`.
    pub fn state_dim(&self) -> usize {
        self.state_vertices.iter().map(|v| v.dim).sum()
    }

    /// Total input dimension `l`.
    pub fn input_dim(&self) -> usize {
        self.input_vertices.iter().map(|v| v.dim).sum()
    }

    /// First row of each state vertex in a stacked state vector.
    pub fn state_offsets(&self) -> Vec<usize> {
        offsets(&self.state_vertices)
    }

    /// First row of each input vertex in a stacked input vector.
    pub fn input_offsets(&self) -> Vec<usize> {
        offsets(&self.input_vertices)
    }

    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let mut seen = HashMap::new();
        for v in self.state_vertices.iter().chain(&self.input_vertices) {
            if seen.insert(v.id.as_str(), ()).is_some() {
                out.push(Violation::DuplicateVertexId {
                    vertex: v.id.clone(),
                });
            }
            if v.dim == 0 {
                out.push(Violation::ZeroDimension {
                    vertex: v.id.clone(),
                });
            }
        }

        let mut edges_seen = HashMap::new();
        for (src, dst) in &self.edges {
            if let Some(missing) = [src, dst].into_iter().find(|id| self.lookup(id).is_none()) {
                out.push(Violation::UnknownEdgeEndpoint {
                    source: src.clone(),
                    target: dst.clone(),
                    missing: missing.clone(),
                });
                continue;
            }
            if src == dst {
                out.push(Violation::SelfLoop {
                    vertex: src.clone(),
                });
                continue;
            }
            if let Some(VertexRef::Input(_)) = self.lookup(dst) {
                out.push(Violation::InputVertexHasInEdge {
                    vertex: dst.clone(),
                    source: src.clone(),
                });
                continue;
            }
            if edges_seen
                .insert((src.as_str(), dst.as_str()), ())
                .is_some()
            {
                out.push(Violation::DuplicateEdge {
                    source: src.clone(),
                    target: dst.clone(),
                });
            }
        }
        out
    }

    pub fn local_subsystem_at(&self, center: usize) -> LocalSubsystem {
        let state_parents = self.state_parents[center].clone();
        let input_parents = self.input_parents[center].clone();
        let local_dim = self.state_vertices[center].dim
            + state_parents
                .iter()
                .map(|&i| self.state_vertices[i].dim)
                .sum::<usize>()
            + input_parents
                .iter()
                .map(|&i| self.input_vertices[i].dim)
                .sum::<usize>();
        LocalSubsystem {
            center,
            state_parents,
            input_parents,
            local_dim,
        }
    }

    pub fn local_subsystem(&self, id: &str) -> Result<LocalSubsystem> {
        Ok(self.local_subsystem_at(self.state_index(id)?))
    }

    /// Largest local subsystem dimension; the shortest simulation length at
    /// which every per-node regression can be determined.
    pub fn max_local_dim(&self) -> Result<usize> {
        (0..self.state_vertices.len())
            .map(|j| self.local_subsystem_at(j).local_dim)
            .max()
            .ok_or(Error::EmptyNetwork)
    }
}

fn offsets(vs: &[Vertex]) -> Vec<usize> {
    vs.iter()
        .scan(0, |acc, v| {
            let start = *acc;
            *acc += v.dim;
            Some(start)
        })
        .collect()
}
