//! Ground-truth linear network dynamics.
//!
//! A [`LinearNetworkSystem`] attaches a coefficient block to every state
//! vertex (its dependence on itself) and to every edge. One step of the
//! dynamics is
//!
//! ```text
//! x'_j = S_j x_j + Σ_{w → v_j} E_{w,j} x_w
//! ```
//!
//! where `x_w` is a state or an input component.

mod generate;
mod trajectory;

use indexmap::IndexMap;
use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::numkernel::{from_rows, to_rows, Matrix};
use crate::topology::{NetworkTopology, VertexRef};
use crate::{Error, Result};

pub use generate::{
    derive_seed, gen_circular, gen_erdos_renyi, generate, random_inputs, random_state, seeded_rng,
    Family, GeneratorConfig, Interval, SimRng,
};
pub use trajectory::{RowBlock, TrajectoryData};

pub type Vector = DVector<f64>;

/// Key used for edge blocks in JSON documents.
pub fn edge_key(source: &str, target: &str) -> String {
    format!("{source}→{target}")
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearNetworkSystem {
    topology: NetworkTopology,
    self_blocks: Vec<Matrix>,
    edge_blocks: Vec<Matrix>,
}

impl LinearNetworkSystem {
    /// `self_blocks[j]` belongs to state vertex `j`; `edge_blocks[k]` to
    /// `topology.edges()[k]`.
    pub fn new(
        topology: NetworkTopology,
        self_blocks: Vec<Matrix>,
        edge_blocks: Vec<Matrix>,
    ) -> Result<Self> {
        topology.ensure_valid()?;
        let states = topology.state_vertices();
        if self_blocks.len() != states.len() {
            return Err(Error::InvalidSystem(format!(
                "{} self blocks for {} state vertices",
                self_blocks.len(),
                states.len()
            )));
        }
        for (v, b) in states.iter().zip(&self_blocks) {
            if b.shape() != (v.dim, v.dim) {
                return Err(Error::InvalidSystem(format!(
                    "self block of `{}` is {:?}, expected {:?}",
                    v.id,
                    b.shape(),
                    (v.dim, v.dim)
                )));
            }
        }
        if edge_blocks.len() != topology.edges().len() {
            return Err(Error::InvalidSystem(format!(
                "{} edge blocks for {} edges",
                edge_blocks.len(),
                topology.edges().len()
            )));
        }
        for ((src, dst), b) in topology.edges().iter().zip(&edge_blocks) {
            let rows = topology
                .vertex(topology.lookup(dst).expect("validated"))
                .dim;
            let cols = topology
                .vertex(topology.lookup(src).expect("validated"))
                .dim;
            if b.shape() != (rows, cols) {
                return Err(Error::InvalidSystem(format!(
                    "edge block {} is {:?}, expected {:?}",
                    edge_key(src, dst),
                    b.shape(),
                    (rows, cols)
                )));
            }
        }
        for b in self_blocks.iter().chain(&edge_blocks) {
            crate::numkernel::check_finite(b)?;
        }
        Ok(LinearNetworkSystem {
            topology,
            self_blocks,
            edge_blocks,
        })
    }

    /// A system whose every block is zero.
    pub fn zeros(topology: NetworkTopology) -> Result<Self> {
        let self_blocks = topology
            .state_vertices()
            .iter()
            .map(|v| Matrix::zeros(v.dim, v.dim))
            .collect();
        let edge_blocks = topology
            .edges()
            .iter()
            .map(|(s, d)| {
                let rows = topology.lookup(d).map_or(0, |r| topology.vertex(r).dim);
                let cols = topology.lookup(s).map_or(0, |r| topology.vertex(r).dim);
                Matrix::zeros(rows, cols)
            })
            .collect();
        Self::new(topology, self_blocks, edge_blocks)
    }

    pub fn topology(&self) -> &NetworkTopology {
        &self.topology
    }

    pub fn self_block(&self, j: usize) -> &Matrix {
        &self.self_blocks[j]
    }

    pub fn edge_block(&self, k: usize) -> &Matrix {
        &self.edge_blocks[k]
    }

    pub fn state_dim(&self) -> usize {
        self.topology.state_dim()
    }

    pub fn input_dim(&self) -> usize {
        self.topology.input_dim()
    }

    /// One application of the transition map.
    pub fn step(&self, x: &Vector, u: &Vector) -> Result<Vector> {
        let (n, l) = (self.state_dim(), self.input_dim());
        if x.len() != n || u.len() != l {
            return Err(Error::DimensionMismatch(format!(
                "step expects state {n} / input {l}, got {} / {}",
                x.len(),
                u.len()
            )));
        }
        let t = &self.topology;
        let xoff = t.state_offsets();
        let uoff = t.input_offsets();
        let mut next = Vector::zeros(n);
        for (j, v) in t.state_vertices().iter().enumerate() {
            let mut acc = &self.self_blocks[j] * x.rows(xoff[j], v.dim);
            let local = t.local_subsystem_at(j);
            for parent in local.parents() {
                let block = &self.edge_blocks[t.edge_position(parent, j).expect("parent edge")];
                let dim = t.vertex(parent).dim;
                match parent {
                    VertexRef::State(i) => acc += block * x.rows(xoff[i], dim),
                    VertexRef::Input(i) => acc += block * u.rows(uoff[i], dim),
                }
            }
            next.rows_mut(xoff[j], v.dim).copy_from(&acc);
        }
        Ok(next)
    }

    /// Runs `inputs.ncols()` steps from `x0`. Column `k` of the result's `y`
    /// is the successor of column `k` of `z`, and `z` column `k+1` repeats it.
    pub fn simulate(&self, x0: &Vector, inputs: &Matrix) -> Result<TrajectoryData> {
        let (n, l, m) = (self.state_dim(), self.input_dim(), inputs.ncols());
        if m == 0 {
            return Err(Error::DimensionMismatch(
                "simulation needs at least one input column".into(),
            ));
        }
        if x0.len() != n || inputs.nrows() != l {
            return Err(Error::DimensionMismatch(format!(
                "simulate expects x0 of {n} and inputs with {l} rows, got {} and {}",
                x0.len(),
                inputs.nrows()
            )));
        }
        let mut z = Matrix::zeros(n, m);
        let mut y = Matrix::zeros(n, m);
        let mut x = x0.clone();
        for k in 0..m {
            z.set_column(k, &x);
            x = self.step(&x, &inputs.column(k).into_owned())?;
            y.set_column(k, &x);
        }
        TrajectoryData::new(
            z,
            y,
            inputs.clone(),
            RowBlock::layout(self.topology.state_vertices()),
            RowBlock::layout(self.topology.input_vertices()),
        )
    }

    /// The block matrices `(A, B)` with `x' = A x + B u`, zero wherever the
    /// topology has no edge.
    pub fn true_full_matrices(&self) -> (Matrix, Matrix) {
        let t = &self.topology;
        let xoff = t.state_offsets();
        let uoff = t.input_offsets();
        let mut a = Matrix::zeros(t.state_dim(), t.state_dim());
        let mut b = Matrix::zeros(t.state_dim(), t.input_dim());
        for (j, v) in t.state_vertices().iter().enumerate() {
            a.view_mut((xoff[j], xoff[j]), (v.dim, v.dim))
                .copy_from(&self.self_blocks[j]);
            for parent in t.local_subsystem_at(j).parents() {
                let block = &self.edge_blocks[t.edge_position(parent, j).expect("parent edge")];
                match parent {
                    VertexRef::State(i) => a.view_mut((xoff[j], xoff[i]), block.shape()),
                    VertexRef::Input(i) => b.view_mut((xoff[j], uoff[i]), block.shape()),
                }
                .copy_from(block);
            }
        }
        (a, b)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&SystemDoc::from(self)).expect("system serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: SystemDoc = serde_json::from_str(text)?;
        doc.try_into()
    }
}

#[derive(Serialize, Deserialize)]
struct SystemDoc {
    #[serde(flatten)]
    topology: NetworkTopology,
    self_blocks: IndexMap<String, Vec<Vec<f64>>>,
    edge_blocks: IndexMap<String, Vec<Vec<f64>>>,
}

impl From<&LinearNetworkSystem> for SystemDoc {
    fn from(s: &LinearNetworkSystem) -> Self {
        let t = &s.topology;
        SystemDoc {
            topology: t.clone(),
            self_blocks: t
                .state_vertices()
                .iter()
                .zip(&s.self_blocks)
                .map(|(v, b)| (v.id.clone(), to_rows(b)))
                .collect(),
            edge_blocks: t
                .edges()
                .iter()
                .zip(&s.edge_blocks)
                .map(|((src, dst), b)| (edge_key(src, dst), to_rows(b)))
                .collect(),
        }
    }
}

impl TryFrom<SystemDoc> for LinearNetworkSystem {
    type Error = Error;

    fn try_from(mut doc: SystemDoc) -> Result<Self> {
        let t = doc.topology;
        let take = |map: &mut IndexMap<String, Vec<Vec<f64>>>, key: String| {
            let rows = map
                .shift_remove(&key)
                .ok_or_else(|| Error::InvalidSystem(format!("missing block `{key}`")))?;
            from_rows(&rows)
        };
        let mut self_blocks = Vec::new();
        for v in t.state_vertices() {
            self_blocks.push(take(&mut doc.self_blocks, v.id.clone())?);
        }
        let mut edge_blocks = Vec::new();
        for (src, dst) in t.edges() {
            edge_blocks.push(take(&mut doc.edge_blocks, edge_key(src, dst))?);
        }
        if let Some(extra) = doc.self_blocks.keys().chain(doc.edge_blocks.keys()).next() {
            return Err(Error::InvalidSystem(format!(
                "block `{extra}` has no vertex or edge"
            )));
        }
        LinearNetworkSystem::new(t, self_blocks, edge_blocks)
    }
}
