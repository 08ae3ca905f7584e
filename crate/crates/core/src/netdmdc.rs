//! Network DMD with control.
//!
//! Each state vertex `v_j` is identified from its local subsystem only: its
//! own rows of `Z`/`Y` and the rows of its parents (state parents from `Z`,
//! then input parents from `Γ`). A per-node DMDc regression yields the row
//! strip `[A_jj | A_j,parents | B_j,parents]`, and the strips are composed
//! into block matrices that are exactly zero wherever the graph has no edge.

use std::ops::Range;

use indexmap::IndexMap;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dmdcore::{dmdc_exact, dmdc_reduced, ExactLinearModel, ReducedLinearModel};
use crate::numkernel::{from_rows, to_rows, Conditioning, Matrix, TruncationRule};
use crate::sysmodel::{edge_key, TrajectoryData};
use crate::topology::{NetworkTopology, VertexRef};
use crate::{Error, Result};

/// Regression data of one local subsystem.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalData {
    pub center: String,
    pub z: Matrix,
    pub y: Matrix,
    pub gamma: Matrix,
    /// Rows of `gamma` owned by each parent, in stacking order.
    pub parent_rows: IndexMap<String, Range<usize>>,
}

/// Checks that the trajectory's row blocks are exactly the topology's vertices.
pub fn check_rows(t: &NetworkTopology, traj: &TrajectoryData) -> Result<()> {
    let same = |blocks: &[crate::sysmodel::RowBlock], vs: &[crate::topology::Vertex]| {
        blocks.len() == vs.len()
            && blocks
                .iter()
                .zip(vs)
                .all(|(b, v)| b.id == v.id && b.len == v.dim)
    };
    if !same(&traj.state_rows, t.state_vertices()) {
        return Err(Error::RowRangeMismatch(
            "trajectory state rows do not match the topology's state vertices".into(),
        ));
    }
    if !same(&traj.input_rows, t.input_vertices()) {
        return Err(Error::RowRangeMismatch(
            "trajectory input rows do not match the topology's input vertices".into(),
        ));
    }
    Ok(())
}

fn local_data_at(t: &NetworkTopology, traj: &TrajectoryData, j: usize) -> LocalData {
    let local = t.local_subsystem_at(j);
    let center = &traj.state_rows[j];
    let m = traj.len();

    let mut parent_rows = IndexMap::new();
    let mut next = 0;
    for p in local.parents() {
        let dim = t.vertex(p).dim;
        parent_rows.insert(t.vertex(p).id.clone(), next..next + dim);
        next += dim;
    }
    let mut gamma = Matrix::zeros(next, m);
    for (p, rows) in local.parents().zip(parent_rows.values()) {
        let src = match p {
            VertexRef::State(i) => traj.z.rows_range(traj.state_rows[i].range()),
            VertexRef::Input(i) => traj.gamma.rows_range(traj.input_rows[i].range()),
        };
        gamma.rows_range_mut(rows.clone()).copy_from(&src);
    }

    LocalData {
        center: center.id.clone(),
        z: traj.z.rows_range(center.range()).into_owned(),
        y: traj.y.rows_range(center.range()).into_owned(),
        gamma,
        parent_rows,
    }
}

pub fn build_local_data(t: &NetworkTopology, traj: &TrajectoryData, id: &str) -> Result<LocalData> {
    let j = t.state_index(id)?;
    check_rows(t, traj)?;
    Ok(local_data_at(t, traj, j))
}

/// Outcome of one node's regression.
#[derive(Debug, Clone)]
pub struct NodeFit {
    pub center: usize,
    pub local: LocalData,
    pub fit: std::result::Result<ExactLinearModel, String>,
}

/// Per-node record kept with an identified network model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeDiagnostics {
    pub local_dim: usize,
    pub snapshots: usize,
    pub conditioning: Option<Conditioning>,
    /// Ranks kept by the two SVDs of a reduced identification.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input_rank: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_rank: Option<usize>,
    /// Set when the node could not be identified; its blocks are then zero.
    pub failure: Option<String>,
}

impl NodeDiagnostics {
    fn new(local: &LocalData) -> Self {
        NodeDiagnostics {
            local_dim: local.z.nrows() + local.gamma.nrows(),
            snapshots: local.z.ncols(),
            conditioning: None,
            input_rank: None,
            output_rank: None,
            failure: None,
        }
    }
}

/// Runs the exact DMDc regression for state vertex `j`.
pub fn identify_node(t: &NetworkTopology, traj: &TrajectoryData, j: usize, rcond: f64) -> NodeFit {
    let local = local_data_at(t, traj, j);
    let fit = dmdc_exact(&local.z, &local.y, &local.gamma, rcond).map_err(|e| e.to_string());
    NodeFit {
        center: j,
        local,
        fit,
    }
}

/// Block key `(target, source)`.
pub type BlockKey = (String, String);

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkModel {
    pub topology: NetworkTopology,
    /// Self blocks `(v_j, v_j)` and state-edge blocks `(v_j, v_i)`.
    pub blocks_a: IndexMap<BlockKey, Matrix>,
    /// Input-edge blocks `(v_j, e_i)`.
    pub blocks_b: IndexMap<BlockKey, Matrix>,
    pub assembled_a: Matrix,
    pub assembled_b: Matrix,
    pub nodes: IndexMap<String, NodeDiagnostics>,
}

impl NetworkModel {
    /// True when some node failed and carries zero blocks.
    pub fn partial(&self) -> bool {
        self.nodes.values().any(|d| d.failure.is_some())
    }

    /// Smallest per-node `σ_min/σ_max` over identified nodes.
    pub fn min_cond_ratio(&self) -> Option<f64> {
        self.nodes
            .values()
            .filter_map(|d| d.conditioning.map(|c| c.ratio()))
            .reduce(f64::min)
    }

    pub fn block_a(&self, target: &str, source: &str) -> Option<&Matrix> {
        self.blocks_a.get(&(target.to_string(), source.to_string()))
    }

    pub fn block_b(&self, target: &str, source: &str) -> Option<&Matrix> {
        self.blocks_b.get(&(target.to_string(), source.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&NetworkModelDoc::from(self)).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: NetworkModelDoc = serde_json::from_str(text)?;
        doc.try_into()
    }
}

/// Entries of the assembled matrices that disagree with the block maps or
/// sit off the graph's edges while nonzero. Empty for a well-formed model.
pub fn structural_violations(
    t: &NetworkTopology,
    blocks_a: &IndexMap<BlockKey, Matrix>,
    blocks_b: &IndexMap<BlockKey, Matrix>,
    assembled_a: &Matrix,
    assembled_b: &Matrix,
) -> Vec<String> {
    let xoff = t.state_offsets();
    let uoff = t.input_offsets();
    let mut out = Vec::new();
    for (j, target) in t.state_vertices().iter().enumerate() {
        let sources = t
            .state_vertices()
            .iter()
            .enumerate()
            .map(|(i, v)| (VertexRef::State(i), v, xoff[i], blocks_a, assembled_a))
            .chain(
                t.input_vertices()
                    .iter()
                    .enumerate()
                    .map(|(i, v)| (VertexRef::Input(i), v, uoff[i], blocks_b, assembled_b)),
            );
        for (r, source, col, blocks, assembled) in sources {
            let view = assembled.view((xoff[j], col), (target.dim, source.dim));
            let key = (target.id.clone(), source.id.clone());
            let expected = r == VertexRef::State(j) || t.edge_position(r, j).is_some();
            match (expected, blocks.get(&key)) {
                (true, Some(b)) if view == *b => {}
                (true, _) => out.push(format!(
                    "block {} disagrees with the assembly",
                    edge_key(&source.id, &target.id)
                )),
                (false, Some(_)) => out.push(format!(
                    "block {} has no edge",
                    edge_key(&source.id, &target.id)
                )),
                (false, None) if view.iter().any(|&x| x != 0.0) => out.push(format!(
                    "nonzero entries at non-edge {}",
                    edge_key(&source.id, &target.id)
                )),
                (false, None) => {}
            }
        }
    }
    out
}

/// Composes per-node fits into the network model. Fits may arrive in any
/// order; missing or failed nodes get zero blocks and a diagnostics entry.
pub fn assemble(t: &NetworkTopology, fits: Vec<NodeFit>) -> NetworkModel {
    let states = t.state_vertices();
    let mut by_node: Vec<Option<NodeFit>> = vec![None; states.len()];
    for f in fits {
        let slot = f.center;
        by_node[slot] = Some(f);
    }

    let xoff = t.state_offsets();
    let uoff = t.input_offsets();
    let mut blocks_a = IndexMap::new();
    let mut blocks_b = IndexMap::new();
    let mut assembled_a = Matrix::zeros(t.state_dim(), t.state_dim());
    let mut assembled_b = Matrix::zeros(t.state_dim(), t.input_dim());
    let mut nodes = IndexMap::new();

    for (j, v) in states.iter().enumerate() {
        let local = t.local_subsystem_at(j);
        let (strip_a, strip_b, diag) = match &by_node[j] {
            Some(NodeFit {
                local: data,
                fit: Ok(model),
                ..
            }) => {
                let mut d = NodeDiagnostics::new(data);
                d.conditioning = Some(model.conditioning);
                (
                    model.a.clone(),
                    model.b.clone().unwrap_or_else(|| Matrix::zeros(v.dim, 0)),
                    d,
                )
            }
            other => {
                let failure = match other {
                    Some(NodeFit { fit: Err(e), .. }) => e.clone(),
                    _ => "node was not identified".to_string(),
                };
                let mut d = NodeDiagnostics {
                    local_dim: local.local_dim,
                    snapshots: 0,
                    conditioning: None,
                    input_rank: None,
                    output_rank: None,
                    failure: Some(failure),
                };
                if let Some(f) = other {
                    d.snapshots = f.local.z.ncols();
                }
                let parents = local.local_dim - v.dim;
                (
                    Matrix::zeros(v.dim, v.dim),
                    Matrix::zeros(v.dim, parents),
                    d,
                )
            }
        };

        assembled_a
            .view_mut((xoff[j], xoff[j]), (v.dim, v.dim))
            .copy_from(&strip_a);
        blocks_a.insert((v.id.clone(), v.id.clone()), strip_a);
        let mut col = 0;
        for p in local.parents() {
            let src = t.vertex(p);
            let block = strip_b.columns(col, src.dim).into_owned();
            col += src.dim;
            let key = (v.id.clone(), src.id.clone());
            match p {
                VertexRef::State(i) => {
                    assembled_a
                        .view_mut((xoff[j], xoff[i]), block.shape())
                        .copy_from(&block);
                    blocks_a.insert(key, block);
                }
                VertexRef::Input(i) => {
                    assembled_b
                        .view_mut((xoff[j], uoff[i]), block.shape())
                        .copy_from(&block);
                    blocks_b.insert(key, block);
                }
            }
        }
        nodes.insert(v.id.clone(), diag);
    }

    let violations = structural_violations(t, &blocks_a, &blocks_b, &assembled_a, &assembled_b);
    assert!(
        violations.is_empty(),
        "assembly broke the block structure: {violations:?}"
    );
    NetworkModel {
        topology: t.clone(),
        blocks_a,
        blocks_b,
        assembled_a,
        assembled_b,
        nodes,
    }
}

/// Identifies every node (in parallel) and assembles the network model.
pub fn network_dmdc_exact(
    t: &NetworkTopology,
    traj: &TrajectoryData,
    rcond: f64,
) -> Result<NetworkModel> {
    t.ensure_valid()?;
    if t.state_vertices().is_empty() {
        return Err(Error::EmptyNetwork);
    }
    check_rows(t, traj)?;
    let fits: Vec<NodeFit> = (0..t.state_vertices().len())
        .into_par_iter()
        .map(|j| identify_node(t, traj, j, rcond))
        .collect();
    Ok(assemble(t, fits))
}

#[derive(Serialize, Deserialize)]
struct NetworkModelDoc {
    topology: NetworkTopology,
    blocks_a: IndexMap<String, Vec<Vec<f64>>>,
    blocks_b: IndexMap<String, Vec<Vec<f64>>>,
    #[serde(rename = "A")]
    a: Vec<Vec<f64>>,
    #[serde(rename = "B")]
    b: Vec<Vec<f64>>,
    nodes: IndexMap<String, NodeDiagnostics>,
    partial: bool,
}

fn keyed_rows(blocks: &IndexMap<BlockKey, Matrix>) -> IndexMap<String, Vec<Vec<f64>>> {
    blocks
        .iter()
        .map(|((dst, src), m)| (edge_key(src, dst), to_rows(m)))
        .collect()
}

impl From<&NetworkModel> for NetworkModelDoc {
    fn from(m: &NetworkModel) -> Self {
        NetworkModelDoc {
            topology: m.topology.clone(),
            blocks_a: keyed_rows(&m.blocks_a),
            blocks_b: keyed_rows(&m.blocks_b),
            a: to_rows(&m.assembled_a),
            b: to_rows(&m.assembled_b),
            nodes: m.nodes.clone(),
            partial: m.partial(),
        }
    }
}

fn rows_with_shape(rows: &[Vec<f64>], shape: (usize, usize)) -> Result<Matrix> {
    // A matrix with no rows serializes as `[]`, losing its column count.
    if rows.is_empty() && shape.0 == 0 {
        return Ok(Matrix::zeros(0, shape.1));
    }
    let m = from_rows(rows)?;
    if m.shape() != shape {
        return Err(Error::DimensionMismatch(format!(
            "expected a {}x{} matrix, found {}x{}",
            shape.0,
            shape.1,
            m.nrows(),
            m.ncols()
        )));
    }
    Ok(m)
}

fn split_key(key: &str) -> Result<BlockKey> {
    let (src, dst) = key
        .split_once('→')
        .ok_or_else(|| Error::Parse(format!("block key `{key}` is not `src→dst`")))?;
    Ok((dst.to_string(), src.to_string()))
}

impl TryFrom<NetworkModelDoc> for NetworkModel {
    type Error = Error;

    fn try_from(doc: NetworkModelDoc) -> Result<Self> {
        let t = doc.topology;
        t.ensure_valid()?;
        let dim = |id: &str| {
            t.lookup(id)
                .map(|r| t.vertex(r).dim)
                .ok_or_else(|| Error::UnknownVertex(id.to_string()))
        };
        let read_blocks =
            |src: IndexMap<String, Vec<Vec<f64>>>| -> Result<IndexMap<BlockKey, Matrix>> {
                let mut out = IndexMap::new();
                for (key, rows) in src {
                    let k = split_key(&key)?;
                    let m = rows_with_shape(&rows, (dim(&k.0)?, dim(&k.1)?))?;
                    out.insert(k, m);
                }
                Ok(out)
            };
        let blocks_a = read_blocks(doc.blocks_a)?;
        let blocks_b = read_blocks(doc.blocks_b)?;
        let assembled_a = rows_with_shape(&doc.a, (t.state_dim(), t.state_dim()))?;
        let assembled_b = rows_with_shape(&doc.b, (t.state_dim(), t.input_dim()))?;
        let violations =
            structural_violations(&t, &blocks_a, &blocks_b, &assembled_a, &assembled_b);
        if let Some(v) = violations.first() {
            return Err(Error::InvalidSystem(v.clone()));
        }
        Ok(NetworkModel {
            topology: t,
            blocks_a,
            blocks_b,
            assembled_a,
            assembled_b,
            nodes: doc.nodes,
        })
    }
}

/// Reduced network model in the per-node coordinates `g̃_j = Û_jᵀ g_j`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedNetworkModel {
    pub topology: NetworkTopology,
    /// `Û_j` per state vertex, `n_j × r_j`.
    pub u_hat: IndexMap<String, Matrix>,
    /// `Ã_jj` and cross blocks `Ã_jk = Ā_jk Û_k`, each `r_j × r_k`.
    pub blocks_a: IndexMap<BlockKey, Matrix>,
    /// `B̃_jℓ`, each `r_j × l_ℓ`.
    pub blocks_b: IndexMap<BlockKey, Matrix>,
    pub assembled_a: Matrix,
    pub assembled_b: Matrix,
    pub nodes: IndexMap<String, NodeDiagnostics>,
}

impl ReducedNetworkModel {
    pub fn partial(&self) -> bool {
        self.nodes.values().any(|d| d.failure.is_some())
    }

    /// Block-diagonal `Û = diag(Û_1, …, Û_N)`.
    pub fn projector(&self) -> Matrix {
        let rows: usize = self.u_hat.values().map(|u| u.nrows()).sum();
        let cols: usize = self.u_hat.values().map(|u| u.ncols()).sum();
        let mut out = Matrix::zeros(rows, cols);
        let (mut r, mut c) = (0, 0);
        for u in self.u_hat.values() {
            out.view_mut((r, c), u.shape()).copy_from(u);
            r += u.nrows();
            c += u.ncols();
        }
        out
    }

    /// Full-space operators `(Û Ã Ûᵀ, Û B̃)`.
    pub fn lift(&self) -> (Matrix, Matrix) {
        let u = self.projector();
        (
            &u * &self.assembled_a * u.transpose(),
            &u * &self.assembled_b,
        )
    }
}

#[derive(Serialize)]
struct ReducedNetworkModelDoc<'a> {
    topology: &'a NetworkTopology,
    u_hat: IndexMap<&'a str, Vec<Vec<f64>>>,
    blocks_a: IndexMap<String, Vec<Vec<f64>>>,
    blocks_b: IndexMap<String, Vec<Vec<f64>>>,
    #[serde(rename = "A")]
    a: Vec<Vec<f64>>,
    #[serde(rename = "B")]
    b: Vec<Vec<f64>>,
    nodes: &'a IndexMap<String, NodeDiagnostics>,
    partial: bool,
}

impl ReducedNetworkModel {
    pub fn to_json(&self) -> String {
        let doc = ReducedNetworkModelDoc {
            topology: &self.topology,
            u_hat: self
                .u_hat
                .iter()
                .map(|(k, u)| (k.as_str(), to_rows(u)))
                .collect(),
            blocks_a: keyed_rows(&self.blocks_a),
            blocks_b: keyed_rows(&self.blocks_b),
            a: to_rows(&self.assembled_a),
            b: to_rows(&self.assembled_b),
            nodes: &self.nodes,
            partial: self.partial(),
        };
        serde_json::to_string(&doc).expect("model serializes")
    }
}

/// Reduced-order network DMDc. A node whose regression fails keeps
/// `Û_j = I` and zero blocks.
pub fn network_dmdc_reduced(
    t: &NetworkTopology,
    traj: &TrajectoryData,
    input_rule: TruncationRule,
    output_rule: TruncationRule,
) -> Result<ReducedNetworkModel> {
    t.ensure_valid()?;
    if t.state_vertices().is_empty() {
        return Err(Error::EmptyNetwork);
    }
    check_rows(t, traj)?;
    input_rule.validate()?;
    output_rule.validate()?;

    let states = t.state_vertices();
    let fits: Vec<(LocalData, std::result::Result<ReducedLinearModel, String>)> = (0..states.len())
        .into_par_iter()
        .map(|j| {
            let local = local_data_at(t, traj, j);
            let fit = dmdc_reduced(&local.z, &local.y, &local.gamma, input_rule, output_rule)
                .map(|(model, _)| model)
                .map_err(|e| e.to_string());
            (local, fit)
        })
        .collect();

    let u_hat: IndexMap<String, Matrix> = states
        .iter()
        .zip(&fits)
        .map(|(v, (_, fit))| {
            let u = match fit {
                Ok(m) => m.u_hat.clone(),
                Err(_) => Matrix::identity(v.dim, v.dim),
            };
            (v.id.clone(), u)
        })
        .collect();
    let ranks: Vec<usize> = u_hat.values().map(|u| u.ncols()).collect();
    let mut roff = Vec::with_capacity(ranks.len());
    let mut total = 0;
    for r in &ranks {
        roff.push(total);
        total += r;
    }
    let uoff = t.input_offsets();

    let mut blocks_a = IndexMap::new();
    let mut blocks_b = IndexMap::new();
    let mut assembled_a = Matrix::zeros(total, total);
    let mut assembled_b = Matrix::zeros(total, t.input_dim());
    let mut nodes = IndexMap::new();

    for (j, (v, (local, fit))) in states.iter().zip(&fits).enumerate() {
        let mut diag = NodeDiagnostics::new(local);
        let (a_jj, strip) = match fit {
            Ok(m) => {
                diag.input_rank = Some(m.p);
                diag.output_rank = Some(m.r);
                let strip = m.b_tilde.clone().expect("dmdc has an input part");
                (m.a_tilde.clone(), strip)
            }
            Err(e) => {
                diag.failure = Some(e.clone());
                (
                    Matrix::zeros(ranks[j], ranks[j]),
                    Matrix::zeros(ranks[j], local.gamma.nrows()),
                )
            }
        };
        assembled_a
            .view_mut((roff[j], roff[j]), a_jj.shape())
            .copy_from(&a_jj);
        blocks_a.insert((v.id.clone(), v.id.clone()), a_jj);

        for (p, rows) in t
            .local_subsystem_at(j)
            .parents()
            .zip(local.parent_rows.values())
        {
            let src = t.vertex(p);
            let bar = strip.columns(rows.start, rows.len());
            let key = (v.id.clone(), src.id.clone());
            match p {
                VertexRef::State(k) => {
                    let block = bar * &u_hat[k];
                    assembled_a
                        .view_mut((roff[j], roff[k]), block.shape())
                        .copy_from(&block);
                    blocks_a.insert(key, block);
                }
                VertexRef::Input(i) => {
                    let block = bar.into_owned();
                    assembled_b
                        .view_mut((roff[j], uoff[i]), block.shape())
                        .copy_from(&block);
                    blocks_b.insert(key, block);
                }
            }
        }
        nodes.insert(v.id.clone(), diag);
    }

    Ok(ReducedNetworkModel {
        topology: t.clone(),
        u_hat,
        blocks_a,
        blocks_b,
        assembled_a,
        assembled_b,
        nodes,
    })
}

/// Anything that carries an identified `(A, B)` pair.
pub trait IdentifiedModel {
    fn a(&self) -> &Matrix;
    fn b(&self) -> Option<&Matrix>;
}

impl IdentifiedModel for NetworkModel {
    fn a(&self) -> &Matrix {
        &self.assembled_a
    }
    fn b(&self) -> Option<&Matrix> {
        Some(&self.assembled_b)
    }
}

impl IdentifiedModel for ExactLinearModel {
    fn a(&self) -> &Matrix {
        &self.a
    }
    fn b(&self) -> Option<&Matrix> {
        self.b.as_ref()
    }
}

/// `‖[A B] − [A_true B_true]‖_F`. A missing `B` on either side counts as
/// zeros of the other side's shape; the `B` term vanishes when both are missing.
pub fn model_error(
    model: &impl IdentifiedModel,
    truth_a: &Matrix,
    truth_b: Option<&Matrix>,
) -> Result<f64> {
    let a = model.a();
    if a.shape() != truth_a.shape() {
        return Err(Error::DimensionMismatch(format!(
            "model A is {:?}, truth is {:?}",
            a.shape(),
            truth_a.shape()
        )));
    }
    let b_sq = match (model.b(), truth_b) {
        (None, None) => 0.0,
        (Some(b), None) | (None, Some(b)) => b.norm_squared(),
        (Some(b), Some(tb)) => {
            if b.shape() != tb.shape() {
                return Err(Error::DimensionMismatch(format!(
                    "model B is {:?}, truth is {:?}",
                    b.shape(),
                    tb.shape()
                )));
            }
            (b - tb).norm_squared()
        }
    };
    let total = ((a - truth_a).norm_squared() + b_sq).sqrt();
    if !total.is_finite() {
        return Err(Error::NonFiniteEntry { row: 0, col: 0 });
    }
    Ok(total)
}
