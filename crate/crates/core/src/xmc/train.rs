//! Per-node one-vs-siblings training.

use std::collections::HashMap;

use rayon::prelude::*;

use super::solver::{train_logistic, LocalCsr, SolverParams};
use super::{Column, LabelSpace, LabelTree, SparseLayer, XmcModel};
use crate::error::{Error, Result};
use crate::text::{FeaturizerConfig, SparseVector};
use crate::types::BrandEntityId;

/// Bias of a node with no positive (resp. no negative) training instances.
const DEAD_BIAS: f32 = -10.0;
const SURE_BIAS: f32 = 10.0;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrainParams {
    /// L2 strength on the averaged logistic loss.
    pub reg: f64,
    /// Gradient-norm convergence tolerance.
    pub tol: f64,
    /// Newton iterations per classifier.
    pub max_epochs: usize,
    /// Weights with magnitude below this are dropped.
    pub prune_threshold: f32,
}

impl Default for TrainParams {
    fn default() -> Self {
        TrainParams {
            reg: 1e-8,
            tol: 1e-4,
            max_epochs: 100,
            prune_threshold: 0.01,
        }
    }
}

impl TrainParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.reg > 0.0) || !(self.tol > 0.0) || self.max_epochs == 0 || !(self.prune_threshold >= 0.0) {
            return Err(Error::invalid("train params", "reg, tol, max_epochs must be positive"));
        }
        Ok(())
    }

    fn solver(&self) -> SolverParams {
        SolverParams {
            reg: self.reg,
            tol: self.tol,
            max_iter: self.max_epochs,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, serde::Serialize)]
pub struct TrainReport {
    pub n_examples: usize,
    pub n_classifiers: usize,
    /// Nodes that saw no positive instance (scored with a constant low bias).
    pub nodes_without_positives: usize,
    /// Nodes that saw no negative instance (scored with a constant high bias).
    pub nodes_without_negatives: usize,
    /// Classifiers stopped by the iteration cap before reaching `tol`.
    pub unconverged: usize,
    pub max_grad_norm: f64,
    /// Newton iterations summed over all classifiers.
    pub newton_iterations: usize,
    pub nnz: usize,
}

pub(crate) struct NodeFit {
    pub col: Column,
    no_pos: bool,
    no_neg: bool,
    unconverged: bool,
    grad_norm: f64,
    iterations: usize,
}

/// Trains one classifier for every node in `tree`. Each example contributes
/// to the nodes on its gold path (positive) and to their siblings (negative).
pub fn train(
    data: &[(SparseVector, BrandEntityId)],
    space: &LabelSpace,
    tree: &LabelTree,
    featurizer: FeaturizerConfig,
    params: &TrainParams,
) -> Result<(XmcModel, TrainReport)> {
    params.validate()?;
    featurizer.validate()?;
    if data.is_empty() {
        return Err(Error::EmptyInput("training data"));
    }
    if tree.n_labels() != space.len() {
        return Err(Error::invalid("label tree", "tree and label space sizes differ"));
    }
    let slots = tree.label_slots();
    let mut gold = Vec::with_capacity(data.len());
    for (x, y) in data {
        if x.dim() != featurizer.dim {
            return Err(Error::DimMismatch {
                expected: featurizer.dim,
                found: x.dim(),
            });
        }
        let l = space
            .index_of(y)
            .ok_or_else(|| Error::invalid("training label", format!("{y} not in label space")))?;
        gold.push(slots[l]);
    }

    // path[l][i]: node of example i at layer l.
    let n_layers = tree.n_layers();
    let mut path = vec![gold];
    for l in (1..n_layers).rev() {
        let up = tree.parents(l);
        let prev: Vec<u32> = path.last().unwrap().iter().map(|&n| up[n as usize]).collect();
        path.push(prev);
    }
    path.reverse();

    let xs: Vec<&SparseVector> = data.iter().map(|(x, _)| x).collect();
    let mut report = TrainReport {
        n_examples: data.len(),
        ..Default::default()
    };
    let mut layers = Vec::with_capacity(n_layers);
    for l in 0..n_layers {
        let n_parents = if l == 0 { 1 } else { tree.n_nodes(l - 1) };
        let mut groups: Vec<Vec<usize>> = vec![Vec::new(); n_parents];
        for i in 0..data.len() {
            let p = if l == 0 { 0 } else { path[l - 1][i] as usize };
            groups[p].push(i);
        }
        let fits: Vec<Vec<NodeFit>> = groups
            .par_iter()
            .enumerate()
            .map(|(p, members)| {
                let targets: Vec<u32> = members.iter().map(|&i| path[l][i]).collect();
                fit_children(&xs, members, &targets, tree.children(l, p), params)
            })
            .collect();
        let mut cols = Vec::with_capacity(tree.n_nodes(l));
        for f in fits.into_iter().flatten() {
            report.n_classifiers += 1;
            report.nodes_without_positives += f.no_pos as usize;
            report.nodes_without_negatives += f.no_neg as usize;
            report.unconverged += f.unconverged as usize;
            report.max_grad_norm = report.max_grad_norm.max(f.grad_norm);
            report.newton_iterations += f.iterations;
            cols.push(f.col);
        }
        let layer = SparseLayer::from_columns(cols);
        report.nnz += layer.nnz();
        layers.push(layer);
    }
    log::info!(
        "trained {} classifiers on {} examples ({} without positives, {} unconverged, nnz {})",
        report.n_classifiers,
        report.n_examples,
        report.nodes_without_positives,
        report.unconverged,
        report.nnz
    );
    let model = XmcModel::new(space.labels().to_vec(), tree.clone(), layers, featurizer);
    Ok((model, report))
}

/// Fits the children of one parent on the instances routed to it.
/// `targets[k]` is the child node of `members[k]`.
fn fit_children(
    xs: &[&SparseVector],
    members: &[usize],
    targets: &[u32],
    children: std::ops::Range<usize>,
    params: &TrainParams,
) -> Vec<NodeFit> {
    let (csr, feats) = local_csr(members.iter().map(|&i| xs[i]));
    children
        .into_par_iter()
        .map(|c| {
            let y: Vec<bool> = targets.iter().map(|&t| t as usize == c).collect();
            fit_binary(&csr, &feats, &y, params)
        })
        .collect()
}

pub(crate) fn fit_binary(csr: &LocalCsr, feats: &[u32], y: &[bool], params: &TrainParams) -> NodeFit {
    let n_pos = y.iter().filter(|&&b| b).count();
    if n_pos == 0 {
        return NodeFit::constant(DEAD_BIAS, true, false);
    }
    if n_pos == y.len() {
        return NodeFit::constant(SURE_BIAS, false, true);
    }
    let sol = train_logistic(csr, y, &params.solver());
    let mut indices = Vec::new();
    let mut values = Vec::new();
    for (j, &w) in sol.w.iter().enumerate() {
        let w = w as f32;
        if w.abs() >= params.prune_threshold && w != 0.0 {
            indices.push(feats[j]);
            values.push(w);
        }
    }
    NodeFit {
        col: Column {
            indices,
            values,
            bias: sol.bias as f32,
        },
        no_pos: false,
        no_neg: false,
        unconverged: sol.grad_norm > params.tol,
        grad_norm: sol.grad_norm,
        iterations: sol.iterations,
    }
}

impl NodeFit {
    fn constant(bias: f32, no_pos: bool, no_neg: bool) -> Self {
        NodeFit {
            col: Column::constant(bias),
            no_pos,
            no_neg,
            unconverged: false,
            grad_norm: 0.0,
            iterations: 0,
        }
    }
}

/// Stacks vectors into a matrix over the compact space of features they
/// use; returns it with the local → global feature map (ascending).
pub(crate) fn local_csr<'a>(rows: impl Iterator<Item = &'a SparseVector> + Clone) -> (LocalCsr, Vec<u32>) {
    let mut feats: Vec<u32> = rows.clone().flat_map(|x| x.indices().iter().copied()).collect();
    feats.sort_unstable();
    feats.dedup();
    let local: HashMap<u32, u32> = feats.iter().enumerate().map(|(j, &f)| (f, j as u32)).collect();
    let mut m = LocalCsr {
        row_ptr: vec![0],
        n_cols: feats.len(),
        ..Default::default()
    };
    for x in rows {
        for (f, v) in x.iter() {
            m.cols.push(local[&f]);
            m.vals.push(v);
        }
        m.row_ptr.push(m.cols.len());
    }
    (m, feats)
}

/// Flat one-vs-all training: one column per label, every example a
/// negative for every label but its own.
pub(crate) fn train_flat(
    data: &[(SparseVector, usize)],
    n_labels: usize,
    params: &TrainParams,
) -> Result<SparseLayer> {
    params.validate()?;
    if data.is_empty() {
        return Err(Error::EmptyInput("training data"));
    }
    let (csr, feats) = local_csr(data.iter().map(|(x, _)| x));
    let cols: Vec<Column> = (0..n_labels)
        .into_par_iter()
        .map(|c| {
            let y: Vec<bool> = data.iter().map(|(_, t)| *t == c).collect();
            fit_binary(&csr, &feats, &y, params).col
        })
        .collect();
    Ok(SparseLayer::from_columns(cols))
}
