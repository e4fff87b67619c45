//! Row-major view of each layer grouped by parent node, so all siblings are
//! scored with one pass over the query features.

use rayon::prelude::*;

use super::cluster::LabelTree;
use super::layer::SparseLayer;
use crate::text::SparseVector;

/// Weights of one parent's children, keyed by feature.
#[derive(Clone, Debug, Default, PartialEq)]
struct Chunk {
    first_child: usize,
    n_children: usize,
    /// Sorted features with at least one nonzero child weight.
    rows: Vec<u32>,
    /// Row `r` owns `entries[start[r]..start[r + 1]]`.
    start: Vec<u32>,
    /// `dir[b]..dir[b + 1]` are the rows whose feature has high bits `b`.
    dir: Vec<u32>,
    shift: u32,
    /// `(child offset, weight)`.
    entries: Vec<(u32, f32)>,
}

impl Chunk {
    fn build(layer: &SparseLayer, children: std::ops::Range<usize>, dim: u32) -> Self {
        let mut triples: Vec<(u32, u32, f32)> = Vec::new();
        for (k, c) in children.clone().enumerate() {
            let (idx, val) = layer.column(c);
            triples.extend(idx.iter().zip(val).map(|(&f, &v)| (f, k as u32, v)));
        }
        triples.sort_unstable_by_key(|t| (t.0, t.1));
        assert!(triples.len() < u32::MAX as usize, "chunk too large");
        let mut chunk = Chunk {
            first_child: children.start,
            n_children: children.len(),
            ..Default::default()
        };
        chunk.entries.reserve(triples.len());
        for (f, k, v) in triples {
            if chunk.rows.last() != Some(&f) {
                chunk.rows.push(f);
                chunk.start.push(chunk.entries.len() as u32);
            }
            chunk.entries.push((k, v));
        }
        chunk.start.push(chunk.entries.len() as u32);
        // About two rows per bucket.
        let dim_bits = 32 - dim.saturating_sub(1).leading_zeros();
        let want = (chunk.rows.len() / 2).max(1).next_power_of_two().trailing_zeros();
        chunk.shift = dim_bits.saturating_sub(want);
        let n_buckets = (dim.saturating_sub(1) >> chunk.shift) as usize + 1;
        chunk.dir = Vec::with_capacity(n_buckets + 1);
        let mut r = 0;
        for b in 0..n_buckets {
            while r < chunk.rows.len() && ((chunk.rows[r] >> chunk.shift) as usize) < b {
                r += 1;
            }
            chunk.dir.push(r as u32);
        }
        chunk.dir.push(chunk.rows.len() as u32);
        chunk
    }

    #[inline]
    fn find(&self, f: u32) -> Option<usize> {
        let b = (f >> self.shift) as usize;
        let (s, e) = (*self.dir.get(b)? as usize, self.dir[b + 1] as usize);
        self.rows[s..e].iter().position(|&r| r == f).map(|p| s + p)
    }

    #[inline]
    fn add_row(&self, r: usize, xv: f32, out: &mut [f32]) {
        for &(k, w) in &self.entries[self.start[r] as usize..self.start[r + 1] as usize] {
            out[k as usize] += w * xv;
        }
    }
}

/// Per-layer chunks, one per parent node.
#[derive(Clone, Debug, Default, PartialEq)]
pub(crate) struct LayerIndex {
    chunks: Vec<Chunk>,
}

impl LayerIndex {
    pub(crate) fn build_all(tree: &LabelTree, layers: &[SparseLayer], dim: u32) -> Vec<LayerIndex> {
        layers
            .iter()
            .enumerate()
            .map(|(l, layer)| {
                let n_parents = if l == 0 { 1 } else { tree.n_nodes(l - 1) };
                LayerIndex {
                    chunks: (0..n_parents)
                        .into_par_iter()
                        .map(|p| Chunk::build(layer, tree.children(l, p), dim))
                        .collect(),
                }
            })
            .collect()
    }

    /// Margins `w_c · x + b_c` of every child of `parent`, written to `out`
    /// in child order. Each child's products are summed in ascending feature
    /// order, the same order [`SparseLayer::margin`] uses.
    pub(crate) fn margins(&self, parent: usize, x: &SparseVector, layer: &SparseLayer, out: &mut Vec<f32>) {
        let ch = &self.chunks[parent];
        out.clear();
        out.resize(ch.n_children, 0.0);
        let (xi, xv) = (x.indices(), x.values());
        let rows = &ch.rows;
        if xi.len() * 4 < rows.len() {
            for (k, &f) in xi.iter().enumerate() {
                if let Some(r) = ch.find(f) {
                    ch.add_row(r, xv[k], out);
                }
            }
        } else {
            let (mut a, mut b) = (0, 0);
            while a < rows.len() && b < xi.len() {
                match rows[a].cmp(&xi[b]) {
                    std::cmp::Ordering::Less => a += 1,
                    std::cmp::Ordering::Greater => b += 1,
                    std::cmp::Ordering::Equal => {
                        ch.add_row(a, xv[b], out);
                        a += 1;
                        b += 1;
                    }
                }
            }
        }
        for (k, o) in out.iter_mut().enumerate() {
            *o += layer.bias(ch.first_child + k);
        }
    }
}
