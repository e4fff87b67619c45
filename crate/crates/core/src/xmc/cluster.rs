//! Balanced spherical k-means and the recursive label tree built from it.

use std::collections::HashMap;
use std::ops::Range;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::container::{Dec, Enc};
use crate::error::{Error, FormatError, Result};
use crate::text::SparseVector;

use super::LabelSpace;

const KMEANS_MAX_ITER: usize = 20;

/// Hierarchy over the label space. Layer `l` holds the nodes at depth
/// `l + 1`; the last layer holds one slot per label.
///
/// `layers[l]` is a pointer array: the children of node `j` of layer `l - 1`
/// (the root when `l == 0`) are nodes `layers[l][j]..layers[l][j + 1]`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabelTree {
    layers: Vec<Vec<u32>>,
    leaf_labels: Vec<u32>,
}

impl LabelTree {
    pub fn n_layers(&self) -> usize {
        self.layers.len()
    }

    /// Number of clustering levels above the label layer.
    pub fn depth(&self) -> usize {
        self.layers.len() - 1
    }

    pub fn n_nodes(&self, layer: usize) -> usize {
        *self.layers[layer].last().unwrap() as usize
    }

    pub fn n_labels(&self) -> usize {
        self.leaf_labels.len()
    }

    /// Children (in layer `layer`) of node `parent` of layer `layer - 1`.
    pub fn children(&self, layer: usize, parent: usize) -> Range<usize> {
        let p = &self.layers[layer];
        p[parent] as usize..p[parent + 1] as usize
    }

    /// Label index stored in slot `slot` of the last layer.
    pub fn label_at(&self, slot: usize) -> usize {
        self.leaf_labels[slot] as usize
    }

    pub fn widest_layer(&self) -> usize {
        (0..self.n_layers()).map(|l| self.n_nodes(l)).max().unwrap_or(0)
    }

    /// Parent (in layer `layer - 1`) of every node of `layer`; all zero for layer 0.
    pub fn parents(&self, layer: usize) -> Vec<u32> {
        let mut out = vec![0u32; self.n_nodes(layer)];
        let n_parents = self.layers[layer].len() - 1;
        for j in 0..n_parents {
            for c in self.children(layer, j) {
                out[c] = j as u32;
            }
        }
        out
    }

    /// Slot of every label in the last layer.
    pub fn label_slots(&self) -> Vec<u32> {
        let mut out = vec![0u32; self.leaf_labels.len()];
        for (slot, &l) in self.leaf_labels.iter().enumerate() {
            out[l as usize] = slot as u32;
        }
        out
    }

    /// Labels grouped by leaf cluster (children of the last cluster layer).
    pub fn leaves(&self) -> Vec<Vec<usize>> {
        let last = self.n_layers() - 1;
        (0..self.layers[last].len() - 1)
            .map(|j| self.children(last, j).map(|s| self.label_at(s)).collect())
            .collect()
    }

    pub(crate) fn encode(&self, e: &mut Enc) {
        e.u32(self.layers.len() as u32);
        for l in &self.layers {
            e.u32s(l);
        }
        e.u32s(&self.leaf_labels);
    }

    pub(crate) fn decode(d: &mut Dec<'_>) -> Result<Self, FormatError> {
        let n = d.u32()? as usize;
        let layers = (0..n).map(|_| d.u32s()).collect::<Result<Vec<_>, _>>()?;
        let tree = LabelTree {
            layers,
            leaf_labels: d.u32s()?,
        };
        tree.check().map_err(FormatError::Malformed)?;
        Ok(tree)
    }

    fn check(&self) -> std::result::Result<(), String> {
        if self.layers.is_empty() || self.layers[0].len() != 2 || self.layers[0][0] != 0 {
            return Err("tree root layer malformed".into());
        }
        for l in 0..self.layers.len() {
            let p = &self.layers[l];
            if l > 0 && p.len() != self.n_nodes(l - 1) + 1 {
                return Err(format!("layer {l} pointer length"));
            }
            if p[0] != 0 || p.windows(2).any(|w| w[0] >= w[1]) {
                return Err(format!("layer {l} has an empty or unordered node"));
            }
        }
        let n = self.n_nodes(self.layers.len() - 1);
        if self.leaf_labels.len() != n {
            return Err("label layer size".into());
        }
        let mut seen = vec![false; n];
        for &l in &self.leaf_labels {
            if l as usize >= n || std::mem::replace(&mut seen[l as usize], true) {
                return Err("label slots are not a permutation".into());
            }
        }
        Ok(())
    }
}

fn mix(seed: u64, a: u64, b: u64) -> u64 {
    // splitmix64 finalizer over the combined input.
    let mut z = seed ^ a.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ b.wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Recursive balanced spherical k-means with `k = branching`. Every leaf
/// cluster ends at the same depth: the smallest `D` with
/// `ceil(L / B^D) <= max_leaf`. With `L <= max_leaf` the tree is flat.
pub fn build_tree(space: &LabelSpace, branching: usize, max_leaf: usize, seed: u64) -> Result<LabelTree> {
    if branching < 2 {
        return Err(Error::invalid("tree", "branching factor must be >= 2"));
    }
    if max_leaf < 1 {
        return Err(Error::invalid("tree", "max_leaf must be >= 1"));
    }
    let n = space.len();
    let mut depth = 0usize;
    let mut width = 1usize;
    while n.div_ceil(width) > max_leaf {
        depth += 1;
        width = width.saturating_mul(branching);
    }

    let mut level: Vec<Vec<u32>> = vec![(0..n as u32).collect()];
    let mut layers = vec![vec![0u32, 1]];
    for d in 0..depth {
        let splits: Vec<Vec<Vec<u32>>> = level
            .par_iter()
            .enumerate()
            .map(|(ord, members)| {
                let pts: Vec<&SparseVector> = members.iter().map(|&l| space.feature(l as usize)).collect();
                let k = branching.min(members.len());
                let assign = balanced_kmeans(&pts, k, mix(seed, d as u64, ord as u64));
                let mut groups = vec![Vec::new(); k];
                for (i, &c) in assign.iter().enumerate() {
                    groups[c].push(members[i]);
                }
                groups.iter_mut().for_each(|g| g.sort_unstable());
                groups.sort_by_key(|g| g[0]);
                groups
            })
            .collect();
        let mut ptr = vec![0u32];
        let mut next = Vec::new();
        for groups in splits {
            next.extend(groups);
            ptr.push(next.len() as u32);
        }
        if d > 0 {
            layers.push(ptr);
        } else {
            layers[0] = ptr;
        }
        level = next;
    }

    // Label layer: slots under each leaf cluster, ascending label order.
    let mut ptr = vec![0u32];
    let mut leaf_labels = Vec::with_capacity(n);
    for members in &level {
        leaf_labels.extend_from_slice(members);
        ptr.push(leaf_labels.len() as u32);
    }
    if depth == 0 {
        layers[0] = ptr;
    } else {
        layers.push(ptr);
    }
    let tree = LabelTree { layers, leaf_labels };
    debug_assert!(tree.check().is_ok());
    Ok(tree)
}

/// Balanced spherical k-means: cluster sizes differ by at most one.
/// Returns the cluster of each point. Exact duplicates are kept together
/// whenever a size-preserving swap allows it.
pub(crate) fn balanced_kmeans(points: &[&SparseVector], k: usize, seed: u64) -> Vec<usize> {
    let n = points.len();
    let k = k.min(n);
    if k <= 1 {
        return vec![0; n];
    }

    // Compact feature space local to this split.
    let mut feats: Vec<u32> = points.iter().flat_map(|p| p.indices().iter().copied()).collect();
    feats.sort_unstable();
    feats.dedup();
    let local: Vec<Vec<(u32, f32)>> = points
        .iter()
        .map(|p| {
            p.iter()
                .map(|(i, v)| (feats.binary_search(&i).unwrap() as u32, v))
                .collect()
        })
        .collect();
    let d = feats.len();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let init = rand::seq::index::sample(&mut rng, n, k).into_vec();
    let mut centroids = vec![vec![0f32; d]; k];
    for (c, &i) in init.iter().enumerate() {
        for &(f, v) in &local[i] {
            centroids[c][f as usize] = v;
        }
    }

    let sims_of = |centroids: &[Vec<f32>]| -> Vec<f32> {
        let mut sims = vec![0f32; n * k];
        sims.par_chunks_mut(k).enumerate().for_each(|(i, row)| {
            for (c, s) in row.iter_mut().enumerate() {
                *s = local[i].iter().map(|&(f, v)| centroids[c][f as usize] * v).sum();
            }
        });
        sims
    };

    let mut assign = vec![usize::MAX; n];
    let mut sims = sims_of(&centroids);
    for _ in 0..KMEANS_MAX_ITER {
        let next = greedy_balanced(&sims, n, k);
        let changed = next != assign;
        assign = next;
        if !changed {
            break;
        }
        for c in centroids.iter_mut() {
            c.iter_mut().for_each(|v| *v = 0.0);
        }
        for (i, &c) in assign.iter().enumerate() {
            for &(f, v) in &local[i] {
                centroids[c][f as usize] += v;
            }
        }
        for c in centroids.iter_mut() {
            let norm = c.iter().map(|v| v * v).sum::<f32>().sqrt();
            if norm > 0.0 {
                c.iter_mut().for_each(|v| *v /= norm);
            }
        }
        sims = sims_of(&centroids);
    }
    keep_duplicates_together(points, &sims, k, &mut assign);
    assign
}

/// Assigns (point, cluster) pairs in descending similarity under capacity
/// `floor(n/k)`, with `n mod k` clusters allowed one extra point.
fn greedy_balanced(sims: &[f32], n: usize, k: usize) -> Vec<usize> {
    let base = n / k;
    let mut extra = n % k;
    let mut order: Vec<u32> = (0..(n * k) as u32).collect();
    order.par_sort_unstable_by(|&a, &b| sims[b as usize].total_cmp(&sims[a as usize]).then(a.cmp(&b)));
    let mut assign = vec![usize::MAX; n];
    let mut sizes = vec![0usize; k];
    let mut left = n;
    for idx in order {
        let (i, c) = (idx as usize / k, idx as usize % k);
        if assign[i] != usize::MAX {
            continue;
        }
        if sizes[c] < base || (sizes[c] == base && extra > 0) {
            if sizes[c] == base {
                extra -= 1;
            }
            sizes[c] += 1;
            assign[i] = c;
            left -= 1;
            if left == 0 {
                break;
            }
        }
    }
    assign
}

fn keep_duplicates_together(points: &[&SparseVector], sims: &[f32], k: usize, assign: &mut [usize]) {
    let key = |p: &SparseVector| -> (Vec<u32>, Vec<u32>) {
        (p.indices().to_vec(), p.values().iter().map(|v| v.to_bits()).collect())
    };
    let mut groups: HashMap<(Vec<u32>, Vec<u32>), Vec<usize>> = HashMap::new();
    for (i, p) in points.iter().enumerate() {
        groups.entry(key(p)).or_default().push(i);
    }
    let mut dup_groups: Vec<Vec<usize>> = groups.into_values().filter(|g| g.len() > 1).collect();
    dup_groups.sort();
    let mut is_dup = vec![false; points.len()];
    for g in &dup_groups {
        g.iter().for_each(|&i| is_dup[i] = true);
    }
    for g in &dup_groups {
        let target = assign[g[0]];
        for &m in &g[1..] {
            if assign[m] == target {
                continue;
            }
            // Swap with the non-duplicate member of `target` least similar to it.
            let swap = (0..points.len())
                .filter(|&j| assign[j] == target && !is_dup[j])
                .min_by(|&a, &b| sims[a * k + target].total_cmp(&sims[b * k + target]).then(a.cmp(&b)));
            if let Some(j) = swap {
                assign[j] = assign[m];
                assign[m] = target;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::text::{featurize_str, FeaturizerConfig};
    use crate::types::BrandEntityId;

    fn space(texts: &[String]) -> LabelSpace {
        let cfg = FeaturizerConfig::default();
        let labels = (0..texts.len()).map(|i| BrandEntityId::new(format!("E{i:05}")).unwrap()).collect();
        let feats = texts.iter().map(|t| featurize_str(t, &cfg)).collect();
        LabelSpace::new(labels, feats).unwrap()
    }

    fn names(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("brand{i} x{}", i % 7)).collect()
    }

    #[test]
    fn four_labels_binary() {
        let t = build_tree(&space(&names(4)), 2, 1, 7).unwrap();
        assert_eq!(t.depth(), 2);
        assert_eq!(t.n_nodes(0), 2);
        assert_eq!(t.n_nodes(1), 4);
        assert!(t.leaves().iter().all(|l| l.len() == 1));
    }

    #[test]
    fn thousand_labels_sixteen_way() {
        let t = build_tree(&space(&names(1000)), 16, 100, 7).unwrap();
        assert_eq!(t.depth(), 1);
        let sizes: Vec<usize> = t.leaves().iter().map(Vec::len).collect();
        assert_eq!(sizes.len(), 16);
        assert!(sizes.iter().all(|&s| s == 62 || s == 63), "{sizes:?}");
        assert_eq!(sizes.iter().sum::<usize>(), 1000);
    }

    #[test]
    fn flat_when_small() {
        let t = build_tree(&space(&names(5)), 16, 100, 1).unwrap();
        assert_eq!(t.depth(), 0);
        assert_eq!(t.n_nodes(0), 5);
        assert!(build_tree(&space(&names(5)), 1, 100, 1).is_err());
    }

    #[test]
    fn identical_features_share_a_leaf() {
        let mut texts = names(40);
        texts[31] = texts[3].clone();
        let t = build_tree(&space(&texts), 4, 3, 11).unwrap();
        let leaf_of = |l: usize| t.leaves().iter().position(|g| g.contains(&l)).unwrap();
        assert_eq!(leaf_of(3), leaf_of(31));
        let sizes: Vec<usize> = t.leaves().iter().map(Vec::len).collect();
        assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
    }

    #[test]
    fn deterministic_given_seed() {
        let s = space(&names(300));
        assert_eq!(build_tree(&s, 8, 10, 5).unwrap(), build_tree(&s, 8, 10, 5).unwrap());
    }

    #[test]
    fn tiny_nodes_split_into_singletons() {
        // 20 labels, B=16, max_leaf=1: second level nodes hold 1 or 2 labels.
        let t = build_tree(&space(&names(20)), 16, 1, 3).unwrap();
        assert_eq!(t.depth(), 2);
        assert!(t.leaves().iter().all(|l| l.len() == 1));
        assert_eq!(t.n_labels(), 20);
    }
}
