use crate::container::{Dec, Enc};
use crate::error::FormatError;
use crate::text::SparseVector;

/// One weight column per node, stored compressed-sparse-column, plus a
/// per-node bias.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct SparseLayer {
    col_ptr: Vec<u64>,
    row_idx: Vec<u32>,
    values: Vec<f32>,
    bias: Vec<f32>,
}

/// A trained column before assembly: sorted feature indices and weights.
#[derive(Clone, Debug, Default)]
pub(crate) struct Column {
    pub indices: Vec<u32>,
    pub values: Vec<f32>,
    pub bias: f32,
}

impl Column {
    pub fn constant(bias: f32) -> Self {
        Column {
            indices: Vec::new(),
            values: Vec::new(),
            bias,
        }
    }
}

impl SparseLayer {
    pub(crate) fn from_columns(cols: Vec<Column>) -> Self {
        let mut layer = SparseLayer {
            col_ptr: Vec::with_capacity(cols.len() + 1),
            ..Default::default()
        };
        layer.col_ptr.push(0);
        for c in cols {
            debug_assert!(c.indices.windows(2).all(|w| w[0] < w[1]));
            layer.row_idx.extend_from_slice(&c.indices);
            layer.values.extend_from_slice(&c.values);
            layer.bias.push(c.bias);
            layer.col_ptr.push(layer.row_idx.len() as u64);
        }
        layer
    }

    pub fn n_cols(&self) -> usize {
        self.bias.len()
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Sparse weights of column `c` as (feature indices, values).
    pub fn column(&self, c: usize) -> (&[u32], &[f32]) {
        let (s, e) = (self.col_ptr[c] as usize, self.col_ptr[c + 1] as usize);
        (&self.row_idx[s..e], &self.values[s..e])
    }

    pub fn bias(&self, c: usize) -> f32 {
        self.bias[c]
    }

    /// `w_c · x + b_c`. Products are accumulated in ascending feature
    /// order whichever side is iterated.
    pub fn margin(&self, c: usize, x: &SparseVector) -> f32 {
        let (idx, val) = self.column(c);
        let (xi, xv) = (x.indices(), x.values());
        let mut acc = 0.0f32;
        if xi.len() * 8 < idx.len() {
            // Short query, long column: binary-search each query feature.
            let mut lo = 0;
            for (k, &f) in xi.iter().enumerate() {
                match idx[lo..].binary_search(&f) {
                    Ok(p) => {
                        acc += val[lo + p] * xv[k];
                        lo += p + 1;
                    }
                    Err(p) => lo += p,
                }
                if lo >= idx.len() {
                    break;
                }
            }
        } else {
            let (mut a, mut b) = (0, 0);
            while a < idx.len() && b < xi.len() {
                match idx[a].cmp(&xi[b]) {
                    std::cmp::Ordering::Less => a += 1,
                    std::cmp::Ordering::Greater => b += 1,
                    std::cmp::Ordering::Equal => {
                        acc += val[a] * xv[b];
                        a += 1;
                        b += 1;
                    }
                }
            }
        }
        acc + self.bias[c]
    }

    pub(crate) fn encode(&self, e: &mut Enc) {
        e.u64s(&self.col_ptr);
        e.u32s(&self.row_idx);
        e.f32s(&self.values);
        e.f32s(&self.bias);
    }

    pub(crate) fn decode(d: &mut Dec<'_>, dim: u32) -> Result<Self, FormatError> {
        let layer = SparseLayer {
            col_ptr: d.u64s()?,
            row_idx: d.u32s()?,
            values: d.f32s()?,
            bias: d.f32s()?,
        };
        let bad = |m: &str| Err(FormatError::Malformed(format!("weight layer: {m}")));
        if layer.col_ptr.len() != layer.bias.len() + 1 || layer.col_ptr.first() != Some(&0) {
            return bad("column pointer length");
        }
        if layer.row_idx.len() != layer.values.len()
            || *layer.col_ptr.last().unwrap() as usize != layer.values.len()
        {
            return bad("nnz mismatch");
        }
        if layer.col_ptr.windows(2).any(|w| w[0] > w[1]) {
            return bad("column pointers decrease");
        }
        for c in 0..layer.n_cols() {
            let (idx, _) = layer.column(c);
            if idx.windows(2).any(|w| w[0] >= w[1]) || idx.last().is_some_and(|&i| i >= dim) {
                return bad("row indices unsorted or out of range");
            }
        }
        if layer.values.iter().chain(&layer.bias).any(|v| !v.is_finite()) {
            return bad("non-finite weight");
        }
        Ok(layer)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn margin_strategies_agree() {
        let idx: Vec<u32> = (0..200).map(|i| i * 3).collect();
        let val: Vec<f32> = (0..200).map(|i| (i as f32) * 0.01 - 1.0).collect();
        let layer = SparseLayer::from_columns(vec![Column {
            indices: idx,
            values: val,
            bias: 0.25,
        }]);
        let short = SparseVector::new(1000, vec![3, 4, 300, 597], vec![0.5, 0.5, 0.5, 0.5]).unwrap();
        let dense_idx: Vec<u32> = (0..600).step_by(2).collect();
        let dense = SparseVector::new(1000, dense_idx.clone(), vec![0.1; dense_idx.len()]).unwrap();
        let brute = |x: &SparseVector| {
            let (ci, cv) = layer.column(0);
            let mut acc = 0.0f32;
            for (i, v) in x.iter() {
                if let Ok(p) = ci.binary_search(&i) {
                    acc += cv[p] * v;
                }
            }
            acc + 0.25
        };
        assert_eq!(layer.margin(0, &short), brute(&short));
        assert_eq!(layer.margin(0, &dense), brute(&dense));
    }
}
