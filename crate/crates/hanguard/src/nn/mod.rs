//! A small reverse-mode autodiff tape over `ndarray` matrices.
//!
//! Training builds one tape per mini-batch: parameters enter as leaves,
//! every sample's forward pass appends ops referencing those leaves, losses
//! are summed, and a single [`Tape::backward`] call accumulates parameter
//! gradients across the whole batch. Inference skips the tape and uses the
//! plain-array helpers at the bottom of this file.
//!
//! Everything is f64 and single-threaded; there is no in-place mutation of
//! recorded values, so the backward pass can recompute whatever local
//! statistics it needs.

use ndarray::{concatenate, s, Array1, Array2, Axis};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TensorId(usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    /// a (m×k) · b (k×n)
    MatMul(TensorId, TensorId),
    Add(TensorId, TensorId),
    /// elementwise product, same shape (dropout masks)
    Mul(TensorId, TensorId),
    /// matrix (m×n) + row (1×n) broadcast over rows
    AddRowBroadcast(TensorId, TensorId),
    /// matrix (m×n) ⊙ row (1×n) broadcast over rows
    MulRowBroadcast(TensorId, TensorId),
    Scale(TensorId, f64),
    Relu(TensorId),
    SoftmaxRows(TensorId),
    LayerNormRows { x: TensorId, eps: f64 },
    Transpose(TensorId),
    /// row-major reinterpretation to the node's own shape
    Reshape(TensorId),
    ConcatCols(TensorId, TensorId),
    SliceCols { x: TensorId, start: usize },
    /// row (1×n) stacked `rows` times
    RepeatRows(TensorId),
    /// rows of `table` selected by index; duplicates allowed
    GatherRows { table: TensorId, indices: Vec<usize> },
    /// softmax + negative log-likelihood of `target`, logits 1×c → scalar 1×1
    CrossEntropy { logits: TensorId, target: usize },
    /// sum of all entries → scalar 1×1
    Sum(TensorId),
}

struct Node {
    value: Array2<f64>,
    op: Op,
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    grads: Vec<Option<Array2<f64>>>,
}

impl Tape {
    pub fn new() -> Tape {
        Tape::default()
    }

    fn push(&mut self, value: Array2<f64>, op: Op) -> TensorId {
        self.nodes.push(Node { value, op });
        TensorId(self.nodes.len() - 1)
    }

    pub fn value(&self, id: TensorId) -> &Array2<f64> {
        &self.nodes[id.0].value
    }

    /// Gradient of the last `backward` root w.r.t. `id`; `None` when the
    /// node does not influence the root.
    pub fn grad(&self, id: TensorId) -> Option<&Array2<f64>> {
        self.grads.get(id.0).and_then(|g| g.as_ref())
    }

    pub fn leaf(&mut self, value: Array2<f64>) -> TensorId {
        self.push(value, Op::Leaf)
    }

    pub fn matmul(&mut self, a: TensorId, b: TensorId) -> TensorId {
        let (av, bv) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        assert_eq!(av.ncols(), bv.nrows(), "matmul inner dimensions");
        let v = av.dot(bv);
        self.push(v, Op::MatMul(a, b))
    }

    pub fn add(&mut self, a: TensorId, b: TensorId) -> TensorId {
        assert_eq!(self.nodes[a.0].value.dim(), self.nodes[b.0].value.dim(), "add shapes");
        let v = &self.nodes[a.0].value + &self.nodes[b.0].value;
        self.push(v, Op::Add(a, b))
    }

    pub fn mul(&mut self, a: TensorId, b: TensorId) -> TensorId {
        assert_eq!(self.nodes[a.0].value.dim(), self.nodes[b.0].value.dim(), "mul shapes");
        let v = &self.nodes[a.0].value * &self.nodes[b.0].value;
        self.push(v, Op::Mul(a, b))
    }

    pub fn add_row_broadcast(&mut self, m: TensorId, row: TensorId) -> TensorId {
        let (mv, rv) = (&self.nodes[m.0].value, &self.nodes[row.0].value);
        assert_eq!(rv.nrows(), 1, "broadcast operand must be a row");
        assert_eq!(mv.ncols(), rv.ncols(), "broadcast width");
        let v = mv + &rv.row(0);
        self.push(v, Op::AddRowBroadcast(m, row))
    }

    pub fn mul_row_broadcast(&mut self, m: TensorId, row: TensorId) -> TensorId {
        let (mv, rv) = (&self.nodes[m.0].value, &self.nodes[row.0].value);
        assert_eq!(rv.nrows(), 1, "broadcast operand must be a row");
        assert_eq!(mv.ncols(), rv.ncols(), "broadcast width");
        let v = mv * &rv.row(0);
        self.push(v, Op::MulRowBroadcast(m, row))
    }

    pub fn scale(&mut self, a: TensorId, c: f64) -> TensorId {
        let v = self.nodes[a.0].value.mapv(|x| x * c);
        self.push(v, Op::Scale(a, c))
    }

    pub fn relu(&mut self, a: TensorId) -> TensorId {
        let v = self.nodes[a.0].value.mapv(|x| x.max(0.0));
        self.push(v, Op::Relu(a))
    }

    pub fn softmax_rows(&mut self, a: TensorId) -> TensorId {
        let mut v = self.nodes[a.0].value.clone();
        softmax_rows_inplace(&mut v);
        self.push(v, Op::SoftmaxRows(a))
    }

    pub fn layer_norm_rows(&mut self, a: TensorId, eps: f64) -> TensorId {
        let mut v = self.nodes[a.0].value.clone();
        layer_norm_rows_inplace(&mut v, eps);
        self.push(v, Op::LayerNormRows { x: a, eps })
    }

    pub fn transpose(&mut self, a: TensorId) -> TensorId {
        let v = self.nodes[a.0].value.t().to_owned();
        self.push(v, Op::Transpose(a))
    }

    pub fn reshape(&mut self, a: TensorId, rows: usize, cols: usize) -> TensorId {
        let src = &self.nodes[a.0].value;
        assert_eq!(src.len(), rows * cols, "reshape size");
        let flat: Vec<f64> = src.iter().copied().collect();
        let v = Array2::from_shape_vec((rows, cols), flat).expect("validated size");
        self.push(v, Op::Reshape(a))
    }

    pub fn concat_cols(&mut self, a: TensorId, b: TensorId) -> TensorId {
        let (av, bv) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        assert_eq!(av.nrows(), bv.nrows(), "concat row counts");
        let v = concatenate(Axis(1), &[av.view(), bv.view()]).expect("validated shapes");
        self.push(v, Op::ConcatCols(a, b))
    }

    pub fn slice_cols(&mut self, a: TensorId, start: usize, end: usize) -> TensorId {
        let src = &self.nodes[a.0].value;
        assert!(start < end && end <= src.ncols(), "slice bounds");
        let v = src.slice(s![.., start..end]).to_owned();
        self.push(v, Op::SliceCols { x: a, start })
    }

    pub fn repeat_rows(&mut self, row: TensorId, rows: usize) -> TensorId {
        let rv = &self.nodes[row.0].value;
        assert_eq!(rv.nrows(), 1, "repeat operand must be a row");
        let mut v = Array2::zeros((rows, rv.ncols()));
        for mut r in v.rows_mut() {
            r.assign(&rv.row(0));
        }
        self.push(v, Op::RepeatRows(row))
    }

    pub fn gather_rows(&mut self, table: TensorId, indices: &[usize]) -> TensorId {
        let tv = &self.nodes[table.0].value;
        let mut v = Array2::zeros((indices.len(), tv.ncols()));
        for (r, &i) in indices.iter().enumerate() {
            assert!(i < tv.nrows(), "gather index in range");
            v.row_mut(r).assign(&tv.row(i));
        }
        self.push(v, Op::GatherRows { table, indices: indices.to_vec() })
    }

    pub fn cross_entropy(&mut self, logits: TensorId, target: usize) -> TensorId {
        let lv = &self.nodes[logits.0].value;
        assert_eq!(lv.nrows(), 1, "logits must be a row");
        assert!(target < lv.ncols(), "target class in range");
        let row: Vec<f64> = lv.row(0).to_vec();
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + row.iter().map(|x| (x - max).exp()).sum::<f64>().ln();
        let loss = lse - row[target];
        self.push(Array2::from_elem((1, 1), loss), Op::CrossEntropy { logits, target })
    }

    pub fn sum(&mut self, a: TensorId) -> TensorId {
        let s = self.nodes[a.0].value.sum();
        self.push(Array2::from_elem((1, 1), s), Op::Sum(a))
    }

    /// Reverse pass seeding d(root)/d(root) = 1. `root` must be 1×1.
    /// Gradients are kept for leaves and freed for interior nodes as the
    /// sweep passes them, so `grad` is only meaningful on leaves afterwards.
    pub fn backward(&mut self, root: TensorId) {
        assert_eq!(self.nodes[root.0].value.dim(), (1, 1), "backward root must be scalar");
        self.grads = self.nodes.iter().map(|_| None).collect();
        self.grads[root.0] = Some(Array2::from_elem((1, 1), 1.0));

        for i in (0..=root.0).rev() {
            if matches!(self.nodes[i].op, Op::Leaf) {
                continue; // no parents; keep the accumulated grad readable
            }
            let g = match self.grads[i].take() {
                Some(g) => g,
                None => continue,
            };
            // reborrow as immutable for reading values while accumulating
            let op = self.nodes[i].op.clone();
            match op {
                Op::Leaf => {}
                Op::MatMul(a, b) => {
                    let ga = g.dot(&self.nodes[b.0].value.t());
                    let gb = self.nodes[a.0].value.t().dot(&g);
                    self.accumulate(a, ga);
                    self.accumulate(b, gb);
                }
                Op::Add(a, b) => {
                    self.accumulate(a, g.clone());
                    self.accumulate(b, g.clone());
                }
                Op::Mul(a, b) => {
                    let ga = &g * &self.nodes[b.0].value;
                    let gb = &g * &self.nodes[a.0].value;
                    self.accumulate(a, ga);
                    self.accumulate(b, gb);
                }
                Op::AddRowBroadcast(m, row) => {
                    let grow = g.sum_axis(Axis(0)).insert_axis(Axis(0));
                    self.accumulate(m, g.clone());
                    self.accumulate(row, grow);
                }
                Op::MulRowBroadcast(m, row) => {
                    let rv = self.nodes[row.0].value.row(0).to_owned();
                    let gm = &g * &rv;
                    let grow = (&g * &self.nodes[m.0].value).sum_axis(Axis(0)).insert_axis(Axis(0));
                    self.accumulate(m, gm);
                    self.accumulate(row, grow);
                }
                Op::Scale(a, c) => {
                    self.accumulate(a, g.mapv(|x| x * c));
                }
                Op::Relu(a) => {
                    let ga = &g * &self.nodes[a.0].value.mapv(|x| if x > 0.0 { 1.0 } else { 0.0 });
                    self.accumulate(a, ga);
                }
                Op::SoftmaxRows(a) => {
                    let y = &self.nodes[i].value;
                    let mut ga = Array2::zeros(g.dim());
                    for r in 0..g.nrows() {
                        let yr = y.row(r);
                        let gr = g.row(r);
                        let dot: f64 = yr.iter().zip(gr.iter()).map(|(x, y)| x * y).sum();
                        for c in 0..g.ncols() {
                            ga[[r, c]] = yr[c] * (gr[c] - dot);
                        }
                    }
                    self.accumulate(a, ga);
                }
                Op::LayerNormRows { x, eps } => {
                    let y = &self.nodes[i].value;
                    let xv = &self.nodes[x.0].value;
                    let n = xv.ncols() as f64;
                    let mut gx = Array2::zeros(g.dim());
                    for r in 0..g.nrows() {
                        let row = xv.row(r);
                        let mean = row.sum() / n;
                        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
                        let sigma = (var + eps).sqrt();
                        let gr = g.row(r);
                        let yr = y.row(r);
                        let g_mean: f64 = gr.sum() / n;
                        let gy_mean: f64 = gr.iter().zip(yr.iter()).map(|(a, b)| a * b).sum::<f64>() / n;
                        for c in 0..g.ncols() {
                            gx[[r, c]] = (gr[c] - g_mean - yr[c] * gy_mean) / sigma;
                        }
                    }
                    self.accumulate(x, gx);
                }
                Op::Transpose(a) => {
                    self.accumulate(a, g.t().to_owned());
                }
                Op::Reshape(a) => {
                    let (r, c) = self.nodes[a.0].value.dim();
                    let flat: Vec<f64> = g.iter().copied().collect();
                    self.accumulate(a, Array2::from_shape_vec((r, c), flat).expect("same size"));
                }
                Op::ConcatCols(a, b) => {
                    let ca = self.nodes[a.0].value.ncols();
                    let ga = g.slice(s![.., ..ca]).to_owned();
                    let gb = g.slice(s![.., ca..]).to_owned();
                    self.accumulate(a, ga);
                    self.accumulate(b, gb);
                }
                Op::SliceCols { x, start } => {
                    let mut gx = Array2::zeros(self.nodes[x.0].value.dim());
                    gx.slice_mut(s![.., start..start + g.ncols()]).assign(&g);
                    self.accumulate(x, gx);
                }
                Op::RepeatRows(row) => {
                    let grow = g.sum_axis(Axis(0)).insert_axis(Axis(0));
                    self.accumulate(row, grow);
                }
                Op::GatherRows { table, ref indices } => {
                    let mut gt = Array2::zeros(self.nodes[table.0].value.dim());
                    for (r, &idx) in indices.iter().enumerate() {
                        let mut dst = gt.row_mut(idx);
                        dst += &g.row(r);
                    }
                    self.accumulate(table, gt);
                }
                Op::CrossEntropy { logits, target } => {
                    let lv = &self.nodes[logits.0].value;
                    let mut probs = lv.clone();
                    softmax_rows_inplace(&mut probs);
                    probs[[0, target]] -= 1.0;
                    self.accumulate(logits, probs.mapv(|x| x * g[[0, 0]]));
                }
                Op::Sum(a) => {
                    let ga = Array2::from_elem(self.nodes[a.0].value.dim(), g[[0, 0]]);
                    self.accumulate(a, ga);
                }
            }
        }
    }

    fn accumulate(&mut self, id: TensorId, g: Array2<f64>) {
        match &mut self.grads[id.0] {
            Some(existing) => *existing += &g,
            slot @ None => *slot = Some(g),
        }
    }
}

/// Numerically stable row-wise softmax.
pub fn softmax_rows_inplace(m: &mut Array2<f64>) {
    for mut row in m.rows_mut() {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
}

/// Row-wise standardization: (x − mean) / sqrt(var + eps), biased variance.
pub fn layer_norm_rows_inplace(m: &mut Array2<f64>, eps: f64) {
    let n = m.ncols() as f64;
    for mut row in m.rows_mut() {
        let mean = row.sum() / n;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let inv = 1.0 / (var + eps).sqrt();
        for v in row.iter_mut() {
            *v = (*v - mean) * inv;
        }
    }
}

pub fn argmax_row(row: &Array1<f64>) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Array2<f64> {
        Array2::from_shape_fn((r, c), |_| rng.random::<f64>() - 0.5)
    }

    /// Builds a graph exercising every op, then checks every leaf gradient
    /// against central finite differences.
    fn scalar_net(leaves: &[Array2<f64>]) -> (f64, Vec<Option<Array2<f64>>>) {
        let mut tape = Tape::new();
        let ids: Vec<TensorId> = leaves.iter().map(|m| tape.leaf(m.clone())).collect();
        let (a, b, row, mask) = (ids[0], ids[1], ids[2], ids[3]);

        let mm = tape.matmul(a, b); // 3×4 · 4×4 → 3×4
        let biased = tape.add_row_broadcast(mm, row);
        let scaled = tape.mul_row_broadcast(biased, row);
        let act = tape.relu(scaled);
        let normed = tape.layer_norm_rows(act, 1e-5);
        let soft = tape.softmax_rows(normed);
        let masked = tape.mul(soft, mask);
        let both = tape.concat_cols(act, masked); // 3×8
        let half = tape.slice_cols(both, 2, 6); // 3×4
        let tr = tape.transpose(half); // 4×3
        let sq = tape.matmul(tr, half); // wait: 4×3 · 3×4 → 4×4
        let gathered = tape.gather_rows(sq, &[0, 2, 2]);
        let flat = tape.reshape(gathered, 1, 12);
        let rep = tape.repeat_rows(row, 2); // row is 1×4
        let rsum = tape.sum(rep);
        let scaled2 = tape.scale(flat, 0.5);
        let ce_in = tape.slice_cols(scaled2, 0, 3);
        let ce = tape.cross_entropy(ce_in, 1);
        let partial = tape.add(ce, rsum);
        let total = tape.sum(partial);

        tape.backward(total);
        let loss = tape.value(total)[[0, 0]];
        let grads = ids.iter().map(|&id| tape.grad(id).cloned()).collect();
        (loss, grads)
    }

    #[test]
    fn tape_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let leaves = vec![
            random_matrix(&mut rng, 3, 4),
            random_matrix(&mut rng, 4, 4),
            random_matrix(&mut rng, 1, 4).mapv(|x| x + 1.0), // keep scale positive-ish
            random_matrix(&mut rng, 3, 4),
        ];
        let (_, grads) = scalar_net(&leaves);
        let eps = 1e-6;
        for (li, leaf) in leaves.iter().enumerate() {
            let g = grads[li].as_ref().expect("all leaves reachable");
            for r in 0..leaf.nrows() {
                for c in 0..leaf.ncols() {
                    let mut plus = leaves.clone();
                    plus[li][[r, c]] += eps;
                    let mut minus = leaves.clone();
                    minus[li][[r, c]] -= eps;
                    let fd = (scalar_net(&plus).0 - scalar_net(&minus).0) / (2.0 * eps);
                    let analytic = g[[r, c]];
                    let denom = analytic.abs().max(fd.abs()).max(1e-6);
                    assert!(
                        ((analytic - fd) / denom).abs() < 1e-4,
                        "leaf {li} [{r},{c}]: analytic {analytic}, fd {fd}"
                    );
                }
            }
        }
    }

    #[test]
    fn gather_accumulates_duplicate_rows() {
        let mut tape = Tape::new();
        let table = tape.leaf(Array2::from_shape_vec((3, 2), vec![1., 2., 3., 4., 5., 6.]).unwrap());
        let picked = tape.gather_rows(table, &[1, 1, 0]);
        let total = tape.sum(picked);
        tape.backward(total);
        let g = tape.grad(table).unwrap();
        assert_eq!(g[[1, 0]], 2.0); // row 1 gathered twice
        assert_eq!(g[[0, 0]], 1.0);
        assert_eq!(g[[2, 0]], 0.0);
    }

    #[test]
    fn cross_entropy_matches_log_softmax() {
        let mut tape = Tape::new();
        let logits = tape.leaf(Array2::from_shape_vec((1, 3), vec![1.0, 2.0, 0.5]).unwrap());
        let ce = tape.cross_entropy(logits, 2);
        let mut probs = tape.value(logits).clone();
        softmax_rows_inplace(&mut probs);
        assert!((tape.value(ce)[[0, 0]] + probs[[0, 2]].ln()).abs() < 1e-12);
    }

    #[test]
    fn masked_softmax_zeroes_large_negative_columns() {
        let mut m = Array2::from_shape_vec((1, 4), vec![0.3, -1e9, 0.7, -1e9]).unwrap();
        softmax_rows_inplace(&mut m);
        assert_eq!(m[[0, 1]], 0.0);
        assert_eq!(m[[0, 3]], 0.0);
        assert!((m.sum() - 1.0).abs() < 1e-12);
    }
}
