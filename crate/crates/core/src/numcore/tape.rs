//! Reverse-mode differentiation over whole matrices.
//!
//! Every operation appends a node holding its forward value. [`Tape::backward`]
//! walks the nodes in reverse and accumulates adjoints into a [`Gradients`]
//! table. Index arrays for gathers and segment ops are shared through `Arc`
//! so a graph structure can be reused across many tapes.

use std::sync::Arc;

use super::matrix::{dot, Matrix};
use super::NumError;

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Transpose(Var),
    ConcatCols(Var, Var),
    SliceCols {
        a: Var,
        start: usize,
    },
    RowGather {
        a: Var,
        index: Arc<[usize]>,
    },
    GatherRowDot {
        a: Var,
        a_index: Arc<[usize]>,
        b: Var,
        b_index: Arc<[usize]>,
    },
    SegmentSoftmax {
        a: Var,
        segments: Arc<[usize]>,
    },
    SegmentWeightedSum {
        values: Var,
        index: Option<Arc<[usize]>>,
        weights: Var,
        segments: Arc<[usize]>,
    },
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Sigmoid(Var),
    LeakyRelu(Var, f64),
    Tanh(Var),
    L2NormRows(Var),
    ReduceSum(Var),
    RowSum(Var),
    Hinge(Var, f64),
    LogClamped(Var, f64),
}

/// A recording of matrix operations whose gradients can be pulled back from
/// a scalar output.
#[derive(Default)]
pub struct Tape {
    values: Vec<Matrix>,
    ops: Vec<Op>,
}

/// Adjoints produced by [`Tape::backward`].
pub struct Gradients {
    grads: Vec<Option<Matrix>>,
    shapes: Vec<(usize, usize)>,
}

impl Gradients {
    /// Gradient of the loss w.r.t. `v`; all zeros when `v` does not reach the loss.
    pub fn get(&self, v: Var) -> Matrix {
        match &self.grads[v.0] {
            Some(g) => g.clone(),
            None => {
                let (r, c) = self.shapes[v.0];
                Matrix::zeros(r, c)
            }
        }
    }

    pub fn take(&mut self, v: Var) -> Matrix {
        match self.grads[v.0].take() {
            Some(g) => g,
            None => {
                let (r, c) = self.shapes[v.0];
                Matrix::zeros(r, c)
            }
        }
    }
}

fn shape_err(what: &str, a: (usize, usize), b: (usize, usize)) -> NumError {
    NumError::Shape(format!(
        "{what}: {}x{} vs {}x{}",
        a.0, a.1, b.0, b.1
    ))
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    fn push(&mut self, value: Matrix, op: Op) -> Var {
        self.values.push(value);
        self.ops.push(op);
        Var(self.values.len() - 1)
    }

    /// Records an input (parameter or constant).
    pub fn leaf(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.values[v.0]
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.values[v.0].shape()
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.values[v.0].data()[0]
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, NumError> {
        let value = self.values[a.0].matmul(&self.values[b.0])?;
        Ok(self.push(value, Op::MatMul(a, b)))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let value = self.values[a.0].transpose();
        self.push(value, Op::Transpose(a))
    }

    pub fn concat_cols(&mut self, a: Var, b: Var) -> Result<Var, NumError> {
        let (va, vb) = (&self.values[a.0], &self.values[b.0]);
        if va.rows() != vb.rows() {
            return Err(shape_err("concat_cols", va.shape(), vb.shape()));
        }
        let cols = va.cols() + vb.cols();
        let mut data = Vec::with_capacity(va.rows() * cols);
        for r in 0..va.rows() {
            data.extend_from_slice(va.row(r));
            data.extend_from_slice(vb.row(r));
        }
        let value = Matrix::from_vec(va.rows(), cols, data)?;
        Ok(self.push(value, Op::ConcatCols(a, b)))
    }

    /// Columns `start..end` of `a`.
    pub fn slice_cols(&mut self, a: Var, start: usize, end: usize) -> Result<Var, NumError> {
        let va = &self.values[a.0];
        if start > end || end > va.cols() {
            return Err(NumError::Shape(format!(
                "slice_cols {start}..{end} of {} columns",
                va.cols()
            )));
        }
        let mut data = Vec::with_capacity(va.rows() * (end - start));
        for r in 0..va.rows() {
            data.extend_from_slice(&va.row(r)[start..end]);
        }
        let value = Matrix::from_vec(va.rows(), end - start, data)?;
        Ok(self.push(value, Op::SliceCols { a, start }))
    }

    pub fn row_gather(&mut self, a: Var, index: Arc<[usize]>) -> Result<Var, NumError> {
        let va = &self.values[a.0];
        if let Some(&bad) = index.iter().find(|&&i| i >= va.rows()) {
            return Err(NumError::Index(format!(
                "row_gather index {bad} out of {} rows",
                va.rows()
            )));
        }
        let value = va.select_rows(&index);
        Ok(self.push(value, Op::RowGather { a, index }))
    }

    /// `out[e] = a[a_index[e]] · b[b_index[e]]`, an `E x 1` column. Fuses a
    /// pair of row gathers with a row-wise dot product.
    pub fn gather_row_dot(
        &mut self,
        a: Var,
        a_index: Arc<[usize]>,
        b: Var,
        b_index: Arc<[usize]>,
    ) -> Result<Var, NumError> {
        let (va, vb) = (&self.values[a.0], &self.values[b.0]);
        if va.cols() != vb.cols() {
            return Err(shape_err("gather_row_dot", va.shape(), vb.shape()));
        }
        if a_index.len() != b_index.len() {
            return Err(NumError::Shape(format!(
                "gather_row_dot index lengths {} vs {}",
                a_index.len(),
                b_index.len()
            )));
        }
        check_index(&a_index, va.rows(), "gather_row_dot")?;
        check_index(&b_index, vb.rows(), "gather_row_dot")?;
        let data = a_index
            .iter()
            .zip(b_index.iter())
            .map(|(&i, &j)| dot(va.row(i), vb.row(j)))
            .collect::<Vec<_>>();
        let value = Matrix::from_vec(data.len(), 1, data)?;
        Ok(self.push(
            value,
            Op::GatherRowDot {
                a,
                a_index,
                b,
                b_index,
            },
        ))
    }

    /// Softmax of an `E x 1` column within groups given by `segments[e]`.
    /// Segment ids must cover `0..max+1` without gaps; an empty segment is an
    /// error.
    pub fn segment_softmax(&mut self, a: Var, segments: Arc<[usize]>) -> Result<Var, NumError> {
        let va = &self.values[a.0];
        if va.cols() != 1 || va.rows() != segments.len() {
            return Err(NumError::Shape(format!(
                "segment_softmax expects {}x1 scores, got {}x{}",
                segments.len(),
                va.rows(),
                va.cols()
            )));
        }
        let n_seg = segments.iter().max().map_or(0, |m| m + 1);
        let mut max = vec![f64::NEG_INFINITY; n_seg];
        for (&s, &x) in segments.iter().zip(va.data()) {
            if x > max[s] {
                max[s] = x;
            }
        }
        if let Some(empty) = max.iter().position(|m| *m == f64::NEG_INFINITY) {
            return Err(NumError::EmptySegment(empty));
        }
        let mut out: Vec<f64> = segments
            .iter()
            .zip(va.data())
            .map(|(&s, &x)| (x - max[s]).exp())
            .collect();
        let mut sum = vec![0.0; n_seg];
        for (&s, &e) in segments.iter().zip(&out) {
            sum[s] += e;
        }
        for (&s, e) in segments.iter().zip(out.iter_mut()) {
            *e /= sum[s];
        }
        let value = Matrix::from_vec(out.len(), 1, out)?;
        Ok(self.push(value, Op::SegmentSoftmax { a, segments }))
    }

    /// `out[segments[e]] += weights[e] * values[index[e]]` over `segment_count`
    /// output rows; `index = None` means `values` is already per-element.
    /// Segments with no elements produce zero rows.
    pub fn segment_weighted_sum(
        &mut self,
        values: Var,
        index: Option<Arc<[usize]>>,
        weights: Var,
        segments: Arc<[usize]>,
        segment_count: usize,
    ) -> Result<Var, NumError> {
        let (vv, vw) = (&self.values[values.0], &self.values[weights.0]);
        let e = segments.len();
        if vw.shape() != (e, 1) {
            return Err(NumError::Shape(format!(
                "segment_weighted_sum weights {}x{}, expected {e}x1",
                vw.rows(),
                vw.cols()
            )));
        }
        match &index {
            Some(idx) => {
                if idx.len() != e {
                    return Err(NumError::Shape(format!(
                        "segment_weighted_sum index length {} vs {e}",
                        idx.len()
                    )));
                }
                check_index(idx, vv.rows(), "segment_weighted_sum")?;
            }
            None => {
                if vv.rows() != e {
                    return Err(NumError::Shape(format!(
                        "segment_weighted_sum values have {} rows, expected {e}",
                        vv.rows()
                    )));
                }
            }
        }
        check_index(&segments, segment_count, "segment_weighted_sum")?;
        let cols = vv.cols();
        let mut out = Matrix::zeros(segment_count, cols);
        for k in 0..e {
            let src = index.as_ref().map_or(k, |idx| idx[k]);
            let w = vw.data()[k];
            let row = vv.row(src);
            for (o, &x) in out.row_mut(segments[k]).iter_mut().zip(row) {
                *o += w * x;
            }
        }
        Ok(self.push(
            out,
            Op::SegmentWeightedSum {
                values,
                index,
                weights,
                segments,
            },
        ))
    }

    fn zip_with(
        &mut self,
        a: Var,
        b: Var,
        what: &str,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Matrix, NumError> {
        let (va, vb) = (&self.values[a.0], &self.values[b.0]);
        if va.shape() != vb.shape() {
            return Err(shape_err(what, va.shape(), vb.shape()));
        }
        let data = va.data().iter().zip(vb.data()).map(|(&x, &y)| f(x, y)).collect();
        Matrix::from_vec(va.rows(), va.cols(), data)
    }

    fn map(&self, a: Var, f: impl Fn(f64) -> f64) -> Matrix {
        let va = &self.values[a.0];
        let data = va.data().iter().map(|&x| f(x)).collect();
        Matrix::from_vec(va.rows(), va.cols(), data).expect("same shape")
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, NumError> {
        let v = self.zip_with(a, b, "add", |x, y| x + y)?;
        Ok(self.push(v, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, NumError> {
        let v = self.zip_with(a, b, "sub", |x, y| x - y)?;
        Ok(self.push(v, Op::Sub(a, b)))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, NumError> {
        let v = self.zip_with(a, b, "mul", |x, y| x * y)?;
        Ok(self.push(v, Op::Mul(a, b)))
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Var {
        let v = self.map(a, |x| x * factor);
        self.push(v, Op::Scale(a, factor))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let v = self.map(a, sigmoid);
        self.push(v, Op::Sigmoid(a))
    }

    pub fn leaky_relu(&mut self, a: Var, slope: f64) -> Var {
        let v = self.map(a, |x| if x > 0.0 { x } else { slope * x });
        self.push(v, Op::LeakyRelu(a, slope))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.leaky_relu(a, 0.0)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let v = self.map(a, f64::tanh);
        self.push(v, Op::Tanh(a))
    }

    /// Per-row Euclidean norm, `n x 1`.
    pub fn l2_norm_rows(&mut self, a: Var) -> Var {
        let va = &self.values[a.0];
        let data: Vec<f64> = (0..va.rows())
            .map(|r| va.row(r).iter().map(|x| x * x).sum::<f64>().sqrt())
            .collect();
        let v = Matrix::from_vec(data.len(), 1, data).expect("column");
        self.push(v, Op::L2NormRows(a))
    }

    pub fn reduce_sum(&mut self, a: Var) -> Var {
        let s = self.values[a.0].data().iter().sum();
        self.push(Matrix::scalar(s), Op::ReduceSum(a))
    }

    /// Per-row sum, `n x 1`.
    pub fn row_sum(&mut self, a: Var) -> Var {
        let va = &self.values[a.0];
        let data: Vec<f64> = (0..va.rows()).map(|r| va.row(r).iter().sum()).collect();
        let v = Matrix::from_vec(data.len(), 1, data).expect("column");
        self.push(v, Op::RowSum(a))
    }

    /// `max(x + margin, 0)` elementwise.
    pub fn hinge(&mut self, a: Var, margin: f64) -> Var {
        let v = self.map(a, |x| (x + margin).max(0.0));
        self.push(v, Op::Hinge(a, margin))
    }

    /// `ln(max(x, floor))` elementwise; the gradient is zero where clamped.
    pub fn log_clamped(&mut self, a: Var, floor: f64) -> Var {
        let v = self.map(a, |x| x.max(floor).ln());
        self.push(v, Op::LogClamped(a, floor))
    }

    /// Reverse pass from the scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients, NumError> {
        if self.values[loss.0].shape() != (1, 1) {
            return Err(NumError::Shape(format!(
                "backward needs a 1x1 loss, got {:?}",
                self.values[loss.0].shape()
            )));
        }
        let n = loss.0 + 1;
        let mut grads: Vec<Option<Matrix>> = vec![None; self.values.len()];
        grads[loss.0] = Some(Matrix::scalar(1.0));

        for i in (0..n).rev() {
            let Some(g) = grads[i].take() else { continue };
            self.propagate(i, &g, &mut grads)?;
            grads[i] = Some(g);
        }
        Ok(Gradients {
            grads,
            shapes: self.values.iter().map(Matrix::shape).collect(),
        })
    }

    fn propagate(&self, i: usize, g: &Matrix, grads: &mut [Option<Matrix>]) -> Result<(), NumError> {
        let val = |v: Var| &self.values[v.0];
        match &self.ops[i] {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                // C = A B: dA = G Bᵀ, dB = Aᵀ G
                let da = g.matmul(&val(*b).transpose())?;
                let db = val(*a).t_matmul(g)?;
                accumulate(grads, *a, da)?;
                accumulate(grads, *b, db)?;
            }
            Op::Transpose(a) => accumulate(grads, *a, g.transpose())?,
            Op::ConcatCols(a, b) => {
                let ca = val(*a).cols();
                let cb = val(*b).cols();
                let mut da = Matrix::zeros(g.rows(), ca);
                let mut db = Matrix::zeros(g.rows(), cb);
                for r in 0..g.rows() {
                    da.row_mut(r).copy_from_slice(&g.row(r)[..ca]);
                    db.row_mut(r).copy_from_slice(&g.row(r)[ca..]);
                }
                accumulate(grads, *a, da)?;
                accumulate(grads, *b, db)?;
            }
            Op::SliceCols { a, start } => {
                let (rows, cols) = val(*a).shape();
                let mut da = Matrix::zeros(rows, cols);
                for r in 0..rows {
                    da.row_mut(r)[*start..*start + g.cols()].copy_from_slice(g.row(r));
                }
                accumulate(grads, *a, da)?;
            }
            Op::RowGather { a, index } => {
                let (rows, cols) = val(*a).shape();
                let mut da = Matrix::zeros(rows, cols);
                for (k, &src) in index.iter().enumerate() {
                    for (d, &x) in da.row_mut(src).iter_mut().zip(g.row(k)) {
                        *d += x;
                    }
                }
                accumulate(grads, *a, da)?;
            }
            Op::GatherRowDot {
                a,
                a_index,
                b,
                b_index,
            } => {
                let (va, vb) = (val(*a), val(*b));
                let mut da = Matrix::zeros(va.rows(), va.cols());
                let mut db = Matrix::zeros(vb.rows(), vb.cols());
                for (k, (&ia, &ib)) in a_index.iter().zip(b_index.iter()).enumerate() {
                    let ge = g.data()[k];
                    if ge == 0.0 {
                        continue;
                    }
                    for (d, &x) in da.row_mut(ia).iter_mut().zip(vb.row(ib)) {
                        *d += ge * x;
                    }
                    for (d, &x) in db.row_mut(ib).iter_mut().zip(va.row(ia)) {
                        *d += ge * x;
                    }
                }
                accumulate(grads, *a, da)?;
                accumulate(grads, *b, db)?;
            }
            Op::SegmentSoftmax { a, segments } => {
                let y = &self.values[i];
                let n_seg = segments.iter().max().map_or(0, |m| m + 1);
                let mut inner = vec![0.0; n_seg];
                for (k, &s) in segments.iter().enumerate() {
                    inner[s] += y.data()[k] * g.data()[k];
                }
                let data = segments
                    .iter()
                    .enumerate()
                    .map(|(k, &s)| y.data()[k] * (g.data()[k] - inner[s]))
                    .collect();
                accumulate(grads, *a, Matrix::from_vec(segments.len(), 1, data)?)?;
            }
            Op::SegmentWeightedSum {
                values,
                index,
                weights,
                segments,
            } => {
                let (vv, vw) = (val(*values), val(*weights));
                let mut dv = Matrix::zeros(vv.rows(), vv.cols());
                let mut dw = vec![0.0; segments.len()];
                for (k, &s) in segments.iter().enumerate() {
                    let src = index.as_ref().map_or(k, |idx| idx[k]);
                    let gs = g.row(s);
                    dw[k] = dot(vv.row(src), gs);
                    let w = vw.data()[k];
                    for (d, &x) in dv.row_mut(src).iter_mut().zip(gs) {
                        *d += w * x;
                    }
                }
                accumulate(grads, *values, dv)?;
                accumulate(grads, *weights, Matrix::from_vec(dw.len(), 1, dw)?)?;
            }
            Op::Add(a, b) => {
                accumulate(grads, *a, g.clone())?;
                accumulate(grads, *b, g.clone())?;
            }
            Op::Sub(a, b) => {
                accumulate(grads, *a, g.clone())?;
                let mut neg = g.clone();
                neg.scale_in_place(-1.0);
                accumulate(grads, *b, neg)?;
            }
            Op::Mul(a, b) => {
                let da = hadamard(g, val(*b));
                let db = hadamard(g, val(*a));
                accumulate(grads, *a, da)?;
                accumulate(grads, *b, db)?;
            }
            Op::Scale(a, f) => {
                let mut da = g.clone();
                da.scale_in_place(*f);
                accumulate(grads, *a, da)?;
            }
            Op::Sigmoid(a) => {
                let y = &self.values[i];
                let da = elementwise(g, y, |gi, yi| gi * yi * (1.0 - yi));
                accumulate(grads, *a, da)?;
            }
            Op::LeakyRelu(a, slope) => {
                let da = elementwise(g, val(*a), |gi, x| if x > 0.0 { gi } else { slope * gi });
                accumulate(grads, *a, da)?;
            }
            Op::Tanh(a) => {
                let y = &self.values[i];
                let da = elementwise(g, y, |gi, yi| gi * (1.0 - yi * yi));
                accumulate(grads, *a, da)?;
            }
            Op::L2NormRows(a) => {
                let va = val(*a);
                let y = &self.values[i];
                let mut da = Matrix::zeros(va.rows(), va.cols());
                for r in 0..va.rows() {
                    let norm = y.data()[r];
                    if norm == 0.0 {
                        continue;
                    }
                    let f = g.data()[r] / norm;
                    for (d, &x) in da.row_mut(r).iter_mut().zip(va.row(r)) {
                        *d = f * x;
                    }
                }
                accumulate(grads, *a, da)?;
            }
            Op::ReduceSum(a) => {
                let (r, c) = val(*a).shape();
                accumulate(grads, *a, Matrix::filled(r, c, g.data()[0]))?;
            }
            Op::RowSum(a) => {
                let va = val(*a);
                let mut da = Matrix::zeros(va.rows(), va.cols());
                for r in 0..va.rows() {
                    da.row_mut(r).fill(g.data()[r]);
                }
                accumulate(grads, *a, da)?;
            }
            Op::Hinge(a, margin) => {
                let da = elementwise(g, val(*a), |gi, x| if x + margin > 0.0 { gi } else { 0.0 });
                accumulate(grads, *a, da)?;
            }
            Op::LogClamped(a, floor) => {
                let da = elementwise(g, val(*a), |gi, x| if x > *floor { gi / x } else { 0.0 });
                accumulate(grads, *a, da)?;
            }
        }
        Ok(())
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn check_index(index: &[usize], bound: usize, what: &str) -> Result<(), NumError> {
    match index.iter().find(|&&i| i >= bound) {
        Some(bad) => Err(NumError::Index(format!("{what}: index {bad} out of {bound}"))),
        None => Ok(()),
    }
}

fn hadamard(a: &Matrix, b: &Matrix) -> Matrix {
    elementwise(a, b, |x, y| x * y)
}

fn elementwise(a: &Matrix, b: &Matrix, f: impl Fn(f64, f64) -> f64) -> Matrix {
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
    Matrix::from_vec(a.rows(), a.cols(), data).expect("same shape")
}

fn accumulate(grads: &mut [Option<Matrix>], v: Var, g: Matrix) -> Result<(), NumError> {
    match &mut grads[v.0] {
        Some(existing) => existing.add_assign(&g),
        slot @ None => {
            *slot = Some(g);
            Ok(())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn softmax_single_element_segment_is_one() {
        let mut t = Tape::new();
        let s = t.leaf(Matrix::column(&[42.0]));
        let w = t.segment_softmax(s, Arc::from(vec![0usize])).unwrap();
        assert_eq!(t.value(w).data(), &[1.0]);
    }

    #[test]
    fn softmax_equal_scores_uniform() {
        let mut t = Tape::new();
        let s = t.leaf(Matrix::column(&[0.7, 0.7, 0.7]));
        let w = t.segment_softmax(s, Arc::from(vec![0usize, 0, 0])).unwrap();
        for &x in t.value(w).data() {
            assert!((x - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn softmax_empty_segment_errors() {
        let mut t = Tape::new();
        let s = t.leaf(Matrix::column(&[1.0, 2.0]));
        let err = t.segment_softmax(s, Arc::from(vec![0usize, 2])).unwrap_err();
        assert!(matches!(err, NumError::EmptySegment(1)));
    }

    #[test]
    fn softmax_large_scores_stable() {
        let mut t = Tape::new();
        let s = t.leaf(Matrix::column(&[1000.0, 999.0]));
        let w = t.segment_softmax(s, Arc::from(vec![0usize, 0])).unwrap();
        assert!(t.value(w).is_finite());
        assert!((t.value(w).data()[0] - 0.7310585786300049).abs() < 1e-12);
    }

    #[test]
    fn sigmoid_gradient_at_zero() {
        let mut t = Tape::new();
        let x = t.leaf(Matrix::zeros(2, 3));
        let s = t.sigmoid(x);
        let loss = t.reduce_sum(s);
        let g = t.backward(loss).unwrap();
        assert!(g.get(x).data().iter().all(|&v| v == 0.25));
    }

    #[test]
    fn unused_leaf_gets_zero_gradient() {
        let mut t = Tape::new();
        let x = t.leaf(Matrix::filled(2, 2, 1.5));
        let unused = t.leaf(Matrix::filled(3, 1, 2.0));
        let _dangling = t.scale(unused, 3.0);
        let loss = t.reduce_sum(x);
        let g = t.backward(loss).unwrap();
        assert_eq!(g.get(unused), Matrix::zeros(3, 1));
        assert_eq!(g.get(loss).data(), &[1.0]);
    }

    #[test]
    fn backward_requires_scalar() {
        let mut t = Tape::new();
        let x = t.leaf(Matrix::zeros(2, 1));
        assert!(t.backward(x).is_err());
    }

    #[test]
    fn hinge_inactive_has_zero_grad() {
        let mut t = Tape::new();
        let x = t.leaf(Matrix::column(&[-3.0, 0.5]));
        let h = t.hinge(x, 1.0);
        let loss = t.reduce_sum(h);
        assert_eq!(t.value(h).data(), &[0.0, 1.5]);
        let g = t.backward(loss).unwrap();
        assert_eq!(g.get(x).data(), &[0.0, 1.0]);
    }
}
