//! HT-structure linear layer.
//!
//! The forward pass never forms the dense weight: it is a chain of 2-D
//! matrix products against matricized cores, with an index transformation
//! between products whenever the axes the next core consumes are not already
//! the trailing columns. Gradients follow the tree recursion on frames.

use std::fmt;

use thiserror::Error;

use crate::ht::{HtError, HtWeight};
use crate::labeled::{Axis, Labeled};
use crate::tensor::{self, DenseTensor, MatrixView, TensorError};
use crate::transform::{apply_transform, TransformError, TransformSpec};

#[derive(Debug, Error)]
pub enum LayerError {
    #[error("batch size must be positive")]
    ZeroBatch,
    #[error("input of length {len} exceeds the layer input size {max}")]
    InputTooLong { len: usize, max: usize },
    #[error("buffer of length {len} is not a multiple of batch {batch}")]
    Ragged { len: usize, batch: usize },
    #[error("upstream gradient has length {found}, expected {expected}")]
    Upstream { expected: usize, found: usize },
    #[error("schedule step {step}: {reason}")]
    Schedule { step: usize, reason: String },
    #[error(transparent)]
    Ht(#[from] HtError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Transform(#[from] TransformError),
}

/// Row and column axes of a matricized intermediate, with their sizes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layout {
    pub rows: Vec<(Axis, usize)>,
    pub cols: Vec<(Axis, usize)>,
}

impl Layout {
    pub fn shape(&self) -> (usize, usize) {
        (prod(&self.rows), prod(&self.cols))
    }

    fn axes(&self) -> Vec<Axis> {
        self.rows.iter().chain(&self.cols).map(|&(a, _)| a).collect()
    }
}

impl fmt::Display for Layout {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let show = |v: &[(Axis, usize)]| {
            v.iter()
                .map(|(a, n)| format!("{}:{n}", axis_name(*a)))
                .collect::<Vec<_>>()
                .join(" ")
        };
        write!(f, "[{} | {}]", show(&self.rows), show(&self.cols))
    }
}

fn axis_name(a: Axis) -> String {
    match a {
        Axis::Batch => "batch".into(),
        Axis::Rank(s) => format!("r{s}"),
        Axis::Out(j) => format!("o{}", j + 1),
        Axis::In(j) => format!("i{}", j + 1),
    }
}

fn prod(v: &[(Axis, usize)]) -> usize {
    v.iter().map(|&(_, n)| n).product()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Step {
    /// Right-multiply the current `m x k` matrix by node `node`'s core
    /// matricized as `weight_rows x weight_cols` (`k x n`).
    Multiply {
        node: usize,
        weight_rows: Vec<Axis>,
        weight_cols: Vec<Axis>,
        m: usize,
        k: usize,
        n: usize,
    },
    Transform {
        spec: TransformSpec,
        from: Layout,
        to: Layout,
    },
}

/// Ordered plan of products and transformations for one weight and batch.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerSchedule {
    pub batch: usize,
    pub input: Layout,
    pub steps: Vec<Step>,
    pub output: Layout,
    /// Axis order of the returned output: batch, root rank, then modes.
    pub output_order: Vec<Axis>,
}

impl LayerSchedule {
    pub fn build(w: &HtWeight, batch: usize) -> Result<Self, LayerError> {
        if batch == 0 {
            return Err(LayerError::ZeroBatch);
        }
        let cfg = w.config();
        let tree = w.tree();
        let d = w.order();
        let mut layout = Layout {
            rows: std::iter::once((Axis::Batch, batch))
                .chain((0..d - 1).map(|j| (Axis::In(j), cfg.in_dims[j])))
                .collect(),
            cols: vec![(Axis::In(d - 1), cfg.in_dims[d - 1])],
        };
        let input = layout.clone();
        let mut steps = Vec::new();

        for node in tree.right_first_post_order() {
            let tn = tree.node(node);
            let (consumed, produced): (Vec<(Axis, usize)>, Vec<(Axis, usize)>) = match tn.children
            {
                None => (
                    vec![(Axis::In(node), cfg.in_dims[node])],
                    vec![(Axis::Out(node), cfg.out_dims[node]), (Axis::Rank(node), tn.rank)],
                ),
                Some((l, r)) => (
                    vec![
                        (Axis::Rank(r), tree.node(r).rank),
                        (Axis::Rank(l), tree.node(l).rank),
                    ],
                    vec![(Axis::Rank(node), tn.rank)],
                ),
            };
            let wanted: Vec<Axis> = consumed.iter().map(|&(a, _)| a).collect();
            let current: Vec<Axis> = layout.cols.iter().map(|&(a, _)| a).collect();
            if !same_set(&current, &wanted) {
                let (spec, to) = plan_move(&layout, &wanted).map_err(|reason| {
                    LayerError::Schedule {
                        step: steps.len(),
                        reason,
                    }
                })?;
                steps.push(Step::Transform {
                    spec,
                    from: layout.clone(),
                    to: to.clone(),
                });
                layout = to;
            }
            // the weight's row order follows whatever order the state presents
            let weight_rows: Vec<Axis> = layout.cols.iter().map(|&(a, _)| a).collect();
            let k = prod(&layout.cols);
            let expected_k: usize = consumed.iter().map(|&(_, n)| n).product();
            if k != expected_k {
                return Err(LayerError::Schedule {
                    step: steps.len(),
                    reason: format!("inner size {k} does not match core size {expected_k}"),
                });
            }
            let m = prod(&layout.rows);
            let n = prod(&produced);
            steps.push(Step::Multiply {
                node,
                weight_rows,
                weight_cols: produced.iter().map(|&(a, _)| a).collect(),
                m,
                k,
                n,
            });
            layout.cols = produced;
        }

        let root = tree.root();
        let output_order: Vec<Axis> = [Axis::Batch, Axis::Rank(root)]
            .into_iter()
            .chain((0..d).map(Axis::Out))
            .collect();
        if !same_set(&layout.axes(), &output_order) {
            return Err(LayerError::Schedule {
                step: steps.len(),
                reason: format!("final layout {layout} is not batch x rank x outputs"),
            });
        }
        let schedule = Self {
            batch,
            input,
            steps,
            output: layout,
            output_order,
        };
        schedule.check_chaining()?;
        Ok(schedule)
    }

    pub fn multiply_count(&self) -> usize {
        self.steps
            .iter()
            .filter(|s| matches!(s, Step::Multiply { .. }))
            .count()
    }

    pub fn transforms(&self) -> impl Iterator<Item = &TransformSpec> {
        self.steps.iter().filter_map(|s| match s {
            Step::Transform { spec, .. } => Some(spec),
            _ => None,
        })
    }

    /// Every step consumes exactly the shape its predecessor produced.
    pub fn check_chaining(&self) -> Result<(), LayerError> {
        let mut shape = self.input.shape();
        for (i, step) in self.steps.iter().enumerate() {
            let fail = |reason: String| LayerError::Schedule { step: i, reason };
            match step {
                Step::Multiply { m, k, n, .. } => {
                    if shape != (*m, *k) {
                        return Err(fail(format!("expected {m}x{k}, have {shape:?}")));
                    }
                    shape = (*m, *n);
                }
                Step::Transform { spec, from, to } => {
                    if shape != from.shape() || spec.input_shape() != from.shape() {
                        return Err(fail(format!("transform input {from} vs {shape:?}")));
                    }
                    if spec.output_shape() != to.shape() {
                        return Err(fail(format!("transform output {to}")));
                    }
                    shape = to.shape();
                }
            }
        }
        if shape != self.output.shape() {
            return Err(LayerError::Schedule {
                step: self.steps.len(),
                reason: format!("final shape {shape:?} vs output {}", self.output),
            });
        }
        Ok(())
    }
}

fn same_set(a: &[Axis], b: &[Axis]) -> bool {
    a.len() == b.len() && a.iter().all(|x| b.contains(x))
}

// Moves the axes in `wanted` to the columns with one transformation
// `(A1 A2 A3 | B1 B2) -> (A1 A3 B1 | A2 B2)`: A2 is the block of `wanted`
// found in the rows, B2 the part already at the end of the columns.
fn plan_move(layout: &Layout, wanted: &[Axis]) -> Result<(TransformSpec, Layout), String> {
    let in_rows: Vec<usize> = layout
        .rows
        .iter()
        .enumerate()
        .filter(|(_, (a, _))| wanted.contains(a))
        .map(|(i, _)| i)
        .collect();
    let b2_len = layout
        .cols
        .iter()
        .rev()
        .take_while(|(a, _)| wanted.contains(a))
        .count();
    let b_split = layout.cols.len() - b2_len;
    if layout.cols[..b_split].iter().any(|(a, _)| wanted.contains(a)) {
        return Err(format!("{layout}: consumed column axes are not a suffix"));
    }
    if in_rows.len() + b2_len != wanted.len() {
        return Err(format!("{layout}: missing consumed axes"));
    }
    let (a_start, a_end) = match (in_rows.first(), in_rows.last()) {
        (Some(&f), Some(&l)) => (f, l + 1),
        _ => (layout.rows.len(), layout.rows.len()),
    };
    if a_end - a_start != in_rows.len() {
        return Err(format!("{layout}: consumed row axes are not contiguous"));
    }
    let a1 = &layout.rows[..a_start];
    let a2 = &layout.rows[a_start..a_end];
    let a3 = &layout.rows[a_end..];
    let b1 = &layout.cols[..b_split];
    let b2 = &layout.cols[b_split..];
    let to = Layout {
        rows: a1.iter().chain(a3).chain(b1).copied().collect(),
        cols: a2.iter().chain(b2).copied().collect(),
    };
    let spec = if a2.is_empty() {
        TransformSpec::TypeI {
            a: prod(a1) * prod(a3),
            b1: prod(b1),
            b2: prod(b2),
        }
    } else if b2.is_empty() {
        TransformSpec::TypeIII {
            a1: prod(a1),
            a2: prod(a2),
            a3: prod(a3),
            b: prod(b1),
        }
    } else {
        TransformSpec::TypeII {
            a1: prod(a1),
            a2: prod(a2),
            a3: prod(a3),
            b1: prod(b1),
            b2: prod(b2),
        }
    };
    Ok((spec, to))
}

fn weight_matrix(w: &HtWeight, node: usize, rows: &[Axis], cols: &[Axis]) -> MatrixView {
    let order: Vec<Axis> = rows.iter().chain(cols).copied().collect();
    let t = w
        .labeled_core(node)
        .permute_to(&order)
        .expect("schedule axes match the core");
    let shape = t.tensor.shape();
    let k: usize = shape[..rows.len()].iter().product();
    let n: usize = shape[rows.len()..].iter().product();
    MatrixView::new(k, n, t.tensor.into_data()).expect("core size")
}

fn padded_batch(w: &HtWeight, x: &[f64], batch: usize) -> Result<Vec<f64>, LayerError> {
    if batch == 0 {
        return Err(LayerError::ZeroBatch);
    }
    if x.len() % batch != 0 {
        return Err(LayerError::Ragged {
            len: x.len(),
            batch,
        });
    }
    let len = x.len() / batch;
    let width = w.config().input_size();
    if len > width {
        return Err(LayerError::InputTooLong { len, max: width });
    }
    let mut out = vec![0.0; batch * width];
    for b in 0..batch {
        out[b * width..b * width + len].copy_from_slice(&x[b * len..(b + 1) * len]);
    }
    Ok(out)
}

/// Output length per sample: root rank times the product of output modes.
pub fn output_len(w: &HtWeight) -> usize {
    w.root_rank() * w.config().output_size()
}

/// Runs `schedule` on `x`, a `batch x len` row-major buffer with
/// `len <= prod(I)`. Returns `batch x (R_D * prod(O))`.
pub fn forward_with(
    w: &HtWeight,
    schedule: &LayerSchedule,
    x: &[f64],
) -> Result<Vec<f64>, LayerError> {
    let data = padded_batch(w, x, schedule.batch)?;
    let (r, c) = schedule.input.shape();
    let mut state = MatrixView::new(r, c, data)?;
    for step in &schedule.steps {
        state = match step {
            Step::Multiply {
                node,
                weight_rows,
                weight_cols,
                ..
            } => tensor::matmul(&state, &weight_matrix(w, *node, weight_rows, weight_cols))?,
            Step::Transform { spec, .. } => apply_transform(spec, &state)?,
        };
    }
    let out = &schedule.output;
    let shape: Vec<usize> = out.rows.iter().chain(&out.cols).map(|&(_, n)| n).collect();
    let labeled = Labeled::new(out.axes(), DenseTensor::new(shape, state.into_data())?);
    Ok(labeled.permute_to(&schedule.output_order)?.tensor.into_data())
}

pub fn forward_batch(w: &HtWeight, x: &[f64], batch: usize) -> Result<Vec<f64>, LayerError> {
    let schedule = LayerSchedule::build(w, batch)?;
    forward_with(w, &schedule, x)
}

pub fn forward(w: &HtWeight, x: &[f64]) -> Result<Vec<f64>, LayerError> {
    forward_batch(w, x, 1)
}

fn labeled_input(w: &HtWeight, x: &[f64], batch: usize) -> Result<Labeled, LayerError> {
    let data = padded_batch(w, x, batch)?;
    let d = w.order();
    let shape: Vec<usize> = std::iter::once(batch)
        .chain(w.config().in_dims.iter().copied())
        .collect();
    let axes = std::iter::once(Axis::Batch)
        .chain((0..d).map(Axis::In))
        .collect();
    Ok(Labeled::new(axes, DenseTensor::new(shape, data)?))
}

fn labeled_upstream(w: &HtWeight, dy: &[f64], batch: usize) -> Result<Labeled, LayerError> {
    let expected = batch * output_len(w);
    if dy.len() != expected {
        return Err(LayerError::Upstream {
            expected,
            found: dy.len(),
        });
    }
    let d = w.order();
    let shape: Vec<usize> = [batch, w.root_rank()]
        .into_iter()
        .chain(w.config().out_dims.iter().copied())
        .collect();
    let axes = [Axis::Batch, Axis::Rank(w.tree().root())]
        .into_iter()
        .chain((0..d).map(Axis::Out))
        .collect();
    Ok(Labeled::new(axes, DenseTensor::new(shape, dy.to_vec())?))
}

fn core_axes(w: &HtWeight, id: usize) -> Vec<Axis> {
    match w.tree().node(id).children {
        None => vec![Axis::Rank(id), Axis::Out(id), Axis::In(id)],
        Some((l, r)) => vec![Axis::Rank(id), Axis::Rank(l), Axis::Rank(r)],
    }
}

/// Gradient of `sum(dy * forward(x))` with respect to every core, in node
/// order and shaped like the cores. `x` and `dy` are `batch`-row buffers.
///
/// For each node `s` an environment `G_s` is formed such that the layer
/// output equals `U_s` contracted with `G_s`. At the root `G` is the input;
/// going down, `G_t = (B_s x U_sibling) x G_s`.
pub fn backward_frames(
    w: &HtWeight,
    x: &[f64],
    dy: &[f64],
    batch: usize,
) -> Result<Vec<DenseTensor>, LayerError> {
    let xl = labeled_input(w, x, batch)?;
    let dyl = labeled_upstream(w, dy, batch)?;
    let tree = w.tree();
    let frames = w.frames_below_root();
    let mut env: Vec<Option<Labeled>> = vec![None; tree.len()];
    env[tree.root()] = Some(xl);
    let mut grads: Vec<Option<DenseTensor>> = vec![None; tree.len()];

    // parents before children
    for s in (0..tree.len()).rev() {
        let g = env[s].take().expect("parent environment is ready");
        match tree.node(s).children {
            None => {
                let grad = g.contract(&dyl)?.permute_to(&core_axes(w, s))?;
                grads[s] = Some(grad.tensor);
            }
            Some((l, r)) => {
                let grad = g
                    .contract(&frames[l])?
                    .contract(&frames[r])?
                    .contract(&dyl)?
                    .permute_to(&core_axes(w, s))?;
                grads[s] = Some(grad.tensor);
                let b = w.labeled_core(s);
                for (child, sibling) in [(l, r), (r, l)] {
                    env[child] = Some(b.contract(&frames[sibling])?.contract(&g)?);
                }
            }
        }
    }
    Ok(grads.into_iter().map(Option::unwrap).collect())
}

/// Gradient of `sum(dy * forward(x))` with respect to `x`, truncated to
/// `input_len` entries per sample.
pub fn backward_input(
    w: &HtWeight,
    dy: &[f64],
    batch: usize,
    input_len: usize,
) -> Result<Vec<f64>, LayerError> {
    if batch == 0 {
        return Err(LayerError::ZeroBatch);
    }
    let width = w.config().input_size();
    if input_len > width {
        return Err(LayerError::InputTooLong {
            len: input_len,
            max: width,
        });
    }
    let dyl = labeled_upstream(w, dy, batch)?;
    let tree = w.tree();
    let root = tree.root();
    let (l, r) = tree.node(root).children.expect("root is internal");
    let frames = w.frames_below_root();
    let d = w.order();
    let order: Vec<Axis> = std::iter::once(Axis::Batch)
        .chain((0..d).map(Axis::In))
        .collect();
    let gx = dyl
        .contract(&w.labeled_core(root))?
        .contract(&frames[l])?
        .contract(&frames[r])?
        .permute_to(&order)?;
    let full = gx.tensor.into_data();
    let mut out = Vec::with_capacity(batch * input_len);
    for b in 0..batch {
        out.extend_from_slice(&full[b * width..b * width + input_len]);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ht::HtConfig;

    #[test]
    fn order_four_has_seven_products_six_transforms() {
        let w = HtWeight::zeros(HtConfig::ucf11()).unwrap();
        let s = LayerSchedule::build(&w, 1).unwrap();
        assert_eq!(s.multiply_count(), 7);
        assert_eq!(s.transforms().count(), 6);
        let nodes: Vec<usize> = s
            .steps
            .iter()
            .filter_map(|st| match st {
                Step::Multiply { node, .. } => Some(*node),
                _ => None,
            })
            .collect();
        assert_eq!(nodes, vec![3, 2, 5, 1, 0, 4, 6]);
    }

    #[test]
    fn order_two_has_three_products_two_transforms() {
        let cfg = HtConfig::new(vec![2, 3], vec![2, 2], 1, 1, 1);
        let s = LayerSchedule::build(&HtWeight::zeros(cfg).unwrap(), 3).unwrap();
        assert_eq!(s.multiply_count(), 3);
        assert_eq!(s.transforms().count(), 2);
    }

    #[test]
    fn zero_batch_is_rejected() {
        let w = HtWeight::zeros(HtConfig::new(vec![2, 2], vec![1, 1], 1, 1, 1)).unwrap();
        assert!(matches!(
            LayerSchedule::build(&w, 0),
            Err(LayerError::ZeroBatch)
        ));
    }

    #[test]
    fn all_ones_sums_inputs() {
        let w = HtWeight::filled(HtConfig::new(vec![2, 2], vec![1, 1], 1, 1, 1), 1.0).unwrap();
        assert_eq!(forward(&w, &[1.0, 2.0, 3.0, 4.0]).unwrap(), vec![10.0]);
        assert_eq!(forward(&w, &[0.0; 4]).unwrap(), vec![0.0]);
        assert!(matches!(
            forward(&w, &[0.0; 5]),
            Err(LayerError::InputTooLong { len: 5, max: 4 })
        ));
    }

    #[test]
    fn short_input_is_zero_padded() {
        let w = HtWeight::filled(HtConfig::new(vec![2, 2], vec![1, 1], 1, 1, 1), 1.0).unwrap();
        assert_eq!(forward(&w, &[1.0, 2.0]).unwrap(), vec![3.0]);
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let w = HtWeight::random(HtConfig::new(vec![2, 3], vec![2, 1], 2, 2, 2), 1).unwrap();
        let x = [1.0, -2.0, 0.5, 3.0, 1.0, 2.0];
        let g = backward_frames(&w, &x, &[0.0; 4], 1).unwrap();
        for (gi, c) in g.iter().zip(w.cores()) {
            assert_eq!(gi.shape(), c.shape());
            assert!(gi.data().iter().all(|&v| v == 0.0));
        }
        let gx = backward_input(&w, &[0.0; 4], 1, 6).unwrap();
        assert_eq!(gx, vec![0.0; 6]);
        assert!(matches!(
            backward_frames(&w, &x, &[0.0; 3], 1),
            Err(LayerError::Upstream { .. })
        ));
    }
}
