use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{DimTree, HtConfig, HtError};
use crate::labeled::{Axis, Labeled};
use crate::tensor::{DenseTensor, MatrixView};

/// An HT-format weight: configuration, tree, and one core per tree node.
///
/// Leaf cores have shape `[R_j, O_j, I_j]` (equivalently the `R_j x O_j*I_j`
/// leaf frame), transfer cores `[R_s, R_s1, R_s2]`.
#[derive(Debug, Clone, PartialEq)]
pub struct HtWeight {
    config: HtConfig,
    tree: DimTree,
    cores: Vec<DenseTensor>,
    seed: Option<u64>,
}

fn expected_shape(config: &HtConfig, tree: &DimTree, id: usize) -> Vec<usize> {
    let node = tree.node(id);
    match node.children {
        None => vec![node.rank, config.out_dims[id], config.in_dims[id]],
        Some((l, r)) => vec![node.rank, tree.node(l).rank, tree.node(r).rank],
    }
}

impl HtWeight {
    pub fn from_cores(config: HtConfig, cores: Vec<DenseTensor>) -> Result<Self, HtError> {
        config.validate()?;
        let tree = config.tree()?;
        if cores.len() != tree.len() {
            return Err(HtError::Checkpoint(format!(
                "expected {} cores, got {}",
                tree.len(),
                cores.len()
            )));
        }
        for (id, c) in cores.iter().enumerate() {
            let expected = expected_shape(&config, &tree, id);
            if c.shape() != expected.as_slice() {
                return Err(HtError::NodeShape {
                    node: id,
                    expected,
                    found: c.shape().to_vec(),
                });
            }
        }
        Ok(Self {
            config,
            tree,
            cores,
            seed: None,
        })
    }

    pub fn filled(config: HtConfig, value: f64) -> Result<Self, HtError> {
        config.validate()?;
        let tree = config.tree()?;
        let cores = (0..tree.len())
            .map(|id| {
                let shape = expected_shape(&config, &tree, id);
                let n = shape.iter().product();
                DenseTensor::new(shape, vec![value; n])
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self {
            config,
            tree,
            cores,
            seed: None,
        })
    }

    pub fn zeros(config: HtConfig) -> Result<Self, HtError> {
        Self::filled(config, 0.0)
    }

    /// Gaussian initialization keeping reconstructed entries at variance
    /// `1 / prod(I_j)`: leaf entries get variance `1/I_j`, transfer entries
    /// `1/(R_s1 * R_s2)`.
    pub fn random(config: HtConfig, seed: u64) -> Result<Self, HtError> {
        let mut w = Self::zeros(config)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for id in 0..w.tree.len() {
            let shape = w.cores[id].shape().to_vec();
            let var = if w.tree.node(id).is_leaf() {
                1.0 / shape[2] as f64
            } else {
                1.0 / (shape[1] * shape[2]) as f64
            };
            let normal = Normal::new(0.0, var.sqrt()).expect("finite std");
            for v in w.cores[id].data_mut() {
                *v = normal.sample(&mut rng);
            }
        }
        w.seed = Some(seed);
        Ok(w)
    }

    pub fn config(&self) -> &HtConfig {
        &self.config
    }

    pub fn tree(&self) -> &DimTree {
        &self.tree
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    pub(crate) fn set_seed(&mut self, seed: Option<u64>) {
        self.seed = seed;
    }

    pub fn order(&self) -> usize {
        self.config.order()
    }

    pub fn root_rank(&self) -> usize {
        self.tree.node(self.tree.root()).rank
    }

    pub fn cores(&self) -> &[DenseTensor] {
        &self.cores
    }

    pub fn core(&self, id: usize) -> &DenseTensor {
        &self.cores[id]
    }

    pub fn core_mut(&mut self, id: usize) -> &mut DenseTensor {
        &mut self.cores[id]
    }

    /// Leaf frame of mode `j` as an `R_j x (O_j * I_j)` matrix.
    pub fn leaf_frame(&self, j: usize) -> MatrixView {
        let c = &self.cores[j];
        let s = c.shape();
        MatrixView::new(s[0], s[1] * s[2], c.data().to_vec()).expect("leaf core is well formed")
    }

    /// Number of stored real values.
    pub fn param_count(&self) -> usize {
        self.cores.iter().map(DenseTensor::len).sum()
    }

    pub(crate) fn labeled_core(&self, id: usize) -> Labeled {
        let node = self.tree.node(id);
        let axes = match node.children {
            None => vec![Axis::Rank(id), Axis::Out(id), Axis::In(id)],
            Some((l, r)) => vec![Axis::Rank(id), Axis::Rank(l), Axis::Rank(r)],
        };
        Labeled::new(axes, self.cores[id].clone())
    }

    /// Full frame `U_s` of every node, axes `[Rank(s), Out(first..=last), In(first..=last)]`.
    pub fn frames(&self) -> Vec<Labeled> {
        self.build_frames(self.tree.len())
    }

    /// Frames of every node except the root (which is the dense weight).
    pub(crate) fn frames_below_root(&self) -> Vec<Labeled> {
        self.build_frames(self.tree.root())
    }

    fn build_frames(&self, count: usize) -> Vec<Labeled> {
        let mut frames: Vec<Labeled> = Vec::with_capacity(count);
        for id in 0..count {
            let node = self.tree.node(id);
            let frame = match node.children {
                None => self.labeled_core(id),
                Some((l, r)) => {
                    // children always precede parents in id order
                    let t = self
                        .labeled_core(id)
                        .contract(&frames[l])
                        .and_then(|t| t.contract(&frames[r]))
                        .expect("frame ranks are consistent");
                    let order: Vec<Axis> = std::iter::once(Axis::Rank(id))
                        .chain(node.modes().map(Axis::Out))
                        .chain(node.modes().map(Axis::In))
                        .collect();
                    t.permute_to(&order).expect("frame axes are complete")
                }
            };
            frames.push(frame);
        }
        frames
    }

    /// Dense tensor of shape `[R_D, O_1..O_d, I_1..I_d]`.
    pub fn reconstruct(&self) -> DenseTensor {
        self.frames().pop().unwrap().tensor
    }

    /// One `prod(O) x prod(I)` matrix per root-rank slice.
    pub fn gate_matrices(&self) -> Vec<MatrixView> {
        let full = self.reconstruct();
        let rows = self.config.output_size();
        let cols = self.config.input_size();
        full.data()
            .chunks(rows * cols)
            .map(|c| MatrixView::new(rows, cols, c.to_vec()).expect("slice size"))
            .collect()
    }
}

/// Parameter count of an HT weight (biases excluded).
pub fn count_params(config: &HtConfig) -> Result<usize, HtError> {
    config.validate()?;
    let tree = config.tree()?;
    Ok((0..tree.len())
        .map(|id| expected_shape(config, &tree, id).iter().product::<usize>())
        .sum())
}
