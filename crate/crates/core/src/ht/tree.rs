use super::HtError;

/// One node of the dimension tree. Modes are stored zero-based and inclusive;
/// [`TreeNode::dimension_set`] gives the one-based set.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TreeNode {
    pub first: usize,
    pub last: usize,
    pub rank: usize,
    pub children: Option<(usize, usize)>,
    pub parent: Option<usize>,
}

impl TreeNode {
    pub fn is_leaf(&self) -> bool {
        self.children.is_none()
    }

    pub fn modes(&self) -> std::ops::RangeInclusive<usize> {
        self.first..=self.last
    }

    pub fn dimension_set(&self) -> Vec<usize> {
        (self.first + 1..=self.last + 1).collect()
    }

    pub fn len(&self) -> usize {
        self.last - self.first + 1
    }
}

/// Balanced binary dimension tree.
///
/// Node ids: leaves occupy `0..d` (leaf for mode `j` is id `j`), internal
/// nodes follow in post-order, so the root is always the last id. This is
/// also the serialization order of checkpoints.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DimTree {
    order: usize,
    nodes: Vec<TreeNode>,
}

impl DimTree {
    pub fn build(
        order: usize,
        leaf_ranks: &[usize],
        non_leaf_rank: usize,
        root_rank: usize,
    ) -> Result<Self, HtError> {
        if order < 2 {
            return Err(HtError::OrderTooSmall(order));
        }
        if leaf_ranks.len() != order {
            return Err(HtError::RankCount {
                expected: order,
                got: leaf_ranks.len(),
            });
        }
        if leaf_ranks.iter().any(|&r| r == 0) || non_leaf_rank == 0 || root_rank == 0 {
            return Err(HtError::ZeroRank);
        }
        let mut nodes: Vec<TreeNode> = leaf_ranks
            .iter()
            .enumerate()
            .map(|(j, &rank)| TreeNode {
                first: j,
                last: j,
                rank,
                children: None,
                parent: None,
            })
            .collect();
        let root = split(&mut nodes, 0, order - 1, non_leaf_rank);
        nodes[root].rank = root_rank;
        Ok(Self { order, nodes })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn nodes(&self) -> &[TreeNode] {
        &self.nodes
    }

    pub fn node(&self, id: usize) -> &TreeNode {
        &self.nodes[id]
    }

    pub fn root(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn internal_ids(&self) -> impl Iterator<Item = usize> + '_ {
        self.order..self.nodes.len()
    }

    pub fn sibling(&self, id: usize) -> Option<usize> {
        let p = self.nodes[id].parent?;
        let (a, b) = self.nodes[p].children.unwrap();
        Some(if a == id { b } else { a })
    }

    /// Post-order visiting the right child before the left one. Starts at
    /// the last mode, which lets the layer consume the input in its natural
    /// row-major layout.
    pub fn right_first_post_order(&self) -> Vec<usize> {
        fn walk(t: &DimTree, id: usize, out: &mut Vec<usize>) {
            if let Some((l, r)) = t.nodes[id].children {
                walk(t, r, out);
                walk(t, l, out);
            }
            out.push(id);
        }
        let mut out = Vec::with_capacity(self.nodes.len());
        walk(self, self.root(), &mut out);
        out
    }
}

// s1 = {first .. m}, s2 = {m+1 .. last} with m = first + floor(|s|/2) - 1.
fn split(nodes: &mut Vec<TreeNode>, first: usize, last: usize, rank: usize) -> usize {
    if first == last {
        return first;
    }
    let size = last - first + 1;
    let m = first + size / 2 - 1;
    let left = split(nodes, first, m, rank);
    let right = split(nodes, m + 1, last, rank);
    let id = nodes.len();
    nodes.push(TreeNode {
        first,
        last,
        rank,
        children: Some((left, right)),
        parent: None,
    });
    nodes[left].parent = Some(id);
    nodes[right].parent = Some(id);
    id
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sets(t: &DimTree) -> Vec<Vec<usize>> {
        t.internal_ids()
            .map(|id| t.node(id).dimension_set())
            .collect()
    }

    #[test]
    fn order_four_matches_standard_example() {
        let t = DimTree::build(4, &[1; 4], 1, 1).unwrap();
        assert_eq!(sets(&t), vec![vec![1, 2], vec![3, 4], vec![1, 2, 3, 4]]);
        for j in 0..4 {
            assert_eq!(t.node(j).dimension_set(), vec![j + 1]);
            assert!(t.node(j).is_leaf());
        }
    }

    #[test]
    fn order_two_is_root_over_two_leaves() {
        let t = DimTree::build(2, &[3, 2], 5, 4).unwrap();
        assert_eq!(t.len(), 3);
        assert_eq!(t.node(t.root()).children, Some((0, 1)));
        assert_eq!(t.node(t.root()).rank, 4);
    }

    #[test]
    fn order_five_splits_two_three() {
        let t = DimTree::build(5, &[1; 5], 2, 1).unwrap();
        let root = t.node(t.root());
        let (l, r) = root.children.unwrap();
        assert_eq!(t.node(l).dimension_set(), vec![1, 2]);
        assert_eq!(t.node(r).dimension_set(), vec![3, 4, 5]);
        let (rl, rr) = t.node(r).children.unwrap();
        assert_eq!(t.node(rl).dimension_set(), vec![3]);
        assert_eq!(t.node(rr).dimension_set(), vec![4, 5]);
    }

    #[test]
    fn rejects_bad_configs() {
        assert!(matches!(
            DimTree::build(1, &[1], 1, 1),
            Err(HtError::OrderTooSmall(1))
        ));
        assert!(matches!(
            DimTree::build(3, &[1, 0, 1], 1, 1),
            Err(HtError::ZeroRank)
        ));
        assert!(DimTree::build(3, &[1, 1, 1], 0, 1).is_err());
    }

    #[test]
    fn right_first_order_starts_at_last_mode() {
        let t = DimTree::build(4, &[1; 4], 1, 1).unwrap();
        // leaves 4,3 then {3,4}, leaves 2,1 then {1,2}, then root
        assert_eq!(t.right_first_post_order(), vec![3, 2, 5, 1, 0, 4, 6]);
    }
}
