use crate::crypto::Block;
use crate::error::LdcfError;

use super::SubFilterId;

#[derive(Debug, Clone, PartialEq, Eq)]
enum Node {
    Leaf { id: SubFilterId, digest: Option<Block> },
    Inner { children: [usize; 2] },
}

/// Trusted record of the LDCF split state. Leaves partition the fingerprint
/// space by prefix; in verifiable mode each leaf also carries the digest of
/// its sub-filter.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IndexTree {
    fingerprint_bits: u8,
    nodes: Vec<Node>,
    leaf_count: usize,
}

impl IndexTree {
    pub fn new(fingerprint_bits: u8) -> Self {
        IndexTree {
            fingerprint_bits,
            nodes: vec![Node::Leaf {
                id: SubFilterId::ROOT,
                digest: None,
            }],
            leaf_count: 1,
        }
    }

    pub fn fingerprint_bits(&self) -> u8 {
        self.fingerprint_bits
    }

    pub fn leaf_count(&self) -> usize {
        self.leaf_count
    }

    /// The unique leaf whose label is a prefix of `fingerprint`.
    pub fn route(&self, fingerprint: u16) -> SubFilterId {
        let mut node = 0;
        let mut depth = 0u8;
        loop {
            match &self.nodes[node] {
                Node::Leaf { id, .. } => return *id,
                Node::Inner { children } => {
                    let bit = (fingerprint >> (self.fingerprint_bits - depth - 1)) & 1;
                    node = children[bit as usize];
                    depth += 1;
                }
            }
        }
    }

    fn locate(&self, id: SubFilterId) -> Option<usize> {
        let mut node = 0;
        for depth in 0..id.len() {
            match &self.nodes[node] {
                Node::Leaf { .. } => return None,
                Node::Inner { children } => node = children[id.bit(depth) as usize],
            }
        }
        Some(node)
    }

    pub fn is_leaf(&self, id: SubFilterId) -> bool {
        matches!(self.locate(id).map(|n| &self.nodes[n]), Some(Node::Leaf { .. }))
    }

    pub fn digest(&self, id: SubFilterId) -> Option<Block> {
        match self.locate(id).map(|n| &self.nodes[n]) {
            Some(Node::Leaf { digest, .. }) => *digest,
            _ => None,
        }
    }

    pub fn set_digest(&mut self, id: SubFilterId, value: Block) -> bool {
        match self.locate(id).map(|n| &mut self.nodes[n]) {
            Some(Node::Leaf { digest, .. }) => {
                *digest = Some(value);
                true
            }
            _ => false,
        }
    }

    /// Replaces leaf `id` with its two children (digests unset).
    pub fn split(&mut self, id: SubFilterId) -> Result<(), LdcfError> {
        if id.len() + 1 >= self.fingerprint_bits {
            return Err(LdcfError::CapacityExhausted(id));
        }
        let node = self
            .locate(id)
            .filter(|n| matches!(self.nodes[*n], Node::Leaf { .. }))
            .ok_or(LdcfError::Params("split target is not a leaf"))?;
        let zero = self.nodes.len();
        self.nodes.push(Node::Leaf {
            id: id.child(0),
            digest: None,
        });
        self.nodes.push(Node::Leaf {
            id: id.child(1),
            digest: None,
        });
        self.nodes[node] = Node::Inner {
            children: [zero, zero + 1],
        };
        self.leaf_count += 1;
        Ok(())
    }

    pub fn leaves(&self) -> Vec<SubFilterId> {
        let mut out = Vec::with_capacity(self.leaf_count);
        let mut stack = vec![0];
        while let Some(node) = stack.pop() {
            match &self.nodes[node] {
                Node::Leaf { id, .. } => out.push(*id),
                Node::Inner { children } => {
                    stack.push(children[1]);
                    stack.push(children[0]);
                }
            }
        }
        out
    }

    pub fn depth(&self) -> u8 {
        self.leaves().iter().map(|l| l.len()).max().unwrap_or(0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unsplit_tree_routes_everything_to_root() {
        let tree = IndexTree::new(16);
        for fp in [1u16, 0x8000, 0xffff, 0x1234] {
            assert_eq!(tree.route(fp), SubFilterId::ROOT);
        }
    }

    #[test]
    fn first_split_routes_by_leading_bit() {
        let mut tree = IndexTree::new(16);
        tree.split(SubFilterId::ROOT).unwrap();
        assert_eq!(tree.route(0x7fff), SubFilterId::ROOT.child(0));
        assert_eq!(tree.route(0x8000), SubFilterId::ROOT.child(1));
        assert_eq!(tree.route(0x7fff).to_string(), "0");
        assert!(!tree.is_leaf(SubFilterId::ROOT));
        assert!(tree.split(SubFilterId::ROOT).is_err());
    }

    #[test]
    fn every_fingerprint_routes_to_exactly_one_leaf() {
        let mut tree = IndexTree::new(16);
        tree.split(SubFilterId::ROOT).unwrap();
        tree.split(SubFilterId::ROOT.child(1)).unwrap();
        tree.split(SubFilterId::ROOT.child(1).child(0)).unwrap();
        tree.split(SubFilterId::ROOT.child(0)).unwrap();
        let leaves = tree.leaves();
        assert_eq!(leaves.len(), tree.leaf_count());
        for fp in 1..=u16::MAX {
            let routed = tree.route(fp);
            let covering: Vec<_> = leaves.iter().filter(|l| l.covers(fp, 16)).collect();
            assert_eq!(covering, vec![&routed]);
        }
    }

    #[test]
    fn digests_live_on_leaves() {
        let mut tree = IndexTree::new(16);
        assert!(tree.set_digest(SubFilterId::ROOT, [1; 32]));
        assert_eq!(tree.digest(SubFilterId::ROOT), Some([1; 32]));
        tree.split(SubFilterId::ROOT).unwrap();
        assert_eq!(tree.digest(SubFilterId::ROOT), None);
        assert!(!tree.set_digest(SubFilterId::ROOT, [2; 32]));
        assert_eq!(tree.digest(SubFilterId::ROOT.child(0)), None);
    }

    #[test]
    fn depth_is_bounded_by_fingerprint_width() {
        let mut tree = IndexTree::new(4);
        let mut id = SubFilterId::ROOT;
        while tree.split(id).is_ok() {
            id = id.child(1);
        }
        assert_eq!(tree.depth(), 3);
    }
}
