use super::{BlockId, Function, IrError};

/// Dominator tree over the blocks of a function, rooted at the entry.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DomTree {
    idom: Vec<Option<BlockId>>,
    children: Vec<Vec<BlockId>>,
    preorder: Vec<BlockId>,
}

impl DomTree {
    pub fn compute(f: &Function) -> Result<DomTree, IrError> {
        let succs: Vec<Vec<usize>> = f
            .blocks
            .iter()
            .map(|b| b.term.successors().into_iter().map(BlockId::index).collect())
            .collect();
        DomTree::from_successors(&succs).map_err(|b| IrError::Unreachable(b as u32))
    }

    /// Iterative dataflow construction over reverse postorder
    /// (Cooper, Harvey & Kennedy). Block 0 is the root.
    ///
    /// Returns the first unreachable block as the error.
    pub fn from_successors(succs: &[Vec<usize>]) -> Result<DomTree, usize> {
        let n = succs.len();
        let mut preds = vec![Vec::new(); n];
        for (b, ss) in succs.iter().enumerate() {
            for &s in ss {
                preds[s].push(b);
            }
        }

        let mut post = Vec::with_capacity(n);
        let mut seen = vec![false; n];
        let mut stack = vec![(0usize, 0usize)];
        seen[0] = true;
        while let Some(&mut (b, ref mut next)) = stack.last_mut() {
            if let Some(&s) = succs[b].get(*next) {
                *next += 1;
                if !seen[s] {
                    seen[s] = true;
                    stack.push((s, 0));
                }
            } else {
                post.push(b);
                stack.pop();
            }
        }
        if let Some(b) = seen.iter().position(|s| !s) {
            return Err(b);
        }
        let mut po_num = vec![0; n];
        for (i, &b) in post.iter().enumerate() {
            po_num[b] = i;
        }

        let mut idom: Vec<Option<usize>> = vec![None; n];
        idom[0] = Some(0);
        let intersect = |idom: &[Option<usize>], mut a: usize, mut b: usize| {
            while a != b {
                while po_num[a] < po_num[b] {
                    a = idom[a].unwrap();
                }
                while po_num[b] < po_num[a] {
                    b = idom[b].unwrap();
                }
            }
            a
        };
        let mut changed = true;
        while changed {
            changed = false;
            for &b in post.iter().rev().skip(1) {
                let mut new = None;
                for &p in &preds[b] {
                    if idom[p].is_some() {
                        new = Some(match new {
                            None => p,
                            Some(cur) => intersect(&idom, p, cur),
                        });
                    }
                }
                if new != idom[b] {
                    idom[b] = new;
                    changed = true;
                }
            }
        }

        let mut children = vec![Vec::new(); n];
        for b in 1..n {
            children[idom[b].unwrap()].push(BlockId(b as u32));
        }
        let mut preorder = Vec::with_capacity(n);
        let mut stack = vec![BlockId(0)];
        while let Some(b) = stack.pop() {
            preorder.push(b);
            for &c in children[b.index()].iter().rev() {
                stack.push(c);
            }
        }
        let idom = idom
            .into_iter()
            .enumerate()
            .map(|(b, d)| if b == 0 { None } else { d.map(|x| BlockId(x as u32)) })
            .collect();
        Ok(DomTree { idom, children, preorder })
    }

    pub fn idom(&self, b: BlockId) -> Option<BlockId> {
        self.idom[b.index()]
    }

    pub fn children(&self, b: BlockId) -> &[BlockId] {
        &self.children[b.index()]
    }

    /// Blocks in dominator-tree preorder (parents before children, siblings
    /// by block id).
    pub fn preorder(&self) -> &[BlockId] {
        &self.preorder
    }

    pub fn dominates(&self, a: BlockId, b: BlockId) -> bool {
        let mut cur = Some(b);
        while let Some(c) = cur {
            if c == a {
                return true;
            }
            cur = self.idom(c);
        }
        false
    }

    pub fn strictly_dominates(&self, a: BlockId, b: BlockId) -> bool {
        a != b && self.dominates(a, b)
    }

    /// Strict dominators of `b`, outermost first.
    pub fn dominators(&self, b: BlockId) -> Vec<BlockId> {
        let mut out = Vec::new();
        let mut cur = self.idom(b);
        while let Some(c) = cur {
            out.push(c);
            cur = self.idom(c);
        }
        out.reverse();
        out
    }

    pub fn len(&self) -> usize {
        self.idom.len()
    }

    pub fn is_empty(&self) -> bool {
        self.idom.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// `d` dominates `b` iff `b` is unreachable from the root once `d` is
    /// removed (or `d == b`).
    fn brute_dominates(succs: &[Vec<usize>], d: usize, b: usize) -> bool {
        if d == b {
            return true;
        }
        if d == 0 {
            return true;
        }
        let mut seen = vec![false; succs.len()];
        let mut stack = vec![0];
        seen[0] = true;
        while let Some(x) = stack.pop() {
            for &s in &succs[x] {
                if s != d && !seen[s] {
                    seen[s] = true;
                    stack.push(s);
                }
            }
        }
        !seen[b]
    }

    fn brute_idom(succs: &[Vec<usize>], b: usize) -> Option<usize> {
        if b == 0 {
            return None;
        }
        let strict: Vec<usize> = (0..succs.len())
            .filter(|&d| d != b && brute_dominates(succs, d, b))
            .collect();
        // the immediate dominator is the strict dominator dominated by all others
        strict
            .iter()
            .copied()
            .find(|&d| strict.iter().all(|&o| brute_dominates(succs, o, d)))
    }

    #[test]
    fn single_block() {
        let t = DomTree::from_successors(&[vec![]]).unwrap();
        assert_eq!(t.preorder(), &[BlockId(0)]);
        assert_eq!(t.idom(BlockId(0)), None);
    }

    #[test]
    fn loop_skeleton() {
        // entry -> header -> {body -> header, exit}
        let t = DomTree::from_successors(&[vec![1], vec![2, 3], vec![1], vec![]]).unwrap();
        assert!(t.dominates(BlockId(1), BlockId(2)));
        assert!(t.dominates(BlockId(1), BlockId(3)));
        assert_eq!(t.idom(BlockId(3)), Some(BlockId(1)));
    }

    #[test]
    fn diamond() {
        let t = DomTree::from_successors(&[vec![1, 2], vec![3], vec![3], vec![]]).unwrap();
        assert_eq!(t.idom(BlockId(3)), Some(BlockId(0)));
        assert!(!t.dominates(BlockId(1), BlockId(3)));
    }

    #[test]
    fn unreachable_reported() {
        assert_eq!(DomTree::from_successors(&[vec![], vec![0]]), Err(1));
    }

    fn arb_cfg() -> impl Strategy<Value = Vec<Vec<usize>>> {
        (1usize..=8).prop_flat_map(|n| {
            proptest::collection::vec(proptest::collection::vec(0..n, 0..=2), n).prop_map(move |mut succs| {
                // chain every block off an earlier one so all are reachable
                for b in 1..n {
                    let parent = (b * 7 + 3) % b;
                    if !succs[parent].contains(&b) {
                        succs[parent].push(b);
                    }
                }
                succs
            })
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]
        #[test]
        fn matches_path_enumeration_oracle(succs in arb_cfg()) {
            let t = DomTree::from_successors(&succs).unwrap();
            for b in 0..succs.len() {
                prop_assert_eq!(t.idom(BlockId(b as u32)).map(BlockId::index), brute_idom(&succs, b));
                for d in 0..succs.len() {
                    prop_assert_eq!(t.dominates(BlockId(d as u32), BlockId(b as u32)), brute_dominates(&succs, d, b));
                }
            }
        }
    }
}
