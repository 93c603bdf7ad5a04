//! Validated rooted dependency tree over 1-based token indices
//! (head 0 marks the root).

use crate::error::{Error, Result, TreeError};

#[derive(Clone, Debug)]
pub struct DepTree {
    n: usize,
    head: Vec<usize>,
    children: Vec<Vec<usize>>,
    root: usize,
}

impl DepTree {
    /// Builds and validates a tree from per-token heads (`heads[i-1]` is the
    /// head of token `i`). Exactly one root, no cycles; non-projective trees
    /// are accepted.
    pub fn new(heads: &[usize]) -> Result<Self> {
        let n = heads.len();
        let mut root = None;
        for (i0, &h) in heads.iter().enumerate() {
            let i = i0 + 1;
            if h > n {
                return Err(TreeError::HeadOutOfRange { index: i, head: h, n }.into());
            }
            if h == i {
                return Err(TreeError::SelfHead(i).into());
            }
            if h == 0 {
                match root {
                    None => root = Some(i),
                    Some(r) => return Err(TreeError::MultipleRoots(vec![r, i]).into()),
                }
            }
        }
        let root = root.ok_or(Error::Tree(TreeError::NoRoot))?;

        // every node must reach the root; a walk longer than n is a cycle
        let mut state = vec![0u8; n + 1]; // 0 unvisited, 1 on path, 2 done
        state[root] = 2;
        for start in 1..=n {
            if state[start] != 0 {
                continue;
            }
            let mut path = Vec::new();
            let mut cur = start;
            loop {
                if state[cur] == 2 {
                    break;
                }
                if state[cur] == 1 {
                    // cur closes a cycle; report the cycle's node set
                    let pos = path.iter().position(|&p| p == cur).unwrap();
                    let mut cycle: Vec<usize> = path[pos..].to_vec();
                    cycle.sort_unstable();
                    return Err(TreeError::Cycle(cycle).into());
                }
                state[cur] = 1;
                path.push(cur);
                cur = heads[cur - 1];
            }
            for p in path {
                state[p] = 2;
            }
        }

        let mut children = vec![Vec::new(); n + 1];
        for (i0, &h) in heads.iter().enumerate() {
            if h != 0 {
                children[h].push(i0 + 1);
            }
        }
        // insertion is in ascending surface order already

        Ok(DepTree {
            n,
            head: heads.to_vec(),
            children,
            root,
        })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn root(&self) -> usize {
        self.root
    }

    fn check_index(&self, i: usize) -> Result<()> {
        if i == 0 || i > self.n {
            Err(Error::IndexRange { index: i, n: self.n })
        } else {
            Ok(())
        }
    }

    /// Parent of `i`; `None` for the root.
    pub fn head_of(&self, i: usize) -> Result<Option<usize>> {
        self.check_index(i)?;
        let h = self.head[i - 1];
        Ok(if h == 0 { None } else { Some(h) })
    }

    /// Dependents of `i`, ascending surface order.
    pub fn children_of(&self, i: usize) -> Result<&[usize]> {
        self.check_index(i)?;
        Ok(&self.children[i])
    }

    /// Other children of `i`'s head, ascending; empty for the root.
    pub fn siblings_of(&self, i: usize) -> Result<Vec<usize>> {
        self.check_index(i)?;
        match self.head_of(i)? {
            None => Ok(Vec::new()),
            Some(h) => Ok(self
                .children[h]
                .iter()
                .copied()
                .filter(|&c| c != i)
                .collect()),
        }
    }

    /// Indented text rendering, for debugging.
    pub fn pretty(&self, forms: &[String]) -> String {
        fn rec(tree: &DepTree, forms: &[String], i: usize, depth: usize, out: &mut String) {
            let name = forms.get(i - 1).map(String::as_str).unwrap_or("?");
            out.push_str(&"  ".repeat(depth));
            out.push_str(&format!("{i}: {name}\n"));
            for &c in &tree.children[i] {
                rec(tree, forms, c, depth + 1, out);
            }
        }
        let mut out = String::new();
        rec(self, forms, self.root, 0, &mut out);
        out
    }
}
