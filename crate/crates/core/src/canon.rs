//! Depth-first canonical node ordering.
//!
//! The traversal starts at a maximum-degree node and descends into unvisited
//! neighbors in ascending degree order; when a component is exhausted the
//! next root is again a maximum-degree unvisited node. Degree ties are first
//! refined by colour refinement (1-WL), which orders nodes by degree and then
//! by the multiset of neighbour colours. Whatever ties remain are resolved by
//! search: every admissible traversal is scored by its adjacency-vector code
//! and the lexicographically largest wins. Interchangeable twins (nodes with
//! identical neighbourhoods) are explored once.
//!
//! The resulting order depends only on the isomorphism class of the input,
//! so node-permuted copies of a graph map to the same labelled graph.

use crate::graph::Graph;

/// Search nodes visited before falling back to the best traversal found.
const SEARCH_BUDGET: usize = 250_000;

/// Returns the canonically relabelled graph.
pub fn canonical_order(g: &Graph) -> Graph {
    let order = canonical_permutation(g);
    g.reorder(&order).expect("canonical permutation is a permutation")
}

/// `order[k]` is the original index of the node placed at position `k`.
pub fn canonical_permutation(g: &Graph) -> Vec<usize> {
    let n = g.n();
    if n == 0 {
        return Vec::new();
    }
    let colors = refine_colors(g);
    let adj = g.neighbors();
    let mut search = Search {
        g,
        adj: &adj,
        colors: &colors,
        order: Vec::with_capacity(n),
        code: Vec::with_capacity(n * (n - 1) / 2),
        visited: vec![false; n],
        best_order: Vec::new(),
        best_code: Vec::new(),
        steps: 0,
    };
    search.explore(Vec::new());
    if search.steps > SEARCH_BUDGET {
        log::debug!("canonical search budget exhausted on {n}-node graph");
    }
    search.best_order
}

/// Stable colour refinement seeded with node degrees. Colours are ranks of
/// sorted signatures, so their order refines the degree order.
pub fn refine_colors(g: &Graph) -> Vec<usize> {
    let adj = g.neighbors();
    let mut colors = g.degrees();
    let mut classes = distinct(&colors);
    loop {
        let sigs: Vec<(usize, Vec<usize>)> = (0..g.n())
            .map(|v| {
                let mut nb: Vec<usize> = adj[v].iter().map(|&u| colors[u]).collect();
                nb.sort_unstable();
                (colors[v], nb)
            })
            .collect();
        let mut uniq = sigs.clone();
        uniq.sort();
        uniq.dedup();
        let next: Vec<usize> = sigs
            .iter()
            .map(|s| uniq.binary_search(s).expect("signature present"))
            .collect();
        let next_classes = uniq.len();
        colors = next;
        if next_classes == classes {
            return colors;
        }
        classes = next_classes;
    }
}

fn distinct(values: &[usize]) -> usize {
    let mut v = values.to_vec();
    v.sort_unstable();
    v.dedup();
    v.len()
}

struct Search<'a> {
    g: &'a Graph,
    adj: &'a [Vec<usize>],
    colors: &'a [usize],
    order: Vec<usize>,
    code: Vec<u8>,
    visited: Vec<bool>,
    best_order: Vec<usize>,
    best_code: Vec<u8>,
    steps: usize,
}

impl Search<'_> {
    fn explore(&mut self, mut stack: Vec<usize>) {
        self.steps += 1;
        if self.order.len() == self.g.n() {
            if self.best_order.is_empty() || self.code > self.best_code {
                self.best_code.clone_from(&self.code);
                self.best_order.clone_from(&self.order);
            }
            return;
        }
        while let Some(&top) = stack.last() {
            if self.adj[top].iter().any(|&u| !self.visited[u]) {
                break;
            }
            stack.pop();
        }
        let candidates = match stack.last() {
            Some(&top) => self.extreme(self.adj[top].iter().copied(), false),
            None => self.extreme(0..self.g.n(), true),
        };
        let candidates = self.drop_twins(candidates);

        for (k, v) in candidates.into_iter().enumerate() {
            if k > 0 && self.steps > SEARCH_BUDGET {
                break;
            }
            let code_len = self.code.len();
            let pos = self.order.len();
            for back in 1..=pos {
                let bit = self.g.has_edge(v, self.order[pos - back]) as u8;
                self.code.push(bit);
            }
            if self.best_order.is_empty() || self.code[..] >= self.best_code[..self.code.len()] {
                self.visited[v] = true;
                self.order.push(v);
                let mut next = stack.clone();
                next.push(v);
                self.explore(next);
                self.order.pop();
                self.visited[v] = false;
            }
            self.code.truncate(code_len);
        }
    }

    /// Unvisited nodes among `pool` whose colour is maximal (`max == true`) or
    /// minimal.
    fn extreme(&self, pool: impl Iterator<Item = usize>, max: bool) -> Vec<usize> {
        let open: Vec<usize> = pool.filter(|&v| !self.visited[v]).collect();
        let pick = if max {
            open.iter().map(|&v| self.colors[v]).max()
        } else {
            open.iter().map(|&v| self.colors[v]).min()
        };
        match pick {
            Some(c) => open.into_iter().filter(|&v| self.colors[v] == c).collect(),
            None => Vec::new(),
        }
    }

    fn drop_twins(&self, candidates: Vec<usize>) -> Vec<usize> {
        let mut kept: Vec<usize> = Vec::with_capacity(candidates.len());
        for v in candidates {
            if !kept.iter().any(|&u| self.twins(u, v)) {
                kept.push(v);
            }
        }
        kept
    }

    /// Swapping `u` and `v` is an automorphism that fixes every other node.
    fn twins(&self, u: usize, v: usize) -> bool {
        let a = self.adj[u].iter().filter(|&&x| x != v);
        let b = self.adj[v].iter().filter(|&&x| x != u);
        a.eq(b)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn triangle_stays_triangle() {
        let g = Graph::from_edges(3, [(0, 1), (1, 2), (2, 0)]).unwrap();
        assert_eq!(canonical_order(&g), Graph::complete(3));
    }

    #[test]
    fn star_center_first() {
        let g = Graph::from_edges(4, [(2, 0), (2, 1), (2, 3)]).unwrap();
        let order = canonical_permutation(&g);
        assert_eq!(order[0], 2);
        let c = canonical_order(&g);
        assert_eq!(c.degrees()[0], 3);
    }

    #[test]
    fn empty_graphs() {
        assert_eq!(canonical_order(&Graph::empty(0)), Graph::empty(0));
        assert_eq!(canonical_order(&Graph::empty(5)), Graph::empty(5));
    }

    #[test]
    fn path_is_traversed_depth_first() {
        // 0-1-2-3-4: the root is an interior node and each step follows an edge
        // until the branch ends.
        let g = Graph::path(5);
        let order = canonical_permutation(&g);
        assert!(g.degrees()[order[0]] == 2);
        let c = canonical_order(&g);
        assert!(c.has_edge(0, 1));
    }

    #[test]
    fn components_are_ordered_by_degree() {
        let g = Graph::from_edges(7, [(0, 1), (3, 4), (3, 5), (3, 6)]).unwrap();
        let order = canonical_permutation(&g);
        assert_eq!(order[0], 3);
        // the isolated node goes last
        assert_eq!(order[6], 2);
    }

    #[test]
    fn refinement_separates_by_neighbourhood() {
        // two degree-1 nodes: one hangs off the centre of a star, one off a leaf
        let g = Graph::from_edges(6, [(0, 1), (0, 2), (0, 3), (3, 4), (4, 5)]).unwrap();
        let c = refine_colors(&g);
        assert_ne!(c[1], c[5]);
        assert_eq!(c[1], c[2]);
    }
}
