//! Exact maximum clique by Bron–Kerbosch with pivoting on bitsets.

use crate::error::{Error, Result};
use crate::graph::Graph;

/// Largest graph the oracle accepts.
pub const ORACLE_MAX_NODES: usize = 64;

fn adjacency(g: &Graph) -> Result<Vec<u64>> {
    if g.n() > ORACLE_MAX_NODES {
        return Err(Error::InvalidGraph(format!(
            "maximum clique oracle handles at most {ORACLE_MAX_NODES} nodes, got {}",
            g.n()
        )));
    }
    let mut adj = vec![0u64; g.n()];
    for (i, j) in g.edges() {
        adj[i] |= 1 << j;
        adj[j] |= 1 << i;
    }
    Ok(adj)
}

fn members(mut set: u64) -> Vec<usize> {
    let mut out = Vec::with_capacity(set.count_ones() as usize);
    while set != 0 {
        out.push(set.trailing_zeros() as usize);
        set &= set - 1;
    }
    out
}

/// Sorted-member lexicographic order of two node sets.
fn lex_less(a: u64, b: u64) -> bool {
    // the first differing node decides; the set holding it is smaller
    let diff = a ^ b;
    diff != 0 && a & (diff & diff.wrapping_neg()) != 0
}

struct Search<'a> {
    adj: &'a [u64],
    best: Vec<u64>,
    best_size: u32,
    keep_all: bool,
}

impl Search<'_> {
    fn expand(&mut self, r: u64, mut p: u64, mut x: u64) {
        let size = r.count_ones();
        if p == 0 && x == 0 {
            self.offer(r);
            return;
        }
        if size + p.count_ones() < self.best_size {
            return;
        }
        let pivot = members(p | x)
            .into_iter()
            .max_by_key(|&u| ((p & self.adj[u]).count_ones(), std::cmp::Reverse(u)))
            .expect("p or x is non-empty");
        for v in members(p & !self.adj[pivot]) {
            let bit = 1u64 << v;
            self.expand(r | bit, p & self.adj[v], x & self.adj[v]);
            p &= !bit;
            x |= bit;
        }
    }

    fn offer(&mut self, r: u64) {
        let size = r.count_ones();
        if size > self.best_size {
            self.best_size = size;
            self.best.clear();
            self.best.push(r);
        } else if size == self.best_size {
            if self.keep_all {
                self.best.push(r);
            } else if lex_less(r, self.best[0]) {
                self.best[0] = r;
            }
        }
    }
}

fn search(g: &Graph, keep_all: bool) -> Result<Vec<u64>> {
    let adj = adjacency(g)?;
    if g.n() == 0 {
        return Ok(vec![0]);
    }
    let all = if g.n() == 64 { u64::MAX } else { (1u64 << g.n()) - 1 };
    let mut s = Search {
        adj: &adj,
        best: Vec::new(),
        best_size: 0,
        keep_all,
    };
    s.expand(0, all, 0);
    let mut best = s.best;
    best.sort_by(|&a, &b| {
        if a == b {
            std::cmp::Ordering::Equal
        } else if lex_less(a, b) {
            std::cmp::Ordering::Less
        } else {
            std::cmp::Ordering::Greater
        }
    });
    Ok(best)
}

/// Members of a maximum clique, sorted. Among several maximum cliques the
/// lexicographically smallest member list wins. An edgeless graph yields
/// `[0]`; the empty graph yields `[]`.
pub fn maximum_clique(g: &Graph) -> Result<Vec<usize>> {
    Ok(members(search(g, false)?[0]))
}

/// Every maximum clique, each sorted, in lexicographic order.
pub fn all_maximum_cliques(g: &Graph) -> Result<Vec<Vec<usize>>> {
    Ok(search(g, true)?.into_iter().map(members).collect())
}

pub fn clique_number(g: &Graph) -> Result<usize> {
    Ok(maximum_clique(g)?.len())
}

/// The maximum clique as a graph on the same nodes, with edges only among
/// clique members.
pub fn max_clique_oracle(g: &Graph) -> Result<Graph> {
    let nodes = maximum_clique(g)?;
    clique_graph(g.n(), &nodes)
}

pub(crate) fn clique_graph(n: usize, nodes: &[usize]) -> Result<Graph> {
    let mut out = Graph::empty(n);
    for (a, &i) in nodes.iter().enumerate() {
        for &j in &nodes[a + 1..] {
            out.add_edge(i, j)?;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_cases() {
        let tri = Graph::complete(3);
        assert_eq!(max_clique_oracle(&tri).unwrap(), tri);

        let mut k4p = Graph::empty(5);
        for (i, j) in Graph::complete(4).edges() {
            k4p.add_edge(i, j).unwrap();
        }
        k4p.add_edge(4, 2).unwrap();
        assert_eq!(maximum_clique(&k4p).unwrap(), vec![0, 1, 2, 3]);

        let empty = Graph::empty(4);
        assert_eq!(maximum_clique(&empty).unwrap(), vec![0]);
        assert_eq!(max_clique_oracle(&empty).unwrap().edge_count(), 0);
        assert_eq!(maximum_clique(&Graph::empty(0)).unwrap(), Vec::<usize>::new());
    }

    #[test]
    fn ties_prefer_smallest_members() {
        // two disjoint triangles: {0,4,5} and {1,2,3}
        let g = Graph::from_edges(6, [(0, 4), (4, 5), (0, 5), (1, 2), (2, 3), (1, 3)]).unwrap();
        assert_eq!(maximum_clique(&g).unwrap(), vec![0, 4, 5]);
        assert_eq!(
            all_maximum_cliques(&g).unwrap(),
            vec![vec![0, 4, 5], vec![1, 2, 3]]
        );
        assert!(lex_less(0b0001, 0b0110));
        assert!(!lex_less(0b0110, 0b0001));
        assert!(lex_less(0b0011, 0b0101));
    }

    #[test]
    fn guard_and_full_width() {
        assert!(maximum_clique(&Graph::empty(65)).is_err());
        let k = Graph::complete(64);
        assert_eq!(clique_number(&k).unwrap(), 64);
    }
}
