//! Synthetic corpora: Erdős–Rényi backgrounds with planted cliques.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::clique::max_clique_oracle;
use super::Dataset;
use crate::error::{Error, Result};
use crate::graph::Graph;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SyntheticKind {
    /// Every graph carries a planted clique; labels are clique numbers.
    PlantedClique,
    /// Half the graphs (by coin flip) carry a planted clique, labelled 1;
    /// the rest are plain backgrounds, labelled 0.
    TwoClass,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub kind: SyntheticKind,
    pub count: usize,
    pub n_min: usize,
    pub n_max: usize,
    pub clique_min: usize,
    pub clique_max: usize,
    pub edge_prob: f64,
    pub seed: u64,
}

impl SyntheticConfig {
    pub fn planted_clique(count: usize, seed: u64) -> Self {
        SyntheticConfig {
            kind: SyntheticKind::PlantedClique,
            count,
            n_min: 8,
            n_max: 14,
            clique_min: 4,
            clique_max: 6,
            edge_prob: 0.15,
            seed,
        }
    }

    pub fn two_class(count: usize, seed: u64) -> Self {
        SyntheticConfig {
            kind: SyntheticKind::TwoClass,
            ..Self::planted_clique(count, seed)
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.count == 0 {
            return fail("count must be positive".into());
        }
        if self.n_min == 0 || self.n_min > self.n_max {
            return fail(format!("invalid node range {}..={}", self.n_min, self.n_max));
        }
        if self.clique_min < 3 {
            return fail(format!("clique sizes below 3 are excluded, got {}", self.clique_min));
        }
        if self.clique_min > self.clique_max {
            return fail(format!("invalid clique range {}..={}", self.clique_min, self.clique_max));
        }
        if self.clique_max > self.n_min {
            return fail(format!(
                "clique size {} does not fit the smallest graph ({} nodes)",
                self.clique_max, self.n_min
            ));
        }
        if !(0.0..=1.0).contains(&self.edge_prob) {
            return fail(format!("edge probability {} outside [0, 1]", self.edge_prob));
        }
        Ok(())
    }
}

fn background<R: Rng>(n: usize, p: f64, rng: &mut R) -> Graph {
    let mut g = Graph::empty(n);
    for i in 0..n {
        for j in 0..i {
            if rng.gen_bool(p) {
                g.add_edge(i, j).expect("in range");
            }
        }
    }
    g
}

fn plant<R: Rng>(g: &mut Graph, size: usize, rng: &mut R) {
    let mut nodes = sample(rng, g.n(), size).into_vec();
    nodes.sort_unstable();
    for (a, &i) in nodes.iter().enumerate() {
        for &j in &nodes[a + 1..] {
            g.add_edge(i, j).expect("in range");
        }
    }
}

/// Generates a seeded corpus. Targets are the exact maximum cliques of the
/// finished inputs, which may differ from the planted ones.
pub fn generate(cfg: &SyntheticConfig) -> Result<Dataset> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut graphs = Vec::with_capacity(cfg.count);
    let mut targets = Vec::with_capacity(cfg.count);
    for _ in 0..cfg.count {
        let n = rng.gen_range(cfg.n_min..=cfg.n_max);
        let size = rng.gen_range(cfg.clique_min..=cfg.clique_max);
        let mut g = background(n, cfg.edge_prob, &mut rng);
        let planted = match cfg.kind {
            SyntheticKind::PlantedClique => true,
            SyntheticKind::TwoClass => rng.gen_bool(0.5),
        };
        if planted {
            plant(&mut g, size, &mut rng);
        }
        let target = max_clique_oracle(&g)?;
        let label = match cfg.kind {
            SyntheticKind::PlantedClique => target.covered_nodes().len().max(1) as i64,
            SyntheticKind::TwoClass => planted as i64,
        };
        graphs.push(g.with_label(Some(label)));
        targets.push(target);
    }
    let name = match cfg.kind {
        SyntheticKind::PlantedClique => "planted_clique",
        SyntheticKind::TwoClass => "two_class",
    };
    let mut ds = Dataset::new(name, graphs).with_targets(targets)?;
    ds.generator = Some(cfg.clone());
    Ok(ds)
}

/// Planted-clique corpus; see [`generate`].
pub fn gen_planted_clique(
    count: usize,
    n_range: (usize, usize),
    clique_range: (usize, usize),
    edge_prob: f64,
    seed: u64,
) -> Result<Dataset> {
    generate(&SyntheticConfig {
        kind: SyntheticKind::PlantedClique,
        count,
        n_min: n_range.0,
        n_max: n_range.1,
        clique_min: clique_range.0,
        clique_max: clique_range.1,
        edge_prob,
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn noiseless_triangle() {
        let ds = gen_planted_clique(3, (5, 5), (3, 3), 0.0, 1).unwrap();
        for (g, t) in ds.graphs.iter().zip(ds.targets.as_ref().unwrap()) {
            assert_eq!(g.edge_count(), 3);
            assert_eq!(g.edge_set(), t.edge_set());
            assert_eq!(g.label(), Some(3));
        }
    }

    #[test]
    fn seeded() {
        let a = gen_planted_clique(20, (6, 9), (3, 5), 0.3, 9).unwrap();
        let b = gen_planted_clique(20, (6, 9), (3, 5), 0.3, 9).unwrap();
        let c = gen_planted_clique(20, (6, 9), (3, 5), 0.3, 10).unwrap();
        assert_eq!(a.graphs, b.graphs);
        assert_eq!(a.targets, b.targets);
        assert_ne!(a.graphs, c.graphs);
    }

    #[test]
    fn infeasible_ranges() {
        assert!(gen_planted_clique(5, (5, 8), (2, 4), 0.1, 0).is_err());
        assert!(gen_planted_clique(5, (5, 8), (4, 6), 0.1, 0).is_err());
        assert!(gen_planted_clique(5, (8, 5), (3, 4), 0.1, 0).is_err());
        assert!(gen_planted_clique(5, (5, 8), (5, 4), 0.1, 0).is_err());
        assert!(gen_planted_clique(5, (5, 8), (3, 4), 1.5, 0).is_err());
        assert!(gen_planted_clique(0, (5, 8), (3, 4), 0.1, 0).is_err());
    }

    #[test]
    fn two_class_labels() {
        let ds = generate(&SyntheticConfig::two_class(200, 3)).unwrap();
        let ones = ds.graphs.iter().filter(|g| g.label() == Some(1)).count();
        assert!((70..=130).contains(&ones), "{ones}");
        for (g, t) in ds.graphs.iter().zip(ds.targets.as_ref().unwrap()) {
            if g.label() == Some(1) {
                assert!(t.covered_nodes().len() >= 4);
            }
        }
    }
}
