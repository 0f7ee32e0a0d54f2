//! Corpora: loading, generation, oracle targets and splits.

mod clique;
mod synth;
mod tu;

use std::fs;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use rand::seq::index::sample;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use clique::{all_maximum_cliques, clique_number, max_clique_oracle, maximum_clique, ORACLE_MAX_NODES};
pub use synth::{gen_planted_clique, generate, SyntheticConfig, SyntheticKind};
pub use tu::{detect_tu_name, parse_tu, write_tu};

use crate::error::{Error, Result};
use crate::graph::{read_jsonl, write_jsonl, Graph};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const GRAPHS_FILE: &str = "graphs.jsonl";
pub const TARGETS_FILE: &str = "targets.jsonl";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Splits {
    pub fractions: [f64; 3],
    pub seed: u64,
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

impl Splits {
    pub fn get(&self, split: Split) -> &[usize] {
        match split {
            Split::Train => &self.train,
            Split::Val => &self.val,
            Split::Test => &self.test,
        }
    }

    /// The split holding graph `index`, if any.
    pub fn of(&self, index: usize) -> Option<Split> {
        Split::ALL.into_iter().find(|&s| self.get(s).contains(&index))
    }
}

/// Filters applied when the corpus was built.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Filters {
    pub max_nodes: Option<usize>,
    pub min_clique: Option<usize>,
    pub removed: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub name: String,
    pub graphs: Vec<Graph>,
    /// Targets aligned with `graphs`, when the corpus has them.
    pub targets: Option<Vec<Graph>>,
    pub splits: Option<Splits>,
    pub generator: Option<SyntheticConfig>,
    pub filters: Filters,
}

/// Summary written next to the graph files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub name: String,
    /// Largest node count in the corpus.
    pub width: usize,
    pub count: usize,
    pub has_targets: bool,
    pub generator: Option<SyntheticConfig>,
    pub filters: Filters,
    pub splits: Option<Splits>,
}

impl Dataset {
    pub fn new(name: impl Into<String>, graphs: Vec<Graph>) -> Self {
        Dataset {
            name: name.into(),
            graphs,
            targets: None,
            splits: None,
            generator: None,
            filters: Filters::default(),
        }
    }

    pub fn with_targets(mut self, targets: Vec<Graph>) -> Result<Self> {
        if targets.len() != self.graphs.len() {
            return Err(Error::Dataset(format!(
                "{} targets for {} graphs",
                targets.len(),
                self.graphs.len()
            )));
        }
        if let Some(i) = (0..targets.len()).find(|&i| targets[i].n() != self.graphs[i].n()) {
            return Err(Error::Dataset(format!(
                "target {i} has {} nodes, its input {}",
                targets[i].n(),
                self.graphs[i].n()
            )));
        }
        self.targets = Some(targets);
        Ok(self)
    }

    /// Replaces the targets with exact maximum cliques of the inputs.
    pub fn with_oracle_targets(self) -> Result<Self> {
        let targets = self.graphs.iter().map(max_clique_oracle).collect::<Result<Vec<_>>>()?;
        self.with_targets(targets)
    }

    pub fn len(&self) -> usize {
        self.graphs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.graphs.is_empty()
    }

    /// Largest node count.
    pub fn width(&self) -> usize {
        self.graphs.iter().map(Graph::n).max().unwrap_or(0)
    }

    /// Target of graph `i`: the stored target, or the graph itself when the
    /// corpus has none.
    pub fn target(&self, i: usize) -> &Graph {
        match &self.targets {
            Some(t) => &t[i],
            None => &self.graphs[i],
        }
    }

    pub fn indices(&self, split: Split) -> Result<&[usize]> {
        self.splits
            .as_ref()
            .map(|s| s.get(split))
            .ok_or_else(|| Error::Dataset(format!("dataset {} has no splits", self.name)))
    }

    fn retain(&mut self, keep: impl Fn(&Graph) -> Result<bool>) -> Result<usize> {
        if self.splits.is_some() {
            return Err(Error::Dataset("filter before splitting".into()));
        }
        let mut flags = Vec::with_capacity(self.len());
        for g in &self.graphs {
            flags.push(keep(g)?);
        }
        let mut it = flags.iter();
        self.graphs.retain(|_| *it.next().unwrap());
        if let Some(t) = &mut self.targets {
            let mut it = flags.iter();
            t.retain(|_| *it.next().unwrap());
        }
        let removed = flags.iter().filter(|&&f| !f).count();
        self.filters.removed += removed;
        Ok(removed)
    }

    /// Drops graphs with more than `cap` nodes; returns how many went.
    pub fn cap_nodes(&mut self, cap: usize) -> Result<usize> {
        self.filters.max_nodes = Some(cap);
        self.retain(|g| Ok(g.n() <= cap))
    }

    /// Drops graphs whose maximum clique has fewer than `min` nodes.
    pub fn exclude_small_cliques(&mut self, min: usize) -> Result<usize> {
        self.filters.min_clique = Some(min);
        self.retain(|g| Ok(clique_number(g)? >= min))
    }

    /// Seeded shuffle, then contiguous train/val/test blocks. Block sizes
    /// round the exact shares by largest remainder.
    pub fn split(&mut self, fractions: [f64; 3], seed: u64) -> Result<()> {
        if self.is_empty() {
            return Err(Error::Dataset("cannot split an empty dataset".into()));
        }
        if fractions.iter().any(|f| !(0.0..=1.0).contains(f)) || (fractions.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!("split fractions {fractions:?} must be in [0, 1] and sum to 1")));
        }
        let n = self.len();
        let counts = largest_remainder(n, &fractions);
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let val_start = counts[0];
        let test_start = counts[0] + counts[1];
        self.splits = Some(Splits {
            fractions,
            seed,
            train: order[..val_start].to_vec(),
            val: order[val_start..test_start].to_vec(),
            test: order[test_start..].to_vec(),
        });
        Ok(())
    }

    pub fn manifest(&self) -> DatasetManifest {
        DatasetManifest {
            name: self.name.clone(),
            width: self.width(),
            count: self.len(),
            has_targets: self.targets.is_some(),
            generator: self.generator.clone(),
            filters: self.filters.clone(),
            splits: self.splits.clone(),
        }
    }

    /// Writes the manifest, graphs and targets into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        write_jsonl(BufWriter::new(fs::File::create(dir.join(GRAPHS_FILE))?), &self.graphs)?;
        if let Some(t) = &self.targets {
            write_jsonl(BufWriter::new(fs::File::create(dir.join(TARGETS_FILE))?), t)?;
        }
        let json = serde_json::to_string_pretty(&self.manifest())?;
        fs::write(dir.join(MANIFEST_FILE), json + "\n")?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let text = fs::read_to_string(dir.join(MANIFEST_FILE))
            .map_err(|e| Error::Dataset(format!("cannot read manifest in {}: {e}", dir.display())))?;
        let m: DatasetManifest = serde_json::from_str(&text)?;
        let graphs = read_jsonl(BufReader::new(fs::File::open(dir.join(GRAPHS_FILE))?))?;
        let mut ds = Dataset::new(m.name, graphs);
        if m.has_targets {
            let t = read_jsonl(BufReader::new(fs::File::open(dir.join(TARGETS_FILE))?))?;
            ds = ds.with_targets(t)?;
        }
        if ds.len() != m.count || ds.width() != m.width {
            return Err(Error::Dataset(format!(
                "manifest promises {} graphs of width {}, files hold {} of width {}",
                m.count,
                m.width,
                ds.len(),
                ds.width()
            )));
        }
        if let Some(s) = &m.splits {
            let mut all: Vec<usize> = Split::ALL.iter().flat_map(|&x| s.get(x).iter().copied()).collect();
            all.sort_unstable();
            if all != (0..ds.len()).collect::<Vec<_>>() {
                return Err(Error::Dataset("split indices are not a partition of the graphs".into()));
            }
        }
        ds.splits = m.splits;
        ds.generator = m.generator;
        ds.filters = m.filters;
        Ok(ds)
    }
}

fn largest_remainder(n: usize, fractions: &[f64; 3]) -> [usize; 3] {
    let exact: Vec<f64> = fractions.iter().map(|f| f * n as f64).collect();
    let mut counts = [0usize; 3];
    for (c, e) in counts.iter_mut().zip(&exact) {
        *c = e.floor() as usize;
    }
    let mut left = n - counts.iter().sum::<usize>();
    let mut by_rem: Vec<usize> = (0..3).collect();
    by_rem.sort_by(|&a, &b| {
        let (ra, rb) = (exact[a] - exact[a].floor(), exact[b] - exact[b].floor());
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for &i in &by_rem {
        if left == 0 {
            break;
        }
        counts[i] += 1;
        left -= 1;
    }
    counts
}

/// One labelled subset of the training split.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabelSubset {
    pub fraction: f64,
    pub repeat: usize,
    pub seed: u64,
    /// Positions into the training split, sorted.
    pub indices: Vec<usize>,
}

/// Derives an independent seed for item `(a, b)` of a seeded loop.
pub fn derive_seed(seed: u64, a: u64, b: u64) -> u64 {
    // splitmix64 finaliser over a mixed key
    let mut z = seed ^ a.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ b.wrapping_mul(0xC2B2_AE3D_27D4_EB4F);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// For every fraction and repeat, a seeded subset of `0..train_len` with
/// `max(1, round(fraction · train_len))` members. Fraction 1 gives the
/// full range.
pub fn limited_label_subsets(
    train_len: usize,
    fractions: &[f64],
    repeats: usize,
    seed: u64,
) -> Result<Vec<LabelSubset>> {
    if let Some(f) = fractions.iter().find(|f| !(**f > 0.0 && **f <= 1.0)) {
        return Err(Error::Config(format!("label fraction {f} outside (0, 1]")));
    }
    if train_len == 0 {
        return Err(Error::Dataset("training split is empty".into()));
    }
    let mut out = Vec::with_capacity(fractions.len() * repeats);
    for (fi, &fraction) in fractions.iter().enumerate() {
        let size = ((fraction * train_len as f64).round() as usize).clamp(1, train_len);
        for repeat in 0..repeats {
            let s = derive_seed(seed, fi as u64, repeat as u64);
            let indices = if size == train_len {
                (0..train_len).collect()
            } else {
                let mut v = sample(&mut ChaCha8Rng::seed_from_u64(s), train_len, size).into_vec();
                v.sort_unstable();
                v
            };
            out.push(LabelSubset {
                fraction,
                repeat,
                seed: s,
                indices,
            });
        }
    }
    Ok(out)
}
