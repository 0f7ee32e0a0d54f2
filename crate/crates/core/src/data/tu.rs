//! The TU benchmark text layout.
//!
//! A dataset `DS` is a directory holding `DS_A.txt` (one `a, b` row per
//! directed edge, 1-indexed global node ids), `DS_graph_indicator.txt` (the
//! 1-indexed graph id of every node, one per line) and optionally
//! `DS_graph_labels.txt` (one integer per graph).

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use super::Dataset;
use crate::error::{Error, Result};
use crate::graph::Graph;

fn file(dir: &Path, name: &str, suffix: &str) -> PathBuf {
    dir.join(format!("{name}_{suffix}.txt"))
}

/// Finds `DS` from the single `DS_A.txt` in `dir`.
pub fn detect_tu_name(dir: &Path) -> Result<String> {
    let mut names = Vec::new();
    for entry in fs::read_dir(dir)? {
        let entry = entry?;
        let fname = entry.file_name().to_string_lossy().into_owned();
        if let Some(stem) = fname.strip_suffix("_A.txt") {
            names.push(stem.to_string());
        }
    }
    match names.len() {
        1 => Ok(names.pop().unwrap()),
        0 => Err(Error::Dataset(format!("no *_A.txt file in {}", dir.display()))),
        _ => {
            names.sort();
            Err(Error::Dataset(format!(
                "several datasets in {}: {}",
                dir.display(),
                names.join(", ")
            )))
        }
    }
}

fn read_required(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::Dataset(format!("cannot read {}: {e}", path.display())))
}

fn parse_int<T: std::str::FromStr>(text: &str, path: &Path, line: usize) -> Result<T> {
    text.trim()
        .parse()
        .map_err(|_| Error::Parse(format!("{}:{line}: expected an integer, got {text:?}", path.display())))
}

/// Reads dataset `name` from `dir`. Self-loops are dropped and undirected
/// duplicates merged.
pub fn parse_tu(dir: &Path, name: &str) -> Result<Dataset> {
    let ind_path = file(dir, name, "graph_indicator");
    let a_path = file(dir, name, "A");
    let indicator = read_required(&ind_path)?;
    let edges = read_required(&a_path)?;

    // global node id (0-based) -> (graph, local id)
    let mut owner = Vec::new();
    let mut sizes: Vec<usize> = Vec::new();
    for (ln, line) in indicator.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let gid: usize = parse_int(line, &ind_path, ln + 1)?;
        if gid == 0 {
            return Err(Error::Parse(format!("{}:{}: graph ids start at 1", ind_path.display(), ln + 1)));
        }
        if sizes.len() < gid {
            sizes.resize(gid, 0);
        }
        owner.push((gid - 1, sizes[gid - 1]));
        sizes[gid - 1] += 1;
    }

    let label_path = file(dir, name, "graph_labels");
    let labels = if label_path.exists() {
        let text = read_required(&label_path)?;
        let mut labels = Vec::new();
        for (ln, line) in text.lines().enumerate() {
            if !line.trim().is_empty() {
                labels.push(parse_int::<i64>(line, &label_path, ln + 1)?);
            }
        }
        if labels.len() < sizes.len() {
            return Err(Error::Dataset(format!(
                "{} labels for {} graphs",
                labels.len(),
                sizes.len()
            )));
        }
        sizes.resize(labels.len(), 0);
        Some(labels)
    } else {
        None
    };

    let mut graphs: Vec<Graph> = sizes.iter().map(|&n| Graph::empty(n)).collect();
    let mut self_loops = 0usize;
    for (ln, line) in edges.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let (a, b) = line
            .split_once(',')
            .ok_or_else(|| Error::Parse(format!("{}:{}: expected `a, b`", a_path.display(), ln + 1)))?;
        let a: usize = parse_int(a, &a_path, ln + 1)?;
        let b: usize = parse_int(b, &a_path, ln + 1)?;
        let lookup = |id: usize| {
            id.checked_sub(1).and_then(|i| owner.get(i)).copied().ok_or_else(|| {
                Error::Dataset(format!("{}:{}: node {id} has no graph", a_path.display(), ln + 1))
            })
        };
        let ((ga, la), (gb, lb)) = (lookup(a)?, lookup(b)?);
        if ga != gb {
            return Err(Error::Dataset(format!(
                "{}:{}: edge {a}-{b} joins graphs {} and {}",
                a_path.display(),
                ln + 1,
                ga + 1,
                gb + 1
            )));
        }
        if la == lb {
            self_loops += 1;
            continue;
        }
        graphs[ga].add_edge(la, lb)?;
    }
    if self_loops > 0 {
        log::warn!("{name}: dropped {self_loops} self-loop rows");
    }
    if let Some(labels) = labels {
        for (g, l) in graphs.iter_mut().zip(labels) {
            g.set_label(Some(l));
        }
    }
    Ok(Dataset::new(name, graphs))
}

/// Writes `graphs` as dataset `name` in `dir`, each undirected edge as two
/// rows. Labels are written when every graph has one.
pub fn write_tu(dir: &Path, name: &str, graphs: &[Graph]) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut a = BufWriter::new(fs::File::create(file(dir, name, "A"))?);
    let mut ind = BufWriter::new(fs::File::create(file(dir, name, "graph_indicator"))?);
    let mut offset = 0usize;
    for (gi, g) in graphs.iter().enumerate() {
        for _ in 0..g.n() {
            writeln!(ind, "{}", gi + 1)?;
        }
        let mut rows: Vec<(usize, usize)> = g.edges().flat_map(|(i, j)| [(i, j), (j, i)]).collect();
        rows.sort_unstable();
        for (i, j) in rows {
            writeln!(a, "{}, {}", offset + i + 1, offset + j + 1)?;
        }
        offset += g.n();
    }
    a.flush()?;
    ind.flush()?;
    let labels: Option<Vec<i64>> = graphs.iter().map(Graph::label).collect();
    if let Some(labels) = labels.filter(|l| !l.is_empty()) {
        let mut out = BufWriter::new(fs::File::create(file(dir, name, "graph_labels"))?);
        for l in labels {
            writeln!(out, "{l}")?;
        }
        out.flush()?;
    }
    Ok(())
}
