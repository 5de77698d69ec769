//! CSV storage: `nodes.csv` (`id,type,f0,...`), `edges.csv` (`src,dst,etype`)
//! and optional `labels.csv` (`id,label`). Type columns hold names; their
//! vocabularies are ordered by first appearance.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::hetgraph::{Edge, HetPairGraph};
use crate::numcore::Matrix;

pub const NODES_FILE: &str = "nodes.csv";
pub const EDGES_FILE: &str = "edges.csv";
pub const LABELS_FILE: &str = "labels.csv";

fn lines(path: &Path) -> Result<Vec<(usize, String)>> {
    let text = fs::read_to_string(path)?;
    Ok(text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim_end_matches('\r').to_string()))
        .filter(|(_, l)| !l.trim().is_empty())
        .collect())
}

fn intern(vocab: &mut Vec<String>, name: &str) -> usize {
    match vocab.iter().position(|v| v == name) {
        Some(i) => i,
        None => {
            vocab.push(name.to_string());
            vocab.len() - 1
        }
    }
}

fn parse_usize(path: &Path, line: usize, field: &str, what: &str) -> Result<usize> {
    field
        .trim()
        .parse()
        .map_err(|_| Error::load(path, line, format!("invalid {what} `{field}`")))
}

pub fn load_graph(nodes: &Path, edges: &Path, labels: Option<&Path>) -> Result<HetPairGraph> {
    // nodes
    let rows = lines(nodes)?;
    let Some((hline, header)) = rows.first() else {
        return Err(Error::load(nodes, 1, "missing header"));
    };
    let cols: Vec<&str> = header.split(',').map(str::trim).collect();
    if cols.len() < 2 || cols[0] != "id" || cols[1] != "type" {
        return Err(Error::load(nodes, *hline, "header must start with `id,type`"));
    }
    let dim = cols.len() - 2;
    for (k, c) in cols[2..].iter().enumerate() {
        if *c != format!("f{k}") {
            return Err(Error::load(nodes, *hline, format!("expected feature column `f{k}`, found `{c}`")));
        }
    }
    let n = rows.len() - 1;
    let mut node_type = Vec::with_capacity(n);
    let mut type_names = Vec::new();
    let mut feats = vec![0.0f64; dim * n];
    for (i, (line, row)) in rows[1..].iter().enumerate() {
        let fields: Vec<&str> = row.split(',').collect();
        if fields.len() != dim + 2 {
            return Err(Error::load(
                nodes,
                *line,
                format!("expected {} fields, found {}", dim + 2, fields.len()),
            ));
        }
        let id = parse_usize(nodes, *line, fields[0], "node id")?;
        if id != i {
            return Err(Error::load(nodes, *line, format!("node ids must be 0..N-1 in order; expected {i}, found {id}")));
        }
        node_type.push(intern(&mut type_names, fields[1].trim()));
        for (k, f) in fields[2..].iter().enumerate() {
            let x: f64 = f
                .trim()
                .parse()
                .map_err(|_| Error::load(nodes, *line, format!("invalid feature value `{f}`")))?;
            if !x.is_finite() {
                return Err(Error::load(nodes, *line, format!("non-finite feature value `{f}`")));
            }
            feats[k * n + i] = x;
        }
    }
    let features = Matrix::from_vec(dim, n, feats)?;

    // edges
    let rows = lines(edges)?;
    match rows.first() {
        Some((_, h)) if h.replace(' ', "") == "src,dst,etype" => {}
        Some((l, _)) => return Err(Error::load(edges, *l, "header must be `src,dst,etype`")),
        None => return Err(Error::load(edges, 1, "missing header")),
    }
    let mut edge_list = Vec::with_capacity(rows.len() - 1);
    let mut etype_names = Vec::new();
    for (line, row) in &rows[1..] {
        let fields: Vec<&str> = row.split(',').collect();
        if fields.len() != 3 {
            return Err(Error::load(edges, *line, format!("expected 3 fields, found {}", fields.len())));
        }
        let src = parse_usize(edges, *line, fields[0], "source id")?;
        let dst = parse_usize(edges, *line, fields[1], "target id")?;
        for id in [src, dst] {
            if id >= n {
                return Err(Error::load(edges, *line, format!("unknown node id {id} (graph has {n} nodes)")));
            }
        }
        if src == dst {
            return Err(Error::load(edges, *line, format!("self-loop on node {src}")));
        }
        let etype = intern(&mut etype_names, fields[2].trim());
        edge_list.push(Edge { src, dst, etype });
    }

    // labels
    let label_vec = match labels {
        None => None,
        Some(path) => {
            let rows = lines(path)?;
            match rows.first() {
                Some((_, h)) if h.replace(' ', "") == "id,label" => {}
                Some((l, _)) => return Err(Error::load(path, *l, "header must be `id,label`")),
                None => return Err(Error::load(path, 1, "missing header")),
            }
            let mut lab = vec![None; n];
            for (line, row) in &rows[1..] {
                let fields: Vec<&str> = row.split(',').collect();
                if fields.len() != 2 {
                    return Err(Error::load(path, *line, format!("expected 2 fields, found {}", fields.len())));
                }
                let id = parse_usize(path, *line, fields[0], "node id")?;
                if id >= n {
                    return Err(Error::load(path, *line, format!("unknown node id {id}")));
                }
                if lab[id].is_some() {
                    return Err(Error::load(path, *line, format!("duplicate label for node {id}")));
                }
                lab[id] = Some(parse_usize(path, *line, fields[1], "label")?);
            }
            Some(lab)
        }
    };

    HetPairGraph::new(node_type, type_names, edge_list, etype_names, features, label_vec)
}

/// Loads `nodes.csv`, `edges.csv` and, when present, `labels.csv` from `dir`.
pub fn load_graph_dir(dir: &Path) -> Result<HetPairGraph> {
    let labels = dir.join(LABELS_FILE);
    load_graph(
        &dir.join(NODES_FILE),
        &dir.join(EDGES_FILE),
        labels.exists().then_some(labels.as_path()),
    )
}

pub fn save_graph(graph: &HetPairGraph, nodes: &Path, edges: &Path, labels: Option<&Path>) -> Result<()> {
    let n = graph.num_nodes();
    let dim = graph.feature_dim();
    let mut w = BufWriter::new(fs::File::create(nodes)?);
    write!(w, "id,type")?;
    for k in 0..dim {
        write!(w, ",f{k}")?;
    }
    writeln!(w)?;
    for v in 0..n {
        write!(w, "{v},{}", graph.node_type_names()[graph.node_type(v)])?;
        for k in 0..dim {
            write!(w, ",{}", graph.features().get(k, v))?;
        }
        writeln!(w)?;
    }
    w.flush()?;

    let mut w = BufWriter::new(fs::File::create(edges)?);
    writeln!(w, "src,dst,etype")?;
    for e in graph.edges() {
        writeln!(w, "{},{},{}", e.src, e.dst, graph.edge_type_names()[e.etype])?;
    }
    w.flush()?;

    if let (Some(path), Some(lab)) = (labels, graph.labels()) {
        let mut w = BufWriter::new(fs::File::create(path)?);
        writeln!(w, "id,label")?;
        for (v, l) in lab.iter().enumerate() {
            if let Some(c) = l {
                writeln!(w, "{v},{c}")?;
            }
        }
        w.flush()?;
    }
    Ok(())
}

pub fn save_graph_dir(graph: &HetPairGraph, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let labels = dir.join(LABELS_FILE);
    save_graph(
        graph,
        &dir.join(NODES_FILE),
        &dir.join(EDGES_FILE),
        graph.labels().is_some().then_some(labels.as_path()),
    )
}
