//! Vertex cover problem instances.
//!
//! Vertices are numbered `1..=n` throughout the crate. For complete
//! bipartite graphs `K_{L,R}` the left partition is `1..=L` and the right
//! partition is `L+1..=L+R`.

use std::collections::BTreeSet;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use num_rational::Ratio;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// 1-based vertex identifier.
pub type Vertex = usize;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum InstanceKind {
    Path,
    CompleteBipartite { left: usize, right: usize },
    General,
}

/// Immutable undirected simple graph.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GraphInstance {
    n: usize,
    edges: Vec<(Vertex, Vertex)>,
    // adjacency[v - 1] holds the neighbours of v
    adjacency: Vec<Vec<Vertex>>,
    kind: InstanceKind,
}

impl GraphInstance {
    fn from_parts(n: usize, edges: Vec<(Vertex, Vertex)>, kind: InstanceKind) -> Self {
        let mut adjacency = vec![Vec::new(); n];
        for &(a, b) in &edges {
            adjacency[a - 1].push(b);
            adjacency[b - 1].push(a);
        }
        for list in &mut adjacency {
            list.sort_unstable();
        }
        Self { n, edges, adjacency, kind }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Edges as `(a, b)` with `a < b`.
    pub fn edges(&self) -> &[(Vertex, Vertex)] {
        &self.edges
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn kind(&self) -> InstanceKind {
        self.kind
    }

    #[inline]
    pub fn neighbors(&self, v: Vertex) -> &[Vertex] {
        &self.adjacency[v - 1]
    }

    pub fn degree(&self, v: Vertex) -> usize {
        self.adjacency[v - 1].len()
    }

    pub fn degrees(&self) -> Vec<usize> {
        self.adjacency.iter().map(Vec::len).collect()
    }

    /// `(L, R)` for complete bipartite instances.
    pub fn partition_sizes(&self) -> Option<(usize, usize)> {
        match self.kind {
            InstanceKind::CompleteBipartite { left, right } => Some((left, right)),
            _ => None,
        }
    }

    /// The ratio `c = R / L` of a complete bipartite instance.
    pub fn ratio(&self) -> Option<Ratio<usize>> {
        self.partition_sizes().map(|(l, r)| Ratio::new(r, l))
    }

    /// Serializes the edge set in the edge-list format read by [`load_edge_list`].
    pub fn to_edge_list(&self) -> String {
        let mut out = String::new();
        for &(a, b) in &self.edges {
            out.push_str(&format!("{a} {b}\n"));
        }
        out
    }
}

/// Path `1 - 2 - ... - n`.
pub fn make_path(n: usize) -> Result<GraphInstance> {
    if n == 0 {
        return Err(invalid("path length must be at least 1"));
    }
    let edges = (1..n).map(|i| (i, i + 1)).collect();
    Ok(GraphInstance::from_parts(n, edges, InstanceKind::Path))
}

/// Complete bipartite graph `K_{L,R}` with the left side on the low indices.
pub fn make_complete_bipartite(left: usize, right: usize) -> Result<GraphInstance> {
    if left == 0 || right == 0 {
        return Err(invalid(format!(
            "both partitions must be non-empty (got L={left}, R={right})"
        )));
    }
    let mut edges = Vec::with_capacity(left * right);
    for a in 1..=left {
        for b in left + 1..=left + right {
            edges.push((a, b));
        }
    }
    Ok(GraphInstance::from_parts(
        left + right,
        edges,
        InstanceKind::CompleteBipartite { left, right },
    ))
}

/// Erdős–Rényi graph `G(n, p)` drawn from a seeded stream.
pub fn make_random(n: usize, edge_probability: f64, seed: u64) -> Result<GraphInstance> {
    if n == 0 {
        return Err(invalid("random graph needs at least one vertex"));
    }
    if !(0.0..=1.0).contains(&edge_probability) {
        return Err(invalid(format!(
            "edge probability {edge_probability} outside [0, 1]"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut edges = Vec::new();
    for a in 1..=n {
        for b in a + 1..=n {
            if rng.random::<f64>() < edge_probability {
                edges.push((a, b));
            }
        }
    }
    Ok(GraphInstance::from_parts(n, edges, InstanceKind::General))
}

/// Parses an edge list: one `a b` pair per line, `#` starts a comment.
///
/// The vertex count is the largest index seen; duplicate edges collapse.
pub fn load_edge_list(text: &str) -> Result<GraphInstance> {
    let mut seen = BTreeSet::new();
    let mut edges = Vec::new();
    let mut n = 0;
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let tokens: Vec<&str> = line.split_whitespace().collect();
        if tokens.len() != 2 {
            return Err(Error::Parse {
                line: line_no,
                message: format!("expected two vertex indices, found {}", tokens.len()),
            });
        }
        let parse = |tok: &str| -> Result<Vertex> {
            match tok.parse::<Vertex>() {
                Ok(v) if v >= 1 => Ok(v),
                _ => Err(Error::Parse {
                    line: line_no,
                    message: format!("`{tok}` is not a positive integer"),
                }),
            }
        };
        let a = parse(tokens[0])?;
        let b = parse(tokens[1])?;
        if a == b {
            return Err(Error::Validation(format!(
                "self-loop on vertex {a} (line {line_no})"
            )));
        }
        let e = (a.min(b), a.max(b));
        n = n.max(e.1);
        if seen.insert(e) {
            edges.push(e);
        }
    }
    if n == 0 {
        return Err(Error::Parse {
            line: 0,
            message: "edge list contains no edges".into(),
        });
    }
    Ok(GraphInstance::from_parts(n, edges, InstanceKind::General))
}

/// Textual instance description used by the CLI and experiment configs.
///
/// `path:<n>`, `bipartite:<L>x<R>`, `random:<n>:<p>:<seed>` or `file:<path>`.
#[derive(Clone, Debug, PartialEq)]
pub enum InstanceSpec {
    Path(usize),
    Bipartite { left: usize, right: usize },
    Random { n: usize, p: f64, seed: u64 },
    File(PathBuf),
}

impl InstanceSpec {
    pub fn build(&self) -> Result<GraphInstance> {
        match self {
            Self::Path(n) => make_path(*n),
            Self::Bipartite { left, right } => make_complete_bipartite(*left, *right),
            Self::Random { n, p, seed } => make_random(*n, *p, *seed),
            Self::File(path) => load_edge_list(&std::fs::read_to_string(path)?),
        }
    }
}

impl FromStr for InstanceSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || invalid(format!("unrecognised instance spec `{s}`"));
        let (kind, rest) = s.split_once(':').ok_or_else(bad)?;
        match kind {
            "path" => Ok(Self::Path(rest.parse().map_err(|_| bad())?)),
            "bipartite" => {
                let (l, r) = rest.split_once('x').ok_or_else(bad)?;
                Ok(Self::Bipartite {
                    left: l.parse().map_err(|_| bad())?,
                    right: r.parse().map_err(|_| bad())?,
                })
            }
            "random" => {
                let parts: Vec<&str> = rest.split(':').collect();
                if parts.len() != 3 {
                    return Err(bad());
                }
                Ok(Self::Random {
                    n: parts[0].parse().map_err(|_| bad())?,
                    p: parts[1].parse().map_err(|_| bad())?,
                    seed: parts[2].parse().map_err(|_| bad())?,
                })
            }
            "file" if !rest.is_empty() => Ok(Self::File(PathBuf::from(rest))),
            _ => Err(bad()),
        }
    }
}

impl fmt::Display for InstanceSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Path(n) => write!(f, "path:{n}"),
            Self::Bipartite { left, right } => write!(f, "bipartite:{left}x{right}"),
            Self::Random { n, p, seed } => write!(f, "random:{n}:{p}:{seed}"),
            Self::File(path) => write!(f, "file:{}", path.display()),
        }
    }
}

impl Serialize for InstanceSpec {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for InstanceSpec {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}
