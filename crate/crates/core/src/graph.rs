//! Vertex universe, distances, neighborhoods and the partitions used by the
//! filter and the error bounds.
//!
//! Vertices are dense indices `0..m` into a fixed universe. Identifiers are
//! sorted subsets of that universe; regional partitions are fixed for a whole
//! experiment while cluster partitions are rebuilt from each time step's
//! identifier.

use std::collections::VecDeque;
use std::fmt;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Index of a vertex within a layout's universe.
#[derive(Copy, Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct VertexId(pub u32);

impl VertexId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl From<usize> for VertexId {
    fn from(i: usize) -> Self {
        VertexId(i as u32)
    }
}

impl fmt::Display for VertexId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Convenience for tests and fixtures: `vertices(&[0, 2])`.
pub fn vertices(ids: &[u32]) -> Vec<VertexId> {
    ids.iter().copied().map(VertexId).collect()
}

/// The set of active vertices at one time step, kept sorted and deduplicated.
#[derive(Clone, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Identifier(Vec<VertexId>);

impl Identifier {
    pub fn new(ids: impl IntoIterator<Item = VertexId>) -> Self {
        let mut v: Vec<VertexId> = ids.into_iter().collect();
        v.sort_unstable();
        v.dedup();
        Identifier(v)
    }

    pub fn from_indices(ids: &[u32]) -> Self {
        Self::new(ids.iter().copied().map(VertexId))
    }

    pub fn empty() -> Self {
        Identifier(Vec::new())
    }

    /// Every vertex of an `m`-vertex universe.
    pub fn universe(m: usize) -> Self {
        Identifier((0..m).map(VertexId::from).collect())
    }

    #[inline]
    pub fn contains(&self, v: VertexId) -> bool {
        self.0.binary_search(&v).is_ok()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = VertexId> + '_ {
        self.0.iter().copied()
    }

    pub fn as_slice(&self) -> &[VertexId] {
        &self.0
    }

    /// Members of `self` that also lie in `set` (which need not be sorted).
    pub fn intersect(&self, set: &[VertexId]) -> Vec<VertexId> {
        let mut out: Vec<VertexId> = set.iter().copied().filter(|v| self.contains(*v)).collect();
        out.sort_unstable();
        out.dedup();
        out
    }

    pub fn union(&self, other: &Identifier) -> Identifier {
        Identifier::new(self.iter().chain(other.iter()))
    }

    pub fn is_subset_of(&self, other: &Identifier) -> bool {
        self.iter().all(|v| other.contains(v))
    }

    /// Dense membership mask over a universe of size `m`.
    pub fn mask(&self, m: usize) -> Vec<bool> {
        let mut mask = vec![false; m];
        for v in self.iter() {
            mask[v.index()] = true;
        }
        mask
    }
}

impl FromIterator<VertexId> for Identifier {
    fn from_iter<I: IntoIterator<Item = VertexId>>(iter: I) -> Self {
        Identifier::new(iter)
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DistanceBackend {
    /// Straight-line distance between vertex coordinates.
    Euclidean,
    /// Shortest-path length in the adjacency graph.
    Hop,
}

impl std::str::FromStr for DistanceBackend {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "euclidean" => Ok(DistanceBackend::Euclidean),
            "hop" => Ok(DistanceBackend::Hop),
            other => Err(Error::Config(format!("unknown distance backend `{other}`"))),
        }
    }
}

const UNREACHABLE: u32 = u32::MAX;

/// A fixed vertex universe with a symmetric binary adjacency and a distance.
#[derive(Clone, Debug)]
pub struct SpatialLayout {
    n: usize,
    adjacency: Vec<bool>,
    neighbors: Vec<Vec<VertexId>>,
    coordinates: Option<Vec<(f64, f64)>>,
    backend: DistanceBackend,
    hops: Vec<u32>,
}

impl SpatialLayout {
    /// Build from a dense 0/1 matrix, validating symmetry and the zero diagonal.
    pub fn from_adjacency(matrix: &[Vec<bool>]) -> Result<Self> {
        let n = matrix.len();
        let mut adjacency = vec![false; n * n];
        for (i, row) in matrix.iter().enumerate() {
            if row.len() != n {
                return Err(Error::domain(format!(
                    "adjacency row {i} has {} entries, expected {n}",
                    row.len()
                )));
            }
            for (j, &a) in row.iter().enumerate() {
                adjacency[i * n + j] = a;
            }
        }
        for i in 0..n {
            if adjacency[i * n + i] {
                return Err(Error::domain(format!("nonzero diagonal at ({i},{i})")));
            }
            for j in (i + 1)..n {
                if adjacency[i * n + j] != adjacency[j * n + i] {
                    return Err(Error::domain(format!("asymmetric adjacency at ({i},{j})")));
                }
            }
        }
        Ok(Self::from_validated(n, adjacency))
    }

    fn from_validated(n: usize, adjacency: Vec<bool>) -> Self {
        let neighbors: Vec<Vec<VertexId>> = (0..n)
            .map(|i| {
                (0..n)
                    .filter(|&j| adjacency[i * n + j])
                    .map(VertexId::from)
                    .collect()
            })
            .collect();
        let hops = all_pairs_hops(n, &neighbors);
        SpatialLayout {
            n,
            adjacency,
            neighbors,
            coordinates: None,
            backend: DistanceBackend::Hop,
            hops,
        }
    }

    /// Complete graph on `n` vertices.
    pub fn complete(n: usize) -> Self {
        let mut adjacency = vec![true; n * n];
        for i in 0..n {
            adjacency[i * n + i] = false;
        }
        Self::from_validated(n, adjacency)
    }

    /// Path graph `0 - 1 - ... - n-1`.
    pub fn path(n: usize) -> Self {
        let mut adjacency = vec![false; n * n];
        for i in 1..n {
            adjacency[i * n + i - 1] = true;
            adjacency[(i - 1) * n + i] = true;
        }
        Self::from_validated(n, adjacency)
    }

    /// Attach coordinates and switch to the euclidean backend.
    pub fn with_coordinates(mut self, coords: Vec<(f64, f64)>) -> Result<Self> {
        if coords.len() != self.n {
            return Err(Error::domain(format!(
                "{} coordinates supplied for {} vertices",
                coords.len(),
                self.n
            )));
        }
        self.coordinates = Some(coords);
        self.backend = DistanceBackend::Euclidean;
        Ok(self)
    }

    pub fn with_backend(mut self, backend: DistanceBackend) -> Result<Self> {
        if backend == DistanceBackend::Euclidean && self.coordinates.is_none() {
            return Err(Error::domain(
                "euclidean distance requires coordinates for every vertex",
            ));
        }
        self.backend = backend;
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn backend(&self) -> DistanceBackend {
        self.backend
    }

    pub fn universe(&self) -> Identifier {
        Identifier::universe(self.n)
    }

    #[inline]
    pub fn is_adjacent(&self, a: VertexId, b: VertexId) -> bool {
        self.adjacency[a.index() * self.n + b.index()]
    }

    /// Adjacent vertices of `v` in the full (unmasked) graph.
    pub fn adjacent(&self, v: VertexId) -> &[VertexId] {
        &self.neighbors[v.index()]
    }

    pub fn edge_count(&self) -> usize {
        self.neighbors.iter().map(Vec::len).sum::<usize>() / 2
    }

    pub fn contains(&self, v: VertexId) -> bool {
        v.index() < self.n
    }

    /// `d(v, v')`; infinite for disconnected pairs under the hop backend.
    pub fn distance(&self, a: VertexId, b: VertexId) -> f64 {
        match self.backend {
            DistanceBackend::Hop => {
                let h = self.hops[a.index() * self.n + b.index()];
                if h == UNREACHABLE {
                    f64::INFINITY
                } else {
                    h as f64
                }
            }
            DistanceBackend::Euclidean => {
                let coords = self.coordinates.as_ref().expect("checked at construction");
                let (xa, ya) = coords[a.index()];
                let (xb, yb) = coords[b.index()];
                (xa - xb).hypot(ya - yb)
            }
        }
    }

    /// The leading `dim x dim` principal submatrix as a new layout.
    pub fn leading(&self, dim: usize) -> Result<Self> {
        if dim > self.n {
            return Err(Error::domain(format!(
                "requested {dim} vertices from a {}-vertex layout",
                self.n
            )));
        }
        let mut adjacency = vec![false; dim * dim];
        for i in 0..dim {
            for j in 0..dim {
                adjacency[i * dim + j] = self.adjacency[i * self.n + j];
            }
        }
        let mut out = Self::from_validated(dim, adjacency);
        if let Some(coords) = &self.coordinates {
            out.coordinates = Some(coords[..dim].to_vec());
        }
        out.backend = self.backend;
        Ok(out)
    }

    /// Render as the 0/1 CSV accepted by [`load_adjacency`].
    pub fn to_csv(&self) -> String {
        let mut s = String::with_capacity(self.n * self.n * 2);
        for i in 0..self.n {
            for j in 0..self.n {
                if j > 0 {
                    s.push(',');
                }
                s.push(if self.adjacency[i * self.n + j] {
                    '1'
                } else {
                    '0'
                });
            }
            s.push('\n');
        }
        s
    }
}

fn all_pairs_hops(n: usize, neighbors: &[Vec<VertexId>]) -> Vec<u32> {
    let mut hops = vec![UNREACHABLE; n * n];
    let mut queue = VecDeque::new();
    for s in 0..n {
        let row = &mut hops[s * n..(s + 1) * n];
        row[s] = 0;
        queue.push_back(s);
        while let Some(u) = queue.pop_front() {
            let du = row[u];
            for w in &neighbors[u] {
                if row[w.index()] == UNREACHABLE {
                    row[w.index()] = du + 1;
                    queue.push_back(w.index());
                }
            }
        }
    }
    hops
}

/// Parse the 0/1 adjacency CSV (no header, one row per vertex).
pub fn parse_adjacency(text: &str, path: &Path) -> Result<SpatialLayout> {
    let load_err = |row: Option<usize>, col: Option<usize>, message: String| Error::Load {
        path: path.to_path_buf(),
        row,
        col,
        message,
    };
    let mut rows: Vec<Vec<bool>> = Vec::new();
    for (r, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let mut row = Vec::new();
        for (c, cell) in line.split(',').enumerate() {
            match cell.trim() {
                "0" => row.push(false),
                "1" => row.push(true),
                other => {
                    return Err(load_err(
                        Some(r + 1),
                        Some(c + 1),
                        format!("non-binary entry `{other}`"),
                    ))
                }
            }
        }
        rows.push(row);
    }
    let n = rows.len();
    for (i, row) in rows.iter().enumerate() {
        if row.len() != n {
            return Err(load_err(
                Some(i + 1),
                None,
                format!("row has {} entries but the matrix has {n} rows", row.len()),
            ));
        }
    }
    for i in 0..n {
        if rows[i][i] {
            return Err(load_err(
                Some(i + 1),
                Some(i + 1),
                "nonzero diagonal entry".into(),
            ));
        }
        for j in (i + 1)..n {
            if rows[i][j] != rows[j][i] {
                return Err(load_err(
                    Some(i + 1),
                    Some(j + 1),
                    format!(
                        "asymmetric entry: ({},{}) differs from ({},{})",
                        i + 1,
                        j + 1,
                        j + 1,
                        i + 1
                    ),
                ));
            }
        }
    }
    SpatialLayout::from_adjacency(&rows)
}

/// Load a validated adjacency matrix from a CSV file.
pub fn load_adjacency(path: impl AsRef<Path>) -> Result<SpatialLayout> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)?;
    parse_adjacency(&text, path)
}

/// Load `id,x,y` rows and attach them to `layout`.
pub fn load_coordinates(layout: SpatialLayout, path: impl AsRef<Path>) -> Result<SpatialLayout> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)?;
    let mut coords = vec![None; layout.len()];
    for (r, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        let err = |msg: String| Error::Load {
            path: path.to_path_buf(),
            row: Some(r + 1),
            col: None,
            message: msg,
        };
        if fields.len() != 3 {
            return Err(err(format!(
                "expected `id,x,y`, found {} fields",
                fields.len()
            )));
        }
        let id: usize = fields[0]
            .parse()
            .map_err(|_| err(format!("bad id `{}`", fields[0])))?;
        let x: f64 = fields[1]
            .parse()
            .map_err(|_| err(format!("bad x `{}`", fields[1])))?;
        let y: f64 = fields[2]
            .parse()
            .map_err(|_| err(format!("bad y `{}`", fields[2])))?;
        if id >= coords.len() {
            return Err(err(format!(
                "vertex id {id} outside universe of {}",
                coords.len()
            )));
        }
        coords[id] = Some((x, y));
    }
    let coords: Option<Vec<(f64, f64)>> = coords.into_iter().collect();
    let coords = coords.ok_or_else(|| Error::Load {
        path: path.to_path_buf(),
        row: None,
        col: None,
        message: "coordinates missing for some vertices".into(),
    })?;
    layout.with_coordinates(coords)
}

/// A connected planar-like adjacency: `m` uniform points in the unit square,
/// each joined to its `k` nearest neighbours, symmetrised, with components
/// bridged by their closest pair. Used as a stand-in for areal-unit maps.
pub fn synthetic_areal_layout(m: usize, k: usize, seed: u64) -> SpatialLayout {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pts: Vec<(f64, f64)> = (0..m)
        .map(|_| (rng.random::<f64>(), rng.random::<f64>()))
        .collect();
    let d2 = |a: usize, b: usize| {
        let (dx, dy) = (pts[a].0 - pts[b].0, pts[a].1 - pts[b].1);
        dx * dx + dy * dy
    };
    let mut adjacency = vec![false; m * m];
    for i in 0..m {
        let mut order: Vec<usize> = (0..m).filter(|&j| j != i).collect();
        order.sort_by(|&a, &b| d2(i, a).total_cmp(&d2(i, b)));
        for &j in order.iter().take(k) {
            adjacency[i * m + j] = true;
            adjacency[j * m + i] = true;
        }
    }
    // bridge components until connected
    loop {
        let mut comp = vec![usize::MAX; m];
        let mut ncomp = 0;
        for s in 0..m {
            if comp[s] != usize::MAX {
                continue;
            }
            let mut stack = vec![s];
            comp[s] = ncomp;
            while let Some(u) = stack.pop() {
                for w in 0..m {
                    if adjacency[u * m + w] && comp[w] == usize::MAX {
                        comp[w] = ncomp;
                        stack.push(w);
                    }
                }
            }
            ncomp += 1;
        }
        if ncomp <= 1 {
            break;
        }
        let mut best = (f64::INFINITY, 0, 0);
        for a in 0..m {
            for b in 0..m {
                if comp[a] == 0 && comp[b] != 0 && d2(a, b) < best.0 {
                    best = (d2(a, b), a, b);
                }
            }
        }
        adjacency[best.1 * m + best.2] = true;
        adjacency[best.2 * m + best.1] = true;
    }
    SpatialLayout::from_validated(m, adjacency)
        .with_coordinates(pts)
        .map(|l| {
            l.with_backend(DistanceBackend::Hop)
                .expect("hop needs no coordinates")
        })
        .expect("coordinate count matches")
}

/// `N_t(v) = {v' in k : d(v, v') <= r, v' != v}`.
pub fn neighborhood(
    layout: &SpatialLayout,
    k: &Identifier,
    v: VertexId,
    r: u32,
) -> Result<Vec<VertexId>> {
    if !k.contains(v) {
        return Err(Error::domain(format!(
            "vertex {v} is not in the identifier"
        )));
    }
    Ok(neighborhood_unchecked(layout, k, v, r))
}

fn neighborhood_unchecked(
    layout: &SpatialLayout,
    k: &Identifier,
    v: VertexId,
    r: u32,
) -> Vec<VertexId> {
    if r == 1 && layout.backend() == DistanceBackend::Hop {
        return layout
            .adjacent(v)
            .iter()
            .copied()
            .filter(|w| k.contains(*w))
            .collect();
    }
    let r = r as f64;
    k.iter()
        .filter(|&w| w != v && layout.distance(v, w) <= r)
        .collect()
}

/// Neighborhoods of every member of one identifier, precomputed.
#[derive(Clone, Debug)]
pub struct NeighborhoodTable {
    identifier: Identifier,
    lists: Vec<Vec<VertexId>>,
}

impl NeighborhoodTable {
    pub fn build(layout: &SpatialLayout, k: &Identifier, r: u32) -> Self {
        let lists = k
            .iter()
            .map(|v| neighborhood_unchecked(layout, k, v, r))
            .collect();
        NeighborhoodTable {
            identifier: k.clone(),
            lists,
        }
    }

    pub fn identifier(&self) -> &Identifier {
        &self.identifier
    }

    /// Neighbors of `v`; empty when `v` is not in the identifier.
    pub fn get(&self, v: VertexId) -> &[VertexId] {
        match self.identifier.0.binary_search(&v) {
            Ok(pos) => &self.lists[pos],
            Err(_) => &[],
        }
    }
}

/// `d(W, W') = min_{v in W, v' in W'} d(v, v')`.
pub fn set_distance(layout: &SpatialLayout, w: &[VertexId], w2: &[VertexId]) -> Result<f64> {
    if w.is_empty() || w2.is_empty() {
        return Err(Error::domain("set distance needs two nonempty sets"));
    }
    Ok(w.iter()
        .flat_map(|&a| w2.iter().map(move |&b| (a, b)))
        .map(|(a, b)| layout.distance(a, b))
        .fold(f64::INFINITY, f64::min))
}

/// `{v in W : N(v) not a subset of W}`.
pub fn inner_boundary(
    layout: &SpatialLayout,
    k: &Identifier,
    w: &[VertexId],
    r: u32,
) -> Result<Vec<VertexId>> {
    if let Some(v) = w.iter().find(|v| !k.contains(**v)) {
        return Err(Error::domain(format!(
            "vertex {v} of W is not in the identifier"
        )));
    }
    let inside = Identifier::new(w.iter().copied());
    Ok(inside
        .iter()
        .filter(|&v| {
            neighborhood_unchecked(layout, k, v, r)
                .iter()
                .any(|n| !inside.contains(*n))
        })
        .collect())
}

/// Fixed, non-overlapping regions covering the universe.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegionalPartition {
    regions: Vec<Vec<VertexId>>,
    #[serde(skip)]
    region_of: Vec<usize>,
}

impl RegionalPartition {
    pub fn new(regions: Vec<Vec<VertexId>>, universe: usize) -> Result<Self> {
        let mut region_of = vec![usize::MAX; universe];
        let mut regions = regions;
        for (ri, region) in regions.iter_mut().enumerate() {
            region.sort_unstable();
            for &v in region.iter() {
                if v.index() >= universe {
                    return Err(Error::domain(format!("region vertex {v} outside universe")));
                }
                if region_of[v.index()] != usize::MAX {
                    return Err(Error::domain(format!("vertex {v} appears in two regions")));
                }
                region_of[v.index()] = ri;
            }
        }
        if let Some(v) = region_of.iter().position(|&r| r == usize::MAX) {
            return Err(Error::domain(format!(
                "vertex {v} is not covered by any region"
            )));
        }
        Ok(RegionalPartition { regions, region_of })
    }

    /// One region per vertex.
    pub fn singletons(universe: usize) -> Self {
        let regions = (0..universe).map(|i| vec![VertexId::from(i)]).collect();
        Self::new(regions, universe).expect("singletons partition the universe")
    }

    /// A single region holding the whole universe.
    pub fn whole(universe: usize) -> Self {
        Self::new(vec![(0..universe).map(VertexId::from).collect()], universe)
            .expect("one region covers the universe")
    }

    pub fn regions(&self) -> &[Vec<VertexId>] {
        &self.regions
    }

    pub fn region_index(&self, v: VertexId) -> usize {
        self.region_of[v.index()]
    }

    /// `v(R)`, the region containing `v`.
    pub fn region_of(&self, v: VertexId) -> &[VertexId] {
        &self.regions[self.region_of[v.index()]]
    }

    pub fn universe(&self) -> usize {
        self.region_of.len()
    }
}

/// Non-overlapping clusters of one identifier, ordered by smallest member.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ClusterPartition {
    clusters: Vec<Vec<VertexId>>,
    cluster_size: usize,
}

impl ClusterPartition {
    pub fn from_clusters(mut clusters: Vec<Vec<VertexId>>, cluster_size: usize) -> Self {
        for c in &mut clusters {
            c.sort_unstable();
        }
        clusters.retain(|c| !c.is_empty());
        clusters.sort_by_key(|c| c[0]);
        ClusterPartition {
            clusters,
            cluster_size,
        }
    }

    /// The trivial partition with one cluster holding all of `k`.
    pub fn single(k: &Identifier) -> Self {
        let clusters = if k.is_empty() {
            vec![]
        } else {
            vec![k.as_slice().to_vec()]
        };
        ClusterPartition {
            clusters,
            cluster_size: k.len().max(1),
        }
    }

    pub fn clusters(&self) -> &[Vec<VertexId>] {
        &self.clusters
    }

    pub fn len(&self) -> usize {
        self.clusters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clusters.is_empty()
    }

    pub fn cluster_size(&self) -> usize {
        self.cluster_size
    }

    /// Ordinal of the cluster containing `v`.
    pub fn cluster_of(&self, v: VertexId) -> Option<usize> {
        self.clusters
            .iter()
            .position(|c| c.binary_search(&v).is_ok())
    }

    pub fn max_cluster_len(&self) -> usize {
        self.clusters.iter().map(Vec::len).max().unwrap_or(0)
    }
}

/// Strategy producing a cluster partition from an identifier.
pub trait Partitioner: Send + Sync {
    fn partition(&self, k: &Identifier) -> ClusterPartition;
}

/// Consecutive chunks of the sorted identifier, the last possibly smaller.
#[derive(Copy, Clone, Debug)]
pub struct ConsecutiveChunks {
    pub size: usize,
}

impl Partitioner for ConsecutiveChunks {
    fn partition(&self, k: &Identifier) -> ClusterPartition {
        build_cluster_partition(k, self.size)
    }
}

pub fn build_cluster_partition(k: &Identifier, c: usize) -> ClusterPartition {
    let c = c.max(1);
    ClusterPartition {
        clusters: k.as_slice().chunks(c).map(<[VertexId]>::to_vec).collect(),
        cluster_size: c,
    }
}

/// Graph constants feeding the stability condition and the error bounds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraphQuantities {
    /// Interaction radius `r`.
    pub r: u32,
    /// Largest cluster over all times.
    pub max_cluster_size: usize,
    /// Largest neighborhood over all times and active vertices.
    pub max_degree: usize,
    /// Largest region containing an active vertex.
    pub max_region_size: usize,
    /// Largest distance between two active vertices sharing a region.
    pub max_region_diameter: f64,
}

/// Maxima over the supplied histories, each clamped to at least one.
pub fn graph_quantities(
    layout: &SpatialLayout,
    regions: &RegionalPartition,
    identifier_history: &[Identifier],
    cluster_history: &[ClusterPartition],
    r: u32,
) -> Result<GraphQuantities> {
    if identifier_history.is_empty() || cluster_history.is_empty() {
        return Err(Error::domain("graph quantities need a nonempty history"));
    }
    if identifier_history.len() != cluster_history.len() {
        return Err(Error::domain(
            "identifier and cluster histories are not aligned",
        ));
    }
    let max_cluster_size = cluster_history
        .iter()
        .map(|p| p.max_cluster_len())
        .max()
        .unwrap_or(0);
    let mut max_degree = 0;
    let mut max_region_size = 0;
    let mut max_region_diameter: f64 = 0.0;
    for k in identifier_history {
        for v in k.iter() {
            max_degree = max_degree.max(neighborhood_unchecked(layout, k, v, r).len());
            let region = regions.region_of(v);
            max_region_size = max_region_size.max(region.len());
            for &w in region {
                if k.contains(w) {
                    max_region_diameter = max_region_diameter.max(layout.distance(v, w));
                }
            }
        }
    }
    Ok(GraphQuantities {
        r: r.max(1),
        max_cluster_size: max_cluster_size.max(1),
        max_degree: max_degree.max(1),
        max_region_size: max_region_size.max(1),
        max_region_diameter: max_region_diameter.max(1.0),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// The 6x6 areal adjacency used as a worked example of the CAR benchmark.
    pub(crate) const W1: &str =
        "0,1,0,0,1,0\n1,0,1,0,1,0\n0,1,0,1,0,0\n0,0,1,0,1,1\n1,1,0,1,0,0\n0,0,0,1,0,0\n";

    fn w1() -> SpatialLayout {
        parse_adjacency(W1, Path::new("w1.csv")).unwrap()
    }

    fn set(ids: &[u32]) -> Vec<VertexId> {
        vertices(ids)
    }

    #[test]
    fn neighborhood_examples() {
        let complete = SpatialLayout::complete(3);
        let k = Identifier::universe(3);
        assert_eq!(
            neighborhood(&complete, &k, VertexId(0), 1).unwrap(),
            set(&[1, 2])
        );

        let single = Identifier::from_indices(&[2]);
        assert!(neighborhood(&complete, &single, VertexId(2), 1)
            .unwrap()
            .is_empty());

        // vertex 6 of the worked matrix is vertex 5 here; its only neighbor is 4 (index 3)
        let layout = w1();
        let k = Identifier::universe(6);
        assert_eq!(
            neighborhood(&layout, &k, VertexId(5), 1).unwrap(),
            set(&[3])
        );
    }

    #[test]
    fn neighborhood_rejects_inactive_vertex() {
        let layout = SpatialLayout::complete(3);
        let k = Identifier::from_indices(&[0, 1]);
        assert!(matches!(
            neighborhood(&layout, &k, VertexId(2), 1),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn set_distance_examples() {
        let path = SpatialLayout::path(5);
        assert_eq!(set_distance(&path, &set(&[0]), &set(&[0])).unwrap(), 0.0);
        assert_eq!(set_distance(&path, &set(&[0]), &set(&[2])).unwrap(), 2.0);
        assert_eq!(
            set_distance(&path, &set(&[0, 1]), &set(&[1, 4])).unwrap(),
            0.0
        );
        assert!(set_distance(&path, &[], &set(&[1])).is_err());
    }

    #[test]
    fn inner_boundary_examples() {
        let path = SpatialLayout::path(4);
        let k = Identifier::universe(4);
        assert!(inner_boundary(&path, &k, k.as_slice(), 1)
            .unwrap()
            .is_empty());
        assert_eq!(
            inner_boundary(&path, &k, &set(&[0, 1]), 1).unwrap(),
            set(&[1])
        );

        let complete = SpatialLayout::complete(4);
        assert_eq!(
            inner_boundary(&complete, &k, &set(&[0, 1]), 1).unwrap(),
            set(&[0, 1])
        );
        assert!(
            inner_boundary(&complete, &Identifier::from_indices(&[0]), &set(&[0, 1]), 1).is_err()
        );
    }

    #[test]
    fn cluster_partition_examples() {
        let p = build_cluster_partition(&Identifier::from_indices(&[1, 2, 4, 5, 7]), 2);
        assert_eq!(p.clusters(), &[set(&[1, 2]), set(&[4, 5]), set(&[7])]);
        let p = build_cluster_partition(&Identifier::from_indices(&[1, 2, 3, 4, 5, 7]), 2);
        assert_eq!(p.clusters(), &[set(&[1, 2]), set(&[3, 4]), set(&[5, 7])]);
        let p = build_cluster_partition(&Identifier::from_indices(&[3]), 5);
        assert_eq!(p.clusters(), &[set(&[3])]);
        assert!(build_cluster_partition(&Identifier::empty(), 2).is_empty());
    }

    #[test]
    fn graph_quantities_examples() {
        let layout = SpatialLayout::complete(2);
        let k = Identifier::universe(2);
        let regions = RegionalPartition::whole(2);
        let q = graph_quantities(
            &layout,
            &regions,
            &[k.clone()],
            &[ClusterPartition::single(&k)],
            1,
        )
        .unwrap();
        assert_eq!(q.max_cluster_size, 2);
        assert_eq!(q.max_region_size, 2);
        assert_eq!(q.max_region_diameter, 1.0);

        let layout = SpatialLayout::complete(4);
        let regions = RegionalPartition::singletons(4);
        let hist = vec![
            Identifier::from_indices(&[0]),
            Identifier::from_indices(&[3]),
        ];
        let parts: Vec<_> = hist.iter().map(|k| build_cluster_partition(k, 1)).collect();
        let q = graph_quantities(&layout, &regions, &hist, &parts, 1).unwrap();
        assert_eq!(q.max_degree, 1);
        assert_eq!(q.max_region_diameter, 1.0);

        let layout = SpatialLayout::complete(5);
        let k = Identifier::universe(5);
        let q = graph_quantities(
            &layout,
            &regions_of(5),
            &[k.clone()],
            &[build_cluster_partition(&k, 2)],
            1,
        )
        .unwrap();
        assert_eq!(q.max_degree, 4);

        assert!(graph_quantities(&layout, &regions_of(5), &[], &[], 1).is_err());
    }

    fn regions_of(n: usize) -> RegionalPartition {
        RegionalPartition::singletons(n)
    }

    #[test]
    fn w1_matrix_loads_with_seven_edges() {
        let layout = w1();
        assert_eq!(layout.len(), 6);
        assert_eq!(layout.edge_count(), 7);
    }

    #[test]
    fn load_errors_name_the_offending_cell() {
        let err = parse_adjacency("0,1\n0,0\n", Path::new("a.csv")).unwrap_err();
        match err {
            Error::Load { row, col, .. } => assert_eq!((row, col), (Some(1), Some(2))),
            e => panic!("unexpected {e}"),
        }
        let err = parse_adjacency("1,0\n0,0\n", Path::new("a.csv")).unwrap_err();
        assert!(err.to_string().contains("diagonal"));
        let err = parse_adjacency("0,2\n2,0\n", Path::new("a.csv")).unwrap_err();
        assert!(err.to_string().contains("non-binary"));
        let err = parse_adjacency("0,1,0\n1,0\n", Path::new("a.csv")).unwrap_err();
        assert!(matches!(err, Error::Load { row: Some(1), .. }));
        let layout = parse_adjacency("0,1\n1,0\n", Path::new("a.csv")).unwrap();
        assert_eq!(layout.edge_count(), 1);
    }

    #[test]
    fn hop_distance_is_infinite_across_components() {
        let layout = SpatialLayout::from_adjacency(&[
            vec![false, true, false],
            vec![true, false, false],
            vec![false, false, false],
        ])
        .unwrap();
        assert_eq!(layout.distance(VertexId(0), VertexId(1)), 1.0);
        assert!(layout.distance(VertexId(0), VertexId(2)).is_infinite());
    }

    #[test]
    fn euclidean_backend_uses_coordinates() {
        let layout = SpatialLayout::path(3)
            .with_coordinates(vec![(0.0, 0.0), (3.0, 4.0), (6.0, 8.0)])
            .unwrap();
        assert_eq!(layout.distance(VertexId(0), VertexId(1)), 5.0);
        let k = Identifier::universe(3);
        assert_eq!(
            neighborhood(&layout, &k, VertexId(0), 5).unwrap(),
            set(&[1])
        );
        assert!(SpatialLayout::path(3)
            .with_backend(DistanceBackend::Euclidean)
            .is_err());
    }

    #[test]
    fn leading_submatrix_and_csv_round_trip() {
        let layout = w1();
        let sub = layout.leading(3).unwrap();
        assert_eq!(sub.edge_count(), 2);
        let again = parse_adjacency(&layout.to_csv(), Path::new("x")).unwrap();
        assert_eq!(again.to_csv(), layout.to_csv());
        assert!(layout.leading(7).is_err());
    }

    #[test]
    fn synthetic_layout_is_connected_and_sparse() {
        let layout = synthetic_areal_layout(120, 4, 7);
        let u = VertexId(0);
        assert!((0..120).all(|j| layout.distance(u, VertexId(j)).is_finite()));
        let mean_degree = 2.0 * layout.edge_count() as f64 / 120.0;
        assert!((4.0..8.0).contains(&mean_degree), "{mean_degree}");
    }

    #[test]
    fn regional_partition_validation() {
        assert!(RegionalPartition::new(vec![set(&[0]), set(&[0, 1])], 2).is_err());
        assert!(RegionalPartition::new(vec![set(&[0])], 2).is_err());
        let r = RegionalPartition::new(vec![set(&[1, 0]), set(&[2])], 3).unwrap();
        assert_eq!(r.region_of(VertexId(1)), &set(&[0, 1])[..]);
    }
}
