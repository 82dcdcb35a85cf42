//! Exact nearest-neighbor search (kd-tree) and rectangular grid binning.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use thiserror::Error;

use crate::data::Site;

/// Errors raised when building spatial structures.
#[derive(Debug, Error, PartialEq)]
pub enum SpatialError {
    /// No sites were supplied.
    #[error("cannot build a spatial structure from zero sites")]
    EmptyInput,
    /// An axis of the bounding box has zero extent, so cells are undefined.
    #[error("degenerate extent on axis {axis}: min equals max")]
    DegenerateExtent { axis: usize },
    /// Grid resolution must be at least one cell per axis.
    #[error("cells per axis must be >= 1, got {0}")]
    BadCellCount(usize),
}

/// kd-tree over a fixed set of sites supporting exact k-nearest-neighbor
/// queries. Results are identical to a brute-force scan ordered by
/// `(distance, site index)`, so ties at equal distance resolve to the lower
/// index deterministically.
#[derive(Debug, Clone)]
pub struct SpatialIndex {
    sites: Vec<Site>,
    nodes: Vec<Node>,
    root: i32,
    dim: usize,
}

#[derive(Debug, Clone, Copy)]
struct Node {
    site: u32,
    axis: u32,
    left: i32,
    right: i32,
}

/// Neighbors of one query, sorted by ascending `(distance, index)`.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborSet {
    pub query: Site,
    /// Indices into the site list the index was built from.
    pub indices: Vec<usize>,
    /// Euclidean distances, parallel to `indices`.
    pub distances: Vec<f64>,
}

/// Max-heap entry ordered by `(distance², index)`, worst candidate on top.
#[derive(PartialEq)]
struct Candidate {
    d2: f64,
    idx: usize,
}

impl Eq for Candidate {}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.d2.total_cmp(&other.d2).then(self.idx.cmp(&other.idx))
    }
}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Builds a kd-tree over `sites`. All sites must share one dimension.
pub fn build_index(sites: &[Site]) -> Result<SpatialIndex, SpatialError> {
    if sites.is_empty() {
        return Err(SpatialError::EmptyInput);
    }
    let dim = sites[0].dim();
    assert!(
        sites.iter().all(|s| s.dim() == dim),
        "all sites must share one dimension"
    );

    let mut ids: Vec<u32> = (0..sites.len() as u32).collect();
    let mut nodes = Vec::with_capacity(sites.len());
    let root = build_node(sites, &mut ids, 0, dim, &mut nodes);
    Ok(SpatialIndex {
        sites: sites.to_vec(),
        nodes,
        root,
        dim,
    })
}

fn build_node(
    sites: &[Site],
    ids: &mut [u32],
    depth: usize,
    dim: usize,
    nodes: &mut Vec<Node>,
) -> i32 {
    if ids.is_empty() {
        return -1;
    }
    let axis = depth % dim;
    // Sort by (coordinate, index) so the layout is a pure function of input.
    ids.sort_unstable_by(|&a, &b| {
        sites[a as usize].coords()[axis]
            .total_cmp(&sites[b as usize].coords()[axis])
            .then(a.cmp(&b))
    });
    let mid = ids.len() / 2;
    let site = ids[mid];
    let slot = nodes.len();
    nodes.push(Node {
        site,
        axis: axis as u32,
        left: -1,
        right: -1,
    });
    let (lo, rest) = ids.split_at_mut(mid);
    let hi = &mut rest[1..];
    let left = build_node(sites, lo, depth + 1, dim, nodes);
    let right = build_node(sites, hi, depth + 1, dim, nodes);
    nodes[slot].left = left;
    nodes[slot].right = right;
    slot as i32
}

impl SpatialIndex {
    pub fn len(&self) -> usize {
        self.sites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn sites(&self) -> &[Site] {
        &self.sites
    }

    /// The `k` sites nearest to `query`, optionally excluding one index
    /// (used to drop the query's own row during calibration).
    ///
    /// `k` is clipped to the number of available sites. Ties at equal
    /// distance resolve to the lower site index, matching a brute-force scan
    /// sorted by `(distance, index)`.
    pub fn knn(&self, query: &Site, k: usize, exclude: Option<usize>) -> NeighborSet {
        assert_eq!(query.dim(), self.dim, "query dimension must match index");
        let available =
            self.sites.len() - usize::from(exclude.is_some_and(|e| e < self.sites.len()));
        let k_eff = k.min(available);

        let mut heap: BinaryHeap<Candidate> = BinaryHeap::with_capacity(k_eff + 1);
        if k_eff > 0 {
            self.search(self.root, query, k_eff, exclude, &mut heap);
        }

        let mut found: Vec<Candidate> = heap.into_vec();
        found.sort_unstable();
        NeighborSet {
            query: query.clone(),
            indices: found.iter().map(|c| c.idx).collect(),
            distances: found.iter().map(|c| c.d2.sqrt()).collect(),
        }
    }

    fn search(
        &self,
        node: i32,
        query: &Site,
        k: usize,
        exclude: Option<usize>,
        heap: &mut BinaryHeap<Candidate>,
    ) {
        if node < 0 {
            return;
        }
        let n = self.nodes[node as usize];
        let idx = n.site as usize;
        if Some(idx) != exclude {
            let d2 = query.distance_sq(&self.sites[idx]);
            let cand = Candidate { d2, idx };
            if heap.len() < k {
                heap.push(cand);
            } else if cand < *heap.peek().unwrap() {
                heap.pop();
                heap.push(cand);
            }
        }

        let axis = n.axis as usize;
        let diff = query.coords()[axis] - self.sites[idx].coords()[axis];
        let (near, far) = if diff < 0.0 {
            (n.left, n.right)
        } else {
            (n.right, n.left)
        };
        self.search(near, query, k, exclude, heap);
        // Visit the far side unless every point there is strictly worse than
        // the current k-th candidate. At exactly equal distance a lower index
        // could still displace the heap top, so prune only on strict excess.
        let prune = heap.len() == k && diff * diff > heap.peek().unwrap().d2;
        if !prune {
            self.search(far, query, k, exclude, heap);
        }
    }
}

/// Assignment of sites to a `cells_per_axis`-per-axis rectangular grid over
/// their bounding box. Cell ids are flattened with axis 0 varying fastest.
#[derive(Debug, Clone)]
pub struct GridBinning {
    pub mins: Vec<f64>,
    pub maxs: Vec<f64>,
    pub cells_per_axis: usize,
    pub dim: usize,
    /// Flattened cell id per input site.
    pub assignments: Vec<usize>,
}

impl GridBinning {
    /// Total number of cells, `cells_per_axis ^ dim`.
    pub fn n_cells(&self) -> usize {
        self.cells_per_axis.pow(self.dim as u32)
    }

    /// Per-axis cell coordinates for a flattened cell id.
    pub fn cell_coords(&self, cell: usize) -> Vec<usize> {
        let mut rem = cell;
        (0..self.dim)
            .map(|_| {
                let c = rem % self.cells_per_axis;
                rem /= self.cells_per_axis;
                c
            })
            .collect()
    }

    /// Number of sites assigned to each cell.
    pub fn counts(&self) -> Vec<usize> {
        let mut counts = vec![0usize; self.n_cells()];
        for &cell in &self.assignments {
            counts[cell] += 1;
        }
        counts
    }
}

/// Bins `sites` into a `g × ... × g` grid over their bounding box.
///
/// Boundary values land in the adjacent lower cell (the maximum lands in the
/// last cell), so every site maps to exactly one cell. Errors when an axis
/// has zero extent and `g > 1`, since cell boundaries would be undefined.
pub fn grid_bin(sites: &[Site], g: usize) -> Result<GridBinning, SpatialError> {
    if g == 0 {
        return Err(SpatialError::BadCellCount(0));
    }
    if sites.is_empty() {
        return Err(SpatialError::EmptyInput);
    }
    let dim = sites[0].dim();
    assert!(
        sites.iter().all(|s| s.dim() == dim),
        "all sites must share one dimension"
    );

    let mut mins = vec![f64::INFINITY; dim];
    let mut maxs = vec![f64::NEG_INFINITY; dim];
    for s in sites {
        for (a, &c) in s.coords().iter().enumerate() {
            mins[a] = mins[a].min(c);
            maxs[a] = maxs[a].max(c);
        }
    }
    if g > 1 {
        for a in 0..dim {
            if maxs[a] == mins[a] {
                return Err(SpatialError::DegenerateExtent { axis: a });
            }
        }
    }

    let assignments = sites
        .iter()
        .map(|s| {
            let mut cell = 0usize;
            let mut stride = 1usize;
            for a in 0..dim {
                let c = if g == 1 {
                    0
                } else {
                    let t = (s.coords()[a] - mins[a]) / (maxs[a] - mins[a]);
                    ((t * g as f64).floor() as usize).min(g - 1)
                };
                cell += c * stride;
                stride *= g;
            }
            cell
        })
        .collect();

    Ok(GridBinning {
        mins,
        maxs,
        cells_per_axis: g,
        dim,
        assignments,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::RngSpec;
    use proptest::prelude::*;
    use rand::Rng;

    /// Reference implementation: full scan sorted by (distance², index).
    fn brute_knn(sites: &[Site], query: &Site, k: usize, exclude: Option<usize>) -> Vec<usize> {
        let mut cands: Vec<(f64, usize)> = sites
            .iter()
            .enumerate()
            .filter(|(i, _)| Some(*i) != exclude)
            .map(|(i, s)| (query.distance_sq(s), i))
            .collect();
        cands.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        cands.truncate(k);
        cands.into_iter().map(|(_, i)| i).collect()
    }

    fn random_sites(n: usize, seed: u64) -> Vec<Site> {
        let mut rng = RngSpec::new(seed).stream("sites");
        (0..n)
            .map(|_| Site::xy(rng.random::<f64>(), rng.random::<f64>()))
            .collect()
    }

    #[test]
    fn knn_matches_brute_force_uniform() {
        let sites = random_sites(100, 5);
        let query = Site::xy(0.37, 0.81);
        let got = build_index(&sites).unwrap().knn(&query, 5, None);
        assert_eq!(got.indices, brute_knn(&sites, &query, 5, None));
        for w in got.distances.windows(2) {
            assert!(w[0] <= w[1]);
        }
    }

    #[test]
    fn knn_matches_brute_force_many_queries() {
        let sites = random_sites(500, 11);
        let index = build_index(&sites).unwrap();
        let queries = random_sites(50, 12);
        for q in &queries {
            for k in [1, 3, 10] {
                assert_eq!(index.knn(q, k, None).indices, brute_knn(&sites, q, k, None));
            }
        }
    }

    #[test]
    fn knn_excludes_self() {
        let sites = random_sites(80, 21);
        let index = build_index(&sites).unwrap();
        for i in 0..sites.len() {
            let got = index.knn(&sites[i], 4, Some(i));
            assert!(!got.indices.contains(&i));
            assert_eq!(got.indices, brute_knn(&sites, &sites[i], 4, Some(i)));
        }
    }

    #[test]
    fn knn_duplicate_sites_tie_break_by_index() {
        // Two copies of the same point: both must precede any farther site,
        // lower index first.
        let sites = vec![
            Site::xy(0.5, 0.5),
            Site::xy(0.9, 0.9),
            Site::xy(0.5, 0.5),
            Site::xy(0.51, 0.5),
        ];
        let index = build_index(&sites).unwrap();
        let got = index.knn(&Site::xy(0.5, 0.5), 3, None);
        assert_eq!(got.indices, vec![0, 2, 3]);
        assert_eq!(got.distances[0], 0.0);
        assert_eq!(got.distances[1], 0.0);
    }

    #[test]
    fn knn_clips_k_to_available() {
        let sites = random_sites(6, 2);
        let index = build_index(&sites).unwrap();
        assert_eq!(index.knn(&Site::xy(0.0, 0.0), 99, None).indices.len(), 6);
        assert_eq!(index.knn(&sites[0], 99, Some(0)).indices.len(), 5);
        // Single site excluded: empty but well-formed result.
        let lone = build_index(&sites[..1]).unwrap();
        let empty = lone.knn(&sites[0], 3, Some(0));
        assert!(empty.indices.is_empty() && empty.distances.is_empty());
    }

    #[test]
    fn knn_prefix_property() {
        // Neighbors for k are a prefix of neighbors for k+1.
        let sites = random_sites(120, 33);
        let index = build_index(&sites).unwrap();
        let q = Site::xy(0.25, 0.66);
        let mut prev: Vec<usize> = vec![];
        for k in 1..=20 {
            let got = index.knn(&q, k, None).indices;
            assert_eq!(&got[..k - 1], prev.as_slice());
            prev = got;
        }
    }

    #[test]
    fn build_rejects_empty() {
        assert_eq!(build_index(&[]).unwrap_err(), SpatialError::EmptyInput);
    }

    proptest! {
        #[test]
        fn knn_equals_brute_force(
            coords in proptest::collection::vec((0u32..1000, 0u32..1000), 1..60),
            qx in 0u32..1000,
            qy in 0u32..1000,
            k in 1usize..8,
        ) {
            // Coarse integer lattice coordinates force frequent distance ties.
            let sites: Vec<Site> = coords
                .iter()
                .map(|&(x, y)| Site::xy(x as f64 / 50.0, y as f64 / 50.0))
                .collect();
            let query = Site::xy(qx as f64 / 50.0, qy as f64 / 50.0);
            let index = build_index(&sites).unwrap();
            prop_assert_eq!(index.knn(&query, k, None).indices, brute_knn(&sites, &query, k, None));
            prop_assert_eq!(index.knn(&query, k, Some(0)).indices, brute_knn(&sites, &query, k, Some(0)));
        }
    }

    #[test]
    fn grid_bin_unit_square_corners() {
        // 4 sites at unit-square corners, g=2: one per cell.
        let sites = vec![
            Site::xy(0.0, 0.0),
            Site::xy(1.0, 0.0),
            Site::xy(0.0, 1.0),
            Site::xy(1.0, 1.0),
        ];
        let bins = grid_bin(&sites, 2).unwrap();
        assert_eq!(bins.assignments, vec![0, 1, 2, 3]);
        assert_eq!(bins.counts(), vec![1, 1, 1, 1]);
    }

    #[test]
    fn grid_bin_boundary_values_land_in_lower_cell() {
        // Interior boundary x=0.5 with g=2 belongs to the upper cell via
        // floor(0.5 * 2) = 1; the global max lands in the last cell.
        let sites = vec![Site::xy(0.0, 0.0), Site::xy(0.5, 0.5), Site::xy(1.0, 1.0)];
        let bins = grid_bin(&sites, 2).unwrap();
        assert_eq!(bins.assignments, vec![0, 3, 3]);
    }

    #[test]
    fn grid_bin_counts_near_uniform() {
        // 10_000 uniform sites on a 10×10 grid: each cell expects 100.
        // Binomial sd ≈ sqrt(10000 · 0.01 · 0.99) ≈ 9.95, so ±4 sd ≈ ±40.
        let sites = random_sites(10_000, 77);
        let bins = grid_bin(&sites, 10).unwrap();
        let counts = bins.counts();
        assert_eq!(counts.len(), 100);
        assert_eq!(counts.iter().sum::<usize>(), 10_000);
        for &c in &counts {
            assert!((60..=140).contains(&c), "cell count {c} outside 100 ± 40");
        }
    }

    #[test]
    fn grid_bin_degenerate_axis_errors() {
        let sites = vec![Site::xy(0.0, 1.0), Site::xy(0.0, 2.0)];
        assert_eq!(
            grid_bin(&sites, 3).unwrap_err(),
            SpatialError::DegenerateExtent { axis: 0 }
        );
        // A single cell never needs extent.
        assert!(grid_bin(&sites, 1).is_ok());
        assert_eq!(
            grid_bin(&sites, 0).unwrap_err(),
            SpatialError::BadCellCount(0)
        );
    }

    #[test]
    fn grid_bin_cell_coords_round_trip() {
        let sites = random_sites(200, 8);
        let bins = grid_bin(&sites, 7).unwrap();
        for (&cell, site) in bins.assignments.iter().zip(&sites) {
            let cc = bins.cell_coords(cell);
            assert_eq!(cc.len(), 2);
            for (a, &c) in cc.iter().enumerate() {
                assert!(c < 7);
                let lo = bins.mins[a] + (bins.maxs[a] - bins.mins[a]) * c as f64 / 7.0;
                let hi = bins.mins[a] + (bins.maxs[a] - bins.mins[a]) * (c as f64 + 1.0) / 7.0;
                // Allow boundary slack of one ulp-scale epsilon.
                assert!(site.coords()[a] >= lo - 1e-12 && site.coords()[a] <= hi + 1e-12);
            }
        }
    }
}
