//! Periodic multigraph construction under periodic boundary conditions, and
//! the edge-multiplicity classes the adjacency decoder learns to reconstruct.

use crate::error::{validation, Result};
use crate::structures::{frac_to_cart, to_matrix, CrystalStructure};

/// Multiplicity classes: 0, 1, 2, 3, 4 and "5 or more".
pub const NUM_MULTIPLICITY_CLASSES: usize = 6;

/// Default neighbour cutoff in Å.
pub const DEFAULT_CUTOFF: f64 = 5.0;

/// A directed edge from `src` to the image of `dst` translated by `offset`
/// lattice vectors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub src: usize,
    pub dst: usize,
    pub offset: [i32; 3],
    pub distance: f64,
    /// Unit vector from `src` towards the `dst` image.
    pub direction: [f64; 3],
}

impl Edge {
    pub fn key(&self) -> (usize, usize, [i32; 3]) {
        (self.src, self.dst, self.offset)
    }

    /// The same connection seen from the other end.
    pub fn reversed(&self) -> Edge {
        Edge {
            src: self.dst,
            dst: self.src,
            offset: self.offset.map(|o| -o),
            distance: self.distance,
            direction: self.direction.map(|d| -d),
        }
    }

    /// Each unordered image connection is stored as two directed edges; this
    /// picks one representative per pair.
    pub fn is_canonical(&self) -> bool {
        self.src < self.dst || (self.src == self.dst && self.offset > [0, 0, 0])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PeriodicGraph {
    id: String,
    atomic_numbers: Vec<u8>,
    edges: Vec<Edge>,
    cutoff: f64,
}

impl PeriodicGraph {
    /// Assembles a graph from parts; edges are put in canonical sorted order.
    pub fn from_parts(
        id: impl Into<String>,
        atomic_numbers: Vec<u8>,
        mut edges: Vec<Edge>,
        cutoff: f64,
    ) -> Self {
        edges.sort_by_key(Edge::key);
        Self {
            id: id.into(),
            atomic_numbers,
            edges,
            cutoff,
        }
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn num_nodes(&self) -> usize {
        self.atomic_numbers.len()
    }

    pub fn atomic_numbers(&self) -> &[u8] {
        &self.atomic_numbers
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn cutoff(&self) -> f64 {
        self.cutoff
    }

    pub fn num_unordered_edges(&self) -> usize {
        self.edges.iter().filter(|e| e.is_canonical()).count()
    }

    /// Relabels nodes so that old node `i` becomes `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> PeriodicGraph {
        let mut z = vec![0; self.num_nodes()];
        for (i, &p) in perm.iter().enumerate() {
            z[p] = self.atomic_numbers[i];
        }
        let edges = self
            .edges
            .iter()
            .map(|e| Edge {
                src: perm[e.src],
                dst: perm[e.dst],
                ..*e
            })
            .collect();
        PeriodicGraph::from_parts(self.id.clone(), z, edges, self.cutoff)
    }
}

/// Per-axis bound on image offsets: any image within `cutoff` has
/// `|o_a| ≤ ceil(cutoff · ‖column a of L⁻¹‖)`, since fractional differences
/// inside the cell are already below 1.
pub fn offset_bounds(lattice: &crate::structures::Lattice, cutoff: f64) -> Result<[i32; 3]> {
    let inv = to_matrix(lattice)
        .try_inverse()
        .ok_or_else(|| validation!("degenerate lattice"))?;
    let mut bounds = [0; 3];
    for (a, b) in bounds.iter_mut().enumerate() {
        let n = (cutoff * inv.column(a).norm()).ceil();
        if !n.is_finite() || n > 1e4 {
            return Err(validation!(
                "cutoff {cutoff} needs too many periodic images"
            ));
        }
        *b = n as i32;
    }
    Ok(bounds)
}

/// Builds the directed multigraph of all image pairs with `0 < d ≤ cutoff`.
pub fn build_periodic_graph(s: &CrystalStructure, cutoff: f64) -> Result<PeriodicGraph> {
    if !(cutoff > 0.0 && cutoff.is_finite()) {
        return Err(validation!("cutoff {cutoff} must be positive"));
    }
    let lattice = s.lattice();
    let bounds = offset_bounds(lattice, cutoff)?;
    let pos = s.cart_coords();
    let n = pos.len();
    let mut edges = Vec::new();
    for ox in -bounds[0]..=bounds[0] {
        for oy in -bounds[1]..=bounds[1] {
            for oz in -bounds[2]..=bounds[2] {
                let offset = [ox, oy, oz];
                let shift = frac_to_cart(lattice, &offset.map(f64::from));
                for i in 0..n {
                    for j in i..n {
                        let e = Edge {
                            src: i,
                            dst: j,
                            offset,
                            distance: 0.0,
                            direction: [0.0; 3],
                        };
                        if i == j && !e.is_canonical() {
                            continue;
                        }
                        let v = [
                            pos[j][0] + shift[0] - pos[i][0],
                            pos[j][1] + shift[1] - pos[i][1],
                            pos[j][2] + shift[2] - pos[i][2],
                        ];
                        let d = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
                        if d > 0.0 && d <= cutoff {
                            let e = Edge {
                                distance: d,
                                direction: v.map(|x| x / d),
                                ..e
                            };
                            edges.push(e);
                            edges.push(e.reversed());
                        }
                    }
                }
            }
        }
    }
    Ok(PeriodicGraph::from_parts(
        s.id(),
        s.atomic_numbers().to_vec(),
        edges,
        cutoff,
    ))
}

/// Symmetric N×N matrix of multiplicity classes `min(5, connections)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MultiplicityTargets {
    n: usize,
    classes: Vec<u8>,
}

impl MultiplicityTargets {
    pub fn get(&self, i: usize, j: usize) -> u8 {
        self.classes[i * self.n + j]
    }

    pub fn num_nodes(&self) -> usize {
        self.n
    }

    /// Counts per class over unordered pairs `i ≤ j`.
    pub fn histogram(&self) -> [usize; NUM_MULTIPLICITY_CLASSES] {
        let mut h = [0; NUM_MULTIPLICITY_CLASSES];
        for i in 0..self.n {
            for j in i..self.n {
                h[self.get(i, j) as usize] += 1;
            }
        }
        h
    }
}

/// Number of unordered image connections per node pair, clamped to class 5.
/// A self pair's `+o`/`−o` directed edges count as one connection.
pub fn multiplicity_targets(g: &PeriodicGraph) -> MultiplicityTargets {
    let n = g.num_nodes();
    let mut counts = vec![0usize; n * n];
    for e in g.edges().iter().filter(|e| e.is_canonical()) {
        counts[e.src * n + e.dst] += 1;
        if e.src != e.dst {
            counts[e.dst * n + e.src] += 1;
        }
    }
    MultiplicityTargets {
        n,
        classes: counts
            .into_iter()
            .map(|c| c.min(NUM_MULTIPLICITY_CLASSES - 1) as u8)
            .collect(),
    }
}
