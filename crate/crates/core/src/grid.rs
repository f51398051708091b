//! Uniform Cartesian grids on a ball B_R with an exterior extension zone.
//!
//! Nodes are cell centers h(k + 1/2), k in Z^d. Interior nodes are the
//! centers strictly inside B_R (cells straddling the boundary are
//! dropped, a bias that vanishes with h). Extension nodes carry the
//! exterior-zero value and cover every point the kernel can reach from
//! the interior: a(B_R) + B_1 together with a^{-1}(B_{R+1}).

use crate::error::{Error, Result};
use crate::map::MapSpec;
use std::collections::HashMap;

pub const DEFAULT_MAX_NODES: usize = 4_000_000;

#[derive(Debug, Clone)]
pub struct Grid {
    dim: usize,
    radius: f64,
    spacing: f64,
    n_interior: usize,
    /// Interior nodes first, then extension nodes; d coordinates each.
    coords: Vec<f64>,
    /// Lattice index of each node (padded to 3 entries).
    lattice: Vec<[i64; 3]>,
    index: HashMap<[i64; 3], u32>,
    extension_radius: f64,
    /// Grids built from explicit node lists have no lattice structure;
    /// neighbor searches then fall back to full scans.
    custom: bool,
}

impl Grid {
    pub fn build(dim: usize, radius: f64, spacing: f64, map: &MapSpec, max_nodes: usize) -> Result<Grid> {
        if !(1..=3).contains(&dim) {
            return Err(Error::InvalidParameter(format!(
                "grid dimension must be 1, 2 or 3, got {dim}"
            )));
        }
        if map.dim() != dim {
            return Err(Error::DimensionMismatch { expected: dim, got: map.dim() });
        }
        if !(spacing > 0.0) || !spacing.is_finite() || !radius.is_finite() {
            return Err(Error::InvalidParameter("radius and spacing must be positive finite".into()));
        }
        if spacing >= 2.0 * radius || spacing > radius {
            return Err(Error::SpacingTooCoarse { spacing, radius });
        }

        let ext_radius = (map.range_bound(radius) + 1.0).max(map.inverse_range_bound(radius + 1.0));
        let kmax = (ext_radius / spacing + 0.5).ceil() as i64;
        let cells_per_axis = (2 * kmax) as usize;
        let total_cells = cells_per_axis
            .checked_pow(dim as u32)
            .ok_or(Error::MemoryCapExceeded { requested: usize::MAX, cap: max_nodes })?;
        if total_cells > max_nodes.saturating_mul(64) {
            return Err(Error::MemoryCapExceeded { requested: total_cells, cap: max_nodes });
        }

        let mut interior: Vec<(Vec<f64>, [i64; 3])> = Vec::new();
        let mut extension: Vec<(Vec<f64>, [i64; 3])> = Vec::new();
        let r2_int = radius * radius;
        let r2_ext = ext_radius * ext_radius;

        let mut k = [0i64; 3];
        for v in k.iter_mut().take(dim) {
            *v = -kmax;
        }
        'outer: loop {
            let mut c = vec![0.0; dim];
            let mut n2 = 0.0;
            for a in 0..dim {
                c[a] = spacing * (k[a] as f64 + 0.5);
                n2 += c[a] * c[a];
            }
            if n2 < r2_int {
                interior.push((c, k));
            } else if n2 < r2_ext {
                extension.push((c, k));
            }
            if interior.len() + extension.len() > max_nodes {
                return Err(Error::MemoryCapExceeded {
                    requested: interior.len() + extension.len(),
                    cap: max_nodes,
                });
            }
            for a in 0..dim {
                k[a] += 1;
                if k[a] < kmax {
                    continue 'outer;
                }
                k[a] = -kmax;
            }
            break;
        }
        if interior.is_empty() {
            return Err(Error::SpacingTooCoarse { spacing, radius });
        }

        let n_interior = interior.len();
        let total = n_interior + extension.len();
        let mut coords = Vec::with_capacity(total * dim);
        let mut lattice = Vec::with_capacity(total);
        let mut index = HashMap::with_capacity(total);
        for (id, (c, kk)) in interior.into_iter().chain(extension).enumerate() {
            coords.extend_from_slice(&c);
            lattice.push(kk);
            index.insert(kk, id as u32);
        }

        Ok(Grid {
            dim,
            radius,
            spacing,
            n_interior,
            coords,
            lattice,
            index,
            extension_radius: ext_radius,
            custom: false,
        })
    }

    /// Low-level constructor from explicit node lists. Intended for small
    /// hand-built configurations; operator assembly on such grids scans
    /// all node pairs instead of using lattice lookups.
    pub fn from_parts(
        dim: usize,
        radius: f64,
        spacing: f64,
        interior: Vec<Vec<f64>>,
        extension: Vec<Vec<f64>>,
    ) -> Result<Grid> {
        if dim == 0 || !(spacing > 0.0) {
            return Err(Error::InvalidParameter("need dim >= 1 and spacing > 0".into()));
        }
        if interior.is_empty() {
            return Err(Error::InvalidParameter("need at least one interior node".into()));
        }
        let n_interior = interior.len();
        let mut coords = Vec::new();
        for c in interior.iter().chain(extension.iter()) {
            if c.len() != dim {
                return Err(Error::DimensionMismatch { expected: dim, got: c.len() });
            }
            coords.extend_from_slice(c);
        }
        let total = n_interior + extension.len();
        Ok(Grid {
            dim,
            radius,
            spacing,
            n_interior,
            coords,
            lattice: vec![[0; 3]; total],
            index: HashMap::new(),
            extension_radius: f64::INFINITY,
            custom: true,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn extension_radius(&self) -> f64 {
        self.extension_radius
    }

    pub fn interior_count(&self) -> usize {
        self.n_interior
    }

    pub fn extension_count(&self) -> usize {
        self.total_count() - self.n_interior
    }

    pub fn total_count(&self) -> usize {
        self.lattice.len()
    }

    pub fn is_custom(&self) -> bool {
        self.custom
    }

    /// h^d, the cell volume.
    pub fn cell_volume(&self) -> f64 {
        self.spacing.powi(self.dim as i32)
    }

    #[inline]
    pub fn node(&self, id: usize) -> &[f64] {
        &self.coords[id * self.dim..(id + 1) * self.dim]
    }

    pub fn interior_nodes(&self) -> impl Iterator<Item = &[f64]> {
        (0..self.n_interior).map(move |i| self.node(i))
    }

    #[inline]
    pub(crate) fn lookup(&self, k: &[i64; 3]) -> Option<u32> {
        self.index.get(k).copied()
    }

    /// Lattice range [lo, hi] per axis whose cell centers can fall inside
    /// the box `center ± half` (one cell of slack on each side).
    pub(crate) fn lattice_range(&self, center: &[f64], half: &[f64], lo: &mut [i64; 3], hi: &mut [i64; 3]) {
        for a in 0..self.dim {
            lo[a] = ((center[a] - half[a]) / self.spacing - 0.5).floor() as i64 - 1;
            hi[a] = ((center[a] + half[a]) / self.spacing - 0.5).ceil() as i64 + 1;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::map::LinearMap;

    fn sorted_interior_1d(g: &Grid) -> Vec<f64> {
        let mut v: Vec<f64> = g.interior_nodes().map(|n| n[0]).collect();
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        v
    }

    #[test]
    fn hand_enumerated_interior_nodes() {
        let g = Grid::build(1, 1.0, 0.5, &MapSpec::identity(1), DEFAULT_MAX_NODES).unwrap();
        assert_eq!(sorted_interior_1d(&g), vec![-0.75, -0.25, 0.25, 0.75]);
        // Extension reaches out to |y| < 2 for the identity map.
        let max_ext = (g.interior_count()..g.total_count())
            .map(|i| g.node(i)[0].abs())
            .fold(0.0f64, f64::max);
        assert!((max_ext - 1.75).abs() < 1e-12);
        assert!((g.extension_radius() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn expansive_map_widens_extension() {
        let map = MapSpec::Linear(LinearMap::scaling(1, 2.0).unwrap());
        let g = Grid::build(1, 1.0, 0.5, &map, DEFAULT_MAX_NODES).unwrap();
        // a(B_1) + B_1 = [-3, 3] must be covered.
        assert!(g.extension_radius() >= 3.0);
        let max_ext = (g.interior_count()..g.total_count())
            .map(|i| g.node(i)[0].abs())
            .fold(0.0f64, f64::max);
        assert!(max_ext >= 2.75);
    }

    #[test]
    fn coarse_spacing_rejected() {
        let err = Grid::build(2, 1.0, 2.5, &MapSpec::identity(2), DEFAULT_MAX_NODES);
        assert!(matches!(err, Err(Error::SpacingTooCoarse { .. })));
    }

    #[test]
    fn boundary_centers_excluded() {
        // R = 1, h = 0.4: centers at +-1.0 sit exactly on the boundary and
        // their cells stick halfway out, so only +-0.2 and +-0.6 remain.
        let g = Grid::build(1, 1.0, 0.4, &MapSpec::identity(1), DEFAULT_MAX_NODES).unwrap();
        let got = sorted_interior_1d(&g);
        let expect = [-0.6, -0.2, 0.2, 0.6];
        assert_eq!(got.len(), expect.len(), "got {got:?}");
        for (g, e) in got.iter().zip(expect.iter()) {
            assert!((g - e).abs() < 1e-12, "got {got:?}");
        }
    }

    #[test]
    fn node_count_matches_direct_count_2d() {
        let g = Grid::build(2, 1.5, 0.25, &MapSpec::identity(2), DEFAULT_MAX_NODES).unwrap();
        let mut count = 0;
        let kmax = 20;
        for i in -kmax..kmax {
            for j in -kmax..kmax {
                let x = 0.25 * (i as f64 + 0.5);
                let y = 0.25 * (j as f64 + 0.5);
                if x * x + y * y < 1.5 * 1.5 {
                    count += 1;
                }
            }
        }
        assert_eq!(g.interior_count(), count);
    }

    #[test]
    fn memory_cap_enforced() {
        let err = Grid::build(2, 50.0, 0.01, &MapSpec::identity(2), 1000);
        assert!(matches!(err, Err(Error::MemoryCapExceeded { .. })));
    }

    #[test]
    fn interior_nodes_inside_ball() {
        let map = MapSpec::Linear(LinearMap::scaling(2, 0.5).unwrap());
        let g = Grid::build(2, 2.0, 0.3, &map, DEFAULT_MAX_NODES).unwrap();
        for n in g.interior_nodes() {
            let r2: f64 = n.iter().map(|v| v * v).sum();
            assert!(r2 < 4.0);
        }
        // Contracting maps still need extension out to a^{-1}(B_{R+1}).
        assert!(g.extension_radius() >= 6.0);
    }
}
