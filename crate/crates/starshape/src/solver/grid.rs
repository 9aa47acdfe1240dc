//! Lattice discretization of a star domain.
//!
//! The grid covers the domain's bounding box with uniform spacing `h` and
//! keeps the nodes that lie inside the origin component. Each interior node
//! records, per axis and side, either its interior neighbor or the bisected
//! distance to the boundary, so the boundary-fitted stencil in `assemble`
//! never needs the membership oracle again.

use crate::domain::{DomainSlice, StarDomain};
use crate::error::Error;
use crate::exec;
use crate::kernel;
use crate::torsion::TorsionField;
use crate::Result;

/// Boundary crossings along lattice edges are bisected to this absolute
/// tolerance.
const BISECTION_TOL: f64 = 1e-10;

/// Floor for a boundary distance, as a fraction of `h`. A node this close to
/// the boundary gets a huge but finite diagonal entry that pins its value.
const DISTANCE_FLOOR: f64 = 1e-10;

/// Fractions of the box half-extents at which cross-sections are measured
/// for the thinness check.
const SECTION_FRACTIONS: [f64; 5] = [-0.5, -0.25, 0.0, 0.25, 0.5];

/// A star domain sampled on a uniform lattice.
///
/// Interior nodes are numbered in lexicographic lattice order with the last
/// axis fastest. Since the cross axes are the short ones, neighbors along
/// `x_1` stay close in the numbering and the planar system is narrowly
/// banded.
#[derive(Debug, Clone)]
pub struct GridDiscretization {
    field: TorsionField,
    h: f64,
    origin: Vec<f64>,
    dims: Vec<usize>,
    strides: Vec<usize>,
    /// Flat lattice index -> interior node id, or -1.
    index: Vec<i64>,
    /// Interior node id -> flat lattice index.
    nodes: Vec<usize>,
    /// Node-major `[axis][side]` neighbor ids, -1 when the boundary
    /// intervenes; `2 d` entries per node, minus side first.
    neighbors: Vec<i64>,
    /// Node-major distances matching `neighbors`; equals `h` exactly when
    /// the neighbor is interior, otherwise the bisected boundary gap.
    distances: Vec<f64>,
}

impl GridDiscretization {
    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn dimension(&self) -> usize {
        self.field.dimension()
    }

    pub fn field(&self) -> &TorsionField {
        &self.field
    }

    pub fn interior_count(&self) -> usize {
        self.nodes.len()
    }

    /// Lattice layout `(origin, dims)`; node coordinates are
    /// `origin + index * h` componentwise.
    pub fn layout(&self) -> (&[f64], &[usize]) {
        (&self.origin, &self.dims)
    }

    /// Lattice multi-index of an interior node.
    pub fn lattice_of(&self, node: usize) -> Vec<usize> {
        let mut flat = self.nodes[node];
        let d = self.dims.len();
        let mut idx = vec![0usize; d];
        for k in 0..d {
            idx[k] = flat / self.strides[k];
            flat %= self.strides[k];
        }
        idx
    }

    pub fn node_coords(&self, node: usize) -> Vec<f64> {
        self.lattice_of(node)
            .iter()
            .zip(&self.origin)
            .map(|(&i, &o)| o + i as f64 * self.h)
            .collect()
    }

    /// Interior node at a lattice multi-index, if any. Out-of-lattice
    /// indices count as exterior.
    pub fn node_at(&self, idx: &[i64]) -> Option<usize> {
        let mut flat = 0usize;
        for (k, &i) in idx.iter().enumerate() {
            if i < 0 || i as usize >= self.dims[k] {
                return None;
            }
            flat += i as usize * self.strides[k];
        }
        let id = self.index[flat];
        (id >= 0).then_some(id as usize)
    }

    /// Interior neighbor along `axis` on `side` (0 = minus, 1 = plus), or
    /// `None` when the boundary sits between.
    pub fn neighbor(&self, node: usize, axis: usize, side: usize) -> Option<usize> {
        let d = self.dims.len();
        let id = self.neighbors[node * 2 * d + 2 * axis + side];
        (id >= 0).then_some(id as usize)
    }

    /// `(minus, plus)` gaps along `axis`; each lies in `(0, h]`.
    pub fn gaps(&self, node: usize, axis: usize) -> (f64, f64) {
        let d = self.dims.len();
        let base = node * 2 * d + 2 * axis;
        (self.distances[base], self.distances[base + 1])
    }

    /// True when every stencil arm has full length `h`, so the node sees the
    /// uniform second-order stencil.
    pub fn uniform_stencil(&self, node: usize) -> bool {
        let d = self.dims.len();
        self.distances[node * 2 * d..(node + 1) * 2 * d]
            .iter()
            .all(|&g| g == self.h)
    }

    /// Torsion field values at the interior nodes, the natural initial
    /// iterate and the zero-scale reference solution.
    pub fn sample_torsion(&self) -> Result<Vec<f64>> {
        exec::try_map(self.nodes.len(), |i| self.field.value(&self.node_coords(i)))
    }

    /// Largest coordinate norm over the interior nodes, used for chart
    /// preflights.
    pub fn max_radius(&self) -> f64 {
        (0..self.nodes.len())
            .map(|i| crate::linalg::norm(&self.node_coords(i)))
            .fold(0.0, f64::max)
    }
}

/// Builds the lattice for a domain at spacing `h`.
///
/// `h` must not exceed a tenth of the first separation point, and every
/// sampled cross-section of the domain must be at least `3 h` thick;
/// otherwise the stencil cannot see the geometry it is supposed to resolve.
pub fn discretize(dom: &StarDomain, h: f64) -> Result<GridDiscretization> {
    let field = dom.field().clone();
    let d = field.dimension();
    if !(2..=3).contains(&d) {
        return Err(Error::validation(format!(
            "solver grids support dimension 2 or 3, got {d}"
        )));
    }
    if !h.is_finite() || h <= 0.0 {
        return Err(Error::validation(format!("grid spacing {h} must be positive")));
    }
    let a1 = field.profile().points().values()[0];
    if h > a1 / 10.0 {
        return Err(Error::validation(format!(
            "grid spacing {h} exceeds a tenth of the first separation point {a1}"
        )));
    }

    let slice = dom.slice_oracle(kernel::SLICE_SPACING)?;
    let (lo, hi) = kernel::quadrature_box(dom);
    let dims: Vec<usize> = (0..d)
        .map(|k| ((hi[k] - lo[k]) / h + 1e-9).floor() as usize + 1)
        .collect();
    let mut strides = vec![1usize; d];
    for k in (0..d - 1).rev() {
        strides[k] = strides[k + 1] * dims[k + 1];
    }
    let total = strides[0] * dims[0];

    let coords_of = |flat: usize| -> Vec<f64> {
        let mut rest = flat;
        (0..d)
            .map(|k| {
                let i = rest / strides[k];
                rest %= strides[k];
                lo[k] + i as f64 * h
            })
            .collect()
    };

    let mask = exec::try_map(total, |flat| inside(&slice, &coords_of(flat)))?;

    let mut index = vec![-1i64; total];
    let mut nodes = Vec::new();
    for (flat, &member) in mask.iter().enumerate() {
        if member {
            index[flat] = nodes.len() as i64;
            nodes.push(flat);
        }
    }
    if nodes.is_empty() {
        return Err(Error::resolution(format!(
            "no lattice node at spacing {h} falls inside the domain"
        )));
    }

    check_sections(&slice, &lo, &hi, h, d)?;

    // Neighbor table with bisected boundary gaps. A lattice neighbor outside
    // the array counts as exterior; the box has enough margin around the
    // domain that this only happens far outside anyway.
    let rows = exec::try_map(nodes.len(), |i| -> Result<Vec<(i64, f64)>> {
        let flat = nodes[i];
        let x = coords_of(flat);
        let mut row = Vec::with_capacity(2 * d);
        for axis in 0..d {
            let pos = (flat / strides[axis]) % dims[axis];
            for side in 0..2 {
                let step: i64 = if side == 0 { -1 } else { 1 };
                let npos = pos as i64 + step;
                let nid = if npos >= 0 && (npos as usize) < dims[axis] {
                    let nflat = (flat as i64 + step * strides[axis] as i64) as usize;
                    index[nflat]
                } else {
                    -1
                };
                if nid >= 0 {
                    row.push((nid, h));
                } else {
                    let gap = boundary_gap(&slice, &x, axis, step as f64 * h)?;
                    row.push((-1, gap.max(DISTANCE_FLOOR * h)));
                }
            }
        }
        Ok(row)
    })?;

    let mut neighbors = Vec::with_capacity(nodes.len() * 2 * d);
    let mut distances = Vec::with_capacity(nodes.len() * 2 * d);
    for row in rows {
        for (nid, gap) in row {
            neighbors.push(nid);
            distances.push(gap);
        }
    }

    Ok(GridDiscretization {
        field,
        h,
        origin: lo,
        dims,
        strides,
        index,
        nodes,
        neighbors,
        distances,
    })
}

/// Membership predicate for lattice work: exact sign of the field plus the
/// cell-coverage component selector. The sign test pins the boundary to the
/// continuum zero set, so bisected gaps are not polluted by the planar
/// oracle's own spacing.
fn inside(slice: &DomainSlice, x: &[f64]) -> Result<bool> {
    if !(slice.field().value(x)? > 0.0) {
        return Ok(false);
    }
    Ok(slice.cell_member(x[0], x[1]))
}

/// Bisects the boundary crossing on the segment from `x` (interior) to
/// `x + step e_axis` (exterior) and returns the distance from `x`.
fn boundary_gap(slice: &DomainSlice, x: &[f64], axis: usize, step: f64) -> Result<f64> {
    let mut probe = x.to_vec();
    let mut t_in = 0.0;
    let mut t_out = step.abs();
    while t_out - t_in > BISECTION_TOL {
        let mid = 0.5 * (t_in + t_out);
        probe[axis] = x[axis] + mid * step.signum();
        if inside(slice, &probe)? {
            t_in = mid;
        } else {
            t_out = mid;
        }
    }
    Ok(0.5 * (t_in + t_out))
}

/// Measures domain cross-sections along each axis through a small set of
/// anchor points and rejects any section thinner than `3 h`.
fn check_sections(slice: &DomainSlice, lo: &[f64], hi: &[f64], h: f64, d: usize) -> Result<()> {
    for axis in 0..d {
        let others: Vec<usize> = (0..d).filter(|&k| k != axis).collect();
        let mut anchor_sets = vec![vec![]];
        for &k in &others {
            let mut next = Vec::new();
            for partial in &anchor_sets {
                for f in SECTION_FRACTIONS {
                    let mut p: Vec<(usize, f64)> = partial.clone();
                    p.push((k, f * hi[k]));
                    next.push(p);
                }
            }
            anchor_sets = next;
        }
        for assignment in anchor_sets {
            let mut p = vec![0.0; d];
            for &(k, v) in &assignment {
                p[k] = v;
            }
            if !inside(slice, &p)? {
                continue;
            }
            let forward = ray_exit(slice, &p, axis, 1.0, hi[axis] - p[axis] + h)?;
            let backward = ray_exit(slice, &p, axis, -1.0, p[axis] - lo[axis] + h)?;
            let chord = forward + backward;
            if chord < 3.0 * h {
                return Err(Error::resolution(format!(
                    "domain section along axis {axis} through {p:?} is {chord:.4e}, \
                     thinner than 3 h = {:.4e}",
                    3.0 * h
                )));
            }
        }
    }
    Ok(())
}

/// Distance from an interior point to the domain boundary along a ray,
/// found by stepping to the first exterior probe and bisecting the bracket.
fn ray_exit(slice: &DomainSlice, p: &[f64], axis: usize, dir: f64, cap: f64) -> Result<f64> {
    let step = 0.25f64;
    let mut t_in = 0.0;
    let mut probe = p.to_vec();
    loop {
        let t = (t_in + step).min(cap);
        probe[axis] = p[axis] + dir * t;
        if !inside(slice, &probe)? {
            let mut t_out = t;
            while t_out - t_in > BISECTION_TOL {
                let mid = 0.5 * (t_in + t_out);
                probe[axis] = p[axis] + dir * mid;
                if inside(slice, &probe)? {
                    t_in = mid;
                } else {
                    t_out = mid;
                }
            }
            return Ok(0.5 * (t_in + t_out));
        }
        if t >= cap {
            return Ok(cap);
        }
        t_in = t;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::profile::HarmonicProfile;
    use crate::quad;

    fn fixture(n: usize, d: usize, eps: f64) -> StarDomain {
        let profile = HarmonicProfile::standard(n).unwrap();
        let field = TorsionField::new(profile, d, eps).unwrap();
        StarDomain::new(field).unwrap()
    }

    #[test]
    fn rejects_coarse_spacing_and_bad_dimension() {
        let dom = fixture(2, 2, 1e-3);
        let err = discretize(&dom, 0.2).unwrap_err();
        assert!(matches!(err, Error::Validation(_)), "{err}");
        assert!(err.to_string().contains("separation"));
    }

    #[test]
    fn nodes_lie_inside_and_gaps_are_bounded() {
        let dom = fixture(2, 2, 1e-3);
        let gd = discretize(&dom, 0.1).unwrap();
        assert_eq!(gd.dimension(), 2);
        let slice = dom.slice_oracle(0.01).unwrap();
        for i in (0..gd.interior_count()).step_by(37) {
            let x = gd.node_coords(i);
            assert!(gd.field().value(&x).unwrap() > 0.0, "node {x:?} outside");
            assert!(slice.cell_member(x[0], x[1]), "node {x:?} off the component");
            for axis in 0..2 {
                let (gm, gp) = gd.gaps(i, axis);
                assert!(gm > 0.0 && gm <= 0.1 + 1e-15, "minus gap {gm}");
                assert!(gp > 0.0 && gp <= 0.1 + 1e-15, "plus gap {gp}");
                for side in 0..2 {
                    if let Some(j) = gd.neighbor(i, axis, side) {
                        let y = gd.node_coords(j);
                        let expect = if side == 0 { -0.1 } else { 0.1 };
                        assert!((y[axis] - x[axis] - expect).abs() < 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn boundary_gap_matches_the_field_zero() {
        // No lattice row lands exactly on the x1 axis, so take the outermost
        // boundary-adjacent node on the row nearest to it and bisect the
        // field zero along that row directly. The stored gap must agree to
        // bisection accuracy, and the crossing must sit near the axial
        // extent that the domain module bounds independently.
        let dom = fixture(2, 2, 1e-3);
        let gd = discretize(&dom, 0.1).unwrap();
        let mut best: Option<usize> = None;
        for i in 0..gd.interior_count() {
            let x = gd.node_coords(i);
            if x[0] > 0.0 && gd.neighbor(i, 0, 1).is_none() {
                let better = match best {
                    None => true,
                    Some(j) => x[1].abs() < gd.node_coords(j)[1].abs(),
                };
                if better {
                    best = Some(i);
                }
            }
        }
        let i = best.expect("boundary-adjacent node");
        let x = gd.node_coords(i);
        let (_, gap) = gd.gaps(i, 0);
        let mut t_in = 0.0f64;
        let mut t_out = gd.h();
        let mut probe = x.clone();
        for _ in 0..80 {
            let mid = 0.5 * (t_in + t_out);
            probe[0] = x[0] + mid;
            if gd.field().value(&probe).unwrap() > 0.0 {
                t_in = mid;
            } else {
                t_out = mid;
            }
        }
        let direct = 0.5 * (t_in + t_out);
        assert!((gap - direct).abs() < 1e-8, "gap {gap} vs bisected {direct}");
        let t_ax = 4.9910855363352540327;
        assert!((x[0] + gap - t_ax).abs() < 0.2, "axial exit {}", x[0] + gap);
    }

    #[test]
    fn interior_count_tracks_domain_measure() {
        let dom = fixture(2, 2, 4e-3);
        let gd = discretize(&dom, 0.02).unwrap();
        let slice = dom.slice_oracle(0.01).unwrap();
        let (lo, hi) = ((gd.layout().0).to_vec(), {
            let (_, dims) = gd.layout();
            (0..2)
                .map(|k| gd.layout().0[k] + (dims[k] - 1) as f64 * gd.h())
                .collect::<Vec<_>>()
        });
        let classify = |x: &[f64]| {
            if slice.value_inside(x).is_some() {
                (1.0, 0.0)
            } else {
                (0.0, 0.0)
            }
        };
        let (area, _, _) = quad::midpoint_pair(&lo, &hi, 0.005, &classify).unwrap();
        let density = gd.interior_count() as f64 * gd.h() * gd.h();
        assert!(
            (density - area).abs() <= 0.02 * area,
            "count*h^2 = {density}, measure = {area}"
        );
    }

    #[test]
    fn refinement_scales_the_node_count() {
        let dom = fixture(2, 2, 1e-3);
        let coarse = discretize(&dom, 0.1).unwrap().interior_count() as f64;
        let fine = discretize(&dom, 0.05).unwrap().interior_count() as f64;
        let ratio = fine / coarse;
        assert!((3.7..=4.3).contains(&ratio), "refinement ratio {ratio}");
    }

    #[test]
    fn three_dimensional_grid_has_consistent_neighbors() {
        let dom = fixture(2, 3, 1e-3);
        let gd = discretize(&dom, 0.1).unwrap();
        assert_eq!(gd.dimension(), 3);
        assert!(gd.interior_count() > 1000);
        let mut boundary_arms = 0usize;
        for i in (0..gd.interior_count()).step_by(11) {
            let lat = gd.lattice_of(i);
            let ilat: Vec<i64> = lat.iter().map(|&v| v as i64).collect();
            assert_eq!(gd.node_at(&ilat), Some(i));
            for axis in 0..3 {
                for side in 0..2 {
                    let mut shifted = ilat.clone();
                    shifted[axis] += if side == 0 { -1 } else { 1 };
                    assert_eq!(gd.neighbor(i, axis, side), gd.node_at(&shifted));
                    if gd.neighbor(i, axis, side).is_none() {
                        boundary_arms += 1;
                    }
                }
            }
        }
        assert!(boundary_arms > 0, "sample saw no boundary-adjacent node");
    }

    #[test]
    fn torsion_samples_match_direct_evaluation() {
        let dom = fixture(2, 2, 1e-3);
        let gd = discretize(&dom, 0.1).unwrap();
        let u = gd.sample_torsion().unwrap();
        assert_eq!(u.len(), gd.interior_count());
        for i in (0..u.len()).step_by(53) {
            let direct = gd.field().value(&gd.node_coords(i)).unwrap();
            assert_eq!(u[i], direct);
            assert!(u[i] > 0.0, "interior torsion value must be positive");
        }
    }
}
