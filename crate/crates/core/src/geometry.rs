//! Parametric layered electrode geometry and its rasterization onto a grid.
//!
//! Coordinates: the lattice is centred on the z axis, the bottom face of the
//! rf plate sits at z = 0 and its top face at z = `plate_thickness`. The
//! ground plane is the plane z = -`rf_ground_gap`; the optional top plate is
//! the plane z = `plate_thickness + top_plate_height`.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::grid::GridLayout;

pub const DEFAULT_PLATE_THICKNESS: f64 = 1.0e-4;
/// Open boundaries sit at least this many pitches beyond the outer holes.
pub const MIN_MARGIN_PITCHES: f64 = 3.0;
pub const DEFAULT_MARGIN_PITCHES: f64 = 5.0;
pub const DEFAULT_MAX_NODES: usize = 40_000_000;
/// Each hole must be spanned by at least this many grid spacings.
pub const NODES_PER_HOLE: f64 = 8.0;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LatticeKind {
    #[default]
    Square,
}

/// rf hole-array plate above a ground plane, optionally covered by a top plate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ElectrodeStack {
    pub hole_diameter: f64,
    pub hole_pitch: f64,
    pub lattice_dims: (usize, usize),
    pub rf_ground_gap: f64,
    pub top_plate_height: Option<f64>,
    pub plate_thickness: f64,
    pub lattice_kind: LatticeKind,
}

/// Validate a geometry record. Invalid input is rejected, never clamped.
pub fn build_lattice_stack(params: ElectrodeStack) -> Result<ElectrodeStack> {
    let positive = |name: &'static str, value: f64| {
        if value > 0.0 && value.is_finite() {
            Ok(())
        } else {
            Err(Error::InvalidDimension { name, value })
        }
    };
    positive("hole_diameter", params.hole_diameter)?;
    positive("hole_pitch", params.hole_pitch)?;
    positive("rf_ground_gap", params.rf_ground_gap)?;
    positive("plate_thickness", params.plate_thickness)?;
    if let Some(top) = params.top_plate_height {
        positive("top_plate_height", top)?;
    }
    if params.lattice_dims.0 == 0 || params.lattice_dims.1 == 0 {
        return Err(Error::EmptyLattice(params.lattice_dims.0, params.lattice_dims.1));
    }
    if params.hole_diameter >= params.hole_pitch {
        return Err(Error::HoleOverlap {
            hole_diameter: params.hole_diameter,
            hole_pitch: params.hole_pitch,
        });
    }
    Ok(params)
}

impl ElectrodeStack {
    /// The 10x10 mm-scale trap: h = 1.14 mm, d = 1.64 mm, 1 mm above ground,
    /// top plate 15 mm above the rf plate.
    pub fn reference() -> Self {
        Self {
            hole_diameter: 1.14e-3,
            hole_pitch: 1.64e-3,
            lattice_dims: (10, 10),
            rf_ground_gap: 1.0e-3,
            top_plate_height: Some(15.0e-3),
            plate_thickness: DEFAULT_PLATE_THICKNESS,
            lattice_kind: LatticeKind::Square,
        }
    }

    /// Lateral centre of hole `(i, j)`.
    pub fn site_center(&self, site: (usize, usize)) -> Result<[f64; 2]> {
        let (nx, ny) = self.lattice_dims;
        if site.0 >= nx || site.1 >= ny {
            return Err(Error::SiteOutOfRange(site.0, site.1));
        }
        let d = self.hole_pitch;
        Ok([
            (site.0 as f64 - (nx as f64 - 1.0) / 2.0) * d,
            (site.1 as f64 - (ny as f64 - 1.0) / 2.0) * d,
        ])
    }

    /// Site closest to the lattice centre (upper-right of centre for even sizes).
    pub fn center_site(&self) -> (usize, usize) {
        (self.lattice_dims.0 / 2, self.lattice_dims.1 / 2)
    }

    pub fn sites(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let (nx, ny) = self.lattice_dims;
        (0..ny).flat_map(move |j| (0..nx).map(move |i| (i, j)))
    }

    /// Half extents of the rf plate in x and y.
    pub fn plate_half_extent(&self) -> [f64; 2] {
        [
            self.lattice_dims.0 as f64 * self.hole_pitch / 2.0,
            self.lattice_dims.1 as f64 * self.hole_pitch / 2.0,
        ]
    }

    pub fn plate_top(&self) -> f64 {
        self.plate_thickness
    }

    pub fn top_plate_z(&self) -> Option<f64> {
        self.top_plate_height.map(|h| self.plate_thickness + h)
    }

    /// Whether a point lies inside rf electrode metal.
    pub fn in_rf_metal(&self, p: [f64; 3], z_tol: f64) -> bool {
        if p[2] < -z_tol || p[2] > self.plate_thickness + z_tol {
            return false;
        }
        self.in_plate_footprint(p[0], p[1])
    }

    /// Lateral test: inside the plate outline and outside every hole.
    pub fn in_plate_footprint(&self, x: f64, y: f64) -> bool {
        let [hx, hy] = self.plate_half_extent();
        if x.abs() > hx || y.abs() > hy {
            return false;
        }
        let dx = nearest_center_offset(x.abs(), self.lattice_dims.0, self.hole_pitch);
        let dy = nearest_center_offset(y.abs(), self.lattice_dims.1, self.hole_pitch);
        let r = self.hole_diameter / 2.0;
        dx * dx + dy * dy >= r * r
    }

    /// Stable content hash of the geometry plus discretization settings.
    pub fn content_hash(&self, spacing: f64, margin: f64) -> String {
        let payload = serde_json::json!({
            "stack": self,
            "spacing": spacing,
            "margin": margin,
        });
        let digest = Sha256::digest(payload.to_string().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Distance from a non-negative coordinate to the nearest hole centre along one
/// axis. Uses only |x| so the lattice is exactly mirror symmetric.
fn nearest_center_offset(ax: f64, n: usize, d: f64) -> f64 {
    let half = n / 2;
    if n % 2 == 1 {
        let m = (ax / d).round().min(half as f64);
        ax - m * d
    } else {
        let m = (ax / d - 0.5).round().clamp(0.0, (half - 1) as f64);
        ax - (m + 0.5) * d
    }
}

/// Node labels used by [`rasterize`].
pub mod label {
    pub const FREE: u8 = 0;
    pub const RF: u8 = 1;
    pub const GROUND: u8 = 2;
    pub const TOP_PLATE: u8 = 3;
    pub const OPEN: u8 = 4;
}

/// Dirichlet boundary conditions on a grid.
///
/// Each node carries a label; label 0 is a free node, any other label is a
/// Dirichlet node held at `values[label]`. Faces whose nodes are free get a
/// zero-flux (mirror) condition in the solver.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundaryGrid {
    pub layout: GridLayout,
    labels: Vec<u8>,
    values: Vec<f64>,
}

impl BoundaryGrid {
    pub fn new(layout: GridLayout, labels: Vec<u8>, values: Vec<f64>) -> Result<Self> {
        if labels.len() != layout.len() {
            return Err(Error::InvalidParameter(format!(
                "{} labels for {} nodes",
                labels.len(),
                layout.len()
            )));
        }
        let max_label = labels.iter().copied().max().unwrap_or(0) as usize;
        if values.len() <= max_label {
            return Err(Error::InvalidParameter(format!(
                "label {max_label} has no potential (table has {} entries)",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("non-finite boundary potential".into()));
        }
        Ok(Self { layout, labels, values })
    }

    /// Build from a per-node closure returning `Some(label)` for Dirichlet nodes.
    pub fn from_fn(
        layout: GridLayout,
        values: Vec<f64>,
        f: impl Fn([usize; 3], [f64; 3]) -> Option<u8>,
    ) -> Result<Self> {
        let [nx, ny, nz] = layout.dims;
        let mut labels = Vec::with_capacity(layout.len());
        for k in 0..nz {
            for j in 0..ny {
                for i in 0..nx {
                    labels.push(f([i, j, k], layout.position(i, j, k)).unwrap_or(label::FREE));
                }
            }
        }
        Self::new(layout, labels, values)
    }

    #[inline]
    pub fn is_dirichlet(&self, index: usize) -> bool {
        self.labels[index] != label::FREE
    }

    #[inline]
    pub fn dirichlet_value(&self, index: usize) -> f64 {
        self.values[self.labels[index] as usize]
    }

    #[inline]
    pub fn label(&self, index: usize) -> u8 {
        self.labels[index]
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn potentials(&self) -> &[f64] {
        &self.values
    }

    pub fn dirichlet_mask(&self) -> Vec<bool> {
        self.labels.iter().map(|&l| l != label::FREE).collect()
    }

    pub fn node_count(&self) -> usize {
        self.labels.len()
    }

    pub fn dirichlet_count(&self) -> usize {
        self.labels.iter().filter(|&&l| l != label::FREE).count()
    }

    /// Same mask with every potential multiplied by `c`.
    pub fn scaled(&self, c: f64) -> Self {
        Self {
            layout: self.layout,
            labels: self.labels.clone(),
            values: self.values.iter().map(|v| v * c).collect(),
        }
    }

    /// Same mask with a replaced potential table.
    pub fn with_potentials(&self, values: Vec<f64>) -> Result<Self> {
        Self::new(self.layout, self.labels.clone(), values)
    }

    /// Largest |boundary potential| actually used by some node, or 1 when all are zero.
    pub fn potential_scale(&self) -> f64 {
        let mut used = vec![false; self.values.len()];
        for &l in &self.labels {
            used[l as usize] = true;
        }
        let s = self
            .values
            .iter()
            .zip(&used)
            .skip(1)
            .filter(|(_, &u)| u)
            .fold(0.0f64, |m, (v, _)| m.max(v.abs()));
        if s > 0.0 {
            s
        } else {
            1.0
        }
    }
}

/// Normalized electrode potentials: rf at 1, everything else grounded.
pub fn rf_potentials() -> Vec<f64> {
    let mut v = vec![0.0; 5];
    v[label::RF as usize] = 1.0;
    v
}

/// Unit bias on the top plate with the rf plate grounded.
pub fn top_plate_potentials() -> Vec<f64> {
    let mut v = vec![0.0; 5];
    v[label::TOP_PLATE as usize] = 1.0;
    v
}

/// Discretization settings for [`rasterize`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RasterOptions {
    pub spacing: f64,
    /// Distance from the outermost plate edge to the open boundary.
    pub margin: f64,
    pub max_nodes: usize,
}

impl RasterOptions {
    pub fn new(stack: &ElectrodeStack, spacing: f64) -> Self {
        Self {
            spacing,
            margin: DEFAULT_MARGIN_PITCHES * stack.hole_pitch,
            max_nodes: DEFAULT_MAX_NODES,
        }
    }
}

/// Grid extents that [`rasterize`] would produce, without allocating.
pub fn raster_layout(stack: &ElectrodeStack, opts: &RasterOptions) -> Result<GridLayout> {
    let s = opts.spacing;
    if !(s > 0.0 && s.is_finite()) {
        return Err(Error::InvalidDimension { name: "spacing", value: s });
    }
    let max = stack.hole_diameter / NODES_PER_HOLE;
    if s > max * (1.0 + 1e-12) {
        return Err(Error::Resolution { spacing: s, max });
    }
    let min_margin = MIN_MARGIN_PITCHES * stack.hole_pitch;
    if opts.margin < min_margin * (1.0 - 1e-12) {
        return Err(Error::MarginTooSmall { margin: opts.margin, min: min_margin });
    }
    let [px, py] = stack.plate_half_extent();
    let half_x = ((px + opts.margin) / s - 1e-9).ceil() as usize;
    let half_y = ((py + opts.margin) / s - 1e-9).ceil() as usize;
    let z_lo = -stack.rf_ground_gap;
    let z_hi = stack.top_plate_z().unwrap_or(stack.plate_thickness + opts.margin);
    let nz = ((z_hi - z_lo) / s).round().max(2.0) as usize + 1;
    let dims = [2 * half_x + 1, 2 * half_y + 1, nz];
    let nodes = dims[0]
        .checked_mul(dims[1])
        .and_then(|v| v.checked_mul(dims[2]))
        .unwrap_or(usize::MAX);
    if nodes > opts.max_nodes {
        return Err(Error::TooManyNodes { nodes, cap: opts.max_nodes });
    }
    GridLayout::cubic(dims, [-(half_x as f64) * s, -(half_y as f64) * s, z_lo], s)
}

/// Rasterize the stack into Dirichlet boundary conditions.
///
/// The ground plane is the bottom face, the top plate (or an open grounded
/// boundary `margin` above the rf plate) is the top face, and the four side
/// faces are grounded open boundaries. rf metal is labelled [`label::RF`] at
/// normalized potential 1.
pub fn rasterize(stack: &ElectrodeStack, opts: &RasterOptions) -> Result<BoundaryGrid> {
    let stack = build_lattice_stack(stack.clone())?;
    let layout = raster_layout(&stack, opts)?;
    let [nx, ny, nz] = layout.dims;
    let s = opts.spacing;
    let z_tol = 1e-9 * s;

    // z layers occupied by the plate; a plate thinner than the spacing still
    // gets the node layer closest to its mid-plane.
    let plate_layers: Vec<usize> = {
        let mut v: Vec<usize> = (1..nz - 1)
            .filter(|&k| {
                let z = layout.coord(2, k);
                z >= -z_tol && z <= stack.plate_thickness + z_tol
            })
            .collect();
        if v.is_empty() {
            let mid = ((stack.plate_thickness / 2.0 - layout.origin[2]) / s).round() as usize;
            v.push(mid.clamp(1, nz - 2));
        }
        v
    };
    let top_label = if stack.top_plate_height.is_some() { label::TOP_PLATE } else { label::OPEN };

    // lateral footprint is shared by every plate layer
    let mut footprint = vec![false; nx * ny];
    for j in 0..ny {
        let y = layout.coord(1, j);
        for i in 0..nx {
            footprint[i + nx * j] = stack.in_plate_footprint(layout.coord(0, i), y);
        }
    }

    let mut labels = vec![label::FREE; layout.len()];
    for k in 0..nz {
        let plate_layer = plate_layers.contains(&k);
        for j in 0..ny {
            for i in 0..nx {
                let l = if k == 0 {
                    label::GROUND
                } else if k == nz - 1 {
                    top_label
                } else if i == 0 || j == 0 || i == nx - 1 || j == ny - 1 {
                    label::OPEN
                } else if plate_layer && footprint[i + nx * j] {
                    label::RF
                } else {
                    label::FREE
                };
                labels[layout.index(i, j, k)] = l;
            }
        }
    }
    BoundaryGrid::new(layout, labels, rf_potentials())
}

/// Geometry section of a TOML configuration. Every length may be given in
/// metres (`*_m`) or millimetres (`*_mm`), but not both.
#[derive(Clone, Debug, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct GeometryConfig {
    pub hole_diameter_m: Option<f64>,
    pub hole_diameter_mm: Option<f64>,
    pub hole_pitch_m: Option<f64>,
    pub hole_pitch_mm: Option<f64>,
    pub lattice: (usize, usize),
    pub rf_ground_gap_m: Option<f64>,
    pub rf_ground_gap_mm: Option<f64>,
    pub top_plate_height_m: Option<f64>,
    pub top_plate_height_mm: Option<f64>,
    pub plate_thickness_m: Option<f64>,
    pub plate_thickness_mm: Option<f64>,
    #[serde(default)]
    pub lattice_kind: LatticeKind,
}

/// Resolve a length given under an `_m` or `_mm` key.
pub fn length_from(name: &str, metres: Option<f64>, millimetres: Option<f64>) -> Result<Option<f64>> {
    match (metres, millimetres) {
        (Some(_), Some(_)) => Err(Error::InvalidParameter(format!(
            "`{name}` given both as {name}_m and {name}_mm"
        ))),
        (Some(m), None) => Ok(Some(m)),
        (None, Some(mm)) => Ok(Some(mm * 1e-3)),
        (None, None) => Ok(None),
    }
}

impl GeometryConfig {
    pub fn to_stack(&self) -> Result<ElectrodeStack> {
        let required = |name: &str, m, mm| {
            length_from(name, m, mm)?
                .ok_or_else(|| Error::InvalidParameter(format!("missing geometry key `{name}_m`")))
        };
        build_lattice_stack(ElectrodeStack {
            hole_diameter: required("hole_diameter", self.hole_diameter_m, self.hole_diameter_mm)?,
            hole_pitch: required("hole_pitch", self.hole_pitch_m, self.hole_pitch_mm)?,
            lattice_dims: self.lattice,
            rf_ground_gap: required("rf_ground_gap", self.rf_ground_gap_m, self.rf_ground_gap_mm)?,
            top_plate_height: length_from(
                "top_plate_height",
                self.top_plate_height_m,
                self.top_plate_height_mm,
            )?,
            plate_thickness: length_from(
                "plate_thickness",
                self.plate_thickness_m,
                self.plate_thickness_mm,
            )?
            .unwrap_or(DEFAULT_PLATE_THICKNESS),
            lattice_kind: self.lattice_kind,
        })
    }

    pub fn from_stack(stack: &ElectrodeStack) -> Self {
        Self {
            hole_diameter_m: Some(stack.hole_diameter),
            hole_pitch_m: Some(stack.hole_pitch),
            lattice: stack.lattice_dims,
            rf_ground_gap_m: Some(stack.rf_ground_gap),
            top_plate_height_m: stack.top_plate_height,
            plate_thickness_m: Some(stack.plate_thickness),
            lattice_kind: stack.lattice_kind,
            ..Default::default()
        }
    }
}

/// Parse a geometry-only TOML document (keys at top level).
pub fn stack_from_toml(text: &str) -> Result<ElectrodeStack> {
    let cfg: GeometryConfig = toml::from_str(text)?;
    cfg.to_stack()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stack(h_mm: f64, d_mm: f64, dims: (usize, usize), top_mm: Option<f64>) -> ElectrodeStack {
        ElectrodeStack {
            hole_diameter: h_mm * 1e-3,
            hole_pitch: d_mm * 1e-3,
            lattice_dims: dims,
            rf_ground_gap: 1e-3,
            top_plate_height: top_mm.map(|t| t * 1e-3),
            plate_thickness: DEFAULT_PLATE_THICKNESS,
            lattice_kind: LatticeKind::Square,
        }
    }

    #[test]
    fn reference_stack_is_valid() {
        let s = build_lattice_stack(stack(1.14, 1.64, (10, 10), Some(15.0))).unwrap();
        assert_eq!(s, ElectrodeStack::reference());
    }

    #[test]
    fn equal_diameter_and_pitch_overlap() {
        let err = build_lattice_stack(stack(1.64, 1.64, (10, 10), Some(15.0))).unwrap_err();
        assert!(matches!(err, Error::HoleOverlap { .. }));
    }

    #[test]
    fn single_ring_without_top_plate() {
        let s = build_lattice_stack(stack(1.14, 1.64, (1, 1), None)).unwrap();
        assert_eq!(s.site_center((0, 0)).unwrap(), [0.0, 0.0]);
    }

    #[test]
    fn non_positive_lengths_rejected() {
        let mut s = stack(1.14, 1.64, (2, 2), None);
        s.rf_ground_gap = 0.0;
        assert!(matches!(build_lattice_stack(s).unwrap_err(), Error::InvalidDimension { .. }));
        assert!(matches!(
            build_lattice_stack(stack(1.14, 1.64, (0, 3), None)).unwrap_err(),
            Error::EmptyLattice(0, 3)
        ));
    }

    #[test]
    fn coarse_spacing_rejected() {
        let s = ElectrodeStack::reference();
        let opts = RasterOptions::new(&s, s.hole_diameter / 4.0);
        assert!(matches!(rasterize(&s, &opts).unwrap_err(), Error::Resolution { .. }));
    }

    #[test]
    fn node_cap_enforced() {
        let s = ElectrodeStack::reference();
        let mut opts = RasterOptions::new(&s, 1e-4);
        opts.max_nodes = 1000;
        assert!(matches!(rasterize(&s, &opts).unwrap_err(), Error::TooManyNodes { .. }));
    }

    #[test]
    fn reference_raster_assigns_electrodes() {
        let s = ElectrodeStack::reference();
        let opts = RasterOptions::new(&s, 1e-4);
        let layout = raster_layout(&s, &opts).unwrap();
        // bottom face is ground, top face the top plate
        assert_eq!(layout.origin[2], -1e-3);
        assert!((layout.extent_max()[2] - 15.1e-3).abs() < 1e-9);
        let mut small = s.clone();
        small.lattice_dims = (2, 2);
        let g = rasterize(&small, &opts).unwrap();
        let l = g.layout;
        let k_plate = l.nearest([0.0, 0.0, 0.0])[2];
        // between holes on the plate is rf metal at 1
        let idx = l.index(l.nearest([0.0, 0.0, 0.0])[0], l.nearest([0.0, 0.0, 0.0])[1], k_plate);
        assert_eq!(g.label(idx), label::RF);
        assert_eq!(g.dirichlet_value(idx), 1.0);
        // a hole centre is free
        let c = small.site_center((0, 0)).unwrap();
        let n = l.nearest([c[0], c[1], 0.0]);
        assert!(!g.is_dirichlet(l.index(n[0], n[1], k_plate)));
        // ground plane at 0
        let g0 = l.index(n[0], n[1], 0);
        assert_eq!(g.label(g0), label::GROUND);
        assert_eq!(g.dirichlet_value(g0), 0.0);
    }

    #[test]
    fn node_count_matches_enumeration() {
        let s = stack(1.14, 1.64, (3, 3), None);
        let opts = RasterOptions::new(&s, 5e-5);
        let mut opts = opts;
        opts.margin = 3.0 * s.hole_pitch;
        let g = rasterize(&s, &opts).unwrap();
        let [nx, ny, nz] = g.layout.dims;
        assert_eq!(g.node_count(), nx * ny * nz);

        // brute-force count of rf metal nodes straight from the geometry
        let l = g.layout;
        let mut expected_rf = 0usize;
        for k in 1..nz - 1 {
            for j in 1..ny - 1 {
                for i in 1..nx - 1 {
                    let p = l.position(i, j, k);
                    let [hx, hy] = s.plate_half_extent();
                    let in_plate = p[2] >= -1e-12 && p[2] <= s.plate_thickness + 1e-12;
                    if !in_plate || p[0].abs() > hx || p[1].abs() > hy {
                        continue;
                    }
                    let mut in_hole = false;
                    for a in 0..3 {
                        for b in 0..3 {
                            let cx = (a as f64 - 1.0) * s.hole_pitch;
                            let cy = (b as f64 - 1.0) * s.hole_pitch;
                            let r2 = (p[0] - cx).powi(2) + (p[1] - cy).powi(2);
                            if r2 < (s.hole_diameter / 2.0).powi(2) {
                                in_hole = true;
                            }
                        }
                    }
                    if !in_hole {
                        expected_rf += 1;
                    }
                }
            }
        }
        let rf = g.labels().iter().filter(|&&x| x == label::RF).count();
        assert!(expected_rf > 0);
        assert_eq!(rf, expected_rf);
        assert!(g.dirichlet_count() as f64 / g.node_count() as f64 > 0.0);
    }

    #[test]
    fn mask_is_mirror_symmetric() {
        for dims in [(3, 3), (4, 4), (2, 3)] {
            let s = stack(1.14, 1.64, dims, Some(4.0));
            let g = rasterize(&s, &RasterOptions::new(&s, 1.2e-4)).unwrap();
            let [nx, ny, nz] = g.layout.dims;
            for k in 0..nz {
                for j in 0..ny {
                    for i in 0..nx {
                        let a = g.label(g.layout.index(i, j, k));
                        assert_eq!(a, g.label(g.layout.index(nx - 1 - i, j, k)));
                        assert_eq!(a, g.label(g.layout.index(i, ny - 1 - j, k)));
                    }
                }
            }
        }
    }

    #[test]
    fn rasterization_is_deterministic() {
        let s = stack(1.14, 1.64, (2, 2), Some(3.0));
        let opts = RasterOptions::new(&s, 1.4e-4);
        assert_eq!(rasterize(&s, &opts).unwrap(), rasterize(&s, &opts).unwrap());
    }

    #[test]
    fn refinement_preserves_membership() {
        let s = stack(1.14, 1.64, (2, 2), Some(3.0));
        let coarse = rasterize(&s, &RasterOptions::new(&s, 1.2e-4)).unwrap();
        let fine = rasterize(&s, &RasterOptions::new(&s, 0.6e-4)).unwrap();
        let lc = coarse.layout;
        let lf = fine.layout;
        let [nx, ny, nz] = lc.dims;
        for k in 0..nz {
            for j in 0..ny {
                for i in 0..nx {
                    let p = lc.position(i, j, k);
                    let n = lf.nearest(p);
                    let q = lf.position(n[0], n[1], n[2]);
                    assert!((0..3).all(|a| (p[a] - q[a]).abs() < 1e-12));
                    assert_eq!(
                        coarse.label(lc.index(i, j, k)),
                        fine.label(lf.index(n[0], n[1], n[2])),
                        "node {:?}",
                        p
                    );
                }
            }
        }
    }

    #[test]
    fn toml_geometry_in_mm() {
        let text = r#"
            hole_diameter_mm = 1.14
            hole_pitch_mm = 1.64
            lattice = [10, 10]
            rf_ground_gap_mm = 1.0
            top_plate_height_mm = 15.0
        "#;
        let s = stack_from_toml(text).unwrap();
        assert!((s.hole_pitch - 1.64e-3).abs() < 1e-15);
        assert_eq!(s.plate_thickness, DEFAULT_PLATE_THICKNESS);
        let both = "hole_diameter_mm = 1.0\nhole_diameter_m = 0.001\nhole_pitch_mm = 2.0\nlattice=[1,1]\nrf_ground_gap_mm=1.0";
        assert!(stack_from_toml(both).is_err());
    }

    #[test]
    fn hash_changes_with_geometry() {
        let a = ElectrodeStack::reference();
        let mut b = a.clone();
        b.hole_pitch = 1.67e-3;
        assert_ne!(a.content_hash(1e-4, 8.2e-3), b.content_hash(1e-4, 8.2e-3));
        assert_eq!(a.content_hash(1e-4, 8.2e-3), a.content_hash(1e-4, 8.2e-3));
    }
}
