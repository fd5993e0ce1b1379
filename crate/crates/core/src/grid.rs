//! Regular 3-D grids and the scalar/vector fields sampled on them.
//!
//! Samples are stored x-fastest: `index = i + nx * (j + ny * k)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Node layout of a regular grid: extents, physical origin and spacing.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridLayout {
    pub dims: [usize; 3],
    pub origin: [f64; 3],
    pub spacing: [f64; 3],
}

impl GridLayout {
    pub fn new(dims: [usize; 3], origin: [f64; 3], spacing: [f64; 3]) -> Result<Self> {
        for (axis, &h) in spacing.iter().enumerate() {
            if !(h > 0.0 && h.is_finite()) {
                return Err(Error::InvalidParameter(format!(
                    "spacing along axis {axis} must be positive, got {h}"
                )));
            }
        }
        if dims.iter().any(|&n| n == 0) {
            return Err(Error::InvalidParameter(format!("empty grid extents {dims:?}")));
        }
        Ok(Self { dims, origin, spacing })
    }

    /// Isotropic grid.
    pub fn cubic(dims: [usize; 3], origin: [f64; 3], spacing: f64) -> Result<Self> {
        Self::new(dims, origin, [spacing; 3])
    }

    pub fn len(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.dims[0] * (j + self.dims[1] * k)
    }

    #[inline]
    pub fn ijk(&self, index: usize) -> [usize; 3] {
        let nx = self.dims[0];
        let ny = self.dims[1];
        [index % nx, (index / nx) % ny, index / (nx * ny)]
    }

    #[inline]
    pub fn position(&self, i: usize, j: usize, k: usize) -> [f64; 3] {
        [
            self.origin[0] + i as f64 * self.spacing[0],
            self.origin[1] + j as f64 * self.spacing[1],
            self.origin[2] + k as f64 * self.spacing[2],
        ]
    }

    /// Coordinate of node `n` along `axis`.
    #[inline]
    pub fn coord(&self, axis: usize, n: usize) -> f64 {
        self.origin[axis] + n as f64 * self.spacing[axis]
    }

    /// Continuous (fractional) node coordinate of a physical position.
    pub fn fractional(&self, p: [f64; 3]) -> [f64; 3] {
        [
            (p[0] - self.origin[0]) / self.spacing[0],
            (p[1] - self.origin[1]) / self.spacing[1],
            (p[2] - self.origin[2]) / self.spacing[2],
        ]
    }

    /// Nearest node to a physical position, clamped into the grid.
    pub fn nearest(&self, p: [f64; 3]) -> [usize; 3] {
        let f = self.fractional(p);
        let mut out = [0; 3];
        for a in 0..3 {
            out[a] = f[a].round().clamp(0.0, (self.dims[a] - 1) as f64) as usize;
        }
        out
    }

    /// Upper corner of the grid.
    pub fn extent_max(&self) -> [f64; 3] {
        self.position(self.dims[0] - 1, self.dims[1] - 1, self.dims[2] - 1)
    }

    pub fn contains(&self, p: [f64; 3]) -> bool {
        let hi = self.extent_max();
        (0..3).all(|a| p[a] >= self.origin[a] && p[a] <= hi[a])
    }

    /// Whether node `ijk` lies on any face of the grid.
    pub fn on_face(&self, ijk: [usize; 3]) -> bool {
        (0..3).any(|a| ijk[a] == 0 || ijk[a] + 1 == self.dims[a])
    }
}

/// Bookkeeping attached to solved fields.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FieldMeta {
    /// Relative residual the solve was asked for.
    pub tolerance: f64,
    /// Relative residual actually reached.
    pub residual: f64,
    pub iterations: usize,
}

/// Scalar samples on a regular grid (potential in V, or normalized so that the
/// rf electrode sits at 1, or a pseudopotential in eV).
#[derive(Clone, Debug, PartialEq)]
pub struct ScalarField3D {
    pub layout: GridLayout,
    pub values: Vec<f64>,
    pub meta: FieldMeta,
}

impl ScalarField3D {
    pub fn new(layout: GridLayout, values: Vec<f64>) -> Result<Self> {
        if values.len() != layout.len() {
            return Err(Error::InvalidParameter(format!(
                "{} samples for a grid of {} nodes",
                values.len(),
                layout.len()
            )));
        }
        Ok(Self { layout, values, meta: FieldMeta::default() })
    }

    pub fn zeros(layout: GridLayout) -> Self {
        Self { layout, values: vec![0.0; layout.len()], meta: FieldMeta::default() }
    }

    /// Sample a function of position at every node.
    pub fn from_fn(layout: GridLayout, f: impl Fn([f64; 3]) -> f64) -> Self {
        let [nx, ny, nz] = layout.dims;
        let mut values = Vec::with_capacity(layout.len());
        for k in 0..nz {
            for j in 0..ny {
                for i in 0..nx {
                    values.push(f(layout.position(i, j, k)));
                }
            }
        }
        Self { layout, values, meta: FieldMeta::default() }
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize, k: usize) -> f64 {
        self.values[self.layout.index(i, j, k)]
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            layout: self.layout,
            values: self.values.iter().map(|v| v * c).collect(),
            meta: self.meta.clone(),
        }
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.values
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
    }

    /// Trilinear interpolation; positions outside the grid are clamped.
    pub fn trilinear(&self, p: [f64; 3]) -> f64 {
        let f = self.layout.fractional(p);
        let mut base = [0usize; 3];
        let mut t = [0.0; 3];
        for a in 0..3 {
            let n = self.layout.dims[a];
            if n == 1 {
                base[a] = 0;
                t[a] = 0.0;
                continue;
            }
            let x = f[a].clamp(0.0, (n - 1) as f64);
            let b = (x.floor() as usize).min(n - 2);
            base[a] = b;
            t[a] = x - b as f64;
        }
        let mut acc = 0.0;
        for dk in 0..2 {
            for dj in 0..2 {
                for di in 0..2 {
                    let w = if di == 0 { 1.0 - t[0] } else { t[0] }
                        * if dj == 0 { 1.0 - t[1] } else { t[1] }
                        * if dk == 0 { 1.0 - t[2] } else { t[2] };
                    if w == 0.0 {
                        continue;
                    }
                    let i = (base[0] + di).min(self.layout.dims[0] - 1);
                    let j = (base[1] + dj).min(self.layout.dims[1] - 1);
                    let k = (base[2] + dk).min(self.layout.dims[2] - 1);
                    acc += w * self.at(i, j, k);
                }
            }
        }
        acc
    }

    /// Copy out the sub-grid `lo..=hi` (node indices, clamped to the grid).
    pub fn crop(&self, lo: [usize; 3], hi: [usize; 3]) -> Self {
        let mut a = [0; 3];
        let mut b = [0; 3];
        for ax in 0..3 {
            a[ax] = lo[ax].min(self.layout.dims[ax] - 1);
            b[ax] = hi[ax].min(self.layout.dims[ax] - 1).max(a[ax]);
        }
        let dims = [b[0] - a[0] + 1, b[1] - a[1] + 1, b[2] - a[2] + 1];
        let origin = self.layout.position(a[0], a[1], a[2]);
        let layout = GridLayout { dims, origin, spacing: self.layout.spacing };
        let mut values = Vec::with_capacity(layout.len());
        for k in a[2]..=b[2] {
            for j in a[1]..=b[1] {
                let row = self.layout.index(a[0], j, k);
                values.extend_from_slice(&self.values[row..row + dims[0]]);
            }
        }
        Self { layout, values, meta: self.meta.clone() }
    }
}

/// Three-component samples on a regular grid. `solve_laplace` followed by
/// `gradient` stores the gradient of the potential (not its negative).
#[derive(Clone, Debug, PartialEq)]
pub struct VectorField3D {
    pub layout: GridLayout,
    pub components: [Vec<f64>; 3],
}

impl VectorField3D {
    #[inline]
    pub fn at(&self, index: usize) -> [f64; 3] {
        [self.components[0][index], self.components[1][index], self.components[2][index]]
    }

    pub fn norm_sq(&self, index: usize) -> f64 {
        let v = self.at(index);
        v[0] * v[0] + v[1] * v[1] + v[2] * v[2]
    }
}
