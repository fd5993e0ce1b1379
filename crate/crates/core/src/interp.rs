//! Tricubic B-spline interpolation of a sampled field, with analytic
//! gradient and Hessian. Mirror boundary conditions on every face.

use crate::error::{Error, Result};
use crate::grid::{GridLayout, ScalarField3D};

const POLE: f64 = -0.267_949_192_431_122_7; // sqrt(3) - 2
const GAIN: f64 = 6.0;

/// Interpolating cubic B-spline through every node of a field.
#[derive(Clone, Debug)]
pub struct CubicSpline3D {
    layout: GridLayout,
    coeffs: Vec<f64>,
}

/// Value, gradient and Hessian at a point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SplineSample {
    pub value: f64,
    pub gradient: [f64; 3],
    pub hessian: [[f64; 3]; 3],
}

impl CubicSpline3D {
    pub fn new(field: &ScalarField3D) -> Result<Self> {
        let layout = field.layout;
        for (axis, &n) in layout.dims.iter().enumerate() {
            if n < 4 {
                return Err(Error::DegenerateExtent { axis, extent: n, min: 4 });
            }
        }
        let mut coeffs = field.values.clone();
        let [nx, ny, nz] = layout.dims;
        let strides = [1, nx, nx * ny];
        let mut line = Vec::new();
        for axis in 0..3 {
            let n = layout.dims[axis];
            let stride = strides[axis];
            let (oa, ob) = match axis {
                0 => ((nx, ny), (nx * ny, nz)),
                1 => ((1, nx), (nx * ny, nz)),
                _ => ((1, nx), (nx, ny)),
            };
            for b in 0..ob.1 {
                for a in 0..oa.1 {
                    let base = a * oa.0 + b * ob.0;
                    line.clear();
                    line.extend((0..n).map(|i| coeffs[base + i * stride]));
                    prefilter(&mut line);
                    for (i, v) in line.iter().enumerate() {
                        coeffs[base + i * stride] = *v;
                    }
                }
            }
        }
        Ok(Self { layout, coeffs })
    }

    pub fn layout(&self) -> &GridLayout {
        &self.layout
    }

    pub fn value(&self, p: [f64; 3]) -> f64 {
        self.sample(p).value
    }

    pub fn gradient(&self, p: [f64; 3]) -> [f64; 3] {
        self.sample(p).gradient
    }

    pub fn sample(&self, p: [f64; 3]) -> SplineSample {
        let f = self.layout.fractional(p);
        let mut idx = [[0usize; 4]; 3];
        let mut w = [[[0.0; 4]; 3]; 3]; // [axis][derivative order][tap]
        for a in 0..3 {
            let n = self.layout.dims[a] as i64;
            let x = f[a];
            let i0 = x.floor();
            let t = x - i0;
            let i0 = i0 as i64;
            for tap in 0..4 {
                idx[a][tap] = mirror(i0 - 1 + tap as i64, n);
            }
            let h = self.layout.spacing[a];
            let s = 1.0 - t;
            w[a][0] = [
                s * s * s / 6.0,
                (3.0 * t * t * t - 6.0 * t * t + 4.0) / 6.0,
                (-3.0 * t * t * t + 3.0 * t * t + 3.0 * t + 1.0) / 6.0,
                t * t * t / 6.0,
            ];
            w[a][1] = [
                -0.5 * s * s / h,
                (1.5 * t * t - 2.0 * t) / h,
                (-1.5 * t * t + t + 0.5) / h,
                0.5 * t * t / h,
            ];
            w[a][2] = [s / (h * h), (3.0 * t - 2.0) / (h * h), (1.0 - 3.0 * t) / (h * h), t / (h * h)];
        }
        let [nx, ny, _] = self.layout.dims;
        // derivative orders per output: value, d/dx.., second derivatives
        let orders: [[usize; 3]; 10] = [
            [0, 0, 0],
            [1, 0, 0],
            [0, 1, 0],
            [0, 0, 1],
            [2, 0, 0],
            [0, 2, 0],
            [0, 0, 2],
            [1, 1, 0],
            [1, 0, 1],
            [0, 1, 1],
        ];
        let mut acc = [0.0; 10];
        for kz in 0..4 {
            for ky in 0..4 {
                let row = nx * (idx[1][ky] + ny * idx[2][kz]);
                for kx in 0..4 {
                    let c = self.coeffs[row + idx[0][kx]];
                    for (o, ord) in orders.iter().enumerate() {
                        acc[o] += c * w[0][ord[0]][kx] * w[1][ord[1]][ky] * w[2][ord[2]][kz];
                    }
                }
            }
        }
        SplineSample {
            value: acc[0],
            gradient: [acc[1], acc[2], acc[3]],
            hessian: [[acc[4], acc[7], acc[8]], [acc[7], acc[5], acc[9]], [acc[8], acc[9], acc[6]]],
        }
    }
}

#[inline]
fn mirror(i: i64, n: i64) -> usize {
    let period = 2 * (n - 1);
    let mut i = i.rem_euclid(period);
    if i >= n {
        i = period - i;
    }
    i as usize
}

/// In-place conversion of samples to cubic B-spline coefficients.
fn prefilter(c: &mut [f64]) {
    let n = c.len();
    let z = POLE;
    for v in c.iter_mut() {
        *v *= GAIN;
    }
    // causal initialization over one period of the mirrored signal
    let period = 2 * n - 2;
    let mut sum = 0.0;
    let mut zk = 1.0;
    for k in 0..period {
        let s = if k < n { c[k] } else { c[period - k] };
        sum += zk * s;
        zk *= z;
    }
    c[0] = sum / (1.0 - zk);
    for k in 1..n {
        c[k] += z * c[k - 1];
    }
    c[n - 1] = (z / (z * z - 1.0)) * (c[n - 1] + z * c[n - 2]);
    for k in (0..n - 1).rev() {
        c[k] = z * (c[k + 1] - c[k]);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn interpolates_nodes() {
        let layout = GridLayout::cubic([6, 5, 7], [0.0; 3], 0.5).unwrap();
        let f = ScalarField3D::from_fn(layout, |p| (p[0] * 1.3).sin() * p[1] - p[2] * p[2]);
        let s = CubicSpline3D::new(&f).unwrap();
        for n in 0..layout.len() {
            let [i, j, k] = layout.ijk(n);
            assert_relative_eq!(s.value(layout.position(i, j, k)), f.values[n], epsilon = 1e-12);
        }
    }

    #[test]
    fn derivatives_of_cubic_field() {
        let phi = |p: [f64; 3]| p[0] * p[0] - 2.0 * p[2] * p[2] + p[1] * p[1] + 0.3 * p[0] * p[2] * p[2];
        let p = [0.05, -0.03, 0.02];
        for h in [0.05, 0.025] {
            let layout = GridLayout::cubic([41, 41, 41], [-20.0 * h; 3], h).unwrap();
            let s = CubicSpline3D::new(&ScalarField3D::from_fn(layout, phi)).unwrap();
            let smp = s.sample(p);
            let exact_hzz = -4.0 + 0.6 * p[0];
            let exact_gx = 2.0 * p[0] + 0.3 * p[2] * p[2];
            assert_relative_eq!(smp.gradient[0], exact_gx, epsilon = 1e-4);
            // cubic polynomials are reproduced up to the decaying mirror error
            assert_relative_eq!(smp.hessian[2][2], exact_hzz, epsilon = 1e-6);
        }
    }

    #[test]
    fn mirror_indexing() {
        assert_eq!(mirror(-1, 5), 1);
        assert_eq!(mirror(5, 5), 3);
        assert_eq!(mirror(2, 5), 2);
    }
}
