use nalgebra::{Matrix3, SMatrix, SVector, Vector3};

use super::PseudoField;
use crate::error::{Error, Result};
use crate::geometry::ElectrodeStack;
use crate::interp::CubicSpline3D;

/// Where to look for a well: a vertical column around `axis_xy`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SiteSearch {
    pub axis_xy: [f64; 2],
    /// Open interval of heights searched.
    pub z_range: (f64, f64),
    pub lateral_radius: f64,
}

impl SiteSearch {
    /// Column above hole `site`, from the top of the rf plate to the top plate.
    pub fn for_site(stack: &ElectrodeStack, site: (usize, usize)) -> Result<Self> {
        Ok(Self {
            axis_xy: stack.site_center(site)?,
            z_range: (stack.plate_top(), stack.top_plate_z().unwrap_or(f64::INFINITY)),
            lateral_radius: 0.3 * stack.hole_pitch,
        })
    }
}

pub fn find_site_minimum(psi: &PseudoField, stack: &ElectrodeStack, site: (usize, usize)) -> Result<[f64; 3]> {
    find_minimum(psi, &SiteSearch::for_site(stack, site)?)
}

/// Lowest node in the search column, refined to sub-grid accuracy with a
/// local quadratic model.
pub fn find_minimum(psi: &PseudoField, search: &SiteSearch) -> Result<[f64; 3]> {
    let l = psi.field.layout;
    let [nx, ny, nz] = l.dims;
    let r2 = search.lateral_radius * search.lateral_radius;
    let mut best: Option<(f64, [usize; 3])> = None;
    let (mut k_lo, mut k_hi) = (usize::MAX, 0);
    for k in 0..nz {
        let z = l.coord(2, k);
        if z <= search.z_range.0 || z >= search.z_range.1 {
            continue;
        }
        for j in 0..ny {
            let dy = l.coord(1, j) - search.axis_xy[1];
            for i in 0..nx {
                let dx = l.coord(0, i) - search.axis_xy[0];
                if dx * dx + dy * dy > r2 {
                    continue;
                }
                let n = l.index(i, j, k);
                if psi.is_blocked(n) {
                    continue;
                }
                k_lo = k_lo.min(k);
                k_hi = k_hi.max(k);
                let v = psi.field.values[n];
                if best.map_or(true, |(b, _)| v < b) {
                    best = Some((v, [i, j, k]));
                }
            }
        }
    }
    let (_, node) = best.ok_or_else(|| Error::NoMinimum("search column contains no free node".into()))?;
    if node[2] == k_lo || node[2] == k_hi {
        return Err(Error::NoMinimum(format!(
            "lowest value sits at the {} end of the column",
            if node[2] == k_lo { "bottom" } else { "top" }
        )));
    }
    let p = l.position(node[0], node[1], node[2]);
    let (dx, dy) = (p[0] - search.axis_xy[0], p[1] - search.axis_xy[1]);
    let rim = search.lateral_radius - l.spacing[0].max(l.spacing[1]);
    if dx * dx + dy * dy > rim.max(0.0).powi(2) && rim > 0.0 {
        return Err(Error::NoMinimum("lowest value sits on the rim of the search column".into()));
    }
    if l.on_face(node) {
        return Err(Error::NoMinimum("lowest value sits on the grid boundary".into()));
    }
    let offset = refine(psi, node);
    Ok([
        p[0] + offset[0] * l.spacing[0],
        p[1] + offset[1] * l.spacing[1],
        p[2] + offset[2] * l.spacing[2],
    ])
}

/// Quadratic model `c + b.d + d^T H d / 2` (d in node units) fitted to the
/// 27 nodes around `node`. `None` when a neighbour is blocked or missing.
pub(crate) fn local_quadratic(psi: &PseudoField, node: [usize; 3]) -> Option<(f64, Vector3<f64>, Matrix3<f64>)> {
    let l = psi.field.layout;
    if l.on_face(node) {
        return None;
    }
    let mut ata = SMatrix::<f64, 10, 10>::zeros();
    let mut atb = SVector::<f64, 10>::zeros();
    for dk in -1i64..=1 {
        for dj in -1i64..=1 {
            for di in -1i64..=1 {
                let n = l.index(
                    (node[0] as i64 + di) as usize,
                    (node[1] as i64 + dj) as usize,
                    (node[2] as i64 + dk) as usize,
                );
                if psi.is_blocked(n) {
                    return None;
                }
                let (x, y, z) = (di as f64, dj as f64, dk as f64);
                let row = SVector::<f64, 10>::from_column_slice(&[
                    1.0,
                    x,
                    y,
                    z,
                    0.5 * x * x,
                    0.5 * y * y,
                    0.5 * z * z,
                    x * y,
                    x * z,
                    y * z,
                ]);
                ata += row * row.transpose();
                atb += row * psi.field.values[n];
            }
        }
    }
    let c = ata.cholesky()?.solve(&atb);
    let b = Vector3::new(c[1], c[2], c[3]);
    let h = Matrix3::new(c[4], c[7], c[8], c[7], c[5], c[9], c[8], c[9], c[6]);
    Some((c[0], b, h))
}

/// Sub-node offset of the minimum near `node`, in node units: Newton on a
/// local tricubic spline when the neighbourhood is free of electrodes, a
/// quadratic least-squares model otherwise.
fn refine(psi: &PseudoField, node: [usize; 3]) -> [f64; 3] {
    if let Some(d) = spline_refine(psi, node) {
        return d;
    }
    if let Some((_, b, h)) = local_quadratic(psi, node) {
        if let Some(chol) = h.cholesky() {
            let d = -chol.solve(&b);
            if d.iter().all(|v| v.abs() <= 1.0) {
                return [d[0], d[1], d[2]];
            }
        }
    }
    separable(psi, node)
}

const SPLINE_HALF_WIDTH: usize = 6;

fn spline_refine(psi: &PseudoField, node: [usize; 3]) -> Option<[f64; 3]> {
    let l = psi.field.layout;
    let lo = node.map(|c| c.saturating_sub(SPLINE_HALF_WIDTH));
    let hi = [0, 1, 2].map(|a| (node[a] + SPLINE_HALF_WIDTH).min(l.dims[a] - 1));
    if (0..3).any(|a| node[a] - lo[a] < 2 || hi[a] - node[a] < 2) {
        return None;
    }
    for k in lo[2]..=hi[2] {
        for j in lo[1]..=hi[1] {
            for i in lo[0]..=hi[0] {
                if psi.is_blocked(l.index(i, j, k)) {
                    return None;
                }
            }
        }
    }
    let spline = CubicSpline3D::new(&psi.field.crop(lo, hi)).ok()?;
    let origin = l.position(node[0], node[1], node[2]);
    let h = l.spacing;
    let mut d = Vector3::zeros();
    for _ in 0..50 {
        let p = [origin[0] + d[0] * h[0], origin[1] + d[1] * h[1], origin[2] + d[2] * h[2]];
        let s = spline.sample(p);
        // work in node units
        let g = Vector3::new(s.gradient[0] * h[0], s.gradient[1] * h[1], s.gradient[2] * h[2]);
        let hess = Matrix3::from_fn(|a, b| s.hessian[a][b] * h[a] * h[b]);
        let step = -hess.cholesky()?.solve(&g);
        d += step;
        if d.iter().any(|v| v.abs() > 1.5) {
            return None;
        }
        if step.norm() < 1e-10 {
            return Some([d[0], d[1], d[2]]);
        }
    }
    None
}

fn separable(psi: &PseudoField, node: [usize; 3]) -> [f64; 3] {
    let l = psi.field.layout;
    let n0 = l.index(node[0], node[1], node[2]);
    let strides = [1, l.dims[0], l.dims[0] * l.dims[1]];
    let mut out = [0.0; 3];
    for a in 0..3 {
        if node[a] == 0 || node[a] + 1 >= l.dims[a] {
            continue;
        }
        let (lo, hi) = (n0 - strides[a], n0 + strides[a]);
        if psi.is_blocked(lo) || psi.is_blocked(hi) {
            continue;
        }
        let v = &psi.field.values;
        let curv = v[lo] - 2.0 * v[n0] + v[hi];
        if curv > 0.0 {
            out[a] = (0.5 * (v[lo] - v[hi]) / curv).clamp(-0.5, 0.5);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{DriveConfig, IonSpecies};
    use crate::grid::{GridLayout, ScalarField3D};
    use crate::pseudopot::pseudopotential_analytic;

    fn analytic_field(origin: [f64; 3], h: f64, n: usize) -> PseudoField {
        let ion = IonSpecies::strontium88();
        let drive = DriveConfig::reference();
        let l = GridLayout::cubic([n, n, n], origin, h).unwrap();
        PseudoField::new(ScalarField3D::from_fn(l, |p| {
            pseudopotential_analytic((p[0] * p[0] + p[1] * p[1]).sqrt(), p[2], &ion, &drive, 3.1e-3, -4.0)
        }))
    }

    #[test]
    fn recovers_analytic_minimum() {
        let h = 1e-4;
        let psi = analytic_field([-1.037e-3, -0.981e-3, -1.013e-3], h, 21);
        let s = SiteSearch { axis_xy: [0.0, 0.0], z_range: (-1e-2, 1e-2), lateral_radius: 6e-4 };
        let m = find_minimum(&psi, &s).unwrap();
        for c in m {
            assert!(c.abs() < 1e-3 * 3.1e-3, "{m:?}");
        }
    }

    #[test]
    fn monotone_column_has_no_minimum() {
        let l = GridLayout::cubic([7, 7, 9], [-3e-4, -3e-4, 0.0], 1e-4).unwrap();
        let psi = PseudoField::new(ScalarField3D::from_fn(l, |p| p[0] * p[0] + p[1] * p[1] + p[2]));
        let s = SiteSearch { axis_xy: [0.0, 0.0], z_range: (-1.0, 1.0), lateral_radius: 3e-4 };
        assert!(matches!(find_minimum(&psi, &s), Err(Error::NoMinimum(_))));
    }

    #[test]
    fn out_of_range_site() {
        let psi = analytic_field([0.0; 3], 1e-4, 5);
        let stack = ElectrodeStack::reference();
        assert!(matches!(find_site_minimum(&psi, &stack, (10, 0)), Err(Error::SiteOutOfRange(10, 0))));
    }
}
