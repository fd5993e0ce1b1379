use std::collections::VecDeque;

use super::minimum::local_quadratic;
use super::PseudoField;
use crate::error::{Error, Result};
use crate::grid::GridLayout;

/// Relative resolution of the level bisection before snapping to a node value.
const LEVEL_RESOLUTION: f64 = 1e-3;

/// Energy (eV) needed to leave the well at `minimum`: the lowest level at
/// which the sub-level set containing the minimum touches the grid boundary
/// or an electrode, minus the value at the minimum.
pub fn trap_depth(psi: &PseudoField, minimum: [f64; 3]) -> Result<f64> {
    let l = psi.field.layout;
    if !l.contains(minimum) {
        return Err(Error::InvalidParameter("minimum lies outside the field".into()));
    }
    let start = l.nearest(minimum);
    let s = l.index(start[0], start[1], start[2]);
    if psi.is_blocked(s) {
        return Err(Error::InvalidParameter("minimum lies inside an electrode".into()));
    }
    let v = &psi.field.values;
    let psi_min = value_at_minimum(psi, start, minimum).min(v[s]);

    let mut flood = Flood::new(psi);
    flood.start = s;
    let mut lo = v[s];
    if flood.escapes(lo, None) {
        return Err(Error::Unbounded);
    }
    let mut hi = (0..v.len())
        .filter(|&n| !psi.is_blocked(n))
        .fold(f64::NEG_INFINITY, |m, n| m.max(v[n]));
    if !flood.escapes(hi, None) {
        return Err(Error::InvalidParameter("no node of the field is an exit".into()));
    }
    while hi - lo > LEVEL_RESOLUTION * (hi - psi_min) {
        let mid = 0.5 * (lo + hi);
        if flood.escapes(mid, None) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    // The barrier is a node value in (lo, hi]; find it exactly.
    let mut reached = Vec::new();
    flood.escapes(hi, Some(&mut reached));
    let mut candidates: Vec<f64> = reached.into_iter().map(|n| v[n]).filter(|&x| x > lo && x <= hi).collect();
    candidates.sort_by(f64::total_cmp);
    candidates.dedup();
    let (mut a, mut b) = (0usize, candidates.len().saturating_sub(1));
    while a < b {
        let m = (a + b) / 2;
        if flood.escapes(candidates[m], None) {
            b = m;
        } else {
            a = m + 1;
        }
    }
    let barrier = candidates.get(a).copied().unwrap_or(hi);
    Ok((barrier - psi_min).max(0.0))
}

fn value_at_minimum(psi: &PseudoField, node: [usize; 3], p: [f64; 3]) -> f64 {
    let l = psi.field.layout;
    let f = l.fractional(p);
    let d = [f[0] - node[0] as f64, f[1] - node[1] as f64, f[2] - node[2] as f64];
    let n = l.index(node[0], node[1], node[2]);
    if d.iter().all(|x| x.abs() < 1e-9) {
        return psi.field.values[n];
    }
    match local_quadratic(psi, node) {
        Some((c, b, h)) => {
            let d = nalgebra::Vector3::new(d[0], d[1], d[2]);
            c + b.dot(&d) + 0.5 * d.dot(&(h * d))
        }
        None => psi.field.values[n],
    }
}

struct Flood<'a> {
    psi: &'a PseudoField,
    layout: GridLayout,
    start: usize,
    visited: Vec<bool>,
    touched: Vec<usize>,
    queue: VecDeque<usize>,
}

impl<'a> Flood<'a> {
    fn new(psi: &'a PseudoField) -> Self {
        Self {
            psi,
            layout: psi.field.layout,
            start: usize::MAX,
            visited: vec![false; psi.field.values.len()],
            touched: Vec::new(),
            queue: VecDeque::new(),
        }
    }

    fn is_exit(&self, n: usize, ijk: [usize; 3]) -> bool {
        if self.layout.on_face(ijk) {
            return true;
        }
        if self.psi.blocked.is_empty() {
            return false;
        }
        let [nx, ny, _] = self.layout.dims;
        [1, nx, nx * ny].iter().any(|&s| self.psi.blocked[n - s] || self.psi.blocked[n + s])
    }

    /// Whether the connected region `{psi <= level}` around the start node
    /// contains an exit. Optionally records every node reached.
    fn escapes(&mut self, level: f64, mut record: Option<&mut Vec<usize>>) -> bool {
        if self.start == usize::MAX {
            unreachable!("start node is set before flooding");
        }
        for &n in &self.touched {
            self.visited[n] = false;
        }
        self.touched.clear();
        self.queue.clear();
        let v = &self.psi.field.values;
        let s = self.start;
        if v[s] > level {
            return false;
        }
        self.visited[s] = true;
        self.touched.push(s);
        self.queue.push_back(s);
        let [nx, ny, nz] = self.layout.dims;
        let mut found = false;
        while let Some(n) = self.queue.pop_front() {
            if let Some(r) = record.as_deref_mut() {
                r.push(n);
            }
            let ijk = self.layout.ijk(n);
            if self.is_exit(n, ijk) {
                found = true;
                if record.is_none() {
                    break;
                }
                continue;
            }
            let nbrs = [
                (ijk[0] > 0).then(|| n - 1),
                (ijk[0] + 1 < nx).then(|| n + 1),
                (ijk[1] > 0).then(|| n - nx),
                (ijk[1] + 1 < ny).then(|| n + nx),
                (ijk[2] > 0).then(|| n - nx * ny),
                (ijk[2] + 1 < nz).then(|| n + nx * ny),
            ];
            for m in nbrs.into_iter().flatten() {
                if !self.visited[m] && !self.psi.is_blocked(m) && v[m] <= level {
                    self.visited[m] = true;
                    self.touched.push(m);
                    self.queue.push_back(m);
                }
            }
        }
        found
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::ScalarField3D;

    fn double_well() -> PseudoField {
        // x from -1.6 to 3.0 in steps of 0.1; node 16 sits at x = 0
        let l = GridLayout::new([47, 21, 21], [-1.6, -1.0, -1.0], [0.1, 0.1, 0.1]).unwrap();
        PseudoField::new(ScalarField3D::from_fn(l, |p| {
            0.5 * (p[0].abs() - 1.0).powi(2) + p[1] * p[1] + p[2] * p[2]
        }))
    }

    #[test]
    fn double_well_barrier_is_exact() {
        // wells at x = -1 and x = 1, barrier 0.5 at x = 0; from the right well
        // every other exit is higher (x = 3 face: 2, y/z faces: 1)
        let d = trap_depth(&double_well(), [1.0, 0.0, 0.0]).unwrap();
        assert!((d - 0.5).abs() < 1e-12, "{d}");
    }

    #[test]
    fn unbounded_when_start_touches_exit() {
        let l = GridLayout::cubic([5, 5, 5], [0.0; 3], 1.0).unwrap();
        let psi = PseudoField::new(ScalarField3D::from_fn(l, |p| p[2]));
        assert!(matches!(trap_depth(&psi, [2.0, 2.0, 0.0]), Err(Error::Unbounded)));
    }

    #[test]
    fn depth_scales_with_field() {
        let psi = double_well();
        let scaled = PseudoField::new(psi.field.scaled(4.0));
        let (a, b) = (trap_depth(&psi, [1.0, 0.0, 0.0]).unwrap(), trap_depth(&scaled, [1.0, 0.0, 0.0]).unwrap());
        assert!((b - 4.0 * a).abs() < 1e-12 * b.max(1.0));
    }
}
