//! Geometric multigrid for the 7-point Laplacian with embedded Dirichlet nodes.
//!
//! Vertex-centred coarsening: coarse node `I` sits on fine node `2I`. A coarse
//! node whose fine counterpart lies past the end of an axis (odd interval
//! counts) is treated as fixed. Free nodes on a grid face use a mirror
//! neighbour, i.e. a zero-flux condition.

pub(crate) struct Level {
    pub dims: [usize; 3],
    pub h2inv: [f64; 3],
    pub fixed: Vec<bool>,
    pub u: Vec<f64>,
    /// Right-hand side; empty means zero.
    pub f: Vec<f64>,
    pub r: Vec<f64>,
    pub free_faces: bool,
}

impl Level {
    pub fn new(dims: [usize; 3], spacing: [f64; 3], fixed: Vec<bool>, u: Vec<f64>, with_rhs: bool) -> Self {
        let n = dims[0] * dims[1] * dims[2];
        let free_faces = has_free_face(dims, &fixed);
        Self {
            dims,
            h2inv: [
                1.0 / (spacing[0] * spacing[0]),
                1.0 / (spacing[1] * spacing[1]),
                1.0 / (spacing[2] * spacing[2]),
            ],
            fixed,
            u,
            f: if with_rhs { vec![0.0; n] } else { Vec::new() },
            r: vec![0.0; n],
            free_faces,
        }
    }

    fn diag(&self) -> f64 {
        2.0 * (self.h2inv[0] + self.h2inv[1] + self.h2inv[2])
    }

    #[inline]
    fn rhs(&self, n: usize) -> f64 {
        if self.f.is_empty() {
            0.0
        } else {
            self.f[n]
        }
    }

    /// Sum of h^-2 weighted neighbours at a face node, mirroring missing ones.
    #[inline]
    fn neighbour_sum_generic(&self, u: &[f64], i: usize, j: usize, k: usize) -> f64 {
        let [nx, ny, nz] = self.dims;
        let idx = |i: usize, j: usize, k: usize| i + nx * (j + ny * k);
        let mirror = |a: usize, n: usize, up: bool| -> usize {
            if n == 1 {
                return a;
            }
            if up {
                if a + 1 < n {
                    a + 1
                } else {
                    a - 1
                }
            } else if a > 0 {
                a - 1
            } else {
                a + 1
            }
        };
        self.h2inv[0] * (u[idx(mirror(i, nx, true), j, k)] + u[idx(mirror(i, nx, false), j, k)])
            + self.h2inv[1] * (u[idx(i, mirror(j, ny, true), k)] + u[idx(i, mirror(j, ny, false), k)])
            + self.h2inv[2] * (u[idx(i, j, mirror(k, nz, true))] + u[idx(i, j, mirror(k, nz, false))])
    }

    /// One Gauss-Seidel pass over nodes with `(i + j + k) % 2 == color`.
    pub fn smooth_color(&mut self, color: usize, omega: f64) {
        let [nx, ny, nz] = self.dims;
        let nxy = nx * ny;
        let [hx, hy, hz] = self.h2inv;
        let inv_diag = 1.0 / self.diag();
        let has_rhs = !self.f.is_empty();
        if nx >= 3 && ny >= 3 && nz >= 3 {
            for k in 1..nz - 1 {
                for j in 1..ny - 1 {
                    let start = 1 + ((1 + j + k + color) % 2);
                    let row = nx * (j + ny * k);
                    let mut i = start;
                    while i < nx - 1 {
                        let n = row + i;
                        if !self.fixed[n] {
                            let u = &self.u;
                            let s = hx * (u[n - 1] + u[n + 1])
                                + hy * (u[n - nx] + u[n + nx])
                                + hz * (u[n - nxy] + u[n + nxy]);
                            let f = if has_rhs { self.f[n] } else { 0.0 };
                            let gs = (s - f) * inv_diag;
                            self.u[n] += omega * (gs - self.u[n]);
                        }
                        i += 2;
                    }
                }
            }
        }
        if self.free_faces || nx < 3 || ny < 3 || nz < 3 {
            self.for_each_face_node(|lvl, i, j, k| {
                if (i + j + k) % 2 != color {
                    return;
                }
                let n = i + nx * (j + ny * k);
                if lvl.fixed[n] {
                    return;
                }
                let gs = (lvl.neighbour_sum_generic(&lvl.u, i, j, k) - lvl.rhs(n)) * inv_diag;
                lvl.u[n] += omega * (gs - lvl.u[n]);
            });
        }
    }

    fn for_each_face_node(&mut self, mut f: impl FnMut(&mut Self, usize, usize, usize)) {
        let [nx, ny, nz] = self.dims;
        for k in 0..nz {
            for j in 0..ny {
                let interior_row = k > 0 && k + 1 < nz && j > 0 && j + 1 < ny;
                if interior_row {
                    f(self, 0, j, k);
                    if nx > 1 {
                        f(self, nx - 1, j, k);
                    }
                } else {
                    for i in 0..nx {
                        f(self, i, j, k);
                    }
                }
            }
        }
    }

    /// Compute `r = f - L u` at free nodes; returns max |r|.
    pub fn residual(&mut self) -> f64 {
        let [nx, ny, nz] = self.dims;
        let nxy = nx * ny;
        let [hx, hy, hz] = self.h2inv;
        let diag = self.diag();
        let has_rhs = !self.f.is_empty();
        let mut max = 0.0f64;
        if nx >= 3 && ny >= 3 && nz >= 3 {
            for k in 1..nz - 1 {
                for j in 1..ny - 1 {
                    let row = nx * (j + ny * k);
                    for i in 1..nx - 1 {
                        let n = row + i;
                        let res = if self.fixed[n] {
                            0.0
                        } else {
                            let u = &self.u;
                            let lu = hx * (u[n - 1] + u[n + 1])
                                + hy * (u[n - nx] + u[n + nx])
                                + hz * (u[n - nxy] + u[n + nxy])
                                - diag * u[n];
                            let f = if has_rhs { self.f[n] } else { 0.0 };
                            f - lu
                        };
                        self.r[n] = res;
                        max = max.max(res.abs());
                    }
                }
            }
        }
        self.for_each_face_node(|lvl, i, j, k| {
            let n = i + nx * (j + ny * k);
            let res = if lvl.fixed[n] {
                0.0
            } else {
                lvl.rhs(n) - (lvl.neighbour_sum_generic(&lvl.u, i, j, k) - diag * lvl.u[n])
            };
            lvl.r[n] = res;
            max = max.max(res.abs());
        });
        max
    }
}

impl Level {
    /// `out = L v` on free nodes and 0 on fixed nodes; returns `v . out`.
    pub fn apply(&self, v: &[f64], out: &mut [f64]) -> f64 {
        let [nx, ny, nz] = self.dims;
        let nxy = nx * ny;
        let [hx, hy, hz] = self.h2inv;
        let diag = self.diag();
        let mut dot = 0.0;
        for k in 0..nz {
            for j in 0..ny {
                let row = nx * (j + ny * k);
                let interior_row = k > 0 && k + 1 < nz && j > 0 && j + 1 < ny;
                for i in 0..nx {
                    let n = row + i;
                    let val = if self.fixed[n] {
                        0.0
                    } else if interior_row && i > 0 && i + 1 < nx {
                        hx * (v[n - 1] + v[n + 1]) + hy * (v[n - nx] + v[n + nx]) + hz * (v[n - nxy] + v[n + nxy])
                            - diag * v[n]
                    } else {
                        self.neighbour_sum_generic(v, i, j, k) - diag * v[n]
                    };
                    out[n] = val;
                    dot += v[n] * val;
                }
            }
        }
        dot
    }
}

fn has_free_face(dims: [usize; 3], fixed: &[bool]) -> bool {
    let [nx, ny, nz] = dims;
    for k in 0..nz {
        for j in 0..ny {
            for i in 0..nx {
                let face = i == 0 || j == 0 || k == 0 || i + 1 == nx || j + 1 == ny || k + 1 == nz;
                if face && !fixed[i + nx * (j + ny * k)] {
                    return true;
                }
            }
        }
    }
    false
}

pub(crate) fn coarse_dims(dims: [usize; 3]) -> [usize; 3] {
    [dims[0] / 2 + 1, dims[1] / 2 + 1, dims[2] / 2 + 1]
}

/// Coarse fixed mask: a coarse node is fixed when any fine node within one
/// fine spacing of it is fixed, or when it has no fine counterpart.
pub(crate) fn coarse_fixed(fine_dims: [usize; 3], fine_fixed: &[bool]) -> Vec<bool> {
    let [nx, ny, nz] = fine_dims;
    let c = coarse_dims(fine_dims);
    let mut out = vec![false; c[0] * c[1] * c[2]];
    for kc in 0..c[2] {
        for jc in 0..c[1] {
            for ic in 0..c[0] {
                let (i, j, k) = (2 * ic, 2 * jc, 2 * kc);
                let n = ic + c[0] * (jc + c[1] * kc);
                if i >= nx || j >= ny || k >= nz {
                    out[n] = true;
                    continue;
                }
                let mut fixed = false;
                'scan: for dk in -1i64..=1 {
                    for dj in -1i64..=1 {
                        for di in -1i64..=1 {
                            let (a, b, cc) = (i as i64 + di, j as i64 + dj, k as i64 + dk);
                            if a < 0 || b < 0 || cc < 0 || a >= nx as i64 || b >= ny as i64 || cc >= nz as i64 {
                                continue;
                            }
                            if fine_fixed[a as usize + nx * (b as usize + ny * cc as usize)] {
                                fixed = true;
                                break 'scan;
                            }
                        }
                    }
                }
                out[n] = fixed;
            }
        }
    }
    out
}

#[inline]
fn reflect(a: i64, n: usize) -> Option<usize> {
    if a < 0 {
        if n > 1 {
            Some((-a) as usize)
        } else {
            None
        }
    } else if a as usize >= n {
        None
    } else {
        Some(a as usize)
    }
}

/// Full-weighting restriction of `fine.r` into `coarse.f`; zeroes `coarse.u`.
pub(crate) fn restrict(fine: &Level, coarse: &mut Level) {
    let [nx, ny, nz] = fine.dims;
    let c = coarse.dims;
    const W: [f64; 3] = [0.25, 0.5, 0.25];
    for kc in 0..c[2] {
        for jc in 0..c[1] {
            for ic in 0..c[0] {
                let n = ic + c[0] * (jc + c[1] * kc);
                coarse.u[n] = 0.0;
                if coarse.fixed[n] {
                    coarse.f[n] = 0.0;
                    continue;
                }
                let mut acc = 0.0;
                for (dk, wk) in W.iter().enumerate() {
                    let Some(k) = reflect(2 * kc as i64 + dk as i64 - 1, nz) else { continue };
                    for (dj, wj) in W.iter().enumerate() {
                        let Some(j) = reflect(2 * jc as i64 + dj as i64 - 1, ny) else { continue };
                        let row = nx * (j + ny * k);
                        for (di, wi) in W.iter().enumerate() {
                            let Some(i) = reflect(2 * ic as i64 + di as i64 - 1, nx) else { continue };
                            acc += wi * wj * wk * fine.r[row + i];
                        }
                    }
                }
                coarse.f[n] = acc;
            }
        }
    }
}

/// Trilinear prolongation of `coarse.u`, added to free nodes of `fine.u`.
pub(crate) fn prolong_add(coarse: &Level, fine: &mut Level) {
    let [nx, ny, nz] = fine.dims;
    let c = coarse.dims;
    let split = |n: usize| -> ([usize; 2], [f64; 2]) {
        if n % 2 == 0 {
            ([n / 2, n / 2], [1.0, 0.0])
        } else {
            ([(n - 1) / 2, (n + 1) / 2], [0.5, 0.5])
        }
    };
    for k in 0..nz {
        let (ks, kw) = split(k);
        for j in 0..ny {
            let (js, jw) = split(j);
            for i in 0..nx {
                let n = i + nx * (j + ny * k);
                if fine.fixed[n] {
                    continue;
                }
                let (is, iw) = split(i);
                let mut acc = 0.0;
                for a in 0..2 {
                    if kw[a] == 0.0 {
                        continue;
                    }
                    for b in 0..2 {
                        if jw[b] == 0.0 {
                            continue;
                        }
                        for e in 0..2 {
                            if iw[e] == 0.0 {
                                continue;
                            }
                            let cn = is[e] + c[0] * (js[b] + c[1] * ks[a]);
                            acc += iw[e] * jw[b] * kw[a] * coarse.u[cn];
                        }
                    }
                }
                fine.u[n] += acc;
            }
        }
    }
}

pub(crate) struct Hierarchy {
    pub levels: Vec<Level>,
    pub pre_smooth: usize,
    pub post_smooth: usize,
    pub coarsest_sweeps: usize,
}

impl Hierarchy {
    /// Build coarse levels below `fine` until an axis would drop under 5 nodes.
    pub fn new(fine: Level, spacing: [f64; 3], max_levels: usize) -> Self {
        let mut levels = vec![fine];
        let mut h = spacing;
        while levels.len() < max_levels {
            let last = levels.last().unwrap();
            if last.dims.iter().any(|&n| n < 9) {
                break;
            }
            let cd = coarse_dims(last.dims);
            let fixed = coarse_fixed(last.dims, &last.fixed);
            if fixed.iter().all(|&f| f) {
                break;
            }
            h = [2.0 * h[0], 2.0 * h[1], 2.0 * h[2]];
            let n = cd[0] * cd[1] * cd[2];
            levels.push(Level::new(cd, h, fixed, vec![0.0; n], true));
        }
        Self { levels, pre_smooth: 2, post_smooth: 2, coarsest_sweeps: 60 }
    }

    /// Approximate `L^-1 r` with one V-cycle from a zero guess.
    pub fn precondition(&mut self, r: &[f64]) -> &[f64] {
        let fine = &mut self.levels[0];
        fine.f.copy_from_slice(r);
        fine.u.iter_mut().for_each(|u| *u = 0.0);
        self.vcycle(0);
        &self.levels[0].u
    }

    pub fn depth(&self) -> usize {
        self.levels.len()
    }

    pub fn vcycle(&mut self, l: usize) {
        let last = self.levels.len() - 1;
        if l == last {
            let lvl = &mut self.levels[l];
            for _ in 0..self.coarsest_sweeps {
                lvl.smooth_color(0, 1.0);
                lvl.smooth_color(1, 1.0);
            }
            return;
        }
        for _ in 0..self.pre_smooth {
            self.levels[l].smooth_color(0, 1.0);
            self.levels[l].smooth_color(1, 1.0);
        }
        self.levels[l].residual();
        {
            let (a, b) = self.levels.split_at_mut(l + 1);
            restrict(&a[l], &mut b[0]);
        }
        self.vcycle(l + 1);
        {
            let (a, b) = self.levels.split_at_mut(l + 1);
            prolong_add(&b[0], &mut a[l]);
        }
        for _ in 0..self.post_smooth {
            self.levels[l].smooth_color(1, 1.0);
            self.levels[l].smooth_color(0, 1.0);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn coarse_dims_cover_fine_grid() {
        assert_eq!(coarse_dims([161, 42, 9]), [81, 22, 5]);
    }

    #[test]
    fn prolongation_of_constant_is_constant() {
        let fd = [9, 7, 5];
        let cd = coarse_dims(fd);
        let nf = fd.iter().product();
        let nc = cd.iter().product();
        let coarse = Level::new(cd, [2.0; 3], vec![false; nc], vec![1.0; nc], true);
        let mut fine = Level::new(fd, [1.0; 3], vec![false; nf], vec![0.0; nf], true);
        prolong_add(&coarse, &mut fine);
        assert!(fine.u.iter().all(|&v| (v - 1.0).abs() < 1e-15));
    }

    #[test]
    fn dilated_mask_marks_neighbourhood() {
        let fd = [9, 9, 9];
        let mut fixed = vec![false; 729];
        fixed[3 + 9 * (4 + 9 * 4)] = true; // odd i next to coarse node (2,2,2) and (1,2,2)
        let c = coarse_fixed(fd, &fixed);
        let cd = coarse_dims(fd);
        assert!(c[1 + cd[0] * (2 + cd[1] * 2)]);
        assert!(c[2 + cd[0] * (2 + cd[1] * 2)]);
        assert!(!c[3 + cd[0] * (2 + cd[1] * 2)]);
    }
}
