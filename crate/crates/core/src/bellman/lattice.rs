//! Uniform Cartesian node layout shared by the solvers, the policy
//! interpolator and the `.vgrid` format.
//!
//! Nodes are numbered row-major with the last axis fastest. For qubit grids
//! nodes outside the unit ball are masked: they are never updated and carry the
//! value of their nearest active node, so interpolation near the sphere never
//! reads undefined data.

use super::GridSpec;

/// Nodes with `|p| > 1 + BALL_MASK_SLACK` are masked.
const BALL_MASK_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct AxisStencil {
    pub plus: Option<usize>,
    pub minus: Option<usize>,
    pub plus2: Option<usize>,
    pub minus2: Option<usize>,
}

/// Neighbour indices of one active node. Only active neighbours are recorded.
#[derive(Debug, Clone)]
pub(crate) struct Stencil {
    pub center: usize,
    pub axes: [AxisStencil; 3],
    /// Diagonal neighbours for axis pairs (0,1), (0,2), (1,2), in the order
    /// `(+,+)`, `(+,-)`, `(-,+)`, `(-,-)`.
    pub diagonals: [[Option<usize>; 4]; 3],
}

pub(crate) const AXIS_PAIRS: [(usize, usize); 3] = [(0, 1), (0, 2), (1, 2)];

#[derive(Debug, Clone)]
pub(crate) struct Lattice {
    pub dim: usize,
    pub lower: [f64; 3],
    pub upper: [f64; 3],
    pub spacing: [f64; 3],
    pub nodes: [usize; 3],
    strides: [usize; 3],
    pub len: usize,
    pub active: Vec<bool>,
    /// For every node, the active node whose value it carries (itself if active).
    pub fill: Vec<usize>,
    pub stencils: Vec<Stencil>,
}

impl Lattice {
    /// Builds the layout; the spec must already be validated.
    pub fn new(spec: &GridSpec) -> Self {
        let dim = spec.nodes.len();
        let mut lower = [0.0; 3];
        let mut upper = [0.0; 3];
        let mut spacing = [1.0; 3];
        let mut nodes = [1usize; 3];
        for k in 0..dim {
            lower[k] = spec.lower[k];
            upper[k] = spec.upper[k];
            nodes[k] = spec.nodes[k];
            spacing[k] = (upper[k] - lower[k]) / (nodes[k] - 1) as f64;
        }
        let mut strides = [0usize; 3];
        let mut s = 1;
        for k in (0..dim).rev() {
            strides[k] = s;
            s *= nodes[k];
        }
        let len = s;
        let mut lattice = Lattice {
            dim,
            lower,
            upper,
            spacing,
            nodes,
            strides,
            len,
            active: vec![true; len],
            fill: (0..len).collect(),
            stencils: Vec::new(),
        };
        if spec.model.is_qubit() {
            for i in 0..len {
                let c = lattice.coords(i);
                let r2 = c[0] * c[0] + c[1] * c[1] + c[2] * c[2];
                lattice.active[i] = r2.sqrt() <= 1.0 + BALL_MASK_SLACK;
            }
            lattice.build_fill();
        }
        lattice.stencils = (0..len)
            .filter(|&i| lattice.active[i])
            .map(|i| lattice.stencil(i))
            .collect();
        lattice
    }

    pub fn index_of(&self, idx: &[usize; 3]) -> usize {
        (0..self.dim).map(|k| idx[k] * self.strides[k]).sum()
    }

    pub fn multi_index(&self, mut i: usize) -> [usize; 3] {
        let mut out = [0usize; 3];
        for k in 0..self.dim {
            out[k] = i / self.strides[k];
            i %= self.strides[k];
        }
        out
    }

    pub fn coords(&self, i: usize) -> [f64; 3] {
        let idx = self.multi_index(i);
        let mut c = [0.0; 3];
        for k in 0..self.dim {
            c[k] = self.lower[k] + idx[k] as f64 * self.spacing[k];
        }
        c
    }

    pub fn min_spacing(&self) -> f64 {
        self.spacing[..self.dim].iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Neighbour of `i` shifted by `offset` along each axis, if it exists and
    /// is active.
    fn shifted(&self, i: usize, offset: [isize; 3]) -> Option<usize> {
        let idx = self.multi_index(i);
        let mut out = [0usize; 3];
        for k in 0..self.dim {
            let v = idx[k] as isize + offset[k];
            if v < 0 || v >= self.nodes[k] as isize {
                return None;
            }
            out[k] = v as usize;
        }
        let j = self.index_of(&out);
        self.active[j].then_some(j)
    }

    fn stencil(&self, i: usize) -> Stencil {
        let mut axes = [AxisStencil::default(); 3];
        for (k, axis) in axes.iter_mut().enumerate().take(self.dim) {
            let unit = |s: isize| {
                let mut o = [0isize; 3];
                o[k] = s;
                o
            };
            axis.plus = self.shifted(i, unit(1));
            axis.minus = self.shifted(i, unit(-1));
            axis.plus2 = axis.plus.and(self.shifted(i, unit(2)));
            axis.minus2 = axis.minus.and(self.shifted(i, unit(-2)));
        }
        let mut diagonals = [[None; 4]; 3];
        if self.dim == 3 {
            for (slot, &(k, l)) in AXIS_PAIRS.iter().enumerate() {
                for (d, (sk, sl)) in [(1, 1), (1, -1), (-1, 1), (-1, -1)].into_iter().enumerate() {
                    let mut o = [0isize; 3];
                    o[k] = sk;
                    o[l] = sl;
                    diagonals[slot][d] = self.shifted(i, o);
                }
            }
        }
        Stencil {
            center: i,
            axes,
            diagonals,
        }
    }

    /// Assigns every masked node the nearest active node to its radial
    /// projection onto the unit sphere.
    fn build_fill(&mut self) {
        for i in 0..self.len {
            if self.active[i] {
                continue;
            }
            let c = self.coords(i);
            let r = (c[0] * c[0] + c[1] * c[1] + c[2] * c[2]).sqrt();
            let target = [c[0] / r, c[1] / r, c[2] / r];
            let mut radius = 1usize;
            loop {
                if let Some(j) = self.nearest_active(target, radius) {
                    self.fill[i] = j;
                    break;
                }
                radius += 1;
                assert!(radius < 64, "ball grid has no active nodes");
            }
        }
    }

    fn nearest_active(&self, target: [f64; 3], radius: usize) -> Option<usize> {
        let mut center = [0isize; 3];
        for k in 0..3 {
            center[k] = ((target[k] - self.lower[k]) / self.spacing[k]).round() as isize;
        }
        let r = radius as isize;
        let mut best: Option<(f64, usize)> = None;
        for dx in -r..=r {
            for dy in -r..=r {
                for dz in -r..=r {
                    let idx = [center[0] + dx, center[1] + dy, center[2] + dz];
                    if (0..3).any(|k| idx[k] < 0 || idx[k] >= self.nodes[k] as isize) {
                        continue;
                    }
                    let j = self.index_of(&[idx[0] as usize, idx[1] as usize, idx[2] as usize]);
                    if !self.active[j] {
                        continue;
                    }
                    let c = self.coords(j);
                    let d: f64 = (0..3).map(|k| (c[k] - target[k]).powi(2)).sum();
                    if best.is_none_or(|(bd, bj)| d < bd || (d == bd && j < bj)) {
                        best = Some((d, j));
                    }
                }
            }
        }
        best.map(|(_, j)| j)
    }

    /// Copies active values into masked nodes.
    pub fn fill_masked(&self, values: &mut [f64], width: usize) {
        for i in 0..self.len {
            let j = self.fill[i];
            if j != i {
                for c in 0..width {
                    values[i * width + c] = values[j * width + c];
                }
            }
        }
    }

    /// Multilinear interpolation of a node field with `width` components per
    /// node. The query point is clamped into the grid bounds.
    pub fn interpolate(&self, field: &[f64], width: usize, x: &[f64], out: &mut [f64]) {
        let mut base = [0usize; 3];
        let mut w = [0.0f64; 3];
        for k in 0..self.dim {
            let xc = x[k].clamp(self.lower[k], self.upper[k]);
            let mut s = (xc - self.lower[k]) / self.spacing[k];
            // Queries at nodes must return the node value exactly.
            if (s - s.round()).abs() < 1e-9 {
                s = s.round();
            }
            let cell = (s.floor() as usize).min(self.nodes[k] - 2);
            base[k] = cell;
            w[k] = (s - cell as f64).clamp(0.0, 1.0);
        }
        out[..width].iter_mut().for_each(|o| *o = 0.0);
        for corner in 0..(1usize << self.dim) {
            let mut weight = 1.0;
            let mut idx = base;
            for k in 0..self.dim {
                if corner >> k & 1 == 1 {
                    idx[k] += 1;
                    weight *= w[k];
                } else {
                    weight *= 1.0 - w[k];
                }
            }
            if weight == 0.0 {
                continue;
            }
            let node = self.index_of(&idx);
            for c in 0..width {
                out[c] += weight * field[node * width + c];
            }
        }
    }

    pub fn interpolate_scalar(&self, field: &[f64], x: &[f64]) -> f64 {
        let mut out = [0.0];
        self.interpolate(field, 1, x, &mut out);
        out[0]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bellman::GridSpec;
    use crate::ModelId;

    #[test]
    fn ball_mask_and_fill() {
        let spec = GridSpec::qubit(ModelId::DiffusiveQubit, 5, 0.01, 1);
        let lat = Lattice::new(&spec);
        assert_eq!(lat.len, 125);
        let corner = lat.index_of(&[0, 0, 0]);
        assert!(!lat.active[corner]);
        let filled = lat.fill[corner];
        assert!(lat.active[filled]);
        let c = lat.coords(filled);
        // (-1,-1,-1)/sqrt3 rounds to the node (-0.5, -0.5, -0.5)
        assert_eq!(c, [-0.5, -0.5, -0.5]);
        let north = lat.index_of(&[2, 2, 4]);
        assert!(lat.active[north]);
        assert_eq!(lat.coords(north), [0.0, 0.0, 1.0]);
        let st = lat.stencils.iter().find(|s| s.center == north).unwrap();
        assert!(st.axes[2].plus.is_none());
        assert!(st.axes[2].minus.is_some() && st.axes[2].minus2.is_some());
        assert!(st.axes[0].plus.is_none() && st.axes[0].minus.is_none());
    }

    #[test]
    fn interpolation_reproduces_linear_fields() {
        let spec = GridSpec::angle(11, 0.01, 1);
        let lat = Lattice::new(&spec);
        let field: Vec<f64> = (0..lat.len).map(|i| 2.0 * lat.coords(i)[0] - 1.0).collect();
        for x in [-3.0, -1.234, 0.0, 0.5, 3.1] {
            let v = lat.interpolate_scalar(&field, &[x]);
            assert!((v - (2.0 * x - 1.0)).abs() < 1e-12);
        }
        // clamped outside the bounds
        let v = lat.interpolate_scalar(&field, &[10.0]);
        assert!((v - (2.0 * std::f64::consts::PI - 1.0)).abs() < 1e-12);

        let spec = GridSpec::qubit(ModelId::DiffusiveQubit, 9, 0.01, 1);
        let lat = Lattice::new(&spec);
        let field: Vec<f64> = (0..lat.len)
            .map(|i| {
                let c = lat.coords(i);
                c[0] - 2.0 * c[1] + 0.5 * c[2]
            })
            .collect();
        let x = [0.13, -0.21, 0.3];
        let v = lat.interpolate_scalar(&field, &x);
        assert!((v - (0.13 + 0.42 + 0.15)).abs() < 1e-12);
    }
}
