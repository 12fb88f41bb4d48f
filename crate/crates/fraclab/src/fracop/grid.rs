use crate::error::{Error, Result};

/// A sampled 1D function with constant extensions beyond its range.
#[derive(Debug, Clone, PartialEq)]
pub struct Profile1d {
    pub origin: f64,
    pub spacing: f64,
    pub values: Vec<f64>,
    pub left: f64,
    pub right: f64,
}

impl Profile1d {
    pub fn constant(c: f64) -> Self {
        Profile1d {
            origin: 0.0,
            spacing: 1.0,
            values: vec![c],
            left: c,
            right: c,
        }
    }

    pub fn end(&self) -> f64 {
        self.origin + self.spacing * (self.values.len() as f64 - 1.0)
    }

    /// Linear interpolation inside the sampled range, `left`/`right` beyond.
    pub fn eval(&self, t: f64) -> f64 {
        let n = self.values.len();
        if n == 1 {
            return if t < self.origin {
                self.left
            } else if t > self.origin {
                self.right
            } else {
                self.values[0]
            };
        }
        let q = (t - self.origin) / self.spacing;
        if q < 0.0 {
            return self.left;
        }
        if q > (n - 1) as f64 {
            return self.right;
        }
        let i = (q.floor() as usize).min(n - 2);
        let w = q - i as f64;
        self.values[i] * (1.0 - w) + self.values[i + 1] * w
    }

    pub fn is_constant(&self) -> bool {
        self.values.iter().all(|&v| v == self.left) && self.left == self.right
    }
}

/// Far-field model of a grid function outside its sampled box.
#[derive(Debug, Clone, PartialEq)]
pub enum TailModel {
    /// u ≡ c outside the box.
    Constant(f64),
    /// u = -1 below and +1 above the box midplane normal to `axis`.
    ConstantPm1 { axis: usize },
    /// The sampled box is one period in every axis.
    Periodic,
    /// Two-dimensional blend between profiles in the transverse variable:
    /// u = under + (over - under)(1 + transition(y_axis))/2.
    Blend {
        axis: usize,
        under: Profile1d,
        over: Profile1d,
        transition: Profile1d,
    },
    /// u = profile(direction·y - offset).
    Ridge {
        direction: Vec<f64>,
        offset: f64,
        profile: Profile1d,
    },
}

impl TailModel {
    pub fn is_periodic(&self) -> bool {
        matches!(self, TailModel::Periodic)
    }

    /// Tails whose value along rays is piecewise constant.
    pub fn is_piecewise_constant(&self) -> bool {
        matches!(self, TailModel::Constant(_) | TailModel::ConstantPm1 { .. })
    }

    pub fn monotone_axis(&self) -> Option<usize> {
        match self {
            TailModel::ConstantPm1 { axis } | TailModel::Blend { axis, .. } => Some(*axis),
            _ => None,
        }
    }
}

/// Real-valued samples on a uniform grid (row-major, last axis fastest).
///
/// Node k along axis d sits at origin[d] + k·spacing. For non-periodic
/// tails the sampled box is the union of node cells, so it extends half a
/// cell beyond the outer nodes. For periodic tails the box is one period
/// [origin, origin + N·spacing).
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    pub dim: usize,
    pub shape: Vec<usize>,
    pub spacing: f64,
    pub origin: Vec<f64>,
    pub values: Vec<f64>,
    pub tail: TailModel,
}

impl GridFunction {
    pub fn new(
        shape: Vec<usize>,
        spacing: f64,
        origin: Vec<f64>,
        values: Vec<f64>,
        tail: TailModel,
    ) -> Result<Self> {
        let dim = shape.len();
        if !(1..=3).contains(&dim) {
            return Err(Error::Domain(format!("dimension {dim} not in 1..=3")));
        }
        if origin.len() != dim {
            return Err(Error::Domain("origin length differs from dimension".into()));
        }
        if !(spacing > 0.0 && spacing.is_finite()) {
            return Err(Error::Domain(format!("spacing {spacing} must be positive")));
        }
        let len: usize = shape.iter().product();
        if len != values.len() || len == 0 {
            return Err(Error::Domain(format!(
                "{} values for shape {shape:?}",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("non-finite grid value".into()));
        }
        if let Some(axis) = tail.monotone_axis() {
            if axis >= dim {
                return Err(Error::Domain(format!("tail axis {axis} out of range")));
            }
        }
        if let TailModel::Blend { .. } = tail {
            if dim != 2 {
                return Err(Error::Domain("blend tails are two-dimensional".into()));
            }
        }
        if let TailModel::Ridge { direction, .. } = &tail {
            if direction.len() != dim {
                return Err(Error::Domain("ridge direction has wrong length".into()));
            }
        }
        Ok(GridFunction {
            dim,
            shape,
            spacing,
            origin,
            values,
            tail,
        })
    }

    /// Sample `f` at the nodes of a centered grid with `n` points per axis
    /// over [-half, half]^dim.
    pub fn centered<F: Fn(&[f64]) -> f64>(
        dim: usize,
        n: usize,
        half: f64,
        tail: TailModel,
        f: F,
    ) -> Result<Self> {
        let h = 2.0 * half / (n as f64 - 1.0);
        Self::from_fn(vec![n; dim], h, vec![-half; dim], tail, f)
    }

    pub fn from_fn<F: Fn(&[f64]) -> f64>(
        shape: Vec<usize>,
        spacing: f64,
        origin: Vec<f64>,
        tail: TailModel,
        f: F,
    ) -> Result<Self> {
        let len: usize = shape.iter().product();
        let dim = shape.len();
        let mut values = Vec::with_capacity(len);
        let mut x = vec![0.0; dim];
        let mut idx = vec![0usize; dim];
        for flat in 0..len {
            unflatten(&shape, flat, &mut idx);
            for d in 0..dim {
                x[d] = origin[d] + spacing * idx[d] as f64;
            }
            values.push(f(&x));
        }
        Self::new(shape, spacing, origin, values, tail)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn with_values(&self, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), self.values.len());
        GridFunction {
            values,
            ..self.clone()
        }
    }

    pub fn with_tail(&self, tail: TailModel) -> Self {
        GridFunction {
            tail,
            ..self.clone()
        }
    }

    pub fn strides(&self) -> Vec<usize> {
        strides(&self.shape)
    }

    pub fn flat(&self, idx: &[usize]) -> usize {
        let mut f = 0;
        for d in 0..self.dim {
            f = f * self.shape[d] + idx[d];
        }
        f
    }

    pub fn index(&self, flat: usize) -> Vec<usize> {
        let mut idx = vec![0; self.dim];
        unflatten(&self.shape, flat, &mut idx);
        idx
    }

    pub fn node(&self, flat: usize) -> Vec<f64> {
        let idx = self.index(flat);
        (0..self.dim)
            .map(|d| self.origin[d] + self.spacing * idx[d] as f64)
            .collect()
    }

    /// Lower and upper corners of the sampled box.
    pub fn box_bounds(&self) -> (Vec<f64>, Vec<f64>) {
        let h = self.spacing;
        if self.tail.is_periodic() {
            let lo = self.origin.clone();
            let hi = (0..self.dim)
                .map(|d| self.origin[d] + h * self.shape[d] as f64)
                .collect();
            (lo, hi)
        } else {
            let lo = self.origin.iter().map(|o| o - 0.5 * h).collect();
            let hi = (0..self.dim)
                .map(|d| self.origin[d] + h * (self.shape[d] as f64 - 0.5))
                .collect();
            (lo, hi)
        }
    }

    pub fn box_mid(&self, axis: usize) -> f64 {
        self.origin[axis] + 0.5 * self.spacing * (self.shape[axis] as f64 - 1.0)
    }

    /// Value of the tail model at a point outside the box.
    pub fn tail_value(&self, y: &[f64]) -> f64 {
        match &self.tail {
            TailModel::Constant(c) => *c,
            TailModel::ConstantPm1 { axis } => {
                if y[*axis] < self.box_mid(*axis) {
                    -1.0
                } else {
                    1.0
                }
            }
            TailModel::Periodic => self.sample(y),
            TailModel::Blend {
                axis,
                under,
                over,
                transition,
            } => {
                let other = 1 - axis;
                let lo = under.eval(y[other]);
                let hi = over.eval(y[other]);
                lo + (hi - lo) * 0.5 * (1.0 + transition.eval(y[*axis]))
            }
            TailModel::Ridge {
                direction,
                offset,
                profile,
            } => {
                let t: f64 = direction.iter().zip(y).map(|(a, b)| a * b).sum();
                profile.eval(t - offset)
            }
        }
    }

    /// Evaluate anywhere: multilinear interpolation on the node hull,
    /// nearest-node clamping in the half-cell margin, tail model outside.
    pub fn sample(&self, y: &[f64]) -> f64 {
        let h = self.spacing;
        let periodic = self.tail.is_periodic();
        if !periodic {
            let (lo, hi) = self.box_bounds();
            if (0..self.dim).any(|d| y[d] < lo[d] || y[d] > hi[d]) {
                return self.tail_value(y);
            }
        }
        let mut base = vec![0usize; self.dim];
        let mut frac = vec![0.0; self.dim];
        let mut next = vec![0usize; self.dim];
        for d in 0..self.dim {
            let n = self.shape[d];
            let q = (y[d] - self.origin[d]) / h;
            if periodic {
                let fl = q.floor();
                let i = (fl as i64).rem_euclid(n as i64) as usize;
                base[d] = i;
                next[d] = (i + 1) % n;
                frac[d] = q - fl;
            } else {
                let qc = q.clamp(0.0, (n - 1) as f64);
                let i = (qc.floor() as usize).min(n.saturating_sub(2));
                base[d] = i;
                next[d] = (i + 1).min(n - 1);
                frac[d] = if n == 1 { 0.0 } else { qc - i as f64 };
            }
        }
        let mut acc = 0.0;
        let mut idx = vec![0usize; self.dim];
        for corner in 0..(1usize << self.dim) {
            let mut w = 1.0;
            for d in 0..self.dim {
                if corner >> d & 1 == 1 {
                    idx[d] = next[d];
                    w *= frac[d];
                } else {
                    idx[d] = base[d];
                    w *= 1.0 - frac[d];
                }
            }
            if w != 0.0 {
                acc += w * self.values[self.flat(&idx)];
            }
        }
        acc
    }

    /// Value at an integer index that may lie outside the grid: wrapped for
    /// periodic tails, taken from the tail model otherwise.
    pub fn value_at_offset_index(&self, idx: &[i64]) -> f64 {
        let mut inside = true;
        let mut u = vec![0usize; self.dim];
        for d in 0..self.dim {
            let n = self.shape[d] as i64;
            if self.tail.is_periodic() {
                u[d] = idx[d].rem_euclid(n) as usize;
            } else if idx[d] < 0 || idx[d] >= n {
                inside = false;
            } else {
                u[d] = idx[d] as usize;
            }
        }
        if inside {
            self.values[self.flat(&u)]
        } else {
            let y: Vec<f64> = (0..self.dim)
                .map(|d| self.origin[d] + self.spacing * idx[d] as f64)
                .collect();
            self.tail_value(&y)
        }
    }

    /// Largest |u - tail| over nodes on the two faces normal to the
    /// monotone axis of a constant_pm1 tail. Recorded, never enforced here.
    pub fn tail_mismatch(&self) -> Option<f64> {
        let TailModel::ConstantPm1 { axis } = self.tail else {
            return None;
        };
        let n = self.shape[axis];
        let mut worst: f64 = 0.0;
        for flat in 0..self.len() {
            let idx = self.index(flat);
            if idx[axis] == 0 {
                worst = worst.max((self.values[flat] + 1.0).abs());
            } else if idx[axis] == n - 1 {
                worst = worst.max((self.values[flat] - 1.0).abs());
            }
        }
        Some(worst)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }
}

pub fn strides(shape: &[usize]) -> Vec<usize> {
    let mut st = vec![1; shape.len()];
    for d in (0..shape.len().saturating_sub(1)).rev() {
        st[d] = st[d + 1] * shape[d + 1];
    }
    st
}

pub fn unflatten(shape: &[usize], mut flat: usize, idx: &mut [usize]) {
    for d in (0..shape.len()).rev() {
        idx[d] = flat % shape[d];
        flat /= shape[d];
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn profile_interpolates_and_extends() {
        let p = Profile1d {
            origin: 0.0,
            spacing: 0.5,
            values: vec![0.0, 1.0, 4.0],
            left: -2.0,
            right: 9.0,
        };
        assert_eq!(p.eval(0.25), 0.5);
        assert_eq!(p.eval(1.0), 4.0);
        assert_eq!(p.eval(-0.1), -2.0);
        assert_eq!(p.eval(1.1), 9.0);
    }

    #[test]
    fn sample_reproduces_nodes_and_tail() {
        let g = GridFunction::centered(2, 5, 1.0, TailModel::ConstantPm1 { axis: 1 }, |x| {
            0.5 * x[1] + 0.1 * x[0]
        })
        .unwrap();
        for flat in 0..g.len() {
            let x = g.node(flat);
            assert!((g.sample(&x) - g.values[flat]).abs() < 1e-14);
        }
        assert_eq!(g.sample(&[0.0, 3.0]), 1.0);
        assert_eq!(g.sample(&[0.0, -3.0]), -1.0);
        // bilinear inside a cell
        let v = g.sample(&[0.25, 0.25]);
        assert!((v - (0.125 + 0.025)).abs() < 1e-14);
    }

    #[test]
    fn periodic_sample_wraps() {
        let n = 8;
        let h = 1.0 / n as f64;
        let g = GridFunction::from_fn(vec![n], h, vec![0.0], TailModel::Periodic, |x| {
            (2.0 * std::f64::consts::PI * x[0]).cos()
        })
        .unwrap();
        assert!((g.sample(&[1.0]) - 1.0).abs() < 1e-14);
        assert!((g.sample(&[-0.25]) - g.sample(&[0.75])).abs() < 1e-14);
    }

    #[test]
    fn rejects_bad_shapes() {
        assert!(GridFunction::new(vec![3], 0.1, vec![0.0], vec![0.0; 2], TailModel::Constant(0.0)).is_err());
        assert!(GridFunction::new(vec![2], -1.0, vec![0.0], vec![0.0; 2], TailModel::Constant(0.0)).is_err());
        assert!(GridFunction::new(vec![2], 1.0, vec![0.0], vec![f64::NAN, 0.0], TailModel::Constant(0.0)).is_err());
    }
}
