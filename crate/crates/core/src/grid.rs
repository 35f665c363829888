//! Uniform tensor-product grids and second-order finite differencing.
//!
//! Two geometries are supported: a box chart with tangential axes spanning
//! [-1, 1] and the distinguished normal axis (always the last one) spanning
//! [0, 1], so that the plane x_n = 0 is the boundary carrying Neumann data;
//! and a radial segment [0, R] for rotationally symmetric fields, where the
//! origin is closed by evenness and the outer end by one-sided stencils or
//! Neumann data.
//!
//! All stencils are second order: centered differences inside, one-sided
//! three-point (first derivative) and four-point (second derivative)
//! closures at faces, and mixed derivatives composed from one-dimensional
//! passes. The Neumann ghost closure replaces the one-sided stencil on the
//! distinguished face by a centered one using a mirror value at x_n = -h
//! consistent with the imposed normal derivative.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::conformal::BoundaryData;
use crate::error::{Error, Result};

/// One-sided second-order closures need four points per axis; five keeps at
/// least one genuinely interior point on every line.
pub const MIN_POINTS_PER_AXIS: usize = 5;

/// Flat storage index of the (i, j) entry, i <= j, in the packed upper
/// triangle of a symmetric n x n array of fields.
pub fn hess_index(n: usize, i: usize, j: usize) -> usize {
    let (i, j) = if i <= j { (i, j) } else { (j, i) };
    i * (2 * n - i + 1) / 2 + (j - i)
}

/// Values attached to the nodes of a grid, in the grid's flat ordering.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    values: Vec<f64>,
}

impl Field {
    pub fn from_values(values: Vec<f64>) -> Self {
        Field { values }
    }

    pub fn constant(len: usize, value: f64) -> Self {
        Field { values: vec![value; len] }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, i: usize) -> f64 {
        self.values[i]
    }

    pub fn set(&mut self, i: usize, v: f64) {
        self.values[i] = v;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn sup_norm(&self) -> f64 {
        sup_norm(&self.values)
    }

    pub fn rms_norm(&self) -> f64 {
        rms_norm(&self.values)
    }
}

pub fn sup_norm(values: &[f64]) -> f64 {
    values.iter().fold(0.0, |m, v| m.max(v.abs()))
}

pub fn rms_norm(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    (values.iter().map(|v| v * v).sum::<f64>() / values.len() as f64).sqrt()
}

/// How a node sits relative to the boundary pieces: interior, on the
/// Neumann face x_n = 0 (excluding its rim), or on the framed remainder of
/// the boundary. Rim nodes shared between the Neumann face and a framed
/// face count as framed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PointClass {
    Interior,
    SigmaFace,
    Framed,
}

/// Grid-geometry description attached to exported data files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridHeader {
    pub kind: String,
    pub points: Vec<usize>,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub spacing: Vec<f64>,
}

/// Mirror values at x_n = -h over the Neumann face, one per face node,
/// consistent with the imposed normal derivative there. Used for centered
/// differencing of fields whose wall derivative is pinned by the data; the
/// closure is second order in the imposed first derivative and first order
/// in second derivatives, so it serves diagnostics, not the main stencils.
#[derive(Debug, Clone)]
pub struct GhostPlane {
    values: Vec<f64>,
}

impl GhostPlane {
    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// Uniform box grid on [-1,1]^{n-1} x [0,1], last axis normal.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxGrid {
    points: Vec<usize>,
    lo: Vec<f64>,
    hi: Vec<f64>,
    h: Vec<f64>,
    strides: Vec<usize>,
    len: usize,
}

impl BoxGrid {
    pub fn chart(points: &[usize]) -> Result<Self> {
        let n = points.len();
        if n < 2 {
            return Err(Error::Dimension("chart needs at least 2 axes".into()));
        }
        if let Some(&m) = points.iter().find(|&&m| m < MIN_POINTS_PER_AXIS) {
            return Err(Error::Parameter(format!(
                "{m} points on an axis; need at least {MIN_POINTS_PER_AXIS}"
            )));
        }
        let mut lo = vec![-1.0; n];
        let mut hi = vec![1.0; n];
        lo[n - 1] = 0.0;
        hi[n - 1] = 1.0;
        let h: Vec<f64> = (0..n).map(|a| (hi[a] - lo[a]) / (points[a] - 1) as f64).collect();
        let mut strides = vec![1usize; n];
        for a in (0..n - 1).rev() {
            strides[a] = strides[a + 1] * points[a + 1];
        }
        let len = strides[0] * points[0];
        Ok(BoxGrid { points: points.to_vec(), lo, hi, h, strides, len })
    }

    pub fn n(&self) -> usize {
        self.points.len()
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn points(&self) -> &[usize] {
        &self.points
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        self.h[axis]
    }

    pub fn axis_index(&self, flat: usize, axis: usize) -> usize {
        (flat / self.strides[axis]) % self.points[axis]
    }

    pub fn flat_index(&self, multi: &[usize]) -> usize {
        multi.iter().zip(&self.strides).map(|(i, s)| i * s).sum()
    }

    pub fn multi_index(&self, flat: usize) -> Vec<usize> {
        (0..self.n()).map(|a| self.axis_index(flat, a)).collect()
    }

    pub fn point_of(&self, flat: usize) -> Vec<f64> {
        (0..self.n())
            .map(|a| self.lo[a] + self.axis_index(flat, a) as f64 * self.h[a])
            .collect()
    }

    pub fn classify(&self, flat: usize) -> PointClass {
        let n = self.n();
        let mut on_sigma = false;
        for a in 0..n {
            let i = self.axis_index(flat, a);
            if i == self.points[a] - 1 || (i == 0 && a != n - 1) {
                return PointClass::Framed;
            }
            if a == n - 1 && i == 0 {
                on_sigma = true;
            }
        }
        if on_sigma {
            PointClass::SigmaFace
        } else {
            PointClass::Interior
        }
    }

    pub fn sample(&self, f: impl Fn(&[f64]) -> f64) -> Field {
        let values = (0..self.len).map(|i| f(&self.point_of(i))).collect();
        Field::from_values(values)
    }

    pub fn header(&self) -> GridHeader {
        GridHeader {
            kind: "box".into(),
            points: self.points.clone(),
            lo: self.lo.clone(),
            hi: self.hi.clone(),
            spacing: self.h.clone(),
        }
    }

    fn check_len(&self, f: &Field) -> Result<()> {
        if f.len() != self.len {
            return Err(Error::Dimension(format!(
                "field has {} values on a grid of {} nodes",
                f.len(),
                self.len
            )));
        }
        Ok(())
    }

    /// Number of nodes on the Neumann face; also the length of a ghost plane.
    pub fn sigma_len(&self) -> usize {
        self.len / self.points[self.n() - 1]
    }

    /// Compact index of a Neumann-face node within the face plane. Only
    /// meaningful for nodes with normal index 0, but defined by projection
    /// for all nodes.
    pub fn sigma_index(&self, flat: usize) -> usize {
        let m = self.points[self.n() - 1];
        (flat - flat % m) / m
    }

    /// Flat grid index of the face node with the given compact face index.
    pub fn sigma_flat(&self, face: usize) -> usize {
        face * self.points[self.n() - 1]
    }

    pub fn neumann_ghost_closure(&self, f: &Field, bd: &BoundaryData) -> Result<GhostPlane> {
        self.check_len(f)?;
        let n = self.n();
        let h = self.h[n - 1];
        let stride = self.strides[n - 1];
        let values = (0..self.sigma_len())
            .map(|face| {
                let p = self.sigma_flat(face);
                let u0 = f.get(p);
                let u1 = f.get(p + stride);
                u1 - 2.0 * h * bd.imposed_normal_derivative(u0)
            })
            .collect();
        Ok(GhostPlane { values })
    }

    fn d1_along(&self, f: &Field, axis: usize, ghost: Option<&GhostPlane>) -> Field {
        let m = self.points[axis];
        let s = self.strides[axis];
        let h = self.h[axis];
        let normal = axis == self.n() - 1;
        let v = f.as_slice();
        let values = (0..self.len)
            .map(|p| {
                let i = self.axis_index(p, axis);
                if i == 0 {
                    match ghost {
                        Some(g) if normal => (v[p + s] - g.values[self.sigma_index(p)]) / (2.0 * h),
                        _ => (-3.0 * v[p] + 4.0 * v[p + s] - v[p + 2 * s]) / (2.0 * h),
                    }
                } else if i == m - 1 {
                    (3.0 * v[p] - 4.0 * v[p - s] + v[p - 2 * s]) / (2.0 * h)
                } else {
                    (v[p + s] - v[p - s]) / (2.0 * h)
                }
            })
            .collect();
        Field::from_values(values)
    }

    fn d2_along(&self, f: &Field, axis: usize, ghost: Option<&GhostPlane>) -> Field {
        let m = self.points[axis];
        let s = self.strides[axis];
        let h2 = self.h[axis] * self.h[axis];
        let normal = axis == self.n() - 1;
        let v = f.as_slice();
        let values = (0..self.len)
            .map(|p| {
                let i = self.axis_index(p, axis);
                if i == 0 {
                    match ghost {
                        Some(g) if normal => {
                            (g.values[self.sigma_index(p)] - 2.0 * v[p] + v[p + s]) / h2
                        }
                        _ => (2.0 * v[p] - 5.0 * v[p + s] + 4.0 * v[p + 2 * s] - v[p + 3 * s]) / h2,
                    }
                } else if i == m - 1 {
                    (2.0 * v[p] - 5.0 * v[p - s] + 4.0 * v[p - 2 * s] - v[p - 3 * s]) / h2
                } else {
                    (v[p + s] - 2.0 * v[p] + v[p - s]) / h2
                }
            })
            .collect();
        Field::from_values(values)
    }

    fn gradient_impl(&self, f: &Field, ghost: Option<&GhostPlane>) -> Result<Vec<Field>> {
        self.check_len(f)?;
        Ok((0..self.n()).map(|a| self.d1_along(f, a, ghost)).collect())
    }

    /// All first derivatives, one-sided at every face.
    pub fn gradient(&self, f: &Field) -> Result<Vec<Field>> {
        self.gradient_impl(f, None)
    }

    /// First derivatives with the normal stencil on the Neumann face
    /// replaced by the centered ghost stencil, which returns the imposed
    /// derivative there exactly.
    pub fn gradient_with_ghost(&self, f: &Field, ghost: &GhostPlane) -> Result<Vec<Field>> {
        self.gradient_impl(f, Some(ghost))
    }

    fn hessian_impl(&self, f: &Field, ghost: Option<&GhostPlane>) -> Result<Vec<Field>> {
        self.check_len(f)?;
        let n = self.n();
        let mut out = Vec::with_capacity(n * (n + 1) / 2);
        for i in 0..n {
            for j in i..n {
                if i == j {
                    out.push(self.d2_along(f, i, ghost));
                } else {
                    // The normal axis, if involved, is j (the larger index);
                    // the ghost closure applies to the raw field, so that
                    // pass runs first.
                    let inner = self.d1_along(f, j, ghost);
                    out.push(self.d1_along(&inner, i, None));
                }
            }
        }
        Ok(out)
    }

    /// Packed upper triangle of second derivatives, ordered by [`hess_index`].
    pub fn hessian(&self, f: &Field) -> Result<Vec<Field>> {
        self.hessian_impl(f, None)
    }

    pub fn hessian_with_ghost(&self, f: &Field, ghost: &GhostPlane) -> Result<Vec<Field>> {
        self.hessian_impl(f, Some(ghost))
    }
}

/// Uniform radial grid on [0, R] for rotationally symmetric fields; node i
/// sits at r = i h. Fields are restrictions of smooth even profiles, which
/// closes r = 0: the first derivative vanishes there and the second uses
/// the mirror value u(-h) = u(h).
#[derive(Debug, Clone, PartialEq)]
pub struct RadialGrid {
    points: usize,
    r_max: f64,
    h: f64,
}

impl RadialGrid {
    pub fn new(r_max: f64, points: usize) -> Result<Self> {
        if !(r_max.is_finite() && r_max > 0.0) {
            return Err(Error::Parameter(format!("radius {r_max} must be positive")));
        }
        if points < MIN_POINTS_PER_AXIS {
            return Err(Error::Parameter(format!(
                "{points} radial points; need at least {MIN_POINTS_PER_AXIS}"
            )));
        }
        Ok(RadialGrid { points, r_max, h: r_max / (points - 1) as f64 })
    }

    pub fn points(&self) -> usize {
        self.points
    }

    pub fn r_max(&self) -> f64 {
        self.r_max
    }

    pub fn spacing(&self) -> f64 {
        self.h
    }

    pub fn r(&self, i: usize) -> f64 {
        i as f64 * self.h
    }

    pub fn sample(&self, f: impl Fn(f64) -> f64) -> Field {
        Field::from_values((0..self.points).map(|i| f(self.r(i))).collect())
    }

    pub fn header(&self) -> GridHeader {
        GridHeader {
            kind: "radial".into(),
            points: vec![self.points],
            lo: vec![0.0],
            hi: vec![self.r_max],
            spacing: vec![self.h],
        }
    }

    fn check_len(&self, f: &Field) -> Result<()> {
        if f.len() != self.points {
            return Err(Error::Dimension(format!(
                "field has {} values on a grid of {} nodes",
                f.len(),
                self.points
            )));
        }
        Ok(())
    }

    pub fn deriv1(&self, f: &Field) -> Result<Field> {
        self.check_len(f)?;
        let m = self.points;
        let v = f.as_slice();
        let values = (0..m)
            .map(|i| {
                if i == 0 {
                    0.0
                } else if i == m - 1 {
                    (3.0 * v[i] - 4.0 * v[i - 1] + v[i - 2]) / (2.0 * self.h)
                } else {
                    (v[i + 1] - v[i - 1]) / (2.0 * self.h)
                }
            })
            .collect();
        Ok(Field::from_values(values))
    }

    pub fn deriv2(&self, f: &Field) -> Result<Field> {
        self.check_len(f)?;
        let m = self.points;
        let h2 = self.h * self.h;
        let v = f.as_slice();
        let values = (0..m)
            .map(|i| {
                if i == 0 {
                    2.0 * (v[1] - v[0]) / h2
                } else if i == m - 1 {
                    (2.0 * v[i] - 5.0 * v[i - 1] + 4.0 * v[i - 2] - v[i - 3]) / h2
                } else {
                    (v[i + 1] - 2.0 * v[i] + v[i - 1]) / h2
                }
            })
            .collect();
        Ok(Field::from_values(values))
    }

    /// Mirror value at R + h consistent with the Neumann data on the outer
    /// sphere, where the inner normal is -d/dr, so the imposed radial
    /// derivative is the negated imposed normal derivative.
    pub fn outer_ghost(&self, f: &Field, bd: &BoundaryData) -> Result<f64> {
        self.check_len(f)?;
        let m = self.points;
        let u_r = -bd.imposed_normal_derivative(f.get(m - 1));
        Ok(f.get(m - 2) + 2.0 * self.h * u_r)
    }
}

/// Writes one CSV row per node: coordinates first, then one column per
/// named field. Values print in shortest round-trip form.
pub fn write_box_csv<W: Write>(
    w: &mut W,
    grid: &BoxGrid,
    columns: &[(&str, &Field)],
) -> Result<()> {
    for (_, f) in columns {
        grid.check_len(f)?;
    }
    let coords: Vec<String> = (1..=grid.n()).map(|a| format!("x{a}")).collect();
    let names: Vec<&str> = columns.iter().map(|(name, _)| *name).collect();
    writeln!(w, "{},{}", coords.join(","), names.join(","))?;
    for p in 0..grid.len() {
        let point = grid.point_of(p);
        let mut row: Vec<String> = point.iter().map(|x| x.to_string()).collect();
        row.extend(columns.iter().map(|(_, f)| f.get(p).to_string()));
        writeln!(w, "{}", row.join(","))?;
    }
    Ok(())
}

pub fn write_radial_csv<W: Write>(
    w: &mut W,
    grid: &RadialGrid,
    columns: &[(&str, &Field)],
) -> Result<()> {
    for (_, f) in columns {
        grid.check_len(f)?;
    }
    let names: Vec<&str> = columns.iter().map(|(name, _)| *name).collect();
    writeln!(w, "r,{}", names.join(","))?;
    for i in 0..grid.points() {
        let mut row = vec![grid.r(i).to_string()];
        row.extend(columns.iter().map(|(_, f)| f.get(i).to_string()));
        writeln!(w, "{}", row.join(","))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn construction_validates() {
        assert!(BoxGrid::chart(&[5]).is_err());
        assert!(BoxGrid::chart(&[5, 4]).is_err());
        assert!(RadialGrid::new(1.0, 4).is_err());
        assert!(RadialGrid::new(0.0, 9).is_err());

        let g = BoxGrid::chart(&[5, 6, 7]).unwrap();
        assert_eq!(g.len(), 210);
        assert_eq!(g.point_of(0), vec![-1.0, -1.0, 0.0]);
        assert_eq!(g.point_of(g.len() - 1), vec![1.0, 1.0, 1.0]);
        assert!((g.spacing(0) - 0.5).abs() < 1e-15);
        assert!((g.spacing(2) - 1.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn index_round_trip() {
        let g = BoxGrid::chart(&[5, 6, 7]).unwrap();
        for flat in [0, 1, 41, 209, 137] {
            let multi = g.multi_index(flat);
            assert_eq!(g.flat_index(&multi), flat);
        }
        assert_eq!(g.sigma_flat(g.sigma_index(g.flat_index(&[2, 3, 0]))), g.flat_index(&[2, 3, 0]));
    }

    #[test]
    fn hess_index_table() {
        let want = [((0, 0), 0), ((0, 1), 1), ((0, 2), 2), ((1, 1), 3), ((1, 2), 4), ((2, 2), 5)];
        for ((i, j), k) in want {
            assert_eq!(hess_index(3, i, j), k);
            assert_eq!(hess_index(3, j, i), k);
        }
    }

    #[test]
    fn classify_counts() {
        let g = BoxGrid::chart(&[5, 5, 5]).unwrap();
        let mut counts = [0usize; 3];
        for p in 0..g.len() {
            match g.classify(p) {
                PointClass::Interior => counts[0] += 1,
                PointClass::SigmaFace => counts[1] += 1,
                PointClass::Framed => counts[2] += 1,
            }
        }
        assert_eq!(counts, [27, 9, 89]);
    }

    /// Every stencil in the box operator set is exact on quadratics,
    /// including the one-sided closures and composed mixed derivatives.
    #[test]
    fn box_derivatives_exact_on_quadratics() {
        let g = BoxGrid::chart(&[6, 5, 7]).unwrap();
        let q = [0.3, -0.2, 0.15];
        let c = [[0.0, 0.4, -0.25], [0.4, 0.0, 0.1], [-0.25, 0.1, 0.0]];
        let l = [0.7, -0.3, 0.2];
        let f = g.sample(|x| {
            let mut v = 1.1;
            for i in 0..3 {
                v += q[i] * x[i] * x[i] + l[i] * x[i];
                for j in i + 1..3 {
                    v += c[i][j] * x[i] * x[j];
                }
            }
            v
        });
        let grad = g.gradient(&f).unwrap();
        let hess = g.hessian(&f).unwrap();
        for p in 0..g.len() {
            let x = g.point_of(p);
            for i in 0..3 {
                let mut want = 2.0 * q[i] * x[i] + l[i];
                for j in 0..3 {
                    want += c[i][j] * x[j];
                }
                assert!((grad[i].get(p) - want).abs() <= 1e-11, "grad axis {i} at {x:?}");
                for j in i..3 {
                    let w = if i == j { 2.0 * q[i] } else { c[i][j] };
                    let got = hess[hess_index(3, i, j)].get(p);
                    assert!((got - w).abs() <= 1e-10, "hess ({i},{j}) at {x:?}: {got} vs {w}");
                }
            }
        }
    }

    fn refinement_order(errors: &[f64]) -> f64 {
        errors
            .windows(2)
            .map(|w| (w[0] / w[1]).log2())
            .fold(f64::INFINITY, f64::min)
    }

    #[test]
    fn box_derivatives_are_second_order_on_sine() {
        let mut e1 = Vec::new();
        let mut e2 = Vec::new();
        let pi = std::f64::consts::PI;
        for m in [17usize, 33, 65] {
            let g = BoxGrid::chart(&[m, 5]).unwrap();
            let f = g.sample(|x| (pi * x[0]).sin());
            let d = g.gradient(&f).unwrap();
            let dd = g.hessian(&f).unwrap();
            let mut w1 = 0.0f64;
            let mut w2 = 0.0f64;
            for p in 0..g.len() {
                let x = g.point_of(p);
                w1 = w1.max((d[0].get(p) - pi * (pi * x[0]).cos()).abs());
                w2 = w2.max((dd[0].get(p) + pi * pi * (pi * x[0]).sin()).abs());
            }
            e1.push(w1);
            e2.push(w2);
        }
        assert!(refinement_order(&e1) >= 1.9, "first derivative orders from {e1:?}");
        assert!(refinement_order(&e2) >= 1.9, "second derivative orders from {e2:?}");
    }

    #[test]
    fn mixed_derivative_is_second_order() {
        let mut errs = Vec::new();
        for m in [9usize, 17, 33] {
            let g = BoxGrid::chart(&[m, m]).unwrap();
            let f = g.sample(|x| (1.3 * x[0] + 0.4).sin() * (0.9 * x[1] - 0.2).cos());
            let hess = g.hessian(&f).unwrap();
            let mixed = &hess[hess_index(2, 0, 1)];
            let mut worst = 0.0f64;
            for p in 0..g.len() {
                let x = g.point_of(p);
                let want = -1.3 * 0.9 * (1.3 * x[0] + 0.4).cos() * (0.9 * x[1] - 0.2).sin();
                worst = worst.max((mixed.get(p) - want).abs());
            }
            errs.push(worst);
        }
        assert!(refinement_order(&errs) >= 1.9, "mixed orders from {errs:?}");
    }

    /// The ghost stencil returns the imposed derivative identically, for
    /// every face node and any boundary data; this exercises the face
    /// indexing with node-dependent values.
    #[test]
    fn ghost_gradient_reproduces_imposed_derivative() {
        let g = BoxGrid::chart(&[6, 5, 7]).unwrap();
        let bd = BoundaryData::new(0.3, 1.2).unwrap();
        let f = g.sample(|x| 0.4 * (x[0] + 0.3 * x[1]).sin() + 0.2 * x[2] + 0.1 * x[2] * x[2]);
        let ghost = g.neumann_ghost_closure(&f, &bd).unwrap();
        let grad = g.gradient_with_ghost(&f, &ghost).unwrap();
        for face in 0..g.sigma_len() {
            let p = g.sigma_flat(face);
            let want = bd.imposed_normal_derivative(f.get(p));
            assert!((grad[2].get(p) - want).abs() <= 1e-13);
        }
        // Away from the face the ghost mode changes nothing.
        let plain = g.gradient(&f).unwrap();
        for p in 0..g.len() {
            if g.axis_index(p, 2) != 0 {
                assert_eq!(grad[2].get(p), plain[2].get(p));
            }
        }
    }

    /// With an analytic field built to satisfy the Neumann data exactly,
    /// the ghost value misses the analytic continuation to x_n = -h by
    /// exactly the cubic term 2 c h^3.
    #[test]
    fn ghost_value_is_third_order_accurate() {
        let bd = BoundaryData::new(0.5, 0.9).unwrap();
        let cubic = 0.2;
        let v = |x0: f64| 0.3 * (1.1 * x0).cos();
        let u = |x0: f64, xn: f64| {
            v(x0) + xn * bd.imposed_normal_derivative(v(x0)) + 0.7 * xn * xn + cubic * xn.powi(3)
        };
        let g = BoxGrid::chart(&[5, 9]).unwrap();
        let h = g.spacing(1);
        let f = g.sample(|x| u(x[0], x[1]));
        let ghost = g.neumann_ghost_closure(&f, &bd).unwrap();
        for face in 0..g.sigma_len() {
            let x0 = g.point_of(g.sigma_flat(face))[0];
            let miss = ghost.values()[face] - u(x0, -h);
            assert!((miss - 2.0 * cubic * h * h * h).abs() <= 1e-14);
        }
    }

    #[test]
    fn ghost_mirror_is_exact_for_even_fields() {
        let g = BoxGrid::chart(&[5, 5, 6]).unwrap();
        let bd = BoundaryData::new(0.0, 0.0).unwrap();
        let f = g.sample(|x| (0.7 * x[0] - 0.2 * x[1]).cos() * (1.0 + x[2] * x[2]));
        let ghost = g.neumann_ghost_closure(&f, &bd).unwrap();
        let stride = 1; // last axis is fastest
        for face in 0..g.sigma_len() {
            let p = g.sigma_flat(face);
            assert_eq!(ghost.values()[face], f.get(p + stride));
        }
        let hess = g.hessian_with_ghost(&f, &ghost).unwrap();
        // For the even extension the wall second derivative becomes the
        // standard centered stencil with the mirrored neighbor.
        let h = g.spacing(2);
        let p = g.flat_index(&[2, 2, 0]);
        let manual = (f.get(p + 1) - 2.0 * f.get(p) + f.get(p + 1)) / (h * h);
        assert!((hess[hess_index(3, 2, 2)].get(p) - manual).abs() <= 1e-12);
    }

    #[test]
    fn radial_derivatives_exact_on_even_quadratic() {
        let g = RadialGrid::new(2.0, 9).unwrap();
        let f = g.sample(|r| 1.0 + 0.3 * r * r);
        let d1 = g.deriv1(&f).unwrap();
        let d2 = g.deriv2(&f).unwrap();
        for i in 0..g.points() {
            assert!((d1.get(i) - 0.6 * g.r(i)).abs() <= 1e-13);
            assert!((d2.get(i) - 0.6).abs() <= 1e-12);
        }
        assert_eq!(d1.get(0), 0.0);
    }

    #[test]
    fn radial_derivatives_are_second_order() {
        let mut e1 = Vec::new();
        let mut e2 = Vec::new();
        for m in [65usize, 129, 257] {
            let g = RadialGrid::new(2.0, m).unwrap();
            let f = g.sample(|r| r.cos());
            let d1 = g.deriv1(&f).unwrap();
            let d2 = g.deriv2(&f).unwrap();
            let mut w1 = 0.0f64;
            let mut w2 = 0.0f64;
            for i in 0..m {
                let r = g.r(i);
                w1 = w1.max((d1.get(i) + r.sin()).abs());
                w2 = w2.max((d2.get(i) + r.cos()).abs());
            }
            e1.push(w1);
            e2.push(w2);
        }
        assert!(refinement_order(&e1) >= 1.9, "radial first orders from {e1:?}");
        assert!(refinement_order(&e2) >= 1.9, "radial second orders from {e2:?}");
    }

    #[test]
    fn radial_outer_ghost_encodes_neumann_data() {
        let g = RadialGrid::new(1.0, 11).unwrap();
        let bd = BoundaryData::new(1.0, 0.8).unwrap();
        let f = g.sample(|r| 0.2 + 0.1 * r * r);
        let ghost = g.outer_ghost(&f, &bd).unwrap();
        let m = g.points();
        let u_r = (ghost - f.get(m - 2)) / (2.0 * g.spacing());
        let want = bd.mu - bd.mu_hat * (-f.get(m - 1)).exp();
        assert!((u_r - want).abs() <= 1e-14);
    }

    #[test]
    fn norms() {
        let f = Field::from_values(vec![3.0, -4.0]);
        assert_eq!(f.sup_norm(), 4.0);
        assert!((f.rms_norm() - (12.5f64).sqrt()).abs() <= 1e-15);
        assert_eq!(rms_norm(&[]), 0.0);
    }

    #[test]
    fn csv_and_header_round_trip() {
        let g = BoxGrid::chart(&[5, 5]).unwrap();
        let f = g.sample(|x| x[0] + 10.0 * x[1]);
        let mut buf = Vec::new();
        write_box_csv(&mut buf, &g, &[("u", &f)]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 26);
        assert_eq!(lines[0], "x1,x2,u");
        assert_eq!(lines[1], "-1,0,-1");

        let hdr = g.header();
        let json = serde_json::to_string(&hdr).unwrap();
        let back: GridHeader = serde_json::from_str(&json).unwrap();
        assert_eq!(back, hdr);

        let rg = RadialGrid::new(1.5, 7).unwrap();
        let rf = rg.sample(|r| r * r);
        let mut rbuf = Vec::new();
        write_radial_csv(&mut rbuf, &rg, &[("u", &rf)]).unwrap();
        assert_eq!(rbuf.iter().filter(|&&b| b == b'\n').count(), 8);
    }
}
