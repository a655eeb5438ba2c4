//! Uniform tensor grids over boxes in ℝ^d (d ∈ {1,2,3}) carrying scalar
//! fields, with an explicit +∞ mask for truncated potentials.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Geometry of a uniform tensor grid: nodes include both box endpoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub dim: usize,
    pub low: Vec<f64>,
    pub high: Vec<f64>,
    /// Nodes per axis (≥ 5 so central stencils have interior room).
    pub n: Vec<usize>,
}

impl GridSpec {
    pub fn new(low: Vec<f64>, high: Vec<f64>, n: Vec<usize>) -> Result<Self> {
        let dim = low.len();
        if dim == 0 || dim > 3 {
            return Err(Error::InvalidSpec(format!("grid dim {dim} outside 1..=3")));
        }
        if high.len() != dim || n.len() != dim {
            return Err(Error::InvalidSpec("grid axis count mismatch".into()));
        }
        for ax in 0..dim {
            if high[ax].is_nan() || low[ax].is_nan() || high[ax] <= low[ax] {
                return Err(Error::InvalidSpec(format!(
                    "axis {ax}: high {} must exceed low {}",
                    high[ax], low[ax]
                )));
            }
            if n[ax] < 5 {
                return Err(Error::InvalidSpec(format!(
                    "axis {ax}: n = {} below the 5-node minimum",
                    n[ax]
                )));
            }
        }
        Ok(GridSpec { dim, low, high, n })
    }

    /// Uniform 1D grid.
    pub fn line(low: f64, high: f64, n: usize) -> Result<Self> {
        Self::new(vec![low], vec![high], vec![n])
    }

    /// Cube [low, high]^dim with n nodes per axis.
    pub fn cube(dim: usize, low: f64, high: f64, n: usize) -> Result<Self> {
        Self::new(vec![low; dim], vec![high; dim], vec![n; dim])
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        (self.high[axis] - self.low[axis]) / (self.n[axis] - 1) as f64
    }

    pub fn max_spacing(&self) -> f64 {
        (0..self.dim).map(|a| self.spacing(a)).fold(0.0, f64::max)
    }

    pub fn len(&self) -> usize {
        self.n.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Box diameter.
    pub fn diameter(&self) -> f64 {
        (0..self.dim)
            .map(|a| (self.high[a] - self.low[a]).powi(2))
            .sum::<f64>()
            .sqrt()
    }

    /// Cell volume h₁⋯h_d.
    pub fn cell_volume(&self) -> f64 {
        (0..self.dim).map(|a| self.spacing(a)).product()
    }

    pub fn coord(&self, axis: usize, i: usize) -> f64 {
        self.low[axis] + i as f64 * self.spacing(axis)
    }

    pub fn node(&self, multi: &[usize]) -> Vec<f64> {
        multi
            .iter()
            .enumerate()
            .map(|(a, &i)| self.coord(a, i))
            .collect()
    }

    /// Flat row-major index, axis 0 slowest.
    pub fn flat(&self, multi: &[usize]) -> usize {
        let mut idx = 0;
        for (a, &i) in multi.iter().enumerate().take(self.dim) {
            idx = idx * self.n[a] + i;
        }
        idx
    }

    pub fn unflatten(&self, mut idx: usize) -> Vec<usize> {
        let mut multi = vec![0; self.dim];
        for a in (0..self.dim).rev() {
            multi[a] = idx % self.n[a];
            idx /= self.n[a];
        }
        multi
    }

    /// Multi-indices at least `margin` nodes away from every boundary.
    pub fn interior_nodes(&self, margin: usize) -> Vec<Vec<usize>> {
        let mut out = Vec::new();
        let mut multi = vec![margin; self.dim];
        if self.n.iter().any(|&n| n < 2 * margin + 1) {
            return out;
        }
        loop {
            out.push(multi.clone());
            let mut axis = self.dim;
            loop {
                if axis == 0 {
                    return out;
                }
                axis -= 1;
                multi[axis] += 1;
                if multi[axis] + margin < self.n[axis] {
                    break;
                }
                multi[axis] = margin;
            }
        }
    }

    /// Inclusive index ranges covering the central `fraction` of the box.
    pub fn central_window(&self, fraction: f64) -> Vec<(usize, usize)> {
        (0..self.dim)
            .map(|a| {
                let half = 0.5 * fraction.clamp(0.0, 1.0);
                let lo = ((self.n[a] - 1) as f64 * (0.5 - half)).ceil() as usize;
                let hi = ((self.n[a] - 1) as f64 * (0.5 + half)).floor() as usize;
                (lo, hi.max(lo))
            })
            .collect()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        (0..self.dim).all(|a| x[a] >= self.low[a] - 1e-12 && x[a] <= self.high[a] + 1e-12)
    }
}

/// Scalar field on a [`GridSpec`]. Masked nodes represent the value +∞
/// (truncated potentials); their stored value is ignored.
#[derive(Debug, Clone)]
pub struct GridField {
    pub spec: GridSpec,
    pub values: Vec<f64>,
    pub mask: Vec<bool>,
}

impl GridField {
    pub fn new(spec: GridSpec, values: Vec<f64>, mask: Option<Vec<bool>>) -> Result<Self> {
        let len = spec.len();
        if values.len() != len {
            return Err(Error::DimensionMismatch {
                expected: len,
                got: values.len(),
            });
        }
        let mask = mask.unwrap_or_else(|| vec![false; len]);
        if mask.len() != len {
            return Err(Error::DimensionMismatch {
                expected: len,
                got: mask.len(),
            });
        }
        for (i, v) in values.iter().enumerate() {
            if !mask[i] && !v.is_finite() {
                return Err(Error::InvalidSpec(format!(
                    "non-finite value {v} at unmasked node {i}"
                )));
            }
        }
        Ok(GridField { spec, values, mask })
    }

    pub fn from_fn(spec: GridSpec, f: impl Fn(&[f64]) -> f64) -> Result<Self> {
        let len = spec.len();
        let mut values = vec![0.0; len];
        let mut mask = vec![false; len];
        for idx in 0..len {
            let x = spec.node(&spec.unflatten(idx));
            let v = f(&x);
            if v.is_finite() {
                values[idx] = v;
            } else {
                mask[idx] = true;
            }
        }
        GridField::new(spec, values, Some(mask))
    }

    pub fn get(&self, multi: &[usize]) -> Option<f64> {
        let idx = self.spec.flat(multi);
        if self.mask[idx] {
            None
        } else {
            Some(self.values[idx])
        }
    }

    pub fn is_masked(&self, multi: &[usize]) -> bool {
        self.mask[self.spec.flat(multi)]
    }

    pub fn any_masked(&self) -> bool {
        self.mask.iter().any(|&m| m)
    }

    /// Multilinear interpolation. Errors outside the box or when a cell
    /// corner is masked.
    pub fn interpolate(&self, x: &[f64]) -> Result<f64> {
        if !self.spec.contains(x) {
            return Err(Error::Domain { point: x.to_vec() });
        }
        let d = self.spec.dim;
        let mut base = vec![0usize; d];
        let mut frac = vec![0.0f64; d];
        for a in 0..d {
            let h = self.spec.spacing(a);
            let t = ((x[a] - self.spec.low[a]) / h).clamp(0.0, (self.spec.n[a] - 1) as f64);
            let i = (t.floor() as usize).min(self.spec.n[a] - 2);
            base[a] = i;
            frac[a] = t - i as f64;
        }
        let mut acc = 0.0;
        for corner in 0..(1usize << d) {
            let mut weight = 1.0;
            let mut multi = base.clone();
            for a in 0..d {
                if corner >> a & 1 == 1 {
                    multi[a] += 1;
                    weight *= frac[a];
                } else {
                    weight *= 1.0 - frac[a];
                }
            }
            // Coordinates that hit a node up to roundoff produce corners with
            // ~1e-16 weights; a masked corner there must not poison the value.
            if weight.abs() <= 1e-12 {
                continue;
            }
            match self.get(&multi) {
                Some(v) => acc += weight * v,
                None => return Err(Error::Domain { point: x.to_vec() }),
            }
        }
        Ok(acc)
    }

    /// Minimum of v[i-1] + v[i+1] - 2 v[i] over unmasked triples along every
    /// grid line; nonnegative (up to tolerance) for discretely convex fields.
    pub fn min_second_difference(&self) -> f64 {
        let mut min = f64::INFINITY;
        let d = self.spec.dim;
        for axis in 0..d {
            for idx in 0..self.spec.len() {
                let multi = self.spec.unflatten(idx);
                if multi[axis] == 0 || multi[axis] + 1 >= self.spec.n[axis] {
                    continue;
                }
                let mut lo = multi.clone();
                lo[axis] -= 1;
                let mut hi = multi.clone();
                hi[axis] += 1;
                if let (Some(a), Some(b), Some(c)) = (self.get(&lo), self.get(&multi), self.get(&hi)) {
                    min = min.min(a + c - 2.0 * b);
                }
            }
        }
        min
    }

    /// Discrete midpoint-convexity scan along grid lines with the tolerance
    /// 1e-8 · h² · max|values|.
    pub fn convexity_scan(&self) -> bool {
        let max_abs = self
            .values
            .iter()
            .zip(&self.mask)
            .filter(|(_, &m)| !m)
            .fold(0.0f64, |m, (v, _)| m.max(v.abs()));
        let h2 = self.spec.max_spacing().powi(2);
        self.min_second_difference() >= -1e-8 * h2 * max_abs.max(1.0)
    }

    /// Largest fourth central difference |Δ⁴v| over interior lines, a data
    /// estimate of h⁴·max|∂⁴| used for stencil-error margins.
    pub fn max_fourth_difference(&self) -> f64 {
        let full: Vec<(usize, usize)> = self.spec.n.iter().map(|&n| (0, n - 1)).collect();
        self.max_fourth_difference_in(&full)
    }

    /// As [`Self::max_fourth_difference`], restricted to nodes inside the
    /// given inclusive index window (boundary-layer spikes should not inflate
    /// margins for window-restricted suprema).
    pub fn max_fourth_difference_in(&self, window: &[(usize, usize)]) -> f64 {
        let mut max = 0.0f64;
        for axis in 0..self.spec.dim {
            if self.spec.n[axis] < 5 {
                continue;
            }
            for idx in 0..self.spec.len() {
                let multi = self.spec.unflatten(idx);
                if multi[axis] < 2 || multi[axis] + 2 >= self.spec.n[axis] {
                    continue;
                }
                if !multi
                    .iter()
                    .zip(window)
                    .all(|(&i, &(lo, hi))| i >= lo && i <= hi)
                {
                    continue;
                }
                let sample = |offset: isize| -> Option<f64> {
                    let mut m = multi.clone();
                    m[axis] = (multi[axis] as isize + offset) as usize;
                    self.get(&m)
                };
                if let (Some(a), Some(b), Some(c), Some(d4), Some(e)) = (
                    sample(-2),
                    sample(-1),
                    sample(0),
                    sample(1),
                    sample(2),
                ) {
                    max = max.max((a - 4.0 * b + 6.0 * c - 4.0 * d4 + e).abs());
                }
            }
        }
        max
    }

    /// Binary layout: u32 dim; u32 n per axis; f64 low/high per axis;
    /// row-major f64 values; mask as a packed bitset (bit set = masked).
    /// Little-endian throughout.
    pub fn write_binary(&self, mut w: impl Write) -> Result<()> {
        w.write_all(&(self.spec.dim as u32).to_le_bytes())?;
        for &n in &self.spec.n {
            w.write_all(&(n as u32).to_le_bytes())?;
        }
        for a in 0..self.spec.dim {
            w.write_all(&self.spec.low[a].to_le_bytes())?;
            w.write_all(&self.spec.high[a].to_le_bytes())?;
        }
        for v in &self.values {
            w.write_all(&v.to_le_bytes())?;
        }
        let mut byte = 0u8;
        for (i, &m) in self.mask.iter().enumerate() {
            if m {
                byte |= 1 << (i % 8);
            }
            if i % 8 == 7 {
                w.write_all(&[byte])?;
                byte = 0;
            }
        }
        if !self.mask.len().is_multiple_of(8) {
            w.write_all(&[byte])?;
        }
        Ok(())
    }

    pub fn read_binary(mut r: impl Read) -> Result<Self> {
        let mut u32buf = [0u8; 4];
        let mut f64buf = [0u8; 8];
        r.read_exact(&mut u32buf)?;
        let dim = u32::from_le_bytes(u32buf) as usize;
        if dim == 0 || dim > 3 {
            return Err(Error::InvalidSpec(format!("binary grid dim {dim}")));
        }
        let mut n = Vec::with_capacity(dim);
        for _ in 0..dim {
            r.read_exact(&mut u32buf)?;
            n.push(u32::from_le_bytes(u32buf) as usize);
        }
        let mut low = Vec::with_capacity(dim);
        let mut high = Vec::with_capacity(dim);
        for _ in 0..dim {
            r.read_exact(&mut f64buf)?;
            low.push(f64::from_le_bytes(f64buf));
            r.read_exact(&mut f64buf)?;
            high.push(f64::from_le_bytes(f64buf));
        }
        let spec = GridSpec::new(low, high, n)?;
        let len = spec.len();
        let mut values = Vec::with_capacity(len);
        for _ in 0..len {
            r.read_exact(&mut f64buf)?;
            values.push(f64::from_le_bytes(f64buf));
        }
        let mut mask = vec![false; len];
        let mut byte = [0u8; 1];
        for chunk in 0..len.div_ceil(8) {
            r.read_exact(&mut byte)?;
            for bit in 0..8 {
                let i = chunk * 8 + bit;
                if i < len {
                    mask[i] = byte[0] >> bit & 1 == 1;
                }
            }
        }
        // Masked slots may carry any payload on disk; normalize for the
        // finite-values invariant.
        for (i, &m) in mask.iter().enumerate() {
            if m {
                values[i] = 0.0;
            }
        }
        GridField::new(spec, values, Some(mask))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = std::fs::File::create(path)?;
        self.write_binary(std::io::BufWriter::new(file))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::read_binary(std::io::BufReader::new(file))
    }

    /// CSV dump for 1D/2D inspection: coordinates, value, masked flag.
    pub fn write_csv(&self, mut w: impl Write) -> Result<()> {
        if self.spec.dim > 2 {
            return Err(Error::InvalidSpec("CSV emission covers 1D/2D only".into()));
        }
        let header: Vec<&str> = match self.spec.dim {
            1 => vec!["x", "value", "masked"],
            _ => vec!["x0", "x1", "value", "masked"],
        };
        writeln!(w, "{}", header.join(","))?;
        for idx in 0..self.spec.len() {
            let multi = self.spec.unflatten(idx);
            let x = self.spec.node(&multi);
            let coords: Vec<String> = x.iter().map(|c| format!("{c:.17e}")).collect();
            writeln!(
                w,
                "{},{:.17e},{}",
                coords.join(","),
                self.values[idx],
                u8::from(self.mask[idx])
            )?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flat_round_trip() {
        let spec = GridSpec::new(vec![0.0, -1.0], vec![1.0, 1.0], vec![5, 7]).unwrap();
        for idx in 0..spec.len() {
            assert_eq!(spec.flat(&spec.unflatten(idx)), idx);
        }
    }

    #[test]
    fn interpolation_reproduces_affine() {
        let spec = GridSpec::cube(2, -1.0, 1.0, 9).unwrap();
        let field = GridField::from_fn(spec, |x| 2.0 * x[0] - 3.0 * x[1] + 0.5).unwrap();
        let v = field.interpolate(&[0.137, -0.42]).unwrap();
        assert!((v - (2.0 * 0.137 + 3.0 * 0.42 + 0.5)).abs() < 1e-12);
    }

    #[test]
    fn binary_round_trip_preserves_mask() {
        let spec = GridSpec::line(-2.0, 2.0, 11).unwrap();
        let field = GridField::from_fn(spec, |x| {
            if x[0].abs() > 1.5 {
                f64::INFINITY
            } else {
                x[0] * x[0]
            }
        })
        .unwrap();
        let mut buf = Vec::new();
        field.write_binary(&mut buf).unwrap();
        let back = GridField::read_binary(buf.as_slice()).unwrap();
        assert_eq!(back.spec, field.spec);
        assert_eq!(back.mask, field.mask);
        for i in 0..field.values.len() {
            if !field.mask[i] {
                assert_eq!(back.values[i], field.values[i]);
            }
        }
    }

    #[test]
    fn convexity_scan_flags_concavity() {
        let spec = GridSpec::line(-1.0, 1.0, 21).unwrap();
        let convex = GridField::from_fn(spec.clone(), |x| x[0] * x[0]).unwrap();
        assert!(convex.convexity_scan());
        let concave = GridField::from_fn(spec, |x| -x[0] * x[0]).unwrap();
        assert!(!concave.convexity_scan());
    }

    #[test]
    fn central_window_covers_middle() {
        let spec = GridSpec::line(-5.0, 5.0, 101).unwrap();
        let window = spec.central_window(0.6);
        assert_eq!(window, vec![(20, 80)]);
    }
}
