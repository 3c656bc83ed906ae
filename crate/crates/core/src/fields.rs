//! Scalar grids for the data (D), curvature (beta) and balloon (kappa) maps.
//!
//! Grid entry `(ix, iy)` sits at continuous grid coordinate `(ix, iy)`.
//! Masks are rasterized at pixel centers, so a field built from a mask
//! stores the value of pixel `(ix, iy)` at image point `(ix + 0.5, iy + 0.5)`.
//! [`FieldSet::sample`] and friends take image points and apply that
//! half-pixel shift; [`ScalarField::bilinear_sample`] works in grid
//! coordinates directly.

use serde::{Deserialize, Serialize};

use crate::error::{FieldError, FormatError};
use crate::geometry::{Mask, Point2};

/// Scale applied to the masked distance transform to obtain beta.
pub const BETA_SCALE: f64 = 0.005;
/// Scale applied to the masked distance transform to obtain kappa.
pub const KAPPA_SCALE: f64 = 0.1;

const ARF_MAGIC: &[u8; 4] = b"ARF1";
const ARF_DTYPE_F64: u32 = 0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalarField {
    width: usize,
    height: usize,
    values: Vec<f64>,
}

/// A bilinear sample with its spatial derivatives and the four corner
/// weights, for scattering gradients back into the grid.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BilinearSample {
    pub value: f64,
    pub d_dx: f64,
    pub d_dy: f64,
    /// `(flat index, weight)` for the four surrounding entries.
    pub corners: [(usize, f64); 4],
}

impl ScalarField {
    pub fn new(width: usize, height: usize, values: Vec<f64>) -> Result<Self, FieldError> {
        if width == 0 || height == 0 || values.len() != width * height {
            return Err(FieldError::DimensionMismatch(format!(
                "{} values for a {width}x{height} grid",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(FieldError::NonFinite);
        }
        Ok(Self {
            width,
            height,
            values,
        })
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        Self::constant(width, height, 0.0)
    }

    pub fn constant(width: usize, height: usize, value: f64) -> Self {
        assert!(width >= 1 && height >= 1);
        Self {
            width,
            height,
            values: vec![value; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        assert!(width >= 1 && height >= 1);
        let mut values = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                values.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            values,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.values[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, v: f64) {
        self.values[y * self.width + x] = v;
    }

    pub fn same_shape(&self, other: &ScalarField) -> bool {
        self.width == other.width && self.height == other.height
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> ScalarField {
        ScalarField {
            width: self.width,
            height: self.height,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_value(&self) -> f64 {
        self.values
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Lower corner index and fractional offset along one axis. Coordinates
    /// are clamped to `[0, n - 1]`; on a cell boundary the lower cell wins.
    fn axis(coord: f64, n: usize) -> (usize, usize, f64, bool) {
        if n == 1 {
            return (0, 0, 0.0, false);
        }
        let hi = (n - 1) as f64;
        let inside = (0.0..=hi).contains(&coord);
        let c = coord.clamp(0.0, hi);
        let i0 = ((c.ceil() as usize).max(1) - 1).min(n - 2);
        (i0, i0 + 1, c - i0 as f64, inside)
    }

    /// Bilinear interpolation at grid coordinates `(x, y)`, clamped to the grid.
    pub fn bilinear_sample(&self, x: f64, y: f64) -> f64 {
        self.bilinear_sample_grad(x, y).value
    }

    /// Bilinear sample plus exact partial derivatives of the interpolated
    /// surface. Derivatives are zero along an axis where the coordinate was clamped.
    pub fn bilinear_sample_grad(&self, x: f64, y: f64) -> BilinearSample {
        let (x0, x1, tx, x_in) = Self::axis(x, self.width);
        let (y0, y1, ty, y_in) = Self::axis(y, self.height);
        let w = self.width;
        let i00 = y0 * w + x0;
        let i10 = y0 * w + x1;
        let i01 = y1 * w + x0;
        let i11 = y1 * w + x1;
        let (v00, v10, v01, v11) = (
            self.values[i00],
            self.values[i10],
            self.values[i01],
            self.values[i11],
        );
        let value = (1.0 - ty) * ((1.0 - tx) * v00 + tx * v10) + ty * ((1.0 - tx) * v01 + tx * v11);
        let d_dx = if x_in && x1 != x0 {
            (1.0 - ty) * (v10 - v00) + ty * (v11 - v01)
        } else {
            0.0
        };
        let d_dy = if y_in && y1 != y0 {
            (1.0 - tx) * (v01 - v00) + tx * (v11 - v10)
        } else {
            0.0
        };
        BilinearSample {
            value,
            d_dx,
            d_dy,
            corners: [
                (i00, (1.0 - tx) * (1.0 - ty)),
                (i10, tx * (1.0 - ty)),
                (i01, (1.0 - tx) * ty),
                (i11, tx * ty),
            ],
        }
    }

    /// Flat binary form: `"ARF1"`, u32 width, u32 height, u32 dtype (0 = f64),
    /// then row-major little-endian values.
    pub fn to_arf(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(16 + 8 * self.values.len());
        out.extend_from_slice(ARF_MAGIC);
        out.extend_from_slice(&(self.width as u32).to_le_bytes());
        out.extend_from_slice(&(self.height as u32).to_le_bytes());
        out.extend_from_slice(&ARF_DTYPE_F64.to_le_bytes());
        for v in &self.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_arf(bytes: &[u8]) -> Result<Self, FormatError> {
        if bytes.len() < 16 || &bytes[..4] != ARF_MAGIC {
            return Err(FormatError::BadHeader("missing ARF1 magic".into()));
        }
        let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap()) as usize;
        let (w, h, dtype) = (word(4), word(8), word(12));
        if dtype != ARF_DTYPE_F64 as usize {
            return Err(FormatError::BadHeader(format!("unsupported dtype {dtype}")));
        }
        let expected = 16 + 8 * w * h;
        if bytes.len() != expected {
            return Err(FormatError::Truncated {
                expected,
                got: bytes.len(),
            });
        }
        let values = bytes[16..]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Ok(Self::new(w, h, values)?)
    }

    /// 8-bit PGM, linearly quantized so the maximum maps to 255.
    pub fn to_pgm(&self) -> Vec<u8> {
        let lo = self.min_value().min(0.0);
        let span = (self.max_value() - lo).max(f64::MIN_POSITIVE);
        let mut out = format!("P5\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend(
            self.values
                .iter()
                .map(|&v| ((v - lo) / span * 255.0).round() as u8),
        );
        out
    }

    /// Reads an 8-bit PGM, mapping sample `s` to `s * scale`.
    pub fn from_pgm(bytes: &[u8], scale: f64) -> Result<Self, FormatError> {
        let (w, h, data) = crate::io::parse_pgm(bytes)?;
        Ok(Self::new(
            w,
            h,
            data.iter().map(|&s| s as f64 * scale).collect(),
        )?)
    }
}

const SOBEL_SMOOTH: [f64; 3] = [1.0, 2.0, 1.0];
const SOBEL_DIFF: [f64; 3] = [-1.0, 0.0, 1.0];
const SOBEL_NORM: f64 = 1.0 / 8.0;

fn clamp_index(i: isize, n: usize) -> usize {
    i.clamp(0, n as isize - 1) as usize
}

/// 3x3 Sobel derivatives scaled by 1/8 (a unit ramp gives exactly 1), with
/// replicate padding at the border.
pub fn sobel_gradient(field: &ScalarField) -> Result<(ScalarField, ScalarField), FieldError> {
    let (w, h) = (field.width, field.height);
    if w < 3 || h < 3 {
        return Err(FieldError::FieldTooSmall {
            width: w,
            height: h,
        });
    }
    let mut gx = ScalarField::zeros(w, h);
    let mut gy = ScalarField::zeros(w, h);
    for y in 0..h {
        for x in 0..w {
            let (mut sx, mut sy) = (0.0, 0.0);
            for k in 0..3 {
                for j in 0..3 {
                    let v = field.get(
                        clamp_index(x as isize + j as isize - 1, w),
                        clamp_index(y as isize + k as isize - 1, h),
                    );
                    sx += SOBEL_DIFF[j] * SOBEL_SMOOTH[k] * v;
                    sy += SOBEL_SMOOTH[j] * SOBEL_DIFF[k] * v;
                }
            }
            gx.set(x, y, sx * SOBEL_NORM);
            gy.set(x, y, sy * SOBEL_NORM);
        }
    }
    Ok((gx, gy))
}

/// Transpose of [`sobel_gradient`]: maps gradients with respect to the two
/// derivative grids back onto the source grid, padding included.
pub fn sobel_adjoint(grad_gx: &ScalarField, grad_gy: &ScalarField) -> ScalarField {
    let (w, h) = (grad_gx.width, grad_gx.height);
    let mut out = ScalarField::zeros(w, h);
    for y in 0..h {
        for x in 0..w {
            let (ax, ay) = (grad_gx.get(x, y), grad_gy.get(x, y));
            if ax == 0.0 && ay == 0.0 {
                continue;
            }
            for k in 0..3 {
                for j in 0..3 {
                    let sx = clamp_index(x as isize + j as isize - 1, w);
                    let sy = clamp_index(y as isize + k as isize - 1, h);
                    let c = SOBEL_NORM
                        * (SOBEL_DIFF[j] * SOBEL_SMOOTH[k] * ax
                            + SOBEL_SMOOTH[j] * SOBEL_DIFF[k] * ay);
                    out.values[sy * w + sx] += c;
                }
            }
        }
    }
    out
}

/// Lower envelope of parabolas: exact 1-D squared distance transform.
/// Infinite entries are non-sites.
#[allow(clippy::needless_range_loop)]
fn edt_1d(f: &[f64], out: &mut [f64], v: &mut [usize], z: &mut [f64]) {
    let Some(first) = f.iter().position(|x| x.is_finite()) else {
        out.iter_mut().for_each(|o| *o = f64::INFINITY);
        return;
    };
    let intersect = |p: usize, q: usize| {
        ((f[q] + (q * q) as f64) - (f[p] + (p * p) as f64)) / (2.0 * (q as f64 - p as f64))
    };
    let mut k = 0usize;
    v[0] = first;
    z[0] = f64::NEG_INFINITY;
    z[1] = f64::INFINITY;
    for q in (first + 1)..f.len() {
        if f[q].is_infinite() {
            continue;
        }
        let mut s = intersect(v[k], q);
        while s <= z[k] {
            k -= 1;
            s = intersect(v[k], q);
        }
        k += 1;
        v[k] = q;
        z[k] = s;
        z[k + 1] = f64::INFINITY;
    }
    let mut k = 0;
    for (q, o) in out.iter_mut().enumerate() {
        while z[k + 1] < q as f64 {
            k += 1;
        }
        let d = q as f64 - v[k] as f64;
        *o = d * d + f[v[k]];
    }
}

/// Squared distances to the nearest `true` pixel, exact, computed separably.
fn squared_edt(mask: &Mask) -> Vec<f64> {
    let (w, h) = (mask.width(), mask.height());
    let mut grid: Vec<f64> = mask
        .bits()
        .iter()
        .map(|&b| if b { 0.0 } else { f64::INFINITY })
        .collect();
    let n = w.max(h);
    let (mut f, mut out) = (vec![0.0; n], vec![0.0; n]);
    let (mut v, mut z) = (vec![0usize; n], vec![0.0; n + 1]);
    for x in 0..w {
        for y in 0..h {
            f[y] = grid[y * w + x];
        }
        edt_1d(&f[..h], &mut out[..h], &mut v, &mut z);
        for y in 0..h {
            grid[y * w + x] = out[y];
        }
    }
    for y in 0..h {
        f[..w].copy_from_slice(&grid[y * w..(y + 1) * w]);
        edt_1d(&f[..w], &mut out[..w], &mut v, &mut z);
        grid[y * w..(y + 1) * w].copy_from_slice(&out[..w]);
    }
    grid
}

/// Exact Euclidean distance from each pixel center to the nearest foreground
/// pixel center. Foreground pixels are 0.
pub fn distance_transform(mask: &Mask) -> Result<ScalarField, FieldError> {
    if mask.is_empty() {
        return Err(FieldError::EmptyMask);
    }
    let values = squared_edt(mask).into_iter().map(f64::sqrt).collect();
    Ok(ScalarField {
        width: mask.width(),
        height: mask.height(),
        values,
    })
}

/// Distance from each foreground pixel to the nearest background pixel,
/// treating everything outside the image as background. Background is 0.
pub fn inner_distance(mask: &Mask) -> ScalarField {
    let (w, h) = (mask.width(), mask.height());
    let padded = Mask::from_fn(w + 2, h + 2, |x, y| {
        x == 0 || y == 0 || x == w + 1 || y == h + 1 || !mask.get(x - 1, y - 1)
    });
    let d = squared_edt(&padded);
    ScalarField::from_fn(w, h, |x, y| d[(y + 1) * (w + 2) + x + 1].sqrt())
}

/// D, beta, kappa and the precomputed Sobel derivatives of D.
#[derive(Clone, Debug, PartialEq)]
pub struct FieldSet {
    d: ScalarField,
    beta: ScalarField,
    kappa: ScalarField,
    d_grad_x: ScalarField,
    d_grad_y: ScalarField,
}

/// Every field value the dynamics needs at one contour point, with the
/// bilinear data needed to differentiate through the sample.
#[derive(Clone, Copy, Debug)]
pub struct PointSamples {
    pub beta: BilinearSample,
    pub kappa: BilinearSample,
    pub gx: BilinearSample,
    pub gy: BilinearSample,
}

/// Image point to grid coordinates (pixel centers at integer coordinates).
pub fn grid_coords(p: Point2) -> (f64, f64) {
    (p.x - 0.5, p.y - 0.5)
}

impl FieldSet {
    pub fn new(d: ScalarField, beta: ScalarField, kappa: ScalarField) -> Result<Self, FieldError> {
        if !d.same_shape(&beta) || !d.same_shape(&kappa) {
            return Err(FieldError::DimensionMismatch(format!(
                "D {}x{}, beta {}x{}, kappa {}x{}",
                d.width, d.height, beta.width, beta.height, kappa.width, kappa.height
            )));
        }
        for f in [&d, &beta, &kappa] {
            if f.values.iter().any(|v| !v.is_finite()) {
                return Err(FieldError::NonFinite);
            }
            if f.values.iter().any(|&v| v < 0.0) {
                return Err(FieldError::Negative);
            }
        }
        let (d_grad_x, d_grad_y) = sobel_gradient(&d)?;
        Ok(Self {
            d,
            beta,
            kappa,
            d_grad_x,
            d_grad_y,
        })
    }

    /// All-constant maps; handy for isolating one energy term.
    pub fn uniform(
        width: usize,
        height: usize,
        d: f64,
        beta: f64,
        kappa: f64,
    ) -> Result<Self, FieldError> {
        Self::new(
            ScalarField::constant(width, height, d),
            ScalarField::constant(width, height, beta),
            ScalarField::constant(width, height, kappa),
        )
    }

    pub fn width(&self) -> usize {
        self.d.width
    }

    pub fn height(&self) -> usize {
        self.d.height
    }

    pub fn d(&self) -> &ScalarField {
        &self.d
    }

    pub fn beta(&self) -> &ScalarField {
        &self.beta
    }

    pub fn kappa(&self) -> &ScalarField {
        &self.kappa
    }

    pub fn d_grad_x(&self) -> &ScalarField {
        &self.d_grad_x
    }

    pub fn d_grad_y(&self) -> &ScalarField {
        &self.d_grad_y
    }

    pub fn into_parts(self) -> (ScalarField, ScalarField, ScalarField) {
        (self.d, self.beta, self.kappa)
    }

    /// `(D, beta, kappa)` at an image point.
    pub fn sample(&self, p: Point2) -> (f64, f64, f64) {
        let (x, y) = grid_coords(p);
        (
            self.d.bilinear_sample(x, y),
            self.beta.bilinear_sample(x, y),
            self.kappa.bilinear_sample(x, y),
        )
    }

    pub fn sample_with_grad(&self, p: Point2) -> PointSamples {
        let (x, y) = grid_coords(p);
        PointSamples {
            beta: self.beta.bilinear_sample_grad(x, y),
            kappa: self.kappa.bilinear_sample_grad(x, y),
            gx: self.d_grad_x.bilinear_sample_grad(x, y),
            gy: self.d_grad_y.bilinear_sample_grad(x, y),
        }
    }
}

/// Pretraining maps from a ground-truth mask and its boundary pixels:
/// D is the distance to the boundary, beta keeps D outside the strict
/// interior (scaled by [`BETA_SCALE`]), kappa keeps D on the foreground
/// (scaled by [`KAPPA_SCALE`]).
pub fn build_pretrain_fields(gt_mask: &Mask, boundary_mask: &Mask) -> Result<FieldSet, FieldError> {
    if !gt_mask.same_shape(boundary_mask) {
        return Err(FieldError::DimensionMismatch(format!(
            "mask {}x{} vs boundary {}x{}",
            gt_mask.width(),
            gt_mask.height(),
            boundary_mask.width(),
            boundary_mask.height()
        )));
    }
    let d = distance_transform(boundary_mask)?;
    let (w, h) = (d.width, d.height);
    let beta = ScalarField::from_fn(w, h, |x, y| {
        let strictly_interior = gt_mask.get(x, y) && !boundary_mask.get(x, y);
        if strictly_interior {
            0.0
        } else {
            d.get(x, y) * BETA_SCALE
        }
    });
    let kappa = ScalarField::from_fn(w, h, |x, y| {
        if gt_mask.get(x, y) {
            d.get(x, y) * KAPPA_SCALE
        } else {
            0.0
        }
    });
    FieldSet::new(d, beta, kappa)
}
