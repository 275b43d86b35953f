//! Digital terrain map: regular-grid heightfield with bilinear interpolation,
//! tangent-plane normals, and ray intersection.
//!
//! The surface between cell centers is the bilinear patch spanned by the four
//! surrounding samples, so elevation and normal queries come from one
//! consistent C0 surface. Rays are intersected by 2D DDA traversal of the
//! patch grid: within each patch the height difference along the ray is a
//! quadratic in the ray parameter, so a sign change (including an interior
//! dip through the quadratic vertex) cannot be missed, and the bracketing
//! interval is refined by bisection.

#[cfg(not(feature = "std"))]
use num_traits::Float;

use alloc::vec::Vec;
use nalgebra::{Unit, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Direction components smaller than this are treated as axis-parallel.
const DIR_EPS: f64 = 1e-15;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    X,
    Y,
}

impl core::fmt::Display for Axis {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            Axis::X => write!(f, "x"),
            Axis::Y => write!(f, "y"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TerrainError {
    #[error("{axis} = {value} outside the grid hull [{min}, {max}]")]
    OutOfHull {
        axis: Axis,
        value: f64,
        min: f64,
        max: f64,
    },
    #[error("ray exits the grid hull without reaching the surface")]
    NoIntersection,
    #[error("ray origin lies on or below the terrain surface")]
    InvalidOrigin,
    #[error("invalid terrain configuration: {0}")]
    InvalidConfiguration(&'static str),
}

/// Regular-grid heightfield. `origin_x`/`origin_y` are the world coordinates
/// of the center of cell (0, 0); cell (i, j) sits at
/// `(origin_x + i * cell_size, origin_y + j * cell_size)` with elevations
/// stored row-major (`j * width + i`). Immutable after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct Dtm {
    origin_x: f64,
    origin_y: f64,
    cell_size: f64,
    width: usize,
    height: usize,
    elevations: Vec<f64>,
}

/// Estimated ground point of a feature ray: the first intersection with the
/// DTM surface, the upward tangent-plane unit normal there, and the distance
/// from the ray origin.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundAnchor {
    pub point: Vector3<f64>,
    pub normal: Unit<Vector3<f64>>,
    pub depth: f64,
}

impl Dtm {
    pub fn new(
        origin_x: f64,
        origin_y: f64,
        cell_size: f64,
        width: usize,
        height: usize,
        elevations: Vec<f64>,
    ) -> Result<Self, TerrainError> {
        if !(cell_size > 0.0) || !cell_size.is_finite() {
            return Err(TerrainError::InvalidConfiguration("cell_size must be > 0"));
        }
        if width < 2 || height < 2 {
            return Err(TerrainError::InvalidConfiguration(
                "grid must be at least 2x2 cells",
            ));
        }
        if elevations.len() != width * height {
            return Err(TerrainError::InvalidConfiguration(
                "elevation array length does not match grid dimensions",
            ));
        }
        if elevations.iter().any(|h| !h.is_finite()) {
            return Err(TerrainError::InvalidConfiguration(
                "elevations must all be finite",
            ));
        }
        Ok(Self {
            origin_x,
            origin_y,
            cell_size,
            width,
            height,
            elevations,
        })
    }

    /// Builds a DTM by sampling `f(x, y)` at every cell center.
    pub fn from_fn(
        origin_x: f64,
        origin_y: f64,
        cell_size: f64,
        width: usize,
        height: usize,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Self, TerrainError> {
        let mut elevations = Vec::with_capacity(width * height);
        for j in 0..height {
            for i in 0..width {
                elevations.push(f(
                    origin_x + i as f64 * cell_size,
                    origin_y + j as f64 * cell_size,
                ));
            }
        }
        Self::new(origin_x, origin_y, cell_size, width, height, elevations)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn cell_size(&self) -> f64 {
        self.cell_size
    }

    pub fn origin(&self) -> (f64, f64) {
        (self.origin_x, self.origin_y)
    }

    pub fn elevations(&self) -> &[f64] {
        &self.elevations
    }

    pub fn cell(&self, i: usize, j: usize) -> f64 {
        self.elevations[j * self.width + i]
    }

    /// World-coordinate extent of the grid hull `(x_min, x_max, y_min, y_max)`.
    pub fn hull(&self) -> (f64, f64, f64, f64) {
        (
            self.origin_x,
            self.origin_x + (self.width - 1) as f64 * self.cell_size,
            self.origin_y,
            self.origin_y + (self.height - 1) as f64 * self.cell_size,
        )
    }

    pub fn min_elevation(&self) -> f64 {
        self.elevations.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_elevation(&self) -> f64 {
        self.elevations
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    fn check_in_hull(&self, x: f64, y: f64) -> Result<(), TerrainError> {
        let (x0, x1, y0, y1) = self.hull();
        if !(x0..=x1).contains(&x) {
            return Err(TerrainError::OutOfHull {
                axis: Axis::X,
                value: x,
                min: x0,
                max: x1,
            });
        }
        if !(y0..=y1).contains(&y) {
            return Err(TerrainError::OutOfHull {
                axis: Axis::Y,
                value: y,
                min: y0,
                max: y1,
            });
        }
        Ok(())
    }

    /// Patch index and fractional coordinates for an in-hull point. Points on
    /// the far hull edge fall in the last patch with fraction 1.
    fn locate(&self, x: f64, y: f64) -> (usize, usize, f64, f64) {
        let fx = (x - self.origin_x) / self.cell_size;
        let fy = (y - self.origin_y) / self.cell_size;
        let i = (fx.floor() as usize).min(self.width - 2);
        let j = (fy.floor() as usize).min(self.height - 2);
        (i, j, fx - i as f64, fy - j as f64)
    }

    fn patch_corners(&self, i: usize, j: usize) -> (f64, f64, f64, f64) {
        (
            self.cell(i, j),
            self.cell(i + 1, j),
            self.cell(i, j + 1),
            self.cell(i + 1, j + 1),
        )
    }

    /// Bilinear elevation at an in-hull point; exact at cell centers.
    pub fn elevation(&self, x: f64, y: f64) -> Result<f64, TerrainError> {
        self.check_in_hull(x, y)?;
        let (i, j, u, v) = self.locate(x, y);
        let (h00, h10, h01, h11) = self.patch_corners(i, j);
        Ok(h00 * (1.0 - u) * (1.0 - v) + h10 * u * (1.0 - v) + h01 * (1.0 - u) * v + h11 * u * v)
    }

    fn normal_in_patch(&self, i: usize, j: usize, u: f64, v: f64) -> Unit<Vector3<f64>> {
        let (h00, h10, h01, h11) = self.patch_corners(i, j);
        let dz_dx = ((h10 - h00) * (1.0 - v) + (h11 - h01) * v) / self.cell_size;
        let dz_dy = ((h01 - h00) * (1.0 - u) + (h11 - h10) * u) / self.cell_size;
        Unit::new_normalize(Vector3::new(-dz_dx, -dz_dy, 1.0))
    }

    /// Upward unit normal of the bilinear surface at a strictly interior point.
    pub fn surface_normal(&self, x: f64, y: f64) -> Result<Unit<Vector3<f64>>, TerrainError> {
        self.check_in_hull(x, y)?;
        let (i, j, u, v) = self.locate(x, y);
        Ok(self.normal_in_patch(i, j, u, v))
    }

    /// First intersection of the ray `origin + s * direction` (s > 0) with the
    /// terrain surface.
    ///
    /// Patches are visited in ray order by 2D grid traversal; inside each
    /// patch the vertical clearance is quadratic in `s`, so both endpoint sign
    /// changes and interior dips below the surface are bracketed, then refined
    /// by bisection to `1e-4 * cell_size` on `s` and on clearance.
    pub fn ray_intersect(
        &self,
        origin: Vector3<f64>,
        direction: Unit<Vector3<f64>>,
    ) -> Result<GroundAnchor, TerrainError> {
        let d = direction.into_inner();
        let (x0, x1, y0, y1) = self.hull();

        // Clearance above the surface along the ray.
        let clearance = |s: f64| -> Option<f64> {
            let p = origin + s * d;
            self.elevation(p.x, p.y).ok().map(|z| p.z - z)
        };

        // Parameter window over which the ray footprint stays in the hull.
        let mut s_lo = 0.0f64;
        let mut s_hi = f64::INFINITY;
        for (o, dir, lo, hi) in [(origin.x, d.x, x0, x1), (origin.y, d.y, y0, y1)] {
            if dir.abs() < DIR_EPS {
                if !(lo..=hi).contains(&o) {
                    return Err(TerrainError::NoIntersection);
                }
            } else {
                let (a, b) = ((lo - o) / dir, (hi - o) / dir);
                s_lo = s_lo.max(a.min(b));
                s_hi = s_hi.min(a.max(b));
            }
        }
        if s_hi <= s_lo {
            return Err(TerrainError::NoIntersection);
        }

        // Vertical ray: the footprint never moves, solve directly.
        if d.x.abs() < DIR_EPS && d.y.abs() < DIR_EPS {
            let z = self.elevation(origin.x, origin.y)?;
            if origin.z <= z {
                return Err(TerrainError::InvalidOrigin);
            }
            if d.z >= 0.0 {
                return Err(TerrainError::NoIntersection);
            }
            let s = (origin.z - z) / -d.z;
            let (i, j, u, v) = self.locate(origin.x, origin.y);
            return Ok(GroundAnchor {
                point: Vector3::new(origin.x, origin.y, z),
                normal: self.normal_in_patch(i, j, u, v),
                depth: s,
            });
        }

        let entry = clearance(s_lo).ok_or(TerrainError::NoIntersection)?;
        if entry < 0.0 {
            return if s_lo == 0.0 {
                Err(TerrainError::InvalidOrigin)
            } else {
                // The ray pierces the hull wall already underground; no
                // surface crossing is observable.
                Err(TerrainError::NoIntersection)
            };
        }
        if entry == 0.0 && s_lo == 0.0 {
            return Err(TerrainError::InvalidOrigin);
        }

        // Grid traversal state over patch indices.
        let start = origin + s_lo * d;
        let (mut i, mut j, _, _) = self.locate(start.x, start.y);
        let inv = |dir: f64| {
            if dir.abs() < DIR_EPS {
                f64::INFINITY
            } else {
                self.cell_size / dir.abs()
            }
        };
        let (t_delta_x, t_delta_y) = (inv(d.x), inv(d.y));
        let boundary = |idx: usize, dir: f64, org: f64, o: f64| -> f64 {
            if dir.abs() < DIR_EPS {
                f64::INFINITY
            } else if dir > 0.0 {
                (org + (idx + 1) as f64 * self.cell_size - o) / dir
            } else {
                (org + idx as f64 * self.cell_size - o) / dir
            }
        };
        let mut t_max_x = boundary(i, d.x, self.origin_x, origin.x);
        let mut t_max_y = boundary(j, d.y, self.origin_y, origin.y);

        let tol = 1e-4 * self.cell_size;
        let mut s_cur = s_lo;
        let mut g_cur = entry;

        loop {
            let s_end = t_max_x.min(t_max_y).min(s_hi);

            if let Some(bracket) = self.bracket_in_patch(i, j, origin, d, s_cur, s_end, g_cur) {
                // Refine well past the contract tolerance so the returned
                // point sits on both the ray and the surface to high
                // precision; downstream reprojections depend on it.
                let (mut lo, mut hi) = bracket;
                let mut mid = 0.5 * (lo + hi);
                for _ in 0..200 {
                    mid = 0.5 * (lo + hi);
                    let g = clearance(mid).unwrap_or(0.0);
                    if g > 0.0 {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                    if hi - lo <= tol && g.abs() <= 1e-9 {
                        break;
                    }
                }
                let p = origin + mid * d;
                let (pi, pj, u, v) = self.locate(p.x, p.y);
                return Ok(GroundAnchor {
                    point: p,
                    normal: self.normal_in_patch(pi, pj, u, v),
                    depth: mid,
                });
            }

            if s_end >= s_hi {
                return Err(TerrainError::NoIntersection);
            }
            s_cur = s_end;
            g_cur = clearance(s_cur).unwrap_or(g_cur);
            if t_max_x < t_max_y {
                t_max_x += t_delta_x;
                if d.x > 0.0 {
                    if i + 1 > self.width - 2 {
                        return Err(TerrainError::NoIntersection);
                    }
                    i += 1;
                } else {
                    if i == 0 {
                        return Err(TerrainError::NoIntersection);
                    }
                    i -= 1;
                }
            } else {
                t_max_y += t_delta_y;
                if d.y > 0.0 {
                    if j + 1 > self.height - 2 {
                        return Err(TerrainError::NoIntersection);
                    }
                    j += 1;
                } else {
                    if j == 0 {
                        return Err(TerrainError::NoIntersection);
                    }
                    j -= 1;
                }
            }
        }
    }

    /// Searches `[s_a, s_b]` inside patch (i, j) for the first crossing below
    /// the surface. The clearance is quadratic in `s`, so besides the endpoint
    /// signs only the quadratic vertex needs checking.
    fn bracket_in_patch(
        &self,
        i: usize,
        j: usize,
        origin: Vector3<f64>,
        d: Vector3<f64>,
        s_a: f64,
        s_b: f64,
        g_a: f64,
    ) -> Option<(f64, f64)> {
        if s_b <= s_a {
            return None;
        }
        if g_a < 0.0 {
            // Numerical slip at a patch boundary; the crossing is at s_a.
            return Some((s_a - 1e-9 * self.cell_size, s_a));
        }
        let g = |s: f64| -> f64 {
            let p = origin + s * d;
            let (u, v) = (
                (p.x - self.origin_x) / self.cell_size - i as f64,
                (p.y - self.origin_y) / self.cell_size - j as f64,
            );
            let (h00, h10, h01, h11) = self.patch_corners(i, j);
            let z = h00 * (1.0 - u) * (1.0 - v)
                + h10 * u * (1.0 - v)
                + h01 * (1.0 - u) * v
                + h11 * u * v;
            p.z - z
        };
        let g_b = g(s_b);
        if g_b < 0.0 {
            return Some((s_a, s_b));
        }
        // Interior dip: vertex of g(s) = g_a + g'(s_a) t + a t^2, t = s - s_a.
        let (h00, h10, h01, h11) = self.patch_corners(i, j);
        let gamma = h00 - h10 - h01 + h11;
        let (du, dv) = (d.x / self.cell_size, d.y / self.cell_size);
        let a = -gamma * du * dv;
        if a.abs() > 0.0 {
            let pa = origin + s_a * d;
            let (ua, va) = (
                (pa.x - self.origin_x) / self.cell_size - i as f64,
                (pa.y - self.origin_y) / self.cell_size - j as f64,
            );
            let dz_ds = (h10 - h00) * du + (h01 - h00) * dv + gamma * (ua * dv + va * du);
            let slope = d.z - dz_ds;
            let t_vertex = -slope / (2.0 * a);
            let s_vertex = s_a + t_vertex;
            if s_vertex > s_a && s_vertex < s_b && g(s_vertex) < 0.0 {
                return Some((s_a, s_vertex));
            }
        }
        None
    }
}

/// Terrain family for synthetic DTM generation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TerrainKind {
    Flat,
    Ramp,
    Sinusoidal,
    Fractal,
}

/// Parameters of a synthetic DTM.
///
/// `amplitude` is the elevation of a flat field, the rise over one
/// `wavelength` of the x-aligned ramp, the peak of the sinusoidal field
/// `A sin(2 pi x / L) sin(2 pi y / L)`, and the half-range of the fractal
/// relief. Fractal terrain is seeded midpoint displacement with displacement
/// scales rolled off below `wavelength`, rescaled so max - min = 2 amplitude.
#[derive(Debug, Clone, PartialEq)]
pub struct TerrainSpec {
    pub kind: TerrainKind,
    pub amplitude: f64,
    pub wavelength: f64,
    pub seed: u64,
    pub width: usize,
    pub height: usize,
    pub cell_size: f64,
    pub origin_x: f64,
    pub origin_y: f64,
}

/// Deterministically generates a DTM from a synthetic terrain description.
pub fn generate_synthetic_dtm(spec: &TerrainSpec) -> Result<Dtm, TerrainError> {
    if spec.amplitude < 0.0 {
        return Err(TerrainError::InvalidConfiguration("amplitude must be >= 0"));
    }
    if !(spec.wavelength > 0.0) {
        return Err(TerrainError::InvalidConfiguration("wavelength must be > 0"));
    }
    if spec.width < 2 || spec.height < 2 {
        return Err(TerrainError::InvalidConfiguration(
            "grid must be at least 2x2 cells",
        ));
    }
    match spec.kind {
        TerrainKind::Flat => Dtm::from_fn(
            spec.origin_x,
            spec.origin_y,
            spec.cell_size,
            spec.width,
            spec.height,
            |_, _| spec.amplitude,
        ),
        TerrainKind::Ramp => Dtm::from_fn(
            spec.origin_x,
            spec.origin_y,
            spec.cell_size,
            spec.width,
            spec.height,
            |x, _| spec.amplitude * (x - spec.origin_x) / spec.wavelength,
        ),
        TerrainKind::Sinusoidal => {
            let k = 2.0 * core::f64::consts::PI / spec.wavelength;
            Dtm::from_fn(
                spec.origin_x,
                spec.origin_y,
                spec.cell_size,
                spec.width,
                spec.height,
                |x, y| spec.amplitude * (k * x).sin() * (k * y).sin(),
            )
        }
        TerrainKind::Fractal => fractal_dtm(spec),
    }
}

/// Midpoint-displacement (diamond-square) relief, generated on the smallest
/// 2^k + 1 square covering the requested grid and cropped.
fn fractal_dtm(spec: &TerrainSpec) -> Result<Dtm, TerrainError> {
    let mut n = 2usize;
    while n + 1 < spec.width.max(spec.height) {
        n *= 2;
    }
    let size = n + 1;
    let mut grid = alloc::vec![0.0f64; size * size];
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    // Displacement amplitude for a feature span in meters: full amplitude at
    // and above `wavelength`, linear rolloff below it.
    let amp_for = |span_cells: usize| -> f64 {
        let span_m = span_cells as f64 * spec.cell_size;
        spec.amplitude * (span_m / spec.wavelength).min(1.0)
    };

    for corner in [0, n, n * size, n * size + n] {
        grid[corner] = amp_for(n) * rng.random_range(-1.0..1.0);
    }
    let mut step = n;
    while step >= 2 {
        let half = step / 2;
        let amp = amp_for(step);
        // Diamond step: square centers.
        for j in (half..size).step_by(step) {
            for i in (half..size).step_by(step) {
                let sum = grid[(j - half) * size + (i - half)]
                    + grid[(j - half) * size + (i + half)]
                    + grid[(j + half) * size + (i - half)]
                    + grid[(j + half) * size + (i + half)];
                grid[j * size + i] = sum / 4.0 + amp * rng.random_range(-1.0..1.0);
            }
        }
        // Square step: edge midpoints, averaging in-grid diamond neighbors.
        for j in (0..size).step_by(half) {
            let start = if (j / half) % 2 == 0 { half } else { 0 };
            for i in (start..size).step_by(step) {
                let mut sum = 0.0;
                let mut count = 0.0;
                if i >= half {
                    sum += grid[j * size + (i - half)];
                    count += 1.0;
                }
                if i + half < size {
                    sum += grid[j * size + (i + half)];
                    count += 1.0;
                }
                if j >= half {
                    sum += grid[(j - half) * size + i];
                    count += 1.0;
                }
                if j + half < size {
                    sum += grid[(j + half) * size + i];
                    count += 1.0;
                }
                grid[j * size + i] = sum / count + amp * rng.random_range(-1.0..1.0);
            }
        }
        step = half;
    }

    // Crop and rescale so the relief half-range equals the amplitude, centered
    // on zero.
    let mut elevations = Vec::with_capacity(spec.width * spec.height);
    for j in 0..spec.height {
        for i in 0..spec.width {
            elevations.push(grid[j * size + i]);
        }
    }
    let min = elevations.iter().copied().fold(f64::INFINITY, f64::min);
    let max = elevations.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max > min && spec.amplitude > 0.0 {
        let mid = 0.5 * (min + max);
        let scale = spec.amplitude / (0.5 * (max - min));
        for h in &mut elevations {
            *h = (*h - mid) * scale;
        }
    } else {
        for h in &mut elevations {
            *h = 0.0;
        }
    }
    Dtm::new(
        spec.origin_x,
        spec.origin_y,
        spec.cell_size,
        spec.width,
        spec.height,
        elevations,
    )
}
