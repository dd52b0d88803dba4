use crate::error::{Error, Result};

/// Uniform latitude/longitude partition of a bounding box into `h × w` cells.
///
/// Row `i` grows with latitude and column `j` with longitude. Cells are
/// half-open `[edge_k, edge_k+1)` except the last row/column, which is closed
/// so the box maximum is still in bounds.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridSpec {
    pub lat_min: f64,
    pub lat_max: f64,
    pub lon_min: f64,
    pub lon_max: f64,
    pub h: usize,
    pub w: usize,
}

/// Outcome of binning one coordinate pair.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Cell {
    Inside { i: usize, j: usize },
    OutOfBounds,
}

impl GridSpec {
    pub fn new(lat_min: f64, lat_max: f64, lon_min: f64, lon_max: f64, h: usize, w: usize) -> Result<Self> {
        let g = GridSpec {
            lat_min,
            lat_max,
            lon_min,
            lon_max,
            h,
            w,
        };
        g.validate()?;
        Ok(g)
    }

    /// Unit box, handy for synthetic data where coordinates do not matter.
    pub fn unit(h: usize, w: usize) -> Self {
        GridSpec {
            lat_min: 0.0,
            lat_max: 1.0,
            lon_min: 0.0,
            lon_max: 1.0,
            h,
            w,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.lat_min, self.lat_max, self.lon_min, self.lon_max]
            .iter()
            .all(|v| v.is_finite());
        if !finite || self.lat_min >= self.lat_max || self.lon_min >= self.lon_max {
            return Err(Error::InvalidArgument(format!(
                "grid bounding box must satisfy min < max: {self:?}"
            )));
        }
        if self.h == 0 || self.w == 0 {
            return Err(Error::InvalidArgument("grid needs at least one row and column".into()));
        }
        Ok(())
    }

    /// Number of regions `N = H·W`.
    pub fn regions(&self) -> usize {
        self.h * self.w
    }

    pub fn region_index(&self, i: usize, j: usize) -> usize {
        self.w * i + j
    }

    pub fn region_cell(&self, index: usize) -> (usize, usize) {
        (index / self.w, index % self.w)
    }

    fn bin(v: f64, lo: f64, hi: f64, n: usize) -> Option<usize> {
        if v < lo || v > hi {
            return None;
        }
        let k = ((v - lo) / (hi - lo) * n as f64).floor() as usize;
        Some(k.min(n - 1))
    }

    /// Bins a point. NaN coordinates are an error, the caller counts them.
    pub fn assign(&self, lon: f64, lat: f64) -> Result<Cell> {
        if lon.is_nan() || lat.is_nan() {
            return Err(Error::InvalidArgument(format!("NaN coordinate ({lon}, {lat})")));
        }
        Ok(
            match (
                Self::bin(lat, self.lat_min, self.lat_max, self.h),
                Self::bin(lon, self.lon_min, self.lon_max, self.w),
            ) {
                (Some(i), Some(j)) => Cell::Inside { i, j },
                _ => Cell::OutOfBounds,
            },
        )
    }

    /// Geographic center of cell `(i, j)` as `(lon, lat)`.
    pub fn cell_center(&self, i: usize, j: usize) -> (f64, f64) {
        let dlat = (self.lat_max - self.lat_min) / self.h as f64;
        let dlon = (self.lon_max - self.lon_min) / self.w as f64;
        (
            self.lon_min + (j as f64 + 0.5) * dlon,
            self.lat_min + (i as f64 + 0.5) * dlat,
        )
    }
}
