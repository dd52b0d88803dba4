//! Origin-destination count tensors.
//!
//! An OD tensor for one interval has shape `N×H×W`: channel `d = W·i_d + j_d`
//! is the destination region and the spatial position is the origin region.

use super::grid::{Cell, GridSpec};
use super::trips::TripRecord;
use crate::error::{Error, Result};
use crate::tensor::{ops, Tensor};

/// Trips dropped while tensorizing.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct BinStats {
    pub counted: usize,
    pub out_of_bounds: usize,
    pub rejected_nan: usize,
}

impl BinStats {
    pub fn merge(&mut self, other: BinStats) {
        self.counted += other.counted;
        self.out_of_bounds += other.out_of_bounds;
        self.rejected_nan += other.rejected_nan;
    }
}

pub fn empty_od(grid: &GridSpec) -> Tensor {
    Tensor::zeros([grid.regions(), grid.h, grid.w])
}

/// Adds one trip into `counts`; returns whether it was in bounds.
pub fn add_trip(counts: &mut Tensor, grid: &GridSpec, trip: &TripRecord, stats: &mut BinStats) {
    let origin = grid.assign(trip.pickup_lon, trip.pickup_lat);
    let dest = grid.assign(trip.dropoff_lon, trip.dropoff_lat);
    match (origin, dest) {
        (Ok(Cell::Inside { i: io, j: jo }), Ok(Cell::Inside { i: id, j: jd })) => {
            let d = grid.region_index(id, jd);
            let k = (d * grid.h + io) * grid.w + jo;
            counts.data_mut()[k] += 1.0;
            stats.counted += 1;
        }
        (Err(_), _) | (_, Err(_)) => stats.rejected_nan += 1,
        _ => stats.out_of_bounds += 1,
    }
}

/// Counts the trips of a single interval. Trips with either endpoint outside
/// the grid are excluded.
pub fn build_od_tensor(records: &[TripRecord], grid: &GridSpec) -> (Tensor, BinStats) {
    let mut counts = empty_od(grid);
    let mut stats = BinStats::default();
    for r in records {
        add_trip(&mut counts, grid, r, &mut stats);
    }
    (counts, stats)
}

/// Destination-major view: `out[o, i_d, j_d] = x[d, i_o, j_o]`.
pub fn transpose_od(x: &Tensor) -> Result<Tensor> {
    ops::transpose_od(x)
}

fn check_od(x: &Tensor) -> Result<(usize, usize, usize)> {
    let s = x.shape();
    if s.len() != 3 || s[0] != s[1] * s[2] {
        return Err(Error::shape("od", format!("expected N×H×W with N = H·W, got {s:?}")));
    }
    Ok((s[0], s[1], s[2]))
}

/// Departures per origin cell: the channelwise sum, an `H×W` map.
pub fn origin_demand(x: &Tensor) -> Result<Tensor> {
    let (n, h, w) = check_od(x)?;
    let mut out = Tensor::zeros([h, w]);
    for d in 0..n {
        for (o, v) in out.data_mut().iter_mut().zip(x.channel(d)) {
            *o += v;
        }
    }
    Ok(out)
}

/// Arrivals per destination cell: the spatial sum of each channel.
pub fn destination_demand(x: &Tensor) -> Result<Tensor> {
    let (n, h, w) = check_od(x)?;
    Tensor::new([h, w], (0..n).map(|d| x.channel(d).iter().sum()).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::trips::parse_datetime;

    fn trip(grid: &GridSpec, from: (usize, usize), to: (usize, usize)) -> TripRecord {
        let (plon, plat) = grid.cell_center(from.0, from.1);
        let (dlon, dlat) = grid.cell_center(to.0, to.1);
        TripRecord {
            pickup_time: parse_datetime("2014-05-01 08:00:00").unwrap(),
            pickup_lon: plon,
            pickup_lat: plat,
            dropoff_lon: dlon,
            dropoff_lat: dlat,
        }
    }

    #[test]
    fn empty_interval_is_zero() {
        let g = GridSpec::unit(3, 2);
        let (x, stats) = build_od_tensor(&[], &g);
        assert_eq!(x.shape(), &[6, 3, 2]);
        assert_eq!(x.sum(), 0.0);
        assert_eq!(stats, BinStats::default());
    }

    #[test]
    fn identical_trips_accumulate() {
        let g = GridSpec::unit(3, 2);
        let t = trip(&g, (0, 1), (2, 0));
        let (x, _) = build_od_tensor(&[t.clone(), t.clone(), t], &g);
        let d = g.region_index(2, 0);
        assert_eq!(x.get(&[d, 0, 1]), 3.0);
        assert_eq!(x.sum(), 3.0);
    }

    #[test]
    fn out_of_bounds_and_nan_trips_are_excluded() {
        let g = GridSpec::unit(2, 2);
        let mut far = trip(&g, (0, 0), (1, 1));
        far.dropoff_lat = 3.0;
        let mut nan = trip(&g, (0, 0), (1, 1));
        nan.pickup_lon = f64::NAN;
        let (x, stats) = build_od_tensor(&[far, nan, trip(&g, (1, 1), (0, 0))], &g);
        assert_eq!(x.sum(), 1.0);
        assert_eq!(stats, BinStats { counted: 1, out_of_bounds: 1, rejected_nan: 1 });
    }

    #[test]
    fn origin_demand_of_two_region_example() {
        let (a, b, c, d) = (1.0, 2.0, 5.0, 7.0);
        let x = Tensor::new([2, 2, 1], vec![a, b, c, d]).unwrap();
        let o = origin_demand(&x).unwrap();
        assert_eq!(o.data(), &[a + c, b + d]);
        assert_eq!(origin_demand(&empty_od(&GridSpec::unit(2, 1))).unwrap().sum(), 0.0);
    }

    #[test]
    fn intra_region_demand_is_its_own_transpose() {
        let g = GridSpec::unit(2, 3);
        let trips: Vec<_> = (0..6)
            .flat_map(|r| {
                let c = g.region_cell(r);
                std::iter::repeat_n(trip(&g, c, c), r + 1)
            })
            .collect();
        let (x, _) = build_od_tensor(&trips, &g);
        assert_eq!(transpose_od(&x).unwrap(), x);
    }
}
