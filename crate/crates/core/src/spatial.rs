//! Planar geometry, geo-located datasets and a grid-bucket neighbour index.

use std::collections::{HashMap, HashSet};

use crate::error::{GeoError, Result};

/// Identifier of a variable inside a (possibly multivariate) dataset.
pub type VariableId = u8;

/// A point in the plane, coordinates in meters (x east, y north).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Location {
    pub x: f64,
    pub y: f64,
}

impl Location {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub fn distance(&self, other: &Location) -> f64 {
        distance(*self, *other)
    }

    pub fn translated(&self, dx: f64, dy: f64) -> Self {
        Self::new(self.x + dx, self.y + dy)
    }

    fn key(&self) -> (u64, u64) {
        // -0.0 and 0.0 are the same place
        ((self.x + 0.0).to_bits(), (self.y + 0.0).to_bits())
    }
}

/// Euclidean distance between two locations.
#[inline]
pub fn distance(a: Location, b: Location) -> f64 {
    let dx = a.x - b.x;
    let dy = a.y - b.y;
    (dx * dx + dy * dy).sqrt()
}

/// One geo-located measurement.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation {
    pub point_id: u64,
    pub location: Location,
    pub value: f64,
    pub variable: VariableId,
}

impl Observation {
    pub fn new(point_id: u64, location: Location, value: f64, variable: VariableId) -> Self {
        Self {
            point_id,
            location,
            value,
            variable,
        }
    }
}

/// Ordered collection of observations of one or more variables.
///
/// Construction checks that coordinates and values are finite and that
/// `point_id` is unique within each variable.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SpatialDataset {
    points: Vec<Observation>,
}

impl SpatialDataset {
    pub fn new(points: Vec<Observation>) -> Result<Self> {
        let mut seen: HashSet<(VariableId, u64)> = HashSet::with_capacity(points.len());
        for p in &points {
            if !p.location.is_finite() {
                return Err(GeoError::InvalidDataset(format!(
                    "point {} has non-finite coordinates",
                    p.point_id
                )));
            }
            if !p.value.is_finite() {
                return Err(GeoError::InvalidDataset(format!(
                    "point {} has a non-finite value",
                    p.point_id
                )));
            }
            if !seen.insert((p.variable, p.point_id)) {
                return Err(GeoError::InvalidDataset(format!(
                    "duplicate point_id {} for variable {}",
                    p.point_id, p.variable
                )));
            }
        }
        Ok(Self { points })
    }

    /// Single-variable dataset (variable id 0) from `(point_id, location, value)` triples.
    pub fn univariate<I>(rows: I) -> Result<Self>
    where
        I: IntoIterator<Item = (u64, Location, f64)>,
    {
        Self::new(
            rows.into_iter()
                .map(|(id, loc, v)| Observation::new(id, loc, v, 0))
                .collect(),
        )
    }

    /// Concatenates datasets; the result is validated like any other dataset.
    pub fn concat<'a, I>(parts: I) -> Result<Self>
    where
        I: IntoIterator<Item = &'a SpatialDataset>,
    {
        let points = parts
            .into_iter()
            .flat_map(|d| d.points.iter().copied())
            .collect();
        Self::new(points)
    }

    pub fn points(&self) -> &[Observation] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn values(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.value).collect()
    }

    pub fn locations(&self) -> Vec<Location> {
        self.points.iter().map(|p| p.location).collect()
    }

    /// Distinct variable ids, ascending.
    pub fn variables(&self) -> Vec<VariableId> {
        let mut v: Vec<VariableId> = self.points.iter().map(|p| p.variable).collect();
        v.sort_unstable();
        v.dedup();
        v
    }

    /// Subset holding only the observations of `variable`, in original order.
    pub fn variable(&self, variable: VariableId) -> SpatialDataset {
        SpatialDataset {
            points: self
                .points
                .iter()
                .filter(|p| p.variable == variable)
                .copied()
                .collect(),
        }
    }

    /// Copy with every value replaced by `f(value)`.
    pub fn map_values(&self, f: impl Fn(f64) -> f64) -> Result<SpatialDataset> {
        SpatialDataset::new(
            self.points
                .iter()
                .map(|p| Observation {
                    value: f(p.value),
                    ..*p
                })
                .collect(),
        )
    }

    pub fn translated(&self, dx: f64, dy: f64) -> SpatialDataset {
        SpatialDataset {
            points: self
                .points
                .iter()
                .map(|p| Observation {
                    location: p.location.translated(dx, dy),
                    ..*p
                })
                .collect(),
        }
    }

    /// True iff every location in the dataset carries every variable id.
    pub fn is_collocated(&self) -> bool {
        let vars = self.variables();
        let mut at: HashMap<(u64, u64), HashSet<VariableId>> = HashMap::new();
        for p in &self.points {
            at.entry(p.location.key()).or_default().insert(p.variable);
        }
        at.values().all(|s| s.len() == vars.len())
    }

    /// Sample variance (n - 1 denominator) of the values.
    pub fn sample_variance(&self) -> f64 {
        sample_variance(self.points.iter().map(|p| p.value))
    }
}

pub(crate) fn sample_variance(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let (n, sum) = values.clone().fold((0usize, 0.0), |(n, s), v| (n + 1, s + v));
    if n < 2 {
        return 0.0;
    }
    let mean = sum / n as f64;
    values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64
}

/// A point returned by a neighbour query.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    /// Position of the point in the indexed dataset.
    pub index: usize,
    pub point_id: u64,
    pub distance: f64,
}

/// Immutable grid-bucket index over the locations of a dataset.
///
/// Queries return exactly what a brute-force scan over all points returns.
#[derive(Debug, Clone)]
pub struct SpatialIndex {
    origin: Location,
    cell: f64,
    nx: usize,
    ny: usize,
    /// CSR layout: points of cell `c` are `entries[starts[c]..starts[c + 1]]`
    starts: Vec<usize>,
    entries: Vec<usize>,
    locations: Vec<Location>,
    ids: Vec<u64>,
}

impl SpatialIndex {
    pub fn build(ds: &SpatialDataset) -> Result<Self> {
        Self::from_parts(
            ds.points.iter().map(|p| p.location).collect(),
            ds.points.iter().map(|p| p.point_id).collect(),
        )
    }

    pub(crate) fn from_parts(locations: Vec<Location>, ids: Vec<u64>) -> Result<Self> {
        if locations.is_empty() {
            return Err(GeoError::EmptyDataset);
        }
        debug_assert_eq!(locations.len(), ids.len());
        let n = locations.len();
        let (mut min_x, mut min_y) = (f64::INFINITY, f64::INFINITY);
        let (mut max_x, mut max_y) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
        for l in &locations {
            min_x = min_x.min(l.x);
            min_y = min_y.min(l.y);
            max_x = max_x.max(l.x);
            max_y = max_y.max(l.y);
        }
        let (w, h) = (max_x - min_x, max_y - min_y);
        // about two points per cell on average
        let span = w.max(h);
        let mut cell = if w > 0.0 && h > 0.0 {
            (2.0 * w * h / n as f64).sqrt()
        } else {
            span / (n as f64 / 2.0).ceil()
        };
        if !(cell > 0.0) || !cell.is_finite() {
            cell = 1.0;
        }
        let nx = ((w / cell).floor() as usize + 1).max(1);
        let ny = ((h / cell).floor() as usize + 1).max(1);
        let origin = Location::new(min_x, min_y);

        let mut counts = vec![0usize; nx * ny + 1];
        let cells: Vec<usize> = locations
            .iter()
            .map(|l| {
                let i = (((l.x - min_x) / cell).floor() as usize).min(nx - 1);
                let j = (((l.y - min_y) / cell).floor() as usize).min(ny - 1);
                j * nx + i
            })
            .collect();
        for &c in &cells {
            counts[c + 1] += 1;
        }
        for c in 0..nx * ny {
            counts[c + 1] += counts[c];
        }
        let starts = counts.clone();
        let mut fill = counts;
        let mut entries = vec![0usize; n];
        for (idx, &c) in cells.iter().enumerate() {
            entries[fill[c]] = idx;
            fill[c] += 1;
        }
        Ok(Self {
            origin,
            cell,
            nx,
            ny,
            starts,
            entries,
            locations,
            ids,
        })
    }

    pub fn len(&self) -> usize {
        self.locations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.locations.is_empty()
    }

    /// All points with `distance <= radius`, sorted by distance then point_id,
    /// truncated to the `max_count` nearest when given.
    ///
    /// `radius` may be `f64::INFINITY` for a pure k-nearest query.
    pub fn neighbors_within(
        &self,
        center: Location,
        radius: f64,
        max_count: Option<usize>,
    ) -> Vec<Neighbor> {
        let mut found: Vec<Neighbor> = Vec::new();
        if max_count == Some(0) || radius.is_nan() || radius < 0.0 {
            return found;
        }
        let ci = ((center.x - self.origin.x) / self.cell).floor();
        let cj = ((center.y - self.origin.y) / self.cell).floor();
        // clamp far-away centers; the ring lower bound stays conservative
        let lim = (self.nx.max(self.ny) as f64) * 4.0 + 4.0;
        let ci = ci.clamp(-lim, lim) as i64;
        let cj = cj.clamp(-lim, lim) as i64;
        let (nx, ny) = (self.nx as i64, self.ny as i64);
        let dist_to_box = |c: i64, n: i64| -> i64 {
            if c < 0 {
                -c
            } else if c >= n {
                c - n + 1
            } else {
                0
            }
        };
        let first_ring = dist_to_box(ci, nx).max(dist_to_box(cj, ny));
        let last_ring = (ci).max(nx - 1 - ci).max(cj).max(ny - 1 - cj).max(0);

        let mut ring = first_ring;
        while ring <= last_ring {
            let lower_bound = ((ring - 1).max(0) as f64) * self.cell;
            if lower_bound > radius {
                break;
            }
            if let Some(k) = max_count {
                if found.len() >= k && kth_distance(&found, k) < lower_bound {
                    break;
                }
            }
            self.visit_ring(ci, cj, ring, |idx| {
                let d = distance(center, self.locations[idx]);
                if d <= radius {
                    found.push(Neighbor {
                        index: idx,
                        point_id: self.ids[idx],
                        distance: d,
                    });
                }
            });
            ring += 1;
        }
        found.sort_by(|a, b| {
            a.distance
                .total_cmp(&b.distance)
                .then(a.point_id.cmp(&b.point_id))
                .then(a.index.cmp(&b.index))
        });
        if let Some(k) = max_count {
            found.truncate(k);
        }
        found
    }

    /// Calls `f(index, distance)` for every point within `radius`, in no particular order.
    pub(crate) fn for_each_within(&self, center: Location, radius: f64, mut f: impl FnMut(usize, f64)) {
        let r_cells = (radius / self.cell).ceil();
        let lo_i = (((center.x - radius - self.origin.x) / self.cell).floor()).max(0.0);
        let lo_j = (((center.y - radius - self.origin.y) / self.cell).floor()).max(0.0);
        let hi_i = (((center.x + radius - self.origin.x) / self.cell).floor()).min((self.nx - 1) as f64);
        let hi_j = (((center.y + radius - self.origin.y) / self.cell).floor()).min((self.ny - 1) as f64);
        if !r_cells.is_finite() || hi_i < lo_i || hi_j < lo_j {
            if !r_cells.is_finite() {
                for (idx, loc) in self.locations.iter().enumerate() {
                    f(idx, distance(center, *loc));
                }
            }
            return;
        }
        for j in lo_j as usize..=hi_j as usize {
            for i in lo_i as usize..=hi_i as usize {
                let c = j * self.nx + i;
                for &idx in &self.entries[self.starts[c]..self.starts[c + 1]] {
                    let d = distance(center, self.locations[idx]);
                    if d <= radius {
                        f(idx, d);
                    }
                }
            }
        }
    }

    fn visit_ring(&self, ci: i64, cj: i64, ring: i64, mut f: impl FnMut(usize)) {
        let (nx, ny) = (self.nx as i64, self.ny as i64);
        let mut visit_cell = |i: i64, j: i64| {
            if i >= 0 && i < nx && j >= 0 && j < ny {
                let c = (j * nx + i) as usize;
                for &idx in &self.entries[self.starts[c]..self.starts[c + 1]] {
                    f(idx);
                }
            }
        };
        if ring == 0 {
            visit_cell(ci, cj);
            return;
        }
        let i_lo = (ci - ring).max(0);
        let i_hi = (ci + ring).min(nx - 1);
        for i in i_lo..=i_hi {
            visit_cell(i, cj - ring);
            visit_cell(i, cj + ring);
        }
        let j_lo = (cj - ring + 1).max(0);
        let j_hi = (cj + ring - 1).min(ny - 1);
        for j in j_lo..=j_hi {
            visit_cell(ci - ring, j);
            visit_cell(ci + ring, j);
        }
    }
}

fn kth_distance(found: &[Neighbor], k: usize) -> f64 {
    let mut d: Vec<f64> = found.iter().map(|n| n.distance).collect();
    let (_, kth, _) = d.select_nth_unstable_by(k - 1, |a, b| a.total_cmp(b));
    *kth
}

/// Builds an index over a dataset; fails on an empty dataset.
pub fn build_spatial_index(ds: &SpatialDataset) -> Result<SpatialIndex> {
    SpatialIndex::build(ds)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn brute(
        ds: &SpatialDataset,
        center: Location,
        radius: f64,
        max_count: Option<usize>,
    ) -> Vec<Neighbor> {
        let mut v: Vec<Neighbor> = ds
            .points()
            .iter()
            .enumerate()
            .filter_map(|(i, p)| {
                let d = distance(center, p.location);
                (d <= radius).then_some(Neighbor {
                    index: i,
                    point_id: p.point_id,
                    distance: d,
                })
            })
            .collect();
        v.sort_by(|a, b| {
            a.distance
                .total_cmp(&b.distance)
                .then(a.point_id.cmp(&b.point_id))
                .then(a.index.cmp(&b.index))
        });
        if let Some(k) = max_count {
            v.truncate(k);
        }
        v
    }

    #[test]
    fn distance_examples() {
        assert_eq!(distance(Location::new(0.0, 0.0), Location::new(0.0, 0.0)), 0.0);
        assert_eq!(distance(Location::new(0.0, 0.0), Location::new(3.0, 4.0)), 5.0);
        assert_eq!(
            distance(Location::new(100.0, 200.0), Location::new(400.0, 600.0)),
            500.0
        );
    }

    #[test]
    fn empty_dataset_is_rejected() {
        let ds = SpatialDataset::default();
        assert_eq!(build_spatial_index(&ds).unwrap_err(), GeoError::EmptyDataset);
    }

    #[test]
    fn single_point_index() {
        let ds = SpatialDataset::univariate([(7, Location::new(5.0, 5.0), 1.0)]).unwrap();
        let idx = build_spatial_index(&ds).unwrap();
        let n = idx.neighbors_within(Location::new(5.0, 5.0), 1.0, None);
        assert_eq!(n.len(), 1);
        assert_eq!(n[0].point_id, 7);
        assert_eq!(n[0].distance, 0.0);
        assert!(idx.neighbors_within(Location::new(50.0, 50.0), 1.0, None).is_empty());
    }

    #[test]
    fn truncation_keeps_nearest() {
        let ds = SpatialDataset::univariate([
            (1, Location::new(10.0, 0.0), 0.0),
            (2, Location::new(20.0, 0.0), 0.0),
            (3, Location::new(30.0, 0.0), 0.0),
        ])
        .unwrap();
        let idx = build_spatial_index(&ds).unwrap();
        let n = idx.neighbors_within(Location::new(0.0, 0.0), 25.0, Some(1));
        assert_eq!(n.len(), 1);
        assert_eq!(n[0].point_id, 1);
        assert_eq!(n[0].distance, 10.0);
    }

    #[test]
    fn duplicates_are_kept_and_ties_break_on_id() {
        let ds = SpatialDataset::univariate([
            (9, Location::new(1.0, 1.0), 0.0),
            (4, Location::new(1.0, 1.0), 2.0),
            (5, Location::new(3.0, 1.0), 2.0),
        ])
        .unwrap();
        let idx = build_spatial_index(&ds).unwrap();
        let n = idx.neighbors_within(Location::new(1.0, 1.0), 0.5, None);
        assert_eq!(n.iter().map(|n| n.point_id).collect::<Vec<_>>(), vec![4, 9]);
        let k = idx.neighbors_within(Location::new(1.0, 1.0), 10.0, Some(1));
        assert_eq!(k[0].point_id, 4);
    }

    #[test]
    fn duplicate_ids_within_variable_rejected() {
        let r = SpatialDataset::univariate([
            (1, Location::new(0.0, 0.0), 0.0),
            (1, Location::new(1.0, 0.0), 0.0),
        ]);
        assert!(matches!(r, Err(GeoError::InvalidDataset(_))));
        let ok = SpatialDataset::new(vec![
            Observation::new(1, Location::new(0.0, 0.0), 0.0, 0),
            Observation::new(1, Location::new(0.0, 0.0), 0.0, 1),
        ]);
        assert!(ok.is_ok());
        assert!(ok.unwrap().is_collocated());
    }

    #[test]
    fn non_finite_rejected() {
        assert!(SpatialDataset::univariate([(1, Location::new(f64::NAN, 0.0), 0.0)]).is_err());
        assert!(SpatialDataset::univariate([(1, Location::new(0.0, 0.0), f64::INFINITY)]).is_err());
    }

    #[test]
    fn collocation_detection() {
        let ds = SpatialDataset::new(vec![
            Observation::new(1, Location::new(0.0, 0.0), 0.0, 0),
            Observation::new(1, Location::new(0.0, 0.0), 0.0, 1),
            Observation::new(2, Location::new(1.0, 0.0), 0.0, 0),
        ])
        .unwrap();
        assert!(!ds.is_collocated());
    }

    #[test]
    fn uniform_points_match_brute_force() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let ds = SpatialDataset::univariate((0..1000).map(|i| {
            (
                i as u64,
                Location::new(rng.random_range(0.0..8000.0), rng.random_range(0.0..8000.0)),
                0.0,
            )
        }))
        .unwrap();
        let idx = build_spatial_index(&ds).unwrap();
        for q in 0..200 {
            let c = Location::new(rng.random_range(-500.0..8500.0), rng.random_range(-500.0..8500.0));
            let r = [1.0, 100.0, 250.0, 1000.0, 20000.0][q % 5];
            let k = [None, Some(1), Some(50), Some(2000)][q % 4];
            assert_eq!(idx.neighbors_within(c, r, k), brute(&ds, c, r, k));
        }
        // pure k-nearest with unbounded radius
        let c = Location::new(4000.0, 4000.0);
        assert_eq!(
            idx.neighbors_within(c, f64::INFINITY, Some(50)),
            brute(&ds, c, f64::INFINITY, Some(50))
        );
    }

    #[test]
    fn far_center_is_handled() {
        let ds = SpatialDataset::univariate([
            (1, Location::new(0.0, 0.0), 0.0),
            (2, Location::new(10.0, 10.0), 0.0),
        ])
        .unwrap();
        let idx = build_spatial_index(&ds).unwrap();
        let c = Location::new(1e6, -1e6);
        assert_eq!(
            idx.neighbors_within(c, f64::INFINITY, Some(1)),
            brute(&ds, c, f64::INFINITY, Some(1))
        );
    }

    #[test]
    fn for_each_within_matches_filter() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let ds = SpatialDataset::univariate((0..500).map(|i| {
            (
                i as u64,
                Location::new(rng.random_range(0.0..1000.0), rng.random_range(0.0..1000.0)),
                0.0,
            )
        }))
        .unwrap();
        let idx = build_spatial_index(&ds).unwrap();
        for _ in 0..50 {
            let c = Location::new(rng.random_range(0.0..1000.0), rng.random_range(0.0..1000.0));
            let mut got = Vec::new();
            idx.for_each_within(c, 120.0, |i, _| got.push(i));
            got.sort_unstable();
            let mut want: Vec<usize> = brute(&ds, c, 120.0, None).iter().map(|n| n.index).collect();
            want.sort_unstable();
            assert_eq!(got, want);
        }
    }
}
