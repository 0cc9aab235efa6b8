//! Centroidal Voronoi tessellation of the behavior-descriptor box.
//!
//! Cells are defined by centroids obtained from Lloyd's k-means over uniform
//! samples of the descriptor box. A descriptor belongs to the cell of its
//! nearest centroid (Euclidean), ties going to the lowest index.

use std::fmt::Write as _;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, Stream};

/// Hard cap on Lloyd iterations.
pub const MAX_LLOYD_ITERATIONS: usize = 200;

/// Axis-aligned box, one `(low, high)` pair per dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bounds(pub Vec<(f64, f64)>);

impl Bounds {
    pub fn unit(dim: usize) -> Self {
        Bounds(vec![(0.0, 1.0); dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.0.is_empty() {
            return Err(Error::config(
                "bounds",
                "descriptor space needs at least one dimension",
            ));
        }
        for (i, &(lo, hi)) in self.0.iter().enumerate() {
            if !(lo.is_finite() && hi.is_finite() && hi > lo) {
                return Err(Error::config(
                    "bounds",
                    format!("dimension {i} is degenerate: [{lo}, {hi}]"),
                ));
            }
        }
        Ok(())
    }

    pub fn contains(&self, point: &[f64]) -> bool {
        point.len() == self.dim()
            && point
                .iter()
                .zip(&self.0)
                .all(|(&x, &(lo, hi))| x >= lo && x <= hi)
    }

    /// Clamps `point` into the box, coordinate-wise. NaN maps to the lower edge.
    pub fn clip(&self, point: &[f64]) -> Vec<f64> {
        point
            .iter()
            .zip(&self.0)
            .map(|(&x, &(lo, hi))| if x.is_nan() { lo } else { x.clamp(lo, hi) })
            .collect()
    }
}

/// Immutable set of cell centroids.
#[derive(Debug, Clone, PartialEq)]
pub struct CentroidSet {
    dim: usize,
    points: Vec<f64>,
    bounds: Bounds,
}

/// Convergence trace of a CVT build.
#[derive(Debug, Clone)]
pub struct CvtReport {
    /// Sum of squared sample-to-centroid distances after each assignment step.
    pub quantization_errors: Vec<f64>,
    pub converged: bool,
}

impl CvtReport {
    pub fn iterations(&self) -> usize {
        self.quantization_errors.len()
    }
}

/// Builds a CVT with `num_cells` centroids from `num_init_points` uniform
/// samples of `bounds`.
pub fn build_cvt(
    num_cells: usize,
    num_init_points: usize,
    bounds: &Bounds,
    seed: u64,
) -> Result<CentroidSet> {
    build_cvt_with_report(num_cells, num_init_points, bounds, seed).map(|(cs, _)| cs)
}

pub fn build_cvt_with_report(
    num_cells: usize,
    num_init_points: usize,
    bounds: &Bounds,
    seed: u64,
) -> Result<(CentroidSet, CvtReport)> {
    bounds.validate()?;
    if num_cells == 0 {
        return Err(Error::config("num_cells", "must be positive"));
    }
    if num_init_points < num_cells {
        return Err(Error::config(
            "cvt_init_points",
            format!("{num_init_points} samples cannot seed {num_cells} cells"),
        ));
    }
    let dim = bounds.dim();
    let mut rng = rng::stream(seed, Stream::Tessellation, 0);
    let mut samples = Vec::with_capacity(num_init_points * dim);
    for _ in 0..num_init_points {
        for &(lo, hi) in &bounds.0 {
            samples.push(rng.random_range(lo..hi));
        }
    }

    // Samples are i.i.d., so the first `num_cells` of them are a uniform pick.
    let mut centroids = samples[..num_cells * dim].to_vec();
    let mut assignment = vec![usize::MAX; num_init_points];
    let mut distances = vec![0.0f64; num_init_points];
    let mut errors = Vec::new();
    let mut converged = false;

    for _ in 0..MAX_LLOYD_ITERATIONS {
        let mut changed = false;
        let mut sse = 0.0;
        for (i, sample) in samples.chunks_exact(dim).enumerate() {
            let (best, d2) = nearest(&centroids, dim, sample);
            if assignment[i] != best {
                assignment[i] = best;
                changed = true;
            }
            distances[i] = d2;
            sse += d2;
        }
        errors.push(sse);
        if !changed {
            converged = true;
            break;
        }

        let mut sums = vec![0.0f64; num_cells * dim];
        let mut counts = vec![0usize; num_cells];
        for (sample, &c) in samples.chunks_exact(dim).zip(&assignment) {
            counts[c] += 1;
            for (s, &x) in sums[c * dim..(c + 1) * dim].iter_mut().zip(sample) {
                *s += x;
            }
        }
        for c in 0..num_cells {
            if counts[c] > 0 {
                let n = counts[c] as f64;
                for d in 0..dim {
                    centroids[c * dim + d] = sums[c * dim + d] / n;
                }
            }
        }

        // Empty clusters take the samples farthest from their centroids.
        let empty: Vec<usize> = (0..num_cells).filter(|&c| counts[c] == 0).collect();
        if !empty.is_empty() {
            let mut order: Vec<usize> = (0..num_init_points).collect();
            order.sort_by(|&a, &b| distances[b].total_cmp(&distances[a]).then(a.cmp(&b)));
            for (c, &s) in empty.iter().zip(&order) {
                centroids[c * dim..(c + 1) * dim].copy_from_slice(&samples[s * dim..(s + 1) * dim]);
                // Forces a re-assignment pass.
                assignment[s] = usize::MAX;
            }
        }
    }

    let cs = CentroidSet::new(centroids, bounds.clone())?;
    Ok((
        cs,
        CvtReport {
            quantization_errors: errors,
            converged,
        },
    ))
}

fn nearest(points: &[f64], dim: usize, query: &[f64]) -> (usize, f64) {
    let mut best = 0;
    let mut best_d2 = f64::INFINITY;
    for (k, c) in points.chunks_exact(dim).enumerate() {
        let d2: f64 = c.iter().zip(query).map(|(a, b)| (a - b) * (a - b)).sum();
        if d2 < best_d2 {
            best_d2 = d2;
            best = k;
        }
    }
    (best, best_d2)
}

impl CentroidSet {
    /// Wraps flat centroid coordinates, checking the set's invariants.
    pub fn new(points: Vec<f64>, bounds: Bounds) -> Result<Self> {
        bounds.validate()?;
        let dim = bounds.dim();
        if points.is_empty() || points.len() % dim != 0 {
            return Err(Error::contract(format!(
                "{} coordinates do not form {dim}-dimensional centroids",
                points.len()
            )));
        }
        for (k, c) in points.chunks_exact(dim).enumerate() {
            if !bounds.contains(c) {
                return Err(Error::contract(format!(
                    "centroid {k} lies outside the bounds"
                )));
            }
        }
        let mut sorted: Vec<&[f64]> = points.chunks_exact(dim).collect();
        sorted.sort_by(|a, b| {
            a.iter()
                .zip(b.iter())
                .map(|(x, y)| x.total_cmp(y))
                .find(|o| o.is_ne())
                .unwrap_or(std::cmp::Ordering::Equal)
        });
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::contract("duplicate centroids"));
        }
        Ok(CentroidSet {
            dim,
            points,
            bounds,
        })
    }

    pub fn len(&self) -> usize {
        self.points.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn bounds(&self) -> &Bounds {
        &self.bounds
    }

    pub fn centroid(&self, k: usize) -> &[f64] {
        &self.points[k * self.dim..(k + 1) * self.dim]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[f64]> {
        self.points.chunks_exact(self.dim)
    }

    /// Index of the cell containing `descriptor` (clipped into bounds first).
    pub fn cell_index(&self, descriptor: &[f64]) -> Result<usize> {
        if descriptor.len() != self.dim {
            return Err(Error::contract(format!(
                "descriptor has dimension {}, tessellation expects {}",
                descriptor.len(),
                self.dim
            )));
        }
        let clipped = self.bounds.clip(descriptor);
        Ok(nearest(&self.points, self.dim, &clipped).0)
    }

    /// One centroid per line, coordinates separated by single spaces.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        for c in self.iter() {
            let line: Vec<String> = c.iter().map(|x| x.to_string()).collect();
            let _ = writeln!(out, "{}", line.join(" "));
        }
        out
    }

    /// Parses the format written by [`CentroidSet::to_table`]. Blank lines and
    /// lines starting with `#` are skipped.
    pub fn from_table(text: &str, bounds: Bounds) -> Result<Self> {
        bounds.validate()?;
        let dim = bounds.dim();
        let mut points = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let coords = line
                .split_whitespace()
                .map(|tok| {
                    tok.parse::<f64>().map_err(|e| Error::Parse {
                        line: lineno + 1,
                        reason: format!("`{tok}`: {e}"),
                    })
                })
                .collect::<Result<Vec<f64>>>()?;
            if coords.len() != dim {
                return Err(Error::Parse {
                    line: lineno + 1,
                    reason: format!("expected {dim} coordinates, found {}", coords.len()),
                });
            }
            if !bounds.contains(&coords) {
                return Err(Error::Parse {
                    line: lineno + 1,
                    reason: "centroid outside bounds".into(),
                });
            }
            points.extend(coords);
        }
        if points.is_empty() {
            return Err(Error::Parse {
                line: 0,
                reason: "no centroids".into(),
            });
        }
        CentroidSet::new(points, bounds)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn brute_force_nearest(cs: &CentroidSet, q: &[f64]) -> usize {
        let dists: Vec<f64> = cs
            .iter()
            .map(|c| c.iter().zip(q).map(|(a, b)| (a - b).powi(2)).sum::<f64>())
            .collect();
        let min = dists.iter().cloned().fold(f64::INFINITY, f64::min);
        dists.iter().position(|&d| d == min).unwrap()
    }

    #[test]
    fn single_cell_is_sample_mean() {
        let bounds = Bounds::unit(2);
        let (cs, report) = build_cvt_with_report(1, 500, &bounds, 3).unwrap();
        assert!(report.converged);
        let mut rng = rng::stream(3, Stream::Tessellation, 0);
        let mut mean = [0.0; 2];
        for _ in 0..500 {
            for m in mean.iter_mut() {
                *m += rng.random_range(0.0..1.0) / 500.0;
            }
        }
        for d in 0..2 {
            assert!((cs.centroid(0)[d] - mean[d]).abs() < 1e-12);
        }
    }

    /// Independent Lloyd iteration on the same uniform 1-D problem.
    fn oracle_two_means_1d(samples: &[f64]) -> (f64, f64) {
        let (mut a, mut b) = (0.1, 0.9);
        for _ in 0..500 {
            let mid = 0.5 * (a + b);
            let (mut sa, mut na, mut sb, mut nb) = (0.0, 0.0, 0.0, 0.0);
            for &x in samples {
                if x <= mid {
                    sa += x;
                    na += 1.0;
                } else {
                    sb += x;
                    nb += 1.0;
                }
            }
            a = sa / na;
            b = sb / nb;
        }
        (a, b)
    }

    #[test]
    fn two_cells_on_unit_interval() {
        let bounds = Bounds::unit(1);
        let cs = build_cvt(2, 100_000, &bounds, 11).unwrap();
        let mut got = [cs.centroid(0)[0], cs.centroid(1)[0]];
        got.sort_by(f64::total_cmp);

        let mut rng = rng::stream(11, Stream::Tessellation, 0);
        let samples: Vec<f64> = (0..100_000).map(|_| rng.random_range(0.0..1.0)).collect();
        let (oa, ob) = oracle_two_means_1d(&samples);
        assert!((oa - 0.25).abs() < 0.02 && (ob - 0.75).abs() < 0.02);
        assert!((got[0] - 0.25).abs() < 0.02, "{got:?}");
        assert!((got[1] - 0.75).abs() < 0.02, "{got:?}");
        assert!((got[0] - oa).abs() < 1e-3 && (got[1] - ob).abs() < 1e-3);
    }

    #[test]
    fn lookup_matches_exhaustive_scan() {
        let bounds = Bounds(vec![(-1.0, 1.0), (0.0, 2.0)]);
        let cs = build_cvt(64, 2000, &bounds, 5).unwrap();
        let mut rng = rng::stream(99, Stream::Slot, 0);
        for _ in 0..2000 {
            let q = [rng.random_range(-1.0..1.0), rng.random_range(0.0..2.0)];
            assert_eq!(cs.cell_index(&q).unwrap(), brute_force_nearest(&cs, &q));
        }
        for k in 0..cs.len() {
            assert_eq!(cs.cell_index(cs.centroid(k)).unwrap(), k);
        }
    }

    #[test]
    fn ties_go_to_lowest_index() {
        let cs = CentroidSet::new(vec![0.0, 0.2, 0.4, 0.6, 0.8, 1.0], Bounds::unit(1)).unwrap();
        assert_eq!(cs.cell_index(&[0.3]).unwrap(), 1);
        assert_eq!(cs.cell_index(&[0.5]).unwrap(), 2);
    }

    #[test]
    fn out_of_bounds_descriptors_are_clipped() {
        let cs = CentroidSet::new(vec![0.1, 0.9], Bounds::unit(1)).unwrap();
        assert_eq!(cs.cell_index(&[7.0]).unwrap(), 1);
        assert_eq!(cs.cell_index(&[-3.0]).unwrap(), 0);
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let cs = CentroidSet::new(vec![0.1, 0.9], Bounds::unit(1)).unwrap();
        assert!(matches!(
            cs.cell_index(&[0.1, 0.2]),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn configuration_errors() {
        assert!(matches!(
            build_cvt(10, 5, &Bounds::unit(2), 0),
            Err(Error::Config { .. })
        ));
        assert!(matches!(
            build_cvt(2, 5, &Bounds(vec![(1.0, 1.0)]), 0),
            Err(Error::Config { .. })
        ));
    }

    #[test]
    fn quantization_error_never_increases() {
        let (_, report) = build_cvt_with_report(32, 3000, &Bounds::unit(2), 1).unwrap();
        assert!(report.iterations() > 2);
        for w in report.quantization_errors.windows(2) {
            assert!(w[1] <= w[0] * (1.0 + 1e-12), "{} -> {}", w[0], w[1]);
        }
    }

    #[test]
    fn table_round_trip_is_exact() {
        let bounds = Bounds::unit(2);
        let cs = build_cvt(16, 400, &bounds, 2).unwrap();
        let back = CentroidSet::from_table(&cs.to_table(), bounds).unwrap();
        assert_eq!(cs, back);
    }

    #[test]
    fn table_errors_carry_line_numbers() {
        let err = CentroidSet::from_table("0.1 0.2\n0.3 zz\n", Bounds::unit(2)).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
        let err = CentroidSet::from_table("0.1 0.2\n0.3\n", Bounds::unit(2)).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
    }
}
