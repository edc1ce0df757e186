use std::collections::HashMap;

use super::{dist, Point3};

type Cell = (i64, i64, i64);

/// Uniform hash grid over a point set. Queries return point indices into
/// the slice the index was built from, in ascending order.
#[derive(Debug, Clone)]
pub struct SpatialIndex {
    cell: f64,
    cells: HashMap<Cell, Vec<usize>>,
    points: Vec<Point3>,
    bounds: Option<(Cell, Cell)>,
}

impl SpatialIndex {
    /// Panics if `cell` is not a positive finite number.
    pub fn new(points: &[Point3], cell: f64) -> Self {
        assert!(cell > 0.0 && cell.is_finite(), "cell size must be positive");
        let mut cells: HashMap<Cell, Vec<usize>> = HashMap::new();
        let mut bounds: Option<(Cell, Cell)> = None;
        for (i, p) in points.iter().enumerate() {
            let c = cell_of(p, cell);
            cells.entry(c).or_default().push(i);
            bounds = Some(match bounds {
                None => (c, c),
                Some((lo, hi)) => (
                    (lo.0.min(c.0), lo.1.min(c.1), lo.2.min(c.2)),
                    (hi.0.max(c.0), hi.1.max(c.1), hi.2.max(c.2)),
                ),
            });
        }
        SpatialIndex {
            cell,
            cells,
            points: points.to_vec(),
            bounds,
        }
    }

    pub fn cell_size(&self) -> f64 {
        self.cell
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Point3] {
        &self.points
    }

    /// Indices of all points `p` with `|p - q| <= radius`, ascending.
    pub fn within(&self, q: &Point3, radius: f64) -> Vec<usize> {
        let mut out = Vec::new();
        self.for_each_within(q, radius, |i| out.push(i));
        out.sort_unstable();
        out
    }

    pub fn count_within(&self, q: &Point3, radius: f64) -> usize {
        let mut n = 0;
        self.for_each_within(q, radius, |_| n += 1);
        n
    }

    fn for_each_within(&self, q: &Point3, radius: f64, mut f: impl FnMut(usize)) {
        if self.points.is_empty() || radius < 0.0 {
            return;
        }
        let lo = cell_of(&[q[0] - radius, q[1] - radius, q[2] - radius], self.cell);
        let hi = cell_of(&[q[0] + radius, q[1] + radius, q[2] + radius], self.cell);
        for cx in lo.0..=hi.0 {
            for cy in lo.1..=hi.1 {
                for cz in lo.2..=hi.2 {
                    if let Some(ids) = self.cells.get(&(cx, cy, cz)) {
                        for &i in ids {
                            if dist(&self.points[i], q) <= radius {
                                f(i);
                            }
                        }
                    }
                }
            }
        }
    }

    /// Exact nearest neighbour via expanding shells of cells. Returns the
    /// lowest index among equidistant points.
    pub fn nearest(&self, q: &Point3) -> Option<(usize, f64)> {
        self.nearest_within(q, f64::INFINITY)
    }

    /// Like [`nearest`](Self::nearest) but gives up once every remaining
    /// candidate is provably farther than `bound`.
    pub fn nearest_within(&self, q: &Point3, bound: f64) -> Option<(usize, f64)> {
        let (lo, hi) = self.bounds?;
        let c = cell_of(q, self.cell);
        let gap = |v: i64, l: i64, h: i64| (l - v).max(v - h).max(0);
        let gaps = [
            gap(c.0, lo.0, hi.0),
            gap(c.1, lo.1, hi.1),
            gap(c.2, lo.2, hi.2),
        ];
        // Rings below `first` and above `last` contain no occupied cells.
        let first = gaps.into_iter().max().unwrap_or(0);
        let last = [
            c.0 - lo.0,
            hi.0 - c.0,
            c.1 - lo.1,
            hi.1 - c.1,
            c.2 - lo.2,
            hi.2 - c.2,
        ]
        .into_iter()
        .max()
        .unwrap_or(0)
        .max(first);

        let mut best: Option<(usize, f64)> = None;
        let consider = |best: &mut Option<(usize, f64)>, i: usize| {
            let d = dist(&self.points[i], q);
            let better = match *best {
                None => true,
                Some((bi, bd)) => d < bd || (d == bd && i < bi),
            };
            if better {
                *best = Some((i, d));
            }
        };
        for ring in first..=last {
            // Anything outside the (2*ring-1)^3 block around c is at least
            // (ring - 1) * cell away from q.
            let floor = (ring - 1).max(0) as f64 * self.cell;
            let limit = best.map_or(bound, |(_, d)| d.min(bound));
            if floor > limit {
                break;
            }
            let shell_cells = if ring == 0 { 1 } else { 24 * ring * ring + 2 };
            if shell_cells as usize > self.cells.len() {
                // Sparse remainder: scanning every occupied cell at this ring
                // or beyond is cheaper than walking the shells.
                for (k, ids) in &self.cells {
                    let cheb = (k.0 - c.0)
                        .abs()
                        .max((k.1 - c.1).abs())
                        .max((k.2 - c.2).abs());
                    if cheb >= ring {
                        ids.iter().for_each(|&i| consider(&mut best, i));
                    }
                }
                break;
            }
            self.visit_shell(c, ring, &mut |i| consider(&mut best, i));
        }
        best.filter(|(_, d)| *d <= bound)
    }

    fn visit_shell(&self, c: Cell, ring: i64, f: &mut impl FnMut(usize)) {
        let mut cell = |dx: i64, dy: i64, dz: i64| {
            if let Some(ids) = self.cells.get(&(c.0 + dx, c.1 + dy, c.2 + dz)) {
                ids.iter().for_each(|&i| f(i));
            }
        };
        if ring == 0 {
            cell(0, 0, 0);
            return;
        }
        for dx in -ring..=ring {
            for dy in -ring..=ring {
                if dx.abs() == ring || dy.abs() == ring {
                    for dz in -ring..=ring {
                        cell(dx, dy, dz);
                    }
                } else {
                    cell(dx, dy, -ring);
                    cell(dx, dy, ring);
                }
            }
        }
    }
}

fn cell_of(p: &Point3, cell: f64) -> Cell {
    (
        (p[0] / cell).floor() as i64,
        (p[1] / cell).floor() as i64,
        (p[2] / cell).floor() as i64,
    )
}
