//! Planar convex hulls and the hull defect of a sampled point set.

use std::collections::HashMap;

pub type Point2 = [f64; 2];

fn cross(o: Point2, a: Point2, b: Point2) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

/// Counter-clockwise convex hull (Andrew's monotone chain), without collinear
/// vertices.
pub fn convex_hull(points: &[Point2]) -> Vec<Point2> {
    let mut pts: Vec<Point2> = points.to_vec();
    pts.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let chain = |iter: &mut dyn Iterator<Item = &Point2>| {
        let mut c: Vec<Point2> = Vec::new();
        for &p in iter {
            while c.len() >= 2 && cross(c[c.len() - 2], c[c.len() - 1], p) <= 0.0 {
                c.pop();
            }
            c.push(p);
        }
        c.pop();
        c
    };
    let mut hull = chain(&mut pts.iter());
    hull.extend(chain(&mut pts.iter().rev()));
    hull
}

/// Point-in-polygon test for a counter-clockwise convex polygon; boundary
/// points count as inside.
pub fn in_convex_polygon(hull: &[Point2], p: Point2) -> bool {
    if hull.len() < 3 {
        return false;
    }
    (0..hull.len()).all(|i| cross(hull[i], hull[(i + 1) % hull.len()], p) >= -1e-14)
}

/// Nearest-neighbour index over planar points on uniform buckets.
pub struct BucketIndex<'a> {
    points: &'a [Point2],
    cell: f64,
    buckets: HashMap<(i64, i64), Vec<usize>>,
    key_lo: (i64, i64),
    key_hi: (i64, i64),
}

impl<'a> BucketIndex<'a> {
    pub fn new(points: &'a [Point2], cell: f64) -> Self {
        let mut buckets: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
        let (mut key_lo, mut key_hi) = ((i64::MAX, i64::MAX), (i64::MIN, i64::MIN));
        for (i, p) in points.iter().enumerate() {
            let k = Self::key_of(p, cell);
            key_lo = (key_lo.0.min(k.0), key_lo.1.min(k.1));
            key_hi = (key_hi.0.max(k.0), key_hi.1.max(k.1));
            buckets.entry(k).or_default().push(i);
        }
        Self {
            points,
            cell,
            buckets,
            key_lo,
            key_hi,
        }
    }

    fn key_of(p: &Point2, cell: f64) -> (i64, i64) {
        ((p[0] / cell).floor() as i64, (p[1] / cell).floor() as i64)
    }

    /// Distance to the nearest indexed point, searching rings outward.
    pub fn nearest(&self, q: Point2) -> Option<(f64, usize)> {
        if self.points.is_empty() {
            return None;
        }
        let (cx, cy) = Self::key_of(&q, self.cell);
        let mut best: Option<(f64, usize)> = None;
        let max_ring = [
            cx - self.key_lo.0,
            self.key_hi.0 - cx,
            cy - self.key_lo.1,
            self.key_hi.1 - cy,
        ]
        .into_iter()
        .fold(0, i64::max);
        for r in 0..=max_ring {
            if let Some((d, _)) = best {
                if (r - 1) as f64 * self.cell > d {
                    break;
                }
            }
            for dx in -r..=r {
                for dy in -r..=r {
                    if dx.abs() != r && dy.abs() != r {
                        continue;
                    }
                    if let Some(list) = self.buckets.get(&(cx + dx, cy + dy)) {
                        for &i in list {
                            let p = self.points[i];
                            let d = ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)).sqrt();
                            if best.is_none_or(|(bd, bi)| d < bd || (d == bd && i < bi)) {
                                best = Some((d, i));
                            }
                        }
                    }
                }
            }
        }
        best
    }
}

/// Largest distance from a probe point inside the convex hull to the nearest
/// sample, over a probe grid of the given spacing. Returns the defect and the
/// probe attaining it.
pub fn hull_defect(points: &[Point2], probe_spacing: f64) -> (f64, Option<Point2>) {
    let hull = convex_hull(points);
    if hull.len() < 3 {
        return (0.0, None);
    }
    let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    for p in &hull {
        for k in 0..2 {
            lo[k] = lo[k].min(p[k]);
            hi[k] = hi[k].max(p[k]);
        }
    }
    let index = BucketIndex::new(points, probe_spacing * 2.0);
    let nx = ((hi[0] - lo[0]) / probe_spacing).ceil() as usize + 1;
    let ny = ((hi[1] - lo[1]) / probe_spacing).ceil() as usize + 1;
    let mut defect = 0.0;
    let mut arg = None;
    for i in 0..nx {
        for j in 0..ny {
            let q = [
                lo[0] + i as f64 * probe_spacing,
                lo[1] + j as f64 * probe_spacing,
            ];
            if !in_convex_polygon(&hull, q) {
                continue;
            }
            if let Some((d, _)) = index.nearest(q) {
                if d > defect {
                    defect = d;
                    arg = Some(q);
                }
            }
        }
    }
    (defect, arg)
}
