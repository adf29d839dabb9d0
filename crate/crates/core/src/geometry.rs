/*
Copyright 2026 The ctmp Authors

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
*/
//! Planar primitives: points, segments and oriented rectangles.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Wraps an angle into `(-π, π]`. `-π` maps to `π` so every angle has one
/// representative.
pub fn normalize_angle(a: f64) -> f64 {
    let mut r = a.rem_euclid(2.0 * PI);
    if r > PI {
        r -= 2.0 * PI;
    }
    if r <= -PI {
        r += 2.0 * PI;
    }
    r
}

#[derive(Clone, Copy, Debug, PartialEq, Default, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn dist(self, o: Point) -> f64 {
        (self.x - o.x).hypot(self.y - o.y)
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    fn sub(self, o: Point) -> Point {
        Point::new(self.x - o.x, self.y - o.y)
    }

    fn cross(self, o: Point) -> f64 {
        self.x * o.y - self.y * o.x
    }

    pub fn lerp(self, o: Point, s: f64) -> Point {
        Point::new(self.x + (o.x - self.x) * s, self.y + (o.y - self.y) * s)
    }
}

impl From<[f64; 2]> for Point {
    fn from(v: [f64; 2]) -> Self {
        Point::new(v[0], v[1])
    }
}

/// Sign of the turn a→b→c, with a small tolerance treated as collinear.
fn orient(a: Point, b: Point, c: Point) -> i8 {
    let v = b.sub(a).cross(c.sub(a));
    if v > 1e-12 {
        1
    } else if v < -1e-12 {
        -1
    } else {
        0
    }
}

fn on_segment(a: Point, b: Point, p: Point) -> bool {
    p.x >= a.x.min(b.x) - 1e-12
        && p.x <= a.x.max(b.x) + 1e-12
        && p.y >= a.y.min(b.y) - 1e-12
        && p.y <= a.y.max(b.y) + 1e-12
}

/// Closed segment/segment intersection test (touching counts).
pub fn segments_intersect(a: Point, b: Point, c: Point, d: Point) -> bool {
    let o1 = orient(a, b, c);
    let o2 = orient(a, b, d);
    let o3 = orient(c, d, a);
    let o4 = orient(c, d, b);
    if o1 != o2 && o3 != o4 {
        return true;
    }
    (o1 == 0 && on_segment(a, b, c))
        || (o2 == 0 && on_segment(a, b, d))
        || (o3 == 0 && on_segment(c, d, a))
        || (o4 == 0 && on_segment(c, d, b))
}

/// An oriented rectangle. `size` holds the full side lengths.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Rect {
    pub center: [f64; 2],
    pub size: [f64; 2],
    #[serde(default)]
    pub angle: f64,
}

impl Rect {
    pub fn axis_aligned(min: Point, max: Point) -> Self {
        Rect {
            center: [(min.x + max.x) * 0.5, (min.y + max.y) * 0.5],
            size: [max.x - min.x, max.y - min.y],
            angle: 0.0,
        }
    }

    pub fn corners(&self) -> [Point; 4] {
        let (s, c) = self.angle.sin_cos();
        let hx = self.size[0] * 0.5;
        let hy = self.size[1] * 0.5;
        let at = |lx: f64, ly: f64| {
            Point::new(
                self.center[0] + c * lx - s * ly,
                self.center[1] + s * lx + c * ly,
            )
        };
        [at(-hx, -hy), at(hx, -hy), at(hx, hy), at(-hx, hy)]
    }

    pub fn contains(&self, p: Point) -> bool {
        let (s, c) = self.angle.sin_cos();
        let dx = p.x - self.center[0];
        let dy = p.y - self.center[1];
        let lx = c * dx + s * dy;
        let ly = -s * dx + c * dy;
        lx.abs() <= self.size[0] * 0.5 && ly.abs() <= self.size[1] * 0.5
    }

    /// Radius of the circumscribed circle.
    pub fn circumradius(&self) -> f64 {
        0.5 * self.size[0].hypot(self.size[1])
    }

    /// True if the closed segment `a`-`b` touches the rectangle. The segment
    /// is clipped against the slabs of the rectangle frame.
    pub fn intersects_segment(&self, a: Point, b: Point) -> bool {
        let (hx, hy) = (self.size[0] * 0.5, self.size[1] * 0.5);
        let (mut ax, mut ay) = (a.x - self.center[0], a.y - self.center[1]);
        let (mut bx, mut by) = (b.x - self.center[0], b.y - self.center[1]);
        if self.angle != 0.0 {
            let (s, c) = self.angle.sin_cos();
            (ax, ay) = (c * ax + s * ay, -s * ax + c * ay);
            (bx, by) = (c * bx + s * by, -s * bx + c * by);
        }
        if ax.max(bx) < -hx || ax.min(bx) > hx || ay.max(by) < -hy || ay.min(by) > hy {
            return false;
        }
        let (mut lo, mut hi) = (0.0f64, 1.0f64);
        for (p0, d, h) in [(ax, bx - ax, hx), (ay, by - ay, hy)] {
            if d == 0.0 {
                if p0.abs() > h {
                    return false;
                }
                continue;
            }
            let (mut t0, mut t1) = ((-h - p0) / d, (h - p0) / d);
            if t0 > t1 {
                std::mem::swap(&mut t0, &mut t1);
            }
            lo = lo.max(t0);
            hi = hi.min(t1);
            if lo > hi {
                return false;
            }
        }
        true
    }
}

pub fn point_segment_distance(p: Point, a: Point, b: Point) -> f64 {
    let ab = b.sub(a);
    let len2 = ab.x * ab.x + ab.y * ab.y;
    if len2 == 0.0 {
        return p.dist(a);
    }
    let ap = p.sub(a);
    let s = ((ap.x * ab.x + ap.y * ab.y) / len2).clamp(0.0, 1.0);
    p.dist(a.lerp(b, s))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalize_is_half_open() {
        assert_eq!(normalize_angle(-PI), PI);
        assert_eq!(normalize_angle(PI), PI);
        assert!((normalize_angle(3.0 * PI) - PI).abs() < 1e-12);
        assert!((normalize_angle(-0.5) + 0.5).abs() < 1e-15);
        assert!((normalize_angle(2.0 * PI + 0.25) - 0.25).abs() < 1e-12);
    }

    #[test]
    fn segment_crossings() {
        let p = Point::new;
        assert!(segments_intersect(p(0., 0.), p(1., 1.), p(0., 1.), p(1., 0.)));
        assert!(!segments_intersect(p(0., 0.), p(1., 0.), p(0., 1.), p(1., 1.)));
        // collinear overlap
        assert!(segments_intersect(p(0., 0.), p(2., 0.), p(1., 0.), p(3., 0.)));
        // collinear disjoint
        assert!(!segments_intersect(p(0., 0.), p(1., 0.), p(2., 0.), p(3., 0.)));
    }

    #[test]
    fn rect_segment() {
        let r = Rect {
            center: [1.0, 1.0],
            size: [0.4, 0.2],
            angle: std::f64::consts::FRAC_PI_2,
        };
        // rotated: spans x in [0.9,1.1], y in [0.8,1.2]
        assert!(r.intersects_segment(Point::new(0.0, 1.15), Point::new(2.0, 1.15)));
        assert!(!r.intersects_segment(Point::new(0.0, 1.25), Point::new(2.0, 1.25)));
        // fully inside
        assert!(r.intersects_segment(Point::new(1.0, 0.95), Point::new(1.0, 1.05)));
    }

    // oracle: containment of either endpoint or a crossing with one of the sides
    fn rect_segment_by_sides(r: &Rect, a: Point, b: Point) -> bool {
        let k = r.corners();
        r.contains(a) || r.contains(b) || (0..4).any(|i| segments_intersect(a, b, k[i], k[(i + 1) % 4]))
    }

    #[test]
    fn rect_segment_matches_side_oracle() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let mut hits = 0;
        for i in 0..20000 {
            let r = Rect {
                center: [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)],
                size: [rng.random_range(0.05..1.0), rng.random_range(0.05..1.0)],
                angle: if i % 3 == 0 { 0.0 } else { rng.random_range(-PI..PI) },
            };
            let a = Point::new(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
            let b = if i % 7 == 0 {
                a
            } else {
                Point::new(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0))
            };
            let got = r.intersects_segment(a, b);
            assert_eq!(got, rect_segment_by_sides(&r, a, b), "{r:?} {a:?} {b:?}");
            hits += got as u32;
        }
        assert!(hits > 2000);
    }
}
