//! Centripetal Catmull-Rom splines with arc-length parameterization.
//!
//! Segments are evaluated in cubic Hermite form with tangents derived from
//! the centripetal knot sequence (`alpha = 0.5`). The first and last
//! segments use reflected phantom control points, so a two-point input gives
//! a straight line traversed at constant speed.

const GL_NODES: [f64; 5] = [
    -0.906_179_845_938_664,
    -0.538_469_310_105_683_1,
    0.0,
    0.538_469_310_105_683_1,
    0.906_179_845_938_664,
];
const GL_WEIGHTS: [f64; 5] = [
    0.236_926_885_056_189_1,
    0.478_628_670_499_366_5,
    0.568_888_888_888_888_9,
    0.478_628_670_499_366_5,
    0.236_926_885_056_189_1,
];
/// Arc-length table resolution per segment.
const SUBDIVISIONS: usize = 8;
const MAX_REFINE: u32 = 24;

type Pt<const D: usize> = [f64; D];

fn sub<const D: usize>(a: &Pt<D>, b: &Pt<D>) -> Pt<D> {
    std::array::from_fn(|i| a[i] - b[i])
}

fn norm<const D: usize>(a: &Pt<D>) -> f64 {
    a.iter().map(|c| c * c).sum::<f64>().sqrt()
}

pub(crate) fn distance<const D: usize>(a: &Pt<D>, b: &Pt<D>) -> f64 {
    norm(&sub(a, b))
}

#[derive(Debug, Clone)]
struct Segment<const D: usize> {
    p1: Pt<D>,
    p2: Pt<D>,
    m1: Pt<D>,
    m2: Pt<D>,
    /// Cumulative arc length at `k / SUBDIVISIONS`, `k = 0..=SUBDIVISIONS`.
    table: [f64; SUBDIVISIONS + 1],
}

impl<const D: usize> Segment<D> {
    fn eval(&self, s: f64) -> Pt<D> {
        let (s2, s3) = (s * s, s * s * s);
        let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
        let h10 = s3 - 2.0 * s2 + s;
        let h01 = -2.0 * s3 + 3.0 * s2;
        let h11 = s3 - s2;
        std::array::from_fn(|i| h00 * self.p1[i] + h10 * self.m1[i] + h01 * self.p2[i] + h11 * self.m2[i])
    }

    fn speed(&self, s: f64) -> f64 {
        let s2 = s * s;
        let d00 = 6.0 * s2 - 6.0 * s;
        let d10 = 3.0 * s2 - 4.0 * s + 1.0;
        let d01 = -6.0 * s2 + 6.0 * s;
        let d11 = 3.0 * s2 - 2.0 * s;
        let d: Pt<D> = std::array::from_fn(|i| {
            d00 * self.p1[i] + d10 * self.m1[i] + d01 * self.p2[i] + d11 * self.m2[i]
        });
        norm(&d)
    }

    fn length_between(&self, a: f64, b: f64) -> f64 {
        let (half, mid) = (0.5 * (b - a), 0.5 * (a + b));
        GL_NODES
            .iter()
            .zip(GL_WEIGHTS)
            .map(|(x, w)| w * self.speed(mid + half * x))
            .sum::<f64>()
            * half
    }

    /// Adaptive Gauss-Legendre: halves until both halves agree with the whole.
    fn adaptive_length(&self, a: f64, b: f64) -> f64 {
        self.refine(a, b, self.length_between(a, b), 0)
    }

    fn refine(&self, a: f64, b: f64, whole: f64, depth: u32) -> f64 {
        let mid = 0.5 * (a + b);
        let (left, right) = (self.length_between(a, mid), self.length_between(mid, b));
        let sum = left + right;
        if depth >= MAX_REFINE || (sum - whole).abs() <= 1e-13 * sum.max(1e-300) {
            return sum;
        }
        self.refine(a, mid, left, depth + 1) + self.refine(mid, b, right, depth + 1)
    }

    fn length(&self) -> f64 {
        self.table[SUBDIVISIONS]
    }

    /// Parameter `s` at which the arc length from the segment start is `target`.
    fn param_at(&self, target: f64) -> f64 {
        if target <= 0.0 {
            return 0.0;
        }
        if target >= self.length() {
            return 1.0;
        }
        let k = self.table.partition_point(|l| *l <= target).clamp(1, SUBDIVISIONS) - 1;
        let h = 1.0 / SUBDIVISIONS as f64;
        let (mut lo, mut hi) = (k as f64 * h, (k + 1) as f64 * h);
        let base = self.table[k];
        let anchor = lo;
        let mut s = lo + h * (target - base) / (self.table[k + 1] - base).max(f64::MIN_POSITIVE);
        for _ in 0..60 {
            let f = base + self.adaptive_length(anchor, s) - target;
            if f.abs() < 1e-13 {
                break;
            }
            if f > 0.0 {
                hi = s;
            } else {
                lo = s;
            }
            let speed = self.speed(s);
            let newton = s - f / speed;
            s = if speed > 1e-12 && newton > lo && newton < hi {
                newton
            } else {
                0.5 * (lo + hi)
            };
            if hi - lo < 1e-15 {
                break;
            }
        }
        s
    }
}

/// An interpolating spline through a point sequence.
#[derive(Debug, Clone)]
pub struct CatmullRom<const D: usize> {
    segments: Vec<Segment<D>>,
    /// Arc length at the start of each segment, plus the total at the end.
    offsets: Vec<f64>,
}

impl<const D: usize> CatmullRom<D> {
    /// `None` when fewer than two distinct points remain after dropping
    /// consecutive duplicates.
    pub fn new(points: &[Pt<D>]) -> Option<Self> {
        let mut pts: Vec<Pt<D>> = Vec::with_capacity(points.len());
        for p in points {
            if pts.last() != Some(p) {
                pts.push(*p);
            }
        }
        if pts.len() < 2 {
            return None;
        }
        let n = pts.len();
        let reflect = |a: &Pt<D>, b: &Pt<D>| -> Pt<D> { std::array::from_fn(|i| 2.0 * a[i] - b[i]) };
        let mut ctrl = Vec::with_capacity(n + 2);
        ctrl.push(reflect(&pts[0], &pts[1]));
        ctrl.extend_from_slice(&pts);
        ctrl.push(reflect(&pts[n - 1], &pts[n - 2]));

        let mut segments = Vec::with_capacity(n - 1);
        let mut offsets = Vec::with_capacity(n);
        let mut total = 0.0;
        for w in ctrl.windows(4) {
            let (p0, p1, p2, p3) = (&w[0], &w[1], &w[2], &w[3]);
            let d01 = distance(p0, p1).sqrt();
            let d12 = distance(p1, p2).sqrt();
            let d23 = distance(p2, p3).sqrt();
            let (t0, t1) = (0.0, d01);
            let t2 = t1 + d12;
            let t3 = t2 + d23;
            let dt = t2 - t1;
            let m1: Pt<D> = std::array::from_fn(|i| {
                dt * ((p1[i] - p0[i]) / (t1 - t0) - (p2[i] - p0[i]) / (t2 - t0)
                    + (p2[i] - p1[i]) / (t2 - t1))
            });
            let m2: Pt<D> = std::array::from_fn(|i| {
                dt * ((p2[i] - p1[i]) / (t2 - t1) - (p3[i] - p1[i]) / (t3 - t1)
                    + (p3[i] - p2[i]) / (t3 - t2))
            });
            let mut seg = Segment {
                p1: *p1,
                p2: *p2,
                m1,
                m2,
                table: [0.0; SUBDIVISIONS + 1],
            };
            let h = 1.0 / SUBDIVISIONS as f64;
            for k in 0..SUBDIVISIONS {
                seg.table[k + 1] = seg.table[k] + seg.adaptive_length(k as f64 * h, (k + 1) as f64 * h);
            }
            offsets.push(total);
            total += seg.length();
            segments.push(seg);
        }
        offsets.push(total);
        Some(Self { segments, offsets })
    }

    pub fn segment_count(&self) -> usize {
        self.segments.len()
    }

    pub fn total_length(&self) -> f64 {
        *self.offsets.last().unwrap_or(&0.0)
    }

    /// Point on segment `i` at local parameter `s ∈ [0, 1]`.
    pub fn eval(&self, segment: usize, s: f64) -> Pt<D> {
        self.segments[segment].eval(s)
    }

    pub fn point_at_length(&self, length: f64) -> Pt<D> {
        let i = self
            .offsets
            .partition_point(|o| *o <= length)
            .clamp(1, self.segments.len())
            - 1;
        let seg = &self.segments[i];
        if length >= self.offsets[i + 1] {
            return seg.p2;
        }
        seg.eval(seg.param_at(length - self.offsets[i]))
    }

    /// Samples every `step` units of arc length; both endpoints are included
    /// exactly. A final gap shorter than `step` is kept as is.
    pub fn sample_uniform(&self, step: f64) -> Vec<Pt<D>> {
        let total = self.total_length();
        let n = (total / step + 1e-9).floor() as usize;
        let mut out: Vec<Pt<D>> = (0..=n).map(|k| self.point_at_length(k as f64 * step)).collect();
        let first = self.segments[0].p1;
        let last = self.segments[self.segments.len() - 1].p2;
        out[0] = first;
        if total - n as f64 * step > 1e-9 * total.max(1.0) {
            out.push(last);
        } else {
            out[n] = last;
        }
        out
    }
}
