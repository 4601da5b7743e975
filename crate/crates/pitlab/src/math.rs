//! Small numeric helpers shared across the stack: angle wrapping, planar
//! rotations, deterministic summation, and rectangle geometry used by the
//! contact model and the judge.

/// Wrap an angle to the half-open interval `(-pi, pi]`.
pub fn wrap_to_pi(theta: f64) -> f64 {
    let two_pi = 2.0 * std::f64::consts::PI;
    let mut a = theta % two_pi;
    if a > std::f64::consts::PI {
        a -= two_pi;
    } else if a <= -std::f64::consts::PI {
        a += two_pi;
    }
    a
}

/// Planar rotation by `alpha`: column-major `[[cos, -sin], [sin, cos]]`
/// acting on column vectors, i.e. the usual counter-clockwise rotation.
#[derive(Debug, Clone, Copy)]
pub struct Rot2 {
    pub cos: f64,
    pub sin: f64,
}

impl Rot2 {
    pub fn new(alpha: f64) -> Self {
        Self { cos: alpha.cos(), sin: alpha.sin() }
    }

    /// Rotate a vector by `+alpha`.
    pub fn apply(&self, v: [f64; 2]) -> [f64; 2] {
        [self.cos * v[0] - self.sin * v[1], self.sin * v[0] + self.cos * v[1]]
    }

    /// Rotate a vector by `-alpha` (the inverse rotation).
    pub fn apply_inv(&self, v: [f64; 2]) -> [f64; 2] {
        [self.cos * v[0] + self.sin * v[1], -self.sin * v[0] + self.cos * v[1]]
    }
}

/// Cross product z-component of two planar vectors.
pub fn cross2(a: [f64; 2], b: [f64; 2]) -> f64 {
    a[0] * b[1] - a[1] * b[0]
}

/// Deterministic pairwise (tree) summation.
///
/// The reduction tree depends only on the slice length, so the result is a
/// pure function of the element order and is reproducible regardless of how
/// the caller sharded the work that produced the elements.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    match xs.len() {
        0 => 0.0,
        1 => xs[0],
        2 => xs[0] + xs[1],
        n if n <= 16 => xs.iter().sum(),
        n => {
            let mid = n / 2;
            pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
        }
    }
}

/// An oriented rectangle (vehicle footprint): centre, heading, full length
/// along the heading and full width across it.
#[derive(Debug, Clone, Copy)]
pub struct Obb {
    pub cx: f64,
    pub cy: f64,
    pub heading: f64,
    pub length: f64,
    pub width: f64,
}

impl Obb {
    pub fn corners(&self) -> [[f64; 2]; 4] {
        let r = Rot2::new(self.heading);
        let hl = 0.5 * self.length;
        let hw = 0.5 * self.width;
        let local = [[hl, hw], [hl, -hw], [-hl, -hw], [-hl, hw]];
        local.map(|p| {
            let w = r.apply(p);
            [self.cx + w[0], self.cy + w[1]]
        })
    }

    /// Signed distance from a world point to this rectangle (negative inside).
    pub fn signed_distance(&self, p: [f64; 2]) -> f64 {
        let r = Rot2::new(self.heading);
        let local = r.apply_inv([p[0] - self.cx, p[1] - self.cy]);
        let dx = local[0].abs() - 0.5 * self.length;
        let dy = local[1].abs() - 0.5 * self.width;
        if dx > 0.0 || dy > 0.0 {
            let ox = dx.max(0.0);
            let oy = dy.max(0.0);
            (ox * ox + oy * oy).sqrt()
        } else {
            dx.max(dy)
        }
    }
}

/// Separating-axis overlap test for two oriented rectangles.
pub fn obb_overlap(a: &Obb, b: &Obb) -> bool {
    let ca = a.corners();
    let cb = b.corners();
    let axes = [
        [a.heading.cos(), a.heading.sin()],
        [-a.heading.sin(), a.heading.cos()],
        [b.heading.cos(), b.heading.sin()],
        [-b.heading.sin(), b.heading.cos()],
    ];
    for axis in axes {
        let proj = |c: &[[f64; 2]; 4]| {
            let mut lo = f64::INFINITY;
            let mut hi = f64::NEG_INFINITY;
            for p in c {
                let d = p[0] * axis[0] + p[1] * axis[1];
                lo = lo.min(d);
                hi = hi.max(d);
            }
            (lo, hi)
        };
        let (alo, ahi) = proj(&ca);
        let (blo, bhi) = proj(&cb);
        if ahi < blo || bhi < alo {
            return false;
        }
    }
    true
}
