//! Squared-distance functions restricted to one closest-feature case, written
//! generically so that the same code yields values (`f64`) and exact second
//! derivatives (hyper-dual numbers over the 12 stacked coordinates).

use nalgebra::{SMatrix, SVector};
use num_dual::{hessian, Dual2SVec64, DualNum};

pub type Grad12 = SVector<f64, 12>;
pub type Hess12 = SMatrix<f64, 12, 12>;

type P3<D> = [D; 3];

#[inline]
fn sub<D: DualNum + Copy>(a: P3<D>, b: P3<D>) -> P3<D> {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

#[inline]
fn dot<D: DualNum + Copy>(a: P3<D>, b: P3<D>) -> D {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[inline]
fn cross<D: DualNum + Copy>(a: P3<D>, b: P3<D>) -> P3<D> {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

pub fn point_point<D: DualNum + Copy>(p: P3<D>, q: P3<D>) -> D {
    let d = sub(p, q);
    dot(d, d)
}

/// Squared distance from `p` to the infinite line through `e0, e1`.
pub fn point_line<D: DualNum + Copy>(p: P3<D>, e0: P3<D>, e1: P3<D>) -> D {
    let e = sub(e1, e0);
    let c = cross(sub(p, e0), e);
    dot(c, c) / dot(e, e)
}

/// Squared distance from `p` to the plane through `t0, t1, t2`.
pub fn point_plane<D: DualNum + Copy>(p: P3<D>, t0: P3<D>, t1: P3<D>, t2: P3<D>) -> D {
    let n = cross(sub(t1, t0), sub(t2, t0));
    let s = dot(sub(p, t0), n);
    s * s / dot(n, n)
}

/// Squared distance between the infinite lines through two edges.
pub fn line_line<D: DualNum + Copy>(a0: P3<D>, a1: P3<D>, b0: P3<D>, b1: P3<D>) -> D {
    let n = cross(sub(a1, a0), sub(b1, b0));
    let s = dot(sub(b0, a0), n);
    s * s / dot(n, n)
}

/// Which stacked 3-vectors a restricted function reads, and how.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kernel {
    PointPoint(usize, usize),
    /// point, line endpoints
    PointLine(usize, usize, usize),
    PointPlane,
    LineLine,
}

impl Kernel {
    fn eval<D: DualNum + Copy>(&self, x: &[P3<D>; 4]) -> D {
        match *self {
            Kernel::PointPoint(i, j) => point_point(x[i], x[j]),
            Kernel::PointLine(i, j, k) => point_line(x[i], x[j], x[k]),
            Kernel::PointPlane => point_plane(x[0], x[1], x[2], x[3]),
            Kernel::LineLine => line_line(x[0], x[1], x[2], x[3]),
        }
    }

    pub fn value(&self, x: &[nalgebra::Vector3<f64>; 4]) -> f64 {
        let p: [P3<f64>; 4] = x.map(|v| [v.x, v.y, v.z]);
        self.eval(&p)
    }

    /// Value, gradient and Hessian with respect to the 12 stacked coordinates.
    pub fn derivatives(&self, x: &[nalgebra::Vector3<f64>; 4]) -> (f64, Grad12, Hess12) {
        let flat = Grad12::from_iterator(x.iter().flat_map(|v| [v.x, v.y, v.z]));
        hessian(
            |y: SVector<Dual2SVec64<12>, 12>| {
                let p: [P3<Dual2SVec64<12>>; 4] = std::array::from_fn(|i| [y[3 * i], y[3 * i + 1], y[3 * i + 2]]);
                self.eval(&p)
            },
            &flat,
        )
    }
}
