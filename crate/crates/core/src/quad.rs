//! Quadrature for the kernel integrals that are not plain node sums: exterior tails
//! beyond the padded box and the self-interaction of a cell with itself.

use alloc::vec::Vec;
use core::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};

/// Gauss–Legendre nodes and weights on [-1, 1].
pub(crate) fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = alloc::vec![0.0; n];
    let mut w = alloc::vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        let mut z = libm::cos(PI * (i as f64 + 0.75) / (nf + 0.5));
        let mut dp = 0.0;
        for _ in 0..100 {
            // Legendre recurrence for P_n(z) and P_{n-1}(z)
            let (mut p0, mut p1) = (1.0, z);
            if n == 1 {
                p1 = z;
                p0 = 1.0;
            } else {
                for k in 2..=n {
                    let kf = k as f64;
                    let p2 = ((2.0 * kf - 1.0) * z * p1 - (kf - 1.0) * p0) / kf;
                    p0 = p1;
                    p1 = p2;
                }
            }
            dp = nf * (z * p1 - p0) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if libm::fabs(dz) < 1e-15 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    (x, w)
}

pub(crate) fn integrate(rule: &(Vec<f64>, Vec<f64>), a: f64, b: f64, f: impl Fn(f64) -> f64) -> f64 {
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    let mut acc = 0.0;
    for (xi, wi) in rule.0.iter().zip(&rule.1) {
        acc += wi * f(mid + half * xi);
    }
    acc * half
}

/// ∫ over ℝ∖[lo, hi] of |x − y|^{−1−b} dy for lo < x < hi.
pub(crate) fn tail_1d(x: f64, lo: f64, hi: f64, b: f64) -> f64 {
    (libm::pow(x - lo, -b) + libm::pow(hi - x, -b)) / b
}

/// ∫ over ℝ²∖box of |x − y|^{−2−b} dy for a point inside the box.
///
/// The radial integral is exact, `R(θ)^{−b}/b`; the angular one is Gauss–Legendre on
/// the four sectors seen through each side, where the integrand is `d^{−b} cos^b φ / b`.
pub(crate) fn tail_2d(pt: [f64; 2], lo: [f64; 2], hi: [f64; 2], b: f64, rule: &(Vec<f64>, Vec<f64>)) -> f64 {
    let right = hi[0] - pt[0];
    let top = hi[1] - pt[1];
    let left = pt[0] - lo[0];
    let bottom = pt[1] - lo[1];
    // (normal distance, extent on one side, extent on the other)
    let sides = [(right, bottom, top), (top, right, left), (left, top, bottom), (bottom, left, right)];
    let mut acc = 0.0;
    for (d, e1, e2) in sides {
        let a = -libm::atan(e1 / d);
        let c = libm::atan(e2 / d);
        acc += libm::pow(d, -b) / b * integrate(rule, a, c, |phi| libm::pow(libm::cos(phi), b));
    }
    acc
}

/// ∫_{S^{n−1}} |ω·e|^p dω: 2 in 1D, `2√π Γ((p+1)/2) / Γ(p/2+1)` in 2D.
pub(crate) fn sphere_moment(dim: usize, p: f64) -> f64 {
    if dim == 1 {
        2.0
    } else {
        2.0 * libm::sqrt(PI) * libm::tgamma(0.5 * (p + 1.0)) / libm::tgamma(0.5 * p + 1.0)
    }
}

/// Self-interaction of the unit cell for a linear field, direction-averaged:
/// `avg_e ∫∫_{C×C} |e·(x−y)|^p |x−y|^{−n−sp} dx dy` with `a = p(1−s)`.
///
/// 1D is closed form `2/(a(a+1))`. In 2D the difference density of the unit square
/// gives `Q(a) = 4∫_{[0,1]²} (1−z₁)(1−z₂)|z|^{a−2} dz`, integrated radially in closed form
/// and in angle by Gauss–Legendre on the two halves of the quarter circle.
pub(crate) fn self_coefficient(dim: usize, a: f64, p: f64, rule: &(Vec<f64>, Vec<f64>)) -> f64 {
    if dim == 1 {
        return 2.0 / (a * (a + 1.0));
    }
    let radial = |theta: f64| {
        let (s, c) = (libm::sin(theta), libm::cos(theta));
        let r = 1.0 / c.max(s);
        libm::pow(r, a) / a - (c + s) * libm::pow(r, a + 1.0) / (a + 1.0)
            + c * s * libm::pow(r, a + 2.0) / (a + 2.0)
    };
    let q = 4.0 * (integrate(rule, 0.0, FRAC_PI_4, radial) + integrate(rule, FRAC_PI_4, FRAC_PI_2, radial));
    sphere_moment(2, p) / (2.0 * PI) * q
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        let rule = gauss_legendre(8);
        let sum: f64 = rule.1.iter().sum();
        assert!((sum - 2.0).abs() < 1e-14);
        // exact up to degree 15
        let v = integrate(&rule, 0.0, 2.0, |x| libm::pow(x, 15.0));
        assert!((v - libm::pow(2.0, 16.0) / 16.0).abs() < 1e-9);
        let odd = gauss_legendre(7);
        assert!((integrate(&odd, -1.0, 1.0, |x| x * x) - 2.0 / 3.0).abs() < 1e-14);
    }

    #[test]
    fn tail_1d_closed_form() {
        // single side: ∫_t^∞ r^{-1-b} dr = t^{-b}/b
        let t = tail_1d(0.25, 0.0, 1.0, 1.0);
        assert!((t - (4.0 + 4.0 / 3.0)).abs() < 1e-14);
    }

    #[test]
    fn tail_2d_centre_of_square_matches_polar_bound_ordering() {
        // The exterior of the unit square centred at the point lies between the
        // exteriors of the inscribed (r=1/2) and circumscribed (r=√2/2) discs.
        let rule = gauss_legendre(64);
        let b = 1.0;
        let t = tail_2d([0.5, 0.5], [0.0, 0.0], [1.0, 1.0], b, &rule);
        let disc = |r: f64| 2.0 * PI * libm::pow(r, -b) / b;
        assert!(t < disc(0.5) && t > disc(libm::sqrt(0.5)));
    }

    #[test]
    fn sphere_moment_p2_is_pi() {
        assert!((sphere_moment(2, 2.0) - PI).abs() < 1e-13);
        assert!((sphere_moment(2, 0.0) - 2.0 * PI).abs() < 1e-12);
    }

    #[test]
    fn self_coefficient_blows_up_like_moment_over_a() {
        let rule = gauss_legendre(64);
        for p in [1.5, 2.0, 3.0] {
            let a = 1e-4;
            let c = self_coefficient(2, a, p, &rule);
            assert!((a * c / sphere_moment(2, p) - 1.0).abs() < 1e-2);
        }
    }
}
