//! Triangles incident to one point in the 2D Delaunay triangulation of a small
//! projected neighborhood.
//!
//! Near-cocircular configurations are resolved by symbolic perturbation on the
//! global point indices (the lowest index is lifted the most), so overlapping
//! neighborhoods agree on which diagonal of a cocircular quad to keep.

use alloc::vec::Vec;

pub(crate) type P2 = [f64; 2];

fn orient(a: P2, b: P2, c: P2) -> f64 {
    (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
}

/// Positive when `d` lies inside the circumcircle of counter-clockwise `a b c`.
fn incircle(a: P2, b: P2, c: P2, d: P2) -> f64 {
    let (adx, ady) = (a[0] - d[0], a[1] - d[1]);
    let (bdx, bdy) = (b[0] - d[0], b[1] - d[1]);
    let (cdx, cdy) = (c[0] - d[0], c[1] - d[1]);
    let ad = adx * adx + ady * ady;
    let bd = bdx * bdx + bdy * bdy;
    let cd = cdx * cdx + cdy * cdy;
    adx * (bdy * cd - bd * cdy) - ady * (bdx * cd - bd * cdx) + ad * (bdx * cdy - bdy * cdx)
}

/// Sign of the symbolically perturbed in-circle test for an exactly
/// cocircular `d`. The lowest global index is lifted off the paraboloid: if
/// that is `d`, it moves outside; if it is a triangle vertex `s`, `d` ends up
/// inside exactly when its barycentric coordinate for `s` is positive.
fn perturbed_inside(points: &[P2], ids: &[usize], tri: [usize; 3], d: usize) -> bool {
    let (pos, &s) = tri
        .iter()
        .enumerate()
        .min_by_key(|(_, &v)| ids[v])
        .expect("triangle has three vertices");
    if ids[d] < ids[s] {
        return false;
    }
    let (e1, e2) = (tri[(pos + 1) % 3], tri[(pos + 2) % 3]);
    let at_d = orient(points[e1], points[e2], points[d]);
    let at_s = orient(points[e1], points[e2], points[s]);
    at_d * at_s > 0.0
}

/// Returns pairs `(a, b)` of local indices such that `(0, a, b)` is a Delaunay
/// triangle of `points`; local index 0 is the center. `ids` are the global
/// indices used for tie-breaking and `spacing` sets the tolerance scale.
pub(crate) fn incident_triangles(
    points: &[P2],
    ids: &[usize],
    spacing: f64,
) -> Vec<(usize, usize)> {
    let n = points.len();
    let orient_eps = 1e-12 * spacing * spacing;
    let circle_eps = 1e-10 * spacing * spacing * spacing * spacing;
    let c = points[0];
    let mut out = Vec::new();
    for a in 1..n {
        for b in a + 1..n {
            let o = orient(c, points[a], points[b]);
            if o.abs() <= orient_eps {
                continue;
            }
            let (ta, tb) = if o > 0.0 { (a, b) } else { (b, a) };
            let empty = (1..n).filter(|&d| d != a && d != b).all(|d| {
                if points[d] == c || points[d] == points[a] || points[d] == points[b] {
                    return true;
                }
                let ic = incircle(c, points[ta], points[tb], points[d]);
                if ic > circle_eps {
                    false
                } else if ic < -circle_eps {
                    true
                } else {
                    !perturbed_inside(points, ids, [0, ta, tb], d)
                }
            });
            if empty {
                out.push((a, b));
            }
        }
    }
    out
}
