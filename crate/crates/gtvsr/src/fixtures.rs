//! Synthetic ground-truth surfaces sampled uniformly by area.

use std::fmt;
use std::str::FromStr;

use gtvsr_core::{Point3, PointCloud};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Fixture {
    /// Unit square in the `z = 0` plane.
    Plane,
    /// Unit sphere.
    Sphere,
    /// Surface of the cube `[-0.5, 0.5]^3`.
    Cube,
    /// Closed cylinder of radius 0.5 and height 1 around the z axis.
    Cylinder,
}

impl Fixture {
    pub const ALL: [Fixture; 4] = [
        Fixture::Plane,
        Fixture::Sphere,
        Fixture::Cube,
        Fixture::Cylinder,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Fixture::Plane => "plane",
            Fixture::Sphere => "sphere",
            Fixture::Cube => "cube",
            Fixture::Cylinder => "cylinder",
        }
    }

    /// Samples `n` points (with exact outward normals) using a ChaCha stream
    /// seeded by `seed`.
    pub fn sample(self, n: usize, seed: u64) -> PointCloud {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (points, normals): (Vec<_>, Vec<_>) = (0..n).map(|_| self.draw(&mut rng)).unzip();
        PointCloud::with_normals(points, normals)
            .expect("fixture samples are finite with unit normals")
    }

    fn draw(self, rng: &mut impl Rng) -> (Point3, Point3) {
        match self {
            Fixture::Plane => (Point3::new(rng.gen(), rng.gen(), 0.0), Point3::z()),
            Fixture::Sphere => {
                let z: f64 = rng.gen_range(-1.0..=1.0);
                let phi = rng.gen_range(0.0..std::f64::consts::TAU);
                let r = (1.0 - z * z).max(0.0).sqrt();
                let p = Point3::new(r * phi.cos(), r * phi.sin(), z);
                (p, p.normalize())
            }
            Fixture::Cube => {
                let face = rng.gen_range(0..6);
                let axis = face % 3;
                let sign = if face < 3 { 0.5 } else { -0.5 };
                let mut p = Point3::new(
                    rng.gen_range(-0.5..0.5),
                    rng.gen_range(-0.5..0.5),
                    rng.gen_range(-0.5..0.5),
                );
                p[axis] = sign;
                let mut n = Point3::zeros();
                n[axis] = sign * 2.0;
                (p, n)
            }
            Fixture::Cylinder => {
                // side area 2*pi*r*h = pi, each cap pi*r^2 = pi/4
                let u: f64 = rng.gen_range(0.0..1.5);
                let phi = rng.gen_range(0.0..std::f64::consts::TAU);
                if u < 1.0 {
                    let z = rng.gen_range(-0.5..0.5);
                    let n = Point3::new(phi.cos(), phi.sin(), 0.0);
                    (Point3::new(0.5 * phi.cos(), 0.5 * phi.sin(), z), n)
                } else {
                    let r = 0.5 * rng.gen::<f64>().sqrt();
                    let z = if u < 1.25 { 0.5 } else { -0.5 };
                    (
                        Point3::new(r * phi.cos(), r * phi.sin(), z),
                        Point3::new(0.0, 0.0, 2.0 * z),
                    )
                }
            }
        }
    }

    /// Euclidean distance from `p` to the surface.
    pub fn distance(self, p: &Point3) -> f64 {
        match self {
            Fixture::Plane => {
                let dx = (p.x.clamp(0.0, 1.0) - p.x).abs();
                let dy = (p.y.clamp(0.0, 1.0) - p.y).abs();
                (dx * dx + dy * dy + p.z * p.z).sqrt()
            }
            Fixture::Sphere => (p.norm() - 1.0).abs(),
            Fixture::Cube => box_surface_distance(p, &Point3::repeat(0.5)),
            Fixture::Cylinder => {
                let radial = (p.x * p.x + p.y * p.y).sqrt();
                let dr = radial - 0.5;
                let dz = p.z.abs() - 0.5;
                if dr <= 0.0 && dz <= 0.0 {
                    -dr.max(dz)
                } else {
                    (dr.max(0.0).powi(2) + dz.max(0.0).powi(2)).sqrt()
                }
            }
        }
    }
}

fn box_surface_distance(p: &Point3, half: &Point3) -> f64 {
    let d = p.abs() - half;
    let outside = d.map(|v| v.max(0.0)).norm();
    if outside > 0.0 {
        outside
    } else {
        -d.max()
    }
}

impl fmt::Display for Fixture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Fixture {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Fixture::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| {
                format!("unknown fixture `{s}` (expected plane, sphere, cube or cylinder)")
            })
    }
}
