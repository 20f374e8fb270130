//! Synthetic collocation sets for the bundled cases: a plane Poiseuille
//! channel with its exact solution, the cylinder in a parallel flow (static or
//! with a translating cylinder) and the T-junction with a variable arm height.
//!
//! Volume points are uniform random (with optional refinement boxes);
//! boundary faces receive points in proportion to their area and each point
//! carries the area weight `face area / face count`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{CollocationPoint, CollocationSet, ReferenceSolution};

type Rng8 = ChaCha8Rng;
type Draw = Box<dyn Fn(&mut Rng8) -> Option<[f64; 3]>>;
type VelocityFn = Box<dyn Fn(&[f64; 3]) -> [f64; 3]>;

struct Face {
    area: f64,
    draw: Draw,
    velocity: VelocityFn,
}

fn no_slip() -> VelocityFn {
    Box::new(|_| [0.0; 3])
}

/// Axis-aligned rectangle `coord[fixed] = value`, spanning `a` and `b` along
/// the two remaining axes in increasing order.
fn rect(fixed: usize, value: f64, a: (f64, f64), b: (f64, f64)) -> (f64, Draw) {
    let (ia, ib) = match fixed {
        0 => (1, 2),
        1 => (0, 2),
        _ => (0, 1),
    };
    let area = (a.1 - a.0) * (b.1 - b.0);
    let draw = move |rng: &mut Rng8| {
        let mut x = [0.0; 3];
        x[fixed] = value;
        x[ia] = rng.random_range(a.0..a.1);
        x[ib] = rng.random_range(b.0..b.1);
        Some(x)
    };
    (area, Box::new(draw))
}

/// Splits `n` across weights by largest remainder.
fn apportion(n: usize, weights: &[f64]) -> Vec<usize> {
    let total: f64 = weights.iter().sum();
    if total <= 0.0 || weights.is_empty() {
        return vec![0; weights.len()];
    }
    let exact: Vec<f64> = weights.iter().map(|w| n as f64 * w / total).collect();
    let mut counts: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let mut rest = n - counts.iter().sum::<usize>();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&i, &j| (exact[j] - exact[j].floor()).total_cmp(&(exact[i] - exact[i].floor())).then(i.cmp(&j)));
    for &i in order.iter().cycle() {
        if rest == 0 {
            break;
        }
        counts[i] += 1;
        rest -= 1;
    }
    counts
}

fn sample_faces(faces: &[Face], n: usize, rng: &mut Rng8) -> Vec<CollocationPoint> {
    let counts = apportion(n, &faces.iter().map(|f| f.area).collect::<Vec<_>>());
    let mut out = Vec::with_capacity(n);
    for (face, &c) in faces.iter().zip(&counts) {
        let mut got = 0;
        while got < c {
            if let Some(x) = (face.draw)(rng) {
                out.push(CollocationPoint {
                    position: x,
                    velocity: Some((face.velocity)(&x)),
                    pressure: None,
                    area: Some(face.area / c as f64),
                });
                got += 1;
            }
        }
    }
    out
}

fn outlet(points: Vec<CollocationPoint>) -> Vec<CollocationPoint> {
    points.into_iter().map(|p| CollocationPoint { velocity: None, pressure: Some(0.0), ..p }).collect()
}

/// Rejection-samples `n` volume points from axis-aligned boxes weighted by
/// volume, keeping those accepted by `keep`.
fn sample_boxes(boxes: &[[(f64, f64); 3]], n: usize, rng: &mut Rng8, keep: &dyn Fn(&[f64; 3]) -> bool) -> Vec<CollocationPoint> {
    // Degenerate extents (the z range of a planar case) do not weigh in.
    let vols: Vec<f64> =
        boxes.iter().map(|b| b.iter().map(|(lo, hi)| hi - lo).filter(|&e| e > 0.0).product()).collect();
    let counts = apportion(n, &vols);
    let mut out = Vec::with_capacity(n);
    for (b, &c) in boxes.iter().zip(&counts) {
        let mut got = 0;
        while got < c {
            let x: [f64; 3] =
                std::array::from_fn(|i| if b[i].1 > b[i].0 { rng.random_range(b[i].0..b[i].1) } else { b[i].0 });
            if keep(&x) {
                out.push(CollocationPoint::at(x));
                got += 1;
            }
        }
    }
    out
}

/// Plane Poiseuille flow between walls `y = 0` and `y = height`, inflow at
/// `x = 0`, pressure outlet at `x = length`.
#[derive(Clone, Debug, PartialEq)]
pub struct Channel2d {
    pub length: f64,
    pub height: f64,
    pub u_max: f64,
    pub mu: f64,
    pub n_volume: usize,
    pub n_wall: usize,
    pub n_inlet: usize,
    pub n_outlet: usize,
}

impl Default for Channel2d {
    fn default() -> Self {
        Self { length: 2.0, height: 1.0, u_max: 1.0, mu: 0.02, n_volume: 1000, n_wall: 60, n_inlet: 30, n_outlet: 30 }
    }
}

impl Channel2d {
    pub fn velocity(&self, y: f64) -> [f64; 3] {
        let h = self.height;
        [4.0 * self.u_max * y * (h - y) / (h * h), 0.0, 0.0]
    }

    /// Gauge pressure, zero at the outlet.
    pub fn pressure(&self, x: f64) -> f64 {
        8.0 * self.mu * self.u_max / (self.height * self.height) * (self.length - x)
    }

    /// Boundary points sit on evenly spaced midpoints; volume points are
    /// uniform random.
    pub fn generate(&self, seed: u64) -> CollocationSet {
        let mut rng = Rng8::seed_from_u64(seed);
        let (l, h) = (self.length, self.height);
        let mut set = CollocationSet::empty(2);
        set.volume = sample_boxes(&[[(0.0, l), (0.0, h), (0.0, 0.0)]], self.n_volume, &mut rng, &|_| true);
        let mid = |i: usize, n: usize, span: f64| (i as f64 + 0.5) * span / n as f64;
        for wall_y in [0.0, h] {
            for i in 0..self.n_wall {
                set.dirichlet.push(CollocationPoint {
                    position: [mid(i, self.n_wall, l), wall_y, 0.0],
                    velocity: Some([0.0; 3]),
                    pressure: None,
                    area: Some(l / self.n_wall as f64),
                });
            }
        }
        for i in 0..self.n_inlet {
            let y = mid(i, self.n_inlet, h);
            set.dirichlet.push(CollocationPoint {
                position: [0.0, y, 0.0],
                velocity: Some(self.velocity(y)),
                pressure: None,
                area: Some(h / self.n_inlet as f64),
            });
        }
        for i in 0..self.n_outlet {
            set.neumann.push(CollocationPoint {
                position: [l, mid(i, self.n_outlet, h), 0.0],
                velocity: None,
                pressure: Some(0.0),
                area: Some(h / self.n_outlet as f64),
            });
        }
        set
    }

    /// Exact solution sampled at random interior points.
    pub fn reference(&self, n: usize, seed: u64) -> ReferenceSolution {
        let mut rng = Rng8::seed_from_u64(seed);
        let pts = sample_boxes(&[[(0.0, self.length), (0.0, self.height), (0.0, 0.0)]], n, &mut rng, &|_| true);
        self.exact_at(pts.iter().map(|p| p.position).collect())
    }

    pub fn exact_at(&self, positions: Vec<[f64; 3]>) -> ReferenceSolution {
        let velocity = positions.iter().map(|x| self.velocity(x[1])).collect();
        let pressure = positions.iter().map(|x| self.pressure(x[0])).collect();
        ReferenceSolution { n_sd: 2, positions, velocity, pressure }
    }
}

/// Channel with a cylinder along `z` centred at the origin. The inlet sits at
/// `x = -upstream`, the outlet at `x = length - upstream`.
#[derive(Clone, Debug, PartialEq)]
pub struct Cylinder3d {
    pub length: f64,
    pub height: f64,
    pub upstream: f64,
    pub diameter: f64,
    pub width: f64,
    pub v_max: f64,
    /// Moving cylinder surface (set `M`) instead of a fixed one (set `D`).
    pub parametric: bool,
    pub k_range: [f64; 2],
    pub n_volume: usize,
    pub n_dirichlet: usize,
    pub n_neumann: usize,
    /// Cylinder surface points in parametric mode.
    pub n_moving: usize,
    /// Share of volume points placed in the refinement box around the
    /// cylinder.
    pub refine_fraction: f64,
}

impl Default for Cylinder3d {
    fn default() -> Self {
        Self {
            length: 1.1,
            height: 0.41,
            upstream: 0.15,
            diameter: 0.1,
            width: 0.4,
            v_max: 1.0,
            parametric: false,
            k_range: [-0.05, 0.05],
            n_volume: 5000,
            n_dirichlet: 1500,
            n_neumann: 200,
            n_moving: 300,
            refine_fraction: 0.3,
        }
    }
}

impl Cylinder3d {
    /// Point counts of the full-size static dataset.
    pub fn paper_static() -> Self {
        Self { n_volume: 57813, n_dirichlet: 14716, n_neumann: 1725, ..Self::default() }
    }

    pub fn paper_parametric() -> Self {
        Self { parametric: true, n_volume: 66622, n_dirichlet: 14716, n_neumann: 1725, n_moving: 1500, ..Self::default() }
    }

    /// Bi-quadratic inflow profile, peak `v_max` at the channel centre.
    pub fn inflow(&self, y: f64, z: f64) -> f64 {
        let (h, w) = (self.height, self.width);
        16.0 * self.v_max / (h * h * w * w) * (0.5 * h - y) * (0.5 * h + y) * (w - z) * z
    }

    pub fn x_range(&self) -> (f64, f64) {
        (-self.upstream, self.length - self.upstream)
    }

    pub fn generate(&self, seed: u64) -> CollocationSet {
        let mut rng = Rng8::seed_from_u64(seed);
        let (x0, x1) = self.x_range();
        let (y0, y1) = (-0.5 * self.height, 0.5 * self.height);
        let (z0, z1) = (0.0, self.width);
        let r = 0.5 * self.diameter;
        let parametric = self.parametric;
        let outside = move |x: &[f64; 3]| parametric || x[0].hypot(x[1]) >= r;

        let n_fine = (self.refine_fraction * self.n_volume as f64).round() as usize;
        let kmin = self.k_range[0].min(0.0);
        let kmax = self.k_range[1].max(0.0);
        let fine = [(-2.0 * r, 4.0 * r), (kmin - 2.0 * r, kmax + 2.0 * r), (z0, z1)];
        let mut set = CollocationSet::empty(3);
        set.volume = sample_boxes(&[[(x0, x1), (y0, y1), (z0, z1)]], self.n_volume - n_fine, &mut rng, &outside);
        set.volume.extend(sample_boxes(&[fine], n_fine, &mut rng, &outside));

        let mut faces = Vec::new();
        let (a, d) = rect(0, x0, (y0, y1), (z0, z1));
        let cyl = self.clone();
        faces.push(Face { area: a, draw: d, velocity: Box::new(move |x| [cyl.inflow(x[1], x[2]), 0.0, 0.0]) });
        for y in [y0, y1] {
            let (a, d) = rect(1, y, (x0, x1), (z0, z1));
            faces.push(Face { area: a, draw: d, velocity: no_slip() });
        }
        for z in [z0, z1] {
            let (a, d) = rect(2, z, (x0, x1), (y0, y1));
            let disk = if parametric { 0.0 } else { std::f64::consts::PI * r * r };
            let draw = Box::new(move |rng: &mut Rng8| d(rng).filter(|x| outside(x)));
            faces.push(Face { area: a - disk, draw, velocity: no_slip() });
        }
        let surface = Face {
            area: std::f64::consts::PI * self.diameter * self.width,
            draw: Box::new(move |rng: &mut Rng8| {
                let t = rng.random_range(0.0..std::f64::consts::TAU);
                Some([r * t.cos(), r * t.sin(), rng.random_range(z0..z1)])
            }),
            velocity: no_slip(),
        };
        if parametric {
            set.moving = sample_faces(&[surface], self.n_moving, &mut rng);
        } else {
            faces.push(surface);
        }
        set.dirichlet = sample_faces(&faces, self.n_dirichlet, &mut rng);
        let (a, d) = rect(0, x1, (y0, y1), (z0, z1));
        set.neumann = outlet(sample_faces(&[Face { area: a, draw: d, velocity: no_slip() }], self.n_neumann, &mut rng));
        set
    }
}

/// T-junction: inflow from the top through a channel of width `l_in`, a left
/// arm of height `k` and a right arm of height `h_r`, both with pressure
/// outlets. The moving boundary is stored at `k = k_ref`.
#[derive(Clone, Debug, PartialEq)]
pub struct Tjunction3d {
    pub length: f64,
    pub height: f64,
    pub l_in: f64,
    pub h_r: f64,
    pub width: f64,
    pub v_max: f64,
    pub k_range: [f64; 2],
    pub k_ref: f64,
    pub n_volume: usize,
    pub n_dirichlet: usize,
    pub n_neumann: usize,
    pub n_moving: usize,
}

impl Default for Tjunction3d {
    fn default() -> Self {
        Self {
            length: 0.3,
            height: 0.2,
            l_in: 0.09,
            h_r: 0.08,
            width: 0.1,
            v_max: 1.0,
            k_range: [0.03, 0.07],
            k_ref: 0.03,
            n_volume: 6000,
            n_dirichlet: 1600,
            n_neumann: 200,
            n_moving: 300,
        }
    }
}

impl Tjunction3d {
    /// Full-size counts; the Dirichlet total of 19725 includes the moving points.
    pub fn paper() -> Self {
        Self { n_volume: 75487, n_dirichlet: 19725 - 3337, n_neumann: 1807, n_moving: 3337, ..Self::default() }
    }

    pub fn inflow(&self, x: f64, z: f64) -> f64 {
        let (a, w) = (self.l_in, self.width);
        16.0 * self.v_max / (a * a * w * w) * (0.5 * a - x) * (0.5 * a + x) * (w - z) * z
    }

    /// Outlet planes as `(name, x position, outward normal)`.
    pub fn outlets(&self) -> [(&'static str, f64, [f64; 3]); 2] {
        [("left", -0.5 * self.length, [-1.0, 0.0, 0.0]), ("right", 0.5 * self.length, [1.0, 0.0, 0.0])]
    }

    pub fn generate(&self, seed: u64) -> CollocationSet {
        let mut rng = Rng8::seed_from_u64(seed);
        let (xl, xr) = (-0.5 * self.length, 0.5 * self.length);
        let (il, ir) = (-0.5 * self.l_in, 0.5 * self.l_in);
        let kmax = self.k_range[1];
        let (h, hr, w) = (self.height, self.h_r, self.width);
        let regions = [
            [(il, ir), (0.0, h)],
            [(xl, il), (0.0, kmax)],
            [(ir, xr), (0.0, hr)],
        ];
        let mut set = CollocationSet::empty(3);
        let boxes: Vec<[(f64, f64); 3]> = regions.iter().map(|r| [r[0], r[1], (0.0, w)]).collect();
        set.volume = sample_boxes(&boxes, self.n_volume, &mut rng, &|_| true);

        let mut faces = Vec::new();
        let mut wall = |fixed: usize, v: f64, a: (f64, f64), b: (f64, f64)| {
            let (area, draw) = rect(fixed, v, a, b);
            faces.push(Face { area, draw, velocity: no_slip() });
        };
        wall(1, 0.0, (xl, xr), (0.0, w));
        for z in [0.0, w] {
            for r in &regions {
                wall(2, z, r[0], r[1]);
            }
        }
        wall(1, hr, (ir, xr), (0.0, w));
        wall(0, ir, (hr, h), (0.0, w));
        let (area, draw) = rect(1, h, (il, ir), (0.0, w));
        let me = self.clone();
        faces.push(Face { area, draw, velocity: Box::new(move |x| [0.0, -me.inflow(x[0], x[2]), 0.0]) });
        set.dirichlet = sample_faces(&faces, self.n_dirichlet, &mut rng);

        let mut moving = Vec::new();
        for (fixed, v, a, b) in [(1, self.k_ref, (xl, il), (0.0, w)), (0, il, (self.k_ref, h), (0.0, w))] {
            let (area, draw) = rect(fixed, v, a, b);
            moving.push(Face { area, draw, velocity: no_slip() });
        }
        set.moving = sample_faces(&moving, self.n_moving, &mut rng);

        let mut outs = Vec::new();
        for (x, top) in [(xl, kmax), (xr, hr)] {
            let (area, draw) = rect(0, x, (0.0, top), (0.0, w));
            outs.push(Face { area, draw, velocity: no_slip() });
        }
        set.neumann = outlet(sample_faces(&outs, self.n_neumann, &mut rng));
        set
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn apportion_is_exact() {
        let c = apportion(10, &[1.0, 1.0, 1.0]);
        assert_eq!(c.iter().sum::<usize>(), 10);
        assert!(c.iter().all(|&v| v == 3 || v == 4));
    }

    #[test]
    fn channel_solution_is_poiseuille() {
        let c = Channel2d::default();
        assert_eq!(c.velocity(0.5), [1.0, 0.0, 0.0]);
        assert_eq!(c.velocity(0.0), [0.0; 3]);
        assert!((c.pressure(0.0) - 0.32).abs() < 1e-15);
        assert_eq!(c.pressure(2.0), 0.0);
        let s = c.generate(0);
        assert_eq!(s.counts(), (1000, 150, 30, 0));
    }

    #[test]
    fn paper_counts_reproduced() {
        let s = Cylinder3d::paper_static().generate(1);
        assert_eq!(s.counts(), (57813, 14716, 1725, 0));
        let t = Tjunction3d::paper().generate(1);
        assert_eq!(t.counts(), (75487, 19725, 1807, 3337));
    }

    #[test]
    fn inflow_peaks_at_one() {
        let c = Cylinder3d::default();
        assert!((c.inflow(0.0, 0.2) - 1.0).abs() < 1e-12);
        assert_eq!(c.inflow(0.205, 0.2), 0.0);
        let t = Tjunction3d::default();
        assert!((t.inflow(0.0, 0.05) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn static_cylinder_points_avoid_the_cylinder() {
        let c = Cylinder3d { n_volume: 2000, ..Default::default() };
        let s = c.generate(2);
        for p in s.volume.iter().chain(&s.neumann) {
            assert!(p.position[0].hypot(p.position[1]) >= 0.05);
        }
        let area: f64 = s.dirichlet.iter().map(|p| p.area.unwrap()).sum();
        let expected = 0.41 * 0.4 + 2.0 * 1.1 * 0.4 + 2.0 * (1.1 * 0.41 - std::f64::consts::PI * 0.0025)
            + std::f64::consts::PI * 0.1 * 0.4;
        assert!((area - expected).abs() < 1e-9);
    }
}
