//! Differential geometry of SO(p)×SO(q)-invariant hypersurfaces in R^n = R^p × R^q.
//!
//! A hypersurface is generated by a planar profile curve in the closed quadrant
//! (r, u) = (|y|, |z|). The profile carries its tangent angle `theta`, with tangent
//! (cos θ, sin θ), normal ν = (−sin θ, cos θ), and curvature k = dθ/ds.

use std::f64::consts::PI;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ode::TerminationEvent;
use crate::quadrature;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlowParams {
    pub p: usize,
    pub q: usize,
    pub n: usize,
}

impl FlowParams {
    pub fn new(p: usize, q: usize) -> Result<Self> {
        if p < 1 {
            return Err(Error::InvalidParams(format!("p = {p} must be at least 1")));
        }
        if q < 2 {
            return Err(Error::InvalidParams(format!("q = {q} must be at least 2")));
        }
        Ok(Self { p, q, n: p + q })
    }

    /// Rotation about a single axis in R^n: p = 1, q = n − 1.
    pub fn axial(n: usize) -> Result<Self> {
        if n < 3 {
            return Err(Error::InvalidParams(format!("n = {n} must be at least 3")));
        }
        Self::new(1, n - 1)
    }

    pub fn pm1(&self) -> f64 {
        (self.p - 1) as f64
    }

    pub fn qm1(&self) -> f64 {
        (self.q - 1) as f64
    }

    /// Cone slope λ_s, available when p ≥ 2.
    pub fn lambda_s(&self) -> Result<f64> {
        cone_slope(*self).map(|c| c.lambda_s)
    }

    /// ω_{p−1}·ω_{q−1}: the product of orbit-sphere areas.
    pub fn orbit_factor(&self) -> f64 {
        unit_sphere_area(self.p - 1) * unit_sphere_area(self.q - 1)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n != self.p + self.q {
            return Err(Error::InvalidParams(format!(
                "n = {} differs from p + q = {}",
                self.n,
                self.p + self.q
            )));
        }
        Self::new(self.p, self.q).map(|_| ())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConeData {
    pub lambda_s: f64,
    pub alpha_s: f64,
}

/// Area ω_m of the unit m-sphere; ω_0 = 2 counts the two points of S^0.
pub fn unit_sphere_area(m: usize) -> f64 {
    match m {
        0 => 2.0,
        1 => 2.0 * PI,
        _ => 2.0 * PI / (m as f64 - 1.0) * unit_sphere_area(m - 2),
    }
}

/// Slope of the minimal cone |y|²/(p−1) = |z|²/(q−1).
pub fn cone_slope(params: FlowParams) -> Result<ConeData> {
    if params.p < 2 || params.q < 2 {
        return Err(Error::InvalidParams(format!(
            "the minimal cone needs p, q >= 2 (got p = {}, q = {})",
            params.p, params.q
        )));
    }
    let lambda_s = (params.qm1() / params.pm1()).sqrt();
    Ok(ConeData { lambda_s, alpha_s: lambda_s.atan() })
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ProfilePoint {
    pub s: f64,
    pub r: f64,
    pub u: f64,
    pub theta: f64,
    pub k: f64,
}

impl ProfilePoint {
    pub fn new(s: f64, r: f64, u: f64, theta: f64, k: f64) -> Self {
        Self { s, r, u, theta, k }
    }

    pub fn tangent(&self) -> [f64; 2] {
        [self.theta.cos(), self.theta.sin()]
    }

    pub fn normal(&self) -> [f64; 2] {
        [-self.theta.sin(), self.theta.cos()]
    }

    pub fn radius(&self) -> f64 {
        self.r.hypot(self.u)
    }

    /// x·ν in the (r, u) chart.
    pub fn support(&self) -> f64 {
        -self.r * self.theta.sin() + self.u * self.theta.cos()
    }
}

fn check_off_axis(pt: &ProfilePoint, params: &FlowParams) -> Result<()> {
    if pt.u <= 0.0 || (params.p >= 2 && pt.r <= 0.0) {
        return Err(Error::AxisPoint { r: pt.r, u: pt.u });
    }
    Ok(())
}

/// Principal curvatures with multiplicities: [(k, 1), (−cos θ/u, q−1), (sin θ/r, p−1)].
pub fn principal_curvatures(pt: &ProfilePoint, params: &FlowParams) -> Result<Vec<(f64, usize)>> {
    check_off_axis(pt, params)?;
    let orbit_r = if params.p >= 2 { pt.theta.sin() / pt.r } else { 0.0 };
    Ok(vec![
        (pt.k, 1),
        (-pt.theta.cos() / pt.u, params.q - 1),
        (orbit_r, params.p - 1),
    ])
}

pub fn mean_curvature(pt: &ProfilePoint, params: &FlowParams) -> Result<f64> {
    check_off_axis(pt, params)?;
    Ok(mean_curvature_unchecked(pt, params))
}

pub(crate) fn mean_curvature_unchecked(pt: &ProfilePoint, params: &FlowParams) -> f64 {
    let mut h = pt.k - params.qm1() * pt.theta.cos() / pt.u;
    if params.p >= 2 {
        h += params.pm1() * pt.theta.sin() / pt.r;
    }
    h
}

/// |A|², the squared norm of the second fundamental form.
pub fn second_fundamental_norm(pt: &ProfilePoint, params: &FlowParams) -> Result<f64> {
    check_off_axis(pt, params)?;
    Ok(second_fundamental_norm_unchecked(pt, params))
}

pub(crate) fn second_fundamental_norm_unchecked(pt: &ProfilePoint, params: &FlowParams) -> f64 {
    let c = pt.theta.cos() / pt.u;
    let mut a2 = pt.k * pt.k + params.qm1() * c * c;
    if params.p >= 2 {
        let s = pt.theta.sin() / pt.r;
        a2 += params.pm1() * s * s;
    }
    a2
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Weight {
    Unit,
    /// e^{−|x|²/4}
    GaussianMinus,
    /// e^{+|x|²/4}
    GaussianPlus,
}

impl Weight {
    pub fn eval(&self, r: f64, u: f64) -> f64 {
        let x2 = r * r + u * u;
        match self {
            Weight::Unit => 1.0,
            Weight::GaussianMinus => (-x2 / 4.0).exp(),
            Weight::GaussianPlus => (x2 / 4.0).exp(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileCurve {
    pub points: Vec<ProfilePoint>,
    pub params: FlowParams,
    pub termination: TerminationEvent,
}

impl ProfileCurve {
    pub fn new(points: Vec<ProfilePoint>, params: FlowParams, termination: TerminationEvent) -> Result<Self> {
        let curve = Self { points, params, termination };
        curve.validate()?;
        Ok(curve)
    }

    pub fn validate(&self) -> Result<()> {
        if self.points.len() < 2 {
            return Err(Error::InvalidParams("profile needs at least two points".into()));
        }
        for w in self.points.windows(2) {
            if !(w[1].s > w[0].s) {
                return Err(Error::InvalidParams(format!(
                    "arclength not strictly increasing at s = {}",
                    w[0].s
                )));
            }
        }
        for p in &self.points {
            if !(p.s.is_finite() && p.r.is_finite() && p.u.is_finite() && p.theta.is_finite() && p.k.is_finite()) {
                return Err(Error::NonFinite(format!("profile sample at s = {}", p.s)));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn first(&self) -> &ProfilePoint {
        &self.points[0]
    }

    pub fn last(&self) -> &ProfilePoint {
        &self.points[self.points.len() - 1]
    }

    pub fn length(&self) -> f64 {
        self.last().s - self.first().s
    }

    /// Curve sampled from a polyline; tangent angles and curvature are estimated from
    /// neighbouring vertices, and arclength is the chord length.
    pub fn from_polyline(rs: &[(f64, f64)], params: FlowParams, termination: TerminationEvent) -> Result<Self> {
        let n = rs.len();
        if n < 3 {
            return Err(Error::InvalidParams("polyline needs at least three vertices".into()));
        }
        let mut s = vec![0.0; n];
        for i in 1..n {
            s[i] = s[i - 1] + (rs[i].0 - rs[i - 1].0).hypot(rs[i].1 - rs[i - 1].1);
        }
        let mut pts = Vec::with_capacity(n);
        for i in 0..n {
            let (i0, i2) = if i == 0 {
                (0, 1)
            } else if i == n - 1 {
                (n - 2, n - 1)
            } else {
                (i - 1, i + 1)
            };
            let theta = (rs[i2].1 - rs[i0].1).atan2(rs[i2].0 - rs[i0].0);
            let k = if i == 0 || i == n - 1 {
                0.0
            } else {
                discrete_curvature(rs[i - 1], rs[i], rs[i + 1])
            };
            pts.push(ProfilePoint::new(s[i], rs[i].0, rs[i].1, theta, k));
        }
        if n >= 3 {
            pts[0].k = pts[1].k;
            pts[n - 1].k = pts[n - 2].k;
        }
        unwrap_angles(&mut pts);
        Self::new(pts, params, termination)
    }

    /// Circular arc of radius `radius` centred at `center`, swept from angle `phi0` to `phi1`
    /// (polar angle of the point about the centre).
    pub fn circle_arc(
        center: (f64, f64),
        radius: f64,
        phi0: f64,
        phi1: f64,
        samples: usize,
        params: FlowParams,
    ) -> Result<Self> {
        if radius <= 0.0 || samples < 2 {
            return Err(Error::InvalidParams("circle arc needs radius > 0 and two samples".into()));
        }
        let dir = (phi1 - phi0).signum();
        let mut pts = Vec::with_capacity(samples);
        for i in 0..samples {
            let phi = phi0 + (phi1 - phi0) * i as f64 / (samples - 1) as f64;
            let r = center.0 + radius * phi.cos();
            let u = center.1 + radius * phi.sin();
            let theta = phi + dir * PI / 2.0;
            let s = radius * (phi - phi0).abs();
            pts.push(ProfilePoint::new(s, r.max(0.0), u.max(0.0), theta, dir / radius));
        }
        Self::new(pts, params, TerminationEvent::analytic())
    }

    /// Quarter circle of radius R about the origin, from (0, R) to (R, 0).
    pub fn sphere(radius: f64, samples: usize, params: FlowParams) -> Result<Self> {
        Self::circle_arc((0.0, 0.0), radius, PI / 2.0, 0.0, samples, params)
    }

    /// Straight segment from `start` with direction angle `theta` and length `length`.
    pub fn segment(start: (f64, f64), theta: f64, length: f64, samples: usize, params: FlowParams) -> Result<Self> {
        let pts = (0..samples)
            .map(|i| {
                let s = length * i as f64 / (samples - 1) as f64;
                ProfilePoint::new(s, start.0 + s * theta.cos(), start.1 + s * theta.sin(), theta, 0.0)
            })
            .collect();
        Self::new(pts, params, TerminationEvent::analytic())
    }

    /// Homothety x → λx.
    pub fn scaled(&self, lambda: f64) -> Self {
        let points = self
            .points
            .iter()
            .map(|p| ProfilePoint::new(p.s * lambda, p.r * lambda, p.u * lambda, p.theta, p.k / lambda))
            .collect();
        Self { points, params: self.params, termination: self.termination.clone() }
    }

    /// Samples with r ≤ r_max, the last one interpolated onto r = r_max when the curve
    /// crosses it as a graph.
    pub fn truncated_r(&self, r_max: f64) -> Result<Self> {
        let mut pts = Vec::new();
        for (i, p) in self.points.iter().enumerate() {
            if p.r <= r_max {
                pts.push(*p);
            } else {
                if i > 0 {
                    let a = &self.points[i - 1];
                    let s = bisect_panel(self, i - 1, |q| q.r - r_max);
                    if s > a.s {
                        pts.push(self.eval_panel(i - 1, s));
                    }
                }
                break;
            }
        }
        Self::new(pts, self.params, self.termination.clone())
    }

    pub fn polyline(&self) -> Vec<(f64, f64)> {
        self.points.iter().map(|p| (p.r, p.u)).collect()
    }

    /// Index of the panel [s_i, s_{i+1}] containing s (clamped).
    pub fn panel_of(&self, s: f64) -> usize {
        let idx = self.points.partition_point(|p| p.s <= s);
        idx.saturating_sub(1).min(self.points.len() - 2)
    }

    /// Quintic Hermite interpolation on arclength: matches position, unit tangent and
    /// curvature vector at both ends of each panel.
    pub fn eval(&self, s: f64) -> ProfilePoint {
        self.eval_panel(self.panel_of(s), s)
    }

    pub fn eval_panel(&self, i: usize, s: f64) -> ProfilePoint {
        let a = &self.points[i];
        let b = &self.points[i + 1];
        let h = b.s - a.s;
        let t = (s - a.s) / h;
        let (ta, na) = (a.tangent(), a.normal());
        let (tb, nb) = (b.tangent(), b.normal());
        let t2 = t * t;
        let t3 = t2 * t;
        let t4 = t3 * t;
        let t5 = t4 * t;
        let basis = [
            1.0 - 10.0 * t3 + 15.0 * t4 - 6.0 * t5,
            t - 6.0 * t3 + 8.0 * t4 - 3.0 * t5,
            0.5 * (t2 - 3.0 * t3 + 3.0 * t4 - t5),
            0.5 * (t3 - 2.0 * t4 + t5),
            -4.0 * t3 + 7.0 * t4 - 3.0 * t5,
            10.0 * t3 - 15.0 * t4 + 6.0 * t5,
        ];
        let d1 = [
            -30.0 * t2 + 60.0 * t3 - 30.0 * t4,
            1.0 - 18.0 * t2 + 32.0 * t3 - 15.0 * t4,
            0.5 * (2.0 * t - 9.0 * t2 + 12.0 * t3 - 5.0 * t4),
            0.5 * (3.0 * t2 - 8.0 * t3 + 5.0 * t4),
            -12.0 * t2 + 28.0 * t3 - 15.0 * t4,
            30.0 * t2 - 60.0 * t3 + 30.0 * t4,
        ];
        let d2 = [
            -60.0 * t + 180.0 * t2 - 120.0 * t3,
            -36.0 * t + 96.0 * t2 - 60.0 * t3,
            0.5 * (2.0 - 18.0 * t + 36.0 * t2 - 20.0 * t3),
            0.5 * (6.0 * t - 24.0 * t2 + 20.0 * t3),
            -24.0 * t + 84.0 * t2 - 60.0 * t3,
            60.0 * t - 180.0 * t2 + 120.0 * t3,
        ];
        // interpolate the increment from a, so derivatives do not divide |x| by h²
        let comp = |c: usize, w: &[f64; 6]| {
            let delta = if c == 0 { b.r - a.r } else { b.u - a.u };
            w[1] * h * ta[c] + w[2] * h * h * a.k * na[c] + w[3] * h * h * b.k * nb[c] + w[4] * h * tb[c] + w[5] * delta
        };
        let r = a.r + comp(0, &basis);
        let u = a.u + comp(1, &basis);
        let dr = comp(0, &d1) / h;
        let du = comp(1, &d1) / h;
        let ddr = comp(0, &d2) / (h * h);
        let ddu = comp(1, &d2) / (h * h);
        let speed = dr.hypot(du);
        let mut theta = du.atan2(dr);
        // keep the branch continuous with the panel endpoint
        while theta - a.theta > PI {
            theta -= 2.0 * PI;
        }
        while theta - a.theta < -PI {
            theta += 2.0 * PI;
        }
        let k = (dr * ddu - du * ddr) / (speed * speed * speed);
        ProfilePoint { s, r, u, theta, k }
    }

    /// ω_{p−1} ω_{q−1} ∫ f(point) r^{p−1} u^{q−1} ds over the part of the curve inside
    /// the ball |x| ≤ window (whole curve when `window` is None).
    pub fn integrate<F>(&self, window: Option<f64>, f: F) -> Result<f64>
    where
        F: Fn(&ProfilePoint) -> f64,
    {
        let params = self.params;
        let pm1 = (params.p - 1) as i32;
        let qm1 = (params.q - 1) as i32;
        let mut total = 0.0;
        for i in 0..self.points.len() - 1 {
            let a = &self.points[i];
            let b = &self.points[i + 1];
            let (lo, hi) = match window {
                None => (a.s, b.s),
                Some(radius) => match clip_panel(self, i, radius) {
                    Some(range) => range,
                    None => continue,
                },
            };
            if hi <= lo {
                continue;
            }
            let g = |s: f64| {
                let pt = self.eval_panel(i, s);
                let w = pt.r.max(0.0).powi(pm1) * pt.u.max(0.0).powi(qm1);
                if w == 0.0 {
                    return 0.0;
                }
                f(&pt) * w
            };
            total += quadrature::adaptive_gauss(&g, lo, hi, 1e-10, 12);
        }
        let value = total * params.orbit_factor();
        if !value.is_finite() {
            return Err(Error::NonFinite("surface integral".into()));
        }
        Ok(value)
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "s,r,u,theta,k")?;
        for p in &self.points {
            writeln!(w, "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}", p.s, p.r, p.u, p.theta, p.k)?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(reader: R, params: FlowParams) -> Result<Self> {
        let mut pts = Vec::new();
        for (lineno, line) in reader.lines().enumerate() {
            let line = line?;
            if lineno == 0 {
                if line.trim() != "s,r,u,theta,k" {
                    return Err(Error::Parse(format!("unexpected header `{line}`")));
                }
                continue;
            }
            if line.trim().is_empty() {
                continue;
            }
            let vals: std::result::Result<Vec<f64>, _> = line.split(',').map(|v| v.trim().parse::<f64>()).collect();
            let vals = vals.map_err(|e| Error::Parse(format!("line {}: {e}", lineno + 1)))?;
            if vals.len() != 5 {
                return Err(Error::Parse(format!("line {}: expected 5 fields", lineno + 1)));
            }
            pts.push(ProfilePoint::new(vals[0], vals[1], vals[2], vals[3], vals[4]));
        }
        Self::new(pts, params, TerminationEvent::analytic())
    }
}

fn unwrap_angles(pts: &mut [ProfilePoint]) {
    for i in 1..pts.len() {
        while pts[i].theta - pts[i - 1].theta > PI {
            pts[i].theta -= 2.0 * PI;
        }
        while pts[i].theta - pts[i - 1].theta < -PI {
            pts[i].theta += 2.0 * PI;
        }
    }
}

/// Signed curvature of the circle through three points (positive for left turns).
pub fn discrete_curvature(a: (f64, f64), b: (f64, f64), c: (f64, f64)) -> f64 {
    let (abx, aby) = (b.0 - a.0, b.1 - a.1);
    let (bcx, bcy) = (c.0 - b.0, c.1 - b.1);
    let (acx, acy) = (c.0 - a.0, c.1 - a.1);
    let cross = abx * bcy - aby * bcx;
    let denom = abx.hypot(aby) * bcx.hypot(bcy) * acx.hypot(acy);
    if denom == 0.0 {
        0.0
    } else {
        2.0 * cross / denom
    }
}

/// Arclength s in panel i where g changes sign, located by bisection on the interpolant.
fn bisect_panel<G: Fn(&ProfilePoint) -> f64>(curve: &ProfileCurve, i: usize, g: G) -> f64 {
    let mut lo = curve.points[i].s;
    let mut hi = curve.points[i + 1].s;
    let glo = g(&curve.points[i]);
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        let gm = g(&curve.eval_panel(i, mid));
        if (gm > 0.0) == (glo > 0.0) {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * hi.abs().max(1.0) {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// Portion of panel i inside the ball of the given radius, assuming at most one
/// boundary crossing per panel.
fn clip_panel(curve: &ProfileCurve, i: usize, radius: f64) -> Option<(f64, f64)> {
    let a = &curve.points[i];
    let b = &curve.points[i + 1];
    let ina = a.radius() <= radius;
    let inb = b.radius() <= radius;
    match (ina, inb) {
        (true, true) => Some((a.s, b.s)),
        (false, false) => None,
        (true, false) => Some((a.s, bisect_panel(curve, i, |p| p.radius() - radius))),
        (false, true) => Some((bisect_panel(curve, i, |p| p.radius() - radius), b.s)),
    }
}

/// Weighted area ∫ f dH^{n−1} of the generated hypersurface.
pub fn weighted_area(curve: &ProfileCurve, weight: Weight, window: Option<f64>) -> Result<f64> {
    if weight == Weight::GaussianPlus && window.is_none() {
        return Err(Error::InvalidParams("the e^{|x|^2/4} weight needs a finite window".into()));
    }
    curve.integrate(window, |pt| weight.eval(pt.r, pt.u))
}

/// Second curve argument of `intersection_count`.
#[derive(Debug, Clone, Copy)]
pub enum Crossing<'a> {
    Curve(&'a ProfileCurve),
    /// The ray u = slope·r from the origin.
    Ray(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct IntersectionReport {
    pub crossings: usize,
    pub tangencies: usize,
}

/// Count transverse crossings between two profile curves (or a curve and a ray).
pub fn intersection_count(a: &ProfileCurve, b: Crossing<'_>) -> Result<IntersectionReport> {
    let pa = a.polyline();
    match b {
        Crossing::Curve(c) => polyline_intersections(&pa, &c.polyline()),
        Crossing::Ray(slope) => {
            let extent = pa.iter().map(|&(r, u)| r.hypot(u)).fold(0.0, f64::max) * 2.0 + 1.0;
            let norm = slope.hypot(1.0);
            let ray = vec![(0.0, 0.0), (extent / norm, extent * slope / norm)];
            polyline_intersections(&pa, &ray)
        }
    }
}

const CROSSING_REL_TOL: f64 = 1e-9;

fn close(a: (f64, f64), b: (f64, f64)) -> bool {
    let scale = 1.0 + a.0.hypot(a.1);
    (a.0 - b.0).hypot(a.1 - b.1) <= CROSSING_REL_TOL * scale
}

/// Transverse crossings of two polylines. Crossings bounding an excursion smaller than
/// 1e-9 of the local scale are merged into a tangency.
pub fn polyline_intersections(a: &[(f64, f64)], b: &[(f64, f64)]) -> Result<IntersectionReport> {
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::InvalidParams("polylines need two vertices".into()));
    }
    let ends_a = [a[0], a[a.len() - 1]];
    let ends_b = [b[0], b[b.len() - 1]];
    for ea in ends_a {
        for eb in ends_b {
            if close(ea, eb) {
                return Err(Error::Ambiguous(format!(
                    "curves share an endpoint near ({:.6}, {:.6})",
                    ea.0, ea.1
                )));
            }
        }
    }
    let bbox = |seg: &[(f64, f64)]| {
        let (x0, y0) = seg[0];
        let (x1, y1) = seg[1];
        (x0.min(x1), x0.max(x1), y0.min(y1), y0.max(y1))
    };
    let bboxes_b: Vec<_> = b.windows(2).map(bbox).collect();
    // (parameter along a, parameter along b, point)
    let mut hits: Vec<(f64, f64, (f64, f64))> = Vec::new();
    let mut tangencies = 0;
    for (i, sa) in a.windows(2).enumerate() {
        let (ax0, ax1, ay0, ay1) = bbox(sa);
        for (j, sb) in b.windows(2).enumerate() {
            let (bx0, bx1, by0, by1) = bboxes_b[j];
            if ax1 < bx0 || bx1 < ax0 || ay1 < by0 || by1 < ay0 {
                continue;
            }
            match segment_intersection(sa[0], sa[1], sb[0], sb[1]) {
                SegHit::Proper(t, u) => {
                    let pt = (sa[0].0 + t * (sa[1].0 - sa[0].0), sa[0].1 + t * (sa[1].1 - sa[0].1));
                    hits.push((i as f64 + t, j as f64 + u, pt));
                }
                SegHit::Collinear => tangencies += 1,
                SegHit::None => {}
            }
        }
    }
    hits.sort_by(|x, y| x.0.partial_cmp(&y.0).unwrap());
    hits.dedup_by(|x, y| (x.0 - y.0).abs() < 1e-12 && (x.1 - y.1).abs() < 1e-12);

    // merge pairs whose intermediate excursion is negligible
    let mut crossings = 0;
    let mut k = 0;
    while k < hits.len() {
        if k + 1 < hits.len() {
            let (ta, tb, pa) = hits[k];
            let (ta2, tb2, _) = hits[k + 1];
            let excursion = excursion_between(a, b, ta, ta2, tb.min(tb2), tb.max(tb2));
            let tol = CROSSING_REL_TOL * (1.0 + pa.0.hypot(pa.1));
            if excursion <= tol {
                tangencies += 1;
                k += 2;
                continue;
            }
        }
        crossings += 1;
        k += 1;
    }
    Ok(IntersectionReport { crossings, tangencies })
}

fn excursion_between(a: &[(f64, f64)], b: &[(f64, f64)], ta0: f64, ta1: f64, tb0: f64, tb1: f64) -> f64 {
    let i0 = ta0.floor() as usize + 1;
    let i1 = ta1.floor() as usize;
    let j0 = (tb0.floor() as usize).saturating_sub(1);
    let j1 = ((tb1.floor() as usize) + 2).min(b.len() - 1);
    let mut best = 0.0f64;
    for &pt in a.iter().take(i1 + 1).skip(i0) {
        let mut dmin = f64::INFINITY;
        for j in j0..j1 {
            dmin = dmin.min(point_segment_distance(pt, b[j], b[j + 1]));
        }
        best = best.max(dmin);
    }
    best
}

fn point_segment_distance(p: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len2 = dx * dx + dy * dy;
    let t = if len2 == 0.0 { 0.0 } else { (((p.0 - a.0) * dx + (p.1 - a.1) * dy) / len2).clamp(0.0, 1.0) };
    (p.0 - a.0 - t * dx).hypot(p.1 - a.1 - t * dy)
}

enum SegHit {
    Proper(f64, f64),
    Collinear,
    None,
}

/// Half-open segment intersection: parameters in [0, 1) on both segments.
fn segment_intersection(p0: (f64, f64), p1: (f64, f64), q0: (f64, f64), q1: (f64, f64)) -> SegHit {
    let r = (p1.0 - p0.0, p1.1 - p0.1);
    let s = (q1.0 - q0.0, q1.1 - q0.1);
    let denom = r.0 * s.1 - r.1 * s.0;
    let qp = (q0.0 - p0.0, q0.1 - p0.1);
    let scale = (r.0.hypot(r.1) * s.0.hypot(s.1)).max(f64::MIN_POSITIVE);
    if denom.abs() <= 1e-14 * scale {
        let cross = qp.0 * r.1 - qp.1 * r.0;
        if cross.abs() <= 1e-14 * scale.sqrt() * (1.0 + qp.0.hypot(qp.1)) {
            // overlapping collinear pieces count as contact, not crossing
            let rr = r.0 * r.0 + r.1 * r.1;
            let t0 = (qp.0 * r.0 + qp.1 * r.1) / rr;
            let t1 = t0 + (s.0 * r.0 + s.1 * r.1) / rr;
            if t0.max(t1) >= 0.0 && t0.min(t1) < 1.0 {
                return SegHit::Collinear;
            }
        }
        return SegHit::None;
    }
    let t = (qp.0 * s.1 - qp.1 * s.0) / denom;
    let u = (qp.0 * r.1 - qp.1 * r.0) / denom;
    if (0.0..1.0).contains(&t) && (0.0..1.0).contains(&u) {
        SegHit::Proper(t, u)
    } else {
        SegHit::None
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn p22() -> FlowParams {
        FlowParams::new(2, 2).unwrap()
    }

    #[test]
    fn sphere_areas() {
        assert_eq!(unit_sphere_area(0), 2.0);
        assert_relative_eq!(unit_sphere_area(1), 2.0 * PI, max_relative = 1e-15);
        assert_relative_eq!(unit_sphere_area(2), 4.0 * PI, max_relative = 1e-15);
        assert_relative_eq!(unit_sphere_area(3), 2.0 * PI * PI, max_relative = 1e-15);
        assert_relative_eq!(unit_sphere_area(4), 8.0 * PI * PI / 3.0, max_relative = 1e-15);
    }

    #[test]
    fn cone_slopes() {
        let c = cone_slope(p22()).unwrap();
        assert_relative_eq!(c.lambda_s, 1.0);
        assert_relative_eq!(c.alpha_s, PI / 4.0);
        let c = cone_slope(FlowParams::new(2, 3).unwrap()).unwrap();
        assert_relative_eq!(c.lambda_s, 2f64.sqrt(), max_relative = 1e-15);
        let c = cone_slope(FlowParams::new(3, 2).unwrap()).unwrap();
        assert_relative_eq!(c.lambda_s, 0.5f64.sqrt(), max_relative = 1e-15);
        assert!(cone_slope(FlowParams::new(1, 3).unwrap()).is_err());
        assert!(FlowParams::new(2, 1).is_err());
        assert!(FlowParams::new(0, 3).is_err());
    }

    #[test]
    fn unit_sphere_principal_curvatures() {
        let h = 2f64.sqrt() / 2.0;
        let pt = ProfilePoint::new(0.0, h, h, -PI / 4.0, -1.0);
        let pc = principal_curvatures(&pt, &p22()).unwrap();
        for (v, m) in &pc {
            assert_relative_eq!(*v, -1.0, max_relative = 1e-14);
            assert_eq!(*m, 1);
        }
        assert_relative_eq!(mean_curvature(&pt, &p22()).unwrap(), -3.0, max_relative = 1e-14);
    }

    #[test]
    fn cone_is_minimal() {
        for (p, q) in [(2, 2), (2, 3), (3, 2), (4, 3), (2, 6)] {
            let params = FlowParams::new(p, q).unwrap();
            let c = cone_slope(params).unwrap();
            for r in [0.1, 1.0, 7.5] {
                let pt = ProfilePoint::new(0.0, r, c.lambda_s * r, c.alpha_s, 0.0);
                let h = mean_curvature(&pt, &params).unwrap();
                assert!(h.abs() < 1e-12 * (1.0 + 1.0 / r), "H = {h}");
                let pcs = principal_curvatures(&pt, &params).unwrap();
                let sum: f64 = pcs.iter().map(|(v, m)| v * *m as f64).sum();
                assert!((sum - h).abs() < 1e-14);
                let a2 = second_fundamental_norm(&pt, &params).unwrap();
                let expect = params.pm1() * c.alpha_s.sin().powi(2) / (r * r)
                    + params.qm1() * c.alpha_s.cos().powi(2) / (pt.u * pt.u);
                assert_relative_eq!(a2, expect, max_relative = 1e-14);
            }
        }
    }

    #[test]
    fn cylinder_curvatures() {
        let params = FlowParams::new(3, 4).unwrap();
        let radius = 1.7;
        let pt = ProfilePoint::new(0.0, 2.0, radius, 0.0, 0.0);
        let pc = principal_curvatures(&pt, &params).unwrap();
        assert_eq!(pc[0], (0.0, 1));
        assert_relative_eq!(pc[1].0, -1.0 / radius);
        assert_eq!(pc[1].1, 3);
        assert_eq!(pc[2], (0.0, 2));
        // shrinking cylinder radius solves H + x·ν/2 = 0
        let u = (2.0 * params.qm1()).sqrt();
        let pt = ProfilePoint::new(0.0, 0.3, u, 0.0, 0.0);
        let h = mean_curvature(&pt, &params).unwrap();
        assert_relative_eq!(h, -u / 2.0, max_relative = 1e-14);
        assert_relative_eq!(h + pt.support() / 2.0, 0.0, epsilon = 1e-14);
    }

    #[test]
    fn axis_points_rejected() {
        let pt = ProfilePoint::new(0.0, 0.0, 1.0, 0.0, 0.0);
        assert!(matches!(mean_curvature(&pt, &p22()), Err(Error::AxisPoint { .. })));
        let pt = ProfilePoint::new(0.0, 1.0, 0.0, 0.0, 0.0);
        assert!(second_fundamental_norm(&pt, &p22()).is_err());
    }

    #[test]
    fn sphere_in_r3_norm() {
        let params = FlowParams::axial(3).unwrap();
        let h = 2f64.sqrt() / 2.0;
        let pt = ProfilePoint::new(0.0, h, h, -PI / 4.0, -1.0);
        assert_relative_eq!(second_fundamental_norm(&pt, &params).unwrap(), 2.0, max_relative = 1e-14);
    }

    #[test]
    fn sphere_profile_mean_curvature() {
        for (p, q) in [(1, 2), (2, 2), (3, 5)] {
            let params = FlowParams::new(p, q).unwrap();
            let radius = 1.3;
            let curve = ProfileCurve::sphere(radius, 50, params).unwrap();
            for pt in &curve.points[1..curve.len() - 1] {
                let h = mean_curvature(pt, &params).unwrap();
                let expect = -((params.n - 1) as f64) / radius;
                assert!((h - expect).abs() <= 1e-10 * expect.abs());
            }
        }
    }

    #[test]
    fn quarter_circle_area() {
        let params = FlowParams::axial(3).unwrap();
        let curve = ProfileCurve::sphere(1.0, 40, params).unwrap();
        let a = weighted_area(&curve, Weight::Unit, None).unwrap();
        assert_relative_eq!(a, 4.0 * PI, max_relative = 1e-8);
        for (p, q, radius) in [(2, 2, 1.5), (3, 4, 0.7)] {
            let params = FlowParams::new(p, q).unwrap();
            let curve = ProfileCurve::sphere(radius, 60, params).unwrap();
            let a = weighted_area(&curve, Weight::Unit, None).unwrap();
            let expect = unit_sphere_area(params.n - 1) * f64::powi(radius, params.n as i32 - 1);
            assert_relative_eq!(a, expect, max_relative = 1e-8);
        }
    }

    #[test]
    fn windowed_area_of_sphere() {
        let params = FlowParams::axial(3).unwrap();
        let curve = ProfileCurve::sphere(1.0, 40, params).unwrap();
        assert_eq!(weighted_area(&curve, Weight::Unit, Some(0.5)).unwrap(), 0.0);
        let a = weighted_area(&curve, Weight::Unit, Some(2.0)).unwrap();
        assert_relative_eq!(a, 4.0 * PI, max_relative = 1e-8);
        assert!(weighted_area(&curve, Weight::GaussianPlus, None).is_err());
    }

    #[test]
    fn shrinker_cylinder_gaussian_area() {
        // oracle: direct 1-D quadrature of r^{p-1} e^{-r^2/4}
        for (p, q) in [(2, 2), (3, 2), (2, 4)] {
            let params = FlowParams::new(p, q).unwrap();
            let u0 = (2.0 * params.qm1()).sqrt();
            let length = 6.0;
            let curve = ProfileCurve::segment((0.0, u0), 0.0, length, 61, params).unwrap();
            let got = weighted_area(&curve, Weight::GaussianMinus, None).unwrap();
            let n = 200_000;
            let h = length / n as f64;
            let mut simpson = 0.0;
            for i in 0..=n {
                let r = i as f64 * h;
                let w = if i == 0 || i == n { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 };
                simpson += w * r.powi(p as i32 - 1) * (-r * r / 4.0).exp();
            }
            simpson *= h / 3.0;
            let expect = params.orbit_factor()
                * (2.0 * params.qm1()).powf(params.qm1() / 2.0)
                * (-params.qm1() / 2.0).exp()
                * simpson;
            assert_relative_eq!(got, expect, max_relative = 1e-9);
        }
    }

    #[test]
    fn circle_vs_diagonal() {
        let params = p22();
        let circle = ProfileCurve::circle_arc((0.0, 0.0), 2.0, PI / 2.0, 0.0, 200, params).unwrap();
        let rep = intersection_count(&circle, Crossing::Ray(1.0)).unwrap();
        assert_eq!(rep.crossings, 1);
        assert!(intersection_count(&circle, Crossing::Curve(&circle)).is_err());
    }

    #[test]
    fn tangent_touch_is_not_a_crossing() {
        // parabola u = r^2 touching the r-axis line u = 0 ... shifted above the segment
        let a: Vec<(f64, f64)> = (0..=200).map(|i| {
            let r = -1.0 + i as f64 * 0.01;
            (r + 2.0, r * r * 1e-12 + 1.0)
        }).collect();
        let b = vec![(0.5, 1.0 + 1e-13), (3.5, 1.0 + 1e-13)];
        let rep = polyline_intersections(&a, &b).unwrap();
        assert_eq!(rep.crossings, 0);
        assert_eq!(rep.tangencies, 1);
    }

    #[test]
    fn csv_round_trip_header() {
        let params = p22();
        let curve = ProfileCurve::sphere(1.0, 5, params).unwrap();
        let mut buf = Vec::new();
        curve.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("s,r,u,theta,k\n"));
        let back = ProfileCurve::read_csv(std::io::Cursor::new(buf), params).unwrap();
        assert_eq!(back.points, curve.points);
    }

    #[test]
    fn hermite_reproduces_circle() {
        let params = p22();
        let curve = ProfileCurve::sphere(1.0, 30, params).unwrap();
        for i in 0..200 {
            let s = curve.length() * (i as f64 + 0.5) / 200.0;
            let pt = curve.eval(s);
            assert!((pt.radius() - 1.0).abs() < 1e-9);
            assert!((pt.k + 1.0).abs() < 1e-5);
        }
    }
}
