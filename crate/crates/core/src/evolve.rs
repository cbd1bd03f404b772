//! Reduced mean curvature flow of profile curves by explicit front tracking, with
//! self-similarity residuals and intersection-count audits.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{discrete_curvature, intersection_count, Crossing, FlowParams, ProfileCurve, ProfilePoint};
use crate::ode::{TerminationEvent, TerminationTag};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemeConfig {
    /// Fraction of the explicit stability bound used per step, in (0, 1].
    pub dt_safety: f64,
    /// Length scale of the scheme: curves whose extent or neck falls below
    /// 10·resample_tol are treated as singular.
    pub resample_tol: f64,
    /// Marker count, kept fixed by resampling.
    pub markers: usize,
    /// Interval between recorded snapshots.
    pub snapshot_dt: f64,
    pub max_steps: usize,
    /// Curves whose intersection counts with each state are recorded in the diagnostics.
    #[serde(default)]
    pub reference_curves: Vec<ProfileCurve>,
}

impl Default for SchemeConfig {
    fn default() -> Self {
        Self {
            dt_safety: 0.4,
            resample_tol: 1e-3,
            markers: 200,
            snapshot_dt: 0.01,
            max_steps: 20_000_000,
            reference_curves: Vec::new(),
        }
    }
}

impl SchemeConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt_safety > 0.0 && self.dt_safety <= 1.0) {
            return Err(Error::InvalidParams("dt_safety must lie in (0, 1]".into()));
        }
        if !(self.resample_tol > 0.0) || !(self.snapshot_dt > 0.0) || self.markers < 5 || self.max_steps == 0 {
            return Err(Error::InvalidParams(
                "resample_tol and snapshot_dt must be positive, markers >= 5, max_steps >= 1".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowState {
    pub t: f64,
    pub curve: ProfileCurve,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepDiagnostic {
    pub t: f64,
    pub max_h: f64,
    pub min_u: f64,
    /// Intersection counts with each reference curve (None when ambiguous).
    pub counts: Vec<Option<usize>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FlowStop {
    ReachedEnd,
    Singular,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowTrajectory {
    pub states: Vec<FlowState>,
    pub scheme: SchemeConfig,
    pub diagnostics: Vec<StepDiagnostic>,
    pub stop: FlowStop,
    /// Extrapolated singular time when the run stopped at a singularity.
    pub singular_time: Option<f64>,
    pub steps: usize,
}

impl FlowTrajectory {
    pub fn last(&self) -> &FlowState {
        self.states.last().unwrap()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum End {
    /// On r = 0, meeting it orthogonally.
    AxisR,
    /// On u = 0, meeting it orthogonally.
    AxisU,
    Free,
}

fn classify_end(p: (f64, f64), scale: f64) -> End {
    let tol = 1e-9 * scale;
    if p.0.abs() <= tol {
        End::AxisR
    } else if p.1.abs() <= tol {
        End::AxisU
    } else {
        End::Free
    }
}

/// Move an end that starts just off an axis, meeting it orthogonally, onto the axis by
/// parabolic extrapolation (as profiles from a series start do).
fn snap_to_axis(x: &mut (f64, f64), pt: &ProfilePoint, scale: f64) {
    let near = 1e-2 * scale;
    let (s, c) = pt.theta.sin_cos();
    if x.0 > 0.0 && x.0 <= near && s.abs() < 0.1 {
        *x = (0.0, x.1 - s / c * x.0 / 2.0);
    } else if x.1 > 0.0 && x.1 <= near && c.abs() < 0.1 {
        *x = (x.0 - c / s * x.1 / 2.0, 0.0);
    }
}

fn ghost(end: End, x: (f64, f64), nb: (f64, f64)) -> (f64, f64) {
    match end {
        End::AxisR => (-nb.0, nb.1),
        End::AxisU => (nb.0, -nb.1),
        End::Free => (2.0 * x.0 - nb.0, 2.0 * x.1 - nb.1),
    }
}

/// Unit tangent at b of the circle through a, b, c (the chord direction when collinear).
fn circle_tangent_vec(a: (f64, f64), b: (f64, f64), c: (f64, f64)) -> (f64, f64) {
    let (ax, ay) = (a.0 - b.0, a.1 - b.1);
    let (cx, cy) = (c.0 - b.0, c.1 - b.1);
    let d = 2.0 * (ax * cy - ay * cx);
    let chord = (c.0 - a.0, c.1 - a.1);
    let a2 = ax * ax + ay * ay;
    let c2 = cx * cx + cy * cy;
    let (mut tx, mut ty) = if d.abs() <= 1e-14 * (a2 * c2).sqrt().max(f64::MIN_POSITIVE) {
        chord
    } else {
        // circumcentre relative to b; the tangent is perpendicular to the radius
        let ox = (cy * a2 - ay * c2) / d;
        let oy = (ax * c2 - cx * a2) / d;
        (oy, -ox)
    };
    if tx * chord.0 + ty * chord.1 < 0.0 {
        tx = -tx;
        ty = -ty;
    }
    let norm = (tx * tx + ty * ty).sqrt();
    (tx / norm, ty / norm)
}

#[cfg(test)]
fn circle_tangent(a: (f64, f64), b: (f64, f64), c: (f64, f64)) -> f64 {
    let (tx, ty) = circle_tangent_vec(a, b, c);
    ty.atan2(tx)
}

struct Front {
    xs: Vec<(f64, f64)>,
    ends: (End, End),
    params: FlowParams,
}

struct Geometry {
    /// Unit tangents (cos θ, sin θ).
    tangent: Vec<(f64, f64)>,
    k: Vec<f64>,
    h: Vec<f64>,
}

impl Front {
    fn neighbours(&self, i: usize) -> ((f64, f64), (f64, f64)) {
        let n = self.xs.len();
        let prev = if i == 0 { ghost(self.ends.0, self.xs[0], self.xs[1]) } else { self.xs[i - 1] };
        let next = if i == n - 1 { ghost(self.ends.1, self.xs[n - 1], self.xs[n - 2]) } else { self.xs[i + 1] };
        (prev, next)
    }

    fn end_at(&self, i: usize) -> Option<End> {
        if i == 0 {
            Some(self.ends.0)
        } else if i == self.xs.len() - 1 {
            Some(self.ends.1)
        } else {
            None
        }
    }

    fn geometry(&self) -> Geometry {
        let n = self.xs.len();
        let (pm1, qm1) = (self.params.pm1(), self.params.qm1());
        let mut tangent = Vec::with_capacity(n);
        let mut k = Vec::with_capacity(n);
        let mut h = Vec::with_capacity(n);
        for i in 0..n {
            let (a, c) = self.neighbours(i);
            let b = self.xs[i];
            let ki = discrete_curvature(a, b, c);
            let (cos, sin) = circle_tangent_vec(a, b, c);
            // axis limits: sin θ / r → k at r = 0 and cos θ / u → −k at u = 0
            let hi = match self.end_at(i) {
                Some(End::AxisR) => ki + pm1 * ki - qm1 * cos / b.1,
                Some(End::AxisU) => ki + qm1 * ki + if self.params.p >= 2 { pm1 * sin / b.0 } else { 0.0 },
                _ => {
                    let mut v = ki - qm1 * cos / b.1;
                    if self.params.p >= 2 {
                        v += pm1 * sin / b.0;
                    }
                    v
                }
            };
            tangent.push((cos, sin));
            k.push(ki);
            h.push(hi);
        }
        Geometry { tangent, k, h }
    }

    fn min_spacing(&self) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = 0.0f64;
        for w in self.xs.windows(2) {
            let (dx, dy) = (w[1].0 - w[0].0, w[1].1 - w[0].1);
            let d = (dx * dx + dy * dy).sqrt();
            lo = lo.min(d);
            hi = hi.max(d);
        }
        (lo, hi)
    }

    fn enforce_ends(&mut self) {
        let n = self.xs.len();
        for (i, end) in [(0, self.ends.0), (n - 1, self.ends.1)] {
            match end {
                End::AxisR => self.xs[i].0 = 0.0,
                End::AxisU => self.xs[i].1 = 0.0,
                End::Free => {}
            }
        }
    }

    /// Cubic Hermite re-interpolation at uniform chord arclength.
    fn resample(&mut self, m: usize) {
        let n = self.xs.len();
        let mut s = vec![0.0; n];
        for i in 1..n {
            s[i] = s[i - 1] + (self.xs[i].0 - self.xs[i - 1].0).hypot(self.xs[i].1 - self.xs[i - 1].1);
        }
        let slope = |i: usize| -> (f64, f64) {
            let (a, c) = self.neighbours(i);
            let ds = if i == 0 {
                2.0 * (s[1] - s[0])
            } else if i == n - 1 {
                2.0 * (s[n - 1] - s[n - 2])
            } else {
                s[i + 1] - s[i - 1]
            };
            ((c.0 - a.0) / ds, (c.1 - a.1) / ds)
        };
        let total = s[n - 1];
        let mut out = Vec::with_capacity(m);
        let mut j = 0;
        for i in 0..m {
            let target = total * i as f64 / (m - 1) as f64;
            while j + 2 < n && s[j + 1] < target {
                j += 1;
            }
            let hseg = s[j + 1] - s[j];
            let t = if hseg > 0.0 { ((target - s[j]) / hseg).clamp(0.0, 1.0) } else { 0.0 };
            let (t2, t3) = (t * t, t * t * t);
            let (h00, h10, h01, h11) = (2.0 * t3 - 3.0 * t2 + 1.0, t3 - 2.0 * t2 + t, -2.0 * t3 + 3.0 * t2, t3 - t2);
            let (m0, m1) = (slope(j), slope(j + 1));
            let (p0, p1) = (self.xs[j], self.xs[j + 1]);
            out.push((
                h00 * p0.0 + h10 * hseg * m0.0 + h01 * p1.0 + h11 * hseg * m1.0,
                h00 * p0.1 + h10 * hseg * m0.1 + h01 * p1.1 + h11 * hseg * m1.1,
            ));
        }
        out[0] = self.xs[0];
        out[m - 1] = self.xs[n - 1];
        self.xs = out;
        self.enforce_ends();
    }

    fn curve(&self) -> Result<ProfileCurve> {
        let g = self.geometry();
        let mut s = 0.0;
        let mut pts = Vec::with_capacity(self.xs.len());
        for (i, x) in self.xs.iter().enumerate() {
            if i > 0 {
                s += (x.0 - self.xs[i - 1].0).hypot(x.1 - self.xs[i - 1].1);
            }
            pts.push(ProfilePoint::new(s, x.0, x.1, g.tangent[i].1.atan2(g.tangent[i].0), g.k[i]));
        }
        for i in 1..pts.len() {
            while pts[i].theta - pts[i - 1].theta > std::f64::consts::PI {
                pts[i].theta -= 2.0 * std::f64::consts::PI;
            }
            while pts[i].theta - pts[i - 1].theta < -std::f64::consts::PI {
                pts[i].theta += 2.0 * std::f64::consts::PI;
            }
        }
        let location = *pts.last().unwrap();
        ProfileCurve::new(pts, self.params, TerminationEvent { tag: TerminationTag::Constructed, location })
    }

    /// Largest coordinate span, and the smallest distance to an axis over markers not
    /// pinned to that axis (the neck).
    fn extent_and_neck(&self) -> (f64, f64) {
        let (mut rmin, mut rmax, mut umin, mut umax) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
        for &(r, u) in &self.xs {
            rmin = rmin.min(r);
            rmax = rmax.max(r);
            umin = umin.min(u);
            umax = umax.max(u);
        }
        let n = self.xs.len();
        let mut neck = f64::INFINITY;
        for (i, &(r, u)) in self.xs.iter().enumerate() {
            let end = self.end_at(i);
            if end != Some(End::AxisU) && !(i > 0 && i < n - 1 && self.near_end(i, End::AxisU)) {
                neck = neck.min(u);
            }
            if self.params.p >= 2 && end != Some(End::AxisR) && !self.near_end(i, End::AxisR) {
                neck = neck.min(r);
            }
        }
        ((rmax - rmin).max(umax - umin), neck)
    }

    /// Markers within three spacings of an end pinned to the given axis.
    fn near_end(&self, i: usize, kind: End) -> bool {
        let n = self.xs.len();
        (self.ends.0 == kind && i <= 3) || (self.ends.1 == kind && i + 4 >= n)
    }
}

fn diagnostic(t: f64, front: &Front, curve: &ProfileCurve, refs: &[ProfileCurve]) -> StepDiagnostic {
    let g = front.geometry();
    let max_h = g.h.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let min_u = front.xs.iter().map(|x| x.1).fold(f64::INFINITY, f64::min);
    let counts = refs.iter().map(|r| intersection_count(curve, Crossing::Curve(r)).ok().map(|c| c.crossings)).collect();
    StepDiagnostic { t, max_h, min_u, counts }
}

/// Run the reduced flow (normal velocity H) from `t_start` to `t_end`.
pub fn run_flow(
    init: &ProfileCurve,
    t_start: f64,
    t_end: f64,
    params: &FlowParams,
    scheme: &SchemeConfig,
) -> Result<FlowTrajectory> {
    scheme.validate()?;
    params.validate()?;
    if !(t_end > t_start) {
        return Err(Error::InvalidParams(format!("t_end = {t_end} must exceed t_start = {t_start}")));
    }
    let m = scheme.markers;
    let length = init.length();
    // initial markers at uniform arclength of the interpolated curve
    let xs: Vec<(f64, f64)> = (0..m)
        .map(|i| {
            let s = init.first().s + length * i as f64 / (m - 1) as f64;
            let p = init.eval(s);
            (p.r, p.u)
        })
        .collect();
    let scale = xs.iter().fold(0.0f64, |a, x| a.max(x.0.abs()).max(x.1.abs()));
    let mut xs = xs;
    snap_to_axis(&mut xs[0], init.first(), scale);
    snap_to_axis(&mut xs[m - 1], init.last(), scale);
    let ends = (classify_end(xs[0], scale), classify_end(xs[m - 1], scale));
    let mut front = Front { xs, ends, params: *params };
    front.enforce_ends();
    for (i, x) in front.xs.iter().enumerate() {
        let pinned = matches!(front.end_at(i), Some(End::AxisU));
        if x.1 < 0.0 || (x.1 == 0.0 && !pinned) {
            return Err(Error::AxisPoint { r: x.0, u: x.1 });
        }
    }
    let diff = params.p.max(params.q) as f64;
    let threshold = 10.0 * scheme.resample_tol;
    let mut t = t_start;
    let mut steps = 0usize;
    let mut snap_index = 1usize;
    let mut next_snap = t_start + scheme.snapshot_dt;
    let t_eps = 1e-12 * t_end.abs().max(t_start.abs()).max(1.0);
    let first_curve = front.curve()?;
    let mut diagnostics = vec![diagnostic(t, &front, &first_curve, &scheme.reference_curves)];
    let mut states = vec![FlowState { t, curve: first_curve }];
    // coarse history of (t, extent², neck²) for extrapolating a singular time
    let (e0, n0) = front.extent_and_neck();
    let mut hist_extent = (t, e0 * e0);
    let mut hist_neck = (t, n0 * n0);
    let mut stop = FlowStop::ReachedEnd;
    let mut singular_time = None;

    while t < t_end {
        let (mut hmin, hmax) = front.min_spacing();
        if hmax > 2.0 * hmin {
            front.resample(m);
            hmin = front.min_spacing().0;
        }
        let mut dt = scheme.dt_safety * hmin * hmin / (2.0 * diff);
        let mut snap = false;
        let target = next_snap.min(t_end);
        if t + dt >= target - t_eps {
            dt = target - t;
            snap = true;
        }
        let estimate = |front: &Front, t: f64| {
            let (extent, neck) = front.extent_and_neck();
            extrapolate(t, extent, neck, hist_extent, hist_neck)
        };
        if dt <= 1e-15 * t.abs().max(1.0) || steps >= scheme.max_steps {
            return Err(Error::SingularStop { t, t_extinct: estimate(&front, t) });
        }
        let g = front.geometry();
        for (x, (t, h)) in front.xs.iter_mut().zip(g.tangent.iter().zip(&g.h)) {
            x.0 -= dt * h * t.1;
            x.1 += dt * h * t.0;
        }
        front.enforce_ends();
        t += dt;
        steps += 1;
        if front.xs.iter().any(|x| !x.0.is_finite() || !x.1.is_finite()) {
            return Err(Error::SingularStop { t, t_extinct: estimate(&front, t) });
        }
        let (extent, neck) = front.extent_and_neck();
        if extent * extent < 0.5 * hist_extent.1 {
            hist_extent = (t, extent * extent);
        }
        if neck * neck < 0.5 * hist_neck.1 {
            hist_neck = (t, neck * neck);
        }
        let singular = extent < threshold || neck < threshold;
        if snap && t_end - t <= t_eps {
            t = t.max(t_end);
        }
        if snap || singular || t >= t_end {
            let curve = front.curve()?;
            diagnostics.push(diagnostic(t, &front, &curve, &scheme.reference_curves));
            states.push(FlowState { t, curve });
            if snap {
                while next_snap <= t + t_eps {
                    snap_index += 1;
                    next_snap = t_start + scheme.snapshot_dt * snap_index as f64;
                }
            }
        }
        if singular {
            stop = FlowStop::Singular;
            singular_time = Some(extrapolate(t, extent, neck, hist_extent, hist_neck));
            break;
        }
    }
    Ok(FlowTrajectory { states, scheme: scheme.clone(), diagnostics, stop, singular_time, steps })
}

/// Singular time from the linear decay of extent² or neck², whichever vanishes first.
fn extrapolate(t: f64, extent: f64, neck: f64, he: (f64, f64), hn: (f64, f64)) -> f64 {
    let lin = |(t0, q0): (f64, f64), q: f64| {
        if t > t0 && q0 > q {
            t + q * (t - t0) / (q0 - q)
        } else {
            f64::INFINITY
        }
    };
    lin(he, extent * extent).min(lin(hn, neck * neck))
}

/// Radius at time t of the sphere of initial radius r0 in R^n.
pub fn sphere_radius(r0: f64, n: usize, t: f64) -> f64 {
    (r0 * r0 - 2.0 * (n as f64 - 1.0) * t).max(0.0).sqrt()
}

/// Height at time t of the cylinder u ≡ r0 with q−1 round directions.
pub fn cylinder_radius(r0: f64, q: usize, t: f64) -> f64 {
    (r0 * r0 - 2.0 * (q as f64 - 1.0) * t).max(0.0).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SimilarityMode {
    /// Compare against (−t)^{−1/2}·state.
    Shrink,
    /// Compare against t^{−1/2}·state.
    Expand,
}

fn point_segment(p: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let l2 = dx * dx + dy * dy;
    let t = if l2 > 0.0 { (((p.0 - a.0) * dx + (p.1 - a.1) * dy) / l2).clamp(0.0, 1.0) } else { 0.0 };
    (p.0 - a.0 - t * dx).hypot(p.1 - a.1 - t * dy)
}

fn point_polyline(p: (f64, f64), line: &[(f64, f64)]) -> f64 {
    line.windows(2).map(|w| point_segment(p, w[0], w[1])).fold(f64::INFINITY, f64::min)
}

/// Dense polyline of a profile, sampled on its interpolant.
pub fn densify(curve: &ProfileCurve, spacing: f64) -> Vec<(f64, f64)> {
    let len = curve.length();
    let m = ((len / spacing).ceil() as usize).max(2);
    (0..=m)
        .map(|i| {
            let p = curve.eval(curve.first().s + len * i as f64 / m as f64);
            (p.r, p.u)
        })
        .collect()
}

/// Two-sided distance between two polylines, restricted to points with |x| ≤ window.
pub fn windowed_distance(a: &[(f64, f64)], b: &[(f64, f64)], window: f64) -> Option<f64> {
    let inside = |p: &&(f64, f64)| p.0.hypot(p.1) <= window;
    let mut worst: Option<f64> = None;
    for p in a.iter().filter(inside) {
        let d = point_polyline(*p, b);
        worst = Some(worst.map_or(d, |w| w.max(d)));
    }
    for p in b.iter().filter(inside) {
        let d = point_polyline(*p, a);
        worst = Some(worst.map_or(d, |w| w.max(d)));
    }
    worst
}

/// Largest distance over the recorded states between the dilated state and `profile`,
/// within |x| ≤ window (default: the smaller of the two extents, with 0.1% slack).
pub fn self_similarity_residual(
    traj: &FlowTrajectory,
    profile: &ProfileCurve,
    mode: SimilarityMode,
    window: Option<f64>,
) -> Result<f64> {
    let reference = densify(profile, 1e-3 * profile.length().max(1e-3));
    let ref_extent = reference.iter().fold(0.0f64, |m, p| m.max(p.0.hypot(p.1)));
    let mut worst = 0.0f64;
    let mut used = 0;
    for st in &traj.states {
        let scale = match mode {
            SimilarityMode::Shrink if st.t < 0.0 => (-st.t).sqrt(),
            SimilarityMode::Expand if st.t > 0.0 => st.t.sqrt(),
            _ => return Err(Error::InvalidParams(format!("state at t = {} has the wrong sign for {mode:?}", st.t))),
        };
        let poly: Vec<(f64, f64)> = st.curve.polyline().iter().map(|p| (p.0 / scale, p.1 / scale)).collect();
        let extent = poly.iter().fold(0.0f64, |m, p| m.max(p.0.hypot(p.1)));
        let w = window.unwrap_or((1.0 + 1e-3) * extent.min(ref_extent));
        match windowed_distance(&poly, &reference, w) {
            Some(d) => {
                worst = worst.max(d);
                used += 1;
            }
            None => continue,
        }
    }
    if used == 0 {
        return Err(Error::EmptyWindow("no state overlaps the reference window".into()));
    }
    Ok(worst)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum AuditReference {
    /// A fixed curve, such as a minimal profile.
    Static(ProfileCurve),
    /// The shrinker profile δ, compared at time t < 0 as √(−t)·δ.
    RescaledShrinker(ProfileCurve),
    /// The ray u = slope·r.
    Ray(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub times: Vec<f64>,
    /// Counts per state; ambiguous counts are carried over from the previous state.
    pub counts: Vec<usize>,
    pub tangencies: Vec<usize>,
    /// (t, message) for every ambiguous count.
    pub events: Vec<(f64, String)>,
    pub nonincreasing: bool,
}

pub fn intersection_audit(traj: &FlowTrajectory, reference: &AuditReference) -> Result<AuditReport> {
    let mut times = Vec::new();
    let mut counts: Vec<usize> = Vec::new();
    let mut tangencies = Vec::new();
    let mut events = Vec::new();
    for st in &traj.states {
        let rep = match reference {
            AuditReference::Static(c) => intersection_count(&st.curve, Crossing::Curve(c)),
            AuditReference::RescaledShrinker(c) => {
                if st.t >= 0.0 {
                    return Err(Error::InvalidParams("rescaled shrinker reference needs t < 0".into()));
                }
                let moving = c.scaled((-st.t).sqrt());
                intersection_count(&st.curve, Crossing::Curve(&moving))
            }
            AuditReference::Ray(slope) => intersection_count(&st.curve, Crossing::Ray(*slope)),
        };
        times.push(st.t);
        match rep {
            Ok(r) => {
                counts.push(r.crossings);
                tangencies.push(r.tangencies);
            }
            Err(Error::Ambiguous(msg)) => {
                events.push((st.t, msg));
                counts.push(counts.last().copied().unwrap_or(0));
                tangencies.push(1);
            }
            Err(e) => return Err(e),
        }
    }
    let nonincreasing = counts.windows(2).all(|w| w[1] <= w[0]);
    Ok(AuditReport { times, counts, tangencies, events, nonincreasing })
}

/// Crossings with the ray u = slope·r of the shrinker at t = −1 and of its continuation
/// at t = +1.
pub fn cone_count_drop(shrinker: &ProfileCurve, expander: &ProfileCurve, slope: f64) -> Result<(usize, usize)> {
    let before = intersection_count(shrinker, Crossing::Ray(slope))?.crossings;
    let after = intersection_count(expander, Crossing::Ray(slope))?.crossings;
    Ok((before, after))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ArchiveEntry {
    pub t: f64,
    pub file: String,
    pub min_u: f64,
    #[serde(rename = "max_H")]
    pub max_h: f64,
    pub counts: Vec<Option<usize>>,
}

/// Write one CSV per snapshot plus `index.json`; returns the written paths.
pub fn write_archive(traj: &FlowTrajectory, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut paths = Vec::new();
    let mut index = Vec::new();
    for (i, (st, d)) in traj.states.iter().zip(&traj.diagnostics).enumerate() {
        let name = format!("snapshot_{i:05}.csv");
        let path = dir.join(&name);
        let mut buf = Vec::new();
        st.curve.write_csv(&mut buf)?;
        fs::write(&path, buf)?;
        paths.push(path);
        index.push(ArchiveEntry { t: st.t, file: name, min_u: d.min_u, max_h: d.max_h, counts: d.counts.clone() });
    }
    let path = dir.join("index.json");
    fs::write(&path, serde_json::to_string_pretty(&index)? + "\n")?;
    paths.push(path);
    Ok(paths)
}
