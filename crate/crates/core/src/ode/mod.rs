//! Reduced minimal, expander and shrinker equations: arclength, graph and phase-plane
//! forms, series starts at the axis, and linearizations over the cone.

pub mod linear;
pub mod rk;

use std::f64::consts::FRAC_PI_2;
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{FlowParams, ProfileCurve, ProfilePoint};
use rk::{Dopri5, StepControl};

pub use linear::{linear_basis, series_mode, LinearBasis, LinearSample};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EquationKind {
    Minimal,
    Expander,
    Shrinker,
    LinearizedExpander,
    LinearizedShrinker,
}

impl EquationKind {
    pub fn is_linearized(&self) -> bool {
        matches!(self, Self::LinearizedExpander | Self::LinearizedShrinker)
    }

    /// Coefficient of the homothety term: +1 expander, −1 shrinker, 0 minimal.
    fn homothety(&self) -> f64 {
        match self {
            Self::Expander | Self::LinearizedExpander => 1.0,
            Self::Shrinker | Self::LinearizedShrinker => -1.0,
            Self::Minimal => 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegratorConfig {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub r_max: f64,
    pub max_steps: usize,
    /// Width of the shrinker escape band, as a multiple of r (dimensionless).
    pub escape_band: f64,
    /// Largest arclength step; keeps the recorded samples dense enough for
    /// interpolation and crossing detection.
    pub max_step: f64,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self { rel_tol: 1e-10, abs_tol: 1e-12, r_max: 10.0, max_steps: 2_000_000, escape_band: 0.02, max_step: 0.05 }
    }
}

/// Largest r_max accepted without `allow_large_r` (the shrinker's growing mode
/// exhausts double precision beyond this).
pub const R_MAX_GUARD: f64 = 15.0;

impl IntegratorConfig {
    pub fn validate(&self) -> Result<()> {
        let in_unit = |v: f64| v > 0.0 && v < 1.0;
        if !in_unit(self.rel_tol) || !in_unit(self.abs_tol) {
            return Err(Error::InvalidParams("tolerances must lie in (0, 1)".into()));
        }
        if !(self.r_max > 0.0) || !(self.escape_band > 0.0) || !(self.max_step > 0.0) || self.max_steps == 0 {
            return Err(Error::InvalidParams("r_max, escape_band, max_step and max_steps must be positive".into()));
        }
        Ok(())
    }

    /// Validation plus the r_max guard used for shrinker integrations.
    pub fn validate_shrinker(&self) -> Result<()> {
        self.validate()?;
        if self.r_max > R_MAX_GUARD {
            return Err(Error::InvalidParams(format!(
                "r_max = {} exceeds the shrinker guard {R_MAX_GUARD}",
                self.r_max
            )));
        }
        Ok(())
    }

    pub fn with_r_max(mut self, r_max: f64) -> Self {
        self.r_max = r_max;
        self
    }

    pub fn with_tol(mut self, rel_tol: f64, abs_tol: f64) -> Self {
        self.rel_tol = rel_tol;
        self.abs_tol = abs_tol;
        self
    }

    fn step_control(&self) -> StepControl {
        StepControl { rel_tol: self.rel_tol, abs_tol: self.abs_tol, max_step: self.max_step, max_steps: self.max_steps }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TerminationTag {
    ReachedRmax,
    VerticalTangent,
    AxisHit,
    EscapeUp,
    EscapeDown,
    StepLimit,
    Overflow,
    /// Curve built from a closed form or from samples rather than integrated.
    Constructed,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TerminationEvent {
    pub tag: TerminationTag,
    pub location: ProfilePoint,
}

impl TerminationEvent {
    pub fn analytic() -> Self {
        Self { tag: TerminationTag::Constructed, location: ProfilePoint::default() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseState {
    #[serde(rename = "X")]
    pub x: f64,
    #[serde(rename = "Y")]
    pub y: f64,
    pub eta: f64,
}

impl PhaseState {
    pub fn from_point(pt: &ProfilePoint) -> Self {
        Self { x: pt.u / pt.r, y: pt.theta.tan(), eta: pt.r.ln() }
    }
}

/// Profile curvature k(r, u, θ) demanded by the nonlinear equation of the given kind.
pub fn curvature(kind: EquationKind, params: &FlowParams, r: f64, u: f64, theta: f64) -> f64 {
    let h = kind.homothety();
    let (s, c) = theta.sin_cos();
    let mut k = (params.qm1() / u + h * u / 2.0) * c - h * r / 2.0 * s;
    if params.p >= 2 {
        k -= params.pm1() / r * s;
    }
    k
}

/// u_rr from the graph form of the equation.
pub fn graph_rhs(kind: EquationKind, params: &FlowParams, r: f64, u: f64, ur: f64) -> f64 {
    let h = kind.homothety();
    let mut bracket = params.qm1() / u + h * (u - r * ur) / 2.0;
    if params.p >= 2 {
        bracket -= params.pm1() * ur / r;
    }
    (1.0 + ur * ur) * bracket
}

/// Coefficient c of the regular series u = a + c r² + O(r⁴).
pub fn series_coefficient(kind: EquationKind, a: f64, params: &FlowParams) -> Result<f64> {
    let p = params.p as f64;
    let q1 = params.qm1();
    match kind {
        EquationKind::Minimal => Ok(q1 / (2.0 * p * a)),
        EquationKind::Expander => Ok((a / 2.0 + q1 / a) / (2.0 * p)),
        EquationKind::Shrinker => Ok((q1 / a - a / 2.0) / (2.0 * p)),
        _ => Err(Error::InvalidParams(format!("{kind:?} has no regular series start"))),
    }
}

/// State at r0 on the solution with u(0) = a, u_r(0) = 0.
pub fn series_start(kind: EquationKind, a: f64, params: &FlowParams, r0: f64) -> Result<ProfilePoint> {
    if !(a > 0.0) || !a.is_finite() {
        return Err(Error::InvalidParams(format!("initial height a = {a} must be positive")));
    }
    if !(r0 > 0.0) {
        return Err(Error::InvalidParams(format!("r0 = {r0} must be positive")));
    }
    let c = series_coefficient(kind, a, params)?;
    let u = a + c * r0 * r0;
    let theta = (2.0 * c * r0).atan();
    let k = curvature(kind, params, r0, u, theta);
    Ok(ProfilePoint::new(r0, r0, u, theta, k))
}

pub fn default_r0(a: f64) -> f64 {
    1e-4 * a
}

fn profile_rhs(kind: EquationKind, params: FlowParams) -> impl FnMut(f64, &[f64; 3]) -> [f64; 3] {
    move |_s, y| {
        let (r, u, th) = (y[0], y[1], y[2]);
        if u <= 0.0 || (params.p >= 2 && r <= 0.0) {
            return [f64::NAN; 3];
        }
        [th.cos(), th.sin(), curvature(kind, &params, r, u, th)]
    }
}

const OVERFLOW: f64 = 1e12;

/// Integrate a nonlinear profile in arclength form until r_max or another terminal event.
pub fn integrate_profile(
    kind: EquationKind,
    start: ProfilePoint,
    params: &FlowParams,
    cfg: &IntegratorConfig,
) -> Result<ProfileCurve> {
    integrate_profile_monitored(kind, start, params, cfg, |_| None)
}

/// As [`integrate_profile`], with a monitor called at every accepted sample that may end
/// the integration with its own tag.
pub fn integrate_profile_monitored<M>(
    kind: EquationKind,
    start: ProfilePoint,
    params: &FlowParams,
    cfg: &IntegratorConfig,
    mut monitor: M,
) -> Result<ProfileCurve>
where
    M: FnMut(&ProfilePoint) -> Option<TerminationTag>,
{
    params.validate()?;
    cfg.validate()?;
    if kind.is_linearized() {
        return Err(Error::InvalidParams(format!("{kind:?} is integrated by linear_basis")));
    }
    if start.u <= 0.0 || start.r < 0.0 || (params.p >= 2 && start.r <= 0.0) {
        return Err(Error::AxisPoint { r: start.r, u: start.u });
    }
    let p = *params;
    let mut rk = Dopri5::new(
        profile_rhs(kind, p),
        start.s,
        [start.r, start.u, start.theta],
        true,
        cfg.step_control(),
    )?;
    let point = |s: f64, y: &[f64; 3]| ProfilePoint::new(s, y[0], y[1], y[2], curvature(kind, &p, y[0], y[1], y[2]));
    let first = point(start.s, &[start.r, start.u, start.theta]);
    let mut pts = vec![first];
    // the axis u = 0 repels the angle deviation θ + π/2 like u^{1−q}; the last stretch
    // is closed analytically from this height
    let u_floor = 10f64.powf(-3.0 / params.qm1()) * start.u.min(1.0);
    let r_floor = 1e-7 * start.r.max(1e-3).min(1.0);
    // generous arclength horizon; events end the integration long before
    let s_end = start.s + 1e9;

    let finish = |mut pts: Vec<ProfilePoint>, tag: TerminationTag| -> Result<ProfileCurve> {
        let location = *pts.last().unwrap();
        if pts.len() < 2 {
            // a single-sample curve is padded with a tiny extrapolated step
            let a = pts[0];
            let ds = 1e-12 * a.s.max(1.0);
            pts.push(ProfilePoint::new(a.s + ds, a.r + ds * a.theta.cos(), a.u + ds * a.theta.sin(), a.theta, a.k));
        }
        ProfileCurve::new(pts, p, TerminationEvent { tag, location })
    };

    loop {
        let st = match rk.step(s_end) {
            Ok(st) => st,
            Err(Error::StepLimit(_)) => return finish(pts, TerminationTag::StepLimit),
            Err(e) => return Err(e),
        };
        let (y0, y1) = (st.y0, st.y1);
        // located events in priority order
        if y1[0] >= cfg.r_max && y0[0] < cfg.r_max {
            let (s, y) = st.locate(|_, y| y[0] - cfg.r_max);
            pts.push(point(s, &[cfg.r_max, y[1], y[2]]));
            return finish(pts, TerminationTag::ReachedRmax);
        }
        if y1[2] >= FRAC_PI_2 && y0[2] < FRAC_PI_2 {
            let (s, y) = st.locate(|_, y| y[2] - FRAC_PI_2);
            pts.push(point(s, &y));
            return finish(pts, TerminationTag::VerticalTangent);
        }
        if y1[1] <= u_floor && y0[1] > u_floor {
            let (s, y) = st.locate(|_, y| y[1] - u_floor);
            pts.push(point(s, &y));
            if y[2].sin() < 0.0 {
                pts.push(close_to_axis(kind, &p, s, &y));
            }
            return finish(pts, TerminationTag::AxisHit);
        }
        if y1[0] <= r_floor && y0[0] > r_floor && y1[2].cos() < 0.0 {
            let (s, y) = st.locate(|_, y| y[0] - r_floor);
            pts.push(point(s, &y));
            return finish(pts, TerminationTag::AxisHit);
        }
        let pt = point(st.x1, &y1);
        pts.push(pt);
        if pt.k.abs() > OVERFLOW || pt.u.abs() > OVERFLOW || pt.r.abs() > OVERFLOW {
            return finish(pts, TerminationTag::Overflow);
        }
        if let Some(tag) = monitor(&pt) {
            return finish(pts, tag);
        }
    }
}

/// Final sample on u = 0, reached along the circle whose curvature is the limit of the
/// equation at the axis, k = ((p−1)/r + h r/2)/q, meeting the axis orthogonally.
fn close_to_axis(kind: EquationKind, params: &FlowParams, s: f64, y: &[f64; 3]) -> ProfilePoint {
    let (r, u) = (y[0], y[1]);
    let axis_k = |r_end: f64| (params.pm1() / r_end + kind.homothety() * r_end / 2.0) / params.q as f64;
    let shift = |k: f64| {
        let ku = k * u;
        if ku.abs() < 1.0 {
            -k * u * u / (1.0 + (1.0 - ku * ku).sqrt())
        } else {
            0.0
        }
    };
    // the curvature is evaluated at the landing point, found by fixed-point iteration
    let mut dr = 0.0;
    let mut k = axis_k(r);
    for _ in 0..4 {
        dr = shift(k);
        k = axis_k(r + dr);
    }
    let ku = k * u;
    let ds = if k.abs() * u > 1e-12 { (ku.clamp(-1.0, 1.0)).asin().abs() / k.abs() } else { u };
    ProfilePoint::new(s + ds.max(u * 1e-6), r + dr, 0.0, -FRAC_PI_2, k)
}

/// Sidecar metadata written next to each profile CSV.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProfileRecord {
    pub kind: EquationKind,
    pub params: FlowParams,
    pub a: f64,
    pub config: IntegratorConfig,
    pub termination: TerminationEvent,
}

impl ProfileRecord {
    pub fn write_json(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text + "\n")?;
        Ok(())
    }
}

/// Right-hand side of the phase system in η = log r.
pub fn phase_rhs(kind: EquationKind, params: &FlowParams, lambda_s: f64, x: f64, y: f64, eta: f64) -> [f64; 2] {
    let mut dy = (1.0 + y * y) * params.pm1() * (lambda_s * lambda_s - x * y) / x;
    if kind == EquationKind::Expander {
        dy -= (1.0 + y * y) * (2.0 * eta).exp() * (y - x) / 2.0;
    }
    [y - x, dy]
}

/// Integrate the phase system from `init` up to η = log(r_max).
pub fn integrate_phase(
    kind: EquationKind,
    init: PhaseState,
    params: &FlowParams,
    cfg: &IntegratorConfig,
) -> Result<Vec<PhaseState>> {
    if !matches!(kind, EquationKind::Minimal | EquationKind::Expander) {
        return Err(Error::InvalidParams(format!("no phase system for {kind:?}")));
    }
    cfg.validate()?;
    let lambda_s = params.lambda_s()?;
    if !(init.x > 0.0) {
        return Err(Error::AxisPoint { r: init.eta.exp(), u: init.x * init.eta.exp() });
    }
    let p = *params;
    let f = move |eta: f64, v: &[f64; 2]| {
        if v[0] <= 0.0 {
            return [f64::NAN; 2];
        }
        phase_rhs(kind, &p, lambda_s, v[0], v[1], eta)
    };
    let eta_end = cfg.r_max.ln();
    let mut out = vec![init];
    if eta_end <= init.eta {
        return Ok(out);
    }
    let ctrl = StepControl { max_step: 0.05, ..cfg.step_control() };
    let mut rk = Dopri5::new(f, init.eta, [init.x, init.y], true, ctrl)?;
    while rk.x() < eta_end {
        let st = match rk.step(eta_end) {
            Ok(st) => st,
            Err(Error::StepUnderflow { x }) => return Err(Error::AxisPoint { r: x.exp(), u: 0.0 }),
            Err(e) => return Err(e),
        };
        if st.y1[0] <= 0.0 {
            return Err(Error::AxisPoint { r: st.x1.exp(), u: 0.0 });
        }
        out.push(PhaseState { x: st.y1[0], y: st.y1[1], eta: st.x1 });
    }
    Ok(out)
}

/// Minimal phase system written for the deviations ξ = X − λ_s, υ = Y − λ_s, which
/// keeps full relative precision as the spiral closes in on the fixed point.
/// Returns samples (η, ξ, υ).
pub fn integrate_phase_deviation(
    params: &FlowParams,
    init: (f64, f64, f64),
    eta_end: f64,
    rel_tol: f64,
) -> Result<Vec<(f64, f64, f64)>> {
    let lam = params.lambda_s()?;
    let pm1 = params.pm1();
    let f = move |_eta: f64, v: &[f64; 2]| {
        let (xi, up) = (v[0], v[1]);
        let x = lam + xi;
        let y = lam + up;
        let defect = -(lam * up + lam * xi + xi * up);
        [up - xi, (1.0 + y * y) * pm1 * defect / x]
    };
    let ctrl = StepControl { rel_tol, abs_tol: 1e-300, max_step: 0.05, max_steps: 10_000_000 };
    let (eta0, xi0, up0) = init;
    let mut rk = Dopri5::new(f, eta0, [xi0, up0], true, ctrl)?;
    let mut out = vec![init];
    while rk.x() < eta_end {
        let st = rk.step(eta_end)?;
        out.push((st.x1, st.y1[0], st.y1[1]));
    }
    Ok(out)
}

/// Jacobian of the Minimal phase system at (X, Y).
pub fn phase_jacobian(params: &FlowParams, x: f64, y: f64) -> Result<[[f64; 2]; 2]> {
    let l2 = params.lambda_s()?.powi(2);
    let pm1 = params.pm1();
    let g = (l2 - x * y) / x;
    let dg_dx = -l2 / (x * x);
    let dg_dy = -1.0;
    Ok([
        [-1.0, 1.0],
        [(1.0 + y * y) * pm1 * dg_dx, pm1 * (2.0 * y * g + (1.0 + y * y) * dg_dy)],
    ])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FixedPointSpectrum {
    pub jacobian: [[f64; 2]; 2],
    pub eigenvalues: [Complex64; 2],
    /// True when the eigenvalues are a complex pair (4 ≤ n ≤ 7).
    pub oscillatory: bool,
}

/// Linearization of the Minimal phase system at the fixed point (λ_s, λ_s).
pub fn fixed_point_linearization(params: &FlowParams) -> Result<FixedPointSpectrum> {
    let lam = params.lambda_s()?;
    let jacobian = phase_jacobian(params, lam, lam)?;
    let tr = jacobian[0][0] + jacobian[1][1];
    let det = jacobian[0][0] * jacobian[1][1] - jacobian[0][1] * jacobian[1][0];
    let disc = tr * tr / 4.0 - det;
    let half = tr / 2.0;
    let (eigenvalues, oscillatory) = if disc < 0.0 {
        let w = (-disc).sqrt();
        ([Complex64::new(half, w), Complex64::new(half, -w)], true)
    } else {
        let w = disc.sqrt();
        ([Complex64::new(half + w, 0.0), Complex64::new(half - w, 0.0)], false)
    };
    Ok(FixedPointSpectrum { jacobian, eigenvalues, oscillatory })
}

/// Asymptotic slope estimate (u/r + u_r)/2 at a non-vertical sample; exact up to O(r⁻⁴)
/// on profiles of the form u = λr + b/r + c/r³.
pub fn slope_estimate(pt: &ProfilePoint) -> f64 {
    0.5 * (pt.u / pt.r + pt.theta.tan())
}
