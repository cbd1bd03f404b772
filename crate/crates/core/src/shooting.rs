//! Shooting from the axis: the minimal companion, expander slopes α(a), the discrete
//! shrinker family a_k, critical apertures of double cones, continuation counts and the
//! triple-junction shrinker.

use std::f64::consts::{FRAC_PI_2, PI};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{cone_slope, intersection_count, Crossing, FlowParams, ProfileCurve, ProfilePoint};
use crate::ode::{
    default_r0, integrate_profile, integrate_profile_monitored, series_start, slope_estimate, EquationKind,
    IntegratorConfig, TerminationTag,
};

/// Relative width at which shrinker brackets are accepted.
pub const SHRINKER_BRACKET_REL: f64 = 1e-12;
/// Default largest k searched by `find_shrinkers`.
pub const DEFAULT_K_MAX: usize = 8;
/// Grid density of `alpha_curve` sweeps.
pub const POINTS_PER_DECADE: usize = 400;
/// Target error bar of `expander_slope`, relative to max(1, λ).
pub const SLOPE_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RecordStatus {
    Ok,
    NotStabilized,
    Failed,
}

impl RecordStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Ok => "ok",
            Self::NotStabilized => "not_stabilized",
            Self::Failed => "failed",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SweepPoint {
    Grid,
    Maximum,
    Minimum,
    Root,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpanderRecord {
    pub a: f64,
    pub lambda_a: f64,
    pub alpha_a: f64,
    /// Crossings with u = λ_s r (None when p = 1).
    pub crossings: Option<usize>,
    pub error_bar: f64,
    /// Radius at which the slope was read.
    pub r_used: f64,
    pub status: RecordStatus,
    pub point: SweepPoint,
}

impl ExpanderRecord {
    fn failed(a: f64, point: SweepPoint) -> Self {
        Self {
            a,
            lambda_a: f64::NAN,
            alpha_a: f64::NAN,
            crossings: None,
            error_bar: f64::INFINITY,
            r_used: 0.0,
            status: RecordStatus::Failed,
            point,
        }
    }

    pub fn csv_header() -> &'static str {
        "a,lambda,alpha,crossings,status"
    }

    pub fn csv_row(&self) -> String {
        let crossings = self.crossings.map(|c| c.to_string()).unwrap_or_default();
        format!("{:.16e},{:.16e},{:.16e},{},{}", self.a, self.lambda_a, self.alpha_a, crossings, self.status.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ShrinkerTag {
    Up,
    Down,
    Complete,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShrinkerClass {
    pub tag: ShrinkerTag,
    pub escape_r: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShrinkerRecord {
    pub k: usize,
    pub a_k: f64,
    pub alpha_k: f64,
    /// tan α_k − λ_s
    pub slope_gap: f64,
    pub bracket_lo: f64,
    pub bracket_hi: f64,
    pub bracket_width: f64,
    pub class_lo: ShrinkerTag,
    pub class_hi: ShrinkerTag,
    /// Crossings with u = λ_s r inside the trusted range.
    pub crossings: usize,
    /// Radius up to which the bracket endpoints agree.
    pub r_trust: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticalAngleResult {
    pub alpha_crit: f64,
    pub argmin_a: f64,
    pub sweep: Vec<ExpanderRecord>,
    /// Set when the first sweep had its minimum on the boundary and was widened.
    pub widened: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompanionReport {
    pub curve: ProfileCurve,
    pub crossings: usize,
    pub tangencies: usize,
    /// (u/r, u_r) at the last sample.
    pub final_phase: (f64, f64),
    /// max(|X − λ_s|, |Y − λ_s|) at the last sample.
    pub phase_distance: f64,
}

fn require_cone(params: &FlowParams) -> Result<f64> {
    Ok(cone_slope(*params)?.lambda_s)
}

fn require_oscillatory(params: &FlowParams) -> Result<()> {
    require_cone(params)?;
    if !(4..=7).contains(&params.n) {
        return Err(Error::InvalidParams(format!("n = {} is outside 4..=7", params.n)));
    }
    Ok(())
}

/// The minimal profile with v(0) = 1 and its approach to the cone.
pub fn companion(params: &FlowParams, cfg: &IntegratorConfig) -> Result<CompanionReport> {
    require_oscillatory(params)?;
    let lambda_s = require_cone(params)?;
    let start = series_start(EquationKind::Minimal, 1.0, params, default_r0(1.0))?;
    let curve = integrate_profile(EquationKind::Minimal, start, params, cfg)?;
    let rep = intersection_count(&curve, Crossing::Ray(lambda_s))?;
    let last = curve.last();
    let final_phase = (last.u / last.r, last.theta.tan());
    let phase_distance = (final_phase.0 - lambda_s).abs().max((final_phase.1 - lambda_s).abs());
    Ok(CompanionReport { curve, crossings: rep.crossings, tangencies: rep.tangencies, final_phase, phase_distance })
}

/// First sample of the curve at radius r (interpolated), if the curve gets there.
pub fn point_at_r(curve: &ProfileCurve, r: f64) -> Option<ProfilePoint> {
    let pts = &curve.points;
    let i = pts.windows(2).position(|w| (w[0].r - r) * (w[1].r - r) <= 0.0 && w[0].r != w[1].r)?;
    let (mut lo, mut hi) = (pts[i].s, pts[i + 1].s);
    let rising = pts[i + 1].r > pts[i].r;
    for _ in 0..100 {
        let m = 0.5 * (lo + hi);
        let below = curve.eval_panel(i, m).r < r;
        if below == rising {
            lo = m;
        } else {
            hi = m;
        }
        if hi - lo <= 1e-15 * hi.abs().max(1.0) {
            break;
        }
    }
    let mut pt = curve.eval_panel(i, 0.5 * (lo + hi));
    pt.r = r;
    Some(pt)
}

fn slope_at(curve: &ProfileCurve, r: f64) -> Option<f64> {
    point_at_r(curve, r).filter(|p| p.theta.abs() < FRAC_PI_2).map(|p| slope_estimate(&p))
}

/// Richardson combination removing the r⁻⁴ term between radii r1 < r2.
fn richardson(r1: f64, s1: f64, r2: f64, s2: f64) -> f64 {
    let (w1, w2) = (r1.powi(4), r2.powi(4));
    (w2 * s2 - w1 * s1) / (w2 - w1)
}

/// Slope read at radius R with its error bar: the Richardson value on [0.75R, R] and
/// its difference from the value one level further in.
pub fn stabilized_slope(curve: &ProfileCurve, r: f64) -> Option<(f64, f64)> {
    let radii = [0.5625 * r, 0.75 * r, r];
    let s: Vec<f64> = radii.iter().map(|&x| slope_at(curve, x)).collect::<Option<_>>()?;
    let outer = richardson(radii[1], s[1], radii[2], s[2]);
    let inner = richardson(radii[0], s[0], radii[1], s[1]);
    Some((outer, (outer - inner).abs()))
}

/// Limiting slope of an expander integrated from `start`.
pub fn expander_slope_from(
    start: ProfilePoint,
    a: f64,
    params: &FlowParams,
    cfg: &IntegratorConfig,
    slope_tol: f64,
) -> Result<ExpanderRecord> {
    let mut r = cfg.r_max;
    let r_limit = 8.0 * cfg.r_max;
    let mut best: Option<(f64, f64, f64)> = None;
    loop {
        let curve = integrate_profile(EquationKind::Expander, start, params, &cfg.with_r_max(r))?;
        if curve.termination.tag != TerminationTag::ReachedRmax {
            return Err(Error::InvalidParams(format!(
                "expander from a = {a} ended with {:?} before r = {r}",
                curve.termination.tag
            )));
        }
        if let Some((lambda, err)) = stabilized_slope(&curve, r) {
            best = Some((lambda, err, r));
            if err <= slope_tol * lambda.abs().max(1.0) {
                let crossings = match params.lambda_s() {
                    Ok(ls) => Some(intersection_count(&curve, Crossing::Ray(ls))?.crossings),
                    Err(_) => None,
                };
                return Ok(ExpanderRecord {
                    a,
                    lambda_a: lambda,
                    alpha_a: lambda.atan(),
                    crossings,
                    error_bar: err,
                    r_used: r,
                    status: RecordStatus::Ok,
                    point: SweepPoint::Grid,
                });
            }
        }
        if 2.0 * r > r_limit + 1e-9 {
            break;
        }
        r *= 2.0;
    }
    match best {
        Some((estimate, error_bar, r)) => Err(Error::NotStabilized { estimate, error_bar, r }),
        None => Err(Error::NotStabilized { estimate: f64::NAN, error_bar: f64::INFINITY, r }),
    }
}

/// Limiting slope λ(a) of the expander with u(0) = a.
pub fn expander_slope(a: f64, params: &FlowParams, cfg: &IntegratorConfig) -> Result<ExpanderRecord> {
    let start = series_start(EquationKind::Expander, a, params, default_r0(a))?;
    expander_slope_from(start, a, params, cfg, SLOPE_TOL)
}

/// Record for one sweep point; errors are carried in the status instead of propagated.
pub fn expander_record(a: f64, params: &FlowParams, cfg: &IntegratorConfig, point: SweepPoint) -> ExpanderRecord {
    match expander_slope(a, params, cfg) {
        Ok(mut rec) => {
            rec.point = point;
            rec
        }
        Err(Error::NotStabilized { estimate, error_bar, r }) if estimate.is_finite() => ExpanderRecord {
            a,
            lambda_a: estimate,
            alpha_a: estimate.atan(),
            crossings: None,
            error_bar,
            r_used: r,
            status: RecordStatus::NotStabilized,
            point,
        },
        Err(_) => ExpanderRecord::failed(a, point),
    }
}

/// Log-spaced grid with the given density, including both ends.
pub fn log_grid(lo: f64, hi: f64, per_decade: usize) -> Vec<f64> {
    let decades = (hi / lo).log10();
    let n = ((decades * per_decade as f64).ceil() as usize).max(1);
    (0..=n).map(|i| lo * 10f64.powf(decades * i as f64 / n as f64)).collect()
}

/// Golden-section search for an extremum of f on [lo, hi] in log a; `sign` = +1 for a
/// maximum, −1 for a minimum. Stops at relative width `rel`.
fn golden_extremum<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64, sign: f64, rel: f64) -> f64 {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (lo.ln(), hi.ln());
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let mut fc = sign * f(c.exp());
    let mut fd = sign * f(d.exp());
    while (b - a) > rel {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = sign * f(c.exp());
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = sign * f(d.exp());
        }
    }
    (0.5 * (a + b)).exp()
}

/// α(a) on a sorted grid, with each local extremum of the slope refined by golden-section
/// search to 1e-10 relative in a. Refined points are inserted into the result.
pub fn alpha_curve(a_grid: &[f64], params: &FlowParams, cfg: &IntegratorConfig) -> Result<Vec<ExpanderRecord>> {
    if a_grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidParams("a grid must be sorted ascending".into()));
    }
    let mut recs: Vec<ExpanderRecord> =
        a_grid.par_iter().map(|&a| expander_record(a, params, cfg, SweepPoint::Grid)).collect();
    let extrema: Vec<(usize, f64)> = (1..recs.len().saturating_sub(1))
        .filter_map(|i| {
            let (l, m, r) = (recs[i - 1].lambda_a, recs[i].lambda_a, recs[i + 1].lambda_a);
            if !(l.is_finite() && m.is_finite() && r.is_finite()) {
                return None;
            }
            if m > l && m >= r {
                Some((i, 1.0))
            } else if m < l && m <= r {
                Some((i, -1.0))
            } else {
                None
            }
        })
        .collect();
    let refined: Vec<ExpanderRecord> = extrema
        .par_iter()
        .map(|&(i, sign)| {
            let f = |a: f64| expander_slope(a, params, cfg).map(|r| r.lambda_a).unwrap_or(f64::NAN);
            let a = golden_extremum(f, recs[i - 1].a, recs[i + 1].a, sign, 1e-10);
            let kind = if sign > 0.0 { SweepPoint::Maximum } else { SweepPoint::Minimum };
            expander_record(a, params, cfg, kind)
        })
        .collect();
    recs.extend(refined);
    recs.sort_by(|x, y| x.a.partial_cmp(&y.a).unwrap());
    Ok(recs)
}

/// Critical aperture of double cones in R^n (p = 1): the least α(b) over expanders with
/// u(0) = b.
pub fn critical_angle(params: &FlowParams, cfg: &IntegratorConfig) -> Result<CriticalAngleResult> {
    if params.p != 1 {
        return Err(Error::InvalidParams("critical_angle needs p = 1".into()));
    }
    let mut lo = 0.05;
    let mut hi = 20.0;
    let mut widened = false;
    loop {
        let grid = log_grid(lo, hi, 20);
        let sweep: Vec<ExpanderRecord> =
            grid.par_iter().map(|&b| expander_record(b, params, cfg, SweepPoint::Grid)).collect();
        let (imin, rec) = sweep
            .iter()
            .enumerate()
            .filter(|(_, r)| r.alpha_a.is_finite())
            .min_by(|x, y| x.1.alpha_a.partial_cmp(&y.1.alpha_a).unwrap())
            .ok_or_else(|| Error::InvalidParams("critical-angle sweep produced no slopes".into()))?;
        let at_boundary = imin == 0 || imin + 1 == sweep.len();
        if at_boundary {
            if widened {
                return Err(Error::OutOfRange(format!("minimum at sweep boundary b = {}", rec.a)));
            }
            widened = true;
            lo /= 100.0;
            hi *= 10.0;
            continue;
        }
        let f = |b: f64| expander_slope(b, params, cfg).map(|r| r.alpha_a).unwrap_or(f64::NAN);
        let argmin = golden_extremum(f, sweep[imin - 1].a, sweep[imin + 1].a, -1.0, 1e-7);
        let best = expander_record(argmin, params, cfg, SweepPoint::Minimum);
        let mut sweep = sweep;
        sweep.push(best.clone());
        sweep.sort_by(|x, y| x.a.partial_cmp(&y.a).unwrap());
        let alpha_crit = sweep.iter().map(|r| r.alpha_a).filter(|v| v.is_finite()).fold(f64::INFINITY, f64::min);
        let argmin_a = sweep.iter().find(|r| r.alpha_a == alpha_crit).map(|r| r.a).unwrap_or(argmin);
        return Ok(CriticalAngleResult { alpha_crit, argmin_a, sweep, widened });
    }
}

/// Bisection for α(b) = alpha between two b values that straddle it.
fn bisect_alpha(alpha: f64, mut lo: f64, mut hi: f64, params: &FlowParams, cfg: &IntegratorConfig) -> Result<ExpanderRecord> {
    let f = |b: f64| expander_slope(b, params, cfg).map(|r| r.alpha_a - alpha);
    let mut flo = f(lo)?;
    let fhi = f(hi)?;
    if flo * fhi > 0.0 {
        return Err(Error::InvalidBracket(format!("α − {alpha} has the same sign at {lo} and {hi}")));
    }
    while (hi - lo) > 1e-12 * hi {
        let mid = (lo * hi).sqrt();
        let fm = f(mid)?;
        if (fm > 0.0) == (flo > 0.0) {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    let mut rec = expander_slope((lo * hi).sqrt(), params, cfg)?;
    rec.point = SweepPoint::Root;
    Ok(rec)
}

/// The one-sheeted expanders with aperture `alpha` above the critical angle: one on each
/// side of the minimizing b.
pub fn one_sheeted_solutions(
    alpha: f64,
    crit: &CriticalAngleResult,
    params: &FlowParams,
    cfg: &IntegratorConfig,
) -> Result<Vec<ExpanderRecord>> {
    if alpha <= crit.alpha_crit {
        return Ok(Vec::new());
    }
    let mut out = Vec::new();
    let left: Vec<&ExpanderRecord> = crit.sweep.iter().filter(|r| r.a <= crit.argmin_a).collect();
    let right: Vec<&ExpanderRecord> = crit.sweep.iter().filter(|r| r.a >= crit.argmin_a).collect();
    // left branch decreases toward the minimum, right branch increases away from it
    if let Some(w) = left.windows(2).rev().find(|w| (w[0].alpha_a - alpha) * (w[1].alpha_a - alpha) <= 0.0) {
        out.push(bisect_alpha(alpha, w[0].a, w[1].a, params, cfg)?);
    }
    let mut right_hit = right.windows(2).find(|w| (w[0].alpha_a - alpha) * (w[1].alpha_a - alpha) <= 0.0).map(|w| (w[0].a, w[1].a));
    if right_hit.is_none() {
        // α(b) → π/2 as b → ∞: extend to the right until the level is passed
        let mut b = right.last().map(|r| r.a).unwrap_or(crit.argmin_a);
        for _ in 0..20 {
            let next = 2.0 * b;
            if expander_slope(next, params, cfg)?.alpha_a >= alpha {
                right_hit = Some((b, next));
                break;
            }
            b = next;
        }
    }
    if let Some((lo, hi)) = right_hit {
        out.push(bisect_alpha(alpha, lo, hi, params, cfg)?);
    }
    Ok(out)
}

/// Fate of the shrinker with u(0) = a: turning up through a vertical tangent, turning
/// down (θ ≤ −escape_band or hitting the axis), or reaching r_max undecided.
pub fn classify_shrinker(a: f64, params: &FlowParams, cfg: &IntegratorConfig) -> Result<ShrinkerClass> {
    let curve = shrinker_profile(a, params, cfg, true)?;
    Ok(classify_curve(&curve))
}

fn classify_curve(curve: &ProfileCurve) -> ShrinkerClass {
    let loc = curve.termination.location;
    let tag = match curve.termination.tag {
        TerminationTag::VerticalTangent | TerminationTag::EscapeUp => ShrinkerTag::Up,
        TerminationTag::EscapeDown | TerminationTag::AxisHit => ShrinkerTag::Down,
        TerminationTag::Overflow => {
            if loc.theta > 0.0 {
                ShrinkerTag::Up
            } else {
                ShrinkerTag::Down
            }
        }
        _ => ShrinkerTag::Complete,
    };
    let escape_r = (tag != ShrinkerTag::Complete).then_some(loc.r);
    ShrinkerClass { tag, escape_r }
}

/// Shrinker profile from u(0) = a, optionally stopping as soon as it turns down.
pub fn shrinker_profile(a: f64, params: &FlowParams, cfg: &IntegratorConfig, stop_on_escape: bool) -> Result<ProfileCurve> {
    cfg.validate_shrinker()?;
    let start = series_start(EquationKind::Shrinker, a, params, default_r0(a))?;
    let band = cfg.escape_band;
    integrate_profile_monitored(EquationKind::Shrinker, start, params, cfg, |pt| {
        (stop_on_escape && pt.theta <= -band).then_some(TerminationTag::EscapeDown)
    })
}

/// Radius up to which two profiles have matching slope estimates.
fn trust_radius(lo: &ProfileCurve, hi: &ProfileCurve, mid: &ProfileCurve, lambda_s: f64, r_max: f64) -> f64 {
    let mut r_ok = 0.0;
    let mut r = 0.5;
    while r <= r_max + 1e-12 {
        let (Some(sl), Some(sh), Some(sm)) = (slope_at(lo, r), slope_at(hi, r), slope_at(mid, r)) else {
            break;
        };
        let gap = (sm - lambda_s).abs().max(1e-15);
        if (sl - sh).abs() > 1e-3 * gap {
            break;
        }
        r_ok = r;
        r += 0.05;
    }
    r_ok
}

fn record_from_bracket(
    k: usize,
    lo: f64,
    hi: f64,
    class_lo: ShrinkerTag,
    class_hi: ShrinkerTag,
    params: &FlowParams,
    cfg: &IntegratorConfig,
) -> Result<ShrinkerRecord> {
    let lambda_s = require_cone(params)?;
    let mid = 0.5 * (lo + hi);
    let cylinder = (2.0 * params.qm1()).sqrt();
    let c_lo = shrinker_profile(lo, params, cfg, false)?;
    let c_hi = shrinker_profile(hi, params, cfg, false)?;
    let c_mid = shrinker_profile(mid, params, cfg, false)?;
    let r_trust = trust_radius(&c_lo, &c_hi, &c_mid, lambda_s, cfg.r_max);
    let (alpha_k, slope_gap) = if (mid - cylinder).abs() <= 1e-9 * cylinder {
        // the exact cylinder: horizontal, α = 0
        (0.0, -lambda_s)
    } else {
        let lambda = match stabilized_slope(&c_mid, r_trust) {
            Some((l, _)) => l,
            None => slope_at(&c_mid, r_trust).unwrap_or(f64::NAN),
        };
        (lambda.atan(), lambda - lambda_s)
    };
    let trusted = if r_trust > 0.0 { c_mid.truncated_r(r_trust)? } else { c_mid };
    let crossings = intersection_count(&trusted, Crossing::Ray(lambda_s))?.crossings;
    Ok(ShrinkerRecord {
        k,
        a_k: mid,
        alpha_k,
        slope_gap,
        bracket_lo: lo,
        bracket_hi: hi,
        bracket_width: hi - lo,
        class_lo,
        class_hi,
        crossings,
        r_trust,
    })
}

/// Bisect a classification flip between `lo` and `hi` down to relative width 1e-12.
pub fn bisect_flip(
    mut lo: f64,
    mut hi: f64,
    params: &FlowParams,
    cfg: &IntegratorConfig,
) -> Result<(f64, f64, ShrinkerTag, ShrinkerTag)> {
    let tlo = classify_shrinker(lo, params, cfg)?.tag;
    let thi = classify_shrinker(hi, params, cfg)?.tag;
    if tlo == thi || tlo == ShrinkerTag::Complete || thi == ShrinkerTag::Complete {
        return Err(Error::InvalidBracket(format!("[{lo}, {hi}] classifies {tlo:?}/{thi:?}")));
    }
    while hi - lo > SHRINKER_BRACKET_REL * hi {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi || hi - lo <= 4.0 * f64::EPSILON * hi {
            return Err(Error::PrecisionExhausted { width: hi - lo });
        }
        match classify_shrinker(mid, params, cfg)?.tag {
            t if t == tlo => lo = mid,
            t if t == thi => hi = mid,
            _ => return Err(Error::PrecisionExhausted { width: hi - lo }),
        }
    }
    Ok((lo, hi, tlo, thi))
}

/// The shrinkers N^1 … N^{k_max}: classification flips found scanning a downward from
/// between the cylinder and the sphere, each bisected to relative width 1e-12.
pub fn find_shrinkers(k_max: usize, params: &FlowParams, cfg: &IntegratorConfig) -> Result<Vec<ShrinkerRecord>> {
    require_oscillatory(params)?;
    cfg.validate_shrinker()?;
    if k_max == 0 || k_max > DEFAULT_K_MAX {
        return Err(Error::InvalidParams(format!("k_max = {k_max} must lie in 1..={DEFAULT_K_MAX}")));
    }
    let cylinder = (2.0 * params.qm1()).sqrt();
    let sphere = (2.0 * (params.n as f64 - 1.0)).sqrt();
    let mut a_hi = 0.5 * (cylinder + sphere);
    let ratio = 1.25f64;
    let mut brackets: Vec<(f64, f64)> = Vec::new();
    let mut prev = classify_shrinker(a_hi, params, cfg)?.tag;
    let floor = 1e-12;
    'scan: while brackets.len() < k_max && a_hi > floor {
        // classify a block of grid points in parallel
        let block: Vec<f64> = (1..=16).map(|i| a_hi / ratio.powi(i)).collect();
        let tags: Vec<Result<ShrinkerTag>> =
            block.par_iter().map(|&a| classify_shrinker(a, params, cfg).map(|c| c.tag)).collect();
        let mut upper = a_hi;
        for (a, tag) in block.iter().zip(tags) {
            let tag = tag?;
            if tag != ShrinkerTag::Complete && prev != ShrinkerTag::Complete && tag != prev {
                brackets.push((*a, upper));
                if brackets.len() == k_max {
                    break 'scan;
                }
            }
            if tag != ShrinkerTag::Complete {
                prev = tag;
                upper = *a;
            }
        }
        a_hi = *block.last().unwrap();
    }
    let results: Vec<Result<ShrinkerRecord>> = brackets
        .par_iter()
        .enumerate()
        .map(|(i, &(lo, hi))| {
            let (lo, hi, tlo, thi) = bisect_flip(lo, hi, params, cfg)?;
            record_from_bracket(i + 1, lo, hi, tlo, thi, params, cfg)
        })
        .collect();
    results.into_iter().collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContinuationReport {
    pub alpha: f64,
    pub records: Vec<ExpanderRecord>,
    pub count: usize,
    /// Set when the sweep could not resolve every crossing; `count` is then a lower bound.
    pub lower_bound: bool,
}

/// Default a-range for continuation sweeps.
pub const CONTINUATION_RANGE: (f64, f64) = (1e-6, 10.0);

/// All a with α(a) = alpha on a refined sweep: sign changes of α(a) − alpha bracketed
/// on the sweep and bisected.
pub fn count_continuations_on(
    sweep: &[ExpanderRecord],
    alpha: f64,
    params: &FlowParams,
    cfg: &IntegratorConfig,
) -> Result<ContinuationReport> {
    let usable: Vec<&ExpanderRecord> = sweep.iter().filter(|r| r.alpha_a.is_finite()).collect();
    let lower_bound = usable.len() < sweep.len();
    if let Some(min) = usable.iter().map(|r| r.alpha_a).reduce(f64::min) {
        if alpha <= min {
            return Err(Error::OutOfRange(format!("α = {alpha} is below the sweep minimum {min}")));
        }
    }
    let brackets: Vec<(f64, f64)> = usable
        .windows(2)
        .filter(|w| (w[0].alpha_a - alpha) * (w[1].alpha_a - alpha) < 0.0)
        .map(|w| (w[0].a, w[1].a))
        .collect();
    let records: Vec<ExpanderRecord> = brackets
        .par_iter()
        .map(|&(lo, hi)| {
            bisect_alpha(alpha, lo, hi, params, cfg).unwrap_or_else(|_| ExpanderRecord::failed(lo, SweepPoint::Root))
        })
        .collect();
    let count = records.len();
    Ok(ContinuationReport { alpha, records, count, lower_bound })
}

/// Continuations of the cone of aperture `alpha` among the expanders P^a.
pub fn count_continuations(alpha: f64, params: &FlowParams, cfg: &IntegratorConfig) -> Result<ContinuationReport> {
    let grid = log_grid(CONTINUATION_RANGE.0, CONTINUATION_RANGE.1, POINTS_PER_DECADE);
    let sweep = alpha_curve(&grid, params, cfg)?;
    count_continuations_on(&sweep, alpha, params, cfg)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TripleJunction {
    pub a_star: f64,
    /// Junction point (b, b) on the diagonal.
    pub b: f64,
    /// Angles between the three arcs meeting at (b, b): γ₁–γ₃, γ₂–γ₃, γ₁–γ₂.
    pub angles: [f64; 3],
    /// Crossing angles with u = r of the cylinder and of the sphere.
    pub endpoint_angles: (f64, f64),
}

/// Angle at which the shrinker from u(0) = a first meets u = r, measured between the
/// backward tangent and the outward diagonal. Returns (angle, b).
pub fn diagonal_crossing(a: f64, params: &FlowParams, cfg: &IntegratorConfig) -> Result<(f64, f64)> {
    let curve = shrinker_profile(a, params, cfg, false)?;
    let pts = &curve.points;
    let i = pts
        .windows(2)
        .position(|w| (w[0].u - w[0].r) * (w[1].u - w[1].r) <= 0.0)
        .ok_or_else(|| Error::InvalidBracket(format!("shrinker from a = {a} never meets u = r")))?;
    let (mut lo, mut hi) = (pts[i].s, pts[i + 1].s);
    let g = |p: &ProfilePoint| p.u - p.r;
    let glo = g(&pts[i]);
    for _ in 0..200 {
        let m = 0.5 * (lo + hi);
        if (g(&curve.eval_panel(i, m)) > 0.0) == (glo > 0.0) {
            lo = m;
        } else {
            hi = m;
        }
        if hi - lo < 1e-15 * hi {
            break;
        }
    }
    let pt = curve.eval_panel(i, 0.5 * (lo + hi));
    Ok((pt.theta + 0.75 * PI, 0.5 * (pt.r + pt.u)))
}

/// The shrinker meeting u = r at 120°, for p = q.
pub fn triple_junction(params: &FlowParams, cfg: &IntegratorConfig) -> Result<TripleJunction> {
    if params.p != params.q || !matches!(params.n, 4 | 6) {
        return Err(Error::InvalidParams("triple_junction needs p = q and n in {4, 6}".into()));
    }
    let target = 2.0 * PI / 3.0;
    let mut lo = ((params.n - 2) as f64).sqrt();
    let mut hi = (2.0 * (params.n as f64 - 1.0)).sqrt();
    let (phi_lo, _) = diagonal_crossing(lo, params, cfg)?;
    let (phi_hi, _) = diagonal_crossing(hi, params, cfg)?;
    if (phi_lo - target) * (phi_hi - target) > 0.0 {
        return Err(Error::InvalidBracket(format!(
            "crossing angles {} and {} do not straddle 120°",
            phi_lo.to_degrees(),
            phi_hi.to_degrees()
        )));
    }
    let sign_lo = (phi_lo - target).signum();
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let (phi, _) = diagonal_crossing(mid, params, cfg)?;
        if (phi - target).signum() == sign_lo {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-14 * hi {
            break;
        }
    }
    let a_star = 0.5 * (lo + hi);
    let (phi, b) = diagonal_crossing(a_star, params, cfg)?;
    let angles = [phi, phi, 2.0 * PI - 2.0 * phi];
    Ok(TripleJunction { a_star, b, angles, endpoint_angles: (phi_lo, phi_hi) })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p22() -> FlowParams {
        FlowParams::new(2, 2).unwrap()
    }

    #[test]
    fn cylinder_and_sphere_classify() {
        let params = p22();
        let cfg = IntegratorConfig::default();
        let cyl = classify_shrinker(2f64.sqrt(), &params, &cfg).unwrap();
        assert_eq!(cyl.tag, ShrinkerTag::Complete);
        let sph = classify_shrinker(6f64.sqrt(), &params, &cfg).unwrap();
        assert_eq!(sph.tag, ShrinkerTag::Down);
        let below = classify_shrinker(1.3, &params, &cfg).unwrap();
        let above = classify_shrinker(1.5, &params, &cfg).unwrap();
        assert_ne!(below.tag, above.tag);
    }

    #[test]
    fn ray_start_keeps_cone_slope() {
        let params = p22();
        let cfg = IntegratorConfig::default();
        let l = params.lambda_s().unwrap();
        let start = ProfilePoint::new(0.0, 1.0, l, l.atan(), 0.0);
        let rec = expander_slope_from(start, 0.0, &params, &cfg, SLOPE_TOL).unwrap();
        assert!((rec.lambda_a - l).abs() < 1e-10);
    }

    #[test]
    fn large_a_expander_is_steep() {
        let params = p22();
        let rec = expander_slope(10.0, &params, &IntegratorConfig::default()).unwrap();
        assert!(rec.alpha_a.to_degrees() > 80.0);
        assert_eq!(rec.status, RecordStatus::Ok);
    }

    #[test]
    fn log_grid_density() {
        let g = log_grid(1e-4, 1e-1, 400);
        assert_eq!(g.len(), 1201);
        assert!((g[0] - 1e-4).abs() < 1e-18 && (g[1200] - 0.1).abs() < 1e-15);
    }

    #[test]
    fn golden_section_finds_parabola_vertex() {
        let x = golden_extremum(|a: f64| -(a.ln() - 0.3).powi(2), 0.5, 3.0, 1.0, 1e-10);
        assert!((x.ln() - 0.3).abs() < 1e-9);
    }

    #[test]
    fn triple_junction_endpoint_angles() {
        let params = p22();
        let cfg = IntegratorConfig::default();
        let (cyl, b_cyl) = diagonal_crossing(2f64.sqrt(), &params, &cfg).unwrap();
        assert!((cyl - 0.75 * PI).abs() < 1e-9);
        assert!((b_cyl - 2f64.sqrt()).abs() < 1e-9);
        let (sph, b_sph) = diagonal_crossing(6f64.sqrt(), &params, &cfg).unwrap();
        assert!((sph - FRAC_PI_2).abs() < 1e-7);
        assert!((b_sph - 3f64.sqrt()).abs() < 1e-8);
    }
}
