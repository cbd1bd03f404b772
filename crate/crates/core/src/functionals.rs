//! Gaussian density and monotonicity, the heat-kernel identity, weighted first
//! variation, a localized Gauss-Bonnet audit and curve total-curvature bounds.

use std::f64::consts::PI;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evolve::FlowTrajectory;
use crate::geometry::{
    mean_curvature_unchecked, second_fundamental_norm_unchecked, unit_sphere_area, weighted_area, FlowParams,
    ProfileCurve, ProfilePoint, Weight,
};
use crate::quadrature::{adaptive_gauss, gauss};

/// Backward heat kernel of R^{n−1} scaling centred at (x0, t0). The centre
/// x0 = (r0, u0) stands for the point (r0·e, u0·e') with fixed unit vectors e ∈ R^p
/// and e' ∈ R^q; it is fixed by the symmetry group only when r0 = u0 = 0 (or r0 ≠ 0
/// with p = 1).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeatKernelSpec {
    pub x0: (f64, f64),
    pub t0: f64,
    pub n: usize,
}

impl HeatKernelSpec {
    pub fn origin(t0: f64, n: usize) -> Self {
        Self { x0: (0.0, 0.0), t0, n }
    }

    /// ρ at a point at distance² d2 from x0, at time t.
    pub fn rho(&self, d2: f64, t: f64) -> f64 {
        let tau = self.t0 - t;
        (4.0 * PI * tau).powf(-(self.n as f64 - 1.0) / 2.0) * (-d2 / (4.0 * tau)).exp()
    }

    fn check(&self, params: &FlowParams, t: f64) -> Result<f64> {
        if self.n != params.n {
            return Err(Error::InvalidParams(format!("kernel dimension {} differs from n = {}", self.n, params.n)));
        }
        let tau = self.t0 - t;
        if !(tau > 0.0) {
            return Err(Error::InvalidParams(format!("t = {t} must precede t0 = {}", self.t0)));
        }
        if self.x0.1 < 0.0 || (self.x0.0 < 0.0 && params.p >= 2) {
            return Err(Error::InvalidParams("orbit radii of x0 must be nonnegative".into()));
        }
        Ok(tau)
    }
}

/// Average of e^{c(ω·e − 1)} over the unit sphere S^{m−1}.
pub fn orbit_average(m: usize, c: f64) -> f64 {
    if c == 0.0 {
        return 1.0;
    }
    match m {
        1 => 0.5 * (1.0 + (-2.0 * c).exp()),
        _ => {
            let top = if c > 20.0 { PI * (20.0 / c).sqrt() } else { PI };
            let e = (m - 2) as i32;
            let f = |phi: f64| (-c * (1.0 - phi.cos())).exp() * phi.sin().powi(e);
            unit_sphere_area(m - 2) / unit_sphere_area(m - 1) * adaptive_gauss(&f, 0.0, top, 1e-14, 12)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DensityValue {
    pub phi: f64,
    /// Bound on the kernel mass beyond free ends, assuming they continue as cones.
    pub tail_bound: f64,
    /// Set when the tail bound exceeds 1e−6·Φ.
    pub truncated: bool,
}

fn on_axis(pt: &ProfilePoint, scale: f64) -> bool {
    pt.r.abs() <= 1e-2 * scale && pt.theta.sin().abs() < 0.1 || pt.u.abs() <= 1e-9 * scale
}

fn free_end_tail(pt: &ProfilePoint, params: &FlowParams, spec: &HeatKernelSpec, tau: f64) -> f64 {
    let n = params.n as f64;
    let radius = pt.radius();
    let cone_density =
        params.orbit_factor() * pt.r.abs().powi(params.p as i32 - 1) * pt.u.powi(params.q as i32 - 1) / radius.powf(n - 2.0);
    let x0 = spec.x0.0.hypot(spec.x0.1);
    let norm = (4.0 * PI * tau).powf(-(n - 1.0) / 2.0);
    let g = |rho: f64| {
        let d = (rho - x0).max(0.0);
        rho.powf(n - 2.0) * (-d * d / (4.0 * tau)).exp()
    };
    let hi = radius.max(x0) + 60.0 * tau.sqrt();
    norm * cone_density * adaptive_gauss(&g, radius, hi, 1e-12 * radius.max(1.0).powf(n - 2.0) * tau.sqrt(), 12)
}

/// Φ(t) = ∫_M ρ_{x0,t0}(·, t) dH^{n−1} for the hypersurface generated by `curve`.
pub fn gaussian_density(curve: &ProfileCurve, params: &FlowParams, spec: &HeatKernelSpec, t: f64) -> Result<DensityValue> {
    let tau = spec.check(params, t)?;
    let (r0, u0) = spec.x0;
    let r0 = if params.p == 1 { r0.abs() } else { r0 };
    let norm = (4.0 * PI * tau).powf(-(params.n as f64 - 1.0) / 2.0);
    let phi = curve.integrate(None, |pt| {
        let d2 = (pt.r - r0).powi(2) + (pt.u - u0).powi(2);
        let mut v = norm * (-d2 / (4.0 * tau)).exp();
        if r0 != 0.0 {
            v *= orbit_average(params.p, pt.r * r0 / (2.0 * tau));
        }
        if u0 != 0.0 {
            v *= orbit_average(params.q, pt.u * u0 / (2.0 * tau));
        }
        v
    })?;
    let scale = curve.points.iter().fold(0.0f64, |m, p| m.max(p.radius()));
    let mut tail_bound = 0.0;
    for end in [curve.first(), curve.last()] {
        if !on_axis(end, scale) {
            tail_bound += free_end_tail(end, params, spec, tau);
        }
    }
    Ok(DensityValue { phi, tail_bound, truncated: tail_bound > 1e-6 * phi })
}

/// Φ for a hyperplane at distance `offset` from x0, by radial quadrature (closed form
/// e^{−offset²/4τ}).
pub fn plane_density(n: usize, tau: f64, offset: f64) -> Result<f64> {
    if n < 2 || !(tau > 0.0) {
        return Err(Error::InvalidParams("plane density needs n >= 2 and tau > 0".into()));
    }
    let m = n as f64 - 1.0;
    let g = |s: f64| s.powf(m - 1.0) * (-s * s / (4.0 * tau)).exp();
    let radial = adaptive_gauss(&g, 0.0, 60.0 * tau.sqrt(), 1e-14 * tau.powf(m / 2.0), 14);
    Ok(unit_sphere_area(n - 2) * radial * (4.0 * PI * tau).powf(-m / 2.0) * (-offset * offset / (4.0 * tau)).exp())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DensitySample {
    pub t: f64,
    pub phi: f64,
    pub err: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityTrace {
    pub samples: Vec<DensitySample>,
    /// Largest increase of Φ between consecutive samples (0 when nonincreasing).
    pub max_violation: f64,
}

impl DensityTrace {
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "t,phi,err")?;
        for s in &self.samples {
            writeln!(w, "{:.16e},{:.16e},{:.16e}", s.t, s.phi, s.err)?;
        }
        Ok(())
    }

    /// Largest deviation of Φ from its first value.
    pub fn spread(&self) -> f64 {
        let first = self.samples.first().map_or(0.0, |s| s.phi);
        self.samples.iter().fold(0.0f64, |m, s| m.max((s.phi - first).abs()))
    }
}

/// Φ at every recorded state with t < t0.
pub fn density_trace(traj: &FlowTrajectory, spec: &HeatKernelSpec) -> Result<DensityTrace> {
    let mut samples = Vec::new();
    for st in traj.states.iter().filter(|s| s.t < spec.t0) {
        let params = st.curve.params;
        let d = gaussian_density(&st.curve, &params, spec, st.t)?;
        samples.push(DensitySample { t: st.t, phi: d.phi, err: d.tail_bound });
    }
    if samples.is_empty() {
        return Err(Error::EmptyWindow(format!("no state precedes t0 = {}", spec.t0)));
    }
    let max_violation = samples.windows(2).fold(0.0f64, |m, w| m.max(w[1].phi - w[0].phi));
    Ok(DensityTrace { samples, max_violation })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelResidual {
    /// div_M(Dρ) + (Dρ·ν)²/ρ + ρ_t.
    pub residual: f64,
    /// ρ·((n−1)/2τ + |x−x0|²/4τ²), the size of the individual terms.
    pub scale: f64,
}

/// Evaluate the kernel identity at (x, t) for the tangent (n−1)-plane spanned by the
/// orthonormal `frame`, for the kernel with exponent −|x−x0|²/(spread·τ). The identity
/// holds exactly for spread = 4.
pub fn kernel_identity_residual(x: &[f64], x0: &[f64], t: f64, t0: f64, frame: &[Vec<f64>], spread: f64) -> Result<KernelResidual> {
    let n = x.len();
    if x0.len() != n || frame.len() + 1 != n || frame.iter().any(|e| e.len() != n) {
        return Err(Error::InvalidParams(format!("need points in R^n and n−1 frame vectors (n = {n})")));
    }
    let tau = t0 - t;
    if !(tau > 0.0) {
        return Err(Error::InvalidParams(format!("t = {t} must precede t0 = {t0}")));
    }
    let y: Vec<f64> = x.iter().zip(x0).map(|(a, b)| a - b).collect();
    let y2: f64 = y.iter().map(|v| v * v).sum();
    let yt2: f64 = frame.iter().map(|e| e.iter().zip(&y).map(|(a, b)| a * b).sum::<f64>().powi(2)).sum();
    let yn2 = (y2 - yt2).max(0.0);
    let m = n as f64 - 1.0;
    let c = spread * tau;
    let rho = (4.0 * PI * tau).powf(-m / 2.0) * (-y2 / c).exp();
    let div = rho * (4.0 * yt2 / (c * c) - 2.0 * m / c);
    let normal = rho * 4.0 * yn2 / (c * c);
    let dt = rho * (m / (2.0 * tau) - y2 / (spread * tau * tau));
    Ok(KernelResidual { residual: div + normal + dt, scale: rho * (m / (2.0 * tau) + y2 / (4.0 * tau * tau)) })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Functional {
    /// ∫ e^{−|x|²/4} dμ
    J,
    /// ∫ e^{+|x|²/4} dμ
    K,
}

impl Functional {
    fn weight(&self) -> Weight {
        match self {
            Functional::J => Weight::GaussianMinus,
            Functional::K => Weight::GaussianPlus,
        }
    }

    /// Sign of Df = sign·(x/2)·f.
    fn sign(&self) -> f64 {
        match self {
            Functional::J => -1.0,
            Functional::K => 1.0,
        }
    }
}

/// Normal perturbation φ·ν of a profile.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Direction {
    /// amplitude·(1 − w²)⁴ with w = (s − center)/half_width, supported on |w| < 1.
    Bump { center: f64, half_width: f64, amplitude: f64 },
    /// Constant φ over a curve whose ends both lie on axes (a closed hypersurface).
    Constant(f64),
}

impl Direction {
    fn support(&self, curve: &ProfileCurve) -> (f64, f64) {
        match *self {
            Direction::Bump { center, half_width, .. } => (center - half_width, center + half_width),
            Direction::Constant(_) => (curve.first().s, curve.last().s),
        }
    }

    /// (φ, φ') at arclength s.
    fn eval(&self, s: f64) -> (f64, f64) {
        match *self {
            Direction::Bump { center, half_width, amplitude } => {
                let w = (s - center) / half_width;
                if w.abs() >= 1.0 {
                    return (0.0, 0.0);
                }
                let b = 1.0 - w * w;
                (amplitude * b.powi(4), amplitude * 4.0 * b.powi(3) * (-2.0 * w) / half_width)
            }
            Direction::Constant(a) => (a, 0.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FirstVariation {
    /// Central difference (F(h) − F(−h))/2h.
    pub fd: f64,
    /// (4·D(h/2) − D(h))/3.
    pub richardson: f64,
    /// −∫ f φ (H ∓ x·ν/2) dμ.
    pub analytic: f64,
    /// log₂ of successive difference ratios over h, h/2, h/4 (2 for a smooth functional).
    pub order: f64,
    /// (∫ φ² dμ)^{1/2}.
    pub direction_norm: f64,
    /// ∫ f |φ| (|H| + |x·ν|/2) dμ, the size of the integrand.
    pub scale: f64,
}

fn support_integral<G: Fn(&ProfilePoint, f64, f64) -> f64>(curve: &ProfileCurve, lo: f64, hi: f64, g: G) -> f64 {
    let params = curve.params;
    let mut total = 0.0;
    for i in 0..curve.points.len() - 1 {
        let a = curve.points[i].s.max(lo);
        let b = curve.points[i + 1].s.min(hi);
        if b <= a {
            continue;
        }
        let f = |s: f64| g(&curve.eval_panel(i, s), s, params.orbit_factor());
        total += adaptive_gauss(&f, a, b, 1e-14 * (b - a), 8);
    }
    total
}

/// Same nodes for every call, so the quadrature error is a smooth function of the
/// perturbation and cancels in differences.
fn support_integral_fixed<G: Fn(&ProfilePoint, f64, f64) -> f64>(curve: &ProfileCurve, lo: f64, hi: f64, g: G) -> f64 {
    let orbit = curve.params.orbit_factor();
    let mut total = 0.0;
    for i in 0..curve.points.len() - 1 {
        let a = curve.points[i].s.max(lo);
        let b = curve.points[i + 1].s.min(hi);
        if b > a {
            total += gauss(&|s: f64| g(&curve.eval_panel(i, s), s, orbit), a, b, 16);
        }
    }
    total
}

/// J(ε) − J(−ε) (or K) for the perturbation ±εφν. The odd part is formed pointwise
/// from the log-ratio of the two integrands, so it does not cancel against the value
/// of the functional.
fn perturbed_difference(curve: &ProfileCurve, functional: Functional, dir: &Direction, eps: f64) -> f64 {
    let (lo, hi) = dir.support(curve);
    let (pm1, qm1) = (curve.params.p as i32 - 1, curve.params.q as i32 - 1);
    let weight = functional.weight();
    let sign = functional.sign();
    support_integral_fixed(curve, lo, hi, |pt, s, orbit| {
        let (phi, dphi) = dir.eval(s);
        let nu = pt.normal();
        let d = eps * phi;
        let (r, u) = (pt.r - d * nu[0], pt.u - d * nu[1]);
        let speed2 = (1.0 + d * pt.k).powi(2) + (eps * dphi).powi(2);
        let base = orbit * weight.eval(r, u) * r.abs().powi(pm1) * u.abs().powi(qm1) * speed2.sqrt();
        let mut log_ratio = sign * d * (pt.r * nu[0] + pt.u * nu[1]) + 0.5 * (-4.0 * d * pt.k / speed2).ln_1p();
        if pm1 > 0 {
            log_ratio += 2.0 * pm1 as f64 * (d * nu[0] / pt.r).atanh();
        }
        if qm1 > 0 {
            log_ratio += 2.0 * qm1 as f64 * (d * nu[1] / pt.u).atanh();
        }
        base * log_ratio.exp_m1()
    })
}

/// Derivative of J or K along φν: central differences at h, h/2, h/4 against the
/// analytic first variation.
pub fn first_variation(curve: &ProfileCurve, functional: Functional, dir: &Direction, h: f64) -> Result<FirstVariation> {
    let (lo, hi) = dir.support(curve);
    match dir {
        Direction::Bump { half_width, .. } if !(*half_width > 0.0) || lo <= curve.first().s || hi >= curve.last().s => {
            return Err(Error::InvalidParams(format!(
                "bump support [{lo}, {hi}] must lie inside the curve [{}, {}]",
                curve.first().s,
                curve.last().s
            )));
        }
        Direction::Constant(_) => {
            let scale = curve.points.iter().fold(0.0f64, |m, p| m.max(p.radius()));
            if !on_axis(curve.first(), scale) || !on_axis(curve.last(), scale) {
                return Err(Error::InvalidParams("a constant direction needs both ends on axes".into()));
            }
        }
        _ => {}
    }
    if !(h > 0.0) {
        return Err(Error::InvalidParams("h must be positive".into()));
    }
    let d = |h: f64| perturbed_difference(curve, functional, dir, h) / (2.0 * h);
    let (d1, d2, d4) = (d(h), d(h / 2.0), d(h / 4.0));
    let params = curve.params;
    let weight = functional.weight();
    let sign = functional.sign();
    let (pm1, qm1) = (params.p as i32 - 1, params.q as i32 - 1);
    let measure = |pt: &ProfilePoint, orbit: f64| orbit * pt.r.abs().powi(pm1) * pt.u.powi(qm1);
    let analytic = -support_integral(curve, lo, hi, |pt, s, orbit| {
        let phi = dir.eval(s).0;
        let nu = pt.normal();
        let xnu = pt.r * nu[0] + pt.u * nu[1];
        let hh = mean_curvature_unchecked(pt, &params);
        weight.eval(pt.r, pt.u) * phi * (hh - sign * xnu / 2.0) * measure(pt, orbit)
    });
    let scale = support_integral(curve, lo, hi, |pt, s, orbit| {
        let phi = dir.eval(s).0;
        let nu = pt.normal();
        let xnu = pt.r * nu[0] + pt.u * nu[1];
        let hh = mean_curvature_unchecked(pt, &params);
        weight.eval(pt.r, pt.u) * phi.abs() * (hh.abs() + xnu.abs() / 2.0) * measure(pt, orbit)
    });
    let direction_norm = support_integral(curve, lo, hi, |pt, s, orbit| dir.eval(s).0.powi(2) * measure(pt, orbit)).sqrt();
    if (d1 - d2).abs() > 0.1 * scale.max(f64::MIN_POSITIVE) {
        return Err(Error::InvalidParams(format!(
            "h = {h} is too large: D(h) − D(h/2) = {:e} against integrand size {scale:e}",
            d1 - d2
        )));
    }
    let order = ((d1 - d2).abs() / (d2 - d4).abs()).log2();
    Ok(FirstVariation { fd: d2, richardson: (4.0 * d2 - d1) / 3.0, analytic, order, direction_norm, scale })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussBonnetReport {
    /// (1−ε)∫_{M∩B₁}|A|².
    pub lhs: f64,
    /// ∫_{M∩B₂}H².
    pub h2_integral: f64,
    /// 8πg.
    pub genus_term: f64,
    /// 96πD/ε.
    pub area_term: f64,
    pub epsilon: f64,
    /// sup_{r∈[1,2]} area(M∩B_r)/(πr²).
    pub d_ratio: f64,
    pub genus: usize,
    pub holds: bool,
    /// (64π/ε + 32π)·D, the area constant produced by the cutoff (2−|x|)² on B₂∖B₁.
    pub cutoff_area_term: f64,
    pub holds_with_cutoff_constant: bool,
    /// False when the curve stays inside B₂, so D is taken over the available range.
    pub reaches_b2: bool,
}

/// Relative slack on ball radii, so that points on |x| = 1 count as inside B₁.
const BALL_SLACK: f64 = 1e-9;

/// Localized Gauss-Bonnet estimate for a surface of revolution in R³ (p = 1, q = 2).
pub fn gauss_bonnet_audit(curve: &ProfileCurve, genus: usize, epsilon: f64) -> Result<GaussBonnetReport> {
    let params = curve.params;
    if params.p != 1 || params.q != 2 {
        return Err(Error::InvalidParams("the Gauss-Bonnet audit needs surfaces in R^3 (p = 1, q = 2)".into()));
    }
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::InvalidParams(format!("epsilon = {epsilon} must lie in (0, 1)")));
    }
    let b1 = 1.0 + BALL_SLACK;
    let b2 = 2.0 * (1.0 + BALL_SLACK);
    let a2 = curve.integrate(Some(b1), |pt| second_fundamental_norm_unchecked(pt, &params))?;
    let h2 = curve.integrate(Some(b2), |pt| mean_curvature_unchecked(pt, &params).powi(2))?;
    let mut d_ratio = 0.0f64;
    for i in 0..=200 {
        let r = 1.0 + i as f64 / 200.0;
        let area = weighted_area(curve, Weight::Unit, Some(r * (1.0 + BALL_SLACK)))?;
        d_ratio = d_ratio.max(area / (PI * r * r));
    }
    let lhs = (1.0 - epsilon) * a2;
    let genus_term = 8.0 * PI * genus as f64;
    let area_term = 96.0 * PI * d_ratio / epsilon;
    let cutoff_area_term = (64.0 * PI / epsilon + 32.0 * PI) * d_ratio;
    let extent = curve.points.iter().fold(0.0f64, |m, p| m.max(p.radius()));
    Ok(GaussBonnetReport {
        lhs,
        h2_integral: h2,
        genus_term,
        area_term,
        epsilon,
        d_ratio,
        genus,
        holds: lhs <= h2 + genus_term + area_term,
        cutoff_area_term,
        holds_with_cutoff_constant: lhs <= h2 + genus_term + cutoff_area_term,
        reaches_b2: extent >= 2.0,
    })
}

/// Catenoid u = c·cosh(r/c) for r ∈ [0, r_max], with exact tangent and curvature.
pub fn catenoid(c: f64, r_max: f64, samples: usize) -> Result<ProfileCurve> {
    if !(c > 0.0 && r_max > 0.0) || samples < 2 {
        return Err(Error::InvalidParams("catenoid needs c > 0, r_max > 0 and two samples".into()));
    }
    let params = FlowParams::axial(3)?;
    let pts = (0..samples)
        .map(|i| {
            let r = r_max * i as f64 / (samples - 1) as f64;
            let x = r / c;
            ProfilePoint::new(c * x.sinh(), r, c * x.cosh(), x.sinh().atan(), 1.0 / (c * x.cosh().powi(2)))
        })
        .collect();
    ProfileCurve::new(pts, params, crate::ode::TerminationEvent::analytic())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TotalCurvature {
    pub integral: f64,
    pub components: usize,
    /// integral ≥ 2π·components − 1e−9.
    pub bound_holds: bool,
}

/// ∫|k| ds of closed polygons, as the sum of exterior angles (exact for polygons).
pub fn total_curvature<const D: usize>(components: &[Vec<[f64; D]>]) -> Result<TotalCurvature> {
    let mut integral = 0.0;
    let mut offset = 0;
    for comp in components {
        let m = comp.len();
        if m < 3 {
            return Err(Error::InvalidParams("closed curves need three vertices".into()));
        }
        for i in 0..m {
            let (a, b, c) = (&comp[(i + m - 1) % m], &comp[i], &comp[(i + 1) % m]);
            let mut dot = 0.0;
            let (mut n1, mut n2) = (0.0, 0.0);
            for j in 0..D {
                let (e1, e2) = (b[j] - a[j], c[j] - b[j]);
                dot += e1 * e2;
                n1 += e1 * e1;
                n2 += e2 * e2;
            }
            let cross = (n1 * n2 - dot * dot).max(0.0).sqrt();
            let turn = cross.atan2(dot);
            if turn > PI / 2.0 {
                return Err(Error::Cusp(offset + i));
            }
            integral += turn;
        }
        offset += m;
    }
    let components = components.len();
    Ok(TotalCurvature { integral, components, bound_holds: integral >= 2.0 * PI * components as f64 - 1e-9 })
}

/// |k| ≤ (|A_M(γ̇,γ̇)| + |A_N(γ̇,γ̇)|)/sin α for a transverse intersection curve.
pub fn transverse_bound_check(a_m: f64, a_n: f64, sin_alpha: f64, k_measured: f64, tol: f64) -> Result<bool> {
    if !(sin_alpha > 0.0) {
        return Err(Error::InvalidParams(format!("sin alpha = {sin_alpha}: the intersection is not transverse")));
    }
    Ok(k_measured.abs() <= (a_m.abs() + a_n.abs()) / sin_alpha + tol)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SliceCheck {
    pub r: f64,
    pub u: f64,
    /// Curvature 1/u of the orbit circle M ∩ ∂B_ρ.
    pub k: f64,
    pub bound: f64,
    pub sin_alpha: f64,
    pub holds: bool,
}

/// Checks |k| ≤ (|A_M| + 1/ρ)/sin α on the circles where a surface of revolution in R³
/// meets the sphere ∂B_ρ.
pub fn sphere_slice_check(curve: &ProfileCurve, rho: f64) -> Result<Vec<SliceCheck>> {
    let params = curve.params;
    if params.p != 1 || params.q != 2 {
        return Err(Error::InvalidParams("slices are checked for surfaces in R^3 (p = 1, q = 2)".into()));
    }
    let mut out = Vec::new();
    for i in 0..curve.points.len() - 1 {
        let (a, b) = (&curve.points[i], &curve.points[i + 1]);
        if (a.radius() - rho) * (b.radius() - rho) > 0.0 || a.radius() == rho && i > 0 {
            continue;
        }
        let (mut lo, mut hi) = (a.s, b.s);
        let ga = a.radius() - rho;
        for _ in 0..100 {
            let mid = 0.5 * (lo + hi);
            if (curve.eval_panel(i, mid).radius() - rho) * ga > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let pt = curve.eval_panel(i, 0.5 * (lo + hi));
        if pt.u <= 0.0 {
            continue;
        }
        let nu = pt.normal();
        let cos_alpha = ((pt.r * nu[0] + pt.u * nu[1]) / rho).abs().min(1.0);
        let sin_alpha = (1.0 - cos_alpha * cos_alpha).sqrt();
        let k = 1.0 / pt.u;
        let a_m = pt.theta.cos() / pt.u;
        // tangential contact is not a transverse intersection
        if sin_alpha <= 1e-6 {
            continue;
        }
        let bound = (a_m.abs() + 1.0 / rho) / sin_alpha;
        out.push(SliceCheck { r: pt.r, u: pt.u, k, bound, sin_alpha, holds: k <= bound * (1.0 + 1e-9) });
    }
    Ok(out)
}
