//! Linearizations of the expander and shrinker equations over the cone u = λ_s r:
//!
//!   h''/(1+λ_s²) + (p−1)(h'/r + h/r²) ± (r h' − h)/2 = 0,
//!
//! with + for expanders and − for shrinkers.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::rk::{Dopri5, StepControl};
use super::{EquationKind, IntegratorConfig};
use crate::error::{Error, Result};
use crate::geometry::FlowParams;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearSample {
    pub r: f64,
    pub h: f64,
    pub dh: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearBasis {
    pub kind: EquationKind,
    /// Solution with h1 ≈ r^{−β} cos(μ log r) as r → 0.
    pub h1: Vec<LinearSample>,
    /// Solution with h2 ≈ r^{−β} sin(μ log r) as r → 0.
    pub h2: Vec<LinearSample>,
    /// Shrinker only: the solution growing like r at infinity, from backward integration.
    pub g3: Option<Vec<LinearSample>>,
}

/// Start radius of the oscillatory modes.
pub const LINEAR_R0: f64 = 1e-3;

fn sign(kind: EquationKind) -> Result<f64> {
    match kind {
        EquationKind::LinearizedExpander => Ok(1.0),
        EquationKind::LinearizedShrinker => Ok(-1.0),
        _ => Err(Error::InvalidParams(format!("{kind:?} is not a linearized kind"))),
    }
}

fn oscillatory_range(params: &FlowParams) -> Result<()> {
    if params.p < 2 || !(4..=7).contains(&params.n) {
        return Err(Error::InvalidParams(format!(
            "oscillatory linearization needs p >= 2 and 4 <= n <= 7 (p = {}, n = {})",
            params.p, params.n
        )));
    }
    Ok(())
}

/// Indicial exponent −β + iμ of the linearized equations at r = 0.
pub fn indicial_exponent(params: &FlowParams) -> Complex64 {
    let n = params.n as f64;
    let disc = 4.0 * (n - 2.0) - (n - 3.0).powi(2);
    Complex64::new(-(n - 3.0) / 2.0, disc.max(0.0).sqrt() / 2.0)
}

/// Complex series mode r^s (1 + c₂ r²) and its derivative.
pub fn series_mode(kind: EquationKind, params: &FlowParams, r: f64) -> Result<(Complex64, Complex64)> {
    let sg = sign(kind)?;
    let lam2 = params.lambda_s()?.powi(2);
    let s = indicial_exponent(params);
    let poly = |m: Complex64| m * (m - 1.0) / (1.0 + lam2) + params.pm1() * (m + 1.0);
    let c2 = -sg * (s - 1.0) / (2.0 * poly(s + 2.0));
    let rs = Complex64::new(r, 0.0).powc(s);
    let h = rs * (1.0 + c2 * r * r);
    let dh = rs * (s / r + c2 * (s + 2.0) * r);
    Ok((h, dh))
}

/// Coefficients (b₁, b₃) of the large-r expansion h = C (r + b₁/r + b₃/r³ + …).
pub fn far_field_coefficients(kind: EquationKind, params: &FlowParams) -> Result<(f64, f64)> {
    let sg = sign(kind)?;
    let lam2 = params.lambda_s()?.powi(2);
    let b1 = sg * 2.0 * params.pm1();
    let b3 = 2.0 * params.pm1() / (1.0 + lam2);
    Ok((b1, b3))
}

/// Coefficient C of a solution behaving like C r at infinity, read at (r, h, h').
pub fn far_field_amplitude(kind: EquationKind, params: &FlowParams, s: &LinearSample) -> Result<f64> {
    let (_, b3) = far_field_coefficients(kind, params)?;
    let est = 0.5 * (s.h / s.r + s.dh);
    Ok(est / (1.0 - b3 / s.r.powi(4)))
}

fn rhs(sg: f64, lam2: f64, pm1: f64) -> impl FnMut(f64, &[f64; 2]) -> [f64; 2] {
    move |r, y| {
        let (h, dh) = (y[0], y[1]);
        let ddh = -(1.0 + lam2) * (pm1 * (dh / r + h / (r * r)) + sg * (r * dh - h) / 2.0);
        [dh, ddh]
    }
}

fn integrate(
    sg: f64,
    params: &FlowParams,
    cfg: &IntegratorConfig,
    r0: f64,
    y0: [f64; 2],
    r1: f64,
) -> Result<Vec<LinearSample>> {
    let lam2 = params.lambda_s()?.powi(2);
    let ctrl = StepControl {
        rel_tol: cfg.rel_tol,
        abs_tol: cfg.abs_tol * 1e-6,
        max_step: cfg.max_step.max(1e-3),
        max_steps: cfg.max_steps,
    };
    let forward = r1 > r0;
    let mut rk = Dopri5::new(rhs(sg, lam2, params.pm1()), r0, y0, forward, ctrl)?;
    let mut out = vec![LinearSample { r: r0, h: y0[0], dh: y0[1] }];
    while (r1 - rk.x()) * (if forward { 1.0 } else { -1.0 }) > 0.0 {
        let st = rk.step(r1)?;
        if st.y1.iter().any(|v| v.abs() > 1e12) {
            return Err(Error::Overflow { s: st.x1 });
        }
        out.push(LinearSample { r: st.x1, h: st.y1[0], dh: st.y1[1] });
    }
    if !forward {
        out.reverse();
    }
    Ok(out)
}

/// Cubic Hermite interpolation of a sampled solution at radius r.
pub fn sample_at(samples: &[LinearSample], r: f64) -> Option<LinearSample> {
    let i = samples.windows(2).position(|w| w[0].r <= r && r <= w[1].r)?;
    let (a, b) = (samples[i], samples[i + 1]);
    let h = b.r - a.r;
    if h == 0.0 {
        return Some(a);
    }
    let t = (r - a.r) / h;
    let (t2, t3) = (t * t, t * t * t);
    let val = (2.0 * t3 - 3.0 * t2 + 1.0) * a.h
        + (t3 - 2.0 * t2 + t) * h * a.dh
        + (-2.0 * t3 + 3.0 * t2) * b.h
        + (t3 - t2) * h * b.dh;
    let der = ((6.0 * t2 - 6.0 * t) * a.h + (-6.0 * t2 + 6.0 * t) * b.h) / h
        + (3.0 * t2 - 4.0 * t + 1.0) * a.dh
        + (3.0 * t2 - 2.0 * t) * b.dh;
    Some(LinearSample { r, h: val, dh: der })
}

/// Radius past which forward integration of the shrinker linearization is refused: the
/// growing mode e^{(1+λ_s²)r²/4} has amplified round-off by 1e6 there.
pub fn shrinker_forward_horizon(params: &FlowParams) -> Result<f64> {
    let lam2 = params.lambda_s()?.powi(2);
    Ok((4.0 * 1e6f64.ln() / (1.0 + lam2)).sqrt())
}

/// Oscillatory basis near r = 0 and, for shrinkers, the solution regular at infinity.
pub fn linear_basis(kind: EquationKind, params: &FlowParams, cfg: &IntegratorConfig) -> Result<LinearBasis> {
    let sg = sign(kind)?;
    oscillatory_range(params)?;
    cfg.validate()?;
    let r_end = match kind {
        EquationKind::LinearizedShrinker => cfg.r_max.min(shrinker_forward_horizon(params)?),
        _ => cfg.r_max,
    };
    let (m, dm) = series_mode(kind, params, LINEAR_R0)?;
    let h1 = integrate(sg, params, cfg, LINEAR_R0, [m.re, dm.re], r_end)?;
    let h2 = integrate(sg, params, cfg, LINEAR_R0, [m.im, dm.im], r_end)?;
    let g3 = if kind == EquationKind::LinearizedShrinker {
        let (b1, b3) = far_field_coefficients(kind, params)?;
        let r = cfg.r_max;
        let g = r + b1 / r + b3 / r.powi(3);
        let dg = 1.0 - b1 / (r * r) - 3.0 * b3 / r.powi(4);
        Some(integrate(sg, params, cfg, r, [g, dg], LINEAR_R0)?)
    } else {
        None
    };
    Ok(LinearBasis { kind, h1, h2, g3 })
}

/// Forward integration of the shrinker linearization beyond the horizon (kept for
/// diagnostics; production code uses the backward solution).
pub fn shrinker_forward(params: &FlowParams, cfg: &IntegratorConfig, r_end: f64) -> Result<Vec<LinearSample>> {
    oscillatory_range(params)?;
    if r_end > shrinker_forward_horizon(params)? {
        return Err(Error::Overflow { s: r_end });
    }
    let (m, dm) = series_mode(EquationKind::LinearizedShrinker, params, LINEAR_R0)?;
    integrate(-1.0, params, cfg, LINEAR_R0, [m.re, dm.re], r_end)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn indicial_roots() {
        for n in 4..=7 {
            let params = FlowParams::new(2, n - 2).unwrap();
            let s = indicial_exponent(&params);
            let nf = n as f64;
            let v = s * s + (nf - 3.0) * s + (nf - 2.0);
            assert!(v.norm() < 1e-13, "n = {n}");
            let beta = (nf - 3.0) / 2.0;
            let mu = (8.0 - (nf - 5.0).powi(2)).sqrt() / 2.0;
            assert!((s.re + beta).abs() < 1e-15 && (s.im - mu).abs() < 1e-15);
        }
    }

    #[test]
    fn series_mode_residual() {
        // plugging the two-term series into the equation leaves an O(r^{s+2}) residual
        for kind in [EquationKind::LinearizedExpander, EquationKind::LinearizedShrinker] {
            let params = FlowParams::new(2, 3).unwrap();
            let lam2 = params.lambda_s().unwrap().powi(2);
            let sg = sign(kind).unwrap();
            for r in [1e-2, 1e-3] {
                let (h, dh) = series_mode(kind, &params, r).unwrap();
                let eps = 1e-6 * r;
                let (_, dhp) = series_mode(kind, &params, r + eps).unwrap();
                let (_, dhm) = series_mode(kind, &params, r - eps).unwrap();
                let ddh = (dhp - dhm) / (2.0 * eps);
                let res = ddh / (1.0 + lam2) + params.pm1() * (dh / r + h / (r * r)) + sg * (dh * r - h) / 2.0;
                let scale = (h / (r * r)).norm();
                assert!(res.norm() < 1e-3 * scale * r * r + 1e-6 * scale, "{kind:?} r = {r}");
            }
        }
    }

    #[test]
    fn expander_modes_grow_linearly() {
        let params = FlowParams::new(2, 2).unwrap();
        let cfg = IntegratorConfig::default().with_r_max(20.0);
        let basis = linear_basis(EquationKind::LinearizedExpander, &params, &cfg).unwrap();
        let last = basis.h1.last().unwrap();
        let mid = basis.h1.iter().find(|s| s.r >= 15.0).unwrap();
        let c1 = far_field_amplitude(EquationKind::LinearizedExpander, &params, last).unwrap();
        let c2 = far_field_amplitude(EquationKind::LinearizedExpander, &params, mid).unwrap();
        assert!((c1 - c2).abs() < 1e-6 * c1.abs().max(1e-3));
        assert!(basis.g3.is_none());
    }

    #[test]
    fn shrinker_g3_is_produced_backward() {
        let params = FlowParams::new(2, 2).unwrap();
        let cfg = IntegratorConfig::default();
        let basis = linear_basis(EquationKind::LinearizedShrinker, &params, &cfg).unwrap();
        let g3 = basis.g3.unwrap();
        assert!((g3[0].r - LINEAR_R0).abs() < 1e-15);
        assert!((g3.last().unwrap().r - cfg.r_max).abs() < 1e-12);
        assert!(shrinker_forward(&params, &cfg, 10.0).is_err());
    }

    #[test]
    fn rejects_outside_oscillatory_range() {
        let cfg = IntegratorConfig::default();
        assert!(linear_basis(EquationKind::LinearizedExpander, &FlowParams::new(4, 5).unwrap(), &cfg).is_err());
        assert!(linear_basis(EquationKind::Minimal, &FlowParams::new(2, 2).unwrap(), &cfg).is_err());
    }
}
