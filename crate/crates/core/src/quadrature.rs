//! Gauss-Legendre rules and adaptive composite quadrature.

use std::sync::OnceLock;

/// Nodes and weights of the n-point Gauss-Legendre rule on [-1, 1].
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for j in 2..=n {
                let p2 = ((2 * j - 1) as f64 * x * p1 - (j - 1) as f64 * p0) / j as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

fn rule(n: usize) -> &'static (Vec<f64>, Vec<f64>) {
    static G8: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    static G16: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    match n {
        8 => G8.get_or_init(|| gauss_legendre(8)),
        16 => G16.get_or_init(|| gauss_legendre(16)),
        _ => unreachable!("only 8- and 16-point rules are cached"),
    }
}

/// Fixed-order Gauss-Legendre on [a, b].
pub fn gauss<F: Fn(f64) -> f64 + ?Sized>(f: &F, a: f64, b: f64, n: usize) -> f64 {
    let (x, w) = rule(n);
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    x.iter().zip(w).map(|(xi, wi)| wi * f(c + h * xi)).sum::<f64>() * h
}

/// Adaptive bisection driven by the difference of 8- and 16-point rules.
pub fn adaptive_gauss<F: Fn(f64) -> f64 + ?Sized>(f: &F, a: f64, b: f64, tol: f64, depth: usize) -> f64 {
    let coarse = gauss(f, a, b, 8);
    let fine = gauss(f, a, b, 16);
    if (fine - coarse).abs() <= tol || depth == 0 || !fine.is_finite() {
        return fine;
    }
    let m = 0.5 * (a + b);
    adaptive_gauss(f, a, m, 0.5 * tol, depth - 1) + adaptive_gauss(f, m, b, 0.5 * tol, depth - 1)
}
