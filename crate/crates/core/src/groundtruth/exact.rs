use std::f64::consts::PI;

use crate::error::{Error, Result};

fn check_rates(alpha: f64, beta: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha <= 1.0 && beta > 0.0 && beta <= 1.0) {
        return Err(Error::invalid(format!("TASEP rates ({alpha}, {beta}) must lie in (0, 1]")));
    }
    Ok(())
}

/// Asymptotic current of the open TASEP, `J(α, β)`.
pub fn tasep_free_energy(alpha: f64, beta: f64) -> Result<f64> {
    check_rates(alpha, beta)?;
    Ok(if alpha >= 0.5 && beta >= 0.5 {
        0.25
    } else if alpha <= beta {
        alpha * (1.0 - alpha)
    } else {
        beta * (1.0 - beta)
    })
}

/// `(∂J/∂α, ∂J/∂β)`; on the coexistence line `α = β < ½` the low-density branch is returned.
pub fn tasep_free_energy_gradient(alpha: f64, beta: f64) -> Result<[f64; 2]> {
    check_rates(alpha, beta)?;
    Ok(if alpha >= 0.5 && beta >= 0.5 {
        [0.0, 0.0]
    } else if alpha <= beta {
        [1.0 - 2.0 * alpha, 0.0]
    } else {
        [0.0, 1.0 - 2.0 * beta]
    })
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`, by Newton iteration on `P_n`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        let mut z = (PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * z * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 0 { 1.0 } else if n == 1 { z } else { p1 };
            let pm = if n == 1 { 1.0 } else { p0 };
            dp = nf * (z * pn - pm) / (z * z - 1.0);
            let dz = pn / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
        w[n - 1 - i] = w[i];
    }
    (x, w)
}

/// Free energy per site of the zero-field square-lattice Ising model (`J = k_B = 1`):
/// `−F/T = ln 2 + (1/2π²) ∫₀^π∫₀^π ln[cosh²(2/T) − sinh(2/T)(cos θ₁ + cos θ₂)] dθ₁ dθ₂`,
/// by 256×256-point Gauss–Legendre quadrature.
pub fn onsager_free_energy(temperature: f64) -> Result<f64> {
    onsager_free_energy_with(temperature, 256)
}

pub fn onsager_free_energy_with(temperature: f64, order: usize) -> Result<f64> {
    if !(temperature > 0.0) || !temperature.is_finite() {
        return Err(Error::invalid(format!("temperature {temperature} must be positive")));
    }
    if order < 2 {
        return Err(Error::invalid("quadrature order must be at least 2"));
    }
    let k2 = 2.0 / temperature;
    let (c2, s2) = (k2.cosh().powi(2), k2.sinh());
    let (x, w) = gauss_legendre(order);
    let cos: Vec<f64> = x.iter().map(|xi| (0.5 * PI * (xi + 1.0)).cos()).collect();
    let mut sum = 0.0;
    for (ca, wa) in cos.iter().zip(&w) {
        let mut inner = 0.0;
        for (cb, wb) in cos.iter().zip(&w) {
            inner += wb * (c2 - s2 * (ca + cb)).ln();
        }
        sum += wa * inner;
    }
    // Each axis maps [-1, 1] onto [0, π], a Jacobian of π/2.
    let integral = sum * (0.5 * PI).powi(2);
    let f = -temperature * (2f64.ln() + integral / (2.0 * PI * PI));
    if !f.is_finite() {
        return Err(Error::Quadrature { temperature });
    }
    Ok(f)
}
