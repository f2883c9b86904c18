//! Force obtained directly from the Liouville equation.
//!
//! For an equilibrium `f = ρ K(u)`, `u = p − ∇S`, the force that keeps `f`
//! stationary under the phase-space flow satisfies
//! `∂_p (F f) = −(∂_t f + (p/m) ∂_x f)`, hence
//!
//! ```text
//! F(x, p, t) = −[∫_{−∞}^{p} (∂_t f + (p′/m) ∂_x f) dp′] / f(x, p, t).
//! ```
//!
//! `∂_t ρ` and `∂_t ∇S` come from the continuity and quantum Hamilton–Jacobi
//! equations, so the integrand needs only the local fields and closed-form
//! kernel derivatives.
//!
//! For kernels with a finite second moment the tail integral converges. For
//! the Lorentzian the `∂_x ρ · u K(u)` term decays like `1/u` and the
//! integral grows like `ln L`; the finite part (log term measured in units of
//! the kernel width μ) is used instead. The discarded piece is independent of
//! p, so it drops out of `∂_p(F f)` and the Liouville equation still holds.

use crate::error::{Error, Result};
use crate::kernels::KernelSpec;
use crate::quadrature::GaussLegendre;
use crate::wavefunction::WaveFunctionModel;

const RULE_ORDER: usize = 20;
/// Tail checkpoints in units of the kernel width: 2^12 through 2^24.
const CHECKPOINTS: [u32; 5] = [12, 15, 18, 21, 24];
const TAIL_TOLERANCE: f64 = 1e-7;

struct Source {
    kernel: KernelSpec,
    grad_s: f64,
    inv_mass: f64,
    /// ∂_t ρ / ρ
    rho_t: f64,
    /// ∂_x ρ / ρ
    rho_x: f64,
    /// ∂_t ∇S
    grad_s_t: f64,
    hess_s: f64,
}

impl Source {
    /// `(∂_t f + (p/m) ∂_x f) / ρ` at momentum deviation `u`.
    fn eval(&self, u: f64) -> f64 {
        let k = self.kernel.profile(u).unwrap_or(0.0);
        let dk = self.kernel.profile_derivative(u).unwrap_or(0.0);
        let p = self.grad_s + u;
        let df_dt = self.rho_t * k - dk * self.grad_s_t;
        let df_dx = self.rho_x * k - dk * self.hess_s;
        df_dt + p * self.inv_mass * df_dx
    }
}

/// Finite part of `∫_{u}^{u ± ∞} source`, the direction given by `sign`.
fn tail_finite_part(source: &Source, rule: &GaussLegendre, u: f64, sign: f64) -> Result<f64> {
    let w = source.kernel.scale();
    let mut acc = 0.0;
    let mut lo = 0.0;
    let mut samples = [0.0; 5];
    let mut next = 0;
    let panel = |a: f64, b: f64| rule.integrate(a, b, |s| source.eval(u + sign * s));
    // fine panels near the peak, then doubling widths
    for j in 0..8 {
        let a = 0.5 * w * j as f64;
        acc += panel(a, a + 0.5 * w);
        lo = a + 0.5 * w;
    }
    let mut k = 2u32;
    while next < CHECKPOINTS.len() {
        let hi = w * 2f64.powi(k as i32 + 1);
        acc += panel(lo, hi);
        lo = hi;
        k += 1;
        if k == CHECKPOINTS[next] {
            samples[next] = acc;
            next += 1;
        }
    }
    // I(L) = a ln(L/w) + b + c w/L + d (w/L)² through the first four
    // checkpoints, the fifth one checks the fit
    let ls: Vec<f64> = CHECKPOINTS.iter().map(|&k| 2f64.powi(k as i32)).collect();
    let row = |l: f64| [l.ln(), 1.0, 1.0 / l, 1.0 / (l * l)];
    let coef = solve4(
        [row(ls[0]), row(ls[1]), row(ls[2]), row(ls[3])],
        [samples[0], samples[1], samples[2], samples[3]],
    );
    let predicted: f64 = row(ls[4]).iter().zip(&coef).map(|(r, c)| r * c).sum();
    let miss = (predicted - samples[4]).abs();
    let scale = samples.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    if !miss.is_finite() || miss > TAIL_TOLERANCE * scale {
        return Err(Error::TailDivergence(format!(
            "tail integral {} differs from the logarithmic extrapolation {predicted}",
            samples[4]
        )));
    }
    Ok(sign * coef[1])
}

/// Gaussian elimination with partial pivoting.
fn solve4(mut m: [[f64; 4]; 4], mut r: [f64; 4]) -> [f64; 4] {
    for col in 0..4 {
        let piv = (col..4)
            .max_by(|&a, &b| m[a][col].abs().total_cmp(&m[b][col].abs()))
            .unwrap();
        m.swap(col, piv);
        r.swap(col, piv);
        for row in col + 1..4 {
            let f = m[row][col] / m[col][col];
            let pivot = m[col];
            for (a, b) in m[row].iter_mut().zip(pivot).skip(col) {
                *a -= f * b;
            }
            r[row] -= f * r[col];
        }
    }
    let mut out = [0.0; 4];
    for row in (0..4).rev() {
        let tail: f64 = (row + 1..4).map(|k| m[row][k] * out[k]).sum();
        out[row] = (r[row] - tail) / m[row][row];
    }
    out
}

/// Total force `−∇V + F_Q` making `ρ K(p − ∇S)` satisfy the Liouville
/// equation, built by integrating the equation over momentum.
///
/// For `p ≤ ∇S` the flux is integrated in from `−∞`, otherwise out to `+∞`;
/// both agree because the full integral vanishes by continuity, and the
/// choice avoids cancellation in the tails.
pub fn integral_force(kernel: &KernelSpec, model: &WaveFunctionModel, x: f64, p: f64, t: f64) -> Result<f64> {
    if kernel.is_dirac() {
        return Err(Error::DiracKernel);
    }
    kernel.validate()?;
    let fields = model.eval_valid(x, t)?;
    let params = model.params();
    let inv_mass = 1.0 / params.mass;
    let grad_v = model.potential().gradient(x);
    let rho_x = fields.grad_log_rho();
    let source = Source {
        kernel: *kernel,
        grad_s: fields.grad_s,
        inv_mass,
        rho_t: -(rho_x * fields.grad_s + fields.hess_s) * inv_mass,
        rho_x,
        grad_s_t: -(fields.grad_s * fields.hess_s * inv_mass + grad_v + fields.grad_q),
        hess_s: fields.hess_s,
    };
    let rule = GaussLegendre::new(RULE_ORDER);
    let u = p - fields.grad_s;
    // Φ(u) = −∫_{−∞}^{u} source = ∫_{u}^{∞} source
    let flux = if u <= 0.0 {
        tail_finite_part(&source, &rule, u, -1.0)?
    } else {
        tail_finite_part(&source, &rule, u, 1.0)?
    };
    Ok(flux / kernel.profile(u)?)
}

/// [`integral_force`] restricted to the Lorentzian kernel.
pub fn lorentzian_force(kernel: &KernelSpec, model: &WaveFunctionModel, x: f64, p: f64, t: f64) -> Result<f64> {
    if kernel.kind != crate::kernels::KernelKind::Lorentzian {
        return Err(Error::InvalidParameter(
            "lorentzian_force needs a Lorentzian kernel".into(),
        ));
    }
    integral_force(kernel, model, x, p, t)
}
