use super::ForceLaw;
use crate::error::{Error, Result};
use crate::kernels::{equilibrium_density, KernelSpec};
use crate::wavefunction::WaveFunctionModel;

/// Fourth-order central difference of `g` at 0 with step `h`.
fn central<F: FnMut(f64) -> Result<f64>>(mut g: F, h: f64) -> Result<f64> {
    let (m2, m1, p1, p2) = (g(-2.0 * h)?, g(-h)?, g(h)?, g(2.0 * h)?);
    Ok((m2 - 8.0 * m1 + 8.0 * p1 - p2) / (12.0 * h))
}

/// Left side of the phase-space Liouville equation,
/// `∂_t f + (p/m) ∂_x f + ∂_p (F f)`, for `f = f_μ` and the force of `law`,
/// evaluated with central finite differences of step `h` in t, x and p.
pub fn liouville_residual(
    kernel: &KernelSpec,
    model: &WaveFunctionModel,
    law: &ForceLaw,
    x: f64,
    p: f64,
    t: f64,
    h: f64,
) -> Result<f64> {
    let neighborhood = |e: Error| match e {
        Error::NodeRegion { .. } | Error::InvalidField | Error::OutOfDomain { .. } | Error::OutOfTimeRange { .. } => {
            Error::InvalidNeighborhood { x, p, t }
        }
        other => other,
    };
    let density = |x: f64, p: f64, t: f64| -> Result<f64> {
        let fields = model.eval_valid(x, t).map_err(neighborhood)?;
        equilibrium_density(kernel, &fields, p).map_err(neighborhood)
    };
    let df_dt = central(|d| density(x, p, t + d), h)?;
    let df_dx = central(|d| density(x + d, p, t), h)?;
    let dflux_dp = central(
        |d| {
            let f = density(x, p + d, t)?;
            Ok(law.force(model, x, p + d, t).map_err(neighborhood)? * f)
        },
        h,
    )?;
    Ok(df_dt + p / model.params().mass * df_dx + dflux_dp)
}

/// [`liouville_residual`] divided by `f_μ(x, p, t)`.
pub fn relative_liouville_residual(
    kernel: &KernelSpec,
    model: &WaveFunctionModel,
    law: &ForceLaw,
    x: f64,
    p: f64,
    t: f64,
    h: f64,
) -> Result<f64> {
    let r = liouville_residual(kernel, model, law, x, p, t, h)?;
    let f = equilibrium_density(kernel, &model.eval_valid(x, t)?, p)?;
    Ok(r.abs() / f)
}
