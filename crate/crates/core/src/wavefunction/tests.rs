use super::*;
use crate::quadrature::GaussLegendre;
use num_complex::Complex64;
use rand::Rng;

fn unit() -> (SystemParams, Potential) {
    (SystemParams::default(), Potential::default())
}

/// Closed-form coherent-state fields for ħ = m = k = 1.
fn coherent_closed_form(alpha: f64, x: f64, t: f64) -> (f64, f64, f64, f64, f64) {
    let y = x - alpha * t.cos();
    let grad_s = -alpha * t.sin();
    let grad_log_r = -y;
    let q = -0.5 * (y * y - 1.0);
    let grad_q = -y;
    let hess_s = 0.0;
    (grad_s, grad_log_r, q, grad_q, hess_s)
}

#[test]
fn coherent_fields_at_packet_center() {
    let m = WaveFunctionModel::coherent(1.0);
    let f = m.eval_fields(1.0, 0.0).unwrap();
    assert!(f.valid);
    assert!(f.grad_s.abs() < 1e-15);
    assert!(f.grad_log_r.abs() < 1e-15);
    assert!((f.q - 0.5).abs() < 1e-15);
    assert!(f.grad_q.abs() < 1e-15);
    assert!(f.hess_s.abs() < 1e-15);
}

#[test]
fn coherent_fields_one_unit_out() {
    let m = WaveFunctionModel::coherent(1.0);
    let f = m.eval_fields(2.0, 0.0).unwrap();
    assert!((f.grad_log_r + 1.0).abs() < 1e-14);
    assert!(f.q.abs() < 1e-14);
    assert!((f.grad_q + 1.0).abs() < 1e-14);
    assert!(f.grad_s.abs() < 1e-15);
}

#[test]
fn complex_route_matches_closed_form() {
    let mut rng = crate::rng::substream(11, 0);
    for _ in 0..100 {
        let alpha = rng.random_range(-2.0..2.0);
        let m = WaveFunctionModel::coherent(alpha);
        let t = rng.random_range(0.0..20.0);
        let x = alpha * f64::cos(t) + rng.random_range(-3.0..3.0);
        let f = m.eval_fields(x, t).unwrap();
        let (gs, glr, q, gq, hs) = coherent_closed_form(alpha, x, t);
        for (a, b) in [
            (f.grad_s, gs),
            (f.grad_log_r, glr),
            (f.q, q),
            (f.grad_q, gq),
            (f.hess_s, hs),
        ] {
            assert!((a - b).abs() < 1e-10, "{a} vs {b} at x={x}, t={t}");
        }
    }
}

#[test]
fn coherent_normalization_by_quadrature() {
    if let WaveFunctionModel::CoherentState(c) = WaveFunctionModel::coherent(1.0) {
        assert!((c.normalization() - std::f64::consts::PI.powf(-0.25)).abs() < 1e-13);
    } else {
        unreachable!();
    }
}

#[test]
fn densities_integrate_to_one() {
    let rule = GaussLegendre::new(20);
    let models = [
        WaveFunctionModel::coherent(1.3),
        WaveFunctionModel::superposition(4).unwrap(),
    ];
    for m in &models {
        for t in [0.0, 0.7, 3.1] {
            let (lo, hi) = m.support(t);
            let mass = rule.integrate_composite(lo, hi, 80, |x| m.density(x, t).unwrap());
            assert!((mass - 1.0).abs() < 1e-12, "mass {mass}");
        }
    }
}

#[test]
fn coherent_state_equals_its_eigen_expansion() {
    let (p, v) = unit();
    let expansion: WaveFunctionModel = EigenSuperposition::coherent_expansion(1.0, 40, p, v).unwrap().into();
    let coherent = WaveFunctionModel::coherent(1.0);
    for &(x, t) in &[(0.3, 0.0), (1.7, 0.9), (-0.5, 2.4), (1.0, 5.0)] {
        let a = coherent.eval_fields(x, t).unwrap();
        let b = expansion.eval_fields(x, t).unwrap();
        assert!((a.rho - b.rho).abs() < 1e-12);
        assert!((a.grad_s - b.grad_s).abs() < 1e-10);
        assert!((a.q - b.q).abs() < 1e-9);
        assert!((a.grad_q - b.grad_q).abs() < 1e-9);
        assert!((a.hess_s - b.hess_s).abs() < 1e-9);
    }
}

#[test]
fn ground_state_is_static_and_quantum_force_balances_trap() {
    let (p, v) = unit();
    let ground: WaveFunctionModel = EigenSuperposition::new(vec![Complex64::new(1.0, 0.0)], p, v)
        .unwrap()
        .into();
    for x in [-2.0, -0.4, 0.0, 1.1] {
        let f = ground.eval_fields(x, 3.0).unwrap();
        assert!(f.grad_s.abs() < 1e-14);
        assert!((f.q + 0.5 * (x * x - 1.0)).abs() < 1e-12);
        // −V′ − Q′ = 0
        assert!((-x - f.grad_q).abs() < 1e-12);
    }
}

#[test]
fn nodes_are_flagged() {
    let (p, v) = unit();
    let first: WaveFunctionModel =
        EigenSuperposition::new(vec![Complex64::new(0.0, 0.0), Complex64::new(1.0, 0.0)], p, v)
            .unwrap()
            .into();
    let f = first.eval_fields(0.0, 0.0).unwrap();
    assert!(!f.valid);
    assert!(matches!(f.require_valid(0.0, 0.0), Err(Error::NodeRegion { .. })));
    assert!(first.eval_fields(0.5, 0.0).unwrap().valid);
}

#[test]
fn continuity_equation_holds() {
    let m = WaveFunctionModel::superposition(3).unwrap();
    let mut rng = crate::rng::substream(5, 0);
    let h = 1e-4;
    for _ in 0..50 {
        let x = rng.random_range(-2.5..2.5);
        let t = rng.random_range(0.0..6.0);
        let rho = |x: f64, t: f64| m.density(x, t).unwrap();
        let flux = |x: f64| {
            let f = m.eval_fields(x, t).unwrap();
            f.rho * f.grad_s
        };
        let f = m.eval_fields(x, t).unwrap();
        if f.rho < 1e-3 {
            continue;
        }
        let drho_dt = (rho(x, t + h) - rho(x, t - h)) / (2.0 * h);
        let dflux = (flux(x + h) - flux(x - h)) / (2.0 * h);
        assert!((drho_dt + dflux).abs() < 1e-7, "residual {}", drho_dt + dflux);
    }
}

fn coherent_grid(alpha: f64, n: usize, dt: f64) -> GridSolution {
    let m = WaveFunctionModel::coherent(alpha);
    GridSolution::from_model(&m, GridSpec::new(-10.0, 10.0, n, dt).unwrap(), 0.0).unwrap()
}

#[test]
fn split_step_matches_coherent_evolution() {
    let mut g = coherent_grid(1.0, 512, 1e-3).with_snapshot_stride(100);
    g.evolve_grid(2.0).unwrap();
    assert!((g.time() - 2.0).abs() < 1e-12);
    let exact = WaveFunctionModel::coherent(1.0);
    let dx = g.spec.dx();
    let overlap: Complex64 = g
        .values()
        .iter()
        .enumerate()
        .map(|(i, v)| v.conj() * exact.psi(g.spec.x(i), 2.0).unwrap() * dx)
        .sum();
    assert!(overlap.norm() >= 1.0 - 1e-6, "overlap {}", overlap.norm());
}

#[test]
fn single_step_is_unitary() {
    let mut g = coherent_grid(0.7, 256, 5e-3);
    let drift = g.step().unwrap();
    assert!(drift < 1e-12);
}

#[test]
fn stationary_state_density_is_constant() {
    let (p, v) = unit();
    let ground: WaveFunctionModel = EigenSuperposition::new(vec![Complex64::new(1.0, 0.0)], p, v)
        .unwrap()
        .into();
    // Strang splitting perturbs an eigenstate at O(dt²); dt = 2.5e-4 keeps
    // the density drift near 5e-9
    let g0 = GridSolution::from_model(&ground, GridSpec::new(-10.0, 10.0, 256, 2.5e-4).unwrap(), 0.0)
        .unwrap()
        .with_snapshot_stride(1000);
    let g = g0.evolved(1.5).unwrap();
    let worst = g0
        .values()
        .iter()
        .zip(g.values())
        .map(|(a, b)| (a.norm_sqr() - b.norm_sqr()).abs())
        .fold(0.0, f64::max);
    assert!(worst < 1e-8, "density drift {worst:e}");
}

#[test]
fn grid_fields_match_analytic_fields() {
    let mut g = coherent_grid(1.0, 512, 1e-3);
    g.evolve_grid(1.0).unwrap();
    let grid: WaveFunctionModel = g.into();
    let exact = WaveFunctionModel::coherent(1.0);
    let mut rng = crate::rng::substream(3, 0);
    for _ in 0..200 {
        let t: f64 = rng.random_range(0.0..1.0);
        let x = t.cos() + rng.random_range(-2.5..2.5);
        let a = grid.eval_fields(x, t).unwrap();
        let b = exact.eval_fields(x, t).unwrap();
        assert!((a.rho - b.rho).abs() < 1e-5);
        assert!((a.grad_s - b.grad_s).abs() < 1e-5, "grad_s {} {}", a.grad_s, b.grad_s);
        assert!((a.grad_log_r - b.grad_log_r).abs() < 1e-5);
        assert!((a.q - b.q).abs() < 1e-5);
        assert!((a.grad_q - b.grad_q).abs() < 1e-5);
        assert!((a.hess_s - b.hess_s).abs() < 1e-5);
    }
}

#[test]
fn grid_domain_and_time_errors() {
    let g: WaveFunctionModel = coherent_grid(1.0, 128, 1e-2).into();
    assert!(matches!(g.eval_fields(10.5, 0.0), Err(Error::OutOfDomain { .. })));
    assert!(matches!(g.eval_fields(0.0, 1.0), Err(Error::OutOfTimeRange { .. })));
    assert!(GridSpec::new(-1.0, 1.0, 100, 1e-3).is_err());
    assert!(GridSpec::new(1.0, -1.0, 128, 1e-3).is_err());
}

#[test]
fn grid_csv_round_trip() {
    let g = coherent_grid(0.5, 64, 1e-2);
    let mut buf = Vec::new();
    g.write_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf.clone()).unwrap();
    assert!(text.starts_with("# bohmstab-csv v1\nx,re_psi,im_psi\n"));
    let back = GridSolution::read_csv(&buf[..], 1e-2, g.params, g.potential, 0.0).unwrap();
    assert_eq!(back.spec.n_points, 64);
    assert!((back.spec.x_max - 10.0).abs() < 1e-12);
    for (a, b) in g.values().iter().zip(back.values()) {
        assert!((a - b).norm() < 1e-14);
    }
}
