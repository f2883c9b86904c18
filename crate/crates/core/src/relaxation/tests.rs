use super::*;
use crate::ensemble::{sample_equilibrium, PhaseSpacePoint, Provenance};
use crate::params::{Potential, SystemParams};
use crate::wavefunction::EigenSuperposition;
use num_complex::Complex64;
use rand::Rng;

fn ensemble_of(points: Vec<PhaseSpacePoint>) -> Ensemble {
    Ensemble {
        points,
        t: 0.0,
        provenance: Provenance {
            sampler: "manual".into(),
            seed: 0,
            law: None,
        },
        truncated_count: 0,
    }
}

fn standard_grid(n: usize) -> CoarseGrid {
    CoarseGrid::new((-6.0, 6.0), n, (-6.0, 6.0), n).unwrap()
}

fn gaussian(mu: f64) -> KernelSpec {
    KernelSpec::gaussian(mu).unwrap()
}

fn superposition(modes: usize) -> WaveFunctionModel {
    EigenSuperposition::equal_weights(modes, SystemParams::default(), Potential::default())
        .unwrap()
        .into()
}

#[test]
fn single_particle_fills_its_cell() {
    let grid = CoarseGrid::new((0.0, 4.0), 4, (0.0, 4.0), 4).unwrap();
    let f = coarse_grain(&ensemble_of(vec![PhaseSpacePoint { x: 1.5, p: 2.5 }]), &grid).unwrap();
    for ix in 0..4 {
        for ip in 0..4 {
            assert_eq!(f.get(ix, ip), if (ix, ip) == (1, 2) { 1.0 } else { 0.0 });
        }
    }
}

#[test]
fn one_particle_per_cell() {
    let grid = CoarseGrid::new((0.0, 1.0), 2, (0.0, 0.5), 2).unwrap();
    assert_eq!(grid.cell_volume(), 0.125);
    let grid = CoarseGrid::new((0.0, 1.0), 2, (0.0, 1.0), 2).unwrap();
    assert_eq!(grid.cell_volume(), 0.25);
    let pts = [(0.25, 0.25), (0.25, 0.75), (0.75, 0.25), (0.75, 0.75)]
        .iter()
        .map(|&(x, p)| PhaseSpacePoint { x, p })
        .collect();
    let f = coarse_grain(&ensemble_of(pts), &grid).unwrap();
    assert_eq!(f.values, vec![1.0; 4]);
    assert_eq!(f.out_of_range_mass, 0.0);
}

#[test]
fn counting_identity() {
    let model = WaveFunctionModel::coherent(1.0);
    let ens = sample_equilibrium(&model, &gaussian(3.0), 0.0, 10_000, 1).unwrap();
    let grid = CoarseGrid::new((-1.0, 2.0), 7, (-1.5, 1.0), 5).unwrap();
    let f = coarse_grain(&ens, &grid).unwrap();
    assert!(f.out_of_range_mass > 0.0);
    assert!((f.mass(&grid) + f.out_of_range_mass - 1.0).abs() < 1e-9);
}

#[test]
fn equilibrium_cells_cover_the_mass() {
    let model = WaveFunctionModel::coherent(1.0);
    let grid = standard_grid(30);
    let feq = equilibrium_cell_averages(&model, &gaussian(1.0), &grid, 0.0).unwrap();
    let mass = feq.mass(&grid);
    assert!((0.9999..=1.0 + 1e-12).contains(&mass), "{mass}");
    assert!((mass + feq.out_of_range_mass - 1.0).abs() < 1e-12);
}

#[test]
fn cell_quadrature_is_converged_at_order_eight() {
    let model = WaveFunctionModel::coherent(1.0);
    let grid = standard_grid(30);
    let k = gaussian(1.0);
    for ix in 0..30 {
        let lo = grid.x_min + ix as f64 * grid.dx();
        let a = column_masses(&model, &k, &grid, 0.0, lo, lo + grid.dx(), 8).unwrap();
        let b = column_masses(&model, &k, &grid, 0.0, lo, lo + grid.dx(), 16).unwrap();
        let worst = a.iter().zip(&b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max) / grid.cell_volume();
        assert!(worst < 1e-8, "{worst}");
    }
    assert!(equilibrium_cell_averages_with_order(&model, &k, &grid, 0.7, 4).is_err());
}

#[test]
fn refined_cells_agree_across_orders_near_phase_jumps() {
    // the 4-mode state has near-nodes where ∇S swings across several cells
    let model = superposition(4);
    let grid = standard_grid(30);
    let k = gaussian(1.0);
    let a = equilibrium_cell_averages_with_order(&model, &k, &grid, 0.7, 8).unwrap();
    let b = equilibrium_cell_averages_with_order(&model, &k, &grid, 0.7, 16).unwrap();
    let worst = a
        .values
        .iter()
        .zip(&b.values)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max);
    assert!(worst < 1e-8, "{worst}");
}

#[test]
fn ground_state_cells_are_symmetric() {
    let model: WaveFunctionModel = EigenSuperposition::new(
        vec![Complex64::new(1.0, 0.0)],
        SystemParams::default(),
        Potential::default(),
    )
    .unwrap()
    .into();
    let grid = standard_grid(30);
    let f = equilibrium_cell_averages(&model, &gaussian(1.0), &grid, 0.0).unwrap();
    for ix in 0..30 {
        for ip in 0..30 {
            let v = f.get(ix, ip);
            for w in [f.get(29 - ix, ip), f.get(ix, 29 - ip), f.get(29 - ix, 29 - ip)] {
                // mirrored nodes agree up to rounding of the cell edges
                assert!((v - w).abs() <= 1e-12 * v.abs(), "{ix} {ip} {v} {w}");
            }
        }
    }
}

#[test]
fn dirac_cells_are_rejected() {
    let model = WaveFunctionModel::coherent(1.0);
    assert_eq!(
        equilibrium_cell_averages(&model, &KernelSpec::dirac(), &standard_grid(8), 0.0),
        Err(Error::DiracDensityRequest)
    );
    let config = RelaxationConfig::new(
        KernelSpec::dirac(),
        NonEquilibriumSpec::offset(1.0),
        100,
        standard_grid(8),
        vec![0.0, 1.0],
    );
    assert_eq!(run_relaxation(&model, &config).unwrap_err(), Error::DiracDensityRequest);
}

fn field(values: Vec<f64>, nx: usize, np: usize) -> CellField {
    CellField {
        nx,
        np,
        values,
        out_of_range_mass: 0.0,
    }
}

#[test]
fn h_function_examples() {
    let grid = CoarseGrid::new((0.0, 2.0), 2, (0.0, 1.0), 1).unwrap();
    let f = field(vec![0.8, 0.2], 2, 1);
    let feq = field(vec![0.5, 0.5], 2, 1);
    let h = h_function(&f, &feq, &grid).unwrap();
    let expected = 0.8 * 1.6f64.ln() + 0.2 * 0.4f64.ln();
    assert!((h - expected).abs() < 1e-15);
    assert!((h - 0.1927).abs() < 5e-5);
    assert_eq!(h_function(&feq, &feq, &grid).unwrap(), 0.0);
    // empty cells contribute nothing
    assert!((h_function(&field(vec![1.0, 0.0], 2, 1), &feq, &grid).unwrap() - 2f64.ln()).abs() < 1e-15);
}

#[test]
fn h_function_errors() {
    let grid = CoarseGrid::new((0.0, 2.0), 2, (0.0, 1.0), 1).unwrap();
    let f = field(vec![0.8, 0.2], 2, 1);
    assert_eq!(
        h_function(&f, &field(vec![1.0, 0.0], 2, 1), &grid),
        Err(Error::SupportMismatch { mass: 0.2 })
    );
    assert_eq!(
        h_function(&f, &field(vec![0.5; 4], 4, 1), &grid),
        Err(Error::GridMismatch)
    );
}

#[test]
fn gibbs_inequality_on_random_pairs() {
    let mut rng = crate::rng::substream(5, 0);
    for _ in 0..1000 {
        let cells = rng.random_range(2..40);
        let grid = CoarseGrid::new((0.0, cells as f64), cells, (0.0, 1.0), 1).unwrap();
        let draw = |rng: &mut rand_chacha::ChaCha8Rng| {
            let mut v: Vec<f64> = (0..cells)
                .map(|_| if rng.random_bool(0.2) { 0.0 } else { rng.random::<f64>() })
                .collect();
            v[0] += 1e-3;
            let s: f64 = v.iter().sum();
            v.iter().map(|x| x / s).collect::<Vec<_>>()
        };
        let f = draw(&mut rng);
        let g: Vec<f64> = draw(&mut rng).iter().map(|v| v + 1e-3).collect();
        let s: f64 = g.iter().sum();
        let g = g.iter().map(|v| v / s).collect();
        let h = h_function(&field(f, cells, 1), &field(g, cells, 1), &grid).unwrap();
        assert!(h >= -1e-15, "{h}");
    }
}

#[test]
fn equilibrium_h_is_within_the_floor() {
    let model = WaveFunctionModel::coherent(1.0);
    let k = gaussian(1.0);
    let grid = standard_grid(30);
    let ens = sample_equilibrium(&model, &k, 0.0, 100_000, 3).unwrap();
    let (h, boot, _, _) = snapshot_h(&model, &k, &ens, &grid, DEFAULT_RESAMPLES, 9).unwrap();
    assert!(h.abs() < boot.floor, "H = {h}, floor = {}", boot.floor);
    assert!(boot.bias > 0.0);
}

#[test]
fn offset_start_is_far_above_the_floor() {
    let model = superposition(4);
    let k = gaussian(1.0);
    let grid = standard_grid(30);
    let ens = sample_nonequilibrium(&model, &NonEquilibriumSpec::offset(1.0), &k, 0.0, 100_000, 3).unwrap();
    let (h, boot, _, _) = snapshot_h(&model, &k, &ens, &grid, DEFAULT_RESAMPLES, 9).unwrap();
    assert!(h > 5.0 * boot.floor, "H = {h}, floor = {}", boot.floor);
    // fine-grained value Δ²/μ for a Gaussian shift
    assert!(h < 1.0 + 2.0 * boot.floor);
}

#[test]
fn doubling_n_halves_the_equilibrium_bias() {
    let model = WaveFunctionModel::coherent(1.0);
    let k = gaussian(1.0);
    let grid = standard_grid(30);
    let feq = equilibrium_cell_averages(&model, &k, &grid, 0.0).unwrap();
    let mean_h = |n: usize| {
        let runs = 12;
        (0..runs)
            .map(|s| {
                let ens = sample_equilibrium(&model, &k, 0.0, n, 100 + s).unwrap();
                h_function(&coarse_grain(&ens, &grid).unwrap(), &feq, &grid).unwrap()
            })
            .sum::<f64>()
            / runs as f64
    };
    let ratio = mean_h(20_000) / mean_h(40_000);
    assert!((ratio - 2.0).abs() < 0.5, "ratio {ratio}");
}

#[test]
fn offset_h_is_stable_under_grid_refinement() {
    let model = superposition(4);
    let k = gaussian(1.0);
    let ens = sample_nonequilibrium(&model, &NonEquilibriumSpec::offset(1.0), &k, 0.0, 200_000, 17).unwrap();
    let h = |n: usize| {
        let grid = standard_grid(n);
        let feq = equilibrium_cell_averages(&model, &k, &grid, 0.0).unwrap();
        h_function(&coarse_grain(&ens, &grid).unwrap(), &feq, &grid).unwrap()
    };
    let (coarse, fine) = (h(20), h(40));
    assert!((fine / coarse - 1.0).abs() < 0.2, "{coarse} vs {fine}");
}

#[test]
fn short_relaxation_run() {
    let model = superposition(4);
    let mut config = RelaxationConfig::new(
        gaussian(1.0),
        NonEquilibriumSpec::offset(1.0),
        5_000,
        standard_grid(12),
        vec![0.0, 0.5, 1.0],
    );
    config.seed = 4;
    config.resamples = 50;
    let a = run_relaxation(&model, &config).unwrap();
    assert_eq!(a.times, vec![0.0, 0.5, 1.0]);
    assert_eq!(a.hbar_values.len(), 3);
    assert!(a
        .hbar_values
        .iter()
        .zip(&a.floors)
        .all(|(h, f)| h.is_finite() && *f > 0.0));
    assert!(a.coverage[0] >= MIN_COVERAGE);
    assert_eq!(a, run_relaxation(&model, &config).unwrap());
    config.times = vec![1.0, 0.5];
    assert!(run_relaxation(&model, &config).is_err());
    config.times = vec![0.0, 1.0];
    config.grid = standard_grid(3);
    assert!(run_relaxation(&model, &config).is_err());
    config.grid = CoarseGrid::new((-6.0, 6.0), 12, (-1.0, 1.0), 12).unwrap();
    assert!(matches!(
        run_relaxation(&model, &config),
        Err(Error::GridCoverage { .. })
    ));
}
