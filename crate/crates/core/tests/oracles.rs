//! Cross-module checks against closed forms and against each other.

use pamlab::bounds_oracles::{c_inf, eigen_tail_bound};
use pamlab::cloud_geometry::{gamma, mst_edges};
use pamlab::feynman_kac::{
    calibrate, gamma_for_rho, l1_bound_check, path_expansion_constants, simulate_fk, simulate_stopped_fk, stopped_grid_value,
    upperbound_tail_check, PathConfig, StoppedOptions,
};
use pamlab::kernels::KernelSpec;
use pamlab::spectral::{build_operator, lambda_max, Domain};
use pamlab::{PointCloud, Region};

fn cfg(dt: f64, n_paths: usize, seed: u64) -> PathConfig {
    PathConfig { dt, near_pole_radius: 0.0, substep_factor: 1, cap: 1e4, n_paths, seed }
}

#[test]
fn exit_laplace_transform_of_the_unit_ball() {
    // E_0 e^{-γτ} = k / sinh k with k = √(2γ) for the unit ball in d = 3
    let gam = 2.0;
    let exact = 2.0 / 2f64.sinh();
    let empty = PointCloud::empty(3);
    let k = KernelSpec::truncated(3, 1.0).unwrap();
    let dom = Domain::ball(3, 1.0);
    let lam = -std::f64::consts::PI.powi(2) / 2.0;
    let mc = simulate_stopped_fk(&empty, &k, 0.0, gam, &dom, &[0.0; 3], &cfg(1e-3, 20_000, 3), &StoppedOptions::new(lam)).unwrap();
    println!("mc {} ± {}", mc.mean, mc.stderr);
    let mut grid = Vec::new();
    for h in [1.0 / 16.0, 1.0 / 32.0] {
        let op = build_operator(&dom, &empty, &k, 0.0, h, 1.0).unwrap();
        grid.push(stopped_grid_value(&op, gam, op.index_near(&[0.0; 3]).unwrap()).unwrap());
    }
    println!("grid {grid:?} exact {exact}");
    assert!((mc.mean - exact).abs() < 3.0 * mc.stderr, "{} ± {} vs {exact}", mc.mean, mc.stderr);
    // the masked ball boundary makes the grid error first order in h
    let extrapolated = 2.0 * grid[1] - grid[0];
    assert!((extrapolated - exact).abs() < 1e-3, "{grid:?}");
}

#[test]
fn collinear_spanning_tree() {
    let c = PointCloud::new(3, &[vec![0.0; 3], vec![1.0, 0.0, 0.0], vec![3.0, 0.0, 0.0]]).unwrap();
    let mut e: Vec<(usize, usize)> = mst_edges(&c).into_iter().map(|(i, j, _)| (i.min(j), i.max(j))).collect();
    e.sort();
    assert_eq!(e, vec![(0, 1), (1, 2)]);
    assert_eq!(gamma(&c), 1.0);
}

#[test]
fn closed_form_constants() {
    let want = (std::f64::consts::PI / 36.0).powf(2.0 / 3.0) / 27.0;
    assert!((c_inf(3, 1.0 / 16.0, 1.0).unwrap() / want - 1.0).abs() < 1e-14);
    // the tail bound at d = 3, k = 2, R = 10, r = 0.1, s = 5 is far above 1
    let b = eigen_tail_bound(10.0, 0.1, 5.0, 1.0 / 16.0, 3).unwrap();
    assert!((b.cluster_term / 7.055489113559915e11 - 1.0).abs() < 1e-12, "{b:?}");
    assert!((b.crowding_term / 2.792275077907919e4 - 1.0).abs() < 1e-12, "{b:?}");
}

#[test]
fn confined_semigroup_decays_at_the_principal_rate() {
    // e^{tA}1 at the centre over two times: log ratio / Δt tends to λ_max
    let empty = PointCloud::empty(3);
    let k = KernelSpec::truncated(3, 1.0).unwrap();
    let dom = Domain::ball(3, 1.0);
    let c = cfg(2.5e-4, 20_000, 8);
    let u1 = simulate_fk(&empty, &k, 0.0, 0.25, &[0.0; 3], &c, Some(&dom), true).unwrap();
    let u2 = simulate_fk(&empty, &k, 0.0, 0.5, &[0.0; 3], &c, Some(&dom), true).unwrap();
    let rate = (u2.mean / u1.mean).ln() / 0.25;
    let lam = -std::f64::consts::PI.powi(2) / 2.0;
    assert!((rate - lam).abs() < 0.3, "{rate}");
}

#[test]
fn l1_bound_over_a_gamma_sweep() {
    let hd = 0.125;
    let cloud = PointCloud::new(3, &[vec![-0.15, 0.0, 0.0], vec![0.15, 0.0, 0.0]]).unwrap();
    let k = KernelSpec::truncated(3, 0.2).unwrap();
    let dom = Region::cube(3, 1.0);
    let dp = Region::cube(3, 0.5);
    let lam = lambda_max(&Domain::Region(dom.clone()), &cloud, &k, hd, 1.0 / 16.0, 100.0 / 0.04, 1e-8).unwrap().lambda;
    let mut prev: Option<(f64, f64)> = None;
    // γ - λ shrinks: both sides grow and the right one blows up
    for f in [4.0, 1.0, 0.1, 0.01] {
        let gam = lam + f * lam.abs();
        let c = PathConfig { dt: 1e-3, near_pole_radius: 0.4, substep_factor: 8, cap: 2500.0, n_paths: 100, seed: 4 };
        let r = l1_bound_check(&cloud, &k, hd, gam, &dom, &dp, &c, &StoppedOptions::new(lam), 3).unwrap();
        assert!(r.holds, "{f}: {r:?}");
        if let Some((lhs, rhs)) = prev {
            assert!(r.rhs > rhs && r.lhs > lhs - 3.0 * r.lhs_stderr, "{f}: {r:?}");
        }
        prev = Some((r.lhs, r.rhs));
    }
    assert!(prev.unwrap().1 > 1e3);
}

#[test]
fn far_exits_are_rare_under_the_discount() {
    let cloud = PointCloud::new(3, &[vec![0.0; 3], vec![0.15, 0.0, 0.0]]).unwrap();
    let cal = calibrate(3, 2000, 5).unwrap();
    let (a, r, theta) = (0.05, 0.3, 0.0625);
    // λ of the components is negative here; γ is the smallest value giving ϱ = ½
    let gamma = gamma_for_rho(&cloud, theta, a, r, &cal, 0.0, 0.5).unwrap();
    let consts = path_expansion_constants(&cloud, theta, a, r, gamma, &cal, 0.0).unwrap();
    assert!(consts.rho <= 0.5 + 1e-9);
    let k = KernelSpec::truncated(3, a).unwrap();
    let n = consts.n_r as f64;
    let radii: Vec<f64> = [8.0, 16.0, 32.0].iter().map(|m| m * r * n).collect();
    let dt = 0.1 / gamma;
    let c = PathConfig { dt, near_pole_radius: 2.0 * a, substep_factor: 8, cap: 100.0 / (a * a), n_paths: 300, seed: 6 };
    let rows = upperbound_tail_check(&cloud, &k, theta, &consts, &cal, r, &[0.4, 0.0, 0.0], 200.0 * dt, &radii, &c).unwrap();
    // at this discount no path gets near R = 8rN, so the check holds with nothing to spare
    for (row, w) in rows.iter().zip(&rows[1..]) {
        assert!(row.holds && w.holds && w.value <= row.value);
    }
}
