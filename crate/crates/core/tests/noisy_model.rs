use nalgebra::{DMatrix, DVector, Matrix4};
use qvdp::semiclassical::{averaged_amplitude, run_ensemble, summarize, SdeConfig};
use qvdp::wigner::StateLabel;
use qvdp::ModelParams;

fn p(eps: f64) -> ModelParams {
    ModelParams::default().with_eps(eps)
}

/// Stationary covariance of `dX = A X dt + σ dW` with `σσᵀ = D`, from
/// `A Σ + Σ Aᵀ + D = 0` solved as a 16×16 linear system.
fn lyapunov(a: &Matrix4<f64>, d: &Matrix4<f64>) -> Matrix4<f64> {
    let id = DMatrix::<f64>::identity(4, 4);
    let ad = DMatrix::from_fn(4, 4, |i, j| a[(i, j)]);
    let op = id.kronecker(&ad) + ad.kronecker(&id);
    let rhs = DVector::from_iterator(16, d.iter().map(|v| -v));
    let sol = op.lu().solve(&rhs).expect("stable drift");
    Matrix4::from_iterator(sol.iter().copied())
}

#[test]
fn linear_sde_covariance_matches_lyapunov() {
    // k2 = 0 leaves a linear drift and a constant diffusion
    let q = ModelParams { omega: 2.0, k1: 1.0, k2: 0.0, eps: 1.3 };
    let (w, e, h) = (q.omega, q.eps, q.k1 / 2.0);
    #[rustfmt::skip]
    let a = Matrix4::new(
        h - e, w, 0.0, e,
        -w, h, 0.0, 0.0,
        0.0, e, h - e, w,
        0.0, 0.0, -w, h,
    );
    let nu = q.k1 / 2.0 + q.eps / 2.0;
    let d = Matrix4::from_diagonal_element(nu / 2.0);
    let sigma = lyapunov(&a, &d);
    let want = sigma[(1, 1)];

    let cfg = SdeConfig {
        t_final: 100.0,
        transient_fraction: 0.6,
        sample_interval: 5.0,
        n_trajectories: 2000,
        seed: 99,
        ..Default::default()
    };
    let ens = run_ensemble(&q, &cfg).unwrap();
    let y = ens.y1();
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    let var = y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (y.len() - 1) as f64;
    let rel = (var - want).abs() / want;
    assert!(rel < 0.05, "var {var} vs {want} (rel {rel})");
}

#[test]
fn halving_dt_keeps_averaged_amplitude() {
    let base = SdeConfig { n_trajectories: 200, t_final: 100.0, ..Default::default() };
    let a = averaged_amplitude(&run_ensemble(&p(0.0), &base).unwrap()).unwrap();
    let half = SdeConfig { dt: base.dt / 2.0, ..base };
    let b = averaged_amplitude(&run_ensemble(&p(0.0), &half).unwrap()).unwrap();
    assert!((a - b).abs() / a < 0.02, "{a} vs {b}");
}

/// Two-sample Kolmogorov–Smirnov statistic.
fn ks(mut a: Vec<f64>, mut b: Vec<f64>) -> f64 {
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (mut i, mut j, mut d) = (0usize, 0usize, 0.0f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / a.len() as f64 - j as f64 / b.len() as f64).abs());
    }
    d
}

#[test]
fn split_state_distribution_is_mirror_symmetric() {
    let cfg = SdeConfig { n_trajectories: 400, t_final: 100.0, ..Default::default() };
    let ens = run_ensemble(&p(1.99), &cfg).unwrap();
    // one sample per trajectory, independent halves: y from even, -y from odd
    let last: Vec<f64> = ens.trajectories().map(|t| t.last().unwrap().y1).collect();
    let even: Vec<f64> = last.iter().step_by(2).copied().collect();
    let odd: Vec<f64> = last.iter().skip(1).step_by(2).map(|v| -v).collect();
    let d = ks(even, odd);
    // 0.1% critical value for n = m = 200
    let crit = 1.95 * (2.0f64 / 200.0).sqrt();
    assert!(d < crit, "KS {d} >= {crit}");
    // and the two lobes are both populated
    let pos = last.iter().filter(|v| **v > 0.0).count();
    assert!(pos > 150 && pos < 250, "{pos}");
}

#[test]
fn modality_follows_coupling() {
    // a fifth of the default ensemble: bins are noisier than the 2% default
    let cfg = SdeConfig { n_trajectories: 200, ..Default::default() };
    let prom = 0.1;
    let ad = summarize(&run_ensemble(&p(1.3), &cfg).unwrap(), prom).unwrap();
    assert_eq!(ad.label, StateLabel::Qad);
    assert_eq!(ad.delta_y_nc, 0.0);
    let od = summarize(&run_ensemble(&p(1.99), &cfg).unwrap(), prom).unwrap();
    assert_eq!(od.label, StateLabel::Qod);
    assert!(od.delta_y_nc > 1.0);
    let osc = summarize(&run_ensemble(&p(0.1), &cfg).unwrap(), prom).unwrap();
    assert_eq!(osc.label, StateLabel::Osc);
    // extrema of the noisy cycle sit near the shifted radius sqrt(3.5)
    assert!(osc.traj_max_y1 > 1.5 && osc.traj_min_y1 < -1.5);
    assert!(ad.mean_amp_nc < osc.mean_amp_nc);
}
