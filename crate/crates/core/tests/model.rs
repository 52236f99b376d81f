mod common;

use common::{close, Hyper};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wgplvm::kernels::{KernelFamily, KernelSpec};
use wgplvm::model::{EncodeConfig, Model, ModelKind, ModelState, OptimizerConfig};
use wgplvm::{Manifold, Point, Tangent};

fn hyper_of(k: &KernelSpec) -> Hyper {
    Hyper {
        signal_var: k.signal_var(),
        lengthscale_sq: k.lengthscale_sq(),
        noise_var: k.noise_var(),
    }
}

fn scatter(m: &Manifold, n: usize, spread: f64, rng: &mut ChaCha8Rng) -> Vec<Point> {
    let centre = m.random_point(rng);
    (0..n)
        .map(|_| m.exp(&centre, &m.random_tangent(&centre, spread, rng).unwrap()).unwrap())
        .collect()
}

fn random_kernel(family: KernelFamily, rng: &mut ChaCha8Rng) -> KernelSpec {
    KernelSpec::new(
        family,
        rng.random_range(0.5..2.0),
        rng.random_range(0.3..3.0),
        rng.random_range(0.05..0.5),
    )
}

fn random_state(m: &Manifold, family: KernelFamily, rng: &mut ChaCha8Rng) -> ModelState {
    let n = rng.random_range(5..15);
    let q = match family {
        KernelFamily::Periodic => 1,
        KernelFamily::Rbf => rng.random_range(1..m.intrinsic_dim().min(4)),
    };
    let data = scatter(m, n, 0.3, rng);
    let latents = DMatrix::from_fn(n, q, |_, _| rng.random_range(-2.0..2.0));
    ModelState::with_latents(m.clone(), data, latents, random_kernel(family, rng)).unwrap()
}

fn finite_difference_check(s: &ModelState) {
    let h = 1e-5;
    let g = s.gradients().unwrap();
    let rel = |a: f64, b: f64| (a - b).abs() / a.abs().max(b.abs()).max(1e-3);
    let (n, q) = s.latents.shape();
    for i in 0..n {
        for a in 0..q {
            let mut plus = s.clone();
            plus.latents[(i, a)] += h;
            let mut minus = s.clone();
            minus.latents[(i, a)] -= h;
            let fd = (plus.objective().unwrap() - minus.objective().unwrap()) / (2.0 * h);
            assert!(rel(g.latents[(i, a)], fd) < 1e-4, "{}: latent ({i},{a}) {} vs {fd}", s.manifold.name(), g.latents[(i, a)]);
        }
    }
    for p in 0..3 {
        let shifted = |delta: f64| {
            let mut t = s.clone();
            let mut hy = t.kernel.hyper();
            hy[p] += delta;
            t.kernel.set_hyper(hy);
            t.objective().unwrap()
        };
        let fd = (shifted(h) - shifted(-h)) / (2.0 * h);
        assert!(rel(g.hyper[p], fd) < 1e-4, "{}: hyper {p} {} vs {fd}", s.manifold.name(), g.hyper[p]);
    }
}

#[test]
fn gradients_match_finite_differences_on_every_manifold() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let manifolds = [
        Manifold::euclidean(4),
        Manifold::sphere(2),
        Manifold::kendall(5),
        Manifold::spd(3),
        Manifold::product(vec![Manifold::sphere(2), Manifold::spd(2)]),
    ];
    for m in &manifolds {
        for family in [KernelFamily::Rbf, KernelFamily::Periodic] {
            for _ in 0..3 {
                finite_difference_check(&random_state(m, family, &mut rng));
            }
        }
    }
}

#[test]
fn euclidean_model_matches_direct_likelihood() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    for _ in 0..5 {
        let family = if rng.random::<bool>() { KernelFamily::Rbf } else { KernelFamily::Periodic };
        let s = random_state(&Manifold::euclidean(4), family, &mut rng);
        let h = hyper_of(&s.kernel);
        // the Euclidean tangent data are the mean-centred observations
        let mean = s.data.iter().fold(DVector::zeros(4), |acc, p| acc + &p.coords) / s.data.len() as f64;
        let y = DMatrix::from_fn(s.data.len(), 4, |i, j| s.data[i].coords[j] - mean[j]);
        let direct = common::log_likelihood(family, h, &s.latents, &y);
        assert!(close(s.objective().unwrap(), direct, 1e-8));
        let (gx, gh) = common::gradients(family, h, &s.latents, &y);
        let g = s.gradients().unwrap();
        for (a, b) in g.latents.iter().zip(gx.iter()) {
            assert!(close(*a, *b, 1e-8), "{a} vs {b}");
        }
        for (a, b) in g.hyper.iter().zip(gh.iter()) {
            assert!(close(*a, *b, 1e-8), "{a} vs {b}");
        }
        let xs: Vec<f64> = (0..s.latent_dim()).map(|_| rng.random_range(-2.0..2.0)).collect();
        let pred = s.predict(&xs).unwrap();
        let (mu, var) = common::gp_posterior(family, h, &s.latents, &y, &xs);
        assert!(close(pred.variance, var, 1e-8));
        for (a, b) in pred.mean.iter().zip(mu.iter()) {
            assert!(close(*a, *b, 1e-8));
        }
    }
}

/// Adam ascent written out against the direct oracle, mirroring the
/// library's update rule step for step.
fn oracle_fit(family: KernelFamily, mut x: DMatrix<f64>, mut hy: [f64; 3], y: &DMatrix<f64>, steps: usize) -> f64 {
    let (lr, b1, b2, eps) = (1e-2, 0.9, 0.999, 1e-8);
    let len = x.len() + 3;
    let (mut m, mut v) = (vec![0.0; len], vec![0.0; len]);
    let h = |hy: &[f64; 3]| Hyper {
        signal_var: hy[0].exp(),
        lengthscale_sq: hy[1].exp(),
        noise_var: hy[2].exp(),
    };
    let mut best = f64::NEG_INFINITY;
    for t in 0..=steps {
        let value = common::log_likelihood(family, h(&hy), &x, y);
        best = best.max(value);
        if t == steps {
            break;
        }
        let (gx, gh) = common::gradients(family, h(&hy), &x, y);
        let mut grad: Vec<f64> = gx.transpose().iter().copied().collect();
        grad.extend_from_slice(&gh);
        let mut params: Vec<f64> = x.transpose().iter().copied().collect();
        params.extend_from_slice(&hy);
        let k = (t + 1) as i32;
        for i in 0..len {
            m[i] = b1 * m[i] + (1.0 - b1) * grad[i];
            v[i] = b2 * v[i] + (1.0 - b2) * grad[i] * grad[i];
            let mh = m[i] / (1.0 - f64::powi(b1, k));
            let vh = v[i] / (1.0 - f64::powi(b2, k));
            params[i] += lr * mh / (vh.sqrt() + eps);
        }
        x = DMatrix::from_row_slice(x.nrows(), x.ncols(), &params[..x.len()]);
        hy.copy_from_slice(&params[x.len()..]);
    }
    best
}

#[test]
fn euclidean_fit_matches_paired_oracle_run() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let mut s = random_state(&Manifold::euclidean(3), KernelFamily::Rbf, &mut rng);
    let y = s.tangent_data.clone();
    let expected = oracle_fit(KernelFamily::Rbf, s.latents.clone(), s.kernel.hyper(), &y, 60);
    let summary = s
        .fit(&OptimizerConfig {
            max_iter: 60,
            grad_tol: 0.0,
            ..Default::default()
        })
        .unwrap();
    assert!(close(summary.final_objective, expected, 1e-8), "{} vs {expected}", summary.final_objective);
}

#[test]
fn mirrored_data_gives_antisymmetric_gradients() {
    // latents ±a, ±b with identical data at mirrored positions
    let latents = DMatrix::from_column_slice(4, 1, &[-1.3, -0.4, 0.4, 1.3]);
    let rows = [[0.2, -0.5], [1.0, 0.3], [1.0, 0.3], [0.2, -0.5]];
    let data: Vec<Point> = rows.iter().map(|r| Point::from_slice(r)).collect();
    let s = ModelState::with_latents(Manifold::euclidean(2), data, latents, KernelSpec::rbf()).unwrap();
    let g = s.gradients().unwrap().latents;
    assert!(g[(0, 0)].abs() > 1e-6);
    assert!((g[(0, 0)] + g[(3, 0)]).abs() < 1e-12);
    assert!((g[(1, 0)] + g[(2, 0)]).abs() < 1e-12);
}

#[test]
fn objective_is_rotation_invariant() {
    let mut rng = ChaCha8Rng::seed_from_u64(24);
    let data = scatter(&Manifold::sphere(5), 12, 0.4, &mut rng);
    let s = ModelState::new(Manifold::sphere(5), data, 2, KernelSpec::rbf()).unwrap();
    let (c, sn) = (0.83f64.cos(), 0.83f64.sin());
    let rot = DMatrix::from_row_slice(2, 2, &[c, -sn, sn, c]);
    let mut r = s.clone();
    r.latents = &s.latents * rot.transpose();
    assert!((r.objective().unwrap() - s.objective().unwrap()).abs() < 1e-10);
}

#[test]
fn noise_free_geodesic_is_reconstructed() {
    let m = Manifold::spd(3);
    let base = Point::new(wgplvm::manifolds::spd::flatten(&DMatrix::identity(3, 3)));
    let dir = DVector::from_column_slice(&[0.8, 0.2, -0.1, -0.3, 0.1, 0.4]);
    let data: Vec<Point> = (0..20)
        .map(|i| m.exp(&base, &Tangent::new(&dir * (i as f64 / 19.0 * 2.0 - 1.0))).unwrap())
        .collect();
    let mut model = Model::new(ModelKind::Wgplvm, m.clone(), &data, 1, KernelSpec::rbf()).unwrap();
    model.fit(&OptimizerConfig::default()).unwrap();
    let post = model.posterior().unwrap();
    for p in &data {
        let e = model.encode(&post, p, &EncodeConfig::default()).unwrap();
        let recon = model.mean_prediction(&post, &e.latent).unwrap();
        assert!(m.distance(&recon.on_manifold, p).unwrap() < 1e-2);
    }
}

#[test]
fn baselines_on_euclidean_data_coincide_with_the_wrapped_model() {
    let mut rng = ChaCha8Rng::seed_from_u64(25);
    let m = Manifold::euclidean(3);
    let data = scatter(&m, 10, 1.0, &mut rng);
    let cfg = OptimizerConfig {
        max_iter: 100,
        ..Default::default()
    };
    let mut a = Model::new(ModelKind::Wgplvm, m.clone(), &data, 1, KernelSpec::rbf()).unwrap();
    let mut b = Model::new(ModelKind::Gplvm, m.clone(), &data, 1, KernelSpec::rbf()).unwrap();
    a.fit(&cfg).unwrap();
    b.fit(&cfg).unwrap();
    assert_eq!(a.state.latents, b.state.latents);
    assert_eq!(a.state.fit_trace, b.state.fit_trace);
}

fn circle_data(n: usize, rng: &mut ChaCha8Rng) -> Vec<Point> {
    let m = Manifold::sphere(2);
    (0..n)
        .map(|i| {
            let t = i as f64 / n as f64 * std::f64::consts::TAU;
            let v = DVector::from_column_slice(&[
                t.cos() + 0.05 * rng.random::<f64>(),
                t.sin() + 0.05 * rng.random::<f64>(),
                0.3,
            ]);
            m.project(&v).unwrap()
        })
        .collect()
}

#[test]
fn projected_baseline_stays_on_the_sphere_and_plain_baseline_escapes() {
    let mut rng = ChaCha8Rng::seed_from_u64(26);
    let m = Manifold::sphere(2);
    let data = circle_data(30, &mut rng);
    let cfg = OptimizerConfig {
        max_iter: 300,
        ..Default::default()
    };
    for kind in [ModelKind::Gplvm, ModelKind::GplvmProj, ModelKind::Wgplvm] {
        let mut model = Model::new(kind, m.clone(), &data, 1, KernelSpec::periodic()).unwrap();
        model.fit(&cfg).unwrap();
        let post = model.posterior().unwrap();
        let mut off = 0;
        let mut total = 0;
        for x in [0.5, 2.0, 4.0] {
            for p in model.sample_predictive(&post, &[x], &mut rng, 200).unwrap() {
                total += 1;
                let reported = model.reported(&p);
                let violation = (reported.norm() - 1.0).abs();
                assert!((p.on_manifold.coords.norm() - 1.0).abs() < 1e-12);
                if violation > 1e-6 {
                    off += 1;
                }
            }
        }
        match kind {
            ModelKind::Gplvm => assert!(2 * off > total, "{off} of {total}"),
            _ => assert_eq!(off, 0),
        }
    }
}
