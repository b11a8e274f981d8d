//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails. Pass criterion numbers as arguments to
//! run a subset, e.g. `cargo test --test acceptance -- 1 5 9`.

use std::io::Write;
use std::time::Instant;

use rand::Rng as _;
use rand_distr::StandardNormal;

use ksdm::experiments::{self, Estimator, GofPowerSpec, MleVsMksdeSpec};
use ksdm::gof::{GofConfig, OnNonConvex};
use ksdm::ksdstats::{self, StatKind, WeightedSample};
use ksdm::manifolds::{spd, Manifold};
use ksdm::matalg::{self, Mat, ShuffleMatrix, Vector};
use ksdm::mksde::{self, MleOptions};
use ksdm::models::{ExpFamilyKind, ExponentialFamily, Family, ScoreModel};
use ksdm::rng::{self, Rng};
use ksdm::sampling;
use ksdm::{RadialKernel, SteinKernel};

const ORACLE_REL_TOL: f64 = 1e-9;
const FD_TOL: f64 = 1e-5;
const FD_STEP: f64 = 1e-4;
const STEIN_SE_MULTIPLE: f64 = 5.0;
const SLOPE_RANGE: (f64, f64) = (-1.4, -0.6);
const GD_STEPS: usize = 200;
const GD_TOL: f64 = 1e-8;
const QUAD_REL_TOL: f64 = 1e-8;
const PSD_TOL: f64 = 1e-8;
const LEVEL_RANGE: (f64, f64) = (0.01, 0.12);
const POWER_P: f64 = 0.05;
const VEC_TOL: f64 = 1e-10;
const GEOM_TOL: f64 = 1e-8;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn gaussian(rows: usize, cols: usize, rng: &mut Rng) -> Mat {
    Mat::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

fn random_spd(n: usize, rng: &mut Rng) -> Mat {
    let g = gaussian(n, n, rng);
    &g * g.transpose() / n as f64 + Mat::identity(n, n) * 0.5
}

fn random_point(m: &Manifold, rng: &mut Rng) -> Mat {
    match m {
        Manifold::Spd { n } => random_spd(*n, rng),
        _ => sampling::uniform_point(m, rng).unwrap(),
    }
}

/// A point at moderate distance from `center`, inside the injectivity radius.
fn near(m: &Manifold, center: &Mat, scale: f64, rng: &mut Rng) -> Mat {
    match m {
        Manifold::Spd { n } => {
            let e = matalg::sym(&gaussian(*n, *n, rng)) * scale;
            let a = matalg::sym_exp(&(e * 0.5));
            matalg::sym(&(&a * center * &a))
        }
        _ => m.retract(&(center + gaussian(center.nrows(), center.ncols(), rng) * (scale * 0.4))),
    }
}

fn kernels() -> Vec<RadialKernel> {
    vec![RadialKernel::gaussian(0.8).unwrap(), RadialKernel::inverse_quadratic(1.3, 0.5).unwrap()]
}

/// Every supported (manifold, family) pair with random parameters.
fn model_matrix(rng: &mut Rng) -> Vec<ScoreModel> {
    let manifolds = [
        Manifold::stiefel(3, 2).unwrap(),
        Manifold::stiefel(3, 1).unwrap(),
        Manifold::stiefel(4, 2).unwrap(),
        Manifold::grassmann(4, 2).unwrap(),
        Manifold::spd(2).unwrap(),
        Manifold::spd(3).unwrap(),
    ];
    let mut out = Vec::new();
    for m in manifolds {
        let (p, q) = m.shape();
        let n = m.n();
        let families = vec![
            Family::Uniform,
            Family::MatrixFisher { f: gaussian(p, q, rng) },
            Family::MatrixBingham { a: gaussian(n, n, rng) },
            Family::MatrixFisherBingham { a: gaussian(n, n, rng), f: gaussian(p, q, rng) },
            Family::RiemannianGaussian { center: random_point(&m, rng), sigma: 0.7 },
            Family::Wishart { v: random_spd(n, rng), dof: n as f64 + 1.5 },
        ];
        for f in families {
            if let Ok(model) = ScoreModel::new(m, f) {
                out.push(model);
            }
        }
    }
    out
}

/// Random pair of points on which every path of `model` is defined.
fn random_pair(model: &ScoreModel, rng: &mut Rng) -> (Mat, Mat) {
    let m = model.manifold();
    match model.family() {
        Family::RiemannianGaussian { center, .. } => (near(&m, center, 0.5, rng), near(&m, center, 0.5, rng)),
        _ => (random_point(&m, rng), random_point(&m, rng)),
    }
}

fn describe(sk: &SteinKernel) -> String {
    format!("{} {} {}", sk.manifold().name(), sk.model().family().label(), sk.kernel().label())
}

fn criterion_1() -> Outcome {
    let mut rng = rng::stream(101, 0);
    let mut worst = (0.0, String::new());
    let mut configs = 0;
    for model in model_matrix(&mut rng) {
        for k in kernels() {
            let sk = SteinKernel::new(model.clone(), k);
            configs += 1;
            for _ in 0..20 {
                let (x, y) = random_pair(&model, &mut rng);
                let closed = sk.closed(&x, &y).unwrap();
                let brute = sk.brute_force(&x, &y).unwrap();
                let rel = (closed - brute).abs() / brute.abs();
                if !(rel <= worst.0) {
                    worst = (rel, describe(&sk));
                }
            }
        }
    }
    outcome(
        worst.0 <= ORACLE_REL_TOL,
        format!("{configs} configurations x 20 pairs, max rel error {:.2e} ({})", worst.0, worst.1),
    )
}

fn criterion_2() -> Outcome {
    let mut rng = rng::stream(102, 0);
    let mut worst = (0.0, String::new());
    let mut configs = 0;
    for model in model_matrix(&mut rng) {
        for k in kernels() {
            let sk = SteinKernel::new(model.clone(), k);
            configs += 1;
            for _ in 0..5 {
                let (x, y) = random_pair(&model, &mut rng);
                let brute = sk.brute_force(&x, &y).unwrap();
                let fd = sk.finite_difference(&x, &y, FD_STEP).unwrap();
                let err = (brute - fd).abs();
                if !(err <= worst.0) {
                    worst = (err, describe(&sk));
                }
            }
        }
    }
    outcome(
        worst.0 <= FD_TOL,
        format!("{configs} configurations x 5 pairs, h = {FD_STEP}, max abs error {:.2e} ({})", worst.0, worst.1),
    )
}

fn least_squares_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

fn criterion_3() -> Outcome {
    let kernel = RadialKernel::gaussian(1.0).unwrap();
    let stiefel = Manifold::stiefel(3, 2).unwrap();
    let f0 = experiments::e1();
    let mf = SteinKernel::new(ScoreModel::new(stiefel, Family::MatrixFisher { f: f0.clone() }).unwrap(), kernel);
    // scale chosen so that E[X] = I, matching the unit kernel bandwidth
    let v = Mat::identity(2, 2) * 0.25;
    let wishart = SteinKernel::new(ScoreModel::wishart_from_standard(v.clone(), 4.0).unwrap(), kernel);

    let draw = |which: usize, n: usize, seed: u64| -> WeightedSample {
        match which {
            0 => experiments::mf_sample(&f0, n, seed).unwrap(),
            _ => WeightedSample::new(
                Manifold::spd(2).unwrap(),
                sampling::sample_wishart(&v, 4.0, n, &mut rng::stream(seed, 1)).unwrap(),
            )
            .unwrap(),
        }
    };
    let mut pass = true;
    let mut details = Vec::new();
    for (which, sk, name) in [(0, &mf, "MF(E1) on V_2(3)"), (1, &wishart, "Wishart(I/4, 4) on P(2)")] {
        let s = draw(which, 2000, 300 + which as u64);
        let g = sk.gram(s.points()).unwrap();
        let vn = ksdstats::v_from_gram(&g, s.weights());
        let se = ksdstats::bootstrap_se_v(&g, s.weights(), 200, 7).unwrap();
        let ok_identity = vn.abs() <= STEIN_SE_MULTIPLE * se;

        let ns = [100usize, 400, 1600];
        let mut medians = Vec::new();
        for &n in &ns {
            let mut vals: Vec<f64> = (0..10)
                .map(|rep| {
                    let s = draw(which, n, rng::child_seed(310 + which as u64, (n * 100 + rep) as u64));
                    ksdstats::v_stat(sk, &s).unwrap()
                })
                .collect();
            medians.push(experiments::median(&mut vals));
        }
        let lx: Vec<f64> = ns.iter().map(|n| (*n as f64).ln()).collect();
        let ly: Vec<f64> = medians.iter().map(|m| m.ln()).collect();
        let slope = least_squares_slope(&lx, &ly);
        let ok_slope = slope >= SLOPE_RANGE.0 && slope <= SLOPE_RANGE.1;
        pass &= ok_identity && ok_slope;
        details.push(format!("{name}: V_2000 = {vn:.2e}, SE = {se:.2e}, slope = {slope:.3}"));
    }
    outcome(pass, details.join("; "))
}

fn gradient_descent(sys: &mksde::MksdeSystem, steps: usize) -> Vector {
    let lmax = matalg::sym_eigen(&sys.q).eigenvalues.amax();
    let eta = 1.0 / (2.0 * lmax);
    let mut theta = Vector::zeros(sys.b.len());
    for _ in 0..steps {
        let grad = (&sys.q * &theta + &sys.b) * 2.0;
        theta -= grad * eta;
    }
    theta
}

fn criterion_4() -> Outcome {
    let m = Manifold::stiefel(3, 2).unwrap();
    let k = RadialKernel::gaussian(1.0).unwrap();
    let mf_sample = experiments::mf_sample(&experiments::e1(), 200, 401).unwrap();
    let mb_model = ScoreModel::new(m, Family::MatrixBingham { a: Mat::from_diagonal(&Vector::from_vec(vec![2.0, 0.0, -1.0])) })
        .unwrap();
    let (pts, _) = sampling::sample_rejection(&mb_model, 200, &mut rng::stream(402, 0)).unwrap();
    let mb_sample = WeightedSample::new(m, pts).unwrap();
    let mut pass = true;
    let mut details = Vec::new();
    for (kind, sample, name) in [
        (ExpFamilyKind::MatrixFisher, &mf_sample, "MF"),
        (ExpFamilyKind::MatrixBingham, &mb_sample, "MB"),
    ] {
        let ef = ExponentialFamily::new(m, kind).unwrap();
        let sys = mksde::assemble(&ef, &k, sample, StatKind::V).unwrap();
        let sol = mksde::solve(&sys, matalg::DEFAULT_PINV_RTOL).unwrap();
        let gd = gradient_descent(&sys, GD_STEPS);
        let gd_obj = gd.dot(&(&sys.q * &gd)) + 2.0 * sys.b.dot(&gd);
        let gap = gd_obj - sol.objective;
        pass &= gap.abs() <= GD_TOL;
        details.push(format!("{name}: pinv {:.10e}, descent {:.10e}, gap {gap:.2e}", sol.objective, gd_obj));
    }
    outcome(pass, details.join("; "))
}

fn criterion_5() -> Outcome {
    let mut rng = rng::stream(501, 0);
    let cases = [
        (Manifold::stiefel(3, 2).unwrap(), ExpFamilyKind::MatrixFisher),
        (Manifold::stiefel(3, 2).unwrap(), ExpFamilyKind::MatrixBingham),
        (Manifold::stiefel(4, 2).unwrap(), ExpFamilyKind::MatrixFisherBingham),
        (Manifold::grassmann(4, 2).unwrap(), ExpFamilyKind::MatrixFisher),
    ];
    let mut worst: f64 = 0.0;
    let mut evals = 0;
    for (m, kind) in cases {
        let ef = ExponentialFamily::new(m, kind).unwrap();
        let pts = sampling::sample_uniform(&m, 40, &mut rng).unwrap();
        let sample = WeightedSample::new(m, pts).unwrap();
        for k in kernels() {
            let sys = mksde::assemble(&ef, &k, &sample, StatKind::V).unwrap();
            for _ in 0..10 {
                let theta: Vec<f64> = (0..ef.dim()).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
                let quad = sys.objective(&Vector::from_vec(theta.clone()));
                let direct = ksdstats::v_stat(&SteinKernel::new(ef.model(&theta).unwrap(), k), &sample).unwrap();
                worst = worst.max((quad - direct).abs() / direct.abs());
                evals += 1;
            }
        }
    }
    outcome(worst <= QUAD_REL_TOL, format!("{evals} evaluations, max rel error {worst:.2e}"))
}

fn criterion_6() -> Outcome {
    let mut rng = rng::stream(601, 0);
    let exp_cases = [
        (Manifold::stiefel(3, 2).unwrap(), ExpFamilyKind::MatrixFisher),
        (Manifold::stiefel(3, 2).unwrap(), ExpFamilyKind::MatrixBingham),
        (Manifold::stiefel(3, 1).unwrap(), ExpFamilyKind::MatrixFisherBingham),
        (Manifold::stiefel(4, 2).unwrap(), ExpFamilyKind::MatrixBingham),
        (Manifold::grassmann(4, 2).unwrap(), ExpFamilyKind::MatrixFisher),
    ];
    let mut worst_q: f64 = f64::INFINITY;
    let mut worst_g: f64 = f64::INFINITY;
    for t in 0..50 {
        let (m, kind) = exp_cases[t % exp_cases.len()];
        let k = kernels()[rng.gen_range(0..2)];
        let n = rng.gen_range(20..60);
        let ef = ExponentialFamily::new(m, kind).unwrap();
        let sample = WeightedSample::with_log_weights(
            m,
            sampling::sample_uniform(&m, n, &mut rng).unwrap(),
            (0..n).map(|_| rng.gen::<f64>()).collect(),
        )
        .unwrap();
        let sys = mksde::assemble(&ef, &k, &sample, StatKind::V).unwrap();
        let ev = matalg::sym_eigen(&sys.q).eigenvalues;
        worst_q = worst_q.min(ev.min() / ev.amax().max(f64::MIN_POSITIVE));

        let models = model_matrix(&mut rng);
        let model = models[rng.gen_range(0..models.len())].clone();
        let pts: Vec<Mat> = (0..n).map(|_| random_pair(&model, &mut rng).0).collect();
        let g = SteinKernel::new(model, k).gram(&pts).unwrap();
        worst_g = worst_g.min(matalg::sym_eigen(&g).eigenvalues.min());
    }
    outcome(
        worst_q >= -PSD_TOL && worst_g >= -PSD_TOL,
        format!("50 configurations, min eig(Q_v)/|Q_v| = {worst_q:.2e}, min eig(Gram) = {worst_g:.2e}"),
    )
}

fn criterion_7() -> Outcome {
    let grid = [50usize, 150, 500];
    let spec = MleVsMksdeSpec {
        f0s: experiments::standard_f0s(),
        n_values: vec![50, 150, 300, 500],
        replicates: 20,
        kernel: RadialKernel::gaussian(1.0).unwrap(),
        estimators: vec![Estimator::MksdeV, Estimator::MleSmallF],
        seed: 701,
        mle: MleOptions::default(),
    };
    let rows = experiments::run_mle_vs_mksde(&spec).unwrap();
    let mut pass = true;
    let mut details = Vec::new();
    for (label, _) in &spec.f0s {
        let med: Vec<f64> = grid.iter().map(|n| experiments::median_error(&rows, label, *n, &Estimator::MksdeV)).collect();
        let decreasing = med.windows(2).all(|w| w[1] < w[0]);
        pass &= decreasing;
        details.push(format!(
            "{label}: {}",
            grid.iter().zip(&med).map(|(n, e)| format!("n={n} {e:.3}")).collect::<Vec<_>>().join(" > ")
        ));
    }
    let mk = experiments::median_error(&rows, "5E1", 300, &Estimator::MksdeV);
    let ml = experiments::median_error(&rows, "5E1", 300, &Estimator::MleSmallF);
    pass &= mk < ml;
    details.push(format!("5E1 at n=300: MKSDE-V {mk:.3} vs small-F MLE {ml:.3}"));
    outcome(pass, details.join("; "))
}

fn criterion_8() -> Outcome {
    let m = Manifold::stiefel(3, 2).unwrap();
    let k = RadialKernel::gaussian(1.0).unwrap();
    let cfg = GofConfig { beta: 0.05, n_sim: 5000, on_nonconvex: OnNonConvex::UseStationary };
    let a0 = Mat::from_diagonal(&Vector::from_vec(vec![2.0, 0.0, -1.0]));
    let model = ScoreModel::new(m, Family::MatrixBingham { a: a0 }).unwrap();
    let level = experiments::run_gof_level(&model, ExpFamilyKind::MatrixBingham, 150, 200, StatKind::V, &k, &cfg, 801)
        .unwrap();
    let rate = level.iter().filter(|r| r.reject).count() as f64 / level.len() as f64;
    let ok_level = rate >= LEVEL_RANGE.0 && rate <= LEVEL_RANGE.1;

    let spec = GofPowerSpec {
        f0s: vec![("E1".into(), experiments::e1())],
        n_values: vec![100, 200, 300],
        kinds: vec![StatKind::V],
        replicates: 20,
        kernel: k,
        target: ExpFamilyKind::MatrixBingham,
        gof: cfg,
        seed: 802,
    };
    let rows = experiments::run_gof_power(&spec).unwrap();
    let med: Vec<f64> = spec
        .n_values
        .iter()
        .map(|n| {
            let mut p: Vec<f64> = rows.iter().filter(|r| r.n == *n).map(|r| r.p_value).collect();
            experiments::median(&mut p)
        })
        .collect();
    let ok_power = med.windows(2).all(|w| w[1] < w[0]) && med[2] < POWER_P;
    outcome(
        ok_level && ok_power,
        format!(
            "level {rate:.3} over 200 trials; median p at n=100,200,300: {:.4}, {:.4}, {:.4}",
            med[0], med[1], med[2]
        ),
    )
}

/// `(I + S_{N,N}) / 2`: projection onto the identifiable part of a Bingham
/// parameter, which only enters through `A + A'`.
fn bingham_projection(n: usize) -> Mat {
    (ShuffleMatrix::new(n, n).to_dense() + Mat::identity(n * n, n * n)) * 0.5
}

fn criterion_9() -> Outcome {
    let mut rng = rng::stream(901, 0);
    let mut general: f64 = 0.0;
    let mut mb_special: f64 = 0.0;
    let mut mf_special_b: f64 = 0.0;
    let mut mf_special_a: f64 = 0.0;
    for m in [Manifold::stiefel(3, 2).unwrap(), Manifold::stiefel(4, 2).unwrap()] {
        let n = m.n();
        for kind in [ExpFamilyKind::MatrixFisher, ExpFamilyKind::MatrixBingham] {
            let ef = ExponentialFamily::new(m, kind).unwrap();
            for k in kernels() {
                for _ in 0..10 {
                    let x = sampling::uniform_point(&m, &mut rng).unwrap();
                    let y = sampling::uniform_point(&m, &mut rng).unwrap();
                    let p = mksde::pair_qb(&ef, &k, &x, &y);
                    let q_sum = &p.q + p.q.transpose();
                    let b_sum = &p.b_xy + &p.b_yx;
                    let (axy, bxy) = mksde::pair_qb_vectorized_stiefel(&ef, &k, &x, &y).unwrap();
                    let (ayx, byx) = mksde::pair_qb_vectorized_stiefel(&ef, &k, &y, &x).unwrap();
                    general = general.max((&axy + &ayx - &q_sum).amax()).max((&bxy + &byx - &b_sum).amax());

                    if let RadialKernel::Gaussian { tau } = k {
                        let spec = match kind {
                            ExpFamilyKind::MatrixFisher => mksde::mf_gaussian_specialized,
                            _ => mksde::mb_gaussian_specialized,
                        };
                        let (sa_xy, sb_xy) = spec(tau, &x, &y);
                        let (sa_yx, sb_yx) = spec(tau, &y, &x);
                        let a_err = (&sa_xy + &sa_yx - &q_sum).amax();
                        match kind {
                            ExpFamilyKind::MatrixFisher => {
                                mf_special_a = mf_special_a.max(a_err);
                                mf_special_b = mf_special_b.max((&sb_xy + &sb_yx - &b_sum).amax());
                            }
                            _ => {
                                let pr = bingham_projection(n);
                                let b_err = (&pr * (&sb_xy + &sb_yx - &b_sum)).amax();
                                mb_special = mb_special.max(a_err).max(b_err);
                            }
                        }
                    }
                }
            }
        }
    }
    let pass = [general, mb_special, mf_special_b, mf_special_a].iter().all(|e| *e <= VEC_TOL);
    outcome(
        pass,
        format!(
            "max elementwise error: general {general:.2e}, Bingham-Gaussian A,b {mb_special:.2e}, \
             Fisher-Gaussian b {mf_special_b:.2e}, Fisher-Gaussian A {mf_special_a:.2e}"
        ),
    )
}

fn criterion_10() -> Outcome {
    let mut rng = rng::stream(1001, 0);
    let mut worst_rt: f64 = 0.0;
    let cases = [
        Manifold::stiefel(3, 2).unwrap(),
        Manifold::stiefel(4, 2).unwrap(),
        Manifold::stiefel(3, 1).unwrap(),
        Manifold::stiefel(5, 3).unwrap(),
        Manifold::grassmann(4, 2).unwrap(),
        Manifold::grassmann(3, 1).unwrap(),
        Manifold::grassmann(5, 2).unwrap(),
    ];
    for m in cases {
        for _ in 0..20 {
            let x = sampling::uniform_point(&m, &mut rng).unwrap();
            let y = near(&m, &x, 1.0, &mut rng);
            let back = m.exp(&x, &m.log(&x, &y).unwrap()).unwrap();
            worst_rt = worst_rt.max((back - &y).amax());
        }
    }
    let mut worst_inv: f64 = 0.0;
    for n in [2, 3, 4] {
        for _ in 0..20 {
            let (x, y) = (random_spd(n, &mut rng), random_spd(n, &mut rng));
            let g = gaussian(n, n, &mut rng) + Mat::identity(n, n) * 0.1;
            let d = spd::dist(&x, &y).unwrap();
            let dg = spd::dist(&(&g * &x * g.transpose()), &(&g * &y * g.transpose())).unwrap();
            worst_inv = worst_inv.max((d - dg).abs());
        }
    }
    outcome(
        worst_rt <= GEOM_TOL && worst_inv <= GEOM_TOL,
        format!("Exp(Log) max error {worst_rt:.2e}; SPD congruence max error {worst_inv:.2e}"),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("closed form equals brute-force killing sum", criterion_1),
        ("brute-force sum equals finite differences", criterion_2),
        ("Stein identity and 1/n decay", criterion_3),
        ("MKSDE pseudoinverse equals gradient descent", criterion_4),
        ("quadratic form reproduces V-statistic", criterion_5),
        ("PSD Q_v and Stein Gram", criterion_6),
        ("MKSDE consistency", criterion_7),
        ("goodness-of-fit level and power", criterion_8),
        ("vectorized fast path", criterion_9),
        ("geometry round trips", criterion_10),
    ];
    let selected: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = Vec::new();
    let stdout = std::io::stdout();
    for (i, (name, run)) in criteria.iter().enumerate() {
        let id = i + 1;
        if !selected.is_empty() && !selected.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let o = run();
        let verdict = if o.pass { "PASS" } else { "FAIL" };
        let mut lock = stdout.lock();
        writeln!(
            lock,
            "criterion {id:>2} {verdict}: {name} [{:.1}s] {}",
            start.elapsed().as_secs_f64(),
            o.detail
        )
        .unwrap();
        lock.flush().unwrap();
        if !o.pass {
            failed.push(id);
        }
    }
    if !failed.is_empty() {
        eprintln!("acceptance: failed criteria {failed:?}");
        std::process::exit(1);
    }
}
