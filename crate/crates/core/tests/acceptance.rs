//! End-to-end acceptance checks. Each test prints one PASS/FAIL line;
//! run with `--nocapture` to see them.

use fracmc::estimator::{
    gl_deterministic_oracle, gl_left, gl_right, EstimatorConfig, EstimatorError, Side,
};
use fracmc::gamma::gamma;
use fracmc::geometry::{CollocationPoint, Domain};
use fracmc::nn::Mlp;
use fracmc::problems::ProblemSpec;
use fracmc::qmc::UniformStream;
use fracmc::sampler::{draw_nodes, DrawStrategy, FracOrder, JumpDistribution};
use fracmc::solver::{assemble_batch, LossComputer, LossWeights, PointSet};

fn l2_relative(pred: &[f64], exact: &[f64]) -> f64 {
    let num: f64 = pred
        .iter()
        .zip(exact)
        .map(|(p, e)| (p - e) * (p - e))
        .sum();
    let den: f64 = exact.iter().map(|e| e * e).sum();
    (num / den).sqrt()
}

fn grid99() -> Vec<f64> {
    (1..100).map(|i| i as f64 / 100.0).collect()
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Right-sided estimator sweep of (1-x)^2 over the grid for one seed.
fn fig2_l2_error(alpha: f64, nk: usize, seed: u64) -> f64 {
    let order = FracOrder::new(alpha).unwrap();
    let cfg = EstimatorConfig::new(nk, nk, order).unwrap();
    let mut stream = UniformStream::pseudo(seed);
    let grid = grid99();
    let f = |x: f64| (1.0 - x) * (1.0 - x);
    let exact: Vec<f64> = grid
        .iter()
        .map(|&x| 2.0 / gamma(3.0 - alpha) * (1.0 - x).powf(2.0 - alpha))
        .collect();
    let pred: Vec<f64> = grid
        .iter()
        .map(|&x| gl_right(f, x, 1.0, &cfg, &mut stream).unwrap())
        .collect();
    l2_relative(&pred, &exact)
}

#[test]
fn criterion_01_estimator_convergence_fig2() {
    let reported = [
        (1.2, [(10, 5.63e-2), (100, 9.94e-3), (3000, 6.1e-5)]),
        (1.6, [(10, 1.11e-1), (100, 2.61e-2), (3000, 9.95e-5)]),
    ];
    let mut ok = true;
    let mut details = String::new();
    for (alpha, cells) in reported {
        let start = std::time::Instant::now();
        for (nk, paper) in cells {
            let errs: Vec<f64> = (0..10).map(|s| fig2_l2_error(alpha, nk, s)).collect();
            let med = median(errs);
            let in_band = med >= paper / 5.0 && med <= paper * 5.0;
            ok &= in_band;
            details.push_str(&format!(
                "\n  alpha={alpha} N=K={nk}: median L2 {med:.3e} vs reported {paper:.2e} (x5 band) -> {}",
                if in_band { "ok" } else { "OUT OF BAND" }
            ));
        }
        let secs = start.elapsed().as_secs_f64();
        ok &= secs < 120.0;
        details.push_str(&format!("\n  alpha={alpha} sweep took {secs:.1} s (< 120 s)"));
    }
    println!(
        "[criterion 1] estimator convergence vs reported values: {}{details}",
        if ok { "PASS" } else { "FAIL" }
    );
    assert!(ok, "{details}");
}

/// One grid sweep at N=K=1000 for one of the two symmetric test cases:
/// left derivative of x^2 (anchored at 0) or right derivative of
/// (1-x)^2 (anchored at 1). Closed-form reference in both cases.
fn qmc_sweep_l2(alpha: f64, left_of_x_sq: bool, stream: &mut UniformStream) -> f64 {
    let order = FracOrder::new(alpha).unwrap();
    let cfg = EstimatorConfig::new(1000, 1000, order).unwrap();
    let grid = grid99();
    let coeff = 2.0 / gamma(3.0 - alpha);
    let mut pred = Vec::with_capacity(grid.len());
    let mut exact = Vec::with_capacity(grid.len());
    for &x in &grid {
        if left_of_x_sq {
            pred.push(gl_left(|v: f64| v * v, x, 0.0, &cfg, stream).unwrap());
            exact.push(coeff * x.powf(2.0 - alpha));
        } else {
            let f = |v: f64| (1.0 - v) * (1.0 - v);
            pred.push(gl_right(f, x, 1.0, &cfg, stream).unwrap());
            exact.push(coeff * (1.0 - x).powf(2.0 - alpha));
        }
    }
    l2_relative(&pred, &exact)
}

#[test]
fn criterion_02_qmc_accuracy_fig3() {
    let (lo, hi) = (4.18e-4 / 3.0, 5.07e-4 * 3.0);
    let mut ok = true;
    let mut details = String::new();
    for alpha in [1.3, 1.8] {
        for left_of_x_sq in [true, false] {
            // pseudo-random reference: median over 20 seeds
            let pseudo = median(
                (0..20)
                    .map(|s| {
                        let mut st = UniformStream::pseudo(100 + s);
                        qmc_sweep_l2(alpha, left_of_x_sq, &mut st)
                    })
                    .collect(),
            );
            let case = if left_of_x_sq { "x^2 left" } else { "(1-x)^2 right" };
            for (name, mut st) in [
                ("sobol", UniformStream::sobol()),
                ("halton", UniformStream::halton(3)),
            ] {
                // the low-discrepancy sequences are deterministic, so the
                // 20-seed median collapses to a single evaluation
                let err = qmc_sweep_l2(alpha, left_of_x_sq, &mut st);
                let in_band = err >= lo && err <= hi;
                let beats = err < pseudo;
                ok &= in_band && beats;
                details.push_str(&format!(
                    "\n  alpha={alpha} {case} {name}: L2 {err:.3e} (band [{lo:.2e},{hi:.2e}] {}) vs pseudo median {pseudo:.3e} ({})",
                    if in_band { "ok" } else { "OUT" },
                    if beats { "below" } else { "NOT BELOW" }
                ));
            }
        }
    }
    println!(
        "[criterion 2] quasi-MC accuracy at N=K=1000: {}{details}",
        if ok { "PASS" } else { "FAIL" }
    );
    assert!(ok, "{details}");
}

#[test]
fn criterion_03_dedup_compression() {
    let mut ok = true;
    let mut details = String::new();
    for alpha in [0.5, 1.5] {
        let order = FracOrder::new(alpha).unwrap();
        let dist = JumpDistribution::new(order, JumpDistribution::default_k_cap(10));
        let mut stream = UniformStream::pseudo(2024);
        let nodes = draw_nodes(&dist, 10, 10, &mut stream, DrawStrategy::ShiftedLattice).unwrap();
        let unique = nodes.unique_count();
        ok &= unique <= 30;
        // dedup vs raw replay of the identical uniforms
        let mut replay = UniformStream::pseudo(2024);
        let raw_nodes =
            draw_nodes(&dist, 10, 10, &mut replay, DrawStrategy::ShiftedLattice).unwrap();
        let f = |k: u32| (k as f64).sqrt() + 0.25 * k as f64;
        let a = nodes.weighted_mean(f);
        let b = raw_nodes.weighted_mean(f);
        let rel = (a - b).abs() / a.abs().max(1e-300);
        ok &= rel < 1e-12;
        details.push_str(&format!(
            "\n  alpha={alpha}: 100 draws -> {unique} unique nodes (<= 30), dedup-vs-raw rel {rel:.1e}"
        ));
    }
    println!(
        "[criterion 3] node dedup compression: {}{details}",
        if ok { "PASS" } else { "FAIL" }
    );
    assert!(ok, "{details}");
}

/// Full deterministic operator (Caputo time term plus Riesz spatial
/// terms, truncated GL with `n_big` steps) applied to the exact
/// solution at one interior point.
fn deterministic_operator(p: &ProblemSpec, pt: &[f64], t: f64, n_big: usize) -> f64 {
    let cp = CollocationPoint::new(&p.domain, pt.to_vec(), t).unwrap();
    let mut op = 0.0;
    if let Some(alpha) = p.time_order {
        let order_t = FracOrder::new(alpha).unwrap();
        let u_t = |s: f64| p.exact(pt, s) - p.exact(pt, 0.0);
        op += p.time_coeff * gl_deterministic_oracle(u_t, t, 0.0, Side::Left, order_t, n_big);
    }
    for axis in 0..p.spatial_dim() {
        let a = p.axis_orders[axis];
        let order = FracOrder::new(a).unwrap();
        let b = cp.axis_bounds[axis];
        let c = 1.0 / (2.0 * (std::f64::consts::PI * a / 2.0).cos());
        let field = |v: f64| {
            let mut q = pt.to_vec();
            q[axis] = v;
            p.exact(&q, t)
        };
        let l = gl_deterministic_oracle(field, pt[axis], b.lb, Side::Left, order, n_big);
        let r = gl_deterministic_oracle(field, pt[axis], b.ub, Side::Right, order, n_big);
        op += p.axis_coeffs[axis] * c * (l + r);
    }
    op
}

#[test]
fn criterion_04_forcing_operator_consistency() {
    let n_big = 100_000;
    let pts2: Vec<Vec<f64>> = vec![
        vec![0.2, 0.3],
        vec![-0.4, 0.1],
        vec![0.0, 0.0],
        vec![0.5, -0.3],
        vec![-0.2, -0.6],
    ];
    let pts3: Vec<Vec<f64>> = vec![
        vec![0.1, 0.2, -0.1],
        vec![0.0, 0.0, 0.0],
        vec![-0.2, 0.1, 0.3],
        vec![0.15, -0.25, 0.05],
        vec![-0.1, -0.1, -0.2],
    ];
    let cases: Vec<(ProblemSpec, &Vec<Vec<f64>>, f64)> = vec![
        (ProblemSpec::poisson2d_frac(1.7, 1.5, Domain::disk(1.0)), &pts2, 0.0),
        (ProblemSpec::diffusion2d_tsfrac(0.8, 1.6, 1.4, 1.0, 1.0), &pts2, 0.8),
        (ProblemSpec::bloch_torrey3d(0.9, 1.9, 1.0, 1.0), &pts3, 0.8),
        (ProblemSpec::fuzzy_boundary(0.9, 1.9), &pts3, 0.8),
    ];
    let mut ok = true;
    let mut details = String::new();
    for (p, pts, t) in cases {
        let mut worst: f64 = 0.0;
        for pt in pts.iter() {
            let op = deterministic_operator(&p, pt, t, n_big);
            let cp = CollocationPoint::new(&p.domain, pt.clone(), t).unwrap();
            let f = p.forcing(&cp.coords, &cp.axis_bounds, t);
            worst = worst.max((op - f).abs() / f.abs().max(1e-12));
        }
        ok &= worst < 1e-2;
        details.push_str(&format!(
            "\n  {}: worst relative misfit over 5 spot points {worst:.2e} (< 1e-2)",
            p.id.name()
        ));
    }
    println!(
        "[criterion 4] forcing-operator consistency oracle: {}{details}",
        if ok { "PASS" } else { "FAIL" }
    );
    assert!(ok, "{details}");
}

#[test]
fn criterion_05_gradient_vs_finite_differences() {
    // frozen nodes: one assembled batch, never redrawn
    let p = ProblemSpec::poisson2d_frac(1.7, 1.5, Domain::disk(1.0));
    let mut stream = UniformStream::pseudo(11);
    let pts: Vec<CollocationPoint> = p
        .domain
        .sample_interior(6, &mut stream)
        .unwrap()
        .into_iter()
        .map(|c| CollocationPoint::new(&p.domain, c, 0.0).unwrap())
        .collect();
    let batch = assemble_batch(&p, &pts, 8, 8, &mut stream).unwrap();
    let boundary = PointSet {
        inputs: p
            .domain
            .sample_boundary(10, &mut stream)
            .unwrap(),
        targets: vec![0.0; 10],
    };
    let initial = PointSet { inputs: vec![], targets: vec![] };
    let lc = LossComputer {
        batch: &batch,
        initial: &initial,
        boundary: &boundary,
        weights: LossWeights { w_e: 3e-3, w_i: 0.0, w_b: 1.0 },
        workers: 1,
    };
    let mut net = Mlp::xavier_init(&[2, 10, 10, 1], &mut stream).unwrap();
    let (_, grad) = lc.loss_and_grad(&net);

    let n = net.param_count();
    let mut ok = true;
    let mut worst: f64 = 0.0;
    let mut checked = std::collections::BTreeSet::new();
    while checked.len() < 20 {
        let i = (stream.next_value().unwrap() * n as f64) as usize % n;
        if !checked.insert(i) {
            continue;
        }
        let theta = net.params()[i];
        let eps = 1e-5 * (1.0 + theta.abs());
        net.params_mut()[i] = theta + eps;
        let up = lc.loss(&net).total;
        net.params_mut()[i] = theta - eps;
        let dn = lc.loss(&net).total;
        net.params_mut()[i] = theta;
        let fd = (up - dn) / (2.0 * eps);
        let rel = (grad[i] - fd).abs() / grad[i].abs().max(fd.abs()).max(1e-8);
        worst = worst.max(rel);
        ok &= rel < 1e-5;
    }
    println!(
        "[criterion 5] reverse-mode gradients vs central FD: {} (worst rel {worst:.2e} over 20 components)",
        if ok { "PASS" } else { "FAIL" }
    );
    assert!(ok, "worst relative gradient mismatch {worst:.2e}");
}

use fracmc::solver::{train, NodePolicy, TrainConfig};

/// Training recipe shared by the desk-scale runs: balanced loss weights
/// (the h^{-order} residual amplification otherwise drives the network
/// to the trivial zero solution), node redraw every 3 iterations, and a
/// 15% L-BFGS tail on frozen nodes.
fn desk_recipe(problem: &ProblemSpec, nk: usize, iterations: usize) -> TrainConfig {
    let mut cfg = TrainConfig::desk_scale(problem);
    cfg.iterations = iterations;
    cfg.adam_fraction = 0.85;
    cfg.node_policy = NodePolicy::PerIteration(3);
    cfg.n_points = nk;
    cfg.repeats = nk;
    cfg.n_equation = 50;
    cfg.n_initial = if problem.is_time_fractional() { 50 } else { 0 };
    cfg.n_boundary = 60;
    cfg.weights = LossWeights { w_e: 3e-3, w_i: 1.0, w_b: 1.0 };
    cfg.seed = 3;
    cfg
}

#[test]
fn criterion_06_desk_scale_disk_training() {
    let p = ProblemSpec::poisson2d_frac(1.7, 1.5, Domain::disk(1.0));
    let start = std::time::Instant::now();
    let big = train(&p, &desk_recipe(&p, 32, 50_000)).unwrap();
    let small = train(&p, &desk_recipe(&p, 8, 50_000)).unwrap();
    let mins = start.elapsed().as_secs_f64() / 60.0;
    let ok = big.validation_l2 < 0.15 && big.validation_l2 < small.validation_l2 && mins < 30.0;
    println!(
        "[criterion 6] desk-scale disk run (50K iterations): {}\n  N=K=32: L2 {:.3e} (< 0.15)\n  N=K=8:  L2 {:.3e} (N=32 must be lower)\n  both runs took {mins:.1} min (< 30)",
        if ok { "PASS" } else { "FAIL" },
        big.validation_l2,
        small.validation_l2
    );
    assert!(ok, "N=32 {:.3e}, N=8 {:.3e}, {mins:.1} min", big.validation_l2, small.validation_l2);
}

#[test]
fn criterion_08_fuzzy_boundary_end_to_end() {
    let p = ProblemSpec::fuzzy_boundary(0.9, 1.9);
    let out = train(&p, &desk_recipe(&p, 16, 1_500)).unwrap();
    // produce and round-trip the error report like a full run would
    let dir = std::env::temp_dir().join("fracmc_acceptance_fuzzy");
    std::fs::create_dir_all(&dir).unwrap();
    let summary = fracmc::report::RunSummary {
        mode: "train".into(),
        problem: p.id.name().into(),
        n_points: 16,
        repeats: 16,
        seed: 3,
        iterations: 1_500,
        l2_relative_error: out.validation_l2,
        median_wall_ms_per_10_iter: fracmc::solver::median_window_ms(&out.history),
        unique_evals: out.unique_evals,
        raw_draws: out.raw_draws,
    };
    fracmc::report::write_summary(&dir, &summary).unwrap();
    let back = fracmc::report::read_summary(&dir).unwrap();
    let ok = out.validation_l2.is_finite() && back.l2_relative_error == out.validation_l2;
    println!(
        "[criterion 8] fuzzy-boundary end-to-end: {} (L2 error report {:.3e}, finite; round-trips)",
        if ok { "PASS" } else { "FAIL" },
        out.validation_l2
    );
    assert!(ok);
}

#[test]
fn criterion_09_dedup_scaling_shape() {
    let p = ProblemSpec::poisson2d_frac(1.7, 1.5, Domain::disk(1.0));
    let mut stream = UniformStream::pseudo(17);
    let pts: Vec<CollocationPoint> = p
        .domain
        .sample_interior(20, &mut stream)
        .unwrap()
        .into_iter()
        .map(|c| CollocationPoint::new(&p.domain, c, 0.0).unwrap())
        .collect();
    let mut ratios = Vec::new();
    let mut details = String::new();
    for nk in [20usize, 40, 80] {
        let batch = assemble_batch(&p, &pts, nk, nk, &mut stream).unwrap();
        let ratio = batch.unique_count() as f64 / batch.raw_draws() as f64;
        details.push_str(&format!(
            "\n  N=K={nk}: {} unique / {} raw draws = {ratio:.4}",
            batch.unique_count(),
            batch.raw_draws()
        ));
        ratios.push(ratio);
    }
    let ok = ratios.windows(2).all(|w| w[1] <= w[0]);
    println!(
        "[criterion 9] unique/raw compression ratio non-increasing: {}{details}",
        if ok { "PASS" } else { "FAIL" }
    );
    assert!(ok, "{details}");
}

#[test]
fn criterion_10_probability_law_suite() {
    let mut ok = true;
    let mut details = String::new();

    // normalization with lazily reachable k_cap = 10^6
    for alpha in [0.5, 1.5] {
        let order = FracOrder::new(alpha).unwrap();
        let d = JumpDistribution::new(order, 1_000_000);
        let defect = (d.cdf_partial(1_000_000) + d.tail_mass() - 1.0).abs();
        ok &= defect < 1e-12;
        details.push_str(&format!("\n  alpha={alpha}: normalization defect {defect:.1e}"));

        // CDF monotonicity over the cached prefix
        let mut prev = 0.0;
        let mut mono = true;
        for j in 1..=5000 {
            let e = d.cdf_partial(j);
            mono &= e > prev;
            prev = e;
        }
        ok &= mono;
        details.push_str(&format!(", cdf monotone over 5000 terms: {mono}"));
    }

    // recurrence vs direct Gamma closed form
    let mut worst: f64 = 0.0;
    for alpha in [0.3, 0.5, 1.2, 1.5, 1.8] {
        let order = FracOrder::new(alpha).unwrap();
        let d = JumpDistribution::new(order, 10_000);
        for k in 1..=20 {
            let closed = fracmc::sampler::jump_prob_closed_form(order, k);
            let rel = (d.jump_prob(k) - closed).abs() / closed.abs().max(1e-300);
            worst = worst.max(rel);
        }
    }
    ok &= worst < 1e-12;
    details.push_str(&format!("\n  recurrence vs Gamma closed form, worst rel {worst:.1e}"));

    // Caputo of a constant is exactly zero
    let cfg = EstimatorConfig::new(200, 200, FracOrder::new(0.4).unwrap()).unwrap();
    let mut s = UniformStream::pseudo(5);
    let v = fracmc::estimator::caputo_time(|_| 7.5, 1.0, 7.5, &cfg, &mut s).unwrap();
    ok &= v == 0.0;
    details.push_str(&format!("\n  caputo(constant) = {v:?} (exact zero)"));

    // estimator linearity under stream replay
    let cfg = EstimatorConfig::new(100, 100, FracOrder::new(1.5).unwrap()).unwrap();
    let f = |x: f64| (1.0 - x).powi(3);
    let g = |x: f64| (2.0 * x).cos();
    let run = |func: &dyn Fn(f64) -> f64| -> Result<f64, EstimatorError> {
        let mut s = UniformStream::pseudo(31);
        gl_left(func, 0.8, 0.0, &cfg, &mut s)
    };
    let combo = run(&|x| 2.0 * f(x) - 0.5 * g(x)).unwrap();
    let parts = 2.0 * run(&f).unwrap() - 0.5 * run(&g).unwrap();
    let lin = (combo - parts).abs() / combo.abs().max(1.0);
    ok &= lin < 1e-12;
    details.push_str(&format!("\n  linearity defect under replay {lin:.1e}"));

    println!(
        "[criterion 10] probability-law suite: {}{details}",
        if ok { "PASS" } else { "FAIL" }
    );
    assert!(ok, "{details}");
}

// keep the unused-import lint honest while later criteria land
#[allow(dead_code)]
fn _side_used(_: Side) {}
