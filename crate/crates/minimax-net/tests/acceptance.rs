//! Acceptance suite: one test per criterion, each printing a PASS line with
//! the measured quantity (run with `-- --nocapture` to see them).

mod common;

use ndarray::Array1;

use minimax_net::algorithms::{
    central_init, dgta_init, dgta_step, dsgta_init, dsgta_step, gda_step, gtda_step, run,
    AlgorithmKind, InitState, RunSettings,
};
use minimax_net::problems::{phi_and_grad, ProblemInstance, StochasticOracle};
use minimax_net::stepsize::{RateConstants, Regime, StepsizePlan};
use minimax_net::topology::TopologySpec;
use minimax_net::verify::{
    averaged_grad_phi_sq, deterministic_check_suite, deterministic_trace, fd_grad_phi,
    grid_best_response, log_log_slope, CheckContext, RatePoint, DEFAULT_TOLERANCE,
};

fn pass(criterion: usize, name: &str, detail: String) {
    println!("[criterion {criterion:2}] {name}: PASS — {detail}");
}

/// Criterion 1: tracker average equals the cached gradient average to
/// 1e-10 relative at every one of 1e3 steps, for both methods on
/// {ring, complete, path} x {quadratic, wrm}.
#[test]
fn criterion_01_tracking_conservation() {
    let topologies =
        [TopologySpec::Ring, TopologySpec::Complete, TopologySpec::Path];
    let mut worst: f64 = 0.0;
    for spec in &topologies {
        let w = common::metropolis(spec, 8);
        let problems: Vec<Box<dyn ProblemInstance>> = vec![
            Box::new(common::default_quadratic(8, 5)),
            Box::new(common::wrm_toy(8, 6)),
        ];
        for problem in &problems {
            let problem = problem.as_ref();
            let plan = common::corollary1_plan(problem, w.lambda());
            let init =
                InitState::spread(problem, &common::gaussian_x(problem.dim_x(), 0.4, 9), 0.3, 10);

            let mut det = dgta_init(problem, &init).unwrap();
            for _ in 0..1000 {
                det = dgta_step(&det, problem, &w, &plan);
                let gap = det.tracking_conservation_gap();
                worst = worst.max(gap);
                assert!(gap <= 1e-10, "{spec:?} deterministic: gap {gap:.3e} at t={}", det.t);
            }

            let oracle = StochasticOracle::new(problem, 0.2, 2, 123);
            let mut sto = dsgta_init(&oracle, &init).unwrap();
            for _ in 0..1000 {
                sto = dsgta_step(&sto, &oracle, &w, &plan);
                let gap = sto.tracking_conservation_gap();
                worst = worst.max(gap);
                assert!(gap <= 1e-10, "{spec:?} stochastic: gap {gap:.3e} at t={}", sto.t);
            }
        }
    }
    pass(1, "tracking conservation", format!("worst relative gap {worst:.3e} <= 1e-10"));
}

/// Criterion 2: finite differences of `Phi` match the closed-response
/// gradient to 1e-5 relative at 20 random points, at least 3 of which have a
/// boundary-clipped best response.
#[test]
fn criterion_02_danskin_gradient_check() {
    use minimax_net::problems::{QuadraticSaddle, QuadraticSaddleParams};
    let problem = QuadraticSaddle::generate(&QuadraticSaddleParams {
        agents: 4,
        dim_x: 4,
        dim_y: 2,
        radius: 0.35,
        seed: 40,
        phi_margin: None,
        ..QuadraticSaddleParams::default()
    });
    let mut clipped_points = 0;
    let mut worst: f64 = 0.0;
    for trial in 0..20 {
        let x = common::gaussian_x(4, 0.8, 100 + trial);
        if !problem.all_best_responses_interior(&x.view(), 1e-9) {
            clipped_points += 1;
        }
        let fd = fd_grad_phi(&problem, &x.view(), 1e-5).unwrap();
        let (_, grad) = phi_and_grad(&problem, &x.view()).unwrap();
        let err = (&fd - &grad).iter().map(|v| v * v).sum::<f64>().sqrt();
        let scale = grad.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-12);
        let rel = err / scale;
        worst = worst.max(rel);
        assert!(rel <= 1e-5, "point {trial}: relative error {rel:.3e}");
    }
    assert!(clipped_points >= 3, "only {clipped_points} clipped points; need >= 3");
    pass(
        2,
        "danskin gradient check",
        format!("worst relative error {worst:.3e} over 20 points ({clipped_points} clipped)"),
    );
}

/// Criterion 3: on a complete graph with identical initialization and no
/// noise, the swarm stays in bitwise consensus and its trajectory matches
/// the centralized method at machine precision (1e-12 relative per step;
/// the two implementations round differently, so exact bit equality between
/// them is not attainable — see the per-agent consensus assertion for the
/// bitwise part).
#[test]
fn criterion_03_centralized_reduction() {
    let problem = common::default_quadratic(8, 17);
    let w = common::metropolis(&TopologySpec::Complete, 8);
    assert_eq!(w.lambda(), 0.0);
    let plan = common::corollary1_plan(&problem, w.lambda());
    let x0 = common::gaussian_x(4, 0.5, 23);
    let init = InitState::identical(&problem, &x0);

    let mut swarm = dgta_init(&problem, &init).unwrap();
    let mut central = central_init(&problem, &init).unwrap();
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        swarm = dgta_step(&swarm, &problem, &w, &plan);
        central = gda_step(&central, &problem, &plan);

        // bitwise: all agents identical on a complete graph
        for i in 1..8 {
            for k in 0..4 {
                assert_eq!(
                    swarm.x[[i, k]].to_bits(),
                    swarm.x[[0, k]].to_bits(),
                    "agent {i} broke bitwise consensus at t={}",
                    swarm.t
                );
            }
        }
        // machine precision: swarm row equals the centralized iterate
        for k in 0..4 {
            let rel = (swarm.x[[0, k]] - central.x[k]).abs() / (1.0 + central.x[k].abs());
            worst = worst.max(rel);
            assert!(rel <= 1e-12, "x[{k}] deviates by {rel:.3e} at t={}", swarm.t);
        }
        for i in 0..8 {
            for k in 0..swarm.y[i].len() {
                let rel = (swarm.y[i][k] - central.y[i][k]).abs() / (1.0 + central.y[i][k].abs());
                worst = worst.max(rel);
                assert!(rel <= 1e-12, "y[{i}][{k}] deviates by {rel:.3e}");
            }
        }
    }
    pass(
        3,
        "centralized reduction",
        format!("bitwise consensus for 1000 steps; worst centralized deviation {worst:.3e}"),
    );
}

/// Criterion 4: with compliant stepsizes and no noise, the Lyapunov
/// potential decreases by at least `eta_x/2 ||grad Phi||^2` at every one of
/// 1e4 steps, and the four underlying recursions hold with margin >= -1e-9.
#[test]
fn criterion_04_deterministic_lyapunov_descent() {
    let mut problem = common::default_quadratic(4, 7);
    problem.certify_phi_star(3.0, 12, 300, 7);
    let w = common::metropolis(&TopologySpec::Ring, 4);
    let plan = common::corollary1_plan(&problem, w.lambda());
    let init = InitState::spread(&problem, &common::gaussian_x(4, 0.5, 31), 0.4, 32);
    let trace = deterministic_trace(&problem, &w, &plan, 10_000, &init).unwrap();
    let ctx =
        CheckContext { constants: problem.constants(), agents: 4, lambda: w.lambda() };
    let reports = deterministic_check_suite(&trace, &plan, &ctx, DEFAULT_TOLERANCE).unwrap();
    let mut detail = String::new();
    for report in &reports {
        assert!(report.passed, "{}", report.summary());
        assert!(report.min_margin >= -1e-9, "{}", report.summary());
        detail.push_str(&format!("{} {:.2e}; ", report.name, report.min_margin));
    }
    // with the certified lower bound the potential itself stays nonnegative
    for rec in &trace {
        let potential = rec.lyapunov.expect("certified instance records the potential");
        assert!(potential >= 0.0, "potential {potential} at t={}", rec.t);
    }
    pass(4, "deterministic lyapunov descent", format!("min margins: {detail}"));
}

/// Criterion 5: deterministic averaged stationarity decays like 1/T — the
/// log-log slope over T in {1e3, 4e3, 1.6e4} is at most -0.8.
#[test]
fn criterion_05_deterministic_rate() {
    let problem = common::isotropic_quadratic(4, 2, 1.4, 0.75, 5.0, 50);
    let w = common::metropolis(&TopologySpec::Ring, 4);
    let plan = common::corollary1_plan(&problem, w.lambda());
    let init = InitState::identical(&problem, &common::gaussian_x(2, 0.4, 51));
    let mut points = Vec::new();
    for horizon in [1_000usize, 4_000, 16_000] {
        let settings =
            RunSettings { iterations: horizon, record_every: 1, sigma: 0.0, batch: 1, seed: 0 };
        let out = run(AlgorithmKind::Dgta, &problem, Some(&w), &plan, &settings, &init).unwrap();
        let avg = averaged_grad_phi_sq(&out.records, horizon).unwrap();
        points.push(RatePoint { horizon, averaged_metric: avg });
    }
    let slope = log_log_slope(&points);
    assert!(slope <= -0.8, "slope {slope:.3} > -0.8; points {points:?}");
    pass(5, "deterministic 1/T rate", format!("log-log slope {slope:.3} <= -0.8"));
}

/// Criterion 6: with fixed deterministic-regime stepsizes, the stochastic
/// long-run plateau of the averaged stationarity decreases monotonically in
/// the batch size and scales like sigma^2/b within constant-factor slack.
#[test]
fn criterion_06_stochastic_floor_scaling() {
    let problem = common::isotropic_quadratic(4, 2, 1.4, 0.75, 5.0, 60);
    let w = common::metropolis(&TopologySpec::Ring, 4);
    let plan = common::corollary1_plan(&problem, w.lambda());
    let init = InitState::identical(&problem, &common::gaussian_x(2, 0.4, 61));
    let horizon = 12_000usize;
    let tail_start = horizon - horizon / 5;
    let mut plateaus = Vec::new();
    for batch in [1usize, 4, 16] {
        let mut plateau = 0.0;
        for seed in 0..10u64 {
            let settings = RunSettings {
                iterations: horizon,
                record_every: 1,
                sigma: 0.5,
                batch,
                seed: 1000 + seed,
            };
            let out =
                run(AlgorithmKind::Dsgta, &problem, Some(&w), &plan, &settings, &init).unwrap();
            let tail: Vec<f64> = out
                .records
                .iter()
                .filter(|r| r.t >= tail_start)
                .filter_map(|r| r.grad_phi_norm_sq)
                .collect();
            plateau += tail.iter().sum::<f64>() / tail.len() as f64;
        }
        plateaus.push(plateau / 10.0);
    }
    assert!(
        plateaus[0] > plateaus[1] && plateaus[1] > plateaus[2],
        "plateaus not monotone in batch size: {plateaus:?}"
    );
    let ratio = plateaus[0] / plateaus[2];
    assert!(
        (4.0..=64.0).contains(&ratio),
        "b=1 to b=16 plateau ratio {ratio:.2} outside [4, 64]: {plateaus:?}"
    );
    pass(
        6,
        "stochastic floor scaling",
        format!(
            "plateaus b=1/4/16: {:.3e}/{:.3e}/{:.3e}, ratio {ratio:.1} in [4, 64]",
            plateaus[0], plateaus[1], plateaus[2]
        ),
    );
}

/// Criterion 7: with horizon-dependent unit-batch stepsizes the averaged
/// stationarity decays with log-log slope at most -0.4 over
/// T in {1e3, 1e4, 1e5} (10 seeds).
#[test]
fn criterion_07_unit_batch_rate() {
    let mut problem = common::isotropic_quadratic(4, 2, 1.4, 0.75, 60.0, 70);
    problem.certify_phi_star(3.0, 8, 300, 70);
    let w = common::metropolis(&TopologySpec::Ring, 4);
    let init = InitState::identical(&problem, &common::gaussian_x(2, 0.4, 71));
    let x_mean: Array1<f64> = init.x0.row(0).to_owned();
    let (phi0, _) = phi_and_grad(&problem, &x_mean.view()).unwrap();
    let initial_gap = (phi0 - problem.phi_star().unwrap()).max(1e-6);
    let sigma = 0.5;

    let mut points = Vec::new();
    for horizon in [1_000usize, 10_000, 100_000] {
        let constants = RateConstants::new(
            problem.constants(),
            w.lambda(),
            sigma,
            initial_gap,
            4,
            horizon,
        )
        .unwrap();
        let plan = StepsizePlan::corollary2_b1(&constants).unwrap();
        assert_eq!(plan.regime, Regime::Corollary2B1);
        assert!(
            plan.slack.iter().all(|s| s.satisfied),
            "T={horizon}: constraint set violated: {:?}",
            plan.slack
        );
        let mut avg = 0.0;
        for seed in 0..10u64 {
            let settings = RunSettings {
                iterations: horizon,
                record_every: 1,
                sigma,
                batch: 1,
                seed: 2000 + seed,
            };
            let out =
                run(AlgorithmKind::Dsgta, &problem, Some(&w), &plan, &settings, &init).unwrap();
            avg += averaged_grad_phi_sq(&out.records, horizon).unwrap();
        }
        points.push(RatePoint { horizon, averaged_metric: avg / 10.0 });
    }
    let slope = log_log_slope(&points);
    assert!(slope <= -0.4, "slope {slope:.3} > -0.4; points {points:?}");
    pass(7, "unit-batch rate", format!("log-log slope {slope:.3} <= -0.4"));
}

/// Criterion 8: iterations to reach a 1e-4 stationarity threshold are
/// ordered by spectral gap: complete <= grid <= ring on 16 agents.
#[test]
fn criterion_08_topology_monotonicity() {
    let problem = common::isotropic_quadratic(16, 2, 1.4, 0.75, 5.0, 80);
    let init = InitState::identical(&problem, &common::gaussian_x(2, 0.3, 81));
    let mut iteration_counts = Vec::new();
    let mut lambdas = Vec::new();
    for (spec, cap) in [
        (TopologySpec::Complete, 100_000usize),
        (TopologySpec::Grid { rows: 4, cols: 4 }, 400_000),
        (TopologySpec::Ring, 1_000_000),
    ] {
        let w = common::metropolis(&spec, 16);
        lambdas.push(w.lambda());
        let plan = common::corollary1_plan(&problem, w.lambda());
        let mut state = dgta_init(&problem, &init).unwrap();
        let mut reached = None;
        for t in 0..=cap {
            let x_mean = state.x_mean();
            let (_, grad) = phi_and_grad(&problem, &x_mean.view()).unwrap();
            if grad.dot(&grad) <= 1e-4 {
                reached = Some(t);
                break;
            }
            state = dgta_step(&state, &problem, &w, &plan);
        }
        let t = reached.unwrap_or_else(|| panic!("{spec:?} did not reach 1e-4 within {cap}"));
        iteration_counts.push(t);
    }
    assert!(lambdas[0] < lambdas[1] && lambdas[1] < lambdas[2], "lambda ordering {lambdas:?}");
    assert!(
        iteration_counts[0] <= iteration_counts[1] && iteration_counts[1] <= iteration_counts[2],
        "iteration counts not ordered: {iteration_counts:?}"
    );
    pass(
        8,
        "topology monotonicity",
        format!(
            "iterations complete/grid/ring: {}/{}/{} (lambda {:.3}/{:.3}/{:.3})",
            iteration_counts[0],
            iteration_counts[1],
            iteration_counts[2],
            lambdas[0],
            lambdas[1],
            lambdas[2]
        ),
    );
}

/// Criterion 9: at equal gradient budget and equal stepsizes, the
/// single-loop method ends at a function value no worse than the three-step
/// inner-loop baseline on the robust logistic instance, for at least 2 of 3
/// seeds.
#[test]
fn criterion_09_inner_loop_baseline_comparison() {
    let problem = common::wrm_toy(4, 90);
    let w = common::metropolis(&TopologySpec::Ring, 4);
    let constants =
        RateConstants::new(problem.constants(), w.lambda(), 0.0, 1.0, 4, 1).unwrap();
    let plan = StepsizePlan::manual(0.01, 0.01, 1, &constants);
    let inner_steps = 3usize;
    // equal per-agent budget: 2 evals/step vs inner_steps + 1 evals/step
    let budget = 4800usize;
    let dgta_iters = budget / 2;
    let gtda_iters = budget / (inner_steps + 1);

    let mut wins = 0;
    let mut detail = String::new();
    for seed in [91u64, 92, 93] {
        let init = InitState::identical(&problem, &common::gaussian_x(2, 0.4, seed));

        let mut a = dgta_init(&problem, &init).unwrap();
        for _ in 0..dgta_iters {
            a = dgta_step(&a, &problem, &w, &plan);
        }
        let mut b = dgta_init(&problem, &init).unwrap();
        for _ in 0..gtda_iters {
            b = gtda_step(&b, &problem, &w, &plan, inner_steps);
        }
        assert_eq!(a.oracle_calls, b.oracle_calls, "budgets must match");

        let phi_a = phi_value_at(&problem, &a.x_mean());
        let phi_b = phi_value_at(&problem, &b.x_mean());
        if phi_a <= phi_b {
            wins += 1;
        }
        detail.push_str(&format!("seed {seed}: {phi_a:.6} vs {phi_b:.6}; "));
    }
    assert!(wins >= 2, "single-loop won only {wins}/3: {detail}");
    pass(9, "inner-loop baseline comparison", format!("{wins}/3 seeds ({detail})"));
}

fn phi_value_at(problem: &dyn ProblemInstance, x: &Array1<f64>) -> f64 {
    minimax_net::verify::phi_value(problem, &x.view()).unwrap()
}

/// Criterion 10: the exhaustive grid argmax agrees with the closed-form
/// best response within `resolution * sqrt(d_i)` on 50 random pairs, and the
/// grid-evaluated `Phi` matches the closed form within grid-induced error.
#[test]
fn criterion_10_oracle_equivalence() {
    use minimax_net::problems::{QuadraticSaddle, QuadraticSaddleParams};
    let problem = QuadraticSaddle::generate(&QuadraticSaddleParams {
        agents: 4,
        dim_x: 4,
        dim_y: 2,
        radius: 2.0,
        seed: 44,
        phi_margin: None,
        ..QuadraticSaddleParams::default()
    });
    let resolution = 2e-3;
    let bound = resolution * (2.0_f64).sqrt();
    let mu = problem.mu();
    let mut worst: f64 = 0.0;
    for trial in 0..50 {
        let agent = trial % 4;
        let x = common::gaussian_x(4, 0.5, 500 + trial as u64);
        assert!(
            problem.all_best_responses_interior(&x.view(), 1e-6),
            "trial {trial}: configured radius keeps responses interior"
        );
        let best = problem.best_response(agent, &x.view()).unwrap();
        let grid = grid_best_response(&problem, agent, &x.view(), resolution).unwrap();
        let dist = (&grid - &best).iter().map(|v| v * v).sum::<f64>().sqrt();
        worst = worst.max(dist);
        assert!(dist <= bound, "trial {trial}: grid argmax off by {dist:.3e} > {bound:.3e}");
    }

    // grid-evaluated Phi vs the interior closed form
    let mut worst_phi: f64 = 0.0;
    for trial in 0..5 {
        let x = common::gaussian_x(4, 0.5, 900 + trial);
        let mut phi_grid = 0.0;
        for agent in 0..4 {
            let grid = grid_best_response(&problem, agent, &x.view(), resolution).unwrap();
            phi_grid += problem.eval(agent, &x.view(), &grid.view()) / 4.0;
        }
        let phi_closed = problem.closed_form_phi_interior(&x.view());
        // the grid undershoots by at most the isotropic curvature over half a cell
        let allowed = 0.5 * mu * (0.5 * bound) * (0.5 * bound) + 1e-12;
        let gap = phi_closed - phi_grid;
        worst_phi = worst_phi.max(gap.abs());
        assert!(
            (-1e-12..=allowed).contains(&gap),
            "trial {trial}: phi gap {gap:.3e} outside [0, {allowed:.3e}]"
        );
    }
    pass(
        10,
        "oracle equivalence",
        format!("worst argmax distance {worst:.3e} <= {bound:.3e}; worst phi gap {worst_phi:.3e}"),
    );
}

/// Criterion 11: a 10x violation of the stepsize cap is caught by at least
/// one per-step checker (the checkers are not vacuous).
#[test]
fn criterion_11_negative_stepsize_test() {
    let problem = common::default_quadratic(4, 7);
    let w = common::metropolis(&TopologySpec::Ring, 4);
    let compliant = common::corollary1_plan(&problem, w.lambda());
    let constants =
        RateConstants::new(problem.constants(), w.lambda(), 0.0, 1.0, 4, 1).unwrap();
    // 10x the tightest cap on eta_x
    let cap = minimax_net::stepsize::check_constraints(&compliant, &constants)
        .iter()
        .filter(|s| s.name.starts_with("eta_x"))
        .map(|s| s.margin + compliant.eta_x)
        .fold(f64::INFINITY, f64::min);
    let adversarial = StepsizePlan::manual(10.0 * cap, compliant.eta_y, 1, &constants);
    assert!(adversarial.slack.iter().any(|s| !s.satisfied));

    let init = InitState::spread(&problem, &common::gaussian_x(4, 0.5, 31), 0.4, 32);
    let trace = deterministic_trace(&problem, &w, &adversarial, 1_000, &init).unwrap();
    let ctx =
        CheckContext { constants: problem.constants(), agents: 4, lambda: w.lambda() };
    let reports = deterministic_check_suite(&trace, &adversarial, &ctx, DEFAULT_TOLERANCE).unwrap();
    let violated: Vec<&str> =
        reports.iter().filter(|r| !r.passed).map(|r| r.name).collect();
    assert!(
        !violated.is_empty(),
        "no checker caught a 10x stepsize violation; margins: {:?}",
        reports.iter().map(|r| (r.name, r.min_margin)).collect::<Vec<_>>()
    );
    pass(11, "negative stepsize test", format!("violations reported by {violated:?}"));
}
