// scratch calibration runs for the bundled scenarios (dev only)
use nalgebra::{DMatrix, DVector};
use nashseek::control::{ControllerConfig, InitialEstimates, Law, SignMode};
use nashseek::game::CertifyMethod;
use nashseek::graph::Timeline;
use nashseek::plant::{DisturbanceKind, DisturbanceSpec, PlantSpec, Regressor};
use nashseek::sim::{integrate, Integration, Method, Plant, Scenario};
use nashseek::{AnalysisConfig, GameSpec, SwitchingSchedule};
use nalgebra::Complex;

fn game3() -> GameSpec {
    let m = DMatrix::from_row_slice(3, 3, &[2.0, 1.0, 0.0, 1.0, 2.0, 1.0, 0.0, 1.0, 2.0]);
    let r = DVector::from_row_slice(&[-2.0, -2.0, -2.0]);
    GameSpec::linear_quadratic(vec![1, 1, 1], m, r).unwrap()
}

fn cyclic_schedule_w(w: f64) -> SwitchingSchedule {
    let edge = |to: usize, from: usize| {
        let mut g = DMatrix::zeros(3, 3);
        g[(to, from)] = w;
        g
    };
    SwitchingSchedule::new(
        vec![edge(1, 0), edge(2, 1), edge(0, 2)],
        Timeline::Periodic { order: vec![0, 1, 2], dwell: 1.0 },
        3.0,
    )
    .unwrap()
}

fn cyclic_schedule() -> SwitchingSchedule {
    cyclic_schedule_w(WEIGHT.with(|w| *w.borrow()))
}

thread_local! {
    static WEIGHT: std::cell::RefCell<f64> = const { std::cell::RefCell::new(2.0) };
}

fn set_weight(w: f64) {
    WEIGHT.with(|c| *c.borrow_mut() = w);
}

fn theorem2(delta: f64, horizon: f64) -> Scenario {
    let game = game3();
    let cert = game.certify(CertifyMethod::Exact).unwrap();
    let plants = (0..3)
        .map(|_| {
            Plant::new(
                PlantSpec::new(1, 1, Regressor::Zero, DVector::zeros(0), DisturbanceSpec::none())
                    .unwrap(),
                &[],
                None,
            )
            .unwrap()
        })
        .collect();
    let controller = ControllerConfig {
        law: Law::SingleIntegratorConsensus,
        delta,
        k: vec![1.0; 3],
        kappa: vec![],
        lambda: vec![],
        sign_mode: SignMode::Exact,
        init: InitialEstimates::default(),
    };
    Scenario::new(
        game,
        cert,
        cyclic_schedule(),
        plants,
        controller,
        Integration { step: 0.01, horizon, method: Method::Rk4, stride: 10 },
        AnalysisConfig::defaults_for(Law::SingleIntegratorConsensus),
    )
    .unwrap()
}

fn theorem3(delta: f64, kappa: f64, lambda: f64, horizon: f64) -> Scenario {
    let game = game3();
    let cert = game.certify(CertifyMethod::Exact).unwrap();
    let thetas = [1.5, -2.0, 0.7];
    let plants: Vec<Plant> = (0..3)
        .map(|i| {
            Plant::new(
                PlantSpec::new(
                    2,
                    1,
                    Regressor::SinOfState { scale: 1.0 },
                    DVector::from_element(1, thetas[i]),
                    DisturbanceSpec::none(),
                )
                .unwrap(),
                &[Complex::new(-1.0, 0.0)],
                Some(DVector::from_row_slice(&[0.0, 0.0])),
            )
            .unwrap()
        })
        .collect();
    let controller = ControllerConfig {
        law: Law::AdaptiveImperfect,
        delta,
        k: vec![1.0; 3],
        kappa: vec![kappa; 3],
        lambda: vec![DMatrix::from_element(1, 1, lambda); 3],
        sign_mode: SignMode::Exact,
        init: InitialEstimates::default(),
    };
    Scenario::new(
        game,
        cert,
        cyclic_schedule(),
        plants,
        controller,
        Integration { step: 0.01, horizon, method: Method::Rk4, stride: 10 },
        AnalysisConfig::defaults_for(Law::AdaptiveImperfect),
    )
    .unwrap()
}

fn theorem4(delta: f64, kappa: f64, lambda: f64, horizon: f64, h: f64, smoothed: Option<f64>) -> Scenario {
    let game = game3();
    let cert = game.certify(CertifyMethod::Exact).unwrap();
    let thetas = [1.5, -2.0, 0.7];
    let dists = [
        DisturbanceSpec::new(DisturbanceKind::SquareWave { amplitude: 1.5, period: 2.0 }, None).unwrap(),
        DisturbanceSpec::new(
            DisturbanceKind::Sinusoid { amplitude: 1.0, frequency: 0.5, phase: 0.3 },
            None,
        )
        .unwrap(),
        DisturbanceSpec::new(DisturbanceKind::SquareWave { amplitude: 2.0, period: 3.0 }, None).unwrap(),
    ];
    let plants: Vec<Plant> = (0..3)
        .map(|i| {
            Plant::new(
                PlantSpec::new(
                    2,
                    1,
                    Regressor::SinOfState { scale: 1.0 },
                    DVector::from_element(1, thetas[i]),
                    dists[i].clone(),
                )
                .unwrap(),
                &[Complex::new(-1.0, 0.0)],
                Some(DVector::from_row_slice(&[0.0, 0.0])),
            )
            .unwrap()
        })
        .collect();
    let controller = ControllerConfig {
        law: Law::AdaptiveDisturbanceRejection,
        delta,
        k: vec![1.0; 3],
        kappa: vec![kappa; 3],
        lambda: vec![DMatrix::from_element(1, 1, lambda); 3],
        sign_mode: smoothed.map(|e| SignMode::Smoothed { epsilon: e }).unwrap_or(SignMode::Exact),
        init: InitialEstimates::default(),
    };
    Scenario::new(
        game,
        cert,
        cyclic_schedule(),
        plants,
        controller,
        Integration {
            step: h,
            horizon,
            method: if smoothed.is_some() { Method::Rk4 } else { Method::Euler },
            stride: 10,
        },
        AnalysisConfig::defaults_for(Law::AdaptiveDisturbanceRejection),
    )
    .unwrap()
}

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let which = args.get(1).map(|s| s.as_str()).unwrap_or("t2");
    match which {
        "t2" => {
            for weight in [1.0, 2.0, 3.0, 5.0] {
            set_weight(weight);
            println!("--- edge weight {weight}");
            for delta in [0.05, 0.08, 0.1, 0.15, 0.2, 0.3] {
                let sc = theorem2(delta, 200.0);
                let t0 = std::time::Instant::now();
                let trace = integrate(&sc).unwrap();
                let ne = trace.terminal("dist_ne").unwrap();
                let cons = trace.terminal("cons_err").unwrap();
                println!(
                    "T2 delta={delta:<5} dist_ne(T)={ne:.3e} cons_err(T)={cons:.3e}  aborted={} ({:?})",
                    trace.aborted.is_some(),
                    t0.elapsed()
                );
            }
            }
        }
        "t3" => {
            for (delta, kappa, lambda) in [
                (0.03, 1.0, 2.0),
                (0.05, 1.0, 2.0),
                (0.05, 2.0, 5.0),
                (0.08, 2.0, 5.0),
                (0.1, 2.0, 5.0),
                (0.15, 2.0, 5.0),
            ] {
                let sc = theorem3(delta, kappa, lambda, 200.0);
                let t0 = std::time::Instant::now();
                let trace = integrate(&sc).unwrap();
                let g = trace.terminal("dist_ne_gamma").unwrap();
                let x = trace.terminal("dist_ne").unwrap();
                let z = trace.terminal("cons_err").unwrap();
                let v_rate =
                    nashseek::analysis::max_positive_increment_rate(&trace, "V2").unwrap();
                println!(
                    "T3 d={delta} kap={kappa} lam={lambda}: gamma={g:.3e} x={x:.3e} z={z:.3e} Vrate={v_rate:.3e} ({:?})",
                    t0.elapsed()
                );
            }
        }
        "t4" => {
            for (delta, kappa, lambda) in [(0.05, 2.0, 5.0), (0.08, 2.0, 5.0)] {
                let sc = theorem4(delta, kappa, lambda, 100.0, 1e-3, None);
                let t0 = std::time::Instant::now();
                let trace = integrate(&sc).unwrap();
                let x = trace.terminal("dist_ne").unwrap();
                let v_rate = nashseek::analysis::max_positive_increment_rate(&trace, "V").unwrap();
                let viol = nashseek::analysis::dhat_violations(&trace);
                let chat = trace.terminal("chatter_rate").unwrap();
                let dhat1 = trace.terminal("dhat_1").unwrap();
                let dhat3 = trace.terminal("dhat_3").unwrap();
                println!(
                    "T4 Euler d={delta} kap={kappa} lam={lambda}: x={x:.3e} Vrate={v_rate:.3e} viol={viol} chat={chat:.1} dhat1={dhat1:.2} dhat3={dhat3:.2} ({:?})",
                    t0.elapsed()
                );
            }
        }
        "t4h" => {
            // Euler h-halving of the V increment rate
            for h in [1e-3, 5e-4, 2.5e-4] {
                let mut sc = theorem4(0.05, 2.0, 5.0, 100.0, h, None);
                sc.integration.stride = 1; // increments measured step to step
                let trace = integrate(&sc).unwrap();
                let v_rate = nashseek::analysis::max_positive_increment_rate(&trace, "V").unwrap();
                let x = trace.terminal("dist_ne").unwrap();
                println!("T4 Euler h={h}: Vrate={v_rate:.4e} x={x:.3e}");
            }
        }
        "t3h" => {
            for h in [0.01, 0.005] {
                let mut sc = theorem3(0.05, 2.0, 5.0, 200.0);
                sc.integration.step = h;
                sc.integration.stride = 1;
                let trace = integrate(&sc).unwrap();
                let v_rate = nashseek::analysis::max_positive_increment_rate(&trace, "V2").unwrap();
                println!("T3 RK4 h={h}: V2rate={v_rate:.4e}");
            }
        }
        "neg" => {
            // negative control: node 3 isolated (edges only between 1 and 2)
            let game = game3();
            let cert = game.certify(CertifyMethod::Exact).unwrap();
            let edge = |to: usize, from: usize| {
                let mut g = DMatrix::zeros(3, 3);
                g[(to, from)] = 2.0;
                g
            };
            let schedule = SwitchingSchedule::new(
                vec![edge(1, 0), edge(0, 1)],
                Timeline::Periodic { order: vec![0, 1], dwell: 1.0 },
                3.0,
            )
            .unwrap();
            let jsc = nashseek::is_jointly_strongly_connected(&schedule);
            println!("JSC: {} ({})", jsc.holds, jsc.detail);
            let plants = (0..3)
                .map(|_| {
                    Plant::new(
                        PlantSpec::new(1, 1, Regressor::Zero, DVector::zeros(0), DisturbanceSpec::none()).unwrap(),
                        &[],
                        None,
                    )
                    .unwrap()
                })
                .collect();
            let controller = ControllerConfig {
                law: Law::SingleIntegratorConsensus,
                delta: 0.05,
                k: vec![1.0; 3],
                kappa: vec![],
                lambda: vec![],
                sign_mode: SignMode::Exact,
                init: InitialEstimates::default(),
            };
            let sc = Scenario::new(
                game, cert, schedule, plants, controller,
                Integration { step: 0.01, horizon: 200.0, method: Method::Rk4, stride: 10 },
                AnalysisConfig::defaults_for(Law::SingleIntegratorConsensus),
            )
            .unwrap();
            let trace = integrate(&sc).unwrap();
            // node 3's estimate of the full strategy vector
            let z3_err: f64 = {
                let z1 = trace.terminal("z_3_1").unwrap();
                let z2 = trace.terminal("z_3_2").unwrap();
                let z3 = trace.terminal("z_3_3").unwrap();
                ((z1 - 1.0f64).powi(2) + (z2 - 0.0).powi(2) + (z3 - 1.0).powi(2)).sqrt()
            };
            println!("isolated node 3 estimate error: {z3_err:.3e}");
        }
        "sweep" => {
            let sc = theorem2(0.05, 200.0);
            let grid: Vec<f64> = (0..13)
                .map(|i| 10f64.powf(-2.0 + 3.0 * i as f64 / 12.0))
                .collect();
            let map = nashseek::delta_sweep(&sc, &grid, nashseek::ExecMode::Parallel).unwrap();
            for row in &map.rows {
                println!("delta={:<10.4} class={} terminal={:.3e}", row.delta, row.class, row.terminal_ne_error);
            }
            println!("empirical delta* = {:?}", map.empirical_delta_star);
        }
        "t4s" => {
            for h in [5e-4, 2.5e-4] {
                let sc = theorem4(0.05, 2.0, 5.0, 100.0, h, Some(1e-3));
                let t0 = std::time::Instant::now();
                let trace = integrate(&sc).unwrap();
                let x = trace.terminal("dist_ne").unwrap();
                println!(
                    "T4 smoothed RK4 h={h}: x={x:.3e} aborted={} ({:?})",
                    trace.aborted.is_some(),
                    t0.elapsed()
                );
            }
        }
        _ => eprintln!("unknown probe"),
    }
}
