use mottsim::analysis::*;
use mottsim::dynamics::TimeGrid;
use mottsim::hilbert::{Channel, LatticeSpec};
use mottsim::states::Excitation;
use std::time::Instant;

fn main() {
    let which = std::env::args().nth(1).unwrap_or_else(|| "c6".into());
    match which.as_str() {
        "c6" => c6(),
        "c5" => c5(),
        _ => {}
    }
}

fn c6() {
    // criterion 6 calibration: L=5, U/J=100, holon at 2J vs doublon at J
    let template = LatticeSpec { interaction: 100.0, ..LatticeSpec::chain(5) };
    let t_max = 0.7;
    let grid = TimeGrid::with_default_dt(t_max, &template, 16).unwrap();
    println!("grid: dt={} steps={}", grid.dt, grid.n_steps());

    let loss_rates = [0.0, 0.2, 0.4, 0.6, 0.8, 1.0, 1.2, 1.6, 2.0, 2.5, 3.0];
    for protocol in [Excitation::Doublon, Excitation::Holon] {
        let start = Instant::now();
        let scan = scan_dissipation(protocol, &template, Channel::Loss, &loss_rates, &grid).unwrap();
        print!("{protocol} loss: ");
        for p in &scan.points {
            print!("({}, {:.6}{}) ", p.rate, p.outcome.height(),
                if p.outcome.peak().is_none() { "*" } else { "" });
        }
        println!("  [{:.1}s]", start.elapsed().as_secs_f64());
    }
    let deph_rates = [0.0, 0.2, 0.4, 0.6, 0.8, 1.0, 1.2];
    let mut heights = Vec::new();
    for protocol in [Excitation::Doublon, Excitation::Holon] {
        let scan = scan_dissipation(protocol, &template, Channel::Dephasing, &deph_rates, &grid).unwrap();
        print!("{protocol} deph: ");
        for p in &scan.points {
            print!("({}, {:.6}) ", p.rate, p.outcome.height());
        }
        println!();
        heights.push(scan.points.iter().map(|p| p.outcome.height()).collect::<Vec<_>>());
    }
    for (k, rate) in deph_rates.iter().enumerate() {
        let (d, h) = (heights[0][k], heights[1][k]);
        println!("deph rate {rate}: doublon {d:.6} holon {h:.6} rel dev {:.4}", (d - h).abs() / d);
    }
}

fn c5() {
    // criterion 5: one (protocol, U) pair at L=13 with timing
    let u: f64 = std::env::args().nth(2).map(|s| s.parse().unwrap()).unwrap_or(33.3);
    let proto = match std::env::args().nth(3).as_deref() {
        Some("holon") => Excitation::Holon,
        _ => Excitation::Doublon,
    };
    let spec = LatticeSpec { interaction: u, ..LatticeSpec::chain(13) };
    let t_max = recommended_t_max(&spec, proto, 4);
    let dt = TimeGrid::default_dt(&spec);
    let stride = ((0.015 / dt).round() as usize).max(1);
    let grid = TimeGrid::new(t_max, dt, stride).unwrap();
    println!("U={u} {proto}: t_max={t_max:.3} dt={dt:.5} stride={stride} steps={}", grid.n_steps());
    let start = Instant::now();
    let result = propagation_experiment(proto, &spec, &SolverChoice::Pure, &[1, 2, 3, 4], &grid, false).unwrap();
    for (r, o) in &result.peaks {
        match o.peak() {
            Some(p) => println!("  r={r}: t={:.4} N={:.5}", p.t_peak, p.n_peak),
            None => println!("  r={r}: NO PEAK (max {:.6})", o.height()),
        }
    }
    let v_formula = match proto {
        Excitation::Doublon => v_max_doublon(u, 1.0).unwrap(),
        Excitation::Holon => v_max_holon(u, 1.0).unwrap(),
    };
    if let Some(s) = &result.speed {
        println!("  speed {:.4} ± {:.4} vs formula {:.4} (dev {:.1}%)  [{:.1}s]",
            s.speed, s.uncertainty, v_formula, 100.0 * (s.speed - v_formula).abs() / v_formula,
            start.elapsed().as_secs_f64());
    } else {
        println!("  NO SPEED [{:.1}s]", start.elapsed().as_secs_f64());
    }
}
