use mottsim::analysis::*;
use mottsim::dynamics::TimeGrid;
use mottsim::hilbert::LatticeSpec;
use mottsim::states::Excitation;
use std::time::Instant;

fn front(spec: &LatticeSpec, proto: Excitation) -> f64 {
    match proto {
        Excitation::Doublon => v_max_doublon(spec.interaction, spec.hopping).unwrap(),
        Excitation::Holon => v_max_holon(spec.interaction, spec.hopping).unwrap(),
    }
}

fn main() {
    let total = Instant::now();
    for u in [10.0, 20.0, 33.3] {
        let mut speeds = Vec::new();
        for proto in [Excitation::Doublon, Excitation::Holon] {
            let spec = LatticeSpec { interaction: u, ..LatticeSpec::chain(13) };
            let t_max = recommended_t_max(&spec, proto, 4) + 0.7 / front(&spec, proto);
            let dt = 0.02 / 33.3f64.max(spec.interaction);
            let stride = ((0.0075 / dt).round() as usize).max(1);
            let grid = TimeGrid::new(t_max, dt, stride).unwrap();
            let start = Instant::now();
            let result = propagation_experiment(proto, &spec, &SolverChoice::Pure, &[1, 2, 3, 4], &grid, false).unwrap();
            let arrivals: Vec<(usize, f64)> = result.peaks.iter()
                .filter_map(|(r, o)| o.peak().map(|p| (*r, p.t_peak)))
                .collect();
            let v_formula = match proto {
                Excitation::Doublon => v_max_doublon(u, 1.0).unwrap(),
                Excitation::Holon => v_max_holon(u, 1.0).unwrap(),
            };
            let resolution = grid.dt * grid.save_stride as f64;
            let all = extract_speed(&arrivals, resolution).unwrap();
            let late: Vec<(usize, f64)> = arrivals.iter().copied().filter(|&(r, _)| r >= 2).collect();
            let late_fit = extract_speed(&late, resolution).unwrap();
            println!(
                "U={u} {proto}: arrivals {:?}", arrivals.iter().map(|(r,t)| format!("{r}:{t:.4}")).collect::<Vec<_>>());
            println!(
                "   all-r: v={:.4} dev {:.1}%   r>=2: v={:.4} dev {:.1}%   formula {:.4}   [{:.0}s]",
                all.speed, 100.0 * (all.speed - v_formula).abs() / v_formula,
                late_fit.speed, 100.0 * (late_fit.speed - v_formula).abs() / v_formula,
                v_formula, start.elapsed().as_secs_f64());
            speeds.push((all.speed, late_fit.speed));
        }
        println!("U={u}: ratio all-r {:.3}, r>=2 {:.3}", speeds[0].0 / speeds[1].0, speeds[0].1 / speeds[1].1);
    }
    println!("total {:.0}s", total.elapsed().as_secs_f64());
}
