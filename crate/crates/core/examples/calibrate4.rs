use mottsim::analysis::*;
use mottsim::dynamics::TimeGrid;
use mottsim::hilbert::LatticeSpec;
use mottsim::states::Excitation;

fn main() {
    let spec = LatticeSpec { interaction: 33.3, ..LatticeSpec::chain(13) };
    let t_max = recommended_t_max(&spec, Excitation::Holon, 4);
    let dt: f64 = 0.02 / 33.3;
    let stride = ((0.015 / dt).round() as usize).max(1);
    let grid = TimeGrid::new(t_max, dt, stride).unwrap();
    let result = propagation_experiment(Excitation::Holon, &spec, &SolverChoice::Pure, &[1, 2, 3, 4], &grid, false).unwrap();
    for trace in &result.traces {
        println!("--- r={} (guard {:.3}) ---", trace.r, reflection_guard(&spec, Excitation::Holon, trace.r));
        let mut prev = 0.0f64;
        let mut rising = false;
        for (t, n) in trace.samples.iter() {
            // print local maxima structure compactly
            if *n > prev { rising = true; }
            else if rising && prev > 1e-4 {
                println!("  local max near t={t:.3}: N={prev:.5}");
                rising = false;
            } else { rising = false; }
            prev = *n;
        }
    }
}
