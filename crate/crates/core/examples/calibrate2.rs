use mottsim::analysis::*;
use mottsim::dynamics::TimeGrid;
use mottsim::hilbert::LatticeSpec;
use mottsim::states::Excitation;

fn main() {
    // holon at 2J under strong loss: where does the leftover negativity live?
    for gamma in [0.4, 0.6, 0.8] {
        let spec = LatticeSpec {
            interaction: 100.0,
            hopping: 2.0,
            loss_rate: gamma,
            ..LatticeSpec::chain(5)
        };
        let grid = TimeGrid::with_default_dt(0.7, &spec, 16).unwrap();
        let result = propagation_experiment(
            Excitation::Holon, &spec, &SolverChoice::Exact, &[1], &grid, false).unwrap();
        let trace = &result.traces[0];
        println!("--- holon gamma={gamma} ---");
        let mut zeros = 0;
        for (t, n) in trace.samples.iter() {
            if *n == 0.0 { zeros += 1; }
            if *n > 2e-5 { println!("  t={t:.4} N={n:.6}"); }
        }
        println!("  exact zeros: {zeros}/{}", trace.samples.len());
    }
    // doublon reference at same gammas
    for gamma in [0.6, 0.8] {
        let spec = LatticeSpec {
            interaction: 100.0,
            loss_rate: gamma,
            ..LatticeSpec::chain(5)
        };
        let grid = TimeGrid::with_default_dt(0.7, &spec, 16).unwrap();
        let result = propagation_experiment(
            Excitation::Doublon, &spec, &SolverChoice::Exact, &[1], &grid, false).unwrap();
        let p = result.peaks[0].1.peak().unwrap();
        println!("doublon gamma={gamma}: peak t={:.4} N={:.6}", p.t_peak, p.n_peak);
    }
}
