use mottsim::analysis::*;
use mottsim::dynamics::TimeGrid;
use mottsim::hilbert::LatticeSpec;
use mottsim::states::Excitation;

fn main() {
    let closed = LatticeSpec { interaction: 100.0, hopping: 2.0, ..LatticeSpec::chain(5) };
    let grid = TimeGrid::with_default_dt(0.7, &closed, 16).unwrap();
    let base = propagation_experiment(Excitation::Holon, &closed, &SolverChoice::Exact, &[1], &grid, false).unwrap();
    let t_star = base.peaks[0].1.peak().unwrap().t_peak;
    println!("closed holon arrival t* = {t_star:.4}");
    for gamma in [0.6, 0.8, 1.0, 1.2] {
        let spec = LatticeSpec { loss_rate: gamma, ..closed.clone() };
        let result = propagation_experiment(Excitation::Holon, &spec, &SolverChoice::Exact, &[1], &grid, false).unwrap();
        println!("--- gamma={gamma}: samples in [{:.3}, {:.3}] ---", t_star - 0.08, t_star + 0.12);
        for (t, n) in result.traces[0].samples.iter() {
            if *t >= t_star - 0.08 && *t <= t_star + 0.12 && *n != 0.0 {
                println!("  t={t:.4} N={n:.3e}");
            }
        }
        let nonzero = result.traces[0].samples.iter()
            .filter(|(t, n)| *t >= t_star - 0.08 && *t <= t_star + 0.12 && *n != 0.0).count();
        let total = result.traces[0].samples.iter()
            .filter(|(t, _)| *t >= t_star - 0.08 && *t <= t_star + 0.12).count();
        println!("  nonzero {nonzero}/{total}");
    }
}
