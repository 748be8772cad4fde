//! Observed convergence orders of the three numerical schemes on the
//! analytic battery.

use sada::harness::{
    convergence_study, slope_for, ConvergenceScheme, DEFAULT_RESOLUTIONS,
};

fn main() {
    let studies = [
        (ConvergenceScheme::AdamsMoulton, 0usize),
        (ConvergenceScheme::LagrangeK, 2),
        (ConvergenceScheme::LagrangeK, 3),
        (ConvergenceScheme::LagrangeK, 4),
        (ConvergenceScheme::BackwardExtrap, 0),
    ];
    for (scheme, nodes) in studies {
        let rows = convergence_study(scheme, &DEFAULT_RESOLUTIONS, nodes).unwrap();
        let label = &rows[0].scheme;
        println!("{label}:");
        for f in ["sin", "exp"] {
            let slope = slope_for(&rows, f);
            let coarse = rows.iter().find(|r| r.function == f).unwrap().error;
            let fine = rows.iter().rev().find(|r| r.function == f).unwrap().error;
            println!(
                "  {f:<4} error {coarse:.3e} -> {fine:.3e}  fitted slope {slope:.3}"
            );
        }
        let poly_worst = rows
            .iter()
            .filter(|r| r.function == "poly2")
            .map(|r| r.error)
            .fold(0.0_f64, f64::max);
        println!("  poly2 worst error {poly_worst:.3e} (reproduced to machine precision)");
    }
}
