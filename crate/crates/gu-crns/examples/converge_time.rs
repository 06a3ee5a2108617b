//! Temporal accuracy of the first-order scheme against the manufactured
//! solution: halving the time step should halve every error (desk-scale
//! version; the acceptance suite runs the full nx = 64 sweep).

use gu_crns::verification::{convergence_sweep, SweepAxis, SWEEP_VARS};

fn main() {
    let levels: Vec<(usize, f64)> = [0.25, 0.125, 0.0625]
        .iter()
        .map(|&tau| (32usize, tau))
        .collect();
    let report = convergence_sweep(SweepAxis::Time, &levels, 1.0, 1).expect("sweep");
    println!("variable  level  tau        L2 error        rate");
    for var in SWEEP_VARS {
        for row in report.rows.iter().filter(|r| r.var == var) {
            let rate = row.rate.map(|r| format!("{r:.2}")).unwrap_or_else(|| "-".into());
            println!(
                "{var:8}  {:5}  {:<9}  {:.6e}  {rate}",
                row.level, row.tau, row.error
            );
        }
    }
    println!("max divergence residual over the sweep: {:.3e}", report.max_div_residual);
}
