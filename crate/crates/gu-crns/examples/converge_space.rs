//! Spatial accuracy of the discretization: second order for the density,
//! concentration and velocity, at least first order for the pressure.

use gu_crns::verification::{convergence_sweep, SweepAxis, SWEEP_VARS};

fn main() {
    let levels: Vec<(usize, f64)> = [4usize, 8, 16, 32].iter().map(|&n| (n, 1e-3)).collect();
    let report = convergence_sweep(SweepAxis::Space, &levels, 0.1, 1).expect("sweep");
    println!("variable  level  h          L2 error        rate");
    for var in SWEEP_VARS {
        for row in report.rows.iter().filter(|r| r.var == var) {
            let rate = row.rate.map(|r| format!("{r:.2}")).unwrap_or_else(|| "-".into());
            println!(
                "{var:8}  {:5}  {:<9.5}  {:.6e}  {rate}",
                row.level, row.h, row.error
            );
        }
    }
}
