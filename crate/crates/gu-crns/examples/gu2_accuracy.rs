//! Richardson self-convergence of the second-order scheme: solutions at
//! tau, tau/2 and tau/4 on one mesh, order from the ratio of successive
//! differences. Spatial error cancels, so the temporal order shows cleanly.

use gu_crns::verification::gu2_self_convergence;

fn main() {
    println!("tau       observed temporal order");
    for tau in [0.1, 0.05, 0.025] {
        let order = gu2_self_convergence(16, tau, 0.4).expect("runs");
        println!("{tau:<8}  {order:.3}");
    }
}
