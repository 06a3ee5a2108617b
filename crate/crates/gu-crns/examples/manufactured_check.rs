//! Sanity checks on the manufactured solution: the source terms satisfy the
//! governing equations at random points (finite-difference residuals), and
//! one forced run reports its final-time errors.

use gu_crns::verification as vf;

fn main() {
    let case = vf::manufactured_case();
    // Residual of the density equation at a few points by second-order
    // central differences.
    let h = 1e-5;
    let mut worst = 0.0f64;
    for (x, y, t) in [(0.31, 0.47, 0.9), (0.62, 0.18, 1.3), (0.85, 0.73, 0.4)] {
        let eta_t = ((case.eta)(x, y, t + h) - (case.eta)(x, y, t - h)) / (2.0 * h);
        let ue = (case.u)(x, y, t);
        let ge = [
            ((case.eta)(x + h, y, t) - (case.eta)(x - h, y, t)) / (2.0 * h),
            ((case.eta)(x, y + h, t) - (case.eta)(x, y - h, t)) / (2.0 * h),
        ];
        let lap_eta = ((case.eta)(x + h, y, t) - 2.0 * (case.eta)(x, y, t)
            + (case.eta)(x - h, y, t)
            + (case.eta)(x, y + h, t)
            - 2.0 * (case.eta)(x, y, t)
            + (case.eta)(x, y - h, t))
            / (h * h);
        let sg = (case.sigma)(x, y, t);
        let lap_c = ((case.c)(x + h, y, t) - 2.0 * (case.c)(x, y, t) + (case.c)(x - h, y, t)
            + (case.c)(x, y + h, t)
            - 2.0 * (case.c)(x, y, t)
            + (case.c)(x, y - h, t))
            / (h * h);
        let residual = eta_t + ue[0] * ge[0] + ue[1] * ge[1]
            - lap_eta
            - (sg[0] * ge[0] + sg[1] * ge[1])
            - (case.eta)(x, y, t) * lap_c
            - (case.f_eta)(x, y, t);
        worst = worst.max(residual.abs());
    }
    println!("density-equation forcing residual (fd oracle): {worst:.3e}");

    let errs = vf::manufactured_run(16, 0.05, 1.0, 1).expect("run");
    println!("forced run on a 16x16 grid, tau = 0.05, T = 1:");
    println!("  u     {:.6e}", errs.u);
    println!("  p     {:.6e}", errs.p);
    println!("  eta   {:.6e}", errs.eta);
    println!("  c     {:.6e}", errs.c);
    println!("  sigma {:.6e}", errs.sigma);
    println!("  max divergence residual {:.3e}", errs.max_div_residual);
}
