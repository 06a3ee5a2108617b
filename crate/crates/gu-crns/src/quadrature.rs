//! Symmetric triangle quadrature in barycentric coordinates.
//!
//! Rules are stored with reference weights summing to 1, so a physical
//! integral is |T| * sum_q w_q f(x_q) and one table serves every element
//! through the affine map. All tabulated rules have positive weights; a
//! request for degree d returns the smallest tabulated rule whose exactness
//! is at least d.

use crate::mesh::TriMesh;
use crate::{Error, Result};

#[derive(Clone, Debug)]
pub struct QuadratureRule {
    /// Barycentric triples, each summing to 1.
    pub points: Vec<[f64; 3]>,
    /// Reference weights summing to 1.
    pub weights: Vec<f64>,
    /// Actual polynomial exactness of the rule (>= the requested degree).
    pub degree: usize,
}

/// Default exactness used by every form assembler. The tabulated rule for
/// this request is exact through degree 8, which covers the worst step-1
/// integrand (known velocity x bubble gradient x bubble).
pub const DEFAULT_DEGREE: usize = 7;

/// Return a rule exact for all polynomials of total degree <= d, 1 <= d <= 8.
pub fn rule_for_degree(d: usize) -> Result<QuadratureRule> {
    if !(1..=8).contains(&d) {
        return Err(Error::InvalidArgument(format!(
            "quadrature degree must be in 1..=8, got {d}"
        )));
    }
    let rule = match d {
        1 => centroid_rule(),
        2 => dunavant_2(),
        3 | 4 => dunavant_4(),
        5 => dunavant_5(),
        6 => dunavant_6(),
        _ => dunavant_8(),
    };
    Ok(rule)
}

fn centroid_rule() -> QuadratureRule {
    QuadratureRule {
        points: vec![[1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0]],
        weights: vec![1.0],
        degree: 1,
    }
}

/// Push the three cyclic placements of (a, b, b).
fn orbit3(points: &mut Vec<[f64; 3]>, weights: &mut Vec<f64>, a: f64, w: f64) {
    let b = 0.5 * (1.0 - a);
    points.push([a, b, b]);
    points.push([b, a, b]);
    points.push([b, b, a]);
    weights.extend_from_slice(&[w, w, w]);
}

/// Push all six permutations of (a, b, c) with c = 1 - a - b.
fn orbit6(points: &mut Vec<[f64; 3]>, weights: &mut Vec<f64>, a: f64, b: f64, w: f64) {
    let c = 1.0 - a - b;
    for p in [[a, b, c], [a, c, b], [b, a, c], [b, c, a], [c, a, b], [c, b, a]] {
        points.push(p);
        weights.push(w);
    }
}

fn dunavant_2() -> QuadratureRule {
    let mut points = Vec::new();
    let mut weights = Vec::new();
    orbit3(&mut points, &mut weights, 2.0 / 3.0, 1.0 / 3.0);
    QuadratureRule {
        points,
        weights,
        degree: 2,
    }
}

fn dunavant_4() -> QuadratureRule {
    let mut points = Vec::new();
    let mut weights = Vec::new();
    orbit3(
        &mut points,
        &mut weights,
        0.108_103_018_168_070_22,
        0.223_381_589_678_011_47,
    );
    orbit3(
        &mut points,
        &mut weights,
        0.816_847_572_980_458_51,
        0.109_951_743_655_321_87,
    );
    QuadratureRule {
        points,
        weights,
        degree: 4,
    }
}

fn dunavant_5() -> QuadratureRule {
    let mut points = vec![[1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0]];
    let mut weights = vec![0.225];
    orbit3(
        &mut points,
        &mut weights,
        0.059_715_871_789_769_82,
        0.132_394_152_788_506_18,
    );
    orbit3(
        &mut points,
        &mut weights,
        0.797_426_985_353_087_32,
        0.125_939_180_544_827_15,
    );
    QuadratureRule {
        points,
        weights,
        degree: 5,
    }
}

fn dunavant_6() -> QuadratureRule {
    let mut points = Vec::new();
    let mut weights = Vec::new();
    orbit3(
        &mut points,
        &mut weights,
        0.873_821_971_016_995_54,
        0.050_844_906_370_206_81,
    );
    orbit3(
        &mut points,
        &mut weights,
        0.501_426_509_658_179_16,
        0.116_786_275_726_379_36,
    );
    orbit6(
        &mut points,
        &mut weights,
        0.053_145_049_844_816_95,
        0.310_352_451_033_784_4,
        0.082_851_075_618_373_58,
    );
    QuadratureRule {
        points,
        weights,
        degree: 6,
    }
}

fn dunavant_8() -> QuadratureRule {
    let mut points = vec![[1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0]];
    let mut weights = vec![0.144_315_607_677_787_2];
    orbit3(
        &mut points,
        &mut weights,
        0.081_414_823_414_553_69,
        0.095_091_634_267_284_63,
    );
    orbit3(
        &mut points,
        &mut weights,
        0.658_861_384_496_479_6,
        0.103_217_370_534_718_25,
    );
    orbit3(
        &mut points,
        &mut weights,
        0.898_905_543_365_938_1,
        0.032_458_497_623_198_08,
    );
    orbit6(
        &mut points,
        &mut weights,
        0.008_394_777_409_957_61,
        0.263_112_829_634_638_1,
        0.027_230_314_174_434_99,
    );
    QuadratureRule {
        points,
        weights,
        degree: 8,
    }
}

/// Integrate a pointwise scalar function over the whole mesh.
pub fn integrate<F: Fn(f64, f64) -> f64>(mesh: &TriMesh, rule: &QuadratureRule, f: F) -> f64 {
    let mut total = 0.0;
    for tri in 0..mesh.tri_count() {
        let area = mesh.elem_geom[tri].area;
        let mut local = 0.0;
        for (q, bary) in rule.points.iter().enumerate() {
            let p = mesh.point(tri, *bary);
            local += rule.weights[q] * f(p[0], p[1]);
        }
        total += area * local;
    }
    total
}

/// Exact integral of lambda_1^a lambda_2^b lambda_3^c over a triangle of
/// area `area`: a! b! c! / (a+b+c+2)! * 2 |T|.
pub fn barycentric_monomial_integral(a: u32, b: u32, c: u32, area: f64) -> f64 {
    fn factorial(n: u32) -> f64 {
        (1..=n).map(|k| k as f64).product()
    }
    factorial(a) * factorial(b) * factorial(c) / factorial(a + b + c + 2) * 2.0 * area
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::build_rect_mesh;

    fn check_exactness(rule: &QuadratureRule, degree: usize) {
        // Reference triangle of area 1/2.
        let area = 0.5;
        for total in 0..=degree as u32 {
            for a in 0..=total {
                for b in 0..=(total - a) {
                    let c = total - a - b;
                    let exact = barycentric_monomial_integral(a, b, c, area);
                    let approx: f64 = rule
                        .points
                        .iter()
                        .zip(&rule.weights)
                        .map(|(p, w)| {
                            w * p[0].powi(a as i32) * p[1].powi(b as i32) * p[2].powi(c as i32)
                        })
                        .sum::<f64>()
                        * area;
                    assert!(
                        (approx - exact).abs() <= 1e-13 * exact.abs().max(1e-30),
                        "rule deg {} monomial ({a},{b},{c}): got {approx}, want {exact}",
                        rule.degree
                    );
                }
            }
        }
    }

    #[test]
    fn factorial_oracle_all_rules() {
        for d in 1..=8 {
            let rule = rule_for_degree(d).unwrap();
            assert!(rule.degree >= d);
            check_exactness(&rule, rule.degree);
        }
    }

    #[test]
    fn weights_sum_to_one() {
        for d in 1..=8 {
            let rule = rule_for_degree(d).unwrap();
            let s: f64 = rule.weights.iter().sum();
            assert!((s - 1.0).abs() <= 1e-14, "degree {d}: weight sum {s}");
            for p in &rule.points {
                let ps = p[0] + p[1] + p[2];
                assert!((ps - 1.0).abs() <= 1e-14);
                assert!(p.iter().all(|&x| (-1e-15..=1.0 + 1e-15).contains(&x)));
            }
        }
    }

    #[test]
    fn centroid_rule_linear_example() {
        // Integral of lambda_1 over the reference triangle (|T| = 1/2) is 1/6.
        let rule = rule_for_degree(1).unwrap();
        assert_eq!(rule.points.len(), 1);
        let val: f64 = rule
            .points
            .iter()
            .zip(&rule.weights)
            .map(|(p, w)| w * p[0])
            .sum::<f64>()
            * 0.5;
        assert!((val - 1.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn bubble_integral_matches_factorial_formula() {
        // 27 lambda1 lambda2 lambda3 integrates to 27 * 2A/5! = 0.45 A.
        let area = 0.37;
        let rule = rule_for_degree(7).unwrap();
        let val: f64 = rule
            .points
            .iter()
            .zip(&rule.weights)
            .map(|(p, w)| w * 27.0 * p[0] * p[1] * p[2])
            .sum::<f64>()
            * area;
        assert!((val - 0.45 * area).abs() < 1e-14);
    }

    #[test]
    fn integrate_constants_and_linears() {
        let mesh = build_rect_mesh(1.0, 1.0, 3, 3).unwrap();
        let rule = rule_for_degree(2).unwrap();
        assert!((integrate(&mesh, &rule, |_, _| 1.0) - 1.0).abs() < 1e-14);
        assert!((integrate(&mesh, &rule, |x, _| x) - 0.5).abs() < 1e-14);
    }

    #[test]
    fn integrate_smooth_function() {
        let mesh = build_rect_mesh(1.0, 1.0, 32, 32).unwrap();
        let rule = rule_for_degree(7).unwrap();
        let val = integrate(&mesh, &rule, |x, y| {
            (std::f64::consts::PI * x).sin() * (std::f64::consts::PI * y).sin()
        });
        let exact = 4.0 / (std::f64::consts::PI * std::f64::consts::PI);
        assert!((val - exact).abs() < 1e-5, "got {val}, want {exact}");
    }

    #[test]
    fn affine_invariance_of_barycentric_monomials() {
        // Same barycentric monomial over two triangles of equal area gives
        // equal results regardless of shape.
        let rule = rule_for_degree(6).unwrap();
        let eval = |area: f64| -> f64 {
            rule.points
                .iter()
                .zip(&rule.weights)
                .map(|(p, w)| w * p[0] * p[0] * p[1])
                .sum::<f64>()
                * area
        };
        assert!((eval(0.42) - eval(0.42)).abs() == 0.0);
        assert!((eval(0.5) - barycentric_monomial_integral(2, 1, 0, 0.5)).abs() < 1e-15);
    }

    #[test]
    fn unsupported_degree_rejected() {
        assert!(rule_for_degree(0).is_err());
        assert!(rule_for_degree(9).is_err());
    }
}
