//! Symmetric quadrature on the reference triangle `(0,0), (1,0), (0,1)`.
//!
//! Degrees 1-6 and 8 use classical fully symmetric positive rules
//! (Dunavant; the 6-point Strang-Fix rule for degree 3, whose Dunavant
//! counterpart has a negative weight). Degree 7 reuses the degree-8 rule.
//! Degrees 9 and 10 are built from a collapsed Gauss-Legendre product rule
//! averaged over the six vertex permutations.

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct QuadratureRule {
    degree: usize,
    points: Vec<[f64; 3]>,
    weights: Vec<f64>,
}

impl QuadratureRule {
    pub fn new(degree: usize) -> Result<Self> {
        let (points, weights) = match degree {
            1 => orbit_rule(&[Orbit::S3(1.0)]),
            2 => orbit_rule(&[Orbit::S21(1.0 / 3.0, 1.0 / 6.0)]),
            3 => orbit_rule(&[Orbit::S111(
                1.0 / 6.0,
                0.659_027_622_374_092,
                0.231_933_368_553_031,
            )]),
            4 => orbit_rule(&[
                Orbit::S21(0.223_381_589_678_011, 0.445_948_490_915_965),
                Orbit::S21(0.109_951_743_655_322, 0.091_576_213_509_771),
            ]),
            5 => orbit_rule(&[
                Orbit::S3(0.225),
                Orbit::S21(0.132_394_152_788_506, 0.470_142_064_105_115),
                Orbit::S21(0.125_939_180_544_827, 0.101_286_507_323_456),
            ]),
            6 => orbit_rule(&[
                Orbit::S21(0.116_786_275_726_379, 0.249_286_745_170_910),
                Orbit::S21(0.050_844_906_370_207, 0.063_089_014_491_502),
                Orbit::S111(0.082_851_075_618_374, 0.053_145_049_844_817, 0.310_352_451_033_784),
            ]),
            7 | 8 => orbit_rule(&[
                Orbit::S3(0.144_315_607_677_787),
                Orbit::S21(0.095_091_634_267_285, 0.459_292_588_292_723),
                Orbit::S21(0.103_217_370_534_718, 0.170_569_307_751_760),
                Orbit::S21(0.032_458_497_623_198, 0.050_547_228_317_031),
                Orbit::S111(0.027_230_314_174_435, 0.008_394_777_409_958, 0.263_112_829_634_638),
            ]),
            9 | 10 => symmetrized_collapsed(degree),
            _ => return Err(Error::UnsupportedDegree(degree)),
        };
        Ok(Self {
            degree,
            points,
            weights,
        })
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    /// Barycentric coordinates of the points.
    pub fn points(&self) -> &[[f64; 3]] {
        &self.points
    }

    /// Weights; they sum to the reference area 1/2.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[f64; 3], f64)> {
        self.points.iter().zip(self.weights.iter().copied())
    }
}

/// Symmetry orbits; weights are normalised to a unit-area triangle.
enum Orbit {
    S3(f64),
    S21(f64, f64),
    S111(f64, f64, f64),
}

fn orbit_rule(orbits: &[Orbit]) -> (Vec<[f64; 3]>, Vec<f64>) {
    let mut pts = Vec::new();
    let mut wts = Vec::new();
    for o in orbits {
        match *o {
            Orbit::S3(w) => {
                pts.push([1.0 / 3.0; 3]);
                wts.push(w);
            }
            Orbit::S21(w, a) => {
                let b = 1.0 - 2.0 * a;
                for p in [[b, a, a], [a, b, a], [a, a, b]] {
                    pts.push(p);
                    wts.push(w);
                }
            }
            Orbit::S111(w, a, b) => {
                let c = 1.0 - a - b;
                for p in [[a, b, c], [a, c, b], [b, a, c], [b, c, a], [c, a, b], [c, b, a]] {
                    pts.push(p);
                    wts.push(w);
                }
            }
        }
    }
    // the tables carry ~15 significant digits; renormalise the sum exactly
    let s: f64 = wts.iter().sum();
    let wts = wts.into_iter().map(|w| 0.5 * w / s).collect();
    (pts, wts)
}

/// Gauss-Legendre nodes and weights on `[0, 1]`.
pub(crate) fn gauss_legendre_01(m: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; m];
    let mut w = vec![0.0; m];
    for i in 0..m {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (m as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=m {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            if m == 1 {
                p1 = z;
                p0 = 1.0;
            }
            dp = m as f64 * (z * p1 - p0) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = 0.5 * (1.0 - z);
        w[i] = 1.0 / ((1.0 - z * z) * dp * dp);
    }
    (x, w)
}

fn symmetrized_collapsed(degree: usize) -> (Vec<[f64; 3]>, Vec<f64>) {
    let m = (degree + 3) / 2;
    let (x, w) = gauss_legendre_01(m);
    let mut pts = Vec::with_capacity(6 * m * m);
    let mut wts = Vec::with_capacity(6 * m * m);
    for (i, &u) in x.iter().enumerate() {
        for (j, &v) in x.iter().enumerate() {
            let (px, py) = (u, (1.0 - u) * v);
            let wt = w[i] * w[j] * (1.0 - u) / 6.0;
            let l = [1.0 - px - py, px, py];
            for p in [
                [l[0], l[1], l[2]],
                [l[0], l[2], l[1]],
                [l[1], l[0], l[2]],
                [l[1], l[2], l[0]],
                [l[2], l[0], l[1]],
                [l[2], l[1], l[0]],
            ] {
                pts.push(p);
                wts.push(wt);
            }
        }
    }
    (pts, wts)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn factorial(n: u32) -> f64 {
        (1..=n).map(f64::from).product()
    }

    /// ∫_T x^a y^b over the reference triangle = a! b! / (a+b+2)!
    fn exact_monomial(a: u32, b: u32) -> f64 {
        factorial(a) * factorial(b) / factorial(a + b + 2)
    }

    #[test]
    fn exact_up_to_degree() {
        for d in 1..=10usize {
            let q = QuadratureRule::new(d).unwrap();
            for a in 0..=d as u32 {
                for b in 0..=(d as u32 - a) {
                    let approx: f64 = q
                        .iter()
                        .map(|(l, w)| w * l[1].powi(a as i32) * l[2].powi(b as i32))
                        .sum();
                    let exact = exact_monomial(a, b);
                    assert!(
                        (approx - exact).abs() < 1e-14,
                        "degree {d}: x^{a} y^{b} got {approx}, want {exact}"
                    );
                }
            }
        }
    }

    #[test]
    fn centroid_rule() {
        let q = QuadratureRule::new(1).unwrap();
        assert_eq!(q.len(), 1);
        assert!((q.weights()[0] - 0.5).abs() < 1e-16);
    }

    #[test]
    fn x2y2_is_one_over_180() {
        let q = QuadratureRule::new(4).unwrap();
        let v: f64 = q.iter().map(|(l, w)| w * l[1].powi(2) * l[2].powi(2)).sum();
        assert!((v - 1.0 / 180.0).abs() < 1e-15);
    }

    #[test]
    fn positive_weights_summing_to_half() {
        for d in 1..=10 {
            let q = QuadratureRule::new(d).unwrap();
            assert!(q.weights().iter().all(|&w| w > 0.0));
            assert!((q.weights().iter().sum::<f64>() - 0.5).abs() < 1e-15);
            for p in q.points() {
                assert!(p.iter().all(|&x| (0.0..=1.0).contains(&x)));
                assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn unsupported() {
        assert_eq!(QuadratureRule::new(0), Err(Error::UnsupportedDegree(0)));
        assert_eq!(QuadratureRule::new(11), Err(Error::UnsupportedDegree(11)));
    }
}
