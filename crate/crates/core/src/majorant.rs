//! Smallest concave majorant of a sampled function (upper convex hull).

use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Upper hull of a point set, kept as its vertices.
#[derive(Debug, Clone, PartialEq)]
pub struct ConcaveMajorant {
    /// Indices into the input of the hull vertices, increasing.
    pub vertices: Vec<usize>,
    /// Majorant value at every input abscissa.
    pub values: Vec<f64>,
}

impl ConcaveMajorant {
    /// Andrew's monotone chain on points with strictly increasing `y`.
    pub fn new(y: &[f64], h: &[f64]) -> Result<Self> {
        if y.len() != h.len() {
            return Err(Error::Alignment {
                left: y.len(),
                right: h.len(),
            });
        }
        if y.len() < 2 {
            return Err(Error::InsufficientData {
                needed: 2,
                got: y.len(),
            });
        }
        for i in 1..y.len() {
            if !(y[i] > y[i - 1]) {
                return Err(Error::Unsorted { index: i });
            }
        }
        let mut hull: Vec<usize> = Vec::with_capacity(y.len());
        for i in 0..y.len() {
            while hull.len() >= 2 {
                let o = hull[hull.len() - 2];
                let a = hull[hull.len() - 1];
                // drop `a` unless it lies strictly above the chord o -> i
                let cross = (y[a] - y[o]) * (h[i] - h[o]) - (h[a] - h[o]) * (y[i] - y[o]);
                if cross >= 0.0 {
                    hull.pop();
                } else {
                    break;
                }
            }
            hull.push(i);
        }
        let mut values = Vec::with_capacity(y.len());
        for seg in hull.windows(2) {
            let (i, j) = (seg[0], seg[1]);
            let slope = (h[j] - h[i]) / (y[j] - y[i]);
            for k in i..j {
                values.push(if k == i { h[i] } else { h[i] + slope * (y[k] - y[i]) });
            }
        }
        values.push(h[y.len() - 1]);
        Ok(Self {
            vertices: hull,
            values,
        })
    }
}

/// Majorant values on the input grid of `(y, H(y))` pairs.
pub fn discrete_concave_majorant(points: &[(f64, f64)]) -> Result<Vec<f64>> {
    let (y, h): (Vec<f64>, Vec<f64>) = points.iter().copied().unzip();
    ConcaveMajorant::new(&y, &h).map(|m| m.values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use proptest::prelude::*;

    #[test]
    fn concave_input_is_unchanged() {
        let y: Vec<f64> = (0..20).map(|i| i as f64 * 0.1).collect();
        let h: Vec<f64> = y.iter().map(|v| -(v - 0.7) * (v - 0.7)).collect();
        let m = ConcaveMajorant::new(&y, &h).unwrap();
        for (a, b) in m.values.iter().zip(&h) {
            assert!((a - b).abs() < 1e-15);
        }
        assert_eq!(m.vertices.len(), 20);
    }

    #[test]
    fn v_shape_becomes_chord() {
        let pts: Vec<(f64, f64)> = (0..=10).map(|i| (i as f64, (i as f64 - 5.0).abs())).collect();
        let w = discrete_concave_majorant(&pts).unwrap();
        for v in w {
            assert!((v - 5.0).abs() < 1e-15);
        }
    }

    #[test]
    fn rejects_unsorted_or_short_input() {
        assert!(matches!(
            discrete_concave_majorant(&[(0.0, 1.0), (0.0, 2.0)]),
            Err(Error::Unsorted { index: 1 })
        ));
        assert!(discrete_concave_majorant(&[(0.0, 1.0)]).is_err());
    }

    #[test]
    fn collinear_points_keep_endpoints_only() {
        let m = ConcaveMajorant::new(&[0.0, 1.0, 2.0], &[0.0, 1.0, 2.0]).unwrap();
        assert_eq!(m.vertices, vec![0, 2]);
        assert_eq!(m.values, vec![0.0, 1.0, 2.0]);
    }

    proptest! {
        #[test]
        fn majorant_is_smallest_concave_cover(
            steps in proptest::collection::vec(0.01f64..1.0, 2..60),
            hs in proptest::collection::vec(-5.0f64..5.0, 60),
        ) {
            let mut y = vec![0.0];
            for s in &steps {
                let last = *y.last().unwrap();
                y.push(last + s);
            }
            let h: Vec<f64> = hs[..y.len()].to_vec();
            let m = ConcaveMajorant::new(&y, &h).unwrap();
            let w = &m.values;
            for i in 0..y.len() {
                prop_assert!(w[i] >= h[i] - 1e-12);
            }
            for &v in &m.vertices {
                prop_assert!((w[v] - h[v]).abs() < 1e-12);
            }
            for i in 1..y.len() - 1 {
                let left = (w[i] - w[i - 1]) / (y[i] - y[i - 1]);
                let right = (w[i + 1] - w[i]) / (y[i + 1] - y[i]);
                prop_assert!(right <= left + 1e-9);
            }
            prop_assert_eq!(m.vertices[0], 0);
            prop_assert_eq!(*m.vertices.last().unwrap(), y.len() - 1);
        }
    }
}
