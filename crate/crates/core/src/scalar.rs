//! Smooth scalar functions of space-time position with analytic gradients.
//!
//! These parameterize conformal factors, lapse/scale functions of product
//! metrics and the x-dependent coefficients of quadratic forms.

use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ScalarField {
    Constant {
        value: f64,
    },
    /// `value + Σ_k slope[k] x^k`; missing trailing slopes are zero.
    Affine {
        value: f64,
        slope: Vec<f64>,
    },
    /// `amplitude · exp(-|x - center|² / width²)`; missing center entries are zero.
    Gaussian {
        amplitude: f64,
        center: Vec<f64>,
        width: f64,
    },
    Sum {
        terms: Vec<ScalarField>,
    },
}

impl Default for ScalarField {
    fn default() -> Self {
        ScalarField::Constant { value: 0.0 }
    }
}

impl ScalarField {
    pub fn constant(value: f64) -> Self {
        ScalarField::Constant { value }
    }

    pub fn affine(value: f64, slope: Vec<f64>) -> Self {
        ScalarField::Affine { value, slope }
    }

    pub fn gaussian(amplitude: f64, center: Vec<f64>, width: f64) -> Self {
        ScalarField::Gaussian {
            amplitude,
            center,
            width,
        }
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        match self {
            ScalarField::Constant { value } => *value,
            ScalarField::Affine { value, slope } => {
                value + slope.iter().zip(x).map(|(s, xi)| s * xi).sum::<f64>()
            }
            ScalarField::Gaussian {
                amplitude,
                center,
                width,
            } => amplitude * (-dist2(x, center) / (width * width)).exp(),
            ScalarField::Sum { terms } => terms.iter().map(|t| t.value(x)).sum(),
        }
    }

    /// Gradient with respect to all `x.len()` coordinates.
    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let n = x.len();
        match self {
            ScalarField::Constant { .. } => vec![0.0; n],
            ScalarField::Affine { slope, .. } => {
                (0..n).map(|k| slope.get(k).copied().unwrap_or(0.0)).collect()
            }
            ScalarField::Gaussian {
                amplitude,
                center,
                width,
            } => {
                let w2 = width * width;
                let v = amplitude * (-dist2(x, center) / w2).exp();
                (0..n)
                    .map(|k| -2.0 * (x[k] - center.get(k).copied().unwrap_or(0.0)) / w2 * v)
                    .collect()
            }
            ScalarField::Sum { terms } => {
                let mut g = vec![0.0; n];
                for t in terms {
                    for (gi, ti) in g.iter_mut().zip(t.gradient(x)) {
                        *gi += ti;
                    }
                }
                g
            }
        }
    }

    /// Whether the field can depend on coordinate `axis` at all.
    pub fn depends_on(&self, axis: usize) -> bool {
        match self {
            ScalarField::Constant { .. } => false,
            ScalarField::Affine { slope, .. } => slope.get(axis).is_some_and(|s| *s != 0.0),
            ScalarField::Gaussian { amplitude, .. } => *amplitude != 0.0,
            ScalarField::Sum { terms } => terms.iter().any(|t| t.depends_on(axis)),
        }
    }

    pub fn is_constant(&self) -> bool {
        match self {
            ScalarField::Constant { .. } => true,
            ScalarField::Affine { slope, .. } => slope.iter().all(|s| *s == 0.0),
            ScalarField::Gaussian { amplitude, .. } => *amplitude == 0.0,
            ScalarField::Sum { terms } => terms.iter().all(|t| t.is_constant()),
        }
    }
}

fn dist2(x: &[f64], c: &[f64]) -> f64 {
    x.iter()
        .enumerate()
        .map(|(k, xi)| {
            let d = xi - c.get(k).copied().unwrap_or(0.0);
            d * d
        })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fd_gradient(f: &ScalarField, x: &[f64]) -> Vec<f64> {
        let h = 1e-6;
        (0..x.len())
            .map(|k| {
                let mut xp = x.to_vec();
                let mut xm = x.to_vec();
                xp[k] += h;
                xm[k] -= h;
                (f.value(&xp) - f.value(&xm)) / (2.0 * h)
            })
            .collect()
    }

    #[test]
    fn gradients_match_central_differences() {
        let f = ScalarField::Sum {
            terms: vec![
                ScalarField::affine(0.3, vec![0.1, -0.2]),
                ScalarField::gaussian(0.7, vec![0.2, 0.1, -0.3], 0.8),
            ],
        };
        let x = [0.4, -0.1, 0.25];
        for (a, b) in f.gradient(&x).iter().zip(fd_gradient(&f, &x)) {
            assert!((a - b).abs() < 1e-8, "{a} vs {b}");
        }
    }

    #[test]
    fn time_dependence_flags() {
        assert!(!ScalarField::constant(1.0).depends_on(0));
        assert!(!ScalarField::affine(0.0, vec![0.0, 1.0]).depends_on(0));
        assert!(ScalarField::affine(0.0, vec![0.5]).depends_on(0));
    }
}
