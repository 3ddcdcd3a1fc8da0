use nalgebra::Vector2;

/// Quadrature rule on the reference simplex `{(0,0), (1,0), (0,1)}`.
///
/// Weights sum to the reference area 1/2.
#[derive(Debug, Clone)]
pub struct QuadratureRule {
    pub points: Vec<Vector2<f64>>,
    pub weights: Vec<f64>,
    pub degree: usize,
}

impl QuadratureRule {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Fully symmetric 12-point rule, exact for polynomials of total degree 6.
    pub fn degree6() -> Self {
        // orbit weights normalized to unit area; barycentric generators
        const S21: [(f64, f64); 2] = [
            (0.116_786_275_726_379_366_03, 0.249_286_745_170_910_421_29),
            (0.050_844_906_370_206_816_921, 0.063_089_014_491_502_228_34),
        ];
        const S111: (f64, f64, f64) = (
            0.082_851_075_618_373_575_194,
            0.053_145_049_844_816_947_353,
            0.310_352_451_033_784_405_42,
        );

        let mut points = Vec::with_capacity(12);
        let mut weights = Vec::with_capacity(12);
        for (w, a) in S21 {
            let l = [1.0 - 2.0 * a, a, a];
            for k in 0..3 {
                points.push(Vector2::new(l[(k + 1) % 3], l[(k + 2) % 3]));
                weights.push(0.5 * w);
            }
        }
        let (w, b, c) = S111;
        let l = [b, c, 1.0 - b - c];
        for (i, j) in [(0, 1), (1, 0), (0, 2), (2, 0), (1, 2), (2, 1)] {
            points.push(Vector2::new(l[i], l[j]));
            weights.push(0.5 * w);
        }
        QuadratureRule {
            points,
            weights,
            degree: 6,
        }
    }
}
