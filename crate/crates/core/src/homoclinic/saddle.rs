use nalgebra::{Matrix2, Vector2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Hyperbolic fixed point `(0, 0)` of the standard map `ybar = y + k sin x`,
/// `xbar = x + ybar`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SaddleData {
    pub fixed_point: [f64; 2],
    pub lambda_u: f64,
    pub lambda_s: f64,
    /// Unit eigenvectors `(x, y)`, oriented with positive `x`.
    pub e_u: [f64; 2],
    pub e_s: [f64; 2],
    pub k: f64,
}

pub fn find_saddle(k: f64) -> Result<SaddleData> {
    if !(k > 0.0) || !k.is_finite() {
        return Err(Error::InvalidInput(format!("saddle needs k > 0, got {k}")));
    }
    let tr = 2.0 + k;
    let disc = (k * k + 4.0 * k).sqrt();
    let lambda_u = 0.5 * (tr + disc);
    // product is exactly one; avoid cancellation in the small root
    let lambda_s = 1.0 / lambda_u;
    let eig = |l: f64| {
        let v = Vector2::new(1.0, l - 1.0 - k).normalize();
        [v[0], v[1]]
    };
    Ok(SaddleData {
        fixed_point: [0.0, 0.0],
        lambda_u,
        lambda_s,
        e_u: eig(lambda_u),
        e_s: eig(lambda_s),
        k,
    })
}

impl SaddleData {
    /// Linearization `[[1+k, 1], [k, 1]]`.
    pub fn linear(&self) -> Matrix2<f64> {
        Matrix2::new(1.0 + self.k, 1.0, self.k, 1.0)
    }

    /// Columns `[e_u, e_s]`.
    pub fn basis(&self) -> Matrix2<f64> {
        Matrix2::new(self.e_u[0], self.e_s[0], self.e_u[1], self.e_s[1])
    }

    pub fn basis_inverse(&self) -> Matrix2<f64> {
        self.basis()
            .try_inverse()
            .expect("eigenvectors are independent")
    }

    /// Eigen-coordinates `(z, u)` of a normal offset: `z` along `e_u`, `u`
    /// along `e_s`.
    pub fn to_eigen(&self, dx: f64, dy: f64) -> (f64, f64) {
        let c = self.basis_inverse() * Vector2::new(dx, dy);
        (c[0], c[1])
    }

    pub fn from_eigen(&self, z: f64, u: f64) -> (f64, f64) {
        (
            z * self.e_u[0] + u * self.e_s[0],
            z * self.e_u[1] + u * self.e_s[1],
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn k4_multipliers() {
        let s = find_saddle(4.0).unwrap();
        assert!((s.lambda_u - (3.0 + 2.0 * 2f64.sqrt())).abs() < 1e-12);
        assert!((s.lambda_s - (3.0 - 2.0 * 2f64.sqrt())).abs() < 1e-12);
        assert!((s.lambda_u * s.lambda_s - 1.0).abs() < 1e-12);
    }

    #[test]
    fn k1_multipliers() {
        let s = find_saddle(1.0).unwrap();
        assert!((s.lambda_u - (3.0 + 5f64.sqrt()) / 2.0).abs() < 1e-12);
        assert!((s.lambda_s - (3.0 - 5f64.sqrt()) / 2.0).abs() < 1e-12);
    }

    #[test]
    fn eigenvectors() {
        let s = find_saddle(4.0).unwrap();
        let l = s.linear();
        let eu = Vector2::from(s.e_u);
        let es = Vector2::from(s.e_s);
        assert!((l * eu - s.lambda_u * eu).amax() < 1e-12);
        assert!((l * es - s.lambda_s * es).amax() < 1e-12);
        let (z, u) = s.to_eigen(0.3, -0.2);
        let (x, y) = s.from_eigen(z, u);
        assert!((x - 0.3).abs() < 1e-14 && (y + 0.2).abs() < 1e-14);
    }

    #[test]
    fn rejects_nonpositive() {
        assert!(find_saddle(0.0).is_err());
        assert!(find_saddle(f64::NAN).is_err());
    }
}
