//! Inner polygonal approximation of the apparent-power disc P² + Q² ≤ R².

use std::f64::consts::PI;

use super::model::{LinearModel, Sense, VarId};
use crate::error::{Error, Result};

/// Half-plane `a·P + b·Q ≤ c`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HalfPlane {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl HalfPlane {
    pub fn contains(&self, p: f64, q: f64, tol: f64) -> bool {
        self.a * p + self.b * q <= self.c + tol
    }
}

/// Faces of the regular `sides`-gon inscribed in the radius-`radius` disc,
/// with one vertex on the positive P axis.
pub fn polygon_faces(radius: f64, sides: usize) -> Result<Vec<HalfPlane>> {
    if sides < 3 {
        return Err(Error::Model(format!("polygon needs at least 3 sides, got {sides}")));
    }
    if !(radius >= 0.0) || !radius.is_finite() {
        return Err(Error::Model(format!("polygon radius must be finite and non-negative, got {radius}")));
    }
    let m = sides as f64;
    let apothem = radius * (PI / m).cos();
    Ok((0..sides)
        .map(|j| {
            let phi = 2.0 * PI * j as f64 / m + PI / m;
            HalfPlane {
                a: phi.cos(),
                b: phi.sin(),
                c: apothem,
            }
        })
        .collect())
}

pub fn polygon_contains(radius: f64, sides: usize, p: f64, q: f64, tol: f64) -> Result<bool> {
    Ok(polygon_faces(radius, sides)?
        .iter()
        .all(|h| h.contains(p, q, tol)))
}

/// Adds the polygon rows over linear expressions for P and Q. `rhs_scale`
/// multiplies the radius (used for reserve factors); returns row indices.
pub fn add_polygon_ball(
    model: &mut LinearModel,
    name: &str,
    p_terms: &[(VarId, f64)],
    q_terms: &[(VarId, f64)],
    radius: f64,
    sides: usize,
) -> Result<Vec<usize>> {
    let faces = polygon_faces(radius, sides)?;
    Ok(faces
        .iter()
        .enumerate()
        .map(|(j, h)| {
            let terms = p_terms
                .iter()
                .map(|(v, c)| (*v, c * h.a))
                .chain(q_terms.iter().map(|(v, c)| (*v, c * h.b)));
            model.add_constraint(format!("{name}_face{j}"), terms, Sense::Le, h.c)
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn hexagon_vertices_and_apothem() {
        let r = 1.0;
        // vertex on the axis is on the boundary
        assert!(polygon_contains(r, 6, 1.0, 0.0, 1e-12).unwrap());
        assert!(!polygon_contains(r, 6, 1.001, 0.0, 0.0).unwrap());
        // face midpoint direction at 30 degrees: inradius cos(30°) ≈ 0.8660
        let (c, s) = (30f64.to_radians().cos(), 30f64.to_radians().sin());
        assert!(polygon_contains(r, 6, 0.86 * c, 0.86 * s, 0.0).unwrap());
        assert!(!polygon_contains(r, 6, 0.87 * c, 0.87 * s, 0.0).unwrap());
        assert!(!polygon_contains(r, 6, 0.90 * c, 0.90 * s, 0.0).unwrap());
    }

    #[test]
    fn degenerate_sides_rejected() {
        assert!(polygon_faces(1.0, 2).is_err());
        assert!(polygon_faces(-1.0, 6).is_err());
    }

    #[test]
    fn hexagon_inside_disc_grid() {
        let faces = polygon_faces(1.0, 6).unwrap();
        let n = 100;
        for i in 0..n {
            for j in 0..n {
                let p = -1.2 + 2.4 * i as f64 / (n - 1) as f64;
                let q = -1.2 + 2.4 * j as f64 / (n - 1) as f64;
                if faces.iter().all(|h| h.contains(p, q, 0.0)) {
                    assert!(p * p + q * q <= 1.0 + 1e-12, "({p},{q}) outside disc");
                }
            }
        }
    }

    proptest! {
        #[test]
        fn polygon_is_inner_approximation(
            sides in 3usize..24,
            radius in 0.1f64..5000.0,
            p in -6000.0f64..6000.0,
            q in -6000.0f64..6000.0,
        ) {
            let inside = polygon_contains(radius, sides, p, q, 0.0).unwrap();
            if inside {
                prop_assert!(p.hypot(q) <= radius * (1.0 + 1e-12));
            }
            // anything within the apothem is always inside
            let apothem = radius * (std::f64::consts::PI / sides as f64).cos();
            if p.hypot(q) <= apothem * (1.0 - 1e-12) {
                prop_assert!(inside);
            }
        }
    }
}
