//! Pointwise splittings `Eᵘ ⊕ Eᶜˢ` and providers that produce them along
//! orbits.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::dynsys::DynamicalSystem;
use crate::error::{Error, Result};
use crate::linalg::{orthogonal_complement, orthonormalize};

/// Splitting of the tangent space at a point. `eu` and `ecs` are orthonormal
/// bases; the projectors are oblique and sum to the identity.
#[derive(Debug, Clone, Serialize)]
pub struct Splitting {
    pub eu: DMatrix<f64>,
    pub ecs: DMatrix<f64>,
    pub proj_u: DMatrix<f64>,
    pub proj_cs: DMatrix<f64>,
    /// Optional center block; `None` for all built-in systems.
    pub ec: Option<DMatrix<f64>>,
}

impl Splitting {
    pub fn from_bases(eu: &DMatrix<f64>, ecs: &DMatrix<f64>) -> Result<Self> {
        let d = eu.nrows();
        if ecs.nrows() != d || eu.ncols() + ecs.ncols() != d {
            return Err(Error::DimensionMismatch(format!(
                "bases of sizes {}x{} and {}x{} do not split R^{}",
                eu.nrows(),
                eu.ncols(),
                ecs.nrows(),
                ecs.ncols(),
                d
            )));
        }
        let eu = if eu.ncols() > 0 {
            orthonormalize(eu)
        } else {
            eu.clone()
        };
        let ecs = if ecs.ncols() > 0 {
            orthonormalize(ecs)
        } else {
            ecs.clone()
        };
        let du = eu.ncols();
        let mut m = DMatrix::zeros(d, d);
        m.columns_mut(0, du).copy_from(&eu);
        m.columns_mut(du, d - du).copy_from(&ecs);
        let inv = m
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::DimensionMismatch("subspaces are not complementary".into()))?;
        let proj_u = eu.clone() * inv.rows(0, du);
        let proj_cs = DMatrix::identity(d, d) - &proj_u;
        Ok(Splitting {
            eu,
            ecs,
            proj_u,
            proj_cs,
            ec: None,
        })
    }

    pub fn dim(&self) -> usize {
        self.eu.nrows()
    }

    pub fn du(&self) -> usize {
        self.eu.ncols()
    }

    pub fn dcs(&self) -> usize {
        self.ecs.ncols()
    }

    /// Orthonormal basis of `(Eᶜˢ)^⊥`. Coordinates against it define the
    /// quotient norm `|ξ|_q = dist(ξ, Eᶜˢ)` on `Eᵘ`.
    pub fn normal_u(&self) -> DMatrix<f64> {
        if self.dcs() == 0 {
            return DMatrix::identity(self.dim(), self.dim());
        }
        orthogonal_complement(&self.ecs)
    }

    /// Orthonormal basis of `(Eᵘ)^⊥`.
    pub fn normal_cs(&self) -> DMatrix<f64> {
        if self.du() == 0 {
            return DMatrix::identity(self.dim(), self.dim());
        }
        orthogonal_complement(&self.eu)
    }

    /// Exchange the roles: the first `du` columns of `Eᶜˢ` become the new
    /// unstable block, the old unstable block joins the rest.
    pub fn swapped(&self) -> Result<Self> {
        let du = self.du();
        let d = self.dim();
        if self.dcs() < du {
            return Err(Error::DimensionMismatch(
                "cannot swap: complement smaller than unstable block".into(),
            ));
        }
        let new_u = self.ecs.columns(0, du).into_owned();
        let mut new_cs = DMatrix::zeros(d, d - du);
        new_cs.columns_mut(0, du).copy_from(&self.eu);
        new_cs
            .columns_mut(du, d - 2 * du)
            .copy_from(&self.ecs.columns(du, self.dcs() - du));
        Splitting::from_bases(&new_u, &new_cs)
    }
}

/// Source of splittings at arbitrary points.
pub trait SplittingProvider: Send + Sync {
    fn splitting_at(&self, sys: &dyn DynamicalSystem, x: &[f64]) -> Result<Splitting>;
}

/// The system's own closed-form splitting.
#[derive(Debug, Clone, Copy, Default)]
pub struct AnalyticSplitting;

impl SplittingProvider for AnalyticSplitting {
    fn splitting_at(&self, sys: &dyn DynamicalSystem, x: &[f64]) -> Result<Splitting> {
        sys.known_splitting(x).ok_or_else(|| {
            Error::InvalidArgument(format!("system {} has no analytic splitting", sys.name()))
        })
    }
}

/// Deliberately corrupted provider: exchanges unstable and stable roles.
#[derive(Debug, Clone, Copy, Default)]
pub struct SwappedSplitting<P>(pub P);

impl<P: SplittingProvider> SplittingProvider for SwappedSplitting<P> {
    fn splitting_at(&self, sys: &dyn DynamicalSystem, x: &[f64]) -> Result<Splitting> {
        self.0.splitting_at(sys, x)?.swapped()
    }
}

/// Which norm is placed on `Eᵘ` when measuring expansion rates and volumes.
///
/// `Quotient` measures `ξ ∈ Eᵘ` by its distance to `Eᶜˢ`. It is uniformly
/// equivalent to the Euclidean norm on a compact hyperbolic set (the angle
/// between the two bundles is bounded below), so every rate statement is
/// unchanged up to bounded factors, while cocycles that are constant in the
/// transverse direction (the solenoids) become exactly constant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum UnstableNorm {
    #[default]
    Quotient,
    Euclidean,
}

/// Matrix of `Df_x|Eᵘ : Eᵘ(x) → Eᵘ(fx)` in coordinates for the chosen norm.
pub fn unstable_block(
    df: &DMatrix<f64>,
    at_x: &Splitting,
    at_fx: &Splitting,
    norm: UnstableNorm,
) -> Option<DMatrix<f64>> {
    match norm {
        UnstableNorm::Euclidean => {
            let img = df * &at_x.eu;
            let q = orthonormalize(&img);
            Some(q.transpose() * img)
        }
        UnstableNorm::Quotient => {
            let n0 = at_x.normal_u();
            let n1 = at_fx.normal_u();
            let src = n0.transpose() * &at_x.eu;
            let inv = src.try_inverse()?;
            Some(n1.transpose() * df * &at_x.eu * inv)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn projectors_are_complementary() {
        let eu = DMatrix::from_column_slice(2, 1, &[1.0, 0.0]);
        let ecs = DMatrix::from_column_slice(2, 1, &[1.0, 1.0]);
        let s = Splitting::from_bases(&eu, &ecs).unwrap();
        let p = &s.proj_u;
        assert!((p * p - p).norm() < 1e-12);
        assert!((p * &s.eu - &s.eu).norm() < 1e-12);
        assert!((&s.proj_cs * &s.ecs - &s.ecs).norm() < 1e-12);
        assert!((p * &s.ecs).norm() < 1e-12);
    }

    #[test]
    fn parallel_bases_rejected() {
        let eu = DMatrix::from_column_slice(2, 1, &[1.0, 0.0]);
        assert!(Splitting::from_bases(&eu, &eu).is_err());
    }
}
