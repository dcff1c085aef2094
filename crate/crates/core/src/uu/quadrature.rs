use std::f64::consts::{PI, TAU};

use crate::error::{Error, Result};
use crate::quad::gauss_legendre;
use crate::vec3::Vec3;

/// Product rule on the unit sphere: Gauss–Legendre in `cos(theta)` times a
/// uniform rule in the azimuth. With an even number of polar and azimuthal
/// nodes the node set is closed under `omega -> -omega` and the weights sum
/// to `4 pi`.
#[derive(Debug, Clone)]
pub struct SphereQuadrature {
    nodes: Vec<Vec3>,
    weights: Vec<f64>,
    n_theta: usize,
    n_phi: usize,
}

impl SphereQuadrature {
    pub fn product(n_theta: usize, n_phi: usize) -> Result<Self> {
        if n_theta == 0 || n_phi == 0 || !n_theta.is_multiple_of(2) || !n_phi.is_multiple_of(2) {
            return Err(Error::config(format!(
                "sphere rule needs even positive node counts, got {n_theta} x {n_phi}"
            )));
        }
        let (z, wz) = gauss_legendre(n_theta);
        let mut nodes = Vec::with_capacity(n_theta * n_phi);
        let mut weights = Vec::with_capacity(n_theta * n_phi);
        // half-step phase so that no node lies on the coordinate planes
        for (&c, &w) in z.iter().zip(&wz) {
            let s = (1.0 - c * c).sqrt();
            for m in 0..n_phi {
                let phi = TAU * (m as f64 + 0.5) / n_phi as f64;
                nodes.push(Vec3::new(s * phi.cos(), s * phi.sin(), c).normalized());
                weights.push(w * TAU / n_phi as f64);
            }
        }
        Ok(Self {
            nodes,
            weights,
            n_theta,
            n_phi,
        })
    }

    /// Rule with `n_omega` nodes, split as `n_theta x 2 n_theta` when possible.
    pub fn with_nodes(n_omega: usize) -> Result<Self> {
        let mut best: Option<(usize, usize)> = None;
        let mut nt = 2;
        while nt * nt <= n_omega {
            if n_omega.is_multiple_of(nt) {
                let np = n_omega / nt;
                if np.is_multiple_of(2) {
                    let score = (np as f64 / nt as f64 - 2.0).abs();
                    if best.is_none_or(|(bt, bp)| score < (bp as f64 / bt as f64 - 2.0).abs()) {
                        best = Some((nt, np));
                    }
                }
            }
            nt += 2;
        }
        match best {
            Some((nt, np)) => Self::product(nt, np),
            None => Err(Error::config(format!(
                "n_omega = {n_omega} cannot be split into an even product rule"
            ))),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[Vec3] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.n_theta, self.n_phi)
    }

    pub fn iter(&self) -> impl Iterator<Item = (Vec3, f64)> + '_ {
        self.nodes.iter().copied().zip(self.weights.iter().copied())
    }

    /// Nodes with `z > 0`; each stands for itself and its antipode.
    pub(crate) fn upper_half(&self) -> impl Iterator<Item = (Vec3, f64)> + '_ {
        self.iter().filter(|(w, _)| w.z > 0.0)
    }
}

/// Closed-form `int_{S^2} 1 d omega`.
pub const SPHERE_AREA: f64 = 4.0 * PI;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weights_and_symmetry() {
        let q = SphereQuadrature::with_nodes(32).unwrap();
        assert_eq!(q.shape(), (4, 8));
        let total: f64 = q.weights().iter().sum();
        assert!((total - SPHERE_AREA).abs() < 1e-13);
        for (w, wt) in q.iter() {
            let found = q
                .iter()
                .any(|(v, vt)| (v + w).norm() < 1e-12 && (vt - wt).abs() < 1e-15);
            assert!(found, "missing antipode of {w:?}");
        }
        assert_eq!(q.upper_half().count(), 16);
    }

    #[test]
    fn low_order_moments() {
        let q = SphereQuadrature::with_nodes(72).unwrap();
        let m2: f64 = q.iter().map(|(w, wt)| wt * w.z * w.z).sum();
        assert!((m2 - SPHERE_AREA / 3.0).abs() < 1e-12);
        let mx: f64 = q.iter().map(|(w, wt)| wt * w.x * w.x).sum();
        assert!((mx - SPHERE_AREA / 3.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_odd_splits() {
        assert!(SphereQuadrature::product(3, 8).is_err());
        assert!(SphereQuadrature::with_nodes(7).is_err());
    }
}
