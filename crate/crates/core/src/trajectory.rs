//! Time-indexed sequences of spectral fields and the weighted mixed norms
//! evaluated on them.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::SpectralVectorField;
use crate::grid::Grid;
use crate::norms::{spatial_norm, NormSpec, SpatialNorm};
use crate::params::{xspace_components, RegimeParams, XSpace, YSpaceCase};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Provenance {
    HeatFlow,
    Picard,
    Evolution,
    Synthetic,
}

/// Fields at strictly increasing, nonnegative node times on one grid.
#[derive(Debug, Clone)]
pub struct Trajectory {
    nodes: Vec<f64>,
    fields: Vec<SpectralVectorField>,
    pub regime: Option<RegimeParams>,
    pub provenance: Provenance,
}

impl Trajectory {
    pub fn new(nodes: Vec<f64>, fields: Vec<SpectralVectorField>, provenance: Provenance) -> Result<Self> {
        if nodes.len() != fields.len() {
            return Err(Error::InvalidTrajectory(format!("{} nodes but {} fields", nodes.len(), fields.len())));
        }
        if nodes.is_empty() {
            return Err(Error::InvalidTrajectory("no nodes".into()));
        }
        if nodes[0] < 0.0 || !nodes[0].is_finite() {
            return Err(Error::InvalidTrajectory(format!("negative first node {}", nodes[0])));
        }
        if nodes.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidTrajectory("node times not strictly increasing".into()));
        }
        let grid = fields[0].grid();
        if fields.iter().any(|f| f.grid() != grid) {
            return Err(Error::GridMismatch);
        }
        Ok(Trajectory { nodes, fields, regime: None, provenance })
    }

    pub fn with_regime(mut self, regime: RegimeParams) -> Self {
        self.regime = Some(regime);
        self
    }

    /// All-zero trajectory on the given nodes.
    pub fn zeros(grid: &Grid, nodes: Vec<f64>, provenance: Provenance) -> Result<Self> {
        let fields = vec![SpectralVectorField::zeros(grid); nodes.len()];
        Trajectory::new(nodes, fields, provenance)
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn fields(&self) -> &[SpectralVectorField] {
        &self.fields
    }

    pub fn fields_mut(&mut self) -> &mut [SpectralVectorField] {
        &mut self.fields
    }

    pub fn into_fields(self) -> Vec<SpectralVectorField> {
        self.fields
    }

    pub fn grid(&self) -> &Grid {
        self.fields[0].grid()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn final_time(&self) -> f64 {
        *self.nodes.last().expect("trajectory has nodes")
    }

    /// Nodes shared (to within `1e-12` relative) with another trajectory.
    pub fn same_nodes(&self, other: &Trajectory) -> bool {
        self.nodes.len() == other.nodes.len()
            && self.nodes.iter().zip(&other.nodes).all(|(a, b)| (a - b).abs() <= 1e-12 * a.abs().max(1.0))
    }

    /// Prefix of the trajectory up to and including node `last`.
    pub fn truncated(&self, last: usize) -> Result<Trajectory> {
        let mut t = Trajectory::new(
            self.nodes[..=last].to_vec(),
            self.fields[..=last].to_vec(),
            self.provenance,
        )?;
        t.regime = self.regime;
        Ok(t)
    }

    /// Pointwise difference of two trajectories on the same nodes.
    pub fn difference(&self, other: &Trajectory) -> Result<Trajectory> {
        if !self.same_nodes(other) {
            return Err(Error::NodeMismatch);
        }
        let fields = self.fields.iter().zip(&other.fields).map(|(a, b)| a - b).collect();
        Trajectory::new(self.nodes.clone(), fields, self.provenance)
    }

    pub fn scaled(&self, factor: f64) -> Trajectory {
        let mut t = self.clone();
        for f in &mut t.fields {
            f.scale(factor);
        }
        t
    }
}

/// Temporal quadrature of precomputed spatial norms `values[j] = ||f(t_j)||`.
///
/// Trapezoid rule on `(t^rho v)^{a'}`; when `t_0 = 0` and `rho < 0` the
/// first cell is integrated exactly with `v` frozen at its right end.
pub fn temporal_norm(nodes: &[f64], values: &[f64], a_prime: f64, rho: f64) -> Result<f64> {
    if nodes.len() < 2 {
        return Err(Error::InvalidTrajectory("need at least two nodes".into()));
    }
    let spec_ok = if a_prime.is_infinite() { rho >= 0.0 } else { rho * a_prime > -1.0 };
    if nodes[0] == 0.0 && !spec_ok {
        return Err(Error::WeightNotIntegrable { rho, exponent: a_prime });
    }
    let weight = |t: f64| if rho == 0.0 { 1.0 } else { t.powf(rho) };
    if a_prime.is_infinite() {
        return Ok(nodes.iter().zip(values).map(|(&t, &v)| weight(t) * v).fold(0.0, f64::max));
    }
    let integrand: Vec<f64> = nodes.iter().zip(values).map(|(&t, &v)| (weight(t) * v).powf(a_prime)).collect();
    let mut acc = 0.0;
    for j in 0..nodes.len() - 1 {
        let dt = nodes[j + 1] - nodes[j];
        if j == 0 && nodes[0] == 0.0 && rho < 0.0 {
            let e = rho * a_prime + 1.0;
            acc += values[1].powf(a_prime) * nodes[1].powf(e) / e;
        } else {
            acc += 0.5 * dt * (integrand[j] + integrand[j + 1]);
        }
    }
    Ok(acc.powf(1.0 / a_prime))
}

pub fn trajectory_norm(traj: &Trajectory, spec: &NormSpec) -> Result<f64> {
    if traj.len() < 2 {
        return Err(Error::InvalidTrajectory("need at least two nodes".into()));
    }
    if traj.nodes[0] == 0.0 && !spec.weight_integrable_at_zero() {
        return Err(Error::WeightNotIntegrable { rho: spec.temporal_weight, exponent: spec.temporal_exponent });
    }
    let values = traj.fields.iter().map(|f| spatial_norm(f, &spec.spatial)).collect::<Result<Vec<_>>>()?;
    temporal_norm(&traj.nodes, &values, spec.temporal_exponent, spec.temporal_weight)
}

/// Several mixed norms of one trajectory; each distinct spatial norm is
/// evaluated once per node.
pub fn mixed_norms(traj: &Trajectory, specs: &[NormSpec]) -> Result<Vec<f64>> {
    if traj.len() < 2 {
        return Err(Error::InvalidTrajectory("need at least two nodes".into()));
    }
    let mut spatial: Vec<SpatialNorm> = Vec::new();
    for spec in specs {
        if traj.nodes[0] == 0.0 && !spec.weight_integrable_at_zero() {
            return Err(Error::WeightNotIntegrable { rho: spec.temporal_weight, exponent: spec.temporal_exponent });
        }
        if !spatial.contains(&spec.spatial.canonical()) {
            spatial.push(spec.spatial.canonical());
        }
    }
    // values[k][j]: spatial norm k at node j
    let mut values = vec![Vec::with_capacity(traj.len()); spatial.len()];
    for f in &traj.fields {
        for (k, sn) in spatial.iter().enumerate() {
            values[k].push(spatial_norm(f, sn)?);
        }
    }
    specs
        .iter()
        .map(|spec| {
            let k = spatial.iter().position(|s| *s == spec.spatial.canonical()).expect("collected above");
            temporal_norm(&traj.nodes, &values[k], spec.temporal_exponent, spec.temporal_weight)
        })
        .collect()
}

/// Sum of the constituent norms of a solution-space case.
pub fn yspace_norm(traj: &Trajectory, case: &YSpaceCase) -> Result<f64> {
    Ok(mixed_norms(traj, &case.norm_components)?.iter().sum())
}

pub fn xspace_norm(traj: &Trajectory, regime: &RegimeParams, which: XSpace) -> Result<f64> {
    Ok(mixed_norms(traj, &xspace_components(regime, which))?.iter().sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::test_fields::random_field;
    use crate::params::{classify_yspace, validate_regime};

    fn const_traj(f: &SpectralVectorField, nodes: Vec<f64>) -> Trajectory {
        let fields = nodes.iter().map(|_| f.clone()).collect();
        Trajectory::new(nodes, fields, Provenance::Synthetic).unwrap()
    }

    #[test]
    fn rejects_bad_nodes() {
        let g = Grid::new(2, 8, 1).unwrap();
        let f = SpectralVectorField::zeros(&g);
        assert!(Trajectory::new(vec![0.0, 0.0], vec![f.clone(), f.clone()], Provenance::Synthetic).is_err());
        assert!(Trajectory::new(vec![-1.0, 0.0], vec![f.clone(), f.clone()], Provenance::Synthetic).is_err());
        let other = SpectralVectorField::zeros(&Grid::new(2, 16, 1).unwrap());
        assert!(matches!(
            Trajectory::new(vec![0.0, 1.0], vec![f, other], Provenance::Synthetic),
            Err(Error::GridMismatch)
        ));
    }

    #[test]
    fn constant_integrand() {
        let g = Grid::new(2, 16, 1).unwrap();
        let f = random_field(&g, 2, false);
        let t_end = 3.0;
        let traj = const_traj(&f, (0..=10).map(|j| j as f64 * t_end / 10.0).collect());
        let spec = NormSpec::new(2.0, 0.0, SpatialNorm::Lp(2.0));
        let v = trajectory_norm(&traj, &spec).unwrap();
        let expected = f.l2_sq().sqrt() * t_end.sqrt();
        assert!((v - expected).abs() < 1e-10 * expected);
    }

    #[test]
    fn linear_in_time_is_exact_for_a1() {
        let g = Grid::new(2, 16, 1).unwrap();
        let c = random_field(&g, 3, false);
        let t_end = 2.0;
        let nodes: Vec<f64> = (0..=7).map(|j| j as f64 * t_end / 7.0).collect();
        let fields = nodes.iter().map(|&t| &c * t).collect();
        let traj = Trajectory::new(nodes, fields, Provenance::Synthetic).unwrap();
        let v = trajectory_norm(&traj, &NormSpec::new(1.0, 0.0, SpatialNorm::HomSobolev(0.0))).unwrap();
        let expected = c.l2_sq().sqrt() * t_end * t_end / 2.0;
        assert!((v - expected).abs() < 1e-12 * expected);
    }

    #[test]
    fn second_order_convergence() {
        // integrand t^2 |c|^2 on [0, 1] with a' = 2: exact value |c| / sqrt(3)
        let g = Grid::new(2, 8, 1).unwrap();
        let c = random_field(&g, 4, false);
        let norm_c = c.l2_sq().sqrt();
        let spec = NormSpec::new(2.0, 1.0, SpatialNorm::HomSobolev(0.0));
        let err = |m: usize| {
            let nodes: Vec<f64> = (0..=m).map(|j| j as f64 / m as f64).collect();
            let traj = const_traj(&c, nodes);
            let v = trajectory_norm(&traj, &spec).unwrap();
            (v.powi(2) - norm_c.powi(2) / 3.0).abs()
        };
        let (e1, e2, e3) = (err(16), err(32), err(64));
        let order1 = (e1 / e2).log2();
        let order2 = (e2 / e3).log2();
        assert!((order1 - 2.0).abs() < 0.05 && (order2 - 2.0).abs() < 0.05, "{order1} {order2}");
    }

    #[test]
    fn weight_integrability() {
        let g = Grid::new(2, 8, 1).unwrap();
        let traj = const_traj(&random_field(&g, 5, false), vec![0.0, 0.5, 1.0]);
        let bad = NormSpec::new(2.0, -0.6, SpatialNorm::Lp(2.0));
        assert!(matches!(trajectory_norm(&traj, &bad), Err(Error::WeightNotIntegrable { .. })));
        let sup_bad = NormSpec::new(f64::INFINITY, -0.1, SpatialNorm::Lp(2.0));
        assert!(trajectory_norm(&traj, &sup_bad).is_err());
        // rho a' = -0.8 > -1 is fine; exact value for a constant field is |c| (1/0.2)^{1/2}
        let ok = NormSpec::new(2.0, -0.4, SpatialNorm::HomSobolev(0.0));
        let nodes: Vec<f64> = (0..=4000).map(|j| (j as f64 / 4000.0).powi(4)).collect();
        let c = random_field(&g, 6, false);
        let v = trajectory_norm(&const_traj(&c, nodes), &ok).unwrap();
        let expected = c.l2_sq().sqrt() * (1.0f64 / 0.2).sqrt();
        assert!((v - expected).abs() < 1e-3 * expected, "{v} {expected}");
    }

    #[test]
    fn yspace_norm_is_sum_and_monotone() {
        let regime = validate_regime(2, 1.0, -0.5).unwrap();
        let case = classify_yspace(&regime);
        let g = Grid::new(2, 16, 1).unwrap();
        let nodes: Vec<f64> = (0..=8).map(|j| j as f64 * 0.1).collect();
        let fields = nodes.iter().map(|&t| &random_field(&g, 7, true) * (1.0 + t)).collect();
        let traj = Trajectory::new(nodes, fields, Provenance::Synthetic).unwrap();
        let total = yspace_norm(&traj, &case).unwrap();
        let parts: f64 = case.norm_components.iter().map(|c| trajectory_norm(&traj, c).unwrap()).sum();
        assert!((total - parts).abs() < 1e-12 * total);
        let shorter = yspace_norm(&traj.truncated(4).unwrap(), &case).unwrap();
        assert!(shorter <= total);
        let zero = Trajectory::zeros(&g, vec![0.0, 1.0], Provenance::Synthetic).unwrap();
        assert_eq!(yspace_norm(&zero, &case).unwrap(), 0.0);
        assert_eq!(xspace_norm(&zero, &regime, XSpace::X2).unwrap(), 0.0);
    }
}
