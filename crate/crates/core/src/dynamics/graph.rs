//! Radius graphs over splat centers.

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::splat::SplatScene;

/// Raw per-node feature width: color 3, opacity 1, rotation 4, position 3, scale 3.
pub const NODE_FEATURES: usize = 14;
/// Feature offsets inside a node row.
pub const ROTATION_OFFSET: usize = 4;
pub const POSITION_OFFSET: usize = 8;

/// Node features and undirected edges. Node `i` is splat `i` of the source
/// scene.
#[derive(Clone, Debug, PartialEq)]
pub struct SceneGraph {
    pub features: Array2<f64>,
    /// Each undirected edge once, as `(i, j)` with `i < j`.
    pub edges: Vec<(usize, usize)>,
    /// Sorted neighbor lists derived from `edges`.
    pub neighbors: Vec<Vec<usize>>,
}

fn node_features(scene: &SplatScene) -> Array2<f64> {
    let mut f = Array2::zeros((scene.len(), NODE_FEATURES));
    for (i, s) in scene.splats.iter().enumerate() {
        for (k, v) in s.features().into_iter().enumerate() {
            f[[i, k]] = v;
        }
    }
    f
}

/// Connects every pair of splats whose centers are at most `omega` apart.
pub fn build_graph(scene: &SplatScene, omega: f64) -> Result<SceneGraph> {
    if scene.is_empty() {
        return Err(Error::EmptyScene);
    }
    let n = scene.len();
    let mut edges = Vec::new();
    let mut neighbors = vec![Vec::new(); n];
    for i in 0..n {
        for j in i + 1..n {
            if (scene.splats[i].position - scene.splats[j].position).norm() <= omega {
                edges.push((i, j));
                neighbors[i].push(j);
                neighbors[j].push(i);
            }
        }
    }
    Ok(SceneGraph {
        features: node_features(scene),
        edges,
        neighbors,
    })
}

impl SceneGraph {
    pub fn len(&self) -> usize {
        self.neighbors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.neighbors.is_empty()
    }

    /// Same topology with node features taken from `scene`.
    pub fn with_features(&self, scene: &SplatScene) -> Result<SceneGraph> {
        if scene.len() != self.len() {
            return Err(Error::LengthMismatch {
                expected: self.len(),
                actual: scene.len(),
            });
        }
        Ok(SceneGraph {
            features: node_features(scene),
            edges: self.edges.clone(),
            neighbors: self.neighbors.clone(),
        })
    }

    /// Row-wise mean of `h` over each node's neighbors; zero for isolated nodes.
    pub fn neighbor_mean(&self, h: &Array2<f64>) -> Array2<f64> {
        let mut out = Array2::zeros(h.raw_dim());
        for (i, nb) in self.neighbors.iter().enumerate() {
            if nb.is_empty() {
                continue;
            }
            let w = 1.0 / nb.len() as f64;
            let mut row = out.row_mut(i);
            for &j in nb {
                row.scaled_add(w, &h.row(j));
            }
        }
        out
    }

    /// Adjoint of [`SceneGraph::neighbor_mean`].
    pub fn neighbor_mean_adjoint(&self, d: &Array2<f64>) -> Array2<f64> {
        let mut out = Array2::zeros(d.raw_dim());
        for (i, nb) in self.neighbors.iter().enumerate() {
            if nb.is_empty() {
                continue;
            }
            let w = 1.0 / nb.len() as f64;
            for &j in nb {
                out.row_mut(j).scaled_add(w, &d.row(i));
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::Vec3;
    use crate::splat::Splat;

    fn scene(xs: &[f64]) -> SplatScene {
        SplatScene::new(
            0,
            xs.iter()
                .map(|&x| Splat::isotropic(Vec3::new(x, 0.0, 0.0), 0.01, 0.9, Vec3::new(0.1, 0.2, 0.3)))
                .collect(),
        )
    }

    #[test]
    fn threshold_examples() {
        assert_eq!(build_graph(&scene(&[0.0, 0.05]), 0.1).unwrap().edges, vec![(0, 1)]);
        assert!(build_graph(&scene(&[0.0, 0.2]), 0.1).unwrap().edges.is_empty());
        let g = build_graph(&scene(&[0.3; 5]), 0.1).unwrap();
        assert_eq!(g.edges.len(), 10);
        assert!(g.neighbors.iter().all(|n| n.len() == 4));
        assert!(matches!(build_graph(&scene(&[]), 0.1), Err(Error::EmptyScene)));
    }

    #[test]
    fn feature_order() {
        let g = build_graph(&scene(&[0.25]), 0.1).unwrap();
        let row: Vec<f64> = g.features.row(0).to_vec();
        assert_eq!(
            row,
            vec![0.1, 0.2, 0.3, 0.9, 1.0, 0.0, 0.0, 0.0, 0.25, 0.0, 0.0, 0.01, 0.01, 0.01]
        );
    }

    #[test]
    fn mean_and_adjoint_agree() {
        let g = build_graph(&scene(&[0.0, 0.05, 0.09, 0.5]), 0.1).unwrap();
        let h = Array2::from_shape_fn((4, 3), |(i, k)| (i * 3 + k) as f64 * 0.7 - 1.0);
        let d = Array2::from_shape_fn((4, 3), |(i, k)| ((i + 2 * k) as f64).sin());
        let lhs = (&g.neighbor_mean(&h) * &d).sum();
        let rhs = (&h * &g.neighbor_mean_adjoint(&d)).sum();
        assert!((lhs - rhs).abs() < 1e-12);
        assert!(g.neighbor_mean(&h).row(3).iter().all(|&v| v == 0.0));
    }
}
