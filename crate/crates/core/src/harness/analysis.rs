use std::io::Write;

use nalgebra::DMatrix;
use serde::Serialize;

use super::metrics::mask_rows;
use crate::crossl::FeatureExtractor;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::rng::RandomStream;
use crate::types::MaskSet;

/// Affine projection fitted on training vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct Pca {
    pub mean: Vec<f64>,
    /// `dims` rows of unit-norm principal directions, by decreasing variance.
    pub components: Matrix,
    pub singular_values: Vec<f64>,
}

impl Pca {
    /// Centers `train` by its mean and keeps the top `dims` right singular
    /// vectors. Each direction's sign is fixed so that its largest-magnitude
    /// entry is positive.
    pub fn fit(train: &Matrix, dims: usize) -> Result<Self> {
        let (n, p) = train.shape();
        if dims == 0 || dims > p {
            return Err(Error::Config(format!("cannot keep {dims} of {p} dimensions")));
        }
        if n < dims {
            return Err(Error::RankDeficient(format!("{n} training vectors for {dims} components")));
        }
        let mean = train.column_means();
        let centered = DMatrix::from_fn(n, p, |i, j| train.get(i, j) - mean[j]);
        let svd = centered.svd(false, true);
        let v_t = svd.v_t.ok_or_else(|| Error::RankDeficient("SVD did not converge".into()))?;
        let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
        order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
        let top = svd.singular_values[order[0]];
        let tol = top * (n.max(p) as f64) * f64::EPSILON;
        let kept = &order[..dims.min(order.len())];
        if kept.len() < dims || svd.singular_values[kept[dims - 1]] <= tol || top == 0.0 {
            return Err(Error::RankDeficient(format!("centered training data has rank below {dims}")));
        }
        let mut components = Matrix::zeros(dims, p);
        for (r, &idx) in kept.iter().enumerate() {
            let row: Vec<f64> = (0..p).map(|j| v_t[(idx, j)]).collect();
            let pivot = row.iter().copied().fold(0.0, |a: f64, b| if b.abs() > a.abs() { b } else { a });
            let sign = if pivot < 0.0 { -1.0 } else { 1.0 };
            for (j, v) in row.into_iter().enumerate() {
                components.set(r, j, sign * v);
            }
        }
        Ok(Self { mean, components, singular_values: kept.iter().map(|&i| svd.singular_values[i]).collect() })
    }

    pub fn transform(&self, x: &Matrix) -> Result<Matrix> {
        if x.cols() != self.mean.len() {
            return Err(Error::Shape(format!("{} columns, PCA fitted on {}", x.cols(), self.mean.len())));
        }
        let mut centered = x.clone();
        let neg: Vec<f64> = self.mean.iter().map(|m| -m).collect();
        centered.add_row_vector(&neg);
        centered.matmul_t(&self.components)
    }
}

/// Fits on `train`, then projects both sets with the same map.
pub fn pca_export(train: &Matrix, test: &Matrix, dims: usize) -> Result<(Matrix, Matrix)> {
    let pca = Pca::fit(train, dims)?;
    Ok((pca.transform(train)?, pca.transform(test)?))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PcaRow {
    pub split: String,
    pub pc1: f64,
    pub pc2: f64,
    pub label: f64,
    pub condition: String,
}

/// One CSV row per projected vector; `projected` needs at least two columns.
pub fn pca_rows(split: &str, projected: &Matrix, labels: &[f64], condition: &str) -> Result<Vec<PcaRow>> {
    if projected.cols() < 2 || projected.rows() != labels.len() {
        return Err(Error::Shape(format!("{:?} projections for {} labels", projected.shape(), labels.len())));
    }
    Ok((0..projected.rows())
        .map(|i| PcaRow {
            split: split.to_string(),
            pc1: projected.get(i, 0),
            pc2: projected.get(i, 1),
            label: labels[i],
            condition: condition.to_string(),
        })
        .collect())
}

pub fn write_pca_csv<W: Write>(writer: W, rows: &[PcaRow]) -> Result<()> {
    super::sweep::write_csv(writer, rows)
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let na = a.iter().map(|v| v * v).sum::<f64>().sqrt();
    let nb = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    match (na == 0.0, nb == 0.0) {
        (true, true) => 1.0,
        (true, false) | (false, true) => 0.0,
        _ => a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() / (na * nb),
    }
}

/// Mean cosine similarity between the inference embedding of each sample and
/// the embedding of the same sample with a uniformly random half of its
/// stations zeroed at the input.
pub fn missingness_invariance(fx: &FeatureExtractor, x: &Matrix, rng: &mut RandomStream) -> Result<f64> {
    if x.rows() == 0 {
        return Err(Error::Empty("no samples".into()));
    }
    let n_st = fx.n_stations();
    let k = fx.k();
    let full = fx.embed(x)?;
    let mut masked = x.clone();
    for i in 0..x.rows() {
        let mut ids: Vec<usize> = (0..n_st).collect();
        rng.shuffle(&mut ids);
        let mask = MaskSet::from_indices(ids[..n_st / 2].iter().copied(), n_st)?;
        let row = mask_rows(&x.select_rows(&[i]), mask, k);
        masked.row_mut(i).copy_from_slice(row.row(0));
    }
    let half = fx.embed(&masked)?;
    Ok((0..x.rows()).map(|i| cosine(full.row(i), half.row(i))).sum::<f64>() / x.rows() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dist(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
    }

    #[test]
    fn centered_2d_projection_is_a_rotation() {
        let mut rng = RandomStream::new(3, "pca");
        let mut x = Matrix::from_fn(40, 2, |_, j| rng.standard_normal() * if j == 0 { 3.0 } else { 1.0 });
        let m = x.column_means();
        x.add_row_vector(&[-m[0], -m[1]]);
        let (p, _) = pca_export(&x, &x, 2).unwrap();
        for i in 0..40 {
            for j in 0..40 {
                assert!((dist(x.row(i), x.row(j)) - dist(p.row(i), p.row(j))).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn first_component_has_most_variance_and_mean_maps_to_origin() {
        let mut rng = RandomStream::new(4, "pca");
        let x = Matrix::from_fn(60, 5, |_, j| rng.standard_normal() * (j + 1) as f64 + j as f64);
        let pca = Pca::fit(&x, 2).unwrap();
        let p = pca.transform(&x).unwrap();
        let var = |c: usize| p.column(c).iter().map(|v| v * v).sum::<f64>();
        assert!(var(0) >= var(1));
        let origin = pca.transform(&Matrix::from_rows(std::slice::from_ref(&pca.mean)).unwrap()).unwrap();
        assert!(origin.row(0).iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn rank_deficiency_is_reported() {
        let x = Matrix::from_fn(10, 3, |i, j| i as f64 * (j + 1) as f64);
        assert!(matches!(Pca::fit(&x, 2), Err(Error::RankDeficient(_))));
        assert!(Pca::fit(&x, 1).is_ok());
    }

    #[test]
    fn cosine_edge_cases() {
        assert_eq!(cosine(&[0.0, 0.0], &[0.0, 0.0]), 1.0);
        assert_eq!(cosine(&[1.0, 0.0], &[0.0, 0.0]), 0.0);
        assert!((cosine(&[1.0, 2.0], &[2.0, 4.0]) - 1.0).abs() < 1e-15);
    }
}
