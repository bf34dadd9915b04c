use super::class_index;
use crate::error::{Error, Result};
use crate::features::FeatureMatrix;

/// Davies-Bouldin index of row-major points `data` (`p` columns) under `labels`.
pub fn davies_bouldin(data: &[f64], p: usize, labels: &[usize]) -> Result<f64> {
    let n = labels.len();
    if data.len() != n * p {
        return Err(Error::SchemaMismatch(format!("{} values for {n} rows of {p}", data.len())));
    }
    let (classes, idx) = class_index(labels);
    let k = classes.len();
    if k < 2 {
        return Err(Error::ClassTooSmall {
            class: classes.first().copied().unwrap_or(0),
            count: n,
            needed: 2,
        });
    }
    let mut centroids = vec![0.0; k * p];
    let mut counts = vec![0usize; k];
    for (i, &c) in idx.iter().enumerate() {
        counts[c] += 1;
        for j in 0..p {
            centroids[c * p + j] += data[i * p + j];
        }
    }
    for c in 0..k {
        for j in 0..p {
            centroids[c * p + j] /= counts[c] as f64;
        }
    }
    let dist = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let mut spread = vec![0.0; k];
    for (i, &c) in idx.iter().enumerate() {
        spread[c] += dist(&data[i * p..(i + 1) * p], &centroids[c * p..(c + 1) * p]);
    }
    for c in 0..k {
        spread[c] /= counts[c] as f64;
    }
    let mut total = 0.0;
    for a in 0..k {
        let mut worst = 0.0f64;
        for b in 0..k {
            if a == b {
                continue;
            }
            let m = dist(&centroids[a * p..(a + 1) * p], &centroids[b * p..(b + 1) * p]);
            if !(m > 0.0) {
                return Err(Error::CoincidentCentroids(classes[a.min(b)], classes[a.max(b)]));
            }
            worst = worst.max((spread[a] + spread[b]) / m);
        }
        total += worst;
    }
    Ok(total / k as f64)
}

/// DBI of a feature matrix after z-scoring every column over all rows.
pub fn davies_bouldin_matrix(fm: &FeatureMatrix) -> Result<f64> {
    let (n, p) = (fm.n_rows(), fm.n_cols());
    let mut z = fm.data.clone();
    for j in 0..p {
        let m = (0..n).map(|i| z[i * p + j]).sum::<f64>() / n as f64;
        let var = (0..n).map(|i| (z[i * p + j] - m).powi(2)).sum::<f64>() / n as f64;
        let s = if var > 0.0 { var.sqrt() } else { 1.0 };
        for i in 0..n {
            z[i * p + j] = (z[i * p + j] - m) / s;
        }
    }
    davies_bouldin(&z, p, &fm.labels())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_fixture() {
        let d = [0.0, 0.0, 0.0, 1.0, 10.0, 0.0, 10.0, 1.0];
        assert!((davies_bouldin(&d, 2, &[0, 0, 1, 1]).unwrap() - 0.1).abs() < 1e-15);
    }

    #[test]
    fn single_points_and_coincidence() {
        assert_eq!(davies_bouldin(&[0.0, 3.0], 1, &[0, 1]).unwrap(), 0.0);
        assert!(matches!(
            davies_bouldin(&[0.0, 1.0, -1.0, 2.0], 1, &[0, 0, 1, 1]),
            Err(Error::CoincidentCentroids(0, 1))
        ));
    }

    #[test]
    fn closer_clusters_scale_index() {
        let far = [0.0, 0.0, 0.0, 1.0, 100.0, 0.0, 100.0, 1.0];
        let near = [0.0, 0.0, 0.0, 1.0, 10.0, 0.0, 10.0, 1.0];
        let a = davies_bouldin(&far, 2, &[0, 0, 1, 1]).unwrap();
        let b = davies_bouldin(&near, 2, &[0, 0, 1, 1]).unwrap();
        assert!((b / a - 10.0).abs() < 1e-9);
    }
}
