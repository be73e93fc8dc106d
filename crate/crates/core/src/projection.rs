//! Two-dimensional PCA view of an element embedding table.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::elements::{category, symbol};
use crate::error::{validation, Result};
use crate::format::fmt_g17;
use crate::training::ElementEmbeddingTable;

#[derive(Debug, Clone, PartialEq)]
pub struct ProjectedElement {
    pub z: u8,
    pub x: f64,
    pub y: f64,
}

/// Coordinates of each row on the top two principal axes of the centred rows.
/// Axis signs are fixed so that the largest-magnitude loading is positive.
pub fn pca_2d(rows: &[Vec<f64>]) -> Result<Vec<[f64; 2]>> {
    let n = rows.len();
    if n < 3 {
        return Err(validation!("PCA needs at least 3 rows, got {n}"));
    }
    let d = rows[0].len();
    if d < 2 || rows.iter().any(|r| r.len() != d) {
        return Err(validation!("PCA needs rows of equal length ≥ 2"));
    }
    let mut x = DMatrix::from_fn(n, d, |i, j| rows[i][j]);
    for j in 0..d {
        let mean = x.column(j).mean();
        x.column_mut(j).add_scalar_mut(-mean);
    }
    let cov = x.transpose() * &x / (n - 1) as f64;
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let axes: Vec<_> = order[..2]
        .iter()
        .map(|&k| {
            let v = eig.eigenvectors.column(k).into_owned();
            let lead = v
                .iter()
                .copied()
                .fold(0.0f64, |a, b| if b.abs() > a.abs() { b } else { a });
            if lead < 0.0 {
                -v
            } else {
                v
            }
        })
        .collect();
    Ok((0..n)
        .map(|i| {
            let r = x.row(i);
            [r.dot(&axes[0].transpose()), r.dot(&axes[1].transpose())]
        })
        .collect())
}

/// PCA of the present rows of `table`, in order of atomic number.
pub fn project_table(table: &ElementEmbeddingTable) -> Result<Vec<ProjectedElement>> {
    let present = table.present_elements();
    if present.len() < 3 {
        return Err(validation!(
            "projection needs at least 3 present elements, table has {}",
            present.len()
        ));
    }
    let rows: Vec<Vec<f64>> = present.iter().map(|&z| table.row(z).to_vec()).collect();
    Ok(present
        .iter()
        .zip(pca_2d(&rows)?)
        .map(|(&z, [x, y])| ProjectedElement { z, x, y })
        .collect())
}

/// CSV with header `Z,symbol,category,x,y`.
pub fn projection_csv(points: &[ProjectedElement]) -> String {
    let mut out = String::from("Z,symbol,category,x,y\n");
    for p in points {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            p.z,
            symbol(p.z).unwrap_or("?"),
            category(p.z).as_str(),
            fmt_g17(p.x),
            fmt_g17(p.y)
        ));
    }
    out
}
