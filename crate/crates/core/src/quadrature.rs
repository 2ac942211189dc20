//! Gauss rules built by the Golub-Welsch eigenvalue method.

use nalgebra::{DMatrix, SymmetricEigen};

fn golub_welsch(offdiag: impl Fn(usize) -> f64, k: usize, mu0: f64) -> (Vec<f64>, Vec<f64>) {
    let mut j = DMatrix::<f64>::zeros(k, k);
    for i in 1..k {
        let b = offdiag(i);
        j[(i, i - 1)] = b;
        j[(i - 1, i)] = b;
    }
    let eig = SymmetricEigen::new(j);
    let mut pairs: Vec<(f64, f64)> = (0..k)
        .map(|i| (eig.eigenvalues[i], mu0 * eig.eigenvectors[(0, i)].powi(2)))
        .collect();
    pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    pairs.into_iter().unzip()
}

/// Gauss-Legendre nodes and weights on [−1, 1].
pub fn gauss_legendre(k: usize) -> (Vec<f64>, Vec<f64>) {
    golub_welsch(
        |i| {
            let i = i as f64;
            i / (4.0 * i * i - 1.0).sqrt()
        },
        k,
        2.0,
    )
}

/// Gauss-Hermite rule for the standard normal: Σ w_i g(x_i) ≈ E[g(Z)],
/// exact for polynomials of degree ≤ 2k − 1.
pub fn gauss_hermite_normal(k: usize) -> (Vec<f64>, Vec<f64>) {
    golub_welsch(|i| (i as f64).sqrt(), k, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hermite_moments() {
        let (x, w) = gauss_hermite_normal(4);
        let m = |p: i32| -> f64 { x.iter().zip(&w).map(|(x, w)| w * x.powi(p)).sum() };
        assert!((m(0) - 1.0).abs() < 1e-14);
        assert!((m(2) - 1.0).abs() < 1e-13);
        assert!((m(4) - 3.0).abs() < 1e-12);
        assert!((m(6) - 15.0).abs() < 1e-11);
        assert!(m(5).abs() < 1e-12);
    }

    #[test]
    fn legendre_integrates_polynomials() {
        let (x, w) = gauss_legendre(6);
        let s: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(10)).sum();
        assert!((s - 2.0 / 11.0).abs() < 1e-13);
    }
}
