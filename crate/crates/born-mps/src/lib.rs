//! Matrix-product-state Born machines for the transverse-field XY chain.

pub mod analysis;
pub mod cli;
pub mod io;
pub mod mps;
pub mod sampler;
pub mod scalar;
pub mod spin_model;
pub mod training;

#[cfg(test)]
mod smoke {
    use ndarray::array;
    use ndarray_linalg::Eigh;

    #[test]
    fn lapack_links() {
        let a: ndarray::Array2<f64> = array![[2.0, 1.0], [1.0, 2.0]];
        let (vals, _) = a.eigh(ndarray_linalg::UPLO::Lower).unwrap();
        assert!((vals[0] - 1.0).abs() < 1e-12);
    }
}
