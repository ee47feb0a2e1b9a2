// Link the system OpenBLAS (which bundles LAPACK) for ndarray-linalg.
fn main() {
    println!("cargo:rustc-link-lib=dylib=openblas");
}
