//! Named bundles used by the verification suite and tests.

use crate::bundle::BundleSpec;

/// Symmetric circle bundle over two equal factors:
/// m=2, r=1, n=(1,1), p=(2,2), Q=[[1,1]].
pub fn sym2() -> BundleSpec {
    BundleSpec::new(2, 1, vec![1, 1], vec![2, 2], vec![vec![1, 1]])
}

/// Asymmetric circle bundle: m=2, r=1, n=(1,2), p=(2,3), Q=[[1,1]].
pub fn asym() -> BundleSpec {
    BundleSpec::new(2, 1, vec![1, 2], vec![2, 3], vec![vec![1, 1]])
}

/// Rank-two torus bundle over three factors:
/// m=3, r=2, n=(1,1,1), p=(2,2,2), Q=[[1,1,0],[0,1,1]].
pub fn tor() -> BundleSpec {
    BundleSpec::new(
        3,
        2,
        vec![1, 1, 1],
        vec![2, 2, 2],
        vec![vec![1, 1, 0], vec![0, 1, 1]],
    )
}

/// Symmetric circle bundle over three equal factors:
/// m=3, r=1, n=(1,1,1), p=(2,2,2), Q=[[1,1,1]].
pub fn m3sym() -> BundleSpec {
    BundleSpec::new(3, 1, vec![1, 1, 1], vec![2, 2, 2], vec![vec![1, 1, 1]])
}
