/// A 2×2 matrix, row-major.
pub type Mat2 = [[f32; 2]; 2];

pub const MAT2_IDENTITY: Mat2 = [[1.0, 0.0], [0.0, 1.0]];

/// Determinant threshold below which a jacobian is treated as singular.
pub const DEFAULT_SINGULAR_EPS: f32 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Mat2Inverse {
    pub inverse: Mat2,
    /// Set when `|det| < eps` and the identity was returned instead.
    pub degenerate: bool,
}

pub fn mat2_inverse(m: &Mat2, eps: f32) -> Mat2Inverse {
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    if !(det.abs() >= eps) {
        return Mat2Inverse {
            inverse: MAT2_IDENTITY,
            degenerate: true,
        };
    }
    let inv = 1.0 / det;
    Mat2Inverse {
        inverse: [
            [m[1][1] * inv, -m[0][1] * inv],
            [-m[1][0] * inv, m[0][0] * inv],
        ],
        degenerate: false,
    }
}

pub fn mat2_mul(a: &Mat2, b: &Mat2) -> Mat2 {
    [
        [
            a[0][0] * b[0][0] + a[0][1] * b[1][0],
            a[0][0] * b[0][1] + a[0][1] * b[1][1],
        ],
        [
            a[1][0] * b[0][0] + a[1][1] * b[1][0],
            a[1][0] * b[0][1] + a[1][1] * b[1][1],
        ],
    ]
}

#[inline]
pub fn mat2_apply(m: &Mat2, v: [f32; 2]) -> [f32; 2] {
    [
        m[0][0] * v[0] + m[0][1] * v[1],
        m[1][0] * v[0] + m[1][1] * v[1],
    ]
}
