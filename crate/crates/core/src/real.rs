//! Floating-point abstraction shared by the network layers.
//!
//! Training runs in `f32`; finite-difference checks run the same code in `f64`.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use rayon::prelude::*;

/// Scalar type a network can be instantiated with.
pub trait Real:
    num_like::Float + Copy + Send + Sync + Debug + Display + Default + Sum + 'static
{
    /// Dtype code recorded in checkpoints.
    const DTYPE_CODE: u8;

    fn from_f64(v: f64) -> Self;
    fn to_f64(self) -> f64;

    /// `C <- alpha * A * B + beta * C` with arbitrary strides.
    #[allow(clippy::too_many_arguments)]
    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: *const Self,
        rsa: isize,
        csa: isize,
        b: *const Self,
        rsb: isize,
        csb: isize,
        beta: Self,
        c: *mut Self,
        rsc: isize,
        csc: isize,
    );
}

/// Minimal float operations needed by the layers, kept local so the trait
/// bound does not drag a numeric-tower crate into the public API.
pub mod num_like {
    use std::ops::{Add, AddAssign, Div, Mul, MulAssign, Neg, Sub, SubAssign};

    pub trait Float:
        Add<Output = Self>
        + Sub<Output = Self>
        + Mul<Output = Self>
        + Div<Output = Self>
        + Neg<Output = Self>
        + AddAssign
        + SubAssign
        + MulAssign
        + PartialOrd
        + Sized
    {
        fn zero() -> Self;
        fn one() -> Self;
        fn sqrt(self) -> Self;
        fn exp(self) -> Self;
        fn ln(self) -> Self;
        fn is_finite(self) -> bool;
        fn max(self, other: Self) -> Self;
    }

    macro_rules! impl_float {
        ($t:ty) => {
            impl Float for $t {
                #[inline]
                fn zero() -> Self {
                    0.0
                }
                #[inline]
                fn one() -> Self {
                    1.0
                }
                #[inline]
                fn sqrt(self) -> Self {
                    <$t>::sqrt(self)
                }
                #[inline]
                fn exp(self) -> Self {
                    <$t>::exp(self)
                }
                #[inline]
                fn ln(self) -> Self {
                    <$t>::ln(self)
                }
                #[inline]
                fn is_finite(self) -> bool {
                    <$t>::is_finite(self)
                }
                #[inline]
                fn max(self, other: Self) -> Self {
                    <$t>::max(self, other)
                }
            }
        };
    }
    impl_float!(f32);
    impl_float!(f64);
}

impl Real for f32 {
    const DTYPE_CODE: u8 = 1;

    #[inline]
    fn from_f64(v: f64) -> Self {
        v as f32
    }
    #[inline]
    fn to_f64(self) -> f64 {
        self as f64
    }

    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: *const Self,
        rsa: isize,
        csa: isize,
        b: *const Self,
        rsb: isize,
        csb: isize,
        beta: Self,
        c: *mut Self,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::sgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc);
    }
}

impl Real for f64 {
    const DTYPE_CODE: u8 = 2;

    #[inline]
    fn from_f64(v: f64) -> Self {
        v
    }
    #[inline]
    fn to_f64(self) -> f64 {
        self
    }

    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: *const Self,
        rsa: isize,
        csa: isize,
        b: *const Self,
        rsb: isize,
        csb: isize,
        beta: Self,
        c: *mut Self,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::dgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc);
    }
}

/// Row-major matrix view: `rows x cols` with row stride `ld`, optionally transposed.
#[derive(Clone, Copy)]
pub struct MatRef<'a, T> {
    pub data: &'a [T],
    pub rows: usize,
    pub cols: usize,
    pub ld: usize,
    pub transposed: bool,
}

impl<'a, T> MatRef<'a, T> {
    pub fn new(data: &'a [T], rows: usize, cols: usize) -> Self {
        debug_assert_eq!(data.len(), rows * cols);
        MatRef { data, rows, cols, ld: cols, transposed: false }
    }

    /// A `rows x cols` block whose rows start `ld` elements apart.
    pub fn strided(data: &'a [T], rows: usize, cols: usize, ld: usize) -> Self {
        assert!(ld >= cols && (rows == 0 || data.len() >= (rows - 1) * ld + cols), "strided view out of bounds");
        MatRef { data, rows, cols, ld, transposed: false }
    }

    /// The same storage read as its transpose.
    pub fn t(self) -> Self {
        MatRef { transposed: !self.transposed, ..self }
    }

    fn shape(&self) -> (usize, usize) {
        if self.transposed {
            (self.cols, self.rows)
        } else {
            (self.rows, self.cols)
        }
    }

    fn strides(&self) -> (isize, isize) {
        if self.transposed {
            (1, self.ld as isize)
        } else {
            (self.ld as isize, 1)
        }
    }
}

/// Column chunk used to split gemm work across threads. Fixed, so results do
/// not depend on the thread count.
const COL_CHUNK: usize = 2048;

/// `out <- a * b + beta * out`, `out` row-major `m x n`.
pub fn gemm<T: Real>(a: MatRef<'_, T>, b: MatRef<'_, T>, beta: T, out: &mut [T]) {
    let (m, _) = a.shape();
    let (_, n) = b.shape();
    assert_eq!(out.len(), m * n, "gemm output size mismatch");
    gemm_strided(a, b, beta, out, n);
}

/// Like [`gemm`], writing an `m x n` block whose rows start `ld` elements apart.
pub fn gemm_strided<T: Real>(a: MatRef<'_, T>, b: MatRef<'_, T>, beta: T, out: &mut [T], ld: usize) {
    let (m, k) = a.shape();
    let (kb, n) = b.shape();
    assert_eq!(k, kb, "gemm inner dimension mismatch");
    if m == 0 || n == 0 {
        return;
    }
    assert!(ld >= n && out.len() >= (m - 1) * ld + n, "gemm output block out of bounds");
    let (rsa, csa) = a.strides();
    let (rsb, csb) = b.strides();
    let chunks = n.div_ceil(COL_CHUNK);
    let out_ptr = SendPtr(out.as_mut_ptr());
    let run = |chunk: usize| {
        let c0 = chunk * COL_CHUNK;
        let nc = COL_CHUNK.min(n - c0);
        let out_ptr = &out_ptr;
        // SAFETY: chunks write disjoint column ranges of `out`, and every
        // pointer/stride pair stays inside the slices checked above.
        unsafe {
            T::gemm_raw(
                m,
                k,
                nc,
                T::one(),
                a.data.as_ptr(),
                rsa,
                csa,
                b.data.as_ptr().offset(c0 as isize * csb),
                rsb,
                csb,
                beta,
                out_ptr.0.add(c0),
                ld as isize,
                1,
            );
        }
    };
    if chunks == 1 || rayon::current_num_threads() == 1 {
        (0..chunks).for_each(run);
    } else {
        (0..chunks).into_par_iter().for_each(run);
    }
}

struct SendPtr<T>(*mut T);
unsafe impl<T> Send for SendPtr<T> {}
unsafe impl<T> Sync for SendPtr<T> {}
