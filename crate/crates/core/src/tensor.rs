//! Dense row-major matrices and a strided GEMM front end.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt::Debug;

use num_traits::Float;

/// Floating-point element type usable by the model.
///
/// Implemented for `f32` (training) and `f64` (finite-difference checks and
/// exact function-preservation comparisons).
pub trait Scalar: Float + Default + Debug + Send + Sync + 'static {
    /// `c <- alpha * a * b + beta * c` over raw strided storage.
    ///
    /// # Safety
    /// Every index reachable through the given shapes and strides must lie
    /// inside the corresponding allocation and `c` must not alias `a` or `b`.
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

    fn lift(x: f64) -> Self;
    fn as_f64(self) -> f64;
}

impl Scalar for f32 {
    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: f32,
        a: *const f32,
        rsa: isize,
        csa: isize,
        b: *const f32,
        rsb: isize,
        csb: isize,
        beta: f32,
        c: *mut f32,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::sgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc);
    }

    #[inline]
    fn lift(x: f64) -> f32 {
        x as f32
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self as f64
    }
}

impl Scalar for f64 {
    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: f64,
        a: *const f64,
        rsa: isize,
        csa: isize,
        b: *const f64,
        rsb: isize,
        csb: isize,
        beta: f64,
        c: *mut f64,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::dgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc);
    }

    #[inline]
    fn lift(x: f64) -> f64 {
        x
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self
    }
}

/// Read-only strided 2-D window into a slice.
#[derive(Clone, Copy, Debug)]
pub struct View<'a, T> {
    data: &'a [T],
    offset: usize,
    rows: usize,
    cols: usize,
    rs: usize,
    cs: usize,
}

/// Mutable strided 2-D window into a slice.
#[derive(Debug)]
pub struct ViewMut<'a, T> {
    data: &'a mut [T],
    offset: usize,
    rows: usize,
    cols: usize,
    rs: usize,
    cs: usize,
}

fn check_bounds(len: usize, offset: usize, rows: usize, cols: usize, rs: usize, cs: usize) {
    if rows == 0 || cols == 0 {
        return;
    }
    let last = offset + (rows - 1) * rs + (cols - 1) * cs;
    assert!(last < len, "strided view out of bounds ({last} >= {len})");
}

impl<'a, T: Copy> View<'a, T> {
    pub fn new(data: &'a [T], offset: usize, rows: usize, cols: usize, rs: usize, cs: usize) -> Self {
        check_bounds(data.len(), offset, rows, cols, rs, cs);
        View { data, offset, rows, cols, rs, cs }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn t(self) -> Self {
        View { rows: self.cols, cols: self.rows, rs: self.cs, cs: self.rs, ..self }
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> T {
        self.data[self.offset + r * self.rs + c * self.cs]
    }
}

impl<'a, T: Copy> ViewMut<'a, T> {
    pub fn new(data: &'a mut [T], offset: usize, rows: usize, cols: usize, rs: usize, cs: usize) -> Self {
        check_bounds(data.len(), offset, rows, cols, rs, cs);
        ViewMut { data, offset, rows, cols, rs, cs }
    }
}

/// `c <- alpha * a * b + beta * c`.
///
/// Panics on shape mismatch. With `beta == 0` the previous contents of `c`
/// are ignored (NaNs included).
pub fn gemm<T: Scalar>(alpha: T, a: View<'_, T>, b: View<'_, T>, beta: T, c: ViewMut<'_, T>) {
    assert_eq!(a.cols, b.rows, "gemm inner dimension mismatch");
    assert_eq!(a.rows, c.rows, "gemm output rows mismatch");
    assert_eq!(b.cols, c.cols, "gemm output cols mismatch");
    let (m, k, n) = (a.rows, a.cols, b.cols);
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        for r in 0..m {
            for col in 0..n {
                let idx = c.offset + r * c.rs + col * c.cs;
                c.data[idx] = if beta == T::zero() { T::zero() } else { beta * c.data[idx] };
            }
        }
        return;
    }
    // SAFETY: all three views were bounds-checked at construction, `c` is an
    // exclusive borrow so it cannot alias `a` or `b`.
    unsafe {
        T::gemm_raw(
            m,
            k,
            n,
            alpha,
            a.data.as_ptr().add(a.offset),
            a.rs as isize,
            a.cs as isize,
            b.data.as_ptr().add(b.offset),
            b.rs as isize,
            b.cs as isize,
            beta,
            c.data.as_mut_ptr().add(c.offset),
            c.rs as isize,
            c.cs as isize,
        );
    }
}

/// Row-major dense matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Scalar> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix { rows, cols, data: vec![T::zero(); rows * cols] }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<T>) -> Self {
        assert_eq!(rows * cols, data.len(), "matrix data length does not match shape");
        Matrix { rows, cols, data }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Matrix { rows, cols, data }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> T {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: T) {
        self.data[r * self.cols + c] = v;
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[T] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [T] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn view(&self) -> View<'_, T> {
        View::new(&self.data, 0, self.rows, self.cols, self.cols, 1)
    }

    pub fn view_mut(&mut self) -> ViewMut<'_, T> {
        let (rows, cols) = (self.rows, self.cols);
        ViewMut::new(&mut self.data, 0, rows, cols, cols, 1)
    }

    /// Transposed view, no copy.
    pub fn t(&self) -> View<'_, T> {
        self.view().t()
    }

    /// Materialized transpose.
    pub fn transpose(&self) -> Self {
        Matrix::from_fn(self.cols, self.rows, |r, c| self.get(c, r))
    }

    /// Plain product `self * other`.
    pub fn matmul(&self, other: &Matrix<T>) -> Self {
        let mut out = Matrix::zeros(self.rows, other.cols);
        gemm(T::one(), self.view(), other.view(), T::zero(), out.view_mut());
        out
    }

    pub fn fill(&mut self, v: T) {
        self.data.iter_mut().for_each(|x| *x = v);
    }

    pub fn map<U: Scalar>(&self, f: impl Fn(T) -> U) -> Matrix<U> {
        Matrix { rows: self.rows, cols: self.cols, data: self.data.iter().map(|&x| f(x)).collect() }
    }

    pub fn cast<U: Scalar>(&self) -> Matrix<U> {
        self.map(|x| U::lift(x.as_f64()))
    }
}
