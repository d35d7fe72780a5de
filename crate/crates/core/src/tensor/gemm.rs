/// Operand view for [`gemm`]: data plus (row stride, column stride).
#[derive(Clone, Copy)]
pub(crate) struct View<'a> {
    pub data: &'a [f64],
    pub rs: usize,
    pub cs: usize,
}

impl<'a> View<'a> {
    pub fn row_major(data: &'a [f64], cols: usize) -> Self {
        Self { data, rs: cols, cs: 1 }
    }

    /// Transposed view of a row-major matrix with `cols` columns.
    pub fn transposed(data: &'a [f64], cols: usize) -> Self {
        Self { data, rs: 1, cs: cols }
    }
}

const SMALL: usize = 8 * 1024;

/// `c (m×n, row-major) = beta·c + a (m×k) · b (k×n)`; `beta` is 0 or 1.
pub(crate) fn gemm(m: usize, k: usize, n: usize, a: View, b: View, c: &mut [f64], beta: f64) {
    debug_assert_eq!(c.len(), m * n);
    if m * k * n <= SMALL {
        if beta == 0.0 {
            c.fill(0.0);
        }
        for i in 0..m {
            let crow = &mut c[i * n..(i + 1) * n];
            for p in 0..k {
                let av = a.data[i * a.rs + p * a.cs];
                if av == 0.0 {
                    continue;
                }
                if b.cs == 1 {
                    let brow = &b.data[p * b.rs..p * b.rs + n];
                    for (cv, &bv) in crow.iter_mut().zip(brow) {
                        *cv += av * bv;
                    }
                } else {
                    for (j, cv) in crow.iter_mut().enumerate() {
                        *cv += av * b.data[p * b.rs + j * b.cs];
                    }
                }
            }
        }
        return;
    }
    // SAFETY: every index the kernel touches is inside the slices: the
    // strides and extents describe matrices that fit the buffers, which the
    // graph's shape checks guarantee before calling here.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.data.as_ptr(),
            a.rs as isize,
            a.cs as isize,
            b.data.as_ptr(),
            b.rs as isize,
            b.cs as isize,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive(m: usize, k: usize, n: usize, a: &[f64], b: &[f64]) -> Vec<f64> {
        let mut c = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                for p in 0..k {
                    c[i * n + j] += a[i * k + p] * b[p * n + j];
                }
            }
        }
        c
    }

    #[test]
    fn small_and_large_paths_agree_with_naive() {
        for &(m, k, n) in &[(2, 3, 4), (40, 30, 50)] {
            let a: Vec<f64> = (0..m * k).map(|i| (i as f64 * 0.37).sin()).collect();
            let b: Vec<f64> = (0..k * n).map(|i| (i as f64 * 0.11).cos()).collect();
            let mut c = vec![0.0; m * n];
            gemm(m, k, n, View::row_major(&a, k), View::row_major(&b, n), &mut c, 0.0);
            let expect = naive(m, k, n, &a, &b);
            for (x, y) in c.iter().zip(&expect) {
                assert!((x - y).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn transposed_views() {
        // a is stored as (k×m), used transposed.
        let (m, k, n) = (3, 2, 2);
        let at = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let b = [1.0, 0.0, 0.0, 1.0];
        let mut c = vec![0.0; m * n];
        gemm(m, k, n, View::transposed(&at, m), View::row_major(&b, n), &mut c, 0.0);
        assert_eq!(c, vec![1.0, 4.0, 2.0, 5.0, 3.0, 6.0]);
    }
}
