//! Dense kernels over row-major slices.

/// `out += m * x` for an `rows x cols` matrix.
#[inline]
pub(crate) fn gemv_add(out: &mut [f64], m: &[f64], x: &[f64]) {
    let cols = x.len();
    debug_assert_eq!(m.len(), out.len() * cols);
    for (o, row) in out.iter_mut().zip(m.chunks_exact(cols)) {
        *o += row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
    }
}

/// `out += m^T * y` for an `rows x cols` matrix.
#[inline]
pub(crate) fn gemv_t_add(out: &mut [f64], m: &[f64], y: &[f64]) {
    let cols = out.len();
    debug_assert_eq!(m.len(), y.len() * cols);
    for (&yi, row) in y.iter().zip(m.chunks_exact(cols)) {
        if yi != 0.0 {
            out.iter_mut().zip(row).for_each(|(o, a)| *o += yi * a);
        }
    }
}

/// `g += y x^T`.
#[inline]
pub(crate) fn outer_add(g: &mut [f64], y: &[f64], x: &[f64]) {
    let cols = x.len();
    debug_assert_eq!(g.len(), y.len() * cols);
    for (&yi, row) in y.iter().zip(g.chunks_exact_mut(cols)) {
        if yi != 0.0 {
            row.iter_mut().zip(x).for_each(|(a, b)| *a += yi * b);
        }
    }
}

#[inline]
pub(crate) fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

pub(crate) fn add_assign(a: &mut [f64], b: &[f64]) {
    a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
}
