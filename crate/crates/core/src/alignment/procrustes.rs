use nalgebra::DMatrix;
use ndarray::{Array1, Array2, ArrayView1};

use crate::error::{Error, Result};

fn unit(v: ArrayView1<'_, f64>) -> Array1<f64> {
    let n = v.dot(&v).sqrt();
    if n > 0.0 {
        &v / n
    } else {
        v.to_owned()
    }
}

/// Orthogonal `M` minimizing `Σ ‖M xᵢ − yᵢ‖²` over unit-normalized pairs.
///
/// With `XᵀY = U S Vᵀ` (sources and targets stacked as rows) the minimizer is
/// `M = V Uᵀ`.
pub fn procrustes_solve<'a, I>(pairs: I) -> Result<Array2<f64>>
where
    I: IntoIterator<Item = (ArrayView1<'a, f64>, ArrayView1<'a, f64>)>,
{
    let mut cross: Option<Array2<f64>> = None;
    let mut n = 0usize;
    for (x, y) in pairs {
        if x.len() != y.len() {
            return Err(Error::Input(format!("pair {n}: dimensions {} and {} differ", x.len(), y.len())));
        }
        let (x, y) = (unit(x), unit(y));
        let k = x.len();
        let c = cross.get_or_insert_with(|| Array2::zeros((k, k)));
        if c.nrows() != k {
            return Err(Error::Input(format!("pair {n}: dimension {k} differs from earlier pairs")));
        }
        for i in 0..k {
            if x[i] != 0.0 {
                c.row_mut(i).scaled_add(x[i], &y);
            }
        }
        n += 1;
    }
    let cross = cross.ok_or_else(|| Error::Input("Procrustes needs at least one pair".into()))?;
    let k = cross.nrows();
    let m = DMatrix::from_row_iterator(k, k, cross.iter().copied());
    let svd = m.svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if smin <= smax * 1e-10 {
        log::warn!("Procrustes cross-covariance is rank deficient (σmin/σmax = {:.3e}); minimizer is not unique", smin / smax.max(f64::MIN_POSITIVE));
    }
    let u = svd.u.expect("requested U");
    let v_t = svd.v_t.expect("requested Vᵀ");
    let sol = v_t.transpose() * u.transpose();
    Ok(Array2::from_shape_fn((k, k), |(i, j)| sol[(i, j)]))
}

/// `‖MᵀM − I‖_F`
pub fn orthogonality_error(m: &Array2<f64>) -> f64 {
    let g = m.t().dot(m) - Array2::<f64>::eye(m.nrows());
    g.iter().map(|v| v * v).sum::<f64>().sqrt()
}
