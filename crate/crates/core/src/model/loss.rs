use super::TrainingSignals;
use crate::error::{arg, shape, Result};
use crate::exec;
use crate::matrix::Matrix;

#[derive(Debug, Clone)]
pub struct LossOutput {
    /// Mean binary cross-entropy over all `|B| x |V|` entries.
    pub loss: f64,
    /// `dL/dN^p = (P - y) / (|B| |V|)`.
    pub delta: Matrix,
}

/// `ln(1 + e^x)` without overflow.
#[inline]
fn softplus(x: f64) -> f64 {
    if x == f64::INFINITY {
        return x;
    }
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// Multi-hot 1-vs-all labels with label smoothing `y' = (1 - ε) y + ε / |V|`.
pub fn multi_hot_targets(positives: &[&[u32]], num_entities: usize, smoothing: f64) -> Result<Matrix> {
    if !(0.0..1.0).contains(&smoothing) {
        return Err(arg(format!("label smoothing {smoothing} outside [0, 1)")));
    }
    let floor = smoothing / num_entities as f64;
    let mut y = Matrix::from_vec(
        positives.len(),
        num_entities,
        vec![floor; positives.len() * num_entities],
    )?;
    for (j, pos) in positives.iter().enumerate() {
        for &c in pos.iter() {
            if c as usize >= num_entities {
                return Err(arg(format!("target {c} out of range (|V|={num_entities})")));
            }
            y.set(j, c as usize, 1.0 - smoothing + floor);
        }
    }
    Ok(y)
}

/// Binary cross-entropy of `sigmoid(N^p)` against `targets` and its
/// gradient with respect to the raw scores.
pub fn loss_and_delta(signals: &TrainingSignals, targets: &Matrix) -> Result<LossOutput> {
    let (b, nv) = (signals.raw_norms.rows(), signals.raw_norms.cols());
    if targets.rows() != b || targets.cols() != nv {
        return Err(shape(format!(
            "targets are {}x{}, scores are {b}x{nv}",
            targets.rows(),
            targets.cols()
        )));
    }
    if let Some(bad) = targets.as_slice().iter().find(|y| !(0.0..=1.0).contains(*y)) {
        return Err(arg(format!("target value {bad} outside [0, 1]")));
    }
    let scale = 1.0 / (b * nv) as f64;
    let row_sums: Vec<f64> = exec::map_range(b, |j| {
        let mut s = 0.0;
        for (&n, &y) in signals.raw_norms.row(j).iter().zip(targets.row(j)) {
            if y > 0.0 {
                s += y * softplus(-n);
            }
            if y < 1.0 {
                s += (1.0 - y) * softplus(n);
            }
        }
        s
    });
    let loss = row_sums.iter().sum::<f64>() * scale;
    let mut delta = Matrix::zeros(b, nv);
    exec::for_each_row(delta.as_mut_slice(), nv, |j, row| {
        for ((d, &p), &y) in row.iter_mut().zip(signals.p.row(j)).zip(targets.row(j)) {
            *d = (p - y) * scale;
        }
    });
    Ok(LossOutput { loss, delta })
}
