use super::{ModelKind, Norm};

/// Score `f_r(h, t)`; higher means more plausible.
///
/// * TransE: `-‖h + r - t‖_p`
/// * DistMult: `Σ h_k r_k t_k`
/// * ComplEx: `Re(Σ h_k r_k conj(t_k))`
/// * RotatE: `-Σ |h_k e^{iθ_k} - t_k|`, the sum of complex moduli
pub fn score(kind: ModelKind, h: &[f64], r: &[f64], t: &[f64]) -> f64 {
    check_dims(kind, h, r, t);
    match kind {
        ModelKind::TransE { norm: Norm::L2 } => {
            let sq: f64 = (0..h.len()).map(|k| (h[k] + r[k] - t[k]).powi(2)).sum();
            -sq.sqrt()
        }
        ModelKind::TransE { norm: Norm::L1 } => -(0..h.len()).map(|k| (h[k] + r[k] - t[k]).abs()).sum::<f64>(),
        ModelKind::DistMult => (0..h.len()).map(|k| h[k] * r[k] * t[k]).sum(),
        ModelKind::ComplEx => {
            let mut s = 0.0;
            for k in 0..h.len() / 2 {
                let (a, b) = (h[2 * k], h[2 * k + 1]);
                let (c, d) = (r[2 * k], r[2 * k + 1]);
                let (e, f) = (t[2 * k], t[2 * k + 1]);
                s += a * c * e - b * d * e + a * d * f + b * c * f;
            }
            s
        }
        ModelKind::RotatE => {
            let mut s = 0.0;
            for k in 0..r.len() {
                let (a, b) = (h[2 * k], h[2 * k + 1]);
                let (e, f) = (t[2 * k], t[2 * k + 1]);
                let (sin, cos) = r[k].sin_cos();
                let u = a * cos - b * sin - e;
                let w = a * sin + b * cos - f;
                s += u.hypot(w);
            }
            -s
        }
    }
}

/// Adds `scale · ∂f/∂h`, `scale · ∂f/∂r` and `scale · ∂f/∂t` into the three
/// buffers. Norms use subgradient 0 where they are not differentiable.
#[allow(clippy::too_many_arguments)]
pub fn accumulate_score_grad(
    kind: ModelKind,
    h: &[f64],
    r: &[f64],
    t: &[f64],
    scale: f64,
    gh: &mut [f64],
    gr: &mut [f64],
    gt: &mut [f64],
) {
    check_dims(kind, h, r, t);
    match kind {
        ModelKind::TransE { norm: Norm::L2 } => {
            let norm = (0..h.len())
                .map(|k| (h[k] + r[k] - t[k]).powi(2))
                .sum::<f64>()
                .sqrt();
            if norm == 0.0 {
                return;
            }
            for k in 0..h.len() {
                let g = -scale * (h[k] + r[k] - t[k]) / norm;
                gh[k] += g;
                gr[k] += g;
                gt[k] -= g;
            }
        }
        ModelKind::TransE { norm: Norm::L1 } => {
            for k in 0..h.len() {
                let diff = h[k] + r[k] - t[k];
                let sign = if diff > 0.0 {
                    1.0
                } else if diff < 0.0 {
                    -1.0
                } else {
                    0.0
                };
                let g = -scale * sign;
                gh[k] += g;
                gr[k] += g;
                gt[k] -= g;
            }
        }
        ModelKind::DistMult => {
            for k in 0..h.len() {
                gh[k] += scale * r[k] * t[k];
                gr[k] += scale * h[k] * t[k];
                gt[k] += scale * h[k] * r[k];
            }
        }
        ModelKind::ComplEx => {
            for k in 0..h.len() / 2 {
                let (re, im) = (2 * k, 2 * k + 1);
                let (a, b) = (h[re], h[im]);
                let (c, d) = (r[re], r[im]);
                let (e, f) = (t[re], t[im]);
                gh[re] += scale * (c * e + d * f);
                gh[im] += scale * (c * f - d * e);
                gr[re] += scale * (a * e + b * f);
                gr[im] += scale * (a * f - b * e);
                gt[re] += scale * (a * c - b * d);
                gt[im] += scale * (a * d + b * c);
            }
        }
        ModelKind::RotatE => {
            for k in 0..r.len() {
                let (re, im) = (2 * k, 2 * k + 1);
                let (a, b) = (h[re], h[im]);
                let (e, f) = (t[re], t[im]);
                let (sin, cos) = r[k].sin_cos();
                let u = a * cos - b * sin - e;
                let w = a * sin + b * cos - f;
                let m = u.hypot(w);
                if m == 0.0 {
                    continue;
                }
                // f = -Σ m_k, so ∂f/∂u = -u/m and ∂f/∂w = -w/m.
                let du = -scale * u / m;
                let dw = -scale * w / m;
                gh[re] += du * cos + dw * sin;
                gh[im] += -du * sin + dw * cos;
                gt[re] -= du;
                gt[im] -= dw;
                gr[k] += du * (-a * sin - b * cos) + dw * (a * cos - b * sin);
            }
        }
    }
}

fn check_dims(kind: ModelKind, h: &[f64], r: &[f64], t: &[f64]) {
    assert_eq!(h.len(), t.len(), "head and tail rows differ in length");
    assert_eq!(
        r.len(),
        kind.relation_dim(h.len()),
        "relation row length does not match {}",
        kind.name()
    );
    if matches!(kind, ModelKind::ComplEx | ModelKind::RotatE) {
        assert!(h.len().is_multiple_of(2), "complex rows need an even length");
    }
}
