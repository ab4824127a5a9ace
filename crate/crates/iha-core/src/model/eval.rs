//! Loss, gradient, Hessian-vector products, and dense Hessians.
//!
//! Three independent differentiation routes coexist on purpose:
//! reverse-mode backprop (gradients), a hand-derived forward-over-reverse
//! sweep (`hvp`), and dual-number differentiation of the backprop pass
//! (`exact_hessian` columns). The tests cross-check them against each other
//! and against central finite differences.
//!
//! The inner passes write into reusable scratch buffers; the batch and
//! Hessian entry points allocate one scratch per work chunk so the per-record
//! cost stays allocation-free.

use crate::exec;
use crate::linalg::SymMatrix;

use super::scalar::Scalar;
use super::{Dual, Label, LossKind, ModelError, ModelSpec, ParameterVector, Record};

/// Largest dense Hessian `exact_hessian` will allocate: 2 GiB.
pub const DEFAULT_HESSIAN_BUDGET_BYTES: usize = 2 << 30;

/// Per-layer offsets into the flat parameter vector.
struct Layout {
    dims: Vec<usize>,
    bias: bool,
    offsets: Vec<usize>,
}

impl Layout {
    fn of(spec: &ModelSpec) -> Self {
        let dims = spec.layer_dims();
        let bias = spec.has_bias();
        let mut offsets = Vec::with_capacity(dims.len());
        let mut off = 0;
        for w in dims.windows(2) {
            offsets.push(off);
            off += w[1] * w[0] + if bias { w[1] } else { 0 };
        }
        Self {
            dims,
            bias,
            offsets,
        }
    }

    fn num_layers(&self) -> usize {
        self.dims.len() - 1
    }

    fn max_width(&self) -> usize {
        *self.dims.iter().max().expect("at least two dims")
    }

    fn weight<'a, T>(&self, params: &'a [T], layer: usize) -> &'a [T] {
        let (fan_in, fan_out) = (self.dims[layer], self.dims[layer + 1]);
        let off = self.offsets[layer];
        &params[off..off + fan_out * fan_in]
    }

    fn bias<'a, T>(&self, params: &'a [T], layer: usize) -> Option<&'a [T]> {
        if !self.bias {
            return None;
        }
        let (fan_in, fan_out) = (self.dims[layer], self.dims[layer + 1]);
        let off = self.offsets[layer] + fan_out * fan_in;
        Some(&params[off..off + fan_out])
    }
}

/// Reusable buffers for one forward/backward sweep.
struct Scratch<T> {
    /// `acts[l]`: activations entering layer `l` (`acts[0]` is the input).
    acts: Vec<Vec<T>>,
    /// `zs[l]`: pre-activations of layer `l`.
    zs: Vec<Vec<T>>,
    delta: Vec<T>,
    next_delta: Vec<T>,
}

impl<T: Scalar> Scratch<T> {
    fn new(layout: &Layout) -> Self {
        let n = layout.num_layers();
        Self {
            acts: (0..n).map(|l| vec![T::zero(); layout.dims[l]]).collect(),
            zs: (0..n)
                .map(|l| vec![T::zero(); layout.dims[l + 1]])
                .collect(),
            delta: vec![T::zero(); layout.max_width()],
            next_delta: vec![T::zero(); layout.max_width()],
        }
    }
}

fn check_record(spec: &ModelSpec, z: &Record) -> Result<(), ModelError> {
    if z.features.len() != spec.input_dim {
        return Err(ModelError::DimensionMismatch {
            expected: spec.input_dim,
            got: z.features.len(),
        });
    }
    match (spec.loss, z.label) {
        (LossKind::CrossEntropy, Label::Class(k)) if k < spec.output_dim => Ok(()),
        (LossKind::CrossEntropy, label) => Err(ModelError::InvalidLabel(format!("{label:?}"))),
        (LossKind::SquaredError, Label::Class(k)) if k < spec.output_dim => Ok(()),
        (LossKind::SquaredError, Label::Target(_)) if spec.output_dim == 1 => Ok(()),
        (LossKind::SquaredError, label) => Err(ModelError::InvalidLabel(format!("{label:?}"))),
    }
}

fn check_params(spec: &ModelSpec, len: usize) -> Result<(), ModelError> {
    if len != spec.param_count() {
        return Err(ModelError::DimensionMismatch {
            expected: spec.param_count(),
            got: len,
        });
    }
    Ok(())
}

/// Squared-error target for output coordinate `i`.
fn target_at(label: Label, i: usize) -> f64 {
    match label {
        Label::Target(t) => t,
        Label::Class(k) => {
            if i == k {
                1.0
            } else {
                0.0
            }
        }
    }
}

/// Forward pass into the scratch buffers. Hidden layers apply ReLU, the
/// output layer is linear.
fn forward<T: Scalar>(layout: &Layout, params: &[T], x: &[f64], s: &mut Scratch<T>) {
    for (a, v) in s.acts[0].iter_mut().zip(x) {
        *a = T::from_f64(*v);
    }
    for l in 0..layout.num_layers() {
        let (fan_in, fan_out) = (layout.dims[l], layout.dims[l + 1]);
        let w = layout.weight(params, l);
        let b = layout.bias(params, l);
        let (before, rest) = s.acts.split_at_mut(l + 1);
        let input = &before[l];
        for i in 0..fan_out {
            let row = &w[i * fan_in..(i + 1) * fan_in];
            let mut acc = match b {
                Some(b) => b[i],
                None => T::zero(),
            };
            for (wij, aj) in row.iter().zip(input.iter()) {
                acc = acc + *wij * *aj;
            }
            s.zs[l][i] = acc;
        }
        if l + 1 < layout.num_layers() {
            for (a, z) in rest[0].iter_mut().zip(&s.zs[l]) {
                *a = z.relu();
            }
        }
    }
}

/// Loss and output-layer sensitivity `dL/dz_out`, written into `delta`.
fn loss_and_output_delta<T: Scalar>(
    spec: &ModelSpec,
    out: &[T],
    label: Label,
    delta: &mut [T],
) -> T {
    match spec.loss {
        LossKind::SquaredError => {
            let mut loss = T::zero();
            for (i, o) in out.iter().enumerate() {
                let r = *o - T::from_f64(target_at(label, i));
                loss = loss + r * r;
                delta[i] = T::from_f64(2.0) * r;
            }
            loss
        }
        LossKind::CrossEntropy => {
            let k = match label {
                Label::Class(k) => k,
                Label::Target(_) => unreachable!("checked by check_record"),
            };
            // numerically stable log-sum-exp, branching on value parts
            let mut max_idx = 0;
            for (i, z) in out.iter().enumerate() {
                if z.value() > out[max_idx].value() {
                    max_idx = i;
                }
            }
            let m = out[max_idx];
            let mut sum = T::zero();
            for z in out {
                sum = sum + (*z - m).exp();
            }
            let lse = m + sum.ln();
            for (i, z) in out.iter().enumerate() {
                let p = (*z - lse).exp();
                delta[i] = if i == k { p - T::from_f64(1.0) } else { p };
            }
            lse - out[k]
        }
    }
}

/// One record's loss, optionally accumulating its gradient into `grad_acc`.
fn record_loss_grad<T: Scalar>(
    spec: &ModelSpec,
    layout: &Layout,
    params: &[T],
    z: &Record,
    grad_acc: Option<&mut [T]>,
    s: &mut Scratch<T>,
) -> T {
    forward(layout, params, &z.features, s);
    let last = layout.num_layers() - 1;
    let loss = loss_and_output_delta(spec, &s.zs[last], z.label, &mut s.delta);
    let acc = match grad_acc {
        Some(acc) => acc,
        None => return loss,
    };

    for l in (0..layout.num_layers()).rev() {
        let (fan_in, fan_out) = (layout.dims[l], layout.dims[l + 1]);
        let w = layout.weight(params, l);
        let w_off = layout.offsets[l];
        let prev = &s.acts[l];

        for i in 0..fan_out {
            let di = s.delta[i];
            let row = &mut acc[w_off + i * fan_in..w_off + (i + 1) * fan_in];
            for (g, a) in row.iter_mut().zip(prev.iter()) {
                *g = *g + di * *a;
            }
        }
        if layout.bias {
            let b_off = w_off + fan_out * fan_in;
            for i in 0..fan_out {
                acc[b_off + i] = acc[b_off + i] + s.delta[i];
            }
        }

        if l > 0 {
            for nj in s.next_delta[..fan_in].iter_mut() {
                *nj = T::zero();
            }
            for i in 0..fan_out {
                let di = s.delta[i];
                let row = &w[i * fan_in..(i + 1) * fan_in];
                for (nj, wij) in s.next_delta[..fan_in].iter_mut().zip(row) {
                    *nj = *nj + *wij * di;
                }
            }
            for (nj, zj) in s.next_delta[..fan_in].iter_mut().zip(&s.zs[l - 1]) {
                *nj = *nj * T::from_f64(zj.relu_mask());
            }
            std::mem::swap(&mut s.delta, &mut s.next_delta);
        }
    }
    loss
}

/// Raw model outputs (logits or regression values) for one feature vector.
pub fn output(
    spec: &ModelSpec,
    w: &ParameterVector,
    features: &[f64],
) -> Result<Vec<f64>, ModelError> {
    check_params(spec, w.len())?;
    if features.len() != spec.input_dim {
        return Err(ModelError::DimensionMismatch {
            expected: spec.input_dim,
            got: features.len(),
        });
    }
    let layout = Layout::of(spec);
    let mut scratch = Scratch::<f64>::new(&layout);
    forward(&layout, w.values(), features, &mut scratch);
    Ok(scratch.zs[layout.num_layers() - 1].clone())
}

/// Fraction of records the model classifies correctly. Class labels compare
/// against the argmax output; scalar regression targets are thresholded at
/// one half (the odd-vs-even encoding).
pub fn accuracy(
    spec: &ModelSpec,
    w: &ParameterVector,
    records: &[&Record],
) -> Result<f64, ModelError> {
    if records.is_empty() {
        return Err(ModelError::EmptyDataset);
    }
    let mut correct = 0usize;
    for z in records {
        let out = output(spec, w, &z.features)?;
        let ok = match z.label {
            Label::Class(k) => {
                let argmax = out
                    .iter()
                    .enumerate()
                    .max_by(|a, b| a.1.total_cmp(b.1))
                    .map(|(i, _)| i)
                    .unwrap_or(0);
                argmax == k
            }
            Label::Target(t) => (out[0] >= 0.5) == (t >= 0.5),
        };
        if ok {
            correct += 1;
        }
    }
    Ok(correct as f64 / records.len() as f64)
}

/// Per-record loss `l(w, z)`.
pub fn loss(spec: &ModelSpec, w: &ParameterVector, z: &Record) -> Result<f64, ModelError> {
    check_params(spec, w.len())?;
    check_record(spec, z)?;
    let layout = Layout::of(spec);
    let mut scratch = Scratch::<f64>::new(&layout);
    Ok(record_loss_grad::<f64>(
        spec,
        &layout,
        w.values(),
        z,
        None,
        &mut scratch,
    ))
}

/// Per-record gradient of the unregularized loss.
pub fn grad(spec: &ModelSpec, w: &ParameterVector, z: &Record) -> Result<Vec<f64>, ModelError> {
    check_params(spec, w.len())?;
    check_record(spec, z)?;
    let layout = Layout::of(spec);
    let mut scratch = Scratch::<f64>::new(&layout);
    let mut g = vec![0.0; w.len()];
    record_loss_grad::<f64>(spec, &layout, w.values(), z, Some(&mut g), &mut scratch);
    Ok(g)
}

/// Mean loss over `records`.
pub fn dataset_loss(
    spec: &ModelSpec,
    w: &ParameterVector,
    records: &[&Record],
) -> Result<f64, ModelError> {
    if records.is_empty() {
        return Err(ModelError::EmptyDataset);
    }
    check_params(spec, w.len())?;
    for z in records {
        check_record(spec, z)?;
    }
    let layout = Layout::of(spec);
    let sums = exec::accumulate_vectors_with(
        records.len(),
        1,
        || Scratch::<f64>::new(&layout),
        |i, scratch, out| {
            out[0] += record_loss_grad::<f64>(spec, &layout, w.values(), records[i], None, scratch);
        },
    );
    Ok(sums[0] / records.len() as f64)
}

/// Mean loss and mean gradient over `records`.
pub fn dataset_loss_grad(
    spec: &ModelSpec,
    w: &ParameterVector,
    records: &[&Record],
) -> Result<(f64, Vec<f64>), ModelError> {
    if records.is_empty() {
        return Err(ModelError::EmptyDataset);
    }
    check_params(spec, w.len())?;
    for z in records {
        check_record(spec, z)?;
    }
    let layout = Layout::of(spec);
    let p = w.len();
    // slot p holds the loss so one deterministic reduction covers both
    let sums = exec::accumulate_vectors_with(
        records.len(),
        p + 1,
        || Scratch::<f64>::new(&layout),
        |i, scratch, out| {
            out[p] += record_loss_grad::<f64>(
                spec,
                &layout,
                w.values(),
                records[i],
                Some(&mut out[..p]),
                scratch,
            );
        },
    );
    let n = records.len() as f64;
    let mean_loss = sums[p] / n;
    let mut g = sums;
    g.truncate(p);
    g.iter_mut().for_each(|x| *x /= n);
    Ok((mean_loss, g))
}

/// Hessian-vector product `H(w) v` of the mean unregularized loss, via a
/// forward-over-reverse sweep (no dense Hessian is formed).
pub fn hvp(
    spec: &ModelSpec,
    w: &ParameterVector,
    records: &[&Record],
    v: &[f64],
) -> Result<Vec<f64>, ModelError> {
    if records.is_empty() {
        return Err(ModelError::EmptyDataset);
    }
    check_params(spec, w.len())?;
    check_params(spec, v.len())?;
    for z in records {
        check_record(spec, z)?;
    }
    let layout = Layout::of(spec);
    let sums = exec::accumulate_vectors_with(
        records.len(),
        w.len(),
        || HvpScratch::new(&layout),
        |i, scratch, out| {
            record_hvp(spec, &layout, w.values(), v, records[i], out, scratch);
        },
    );
    let n = records.len() as f64;
    Ok(sums.into_iter().map(|x| x / n).collect())
}

/// Buffers for the forward-over-reverse sweep.
struct HvpScratch {
    acts: Vec<Vec<f64>>,
    r_acts: Vec<Vec<f64>>,
    zs: Vec<Vec<f64>>,
    r_zs: Vec<Vec<f64>>,
    delta: Vec<f64>,
    r_delta: Vec<f64>,
    next: Vec<f64>,
    r_next: Vec<f64>,
    probs: Vec<f64>,
}

impl HvpScratch {
    fn new(layout: &Layout) -> Self {
        let n = layout.num_layers();
        let width = layout.max_width();
        Self {
            acts: (0..n).map(|l| vec![0.0; layout.dims[l]]).collect(),
            r_acts: (0..n).map(|l| vec![0.0; layout.dims[l]]).collect(),
            zs: (0..n).map(|l| vec![0.0; layout.dims[l + 1]]).collect(),
            r_zs: (0..n).map(|l| vec![0.0; layout.dims[l + 1]]).collect(),
            delta: vec![0.0; width],
            r_delta: vec![0.0; width],
            next: vec![0.0; width],
            r_next: vec![0.0; width],
            probs: vec![0.0; width],
        }
    }
}

/// One record's contribution to the Hessian-vector product, accumulated into
/// `out`. The forward sweep carries directional derivatives of every
/// intermediate; the backward sweep then differentiates the gradient.
fn record_hvp(
    spec: &ModelSpec,
    layout: &Layout,
    params: &[f64],
    dir: &[f64],
    z: &Record,
    out: &mut [f64],
    s: &mut HvpScratch,
) {
    let n_layers = layout.num_layers();

    // forward with tangents
    s.acts[0].copy_from_slice(&z.features);
    s.r_acts[0].iter_mut().for_each(|x| *x = 0.0);
    for l in 0..n_layers {
        let (fan_in, fan_out) = (layout.dims[l], layout.dims[l + 1]);
        let w = layout.weight(params, l);
        let b = layout.bias(params, l);
        let vw = layout.weight(dir, l);
        let vb = layout.bias(dir, l);
        for i in 0..fan_out {
            let row = &w[i * fan_in..(i + 1) * fan_in];
            let vrow = &vw[i * fan_in..(i + 1) * fan_in];
            let mut sum = b.map_or(0.0, |b| b[i]);
            let mut r_sum = vb.map_or(0.0, |vb| vb[i]);
            for j in 0..fan_in {
                sum += row[j] * s.acts[l][j];
                r_sum += vrow[j] * s.acts[l][j] + row[j] * s.r_acts[l][j];
            }
            s.zs[l][i] = sum;
            s.r_zs[l][i] = r_sum;
        }
        if l + 1 < n_layers {
            for i in 0..fan_out {
                let mask = if s.zs[l][i] > 0.0 { 1.0 } else { 0.0 };
                s.acts[l + 1][i] = s.zs[l][i] * mask;
                s.r_acts[l + 1][i] = s.r_zs[l][i] * mask;
            }
        }
    }

    // output sensitivities and their tangents
    let last = n_layers - 1;
    let out_dim = layout.dims[n_layers];
    match spec.loss {
        LossKind::SquaredError => {
            for i in 0..out_dim {
                s.delta[i] = 2.0 * (s.zs[last][i] - target_at(z.label, i));
                s.r_delta[i] = 2.0 * s.r_zs[last][i];
            }
        }
        LossKind::CrossEntropy => {
            let k = match z.label {
                Label::Class(k) => k,
                Label::Target(_) => unreachable!("checked by caller"),
            };
            let m = s.zs[last][..out_dim]
                .iter()
                .cloned()
                .fold(f64::NEG_INFINITY, f64::max);
            let mut sum = 0.0;
            for i in 0..out_dim {
                s.probs[i] = (s.zs[last][i] - m).exp();
                sum += s.probs[i];
            }
            let mut mean_r = 0.0;
            for i in 0..out_dim {
                s.probs[i] /= sum;
                mean_r += s.probs[i] * s.r_zs[last][i];
            }
            for i in 0..out_dim {
                s.delta[i] = s.probs[i] - if i == k { 1.0 } else { 0.0 };
                // R(p_i) = p_i (rz_i - sum_k p_k rz_k)
                s.r_delta[i] = s.probs[i] * (s.r_zs[last][i] - mean_r);
            }
        }
    }

    // backward, accumulating R(grad)
    for l in (0..n_layers).rev() {
        let (fan_in, fan_out) = (layout.dims[l], layout.dims[l + 1]);
        let w = layout.weight(params, l);
        let vw = layout.weight(dir, l);
        let w_off = layout.offsets[l];

        for i in 0..fan_out {
            let row = &mut out[w_off + i * fan_in..w_off + (i + 1) * fan_in];
            for ((rj, aj), raj) in row.iter_mut().zip(&s.acts[l]).zip(&s.r_acts[l]) {
                *rj += s.r_delta[i] * aj + s.delta[i] * raj;
            }
        }
        if layout.bias {
            let b_off = w_off + fan_out * fan_in;
            for i in 0..fan_out {
                out[b_off + i] += s.r_delta[i];
            }
        }

        if l > 0 {
            for j in 0..fan_in {
                s.next[j] = 0.0;
                s.r_next[j] = 0.0;
            }
            for i in 0..fan_out {
                let row = &w[i * fan_in..(i + 1) * fan_in];
                let vrow = &vw[i * fan_in..(i + 1) * fan_in];
                let (di, rdi) = (s.delta[i], s.r_delta[i]);
                for j in 0..fan_in {
                    s.next[j] += row[j] * di;
                    s.r_next[j] += vrow[j] * di + row[j] * rdi;
                }
            }
            // ReLU second derivative vanishes, only the mask survives
            for (j, zj) in s.zs[l - 1].iter().enumerate() {
                let mask = if *zj > 0.0 { 1.0 } else { 0.0 };
                s.next[j] *= mask;
                s.r_next[j] *= mask;
            }
            std::mem::swap(&mut s.delta, &mut s.next);
            std::mem::swap(&mut s.r_delta, &mut s.r_next);
        }
    }
}

/// Dense Hessian of the mean unregularized loss under the default budget.
pub fn exact_hessian(
    spec: &ModelSpec,
    w: &ParameterVector,
    records: &[&Record],
) -> Result<SymMatrix, ModelError> {
    exact_hessian_with_budget(spec, w, records, DEFAULT_HESSIAN_BUDGET_BYTES)
}

/// Dense Hessian, refusing to allocate more than `budget_bytes`.
///
/// Column `j` is the dual-number derivative of the gradient along `e_j`;
/// the result is symmetrized as `(H + H') / 2`, which makes `H == H'` exact.
pub fn exact_hessian_with_budget(
    spec: &ModelSpec,
    w: &ParameterVector,
    records: &[&Record],
    budget_bytes: usize,
) -> Result<SymMatrix, ModelError> {
    if records.is_empty() {
        return Err(ModelError::EmptyDataset);
    }
    check_params(spec, w.len())?;
    for z in records {
        check_record(spec, z)?;
    }
    let d = w.len();
    let needed = d
        .checked_mul(d)
        .and_then(|n| n.checked_mul(std::mem::size_of::<f64>()))
        .ok_or(ModelError::HessianTooLarge {
            needed: usize::MAX,
            budget: budget_bytes,
        })?;
    if needed > budget_bytes {
        return Err(ModelError::HessianTooLarge {
            needed,
            budget: budget_bytes,
        });
    }

    let layout = Layout::of(spec);
    let n = records.len() as f64;
    let columns: Vec<Vec<f64>> = exec::map_indexed(d, |j| {
        let mut scratch = Scratch::<Dual>::new(&layout);
        let params: Vec<Dual> = w
            .values()
            .iter()
            .enumerate()
            .map(|(i, &v)| Dual::new(v, if i == j { 1.0 } else { 0.0 }))
            .collect();
        let mut acc = vec![Dual::constant(0.0); d];
        for z in records {
            record_loss_grad::<Dual>(spec, &layout, &params, z, Some(&mut acc), &mut scratch);
        }
        acc.into_iter().map(|g| g.eps / n).collect()
    });

    let mut full = vec![0.0; d * d];
    for (j, col) in columns.iter().enumerate() {
        for i in 0..d {
            full[i * d + j] = col[i];
        }
    }
    Ok(SymMatrix::from_average(d, &full))
}
