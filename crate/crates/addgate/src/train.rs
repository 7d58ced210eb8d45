//! Reverse-mode backpropagation through time for every cell kind, losses,
//! the Adam optimizer, and a deterministic mini-batch training loop.
//!
//! Gradient conventions: ReLU's subgradient at 0 is 0, and the positive /
//! negative part splits x⁺, x⁻ differentiate to the indicators [x > 0] and
//! [x < 0]. The per-sequence loss is applied at the final step only, and a
//! batch gradient is the mean over its sequences.

use std::collections::BTreeMap;

use rayon::prelude::*;

use crate::cells::{
    readout, run_sequence, CellKind, CellParams, CellState, Gate, GateParams, Model,
    ReadoutActivation, ReadoutParams, StepTrace,
};
use crate::error::{Error, Result};
use crate::tensor::{matvec, matvec_t, ActivationKind, Matrix, Rng, Vector};

/// Loss applied to the final-step readout.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    Mse,
    CrossEntropy,
}

/// Mean squared error.
pub fn loss_mse(pred: &Vector, target: &Vector) -> Result<f64> {
    if pred.len() != target.len() {
        return Err(Error::shape("loss_mse", target.len(), pred.len()));
    }
    let n = pred.len() as f64;
    Ok(pred
        .iter()
        .zip(target.iter())
        .map(|(p, t)| (p - t) * (p - t))
        .sum::<f64>()
        / n)
}

/// d(MSE)/d(pred) = 2(pred − target)/n
pub fn loss_mse_grad(pred: &Vector, target: &Vector) -> Result<Vector> {
    if pred.len() != target.len() {
        return Err(Error::shape("loss_mse_grad", target.len(), pred.len()));
    }
    let n = pred.len() as f64;
    Ok(pred.zip_map(target, |p, t| 2.0 * (p - t) / n))
}

const PROB_FLOOR: f64 = 1e-12;

/// Negative log-likelihood of the true class under a probability vector.
pub fn loss_cross_entropy(probs: &Vector, class: usize) -> Result<f64> {
    if class >= probs.len() {
        return Err(Error::InvalidParameter(format!(
            "class {class} out of range for {} outputs",
            probs.len()
        )));
    }
    Ok(-probs[class].max(PROB_FLOOR).ln())
}

/// d(CE)/d(probs): −1/p at the true class, 0 elsewhere.
pub fn loss_cross_entropy_grad(probs: &Vector, class: usize) -> Result<Vector> {
    if class >= probs.len() {
        return Err(Error::InvalidParameter(format!(
            "class {class} out of range for {} outputs",
            probs.len()
        )));
    }
    let mut g = Vector::zeros(probs.len());
    g[class] = -1.0 / probs[class].max(PROB_FLOOR);
    Ok(g)
}

/// Per-parameter derivatives, shape-congruent with [`Model`].
#[derive(Debug, Clone)]
pub struct Gradients {
    pub gates: BTreeMap<Gate, GateParams>,
    pub readout_w: Matrix,
    pub readout_b: Vector,
}

impl Gradients {
    pub fn zeros_like(model: &Model) -> Self {
        let gates = model
            .cell
            .gates
            .iter()
            .map(|(&g, gp)| {
                (
                    g,
                    GateParams {
                        w: Matrix::zeros(gp.w.rows, gp.w.cols),
                        u: Matrix::zeros(gp.u.rows, gp.u.cols),
                        b: Vector::zeros(gp.b.len()),
                    },
                )
            })
            .collect();
        Gradients {
            gates,
            readout_w: Matrix::zeros(model.readout.w.rows, model.readout.w.cols),
            readout_b: Vector::zeros(model.readout.b.len()),
        }
    }

    pub fn add_assign(&mut self, other: &Gradients) {
        for (g, gp) in self.gates.iter_mut() {
            let o = &other.gates[g];
            for (a, b) in gp.w.data.iter_mut().zip(&o.w.data) {
                *a += b;
            }
            for (a, b) in gp.u.data.iter_mut().zip(&o.u.data) {
                *a += b;
            }
            gp.b.add_assign(&o.b);
        }
        for (a, b) in self.readout_w.data.iter_mut().zip(&other.readout_w.data) {
            *a += b;
        }
        self.readout_b.add_assign(&other.readout_b);
    }

    pub fn scale(&mut self, s: f64) {
        self.for_each_mut(|x| *x *= s);
    }

    /// L2 norm over every entry.
    pub fn global_norm(&self) -> f64 {
        let mut sum = 0.0;
        self.for_each(|x| sum += x * x);
        sum.sqrt()
    }

    /// Rescale so the global norm does not exceed `max_norm`.
    pub fn clip_to_norm(&mut self, max_norm: f64) {
        let norm = self.global_norm();
        if norm > max_norm && norm > 0.0 {
            self.scale(max_norm / norm);
        }
    }

    pub fn is_all_zero(&self) -> bool {
        let mut all = true;
        self.for_each(|x| all &= x == 0.0);
        all
    }

    fn for_each(&self, mut f: impl FnMut(f64)) {
        for gp in self.gates.values() {
            gp.w.data.iter().for_each(|&x| f(x));
            gp.u.data.iter().for_each(|&x| f(x));
            gp.b.iter().for_each(|&x| f(x));
        }
        self.readout_w.data.iter().for_each(|&x| f(x));
        self.readout_b.iter().for_each(|&x| f(x));
    }

    fn for_each_mut(&mut self, f: impl Fn(&mut f64)) {
        for gp in self.gates.values_mut() {
            gp.w.data.iter_mut().for_each(&f);
            gp.u.data.iter_mut().for_each(&f);
            gp.b.data.iter_mut().for_each(&f);
        }
        self.readout_w.data.iter_mut().for_each(&f);
        self.readout_b.data.iter_mut().for_each(&f);
    }
}

/// Flat parameter access over a model, in the fixed gate order. Handy for
/// finite-difference loops; `Gradients` uses the same indexing.
pub fn param_count(model: &Model) -> usize {
    let cell: usize = model
        .cell
        .gates
        .values()
        .map(|g| g.w.data.len() + g.u.data.len() + g.b.len())
        .sum();
    cell + model.readout.w.data.len() + model.readout.b.len()
}

fn flat_slot<'a>(
    gates: impl Iterator<Item = &'a mut GateParams>,
    readout_w: &'a mut Matrix,
    readout_b: &'a mut Vector,
    mut idx: usize,
) -> Option<&'a mut f64> {
    for gp in gates {
        for seg in [&mut gp.w.data, &mut gp.u.data, &mut gp.b.data] {
            if idx < seg.len() {
                return Some(&mut seg[idx]);
            }
            idx -= seg.len();
        }
    }
    for seg in [&mut readout_w.data, &mut readout_b.data] {
        if idx < seg.len() {
            return Some(&mut seg[idx]);
        }
        idx -= seg.len();
    }
    None
}

pub fn get_param(model: &mut Model, idx: usize) -> f64 {
    *flat_slot(
        model.cell.gates.values_mut(),
        &mut model.readout.w,
        &mut model.readout.b,
        idx,
    )
    .expect("parameter index out of range")
}

pub fn set_param(model: &mut Model, idx: usize, value: f64) {
    *flat_slot(
        model.cell.gates.values_mut(),
        &mut model.readout.w,
        &mut model.readout.b,
        idx,
    )
    .expect("parameter index out of range") = value;
}

pub fn get_gradient(grads: &mut Gradients, idx: usize) -> f64 {
    *flat_slot(
        grads.gates.values_mut(),
        &mut grads.readout_w,
        &mut grads.readout_b,
        idx,
    )
    .expect("gradient index out of range")
}

/// Gradient of the loss w.r.t. the readout pre-activation, given the
/// gradient w.r.t. the readout output.
fn readout_pre_grad(activation: ReadoutActivation, pre: &Vector, gy: &Vector) -> Vector {
    match activation {
        ReadoutActivation::Identity => gy.clone(),
        ReadoutActivation::Tanh => elementwise_pre_grad(ActivationKind::Tanh, pre, gy),
        ReadoutActivation::Sigmoid => elementwise_pre_grad(ActivationKind::Sigmoid, pre, gy),
        ReadoutActivation::Relu => elementwise_pre_grad(ActivationKind::Relu, pre, gy),
        ReadoutActivation::Softmax => {
            // Jᵀg = p ⊙ (g − p·g)
            let p = crate::cells::softmax(pre);
            let pg = p.dot(gy);
            p.zip_map(gy, |pi, gi| pi * (gi - pg))
        }
    }
}

fn elementwise_pre_grad(kind: ActivationKind, pre: &Vector, gy: &Vector) -> Vector {
    let post = crate::tensor::apply_activation(kind, pre);
    Vector::from_vec(
        pre.iter()
            .zip(post.iter())
            .zip(gy.iter())
            .map(|((&a, &p), &g)| g * kind.derivative(a, p))
            .collect(),
    )
}

/// Indicator [x > 0] as a float.
fn pos_ind(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else {
        0.0
    }
}

/// Indicator [x < 0] as a float.
fn neg_ind(x: f64) -> f64 {
    if x < 0.0 {
        1.0
    } else {
        0.0
    }
}

/// Accumulate one gate's weight gradients given the gradient at its linear
/// pre-activation, and return the contribution to dh_prev from its U kernel.
fn accumulate_gate(
    grads: &mut Gradients,
    params: &CellParams,
    gate: Gate,
    d_pre: &Vector,
    x: &Vector,
    state: &Vector,
) -> Result<Vector> {
    let slot = grads
        .gates
        .get_mut(&gate)
        .ok_or_else(|| Error::InvalidParameter(format!("missing {} gradient slot", gate.name())))?;
    slot.w.add_outer(d_pre, x);
    slot.u.add_outer(d_pre, state);
    slot.b.add_assign(d_pre);
    matvec_t(&params.gate(gate)?.u, d_pre)
}

fn sigmoid_pre_grad(d_post: &Vector, post: &Vector) -> Vector {
    d_post.zip_map(post, |d, s| d * s * (1.0 - s))
}

fn activation_pre_grad(kind: ActivationKind, d_post: &Vector, pre: &Vector, post: &Vector) -> Vector {
    Vector::from_vec(
        d_post
            .iter()
            .zip(pre.iter())
            .zip(post.iter())
            .map(|((&d, &a), &p)| d * kind.derivative(a, p))
            .collect(),
    )
}

/// One reverse step. Consumes dL/dh_t (and dL/dc_t where applicable),
/// accumulates parameter gradients, and returns (dL/dh_{t-1}, dL/dc_{t-1}).
fn backward_step(
    p: &CellParams,
    tr: &StepTrace,
    dh: &Vector,
    dc: Option<&Vector>,
    grads: &mut Gradients,
) -> Result<(Vector, Option<Vector>)> {
    let x = &tr.x;
    let h_prev = &tr.h_prev;
    match p.kind {
        CellKind::SimpleRnn => {
            let pre = &tr.pre[&Gate::Proposal];
            let post = &tr.post[&Gate::Proposal];
            let d_pre = activation_pre_grad(p.proposal_activation, dh, pre, post);
            let dh_prev = accumulate_gate(grads, p, Gate::Proposal, &d_pre, x, h_prev)?;
            Ok((dh_prev, None))
        }
        CellKind::Gru => {
            let z = &tr.post[&Gate::Update];
            let r = &tr.post[&Gate::Reset];
            let h_hat = &tr.post[&Gate::Proposal];
            let gated_h = tr.prop_state.as_ref().expect("gru trace has prop state");

            let dz = dh.zip_map(h_prev, |d, h| d * h).sub(&dh.hadamard(h_hat));
            let d_hat = dh.zip_map(z, |d, zi| d * (1.0 - zi));
            let mut dh_prev = dh.hadamard(z);

            let d_pre_h = activation_pre_grad(
                p.proposal_activation,
                &d_hat,
                &tr.pre[&Gate::Proposal],
                h_hat,
            );
            let d_gated = accumulate_gate(grads, p, Gate::Proposal, &d_pre_h, x, gated_h)?;
            let dr = d_gated.hadamard(h_prev);
            dh_prev.add_assign(&d_gated.hadamard(r));

            let d_pre_z = sigmoid_pre_grad(&dz, z);
            dh_prev.add_assign(&accumulate_gate(grads, p, Gate::Update, &d_pre_z, x, h_prev)?);
            let d_pre_r = sigmoid_pre_grad(&dr, r);
            dh_prev.add_assign(&accumulate_gate(grads, p, Gate::Reset, &d_pre_r, x, h_prev)?);
            Ok((dh_prev, None))
        }
        CellKind::Lstm => {
            let f = &tr.post[&Gate::Forget];
            let i = &tr.post[&Gate::Input];
            let o = &tr.post[&Gate::Output];
            let c_hat = &tr.post[&Gate::Candidate];
            let c_prev = tr.c_prev.as_ref().expect("lstm trace has c_prev");
            let c_new = tr.c_new.as_ref().expect("lstm trace has c_new");

            let act_c = crate::tensor::apply_activation(p.output_activation, c_new);
            let d_o = dh.hadamard(&act_c);
            let mut d_c = dc.cloned().unwrap_or_else(|| Vector::zeros(p.units));
            let through_h = Vector::from_vec(
                dh.iter()
                    .zip(o.iter())
                    .zip(c_new.iter().zip(act_c.iter()))
                    .map(|((&d, &oi), (&cn, &ac))| {
                        d * oi * p.output_activation.derivative(cn, ac)
                    })
                    .collect(),
            );
            d_c.add_assign(&through_h);

            let d_f = d_c.hadamard(c_prev);
            let d_i = d_c.hadamard(c_hat);
            let d_hat = d_c.hadamard(i);
            let dc_prev = d_c.hadamard(f);

            let mut dh_prev = Vector::zeros(p.units);
            let d_pre_f = sigmoid_pre_grad(&d_f, f);
            dh_prev.add_assign(&accumulate_gate(grads, p, Gate::Forget, &d_pre_f, x, h_prev)?);
            let d_pre_i = sigmoid_pre_grad(&d_i, i);
            dh_prev.add_assign(&accumulate_gate(grads, p, Gate::Input, &d_pre_i, x, h_prev)?);
            let d_pre_o = sigmoid_pre_grad(&d_o, o);
            dh_prev.add_assign(&accumulate_gate(grads, p, Gate::Output, &d_pre_o, x, h_prev)?);
            let d_pre_c = activation_pre_grad(
                p.proposal_activation,
                &d_hat,
                &tr.pre[&Gate::Candidate],
                c_hat,
            );
            dh_prev.add_assign(&accumulate_gate(
                grads,
                p,
                Gate::Candidate,
                &d_pre_c,
                x,
                h_prev,
            )?);
            Ok((dh_prev, Some(dc_prev)))
        }
        CellKind::Gnu => {
            let z = &tr.post[&Gate::Update];
            let h_hat = &tr.post[&Gate::Proposal];

            let dz = dh.zip_map(h_prev, |d, h| d * h).sub(&dh.hadamard(h_hat));
            let d_hat = dh.zip_map(z, |d, zi| d * (1.0 - zi));
            let mut dh_prev = dh.hadamard(z);

            let d_pre_h = activation_pre_grad(
                p.proposal_activation,
                &d_hat,
                &tr.pre[&Gate::Proposal],
                h_hat,
            );
            dh_prev.add_assign(&accumulate_gate(grads, p, Gate::Proposal, &d_pre_h, x, h_prev)?);
            let d_pre_z = sigmoid_pre_grad(&dz, z);
            dh_prev.add_assign(&accumulate_gate(grads, p, Gate::Update, &d_pre_z, x, h_prev)?);
            Ok((dh_prev, None))
        }
        CellKind::AGnu => {
            let u = &tr.post[&Gate::Update];
            let h_hat = &tr.post[&Gate::Proposal];

            // h_t = (h + u⁻)⁺ + (ĥ − u⁺)⁺
            let keep_arg = h_prev.zip_map(u, |h, ui| h + ui.min(0.0));
            let swap_arg = h_hat.zip_map(u, |hh, ui| hh - ui.max(0.0));
            let g_keep = dh.zip_map(&keep_arg, |d, s| d * pos_ind(s));
            let g_swap = dh.zip_map(&swap_arg, |d, s| d * pos_ind(s));

            let dh_prev0 = g_keep.clone();
            let du = g_keep
                .zip_map(u, |g, ui| g * neg_ind(ui))
                .sub(&g_swap.zip_map(u, |g, ui| g * pos_ind(ui)));
            let d_hat = g_swap;

            let mut dh_prev = dh_prev0;
            let d_pre_h = activation_pre_grad(
                p.proposal_activation,
                &d_hat,
                &tr.pre[&Gate::Proposal],
                h_hat,
            );
            dh_prev.add_assign(&accumulate_gate(grads, p, Gate::Proposal, &d_pre_h, x, h_prev)?);
            dh_prev.add_assign(&accumulate_gate(grads, p, Gate::Update, &du, x, h_prev)?);
            Ok((dh_prev, None))
        }
        CellKind::AGru => {
            let u = &tr.post[&Gate::Update];
            let r = &tr.post[&Gate::Reset];
            let h_hat = &tr.post[&Gate::Proposal];
            let reset_h = tr.prop_state.as_ref().expect("agru trace has prop state");

            let keep_arg = h_prev.zip_map(u, |h, ui| h + ui.min(0.0));
            let swap_arg = h_hat.zip_map(u, |hh, ui| hh - ui.max(0.0));
            let g_keep = dh.zip_map(&keep_arg, |d, s| d * pos_ind(s));
            let g_swap = dh.zip_map(&swap_arg, |d, s| d * pos_ind(s));

            let du = g_keep
                .zip_map(u, |g, ui| g * neg_ind(ui))
                .sub(&g_swap.zip_map(u, |g, ui| g * pos_ind(ui)));
            let mut dh_prev = g_keep;

            let d_pre_h = activation_pre_grad(
                p.proposal_activation,
                &g_swap,
                &tr.pre[&Gate::Proposal],
                h_hat,
            );
            let d_reset_h = accumulate_gate(grads, p, Gate::Proposal, &d_pre_h, x, reset_h)?;

            // reset_h = (h + r⁻)⁺
            let reset_arg = h_prev.zip_map(r, |h, ri| h + ri.min(0.0));
            let g_reset = d_reset_h.zip_map(&reset_arg, |d, s| d * pos_ind(s));
            dh_prev.add_assign(&g_reset);
            let dr = g_reset.zip_map(r, |g, ri| g * neg_ind(ri));

            dh_prev.add_assign(&accumulate_gate(grads, p, Gate::Reset, &dr, x, h_prev)?);
            dh_prev.add_assign(&accumulate_gate(grads, p, Gate::Update, &du, x, h_prev)?);
            Ok((dh_prev, None))
        }
        CellKind::AGruShifted => {
            let u = &tr.post[&Gate::Update];
            let r = &tr.post[&Gate::Reset];
            let h_hat = &tr.post[&Gate::Proposal];
            let reset_h = tr.prop_state.as_ref().expect("shifted trace has prop state");

            // h'_t = (h' + (u−1)⁻ + 1)⁺ + (ĥ − (u+1)⁺ + 1)⁺ − 1
            let keep_arg = h_prev.zip_map(u, |h, ui| h + (ui - 1.0).min(0.0) + 1.0);
            let swap_arg = h_hat.zip_map(u, |hh, ui| hh - (ui + 1.0).max(0.0) + 1.0);
            let g_keep = dh.zip_map(&keep_arg, |d, s| d * pos_ind(s));
            let g_swap = dh.zip_map(&swap_arg, |d, s| d * pos_ind(s));

            let du = g_keep
                .zip_map(u, |g, ui| g * neg_ind(ui - 1.0))
                .sub(&g_swap.zip_map(u, |g, ui| g * pos_ind(ui + 1.0)));
            let mut dh_prev = g_keep;

            let d_pre_h = activation_pre_grad(
                p.proposal_activation,
                &g_swap,
                &tr.pre[&Gate::Proposal],
                h_hat,
            );
            let d_reset_h = accumulate_gate(grads, p, Gate::Proposal, &d_pre_h, x, reset_h)?;

            let reset_arg = h_prev.zip_map(r, |h, ri| h + ri.min(0.0));
            let g_reset = d_reset_h.zip_map(&reset_arg, |d, s| d * pos_ind(s));
            dh_prev.add_assign(&g_reset);
            let dr = g_reset.zip_map(r, |g, ri| g * neg_ind(ri));

            dh_prev.add_assign(&accumulate_gate(grads, p, Gate::Reset, &dr, x, h_prev)?);
            dh_prev.add_assign(&accumulate_gate(grads, p, Gate::Update, &du, x, h_prev)?);
            Ok((dh_prev, None))
        }
        CellKind::ALstm => {
            let f = &tr.post[&Gate::Forget];
            let i = &tr.post[&Gate::Input];
            let o = &tr.post[&Gate::Output];
            let c_hat = &tr.post[&Gate::Candidate];
            let c_prev = tr.c_prev.as_ref().expect("alstm trace has c_prev");
            let c_new = tr.c_new.as_ref().expect("alstm trace has c_new");

            // h_t = φ_h⁺(c_t − o)
            let out_pre = c_new.sub(o);
            let out_post = crate::tensor::apply_activation(p.output_activation, &out_pre);
            let d_out_pre = activation_pre_grad(p.output_activation, dh, &out_pre, &out_post);
            let d_o_post = d_out_pre.scale(-1.0);
            let mut d_c = dc.cloned().unwrap_or_else(|| Vector::zeros(p.units));
            d_c.add_assign(&d_out_pre);

            // c_t = (c − f)⁺ + (ĉ − i)⁺
            let keep_arg = c_prev.sub(f);
            let new_arg = c_hat.sub(i);
            let g_keep = d_c.zip_map(&keep_arg, |d, s| d * pos_ind(s));
            let g_new = d_c.zip_map(&new_arg, |d, s| d * pos_ind(s));

            let dc_prev = g_keep.clone();
            let d_f_post = g_keep.scale(-1.0);
            let d_i_post = g_new.scale(-1.0);
            let d_hat = g_new;

            let relu_pre = |gate: Gate, d_post: &Vector| -> Vector {
                d_post.zip_map(&tr.pre[&gate], |d, a| d * pos_ind(a))
            };
            let mut dh_prev = Vector::zeros(p.units);
            let d_pre_f = relu_pre(Gate::Forget, &d_f_post);
            dh_prev.add_assign(&accumulate_gate(grads, p, Gate::Forget, &d_pre_f, x, h_prev)?);
            let d_pre_i = relu_pre(Gate::Input, &d_i_post);
            dh_prev.add_assign(&accumulate_gate(grads, p, Gate::Input, &d_pre_i, x, h_prev)?);
            let d_pre_o = relu_pre(Gate::Output, &d_o_post);
            dh_prev.add_assign(&accumulate_gate(grads, p, Gate::Output, &d_pre_o, x, h_prev)?);
            let d_pre_c = activation_pre_grad(
                p.proposal_activation,
                &d_hat,
                &tr.pre[&Gate::Candidate],
                c_hat,
            );
            dh_prev.add_assign(&accumulate_gate(
                grads,
                p,
                Gate::Candidate,
                &d_pre_c,
                x,
                h_prev,
            )?);
            Ok((dh_prev, Some(dc_prev)))
        }
    }
}

/// Reverse-mode gradients of a final-step loss w.r.t. every parameter.
///
/// `output_grad` is dL/dy at the final readout output. Traces must have
/// been recorded for every step of the forward pass.
pub fn bptt(model: &Model, traces: &[StepTrace], output_grad: &Vector) -> Result<Gradients> {
    bptt_detailed(model, traces, output_grad).map(|(g, _)| g)
}

/// Like [`bptt`] but also reports ‖dL/dh_t‖₂ for each step, which makes
/// gradient decay over long sequences observable.
pub fn bptt_detailed(
    model: &Model,
    traces: &[StepTrace],
    output_grad: &Vector,
) -> Result<(Gradients, Vec<f64>)> {
    if traces.is_empty() {
        return Err(Error::Empty("bptt traces"));
    }
    let mut grads = Gradients::zeros_like(model);

    let h_final = &traces.last().unwrap().h_new;
    let mut pre = matvec(&model.readout.w, h_final)?;
    pre.add_assign(&model.readout.b);
    let d_pre = readout_pre_grad(model.readout.activation, &pre, output_grad);
    grads.readout_w.add_outer(&d_pre, h_final);
    grads.readout_b.add_assign(&d_pre);

    let mut dh = matvec_t(&model.readout.w, &d_pre)?;
    let mut dc: Option<Vector> = model
        .cell
        .kind
        .has_memory_cell()
        .then(|| Vector::zeros(model.cell.units));
    let mut norms = vec![0.0; traces.len()];
    for (t, tr) in traces.iter().enumerate().rev() {
        norms[t] = dh.norm2();
        let (dh_prev, dc_prev) = backward_step(&model.cell, tr, &dh, dc.as_ref(), &mut grads)?;
        dh = dh_prev;
        dc = dc_prev;
    }
    Ok((grads, norms))
}

/// Adam optimizer state. Updates are applied in place on the model; the
/// moment accumulators live here, shape-congruent with the parameters.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub m: Gradients,
    pub v: Gradients,
    pub step_count: u64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamState {
    pub fn new(model: &Model, lr: f64, beta1: f64, beta2: f64, epsilon: f64) -> Self {
        AdamState {
            m: Gradients::zeros_like(model),
            v: Gradients::zeros_like(model),
            step_count: 0,
            lr,
            beta1,
            beta2,
            epsilon,
        }
    }
}

fn adam_update_slice(
    params: &mut [f64],
    grads: &[f64],
    m: &mut [f64],
    v: &mut [f64],
    state_lr: f64,
    beta1: f64,
    beta2: f64,
    epsilon: f64,
    bc1: f64,
    bc2: f64,
    context: &'static str,
) -> Result<()> {
    if params.len() != grads.len() || params.len() != m.len() || params.len() != v.len() {
        return Err(Error::shape(context, params.len(), grads.len()));
    }
    for idx in 0..params.len() {
        let g = grads[idx];
        m[idx] = beta1 * m[idx] + (1.0 - beta1) * g;
        v[idx] = beta2 * v[idx] + (1.0 - beta2) * g * g;
        let m_hat = m[idx] / bc1;
        let v_hat = v[idx] / bc2;
        params[idx] -= state_lr * m_hat / (v_hat.sqrt() + epsilon);
    }
    Ok(())
}

/// One bias-corrected Adam step, applied in place.
pub fn adam_step(state: &mut AdamState, model: &mut Model, grads: &Gradients) -> Result<()> {
    state.step_count += 1;
    let t = state.step_count as i32;
    let bc1 = 1.0 - state.beta1.powi(t);
    let bc2 = 1.0 - state.beta2.powi(t);
    for (gate, gp) in model.cell.gates.iter_mut() {
        let gg = grads
            .gates
            .get(gate)
            .ok_or_else(|| Error::shape("adam gate set", gate.name(), "missing"))?;
        let sm = state.m.gates.get_mut(gate).expect("congruent m");
        let sv = state.v.gates.get_mut(gate).expect("congruent v");
        adam_update_slice(
            &mut gp.w.data, &gg.w.data, &mut sm.w.data, &mut sv.w.data,
            state.lr, state.beta1, state.beta2, state.epsilon, bc1, bc2, "adam gate W",
        )?;
        adam_update_slice(
            &mut gp.u.data, &gg.u.data, &mut sm.u.data, &mut sv.u.data,
            state.lr, state.beta1, state.beta2, state.epsilon, bc1, bc2, "adam gate U",
        )?;
        adam_update_slice(
            &mut gp.b.data, &gg.b.data, &mut sm.b.data, &mut sv.b.data,
            state.lr, state.beta1, state.beta2, state.epsilon, bc1, bc2, "adam gate b",
        )?;
    }
    adam_update_slice(
        &mut model.readout.w.data, &grads.readout_w.data,
        &mut state.m.readout_w.data, &mut state.v.readout_w.data,
        state.lr, state.beta1, state.beta2, state.epsilon, bc1, bc2, "adam readout W",
    )?;
    adam_update_slice(
        &mut model.readout.b.data, &grads.readout_b.data,
        &mut state.m.readout_b.data, &mut state.v.readout_b.data,
        state.lr, state.beta1, state.beta2, state.epsilon, bc1, bc2, "adam readout b",
    )?;
    Ok(())
}

/// Training target for one sequence.
#[derive(Debug, Clone)]
pub enum Target {
    /// Regression values, compared by MSE at the final step.
    Values(Vector),
    /// Class index, scored by cross-entropy at the final step.
    Class(usize),
}

/// One training sequence with its final-step target.
#[derive(Debug, Clone)]
pub struct TrainSample {
    pub xs: Vec<Vector>,
    pub target: Target,
}

/// Mini-batch training configuration.
#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub loss: LossKind,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Optional global-norm gradient clipping.
    pub clip_norm: Option<f64>,
    /// Stop after an epoch whose test loss drops below this threshold.
    pub stop_below_test_loss: Option<f64>,
    /// Evaluate sequences of a batch on parallel workers. The reduction
    /// order is fixed, so results match the sequential path bit for bit.
    pub parallel: bool,
}

impl TrainConfig {
    pub fn new(seed: u64) -> Self {
        TrainConfig {
            batch_size: 64,
            epochs: 10,
            seed,
            loss: LossKind::Mse,
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            clip_norm: None,
            parallel: true,
        }
    }
}

/// Per-epoch loss and metric record.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub test_loss: Option<f64>,
    /// MSE for regression, accuracy for classification.
    pub test_metric: Option<f64>,
}

fn forward_loss(model: &Model, sample: &TrainSample, loss: LossKind) -> Result<(f64, bool)> {
    let init = CellState::zeros(model.cell.kind, model.cell.units);
    let run = run_sequence(&model.cell, &init, &sample.xs, false)?;
    let y = readout(&model.readout, &run.final_state.h)?;
    match (&sample.target, loss) {
        (Target::Values(t), LossKind::Mse) => Ok((loss_mse(&y, t)?, false)),
        (Target::Class(c), LossKind::CrossEntropy) => {
            let correct = argmax(&y) == *c;
            Ok((loss_cross_entropy(&y, *c)?, correct))
        }
        _ => Err(Error::InvalidParameter(
            "loss kind does not match the sample's target kind".into(),
        )),
    }
}

fn argmax(v: &Vector) -> usize {
    let mut best = 0;
    for i in 1..v.len() {
        if v[i] > v[best] {
            best = i;
        }
    }
    best
}

/// Loss and gradients for a single sequence.
pub fn sequence_gradients(
    model: &Model,
    sample: &TrainSample,
    loss: LossKind,
) -> Result<(f64, Gradients)> {
    if sample.xs.is_empty() {
        return Err(Error::Empty("training sequence"));
    }
    let init = CellState::zeros(model.cell.kind, model.cell.units);
    let run = run_sequence(&model.cell, &init, &sample.xs, true)?;
    let traces = run.traces.expect("recording requested");
    let y = readout(&model.readout, &run.final_state.h)?;
    let (loss_val, gy) = match (&sample.target, loss) {
        (Target::Values(t), LossKind::Mse) => (loss_mse(&y, t)?, loss_mse_grad(&y, t)?),
        (Target::Class(c), LossKind::CrossEntropy) => (
            loss_cross_entropy(&y, *c)?,
            loss_cross_entropy_grad(&y, *c)?,
        ),
        _ => {
            return Err(Error::InvalidParameter(
                "loss kind does not match the sample's target kind".into(),
            ))
        }
    };
    let grads = bptt(model, &traces, &gy)?;
    Ok((loss_val, grads))
}

/// Mean loss and metric over a dataset (MSE for regression, accuracy for
/// classification). Evaluation is read-only and deterministic.
pub fn evaluate(model: &Model, set: &[TrainSample], loss: LossKind) -> Result<(f64, f64)> {
    if set.is_empty() {
        return Err(Error::Empty("evaluation set"));
    }
    let results: Vec<Result<(f64, bool)>> = set
        .par_iter()
        .map(|s| forward_loss(model, s, loss))
        .collect();
    let mut total = 0.0;
    let mut correct = 0usize;
    for r in results {
        let (l, c) = r?;
        total += l;
        correct += c as usize;
    }
    let mean_loss = total / set.len() as f64;
    let metric = match loss {
        LossKind::Mse => mean_loss,
        LossKind::CrossEntropy => correct as f64 / set.len() as f64,
    };
    Ok((mean_loss, metric))
}

/// Deterministic mini-batch training. Shuffling, batching, and updates are
/// functions of the seed alone; re-running a configuration reproduces the
/// metric history bit for bit.
pub fn train(
    model: &mut Model,
    train_set: &[TrainSample],
    test_set: Option<&[TrainSample]>,
    cfg: &TrainConfig,
) -> Result<Vec<EpochStats>> {
    if train_set.is_empty() {
        return Err(Error::Empty("training set"));
    }
    if cfg.batch_size == 0 {
        return Err(Error::InvalidParameter("batch_size must be >= 1".into()));
    }
    if cfg.epochs == 0 {
        return Err(Error::InvalidParameter("epochs must be >= 1".into()));
    }
    if cfg.loss == LossKind::CrossEntropy
        && model.readout.activation != ReadoutActivation::Softmax
    {
        return Err(Error::InvalidParameter(
            "cross-entropy training expects a softmax readout".into(),
        ));
    }

    let mut rng = Rng::seed_from_u64(cfg.seed);
    let mut adam = AdamState::new(model, cfg.lr, cfg.beta1, cfg.beta2, cfg.epsilon);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);

    for epoch in 1..=cfg.epochs {
        // Fisher-Yates shuffle driven by the seeded generator.
        for i in (1..order.len()).rev() {
            let j = rng.uniform_index(i + 1);
            order.swap(i, j);
        }

        let mut epoch_loss = 0.0;
        for (batch_idx, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let results: Vec<Result<(f64, Gradients)>> = if cfg.parallel {
                chunk
                    .par_iter()
                    .map(|&i| sequence_gradients(model, &train_set[i], cfg.loss))
                    .collect()
            } else {
                chunk
                    .iter()
                    .map(|&i| sequence_gradients(model, &train_set[i], cfg.loss))
                    .collect()
            };
            // Ordered, sequential reduction keeps the sum bit-reproducible
            // regardless of worker count.
            let mut batch_grads = Gradients::zeros_like(model);
            let mut batch_loss = 0.0;
            for r in results {
                let (l, g) = r?;
                batch_loss += l;
                batch_grads.add_assign(&g);
            }
            let inv = 1.0 / chunk.len() as f64;
            batch_loss *= inv;
            batch_grads.scale(inv);
            if !batch_loss.is_finite() {
                return Err(Error::NonFiniteLoss {
                    epoch,
                    batch: batch_idx,
                    value: batch_loss,
                });
            }
            if let Some(max_norm) = cfg.clip_norm {
                batch_grads.clip_to_norm(max_norm);
            }
            adam_step(&mut adam, model, &batch_grads)?;
            epoch_loss += batch_loss * chunk.len() as f64;
        }
        let train_loss = epoch_loss / train_set.len() as f64;

        let (test_loss, test_metric) = match test_set {
            Some(ts) => {
                let (l, m) = evaluate(model, ts, cfg.loss)?;
                (Some(l), Some(m))
            }
            None => (None, None),
        };
        history.push(EpochStats {
            epoch,
            train_loss,
            test_loss,
            test_metric,
        });
    }
    Ok(history)
}

/// Write the metric history as CSV: `epoch,split,loss,metric`. Train rows
/// leave the metric column empty.
pub fn write_history_csv(path: impl AsRef<std::path::Path>, history: &[EpochStats]) -> Result<()> {
    let mut out = String::from("epoch,split,loss,metric\n");
    for row in history {
        out.push_str(&format!("{},train,{},\n", row.epoch, row.train_loss));
        if let (Some(l), Some(m)) = (row.test_loss, row.test_metric) {
            out.push_str(&format!("{},test,{},{}\n", row.epoch, l, m));
        }
    }
    std::fs::write(path.as_ref(), out).map_err(|e| Error::io(path.as_ref(), e))
}

/// Uniform Xavier initialization: kernels in ±√(6/(fan_in+fan_out)),
/// biases zero. Deterministic for a given generator state.
pub fn init_cell_params(
    kind: CellKind,
    input_dim: usize,
    units: usize,
    rng: &mut Rng,
) -> CellParams {
    let mut p = CellParams::zeros(kind, input_dim, units);
    let w_bound = (6.0 / (input_dim + units) as f64).sqrt();
    let u_bound = (6.0 / (units + units) as f64).sqrt();
    for gp in p.gates.values_mut() {
        for v in gp.w.data.iter_mut() {
            *v = rng.uniform_range(-w_bound, w_bound);
        }
        for v in gp.u.data.iter_mut() {
            *v = rng.uniform_range(-u_bound, u_bound);
        }
    }
    p
}

/// Xavier-initialized readout head.
pub fn init_readout_params(
    units: usize,
    out_dim: usize,
    activation: ReadoutActivation,
    rng: &mut Rng,
) -> ReadoutParams {
    let mut r = ReadoutParams::zeros(units, out_dim, activation);
    let bound = (6.0 / (units + out_dim) as f64).sqrt();
    for v in r.w.data.iter_mut() {
        *v = rng.uniform_range(-bound, bound);
    }
    r
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cells::Gate;
    use crate::tensor::Matrix;

    fn assert_close(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "{a} vs {b} (tol {tol})");
    }

    fn small_model(kind: CellKind, input_dim: usize, units: usize, seed: u64) -> Model {
        let mut rng = Rng::seed_from_u64(seed);
        let cell = init_cell_params(kind, input_dim, units, &mut rng);
        let readout = init_readout_params(units, 1, ReadoutActivation::Identity, &mut rng);
        Model { cell, readout }
    }

    fn random_sample(input_dim: usize, len: usize, seed: u64) -> TrainSample {
        let mut rng = Rng::seed_from_u64(seed);
        let xs = (0..len)
            .map(|_| {
                Vector::from_vec((0..input_dim).map(|_| rng.uniform_range(-1.0, 1.0)).collect())
            })
            .collect();
        TrainSample {
            xs,
            target: Target::Values(Vector::from_vec(vec![rng.uniform_range(-1.0, 1.0)])),
        }
    }

    #[test]
    fn mse_examples() {
        let a = Vector::from_vec(vec![0.5, -1.0]);
        assert_eq!(loss_mse(&a, &a).unwrap(), 0.0);
        assert_eq!(
            loss_mse(&Vector::from_vec(vec![0.0]), &Vector::from_vec(vec![1.0])).unwrap(),
            1.0
        );
        assert_eq!(
            loss_mse(
                &Vector::from_vec(vec![0.0, 1.0]),
                &Vector::from_vec(vec![1.0, 0.0])
            )
            .unwrap(),
            1.0
        );
        assert!(loss_mse(&a, &Vector::zeros(3)).is_err());
    }

    #[test]
    fn zero_output_grad_gives_zero_gradients() {
        let model = small_model(CellKind::Gru, 2, 3, 1);
        let sample = random_sample(2, 4, 2);
        let init = CellState::zeros(CellKind::Gru, 3);
        let run = run_sequence(&model.cell, &init, &sample.xs, true).unwrap();
        let grads = bptt(&model, &run.traces.unwrap(), &Vector::zeros(1)).unwrap();
        assert!(grads.is_all_zero());
    }

    #[test]
    fn bptt_without_traces_errors() {
        let model = small_model(CellKind::Gru, 2, 3, 1);
        assert!(matches!(
            bptt(&model, &[], &Vector::zeros(1)),
            Err(Error::Empty(_))
        ));
    }

    /// Central finite differences over every parameter; the oracle touches
    /// only the forward pass, never the reverse-mode code it checks.
    fn finite_difference_check(kind: CellKind, seed: u64, len: usize) -> (f64, usize) {
        let input_dim = 2;
        let units = 3;
        let mut model = small_model(kind, input_dim, units, seed);
        let sample = random_sample(input_dim, len, seed ^ 0xABCD);

        let loss_of = |m: &Model| -> f64 {
            let init = CellState::zeros(m.cell.kind, m.cell.units);
            let run = run_sequence(&m.cell, &init, &sample.xs, false).unwrap();
            let y = readout(&m.readout, &run.final_state.h).unwrap();
            match &sample.target {
                Target::Values(t) => loss_mse(&y, t).unwrap(),
                Target::Class(c) => loss_cross_entropy(&y, *c).unwrap(),
            }
        };

        let mut grads = {
            let init = CellState::zeros(kind, units);
            let run = run_sequence(&model.cell, &init, &sample.xs, true).unwrap();
            let y = readout(&model.readout, &run.final_state.h).unwrap();
            let gy = match &sample.target {
                Target::Values(t) => loss_mse_grad(&y, t).unwrap(),
                Target::Class(c) => loss_cross_entropy_grad(&y, *c).unwrap(),
            };
            bptt(&model, &run.traces.unwrap(), &gy).unwrap()
        };

        let eps = 1e-5;
        let mut worst = 0.0f64;
        let n = param_count(&model);
        for idx in 0..n {
            let orig = get_param(&mut model, idx);
            set_param(&mut model, idx, orig + eps);
            let up = loss_of(&model);
            set_param(&mut model, idx, orig - eps);
            let down = loss_of(&model);
            set_param(&mut model, idx, orig);
            let fd = (up - down) / (2.0 * eps);
            let an = get_gradient(&mut grads, idx);
            let denom = an.abs().max(fd.abs()).max(1e-6);
            worst = worst.max((an - fd).abs() / denom);
        }
        (worst, n)
    }

    #[test]
    fn gradients_match_finite_differences_for_every_kind() {
        for kind in CellKind::ALL {
            // Retry with a fresh draw if a configuration lands on a ReLU
            // kink, where two-sided differences are not meaningful.
            let mut passed = false;
            for attempt in 0..3 {
                let (worst, _) = finite_difference_check(kind, 100 + attempt, 4);
                if worst < 1e-4 {
                    passed = true;
                    break;
                }
            }
            assert!(passed, "{}: finite-difference check failed", kind.name());
        }
    }

    #[test]
    fn scalar_agnu_single_step_matches_finite_differences() {
        let (worst, n) = finite_difference_check(CellKind::AGnu, 7, 1);
        assert!(n > 0);
        assert!(worst < 1e-4, "worst relative error {worst}");
    }

    #[test]
    fn gradient_decays_in_simple_rnn_but_passes_through_saturated_gnu() {
        let units = 4;
        let len = 100;
        let mut rng = Rng::seed_from_u64(42);

        // Simple RNN with the recurrent kernel scaled to spectral norm 1.
        let mut cell = init_cell_params(CellKind::SimpleRnn, 1, units, &mut rng);
        let u = &mut cell.gate_mut(Gate::Proposal).unwrap().u;
        let norm = spectral_norm(u);
        for v in u.data.iter_mut() {
            *v /= norm;
        }
        let readout = init_readout_params(units, 1, ReadoutActivation::Identity, &mut rng);
        let model = Model { cell, readout };
        let sample = random_sample(1, len, 3);
        let run = run_sequence(
            &model.cell,
            &CellState::zeros(CellKind::SimpleRnn, units),
            &sample.xs,
            true,
        )
        .unwrap();
        let (_, norms) =
            bptt_detailed(&model, &run.traces.unwrap(), &Vector::from_vec(vec![1.0])).unwrap();
        let rnn_ratio = norms[0] / norms[len - 1];
        assert!(
            rnn_ratio < 1e-2,
            "expected geometric decay, got ratio {rnn_ratio}"
        );
        // Decay is monotone in the large: early gradients are far below
        // mid-sequence ones, which are below the final ones.
        assert!(norms[0] < norms[len / 2] && norms[len / 2] < norms[len - 1]);

        // GNU with a saturated update gate (z ≈ 1) passes the gradient.
        let mut cell = init_cell_params(CellKind::Gnu, 1, units, &mut rng);
        for b in cell.gate_mut(Gate::Update).unwrap().b.data.iter_mut() {
            *b = 10.0;
        }
        let readout = init_readout_params(units, 1, ReadoutActivation::Identity, &mut rng);
        let model = Model { cell, readout };
        let run = run_sequence(
            &model.cell,
            &CellState::zeros(CellKind::Gnu, units),
            &sample.xs,
            true,
        )
        .unwrap();
        let (_, norms) =
            bptt_detailed(&model, &run.traces.unwrap(), &Vector::from_vec(vec![1.0])).unwrap();
        let gnu_ratio = norms[0] / norms[len - 1];
        assert!(
            gnu_ratio > 0.9,
            "saturated gate should pass gradients, got ratio {gnu_ratio}"
        );
        assert!(gnu_ratio > 100.0 * rnn_ratio);
    }

    fn spectral_norm(m: &Matrix) -> f64 {
        // Power iteration on mᵀm.
        let mut v = Vector::from_vec(vec![1.0; m.cols]);
        for _ in 0..200 {
            let mv = matvec(m, &v).unwrap();
            let mtv = matvec_t(m, &mv).unwrap();
            let n = mtv.norm2();
            v = mtv.scale(1.0 / n);
        }
        matvec(m, &v).unwrap().norm2()
    }

    #[test]
    fn adam_zero_gradient_keeps_parameters() {
        let mut model = small_model(CellKind::Gnu, 1, 2, 9);
        let before = model.clone();
        let grads = Gradients::zeros_like(&model);
        let mut adam = AdamState::new(&model, 1e-3, 0.9, 0.999, 1e-8);
        adam_step(&mut adam, &mut model, &grads).unwrap();
        assert_eq!(model, before);
        assert_eq!(adam.step_count, 1);
    }

    #[test]
    fn adam_first_step_magnitude_is_lr() {
        // With bias correction, the first update is lr·g/(|g|+ε) ≈ lr.
        let mut model = small_model(CellKind::SimpleRnn, 1, 1, 3);
        let before = model.clone();
        let mut grads = Gradients::zeros_like(&model);
        for gp in grads.gates.values_mut() {
            gp.w.data[0] = 0.37;
            gp.u.data[0] = -4.2;
            gp.b[0] = 1e3;
        }
        grads.readout_w.data[0] = -0.001;
        grads.readout_b[0] = 7.0;
        let lr = 1e-3;
        let mut adam = AdamState::new(&model, lr, 0.9, 0.999, 1e-8);
        adam_step(&mut adam, &mut model, &grads).unwrap();

        let gp_before = &before.cell.gates[&Gate::Proposal];
        let gp_after = &model.cell.gates[&Gate::Proposal];
        for (b, a) in [
            (gp_before.w.data[0], gp_after.w.data[0]),
            (gp_before.u.data[0], gp_after.u.data[0]),
            (gp_before.b[0], gp_after.b[0]),
            (before.readout.b[0], model.readout.b[0]),
        ] {
            assert_close((b - a).abs(), lr, 1e-9);
        }
    }

    #[test]
    fn adam_is_deterministic() {
        let mut m1 = small_model(CellKind::Gru, 2, 3, 4);
        let mut m2 = m1.clone();
        let sample = random_sample(2, 5, 6);
        let (_, g) = sequence_gradients(&m1, &sample, LossKind::Mse).unwrap();
        let mut a1 = AdamState::new(&m1, 1e-3, 0.9, 0.999, 1e-8);
        let mut a2 = AdamState::new(&m2, 1e-3, 0.9, 0.999, 1e-8);
        adam_step(&mut a1, &mut m1, &g).unwrap();
        adam_step(&mut a2, &mut m2, &g).unwrap();
        assert_eq!(m1, m2);
        assert_eq!(a1.step_count, a2.step_count);
    }

    #[test]
    fn train_with_zero_lr_keeps_parameters() {
        let mut model = small_model(CellKind::Gnu, 2, 3, 5);
        let before = model.clone();
        let samples: Vec<TrainSample> = (0..8).map(|i| random_sample(2, 6, i)).collect();
        let mut cfg = TrainConfig::new(11);
        cfg.lr = 0.0;
        cfg.epochs = 3;
        cfg.batch_size = 4;
        let history = train(&mut model, &samples, None, &cfg).unwrap();
        assert_eq!(model, before);
        assert_eq!(history.len(), 3);
    }

    #[test]
    fn train_is_deterministic_across_runs_and_worker_modes() {
        let samples: Vec<TrainSample> = (0..10).map(|i| random_sample(2, 5, i)).collect();
        let mut histories = Vec::new();
        for parallel in [true, false, true] {
            let mut model = small_model(CellKind::AGru, 2, 3, 21);
            let mut cfg = TrainConfig::new(77);
            cfg.epochs = 2;
            cfg.batch_size = 4;
            cfg.parallel = parallel;
            let history = train(&mut model, &samples, Some(&samples), &cfg).unwrap();
            histories.push((history, model));
        }
        assert_eq!(histories[0].0, histories[1].0);
        assert_eq!(histories[0].0, histories[2].0);
        assert_eq!(histories[0].1, histories[1].1);
    }

    #[test]
    fn train_rejects_empty_dataset() {
        let mut model = small_model(CellKind::Gru, 2, 3, 5);
        let cfg = TrainConfig::new(1);
        assert!(matches!(
            train(&mut model, &[], None, &cfg),
            Err(Error::Empty(_))
        ));
    }

    #[test]
    fn cross_entropy_requires_softmax_readout() {
        let mut model = small_model(CellKind::Gru, 2, 3, 5);
        let samples = vec![TrainSample {
            xs: vec![Vector::zeros(2)],
            target: Target::Class(0),
        }];
        let mut cfg = TrainConfig::new(1);
        cfg.loss = LossKind::CrossEntropy;
        assert!(train(&mut model, &samples, None, &cfg).is_err());
    }

    #[test]
    fn history_csv_round_trip_shape() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("history.csv");
        let history = vec![EpochStats {
            epoch: 1,
            train_loss: 0.25,
            test_loss: Some(0.5),
            test_metric: Some(0.5),
        }];
        write_history_csv(&path, &history).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("epoch,split,loss,metric"));
        assert_eq!(lines.next(), Some("1,train,0.25,"));
        assert_eq!(lines.next(), Some("1,test,0.5,0.5"));
    }
}
