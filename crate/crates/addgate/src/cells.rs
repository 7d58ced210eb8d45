//! Single-step and full-sequence forward evaluation for the eight cell
//! variants: simple RNN, GRU, LSTM, and the gated nominal unit (GNU) plus
//! the addition-based aGNU, aGRU, shifted aGRU, and aLSTM.
//!
//! Conventional cells gate with sigmoid and elementwise multiplication.
//! The addition-based cells replace that with ReLU and addition: the gate
//! pre-activation `u` stays linear and the state update becomes
//! `(h + u⁻)⁺ + (ĥ − u⁺)⁺`. Their gate/combine stage therefore never
//! multiplies two variables, which is what the integer path and the cost
//! model build on.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::gating::{
    add_cell_combine, add_gate_combine, add_gate_combine_shifted, add_reset_state,
    mul_cell_combine, mul_gate_combine,
};
use crate::tensor::{apply_activation, matvec, sigmoid, ActivationKind, Matrix, Vector};

/// The eight supported cell variants.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CellKind {
    SimpleRnn,
    Gru,
    Lstm,
    Gnu,
    AGnu,
    AGru,
    AGruShifted,
    ALstm,
}

impl CellKind {
    /// Gate set of the variant, in the fixed serialization order.
    pub fn gates(self) -> &'static [Gate] {
        match self {
            CellKind::SimpleRnn => &[Gate::Proposal],
            CellKind::Gru | CellKind::AGru | CellKind::AGruShifted => {
                &[Gate::Update, Gate::Reset, Gate::Proposal]
            }
            CellKind::Gnu | CellKind::AGnu => &[Gate::Update, Gate::Proposal],
            CellKind::Lstm | CellKind::ALstm => {
                &[Gate::Forget, Gate::Input, Gate::Output, Gate::Candidate]
            }
        }
    }

    /// True for the ReLU-and-addition variants.
    pub fn is_addition_based(self) -> bool {
        matches!(
            self,
            CellKind::AGnu | CellKind::AGru | CellKind::AGruShifted | CellKind::ALstm
        )
    }

    /// True for cells carrying a separate memory vector `c`.
    pub fn has_memory_cell(self) -> bool {
        matches!(self, CellKind::Lstm | CellKind::ALstm)
    }

    pub fn name(self) -> &'static str {
        match self {
            CellKind::SimpleRnn => "simple-rnn",
            CellKind::Gru => "gru",
            CellKind::Lstm => "lstm",
            CellKind::Gnu => "gnu",
            CellKind::AGnu => "agnu",
            CellKind::AGru => "agru",
            CellKind::AGruShifted => "agru-shifted",
            CellKind::ALstm => "alstm",
        }
    }

    pub fn parse(s: &str) -> Result<CellKind> {
        Ok(match s {
            "simple-rnn" | "rnn" => CellKind::SimpleRnn,
            "gru" => CellKind::Gru,
            "lstm" => CellKind::Lstm,
            "gnu" => CellKind::Gnu,
            "agnu" => CellKind::AGnu,
            "agru" => CellKind::AGru,
            "agru-shifted" => CellKind::AGruShifted,
            "alstm" => CellKind::ALstm,
            other => {
                return Err(Error::InvalidParameter(format!(
                    "unknown cell kind `{other}`"
                )))
            }
        })
    }

    pub const ALL: [CellKind; 8] = [
        CellKind::SimpleRnn,
        CellKind::Gru,
        CellKind::Lstm,
        CellKind::Gnu,
        CellKind::AGnu,
        CellKind::AGru,
        CellKind::AGruShifted,
        CellKind::ALstm,
    ];

    /// Default (proposal, output) activations per kind. GNU defaults to a
    /// sigmoid proposal so GNU and aGNU operate on the same state range.
    pub fn default_activations(self) -> (ActivationKind, ActivationKind) {
        match self {
            CellKind::SimpleRnn | CellKind::Gru => (ActivationKind::Tanh, ActivationKind::Identity),
            CellKind::Lstm => (ActivationKind::Tanh, ActivationKind::Tanh),
            CellKind::Gnu => (ActivationKind::Sigmoid, ActivationKind::Identity),
            CellKind::AGnu | CellKind::AGru => (ActivationKind::Relu, ActivationKind::Identity),
            CellKind::AGruShifted => (ActivationKind::Tanh, ActivationKind::Identity),
            CellKind::ALstm => (ActivationKind::Relu, ActivationKind::Relu),
        }
    }
}

/// Named gates. The declaration order is the fixed on-disk order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Gate {
    Update,
    Reset,
    Proposal,
    Forget,
    Input,
    Output,
    Candidate,
}

impl Gate {
    pub fn name(self) -> &'static str {
        match self {
            Gate::Update => "update",
            Gate::Reset => "reset",
            Gate::Proposal => "proposal",
            Gate::Forget => "forget",
            Gate::Input => "input",
            Gate::Output => "output",
            Gate::Candidate => "candidate",
        }
    }
}

/// One gate's parameters: input kernel W (units × input_dim), recurrent
/// kernel U (units × units), and bias b (units).
#[derive(Debug, Clone, PartialEq)]
pub struct GateParams {
    pub w: Matrix,
    pub u: Matrix,
    pub b: Vector,
}

impl GateParams {
    pub fn zeros(units: usize, input_dim: usize) -> Self {
        GateParams {
            w: Matrix::zeros(units, input_dim),
            u: Matrix::zeros(units, units),
            b: Vector::zeros(units),
        }
    }
}

/// Full parameter set of one recurrent cell.
#[derive(Debug, Clone, PartialEq)]
pub struct CellParams {
    pub kind: CellKind,
    pub input_dim: usize,
    pub units: usize,
    pub gates: BTreeMap<Gate, GateParams>,
    /// Activation of the proposal (GRU/GNU families) or candidate (LSTM families).
    pub proposal_activation: ActivationKind,
    /// Activation applied to the memory state on output (LSTM families only).
    pub output_activation: ActivationKind,
}

impl CellParams {
    /// All-zero parameters with the kind's default activations.
    pub fn zeros(kind: CellKind, input_dim: usize, units: usize) -> Self {
        let (prop, out) = kind.default_activations();
        let gates = kind
            .gates()
            .iter()
            .map(|&g| (g, GateParams::zeros(units, input_dim)))
            .collect();
        CellParams {
            kind,
            input_dim,
            units,
            gates,
            proposal_activation: prop,
            output_activation: out,
        }
    }

    pub fn with_activations(
        mut self,
        proposal: ActivationKind,
        output: ActivationKind,
    ) -> Result<Self> {
        self.proposal_activation = proposal;
        self.output_activation = output;
        self.validate()?;
        Ok(self)
    }

    pub fn gate(&self, g: Gate) -> Result<&GateParams> {
        self.gates
            .get(&g)
            .ok_or_else(|| Error::InvalidParameter(format!("missing {} gate", g.name())))
    }

    pub fn gate_mut(&mut self, g: Gate) -> Result<&mut GateParams> {
        self.gates
            .get_mut(&g)
            .ok_or_else(|| Error::InvalidParameter(format!("missing {} gate", g.name())))
    }

    /// Check gate set, shapes, and the activation constraints of the
    /// addition-based kinds.
    pub fn validate(&self) -> Result<()> {
        let expected: Vec<Gate> = self.kind.gates().to_vec();
        let actual: Vec<Gate> = self.gates.keys().copied().collect();
        if expected != actual {
            return Err(Error::InvalidParameter(format!(
                "{} expects gates {:?}, got {:?}",
                self.kind.name(),
                expected,
                actual
            )));
        }
        for (g, gp) in &self.gates {
            if gp.w.rows != self.units || gp.w.cols != self.input_dim {
                return Err(Error::shape(
                    "gate input kernel",
                    format!("{}x{}", self.units, self.input_dim),
                    format!("{}x{} ({})", gp.w.rows, gp.w.cols, g.name()),
                ));
            }
            if gp.u.rows != self.units || gp.u.cols != self.units {
                return Err(Error::shape(
                    "gate recurrent kernel",
                    format!("{}x{}", self.units, self.units),
                    format!("{}x{} ({})", gp.u.rows, gp.u.cols, g.name()),
                ));
            }
            if gp.b.len() != self.units {
                return Err(Error::shape("gate bias", self.units, gp.b.len()));
            }
        }
        match self.kind {
            CellKind::AGnu | CellKind::AGru => {
                if !self.proposal_activation.is_non_negative() {
                    return Err(Error::InvalidParameter(format!(
                        "{} needs a non-negative proposal activation (relu or sigmoid), got {}",
                        self.kind.name(),
                        self.proposal_activation.name()
                    )));
                }
            }
            CellKind::AGruShifted => {
                if self.proposal_activation != ActivationKind::Tanh {
                    return Err(Error::InvalidParameter(format!(
                        "agru-shifted needs a tanh proposal, got {}",
                        self.proposal_activation.name()
                    )));
                }
            }
            CellKind::ALstm => {
                if !self.proposal_activation.is_non_negative()
                    || !self.output_activation.is_non_negative()
                {
                    return Err(Error::InvalidParameter(format!(
                        "alstm needs non-negative candidate and output activations, got {} and {}",
                        self.proposal_activation.name(),
                        self.output_activation.name()
                    )));
                }
            }
            _ => {}
        }
        Ok(())
    }
}

/// Recurrent state: hidden vector plus the LSTM families' memory vector.
#[derive(Debug, Clone, PartialEq)]
pub struct CellState {
    pub h: Vector,
    pub c: Option<Vector>,
}

impl CellState {
    pub fn zeros(kind: CellKind, units: usize) -> Self {
        CellState {
            h: Vector::zeros(units),
            c: kind.has_memory_cell().then(|| Vector::zeros(units)),
        }
    }
}

/// Per-step intermediates retained for backpropagation.
#[derive(Debug, Clone)]
pub struct StepTrace {
    pub x: Vector,
    pub h_prev: Vector,
    pub c_prev: Option<Vector>,
    /// Linear pre-activation per gate.
    pub pre: BTreeMap<Gate, Vector>,
    /// Gate value after its activation (for linear gates, a copy of `pre`).
    pub post: BTreeMap<Gate, Vector>,
    /// The state vector the proposal's recurrent kernel consumed, when it is
    /// not `h_prev` itself (reset-gated variants).
    pub prop_state: Option<Vector>,
    pub h_new: Vector,
    pub c_new: Option<Vector>,
}

/// W·x + U·state + b for one gate.
fn gate_linear(g: &GateParams, x: &Vector, state: &Vector) -> Result<Vector> {
    let mut out = matvec(&g.w, x)?;
    out.add_assign(&matvec(&g.u, state)?);
    out.add_assign(&g.b);
    Ok(out)
}

fn check_step_dims(p: &CellParams, s: &CellState, x: &Vector) -> Result<()> {
    if x.len() != p.input_dim {
        return Err(Error::shape("step input", p.input_dim, x.len()));
    }
    if s.h.len() != p.units {
        return Err(Error::shape("step state", p.units, s.h.len()));
    }
    Ok(())
}

fn require_non_negative(v: &Vector, cell: &'static str) -> Result<()> {
    if let Some((index, &value)) = v.iter().enumerate().find(|(_, &x)| x < 0.0) {
        return Err(Error::NegativeState { cell, index, value });
    }
    Ok(())
}

fn require_memory(s: &CellState, cell: &'static str) -> Result<Vector> {
    s.c.clone().ok_or(Error::MissingMemoryState(cell))
}

fn trace_base(s: &CellState, x: &Vector) -> StepTrace {
    StepTrace {
        x: x.clone(),
        h_prev: s.h.clone(),
        c_prev: s.c.clone(),
        pre: BTreeMap::new(),
        post: BTreeMap::new(),
        prop_state: None,
        h_new: Vector::zeros(0),
        c_new: None,
    }
}

/// h_t = φ_h(W x + U h + b)
pub fn step_simple_rnn(
    p: &CellParams,
    s: &CellState,
    x: &Vector,
) -> Result<(CellState, StepTrace)> {
    check_step_dims(p, s, x)?;
    let mut tr = trace_base(s, x);
    let pre = gate_linear(p.gate(Gate::Proposal)?, x, &s.h)?;
    let h = apply_activation(p.proposal_activation, &pre);
    tr.pre.insert(Gate::Proposal, pre);
    tr.post.insert(Gate::Proposal, h.clone());
    tr.h_new = h.clone();
    Ok((CellState { h, c: None }, tr))
}

/// z, r via sigmoid; ĥ = φ_h(W x + U (r⊙h) + b); h_t = z⊙h + (1−z)⊙ĥ
pub fn step_gru(p: &CellParams, s: &CellState, x: &Vector) -> Result<(CellState, StepTrace)> {
    check_step_dims(p, s, x)?;
    let mut tr = trace_base(s, x);

    let z_pre = gate_linear(p.gate(Gate::Update)?, x, &s.h)?;
    let z = z_pre.map(sigmoid);
    let r_pre = gate_linear(p.gate(Gate::Reset)?, x, &s.h)?;
    let r = r_pre.map(sigmoid);

    let gated_h = r.hadamard(&s.h);
    let h_pre = gate_linear(p.gate(Gate::Proposal)?, x, &gated_h)?;
    let h_hat = apply_activation(p.proposal_activation, &h_pre);

    let mut h = Vector::zeros(p.units);
    for i in 0..p.units {
        h[i] = mul_gate_combine(s.h[i], z[i], h_hat[i]);
    }

    tr.pre.insert(Gate::Update, z_pre);
    tr.post.insert(Gate::Update, z);
    tr.pre.insert(Gate::Reset, r_pre);
    tr.post.insert(Gate::Reset, r);
    tr.pre.insert(Gate::Proposal, h_pre);
    tr.post.insert(Gate::Proposal, h_hat);
    tr.prop_state = Some(gated_h);
    tr.h_new = h.clone();
    Ok((CellState { h, c: None }, tr))
}

/// f, i, o via sigmoid; ĉ = φ_c(·); c_t = f⊙c + i⊙ĉ; h_t = o⊙φ_h(c_t)
pub fn step_lstm(p: &CellParams, s: &CellState, x: &Vector) -> Result<(CellState, StepTrace)> {
    check_step_dims(p, s, x)?;
    let c_prev = require_memory(s, "lstm")?;
    let mut tr = trace_base(s, x);

    let mut post = BTreeMap::new();
    for g in [Gate::Forget, Gate::Input, Gate::Output] {
        let pre = gate_linear(p.gate(g)?, x, &s.h)?;
        post.insert(g, pre.map(sigmoid));
        tr.pre.insert(g, pre);
    }
    let c_pre = gate_linear(p.gate(Gate::Candidate)?, x, &s.h)?;
    let c_hat = apply_activation(p.proposal_activation, &c_pre);

    let f = &post[&Gate::Forget];
    let i_gate = &post[&Gate::Input];
    let o = &post[&Gate::Output];
    let mut c = Vector::zeros(p.units);
    for i in 0..p.units {
        c[i] = mul_cell_combine(c_prev[i], f[i], i_gate[i], c_hat[i]);
    }
    let h = o.hadamard(&apply_activation(p.output_activation, &c));

    tr.pre.insert(Gate::Candidate, c_pre);
    post.insert(Gate::Candidate, c_hat);
    tr.post = post;
    tr.h_new = h.clone();
    tr.c_new = Some(c.clone());
    Ok((CellState { h, c: Some(c) }, tr))
}

/// GRU without the reset gate: z via sigmoid; ĥ = φ_h(W x + U h + b);
/// h_t = z⊙h + (1−z)⊙ĥ
pub fn step_gnu(p: &CellParams, s: &CellState, x: &Vector) -> Result<(CellState, StepTrace)> {
    check_step_dims(p, s, x)?;
    let mut tr = trace_base(s, x);

    let z_pre = gate_linear(p.gate(Gate::Update)?, x, &s.h)?;
    let z = z_pre.map(sigmoid);
    let h_pre = gate_linear(p.gate(Gate::Proposal)?, x, &s.h)?;
    let h_hat = apply_activation(p.proposal_activation, &h_pre);

    let mut h = Vector::zeros(p.units);
    for i in 0..p.units {
        h[i] = mul_gate_combine(s.h[i], z[i], h_hat[i]);
    }

    tr.pre.insert(Gate::Update, z_pre);
    tr.post.insert(Gate::Update, z);
    tr.pre.insert(Gate::Proposal, h_pre);
    tr.post.insert(Gate::Proposal, h_hat);
    tr.h_new = h.clone();
    Ok((CellState { h, c: None }, tr))
}

/// Addition-based GNU: u stays linear, ĥ = φ⁺(·), and
/// h_t = (h + u⁻)⁺ + (ĥ − u⁺)⁺.
pub fn step_agnu(p: &CellParams, s: &CellState, x: &Vector) -> Result<(CellState, StepTrace)> {
    check_step_dims(p, s, x)?;
    require_non_negative(&s.h, "agnu")?;
    let mut tr = trace_base(s, x);

    let u = gate_linear(p.gate(Gate::Update)?, x, &s.h)?;
    let h_pre = gate_linear(p.gate(Gate::Proposal)?, x, &s.h)?;
    let h_hat = apply_activation(p.proposal_activation, &h_pre);

    let mut h = Vector::zeros(p.units);
    for i in 0..p.units {
        h[i] = add_gate_combine(s.h[i], u[i], h_hat[i]);
    }

    tr.post.insert(Gate::Update, u.clone());
    tr.pre.insert(Gate::Update, u);
    tr.pre.insert(Gate::Proposal, h_pre);
    tr.post.insert(Gate::Proposal, h_hat);
    tr.h_new = h.clone();
    Ok((CellState { h, c: None }, tr))
}

/// Addition-based GRU: linear reset r, proposal fed (h + r⁻)⁺, then the
/// aGNU combine.
pub fn step_agru(p: &CellParams, s: &CellState, x: &Vector) -> Result<(CellState, StepTrace)> {
    check_step_dims(p, s, x)?;
    require_non_negative(&s.h, "agru")?;
    let mut tr = trace_base(s, x);

    let r = gate_linear(p.gate(Gate::Reset)?, x, &s.h)?;
    let mut reset_h = Vector::zeros(p.units);
    for i in 0..p.units {
        reset_h[i] = add_reset_state(s.h[i], r[i]);
    }
    let h_pre = gate_linear(p.gate(Gate::Proposal)?, x, &reset_h)?;
    let h_hat = apply_activation(p.proposal_activation, &h_pre);
    let u = gate_linear(p.gate(Gate::Update)?, x, &s.h)?;

    let mut h = Vector::zeros(p.units);
    for i in 0..p.units {
        h[i] = add_gate_combine(s.h[i], u[i], h_hat[i]);
    }

    tr.post.insert(Gate::Update, u.clone());
    tr.pre.insert(Gate::Update, u);
    tr.post.insert(Gate::Reset, r.clone());
    tr.pre.insert(Gate::Reset, r);
    tr.pre.insert(Gate::Proposal, h_pre);
    tr.post.insert(Gate::Proposal, h_hat);
    tr.prop_state = Some(reset_h);
    tr.h_new = h.clone();
    Ok((CellState { h, c: None }, tr))
}

/// Shifted aGRU. The state vector holds the shifted state h' = h − 1
/// directly; u, r, ĥ are computed from h' as in the aGRU, and the combine is
/// h'_t = (h' + (u−1)⁻ + 1)⁺ + (ĥ − (u+1)⁺ + 1)⁺ − 1.
pub fn step_agru_shifted(
    p: &CellParams,
    s: &CellState,
    x: &Vector,
) -> Result<(CellState, StepTrace)> {
    check_step_dims(p, s, x)?;
    let mut tr = trace_base(s, x);

    let r = gate_linear(p.gate(Gate::Reset)?, x, &s.h)?;
    let mut reset_h = Vector::zeros(p.units);
    for i in 0..p.units {
        reset_h[i] = add_reset_state(s.h[i], r[i]);
    }
    let h_pre = gate_linear(p.gate(Gate::Proposal)?, x, &reset_h)?;
    let h_hat = apply_activation(p.proposal_activation, &h_pre);
    let u = gate_linear(p.gate(Gate::Update)?, x, &s.h)?;

    let mut h = Vector::zeros(p.units);
    for i in 0..p.units {
        h[i] = add_gate_combine_shifted(s.h[i], u[i], h_hat[i], 1.0);
    }

    tr.post.insert(Gate::Update, u.clone());
    tr.pre.insert(Gate::Update, u);
    tr.post.insert(Gate::Reset, r.clone());
    tr.pre.insert(Gate::Reset, r);
    tr.pre.insert(Gate::Proposal, h_pre);
    tr.post.insert(Gate::Proposal, h_hat);
    tr.prop_state = Some(reset_h);
    tr.h_new = h.clone();
    Ok((CellState { h, c: None }, tr))
}

/// Addition-based LSTM: f, i, o are ReLU of their linear forms,
/// c_t = (c − f)⁺ + (ĉ − i)⁺, h_t = φ_h⁺(c_t − o).
pub fn step_alstm(p: &CellParams, s: &CellState, x: &Vector) -> Result<(CellState, StepTrace)> {
    check_step_dims(p, s, x)?;
    let c_prev = require_memory(s, "alstm")?;
    require_non_negative(&c_prev, "alstm")?;
    let mut tr = trace_base(s, x);

    let mut post = BTreeMap::new();
    for g in [Gate::Forget, Gate::Input, Gate::Output] {
        let pre = gate_linear(p.gate(g)?, x, &s.h)?;
        post.insert(g, pre.map(|v| v.max(0.0)));
        tr.pre.insert(g, pre);
    }
    let c_pre = gate_linear(p.gate(Gate::Candidate)?, x, &s.h)?;
    let c_hat = apply_activation(p.proposal_activation, &c_pre);

    let f = &post[&Gate::Forget];
    let i_gate = &post[&Gate::Input];
    let o = &post[&Gate::Output];
    let mut c = Vector::zeros(p.units);
    for i in 0..p.units {
        c[i] = add_cell_combine(c_prev[i], f[i], i_gate[i], c_hat[i]);
    }
    let h = apply_activation(p.output_activation, &c.sub(o));

    tr.pre.insert(Gate::Candidate, c_pre);
    post.insert(Gate::Candidate, c_hat);
    tr.post = post;
    tr.h_new = h.clone();
    tr.c_new = Some(c.clone());
    Ok((CellState { h, c: Some(c) }, tr))
}

/// Dispatch one step by the cell's kind.
pub fn step(p: &CellParams, s: &CellState, x: &Vector) -> Result<(CellState, StepTrace)> {
    match p.kind {
        CellKind::SimpleRnn => step_simple_rnn(p, s, x),
        CellKind::Gru => step_gru(p, s, x),
        CellKind::Lstm => step_lstm(p, s, x),
        CellKind::Gnu => step_gnu(p, s, x),
        CellKind::AGnu => step_agnu(p, s, x),
        CellKind::AGru => step_agru(p, s, x),
        CellKind::AGruShifted => step_agru_shifted(p, s, x),
        CellKind::ALstm => step_alstm(p, s, x),
    }
}

/// Outcome of unrolling a cell over a sequence.
#[derive(Debug, Clone)]
pub struct SequenceRun {
    pub final_state: CellState,
    /// State after every step, in order.
    pub states: Vec<CellState>,
    /// Step traces, kept only when recording was requested.
    pub traces: Option<Vec<StepTrace>>,
}

/// Unroll the kind-appropriate step over `xs`. Traces are retained only
/// when `record` is set, so inference runs carry no training memory.
pub fn run_sequence(
    p: &CellParams,
    init: &CellState,
    xs: &[Vector],
    record: bool,
) -> Result<SequenceRun> {
    let mut state = init.clone();
    let mut states = Vec::with_capacity(xs.len());
    let mut traces = record.then(|| Vec::with_capacity(xs.len()));
    for x in xs {
        let (next, trace) = step(p, &state, x)?;
        if let Some(ts) = traces.as_mut() {
            ts.push(trace);
        }
        states.push(next.clone());
        state = next;
    }
    Ok(SequenceRun {
        final_state: state,
        states,
        traces,
    })
}

/// Readout activations. The elementwise ones mirror [`ActivationKind`];
/// softmax exists for classification heads.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReadoutActivation {
    Identity,
    Tanh,
    Sigmoid,
    Relu,
    Softmax,
}

impl ReadoutActivation {
    pub fn apply(self, pre: &Vector) -> Vector {
        match self {
            ReadoutActivation::Identity => pre.clone(),
            ReadoutActivation::Tanh => apply_activation(ActivationKind::Tanh, pre),
            ReadoutActivation::Sigmoid => apply_activation(ActivationKind::Sigmoid, pre),
            ReadoutActivation::Relu => apply_activation(ActivationKind::Relu, pre),
            ReadoutActivation::Softmax => softmax(pre),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ReadoutActivation::Identity => "identity",
            ReadoutActivation::Tanh => "tanh",
            ReadoutActivation::Sigmoid => "sigmoid",
            ReadoutActivation::Relu => "relu",
            ReadoutActivation::Softmax => "softmax",
        }
    }
}

/// Numerically stable softmax (max-shifted).
pub fn softmax(v: &Vector) -> Vector {
    let m = v.max();
    let exps = v.map(|x| (x - m).exp());
    let sum: f64 = exps.iter().sum();
    exps.scale(1.0 / sum)
}

/// Affine readout head y = act(W h + b).
#[derive(Debug, Clone, PartialEq)]
pub struct ReadoutParams {
    pub w: Matrix,
    pub b: Vector,
    pub activation: ReadoutActivation,
}

impl ReadoutParams {
    pub fn zeros(units: usize, out_dim: usize, activation: ReadoutActivation) -> Self {
        ReadoutParams {
            w: Matrix::zeros(out_dim, units),
            b: Vector::zeros(out_dim),
            activation,
        }
    }

    pub fn out_dim(&self) -> usize {
        self.w.rows
    }
}

/// y = act(W h + b)
pub fn readout(r: &ReadoutParams, h: &Vector) -> Result<Vector> {
    let mut pre = matvec(&r.w, h)?;
    pre.add_assign(&r.b);
    Ok(r.activation.apply(&pre))
}

/// A recurrent cell paired with its readout head.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub cell: CellParams,
    pub readout: ReadoutParams,
}
