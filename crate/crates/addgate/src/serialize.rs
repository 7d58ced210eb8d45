//! Flat binary parameter format.
//!
//! Layout (all integers and floats little-endian):
//!
//! ```text
//! magic   b"AGM1"
//! kind    u8        cell kind tag
//! input   u64       input dimension
//! units   u64       state dimension
//! prop    u8        proposal activation tag
//! out     u8        output activation tag
//! ngates  u8        gate count
//! gates   repeated, in the fixed Gate order:
//!         tag u8, W (units*input f64), U (units*units f64), b (units f64)
//! head    u8        1 if a readout follows, else 0
//! readout out_dim u64, activation u8,
//!         W (out_dim*units f64), b (out_dim f64)
//! ```
//!
//! Floats are stored as raw IEEE-754 bits, so round-trips are bit-exact.

use std::fs;
use std::path::Path;

use crate::cells::{
    CellKind, CellParams, Gate, GateParams, Model, ReadoutActivation, ReadoutParams,
};
use crate::error::{Error, Result};
use crate::tensor::{ActivationKind, Matrix, Vector};

const MAGIC: &[u8; 4] = b"AGM1";

fn kind_tag(kind: CellKind) -> u8 {
    CellKind::ALL.iter().position(|&k| k == kind).unwrap() as u8
}

fn kind_from_tag(tag: u8) -> Result<CellKind> {
    CellKind::ALL
        .get(tag as usize)
        .copied()
        .ok_or_else(|| Error::Format(format!("unknown cell kind tag {tag}")))
}

fn activation_tag(a: ActivationKind) -> u8 {
    match a {
        ActivationKind::Tanh => 0,
        ActivationKind::Sigmoid => 1,
        ActivationKind::Relu => 2,
        ActivationKind::Identity => 3,
    }
}

fn activation_from_tag(tag: u8) -> Result<ActivationKind> {
    Ok(match tag {
        0 => ActivationKind::Tanh,
        1 => ActivationKind::Sigmoid,
        2 => ActivationKind::Relu,
        3 => ActivationKind::Identity,
        other => return Err(Error::Format(format!("unknown activation tag {other}"))),
    })
}

fn readout_activation_tag(a: ReadoutActivation) -> u8 {
    match a {
        ReadoutActivation::Identity => 0,
        ReadoutActivation::Tanh => 1,
        ReadoutActivation::Sigmoid => 2,
        ReadoutActivation::Relu => 3,
        ReadoutActivation::Softmax => 4,
    }
}

fn readout_activation_from_tag(tag: u8) -> Result<ReadoutActivation> {
    Ok(match tag {
        0 => ReadoutActivation::Identity,
        1 => ReadoutActivation::Tanh,
        2 => ReadoutActivation::Sigmoid,
        3 => ReadoutActivation::Relu,
        4 => ReadoutActivation::Softmax,
        other => {
            return Err(Error::Format(format!(
                "unknown readout activation tag {other}"
            )))
        }
    })
}

fn gate_tag(g: Gate) -> u8 {
    match g {
        Gate::Update => 0,
        Gate::Reset => 1,
        Gate::Proposal => 2,
        Gate::Forget => 3,
        Gate::Input => 4,
        Gate::Output => 5,
        Gate::Candidate => 6,
    }
}

fn gate_from_tag(tag: u8) -> Result<Gate> {
    Ok(match tag {
        0 => Gate::Update,
        1 => Gate::Reset,
        2 => Gate::Proposal,
        3 => Gate::Forget,
        4 => Gate::Input,
        5 => Gate::Output,
        6 => Gate::Candidate,
        other => return Err(Error::Format(format!("unknown gate tag {other}"))),
    })
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::Format("unexpected end of file".into()));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn floats(&mut self, n: usize) -> Result<Vec<f64>> {
        let bytes = self.take(n * 8)?;
        Ok(bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }

    fn done(&self) -> bool {
        self.pos == self.buf.len()
    }
}

fn push_floats(out: &mut Vec<u8>, xs: &[f64]) {
    for x in xs {
        out.extend_from_slice(&x.to_le_bytes());
    }
}

fn encode_cell(p: &CellParams, out: &mut Vec<u8>) {
    out.push(kind_tag(p.kind));
    out.extend_from_slice(&(p.input_dim as u64).to_le_bytes());
    out.extend_from_slice(&(p.units as u64).to_le_bytes());
    out.push(activation_tag(p.proposal_activation));
    out.push(activation_tag(p.output_activation));
    out.push(p.gates.len() as u8);
    for (g, gp) in &p.gates {
        out.push(gate_tag(*g));
        push_floats(out, &gp.w.data);
        push_floats(out, &gp.u.data);
        push_floats(out, &gp.b.data);
    }
}

fn decode_cell(r: &mut Reader) -> Result<CellParams> {
    let kind = kind_from_tag(r.u8()?)?;
    let input_dim = r.u64()? as usize;
    let units = r.u64()? as usize;
    let proposal_activation = activation_from_tag(r.u8()?)?;
    let output_activation = activation_from_tag(r.u8()?)?;
    let ngates = r.u8()? as usize;
    let mut gates = std::collections::BTreeMap::new();
    for _ in 0..ngates {
        let g = gate_from_tag(r.u8()?)?;
        let w = Matrix {
            rows: units,
            cols: input_dim,
            data: r.floats(units * input_dim)?,
        };
        let u = Matrix {
            rows: units,
            cols: units,
            data: r.floats(units * units)?,
        };
        let b = Vector::from_vec(r.floats(units)?);
        gates.insert(g, GateParams { w, u, b });
    }
    let p = CellParams {
        kind,
        input_dim,
        units,
        gates,
        proposal_activation,
        output_activation,
    };
    p.validate()?;
    Ok(p)
}

fn encode_readout(ro: &ReadoutParams, out: &mut Vec<u8>) {
    out.extend_from_slice(&(ro.out_dim() as u64).to_le_bytes());
    out.push(readout_activation_tag(ro.activation));
    push_floats(out, &ro.w.data);
    push_floats(out, &ro.b.data);
}

fn decode_readout(r: &mut Reader, units: usize) -> Result<ReadoutParams> {
    let out_dim = r.u64()? as usize;
    let activation = readout_activation_from_tag(r.u8()?)?;
    let w = Matrix {
        rows: out_dim,
        cols: units,
        data: r.floats(out_dim * units)?,
    };
    let b = Vector::from_vec(r.floats(out_dim)?);
    Ok(ReadoutParams { w, b, activation })
}

pub fn cell_params_to_bytes(p: &CellParams) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    encode_cell(p, &mut out);
    out.push(0); // no readout head
    out
}

pub fn model_to_bytes(m: &Model) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    encode_cell(&m.cell, &mut out);
    out.push(1);
    encode_readout(&m.readout, &mut out);
    out
}

fn parse(bytes: &[u8]) -> Result<(CellParams, Option<ReadoutParams>)> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(Error::Format("bad magic; not a parameter file".into()));
    }
    let cell = decode_cell(&mut r)?;
    let head = r.u8()?;
    let readout = match head {
        0 => None,
        1 => Some(decode_readout(&mut r, cell.units)?),
        other => return Err(Error::Format(format!("bad readout flag {other}"))),
    };
    if !r.done() {
        return Err(Error::Format("trailing bytes after parameters".into()));
    }
    Ok((cell, readout))
}

pub fn cell_params_from_bytes(bytes: &[u8]) -> Result<CellParams> {
    Ok(parse(bytes)?.0)
}

pub fn model_from_bytes(bytes: &[u8]) -> Result<Model> {
    let (cell, readout) = parse(bytes)?;
    let readout = readout.ok_or_else(|| Error::Format("file has no readout head".into()))?;
    Ok(Model { cell, readout })
}

pub fn save_cell_params(path: impl AsRef<Path>, p: &CellParams) -> Result<()> {
    fs::write(path.as_ref(), cell_params_to_bytes(p)).map_err(|e| Error::io(path.as_ref(), e))
}

pub fn load_cell_params(path: impl AsRef<Path>) -> Result<CellParams> {
    let bytes = fs::read(path.as_ref()).map_err(|e| Error::io(path.as_ref(), e))?;
    cell_params_from_bytes(&bytes)
}

pub fn save_model(path: impl AsRef<Path>, m: &Model) -> Result<()> {
    fs::write(path.as_ref(), model_to_bytes(m)).map_err(|e| Error::io(path.as_ref(), e))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<Model> {
    let bytes = fs::read(path.as_ref()).map_err(|e| Error::io(path.as_ref(), e))?;
    model_from_bytes(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cells::CellState;
    use crate::tensor::Rng;

    fn random_cell(kind: CellKind, rng: &mut Rng) -> CellParams {
        let mut p = CellParams::zeros(kind, 3, 2);
        for gp in p.gates.values_mut() {
            for v in gp
                .w
                .data
                .iter_mut()
                .chain(gp.u.data.iter_mut())
                .chain(gp.b.data.iter_mut())
            {
                *v = rng.uniform_range(-2.0, 2.0);
            }
        }
        p
    }

    fn bias_bits(p: &CellParams) -> Vec<u64> {
        p.gates
            .values()
            .flat_map(|g| g.b.iter().map(|x| x.to_bits()))
            .collect()
    }

    #[test]
    fn cell_round_trip_is_bit_exact() {
        let mut rng = Rng::seed_from_u64(11);
        for kind in CellKind::ALL {
            let mut p = random_cell(kind, &mut rng);
            // Values that would break a text format: subnormal-ish, negative zero.
            p.gates.values_mut().next().unwrap().b[0] = 1e-300;
            p.gates.values_mut().next().unwrap().b[1] = -0.0;
            let bytes = cell_params_to_bytes(&p);
            let back = cell_params_from_bytes(&bytes).unwrap();
            assert_eq!(p, back, "{}", kind.name());
            assert_eq!(bias_bits(&back), bias_bits(&p));
        }
    }

    #[test]
    fn model_round_trip_preserves_behavior() {
        let mut rng = Rng::seed_from_u64(5);
        let cell = random_cell(CellKind::Gru, &mut rng);
        let mut readout = ReadoutParams::zeros(2, 1, ReadoutActivation::Identity);
        readout.w.data = vec![0.5, -1.5];
        readout.b.data = vec![0.25];
        let model = Model { cell, readout };

        let back = model_from_bytes(&model_to_bytes(&model)).unwrap();
        assert_eq!(model, back);

        let x = Vector::from_vec(vec![0.1, 0.2, 0.3]);
        let init = CellState::zeros(CellKind::Gru, 2);
        let run = crate::cells::run_sequence(&model.cell, &init, &[x.clone()], false).unwrap();
        let run2 = crate::cells::run_sequence(&back.cell, &init, &[x], false).unwrap();
        assert_eq!(run.final_state, run2.final_state);
    }

    #[test]
    fn rejects_bad_magic_and_truncation() {
        let p = CellParams::zeros(CellKind::Gnu, 1, 1);
        let mut bytes = cell_params_to_bytes(&p);
        assert!(cell_params_from_bytes(&bytes[..bytes.len() - 3]).is_err());
        bytes[0] = b'X';
        assert!(matches!(
            cell_params_from_bytes(&bytes),
            Err(Error::Format(_))
        ));
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cell.agm");
        let p = CellParams::zeros(CellKind::ALstm, 2, 4);
        save_cell_params(&path, &p).unwrap();
        assert_eq!(load_cell_params(&path).unwrap(), p);
    }
}
