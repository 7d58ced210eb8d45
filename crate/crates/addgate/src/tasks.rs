//! The synthetic adding task, its exact hand-crafted aGNU solver and naive
//! baseline, and row-wise MNIST ingestion from IDX files.
//!
//! An adding instance is a value sequence v ∈ [0,1)ⁿ and a two-hot marker
//! sequence w with one marker per half; the target is the sum of the two
//! marked values. A constant predictor of 1.0 (the expected target) scores
//! an MSE of 1/6 on this task, which is the baseline every learner must
//! beat.

use std::fs;
use std::path::Path;

use crate::cells::{run_sequence, CellKind, CellParams, CellState, Gate};
use crate::error::{Error, Result};
use crate::tensor::{Matrix, Rng, Vector};
use crate::train::{Target, TrainSample};

/// One sample of the adding task.
#[derive(Debug, Clone, PartialEq)]
pub struct AddingInstance {
    pub n: usize,
    /// Random values in [0, 1).
    pub v: Vector,
    /// Two-hot markers: exactly one 1 in each half.
    pub w: Vector,
    /// Marker index in [0, n/2).
    pub first_marker: usize,
    /// Marker index in [n/2, n).
    pub second_marker: usize,
    /// v[first_marker] + v[second_marker]
    pub target: f64,
}

impl AddingInstance {
    /// The step-t input is the pair (v_t, w_t).
    pub fn as_sequence(&self) -> Vec<Vector> {
        self.v
            .iter()
            .zip(self.w.iter())
            .map(|(&v, &w)| Vector::from_vec(vec![v, w]))
            .collect()
    }

    pub fn to_train_sample(&self) -> TrainSample {
        TrainSample {
            xs: self.as_sequence(),
            target: Target::Values(Vector::from_vec(vec![self.target])),
        }
    }
}

/// Generate one instance: v ~ U[0,1)ⁿ, markers uniform in their halves.
pub fn gen_adding(rng: &mut Rng, n: usize) -> Result<AddingInstance> {
    if n < 2 || n % 2 != 0 {
        return Err(Error::InvalidParameter(format!(
            "sequence length must be even and at least 2, got {n}"
        )));
    }
    let v = crate::tensor::rng_uniform(rng, n)?;
    let first_marker = rng.uniform_index(n / 2);
    let second_marker = n / 2 + rng.uniform_index(n / 2);
    let mut w = Vector::zeros(n);
    w[first_marker] = 1.0;
    w[second_marker] = 1.0;
    let target = v[first_marker] + v[second_marker];
    Ok(AddingInstance {
        n,
        v,
        w,
        first_marker,
        second_marker,
        target,
    })
}

/// Generate `count` instances from one generator stream.
pub fn gen_adding_set(rng: &mut Rng, n: usize, count: usize) -> Result<Vec<AddingInstance>> {
    (0..count).map(|_| gen_adding(rng, n)).collect()
}

/// MSE of the constant prediction 1.0 (the expected target) over a dataset.
pub fn naive_baseline_mse(dataset: &[AddingInstance]) -> Result<f64> {
    if dataset.is_empty() {
        return Err(Error::Empty("adding dataset"));
    }
    let sum: f64 = dataset
        .iter()
        .map(|inst| (1.0 - inst.target) * (1.0 - inst.target))
        .sum();
    Ok(sum / dataset.len() as f64)
}

/// Smallest gate magnitude that keeps the hand-crafted solver exact.
///
/// Between the markers the state must be preserved exactly, which needs
/// (v_t + h − a)⁺ = 0 with h ≤ 2 and v < 1, i.e. a ≥ 3 in the worst case.
pub const HANDCRAFTED_MIN_GATE: f64 = 3.0;

/// aGNU parameters that solve the adding task exactly for any instance.
///
/// The proposal accumulates `v_t` into the state; the update gate takes the
/// value `a` off markers (pass the state through) and `−a` on markers
/// (accept the accumulated proposal). The final state is the answer, with
/// no approximation beyond the two float additions the task itself needs.
pub fn handcrafted_solver(a: f64) -> Result<CellParams> {
    if !(a >= HANDCRAFTED_MIN_GATE) {
        return Err(Error::InvalidParameter(format!(
            "gate magnitude a = {a} is below the safe bound a >= {HANDCRAFTED_MIN_GATE}; \
             smaller values can leak state between markers"
        )));
    }
    let mut p = CellParams::zeros(CellKind::AGnu, 2, 1);
    let proposal = p.gate_mut(Gate::Proposal)?;
    proposal.w = Matrix::from_rows(vec![vec![1.0, 0.0]])?;
    proposal.u = Matrix::from_rows(vec![vec![1.0]])?;
    let update = p.gate_mut(Gate::Update)?;
    update.w = Matrix::from_rows(vec![vec![0.0, -2.0 * a]])?;
    update.b = Vector::from_vec(vec![a]);
    Ok(p)
}

/// The hand-crafted solver bundled with its gate magnitude.
#[derive(Debug, Clone)]
pub struct HandcraftedGnu {
    pub a: f64,
    pub params: CellParams,
}

impl HandcraftedGnu {
    pub fn new(a: f64) -> Result<Self> {
        Ok(HandcraftedGnu {
            a,
            params: handcrafted_solver(a)?,
        })
    }

    /// Run the solver over one instance; the final state is the answer.
    pub fn solve(&self, inst: &AddingInstance) -> Result<f64> {
        let init = CellState::zeros(CellKind::AGnu, 1);
        let run = run_sequence(&self.params, &init, &inst.as_sequence(), false)?;
        Ok(run.final_state.h[0])
    }
}

/// Adding-task CSV, one instance per line: `n, v_0..v_{n-1}, i, j, target`.
/// Floats print in shortest round-trip form, so values survive exactly.
pub fn save_adding_csv(path: impl AsRef<Path>, dataset: &[AddingInstance]) -> Result<()> {
    let mut out = String::new();
    for inst in dataset {
        out.push_str(&inst.n.to_string());
        for v in inst.v.iter() {
            out.push(',');
            out.push_str(&v.to_string());
        }
        out.push_str(&format!(
            ",{},{},{}\n",
            inst.first_marker, inst.second_marker, inst.target
        ));
    }
    fs::write(path.as_ref(), out).map_err(|e| Error::io(path.as_ref(), e))
}

pub fn load_adding_csv(path: impl AsRef<Path>) -> Result<Vec<AddingInstance>> {
    let text = fs::read_to_string(path.as_ref()).map_err(|e| Error::io(path.as_ref(), e))?;
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        let bad = |what: &str| Error::Format(format!("line {}: {what}", lineno + 1));
        let n: usize = fields[0].parse().map_err(|_| bad("bad length"))?;
        if fields.len() != n + 4 {
            return Err(bad(&format!(
                "expected {} fields, got {}",
                n + 4,
                fields.len()
            )));
        }
        let v: Vec<f64> = fields[1..1 + n]
            .iter()
            .map(|f| f.parse().map_err(|_| bad("bad value")))
            .collect::<Result<_>>()?;
        let first_marker: usize = fields[1 + n].parse().map_err(|_| bad("bad marker"))?;
        let second_marker: usize = fields[2 + n].parse().map_err(|_| bad("bad marker"))?;
        let target: f64 = fields[3 + n].parse().map_err(|_| bad("bad target"))?;
        if first_marker >= n / 2 || second_marker < n / 2 || second_marker >= n {
            return Err(bad("marker out of its half"));
        }
        let mut w = Vector::zeros(n);
        w[first_marker] = 1.0;
        w[second_marker] = 1.0;
        out.push(AddingInstance {
            n,
            v: Vector::from_vec(v),
            w,
            first_marker,
            second_marker,
            target,
        });
    }
    Ok(out)
}

/// One MNIST digit: 28×28 grayscale pixels scaled to [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct MnistSample {
    pub pixels: Vec<f64>,
    pub label: u8,
}

pub const MNIST_SIDE: usize = 28;
const IMAGES_MAGIC: u32 = 0x0000_0803;
const LABELS_MAGIC: u32 = 0x0000_0801;

fn read_u32_be(bytes: &[u8], pos: usize, path: &Path) -> Result<u32> {
    bytes
        .get(pos..pos + 4)
        .map(|b| u32::from_be_bytes(b.try_into().unwrap()))
        .ok_or_else(|| Error::Format(format!("{}: truncated header", path.display())))
}

/// Parse the big-endian IDX pair used by the MNIST distribution.
pub fn load_mnist_idx(
    images_path: impl AsRef<Path>,
    labels_path: impl AsRef<Path>,
    limit: Option<usize>,
) -> Result<Vec<MnistSample>> {
    let images_path = images_path.as_ref();
    let labels_path = labels_path.as_ref();
    let images = fs::read(images_path).map_err(|e| Error::io(images_path, e))?;
    let labels = fs::read(labels_path).map_err(|e| Error::io(labels_path, e))?;

    let magic = read_u32_be(&images, 0, images_path)?;
    if magic != IMAGES_MAGIC {
        return Err(Error::Format(format!(
            "{}: bad image magic {magic:#010x}, expected {IMAGES_MAGIC:#010x}",
            images_path.display()
        )));
    }
    let count = read_u32_be(&images, 4, images_path)? as usize;
    let rows = read_u32_be(&images, 8, images_path)? as usize;
    let cols = read_u32_be(&images, 12, images_path)? as usize;
    if rows != MNIST_SIDE || cols != MNIST_SIDE {
        return Err(Error::Format(format!(
            "{}: expected 28x28 images, got {rows}x{cols}",
            images_path.display()
        )));
    }
    let pixel_bytes = &images[16..];
    if pixel_bytes.len() != count * rows * cols {
        return Err(Error::Format(format!(
            "{}: expected {} pixel bytes, got {}",
            images_path.display(),
            count * rows * cols,
            pixel_bytes.len()
        )));
    }

    let lmagic = read_u32_be(&labels, 0, labels_path)?;
    if lmagic != LABELS_MAGIC {
        return Err(Error::Format(format!(
            "{}: bad label magic {lmagic:#010x}, expected {LABELS_MAGIC:#010x}",
            labels_path.display()
        )));
    }
    let lcount = read_u32_be(&labels, 4, labels_path)? as usize;
    if lcount != count {
        return Err(Error::Format(format!(
            "image/label count mismatch: {count} images, {lcount} labels"
        )));
    }
    let label_bytes = &labels[8..];
    if label_bytes.len() != count {
        return Err(Error::Format(format!(
            "{}: expected {count} label bytes, got {}",
            labels_path.display(),
            label_bytes.len()
        )));
    }

    let take = limit.unwrap_or(count).min(count);
    let mut samples = Vec::with_capacity(take);
    for i in 0..take {
        let start = i * rows * cols;
        let pixels = pixel_bytes[start..start + rows * cols]
            .iter()
            .map(|&b| b as f64 / 255.0)
            .collect();
        let label = label_bytes[i];
        if label > 9 {
            return Err(Error::Format(format!("sample {i}: label {label} out of range")));
        }
        samples.push(MnistSample { pixels, label });
    }
    Ok(samples)
}

/// Row t of the image becomes the step-t input vector.
pub fn mnist_as_sequence(s: &MnistSample) -> Vec<Vector> {
    (0..MNIST_SIDE)
        .map(|r| {
            Vector::from_vec(s.pixels[r * MNIST_SIDE..(r + 1) * MNIST_SIDE].to_vec())
        })
        .collect()
}

pub fn mnist_train_sample(s: &MnistSample) -> TrainSample {
    TrainSample {
        xs: mnist_as_sequence(s),
        target: Target::Class(s.label as usize),
    }
}

/// Draw a disjoint train/test subset without replacement, deterministically
/// for a given seed.
pub fn seeded_subset(
    samples: &[MnistSample],
    train_n: usize,
    test_n: usize,
    seed: u64,
) -> Result<(Vec<MnistSample>, Vec<MnistSample>)> {
    if train_n + test_n > samples.len() {
        return Err(Error::InvalidParameter(format!(
            "subset of {}+{} exceeds the {} available samples",
            train_n,
            test_n,
            samples.len()
        )));
    }
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut rng = Rng::seed_from_u64(seed);
    for i in (1..order.len()).rev() {
        let j = rng.uniform_index(i + 1);
        order.swap(i, j);
    }
    let train = order[..train_n]
        .iter()
        .map(|&i| samples[i].clone())
        .collect();
    let test = order[train_n..train_n + test_n]
        .iter()
        .map(|&i| samples[i].clone())
        .collect();
    Ok((train, test))
}
