//! Gated recurrent cells built around an addition/ReLU gate, next to their
//! conventional sigmoid/multiplication counterparts, with everything needed
//! to compare the two mechanisms: training through time, an exact
//! hand-crafted solver for the adding problem, a fixed-point integer
//! forward pass, a programmable-bootstrap cost model, and a CPU timing
//! harness.

pub mod cells;
pub mod costbench;
pub mod error;
pub mod gating;
pub mod quant;
pub mod serialize;
pub mod tasks;
pub mod tensor;
pub mod train;

pub use cells::{
    readout, run_sequence, step, CellKind, CellParams, CellState, Gate, GateParams, Model,
    ReadoutActivation, ReadoutParams, SequenceRun, StepTrace,
};
pub use error::{Error, Result};
pub use tensor::{ActivationKind, Matrix, Rng, Vector};

/// The book's code blocks double as doctests so the guide can never drift
/// from the library. `cargo test --doc` runs them.
#[cfg(doctest)]
mod book {
    macro_rules! chapter {
        ($name:ident, $path:literal) => {
            #[doc = include_str!($path)]
            mod $name {}
        };
    }

    chapter!(introduction, "../../../book/src/introduction.md");
    chapter!(gate, "../../../book/src/gate.md");
    chapter!(cells, "../../../book/src/cells.md");
    chapter!(adding_problem, "../../../book/src/adding-problem.md");
    chapter!(training, "../../../book/src/training.md");
    chapter!(integer_inference, "../../../book/src/integer-inference.md");
    chapter!(cost_model, "../../../book/src/cost-model.md");
    chapter!(cli, "../../../book/src/cli.md");
    chapter!(file_formats, "../../../book/src/file-formats.md");
}
