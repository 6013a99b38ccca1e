//! Dense vector/matrix primitives and reverse-mode gradients for the fixed
//! computation graph: embedding lookup → dilution mix → encoder → softmax
//! cross-entropy, plus embedding → dilution network → mixing weight.

pub mod check;
pub mod ops;
pub mod tape;
pub mod tensor;

pub use check::finite_diff_check;
pub use tape::{Gradients, Tape, ValueId};
pub use tensor::Tensor;
