pub mod error;
pub mod field;
pub mod json;
pub mod assembly;
pub mod eigensolve;
pub mod mesh;
pub mod nodal;
pub mod reference;
pub mod sparse;
pub mod verify;

pub use error::{Error, ParseError, ParseErrorKind, Result};
pub use field::{FieldSpec, ScalarField};
pub use mesh::{Shape, TriMesh};
pub use assembly::{assemble, ProblemKind, WeightedOperator};
pub use eigensolve::{smallest, Spectrum};
pub use nodal::{analyze, NodalAnalysis, NodalOptions};
pub use verify::{CheckKind, CheckRecord, Instance, Status, VerificationReport};
