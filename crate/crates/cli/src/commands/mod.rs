mod dump;
mod eval;
mod gen_data;
mod train;
mod verify;

pub use dump::{dump, DumpKind, DumpSummary};
pub use eval::{eval, EvalReport};
pub use gen_data::{gen_data, GenDataOptions, GenDataSummary};
pub use train::{open_checkpoint, train, TrainSummary, METRICS_HEADER};
pub use verify::{verify, VerifyOptions};
