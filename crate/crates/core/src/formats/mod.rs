//! Readers and writers for every on-disk artifact.

mod bank;
mod qrels;
mod run;
mod store;

pub use bank::{load_passages, load_queries, load_question_bank, save_question_bank, write_passages};
pub use qrels::{parse_qrels, write_qrels};
pub use run::{parse_run_file, write_run};
pub use store::{append_grades, read_grades, GradeStore, StoreWriter};
