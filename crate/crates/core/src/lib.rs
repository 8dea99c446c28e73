pub mod lexicon;
pub mod textproc;
pub mod selector;
pub mod discourse;
pub mod bml;
pub mod scheduler;
pub mod eval;
pub mod pipeline;
