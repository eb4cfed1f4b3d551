pub mod analysis;
pub mod changes;
pub mod clock;
pub mod cursor;
pub mod engine;
pub mod error;
pub mod eval;
pub mod lifecycle;
pub mod script;
pub mod sql;
pub mod storage;
pub mod task;
pub mod value;
