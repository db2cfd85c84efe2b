//! Interactive sessions: people answer "which piece selection do you prefer
//! in this division?" over HTTP while the solver drives the questions.

pub mod engine;
pub mod http;
pub mod store;

pub use engine::{Session, SessionSpec, Status};
pub use http::{router, serve};
pub use store::Store;
