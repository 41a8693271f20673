pub mod config;
pub mod control_loop;
pub mod dynamics;
pub mod error;
pub mod error_stack;
pub mod learner;
pub mod oracle;
pub mod probe;
pub mod reference;
pub mod io;
