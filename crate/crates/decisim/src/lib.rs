//! Conversational decision sessions on top of `decisim-core`: problem
//! documents, the slot-filling dialog, the prior/session store, the HTTP
//! service and the command-line front end.

pub mod analysis;
pub mod cli;
pub mod dialog;
pub mod doc;
pub mod render;
pub mod service;
pub mod warehouse;

pub use decisim_core as core;
