//! Scenario files, trace IO, the command-line tool and the operator websocket
//! server built on [`swarmlift_core`].

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod config;
pub mod protocol;
pub mod report;
pub mod serve;
pub mod trace_io;
