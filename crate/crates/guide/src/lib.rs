//! Runs the code listings of the book under `book/src` as doc-tests, one
//! module per chapter.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}
#[doc = include_str!("../../../book/src/command-line.md")]
pub mod command_line {}
#[doc = include_str!("../../../book/src/simulator.md")]
pub mod simulator {}
#[doc = include_str!("../../../book/src/scr.md")]
pub mod scr {}
#[doc = include_str!("../../../book/src/windows.md")]
pub mod windows {}
#[doc = include_str!("../../../book/src/baselines.md")]
pub mod baselines {}
#[doc = include_str!("../../../book/src/evaluation.md")]
pub mod evaluation {}
#[doc = include_str!("../../../book/src/formats.md")]
pub mod formats {}
