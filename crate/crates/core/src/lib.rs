//! Portfolio environment, differentiable actor-critic, forecasters and a
//! per-day planner that adapts a pretrained actor by gradient ascent on
//! forecast-driven imagined returns.
//!
//! Modules, bottom up:
//!
//! * [`marketdata`]: OHLC bars, splits, the 11 per-asset features.
//! * [`env`]: simplex allocations, fees and the portfolio transition.
//! * [`policy`]: actor-critic MLP, reverse-mode tape, pretraining, checkpoints.
//! * [`forecast`]: movement forecasters, imagined states, noise calibration,
//!   quality-controlled synthetic forecasts.
//! * [`pilot`]: the planner.
//! * [`metrics`]: return and risk statistics of a value curve.

// NaN-rejecting checks are written as negated comparisons on purpose.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod env;
pub mod forecast;
pub mod marketdata;
pub mod metrics;
pub mod pilot;
pub mod policy;
pub mod seed;
